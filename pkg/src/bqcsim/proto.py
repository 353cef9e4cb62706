"""Party machines and end-to-end runs of the delegated-computation protocols.

Protocol names: ``single``, ``bfk-double``, ``mf-double``, ``triple``,
``new-double`` and ``new-single``.  Every protocol ends in the same blind
loop: the Client streams one masked angle ``delta`` per pattern vertex to the
computation server and de-flips each raw reply with its private bit ``r``.

Machines drop secrets as soon as they are consumed so that the exact
enumerator can merge branches that have become indistinguishable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .angle import PI, ZERO, Angle, delta, mf_encode, sample_uniform
from .mbqc import (
    Circuit,
    Pattern,
    adaptive_phi,
    build_graph_state,
    classical_pattern,
    oracle_distribution,
    signals,
    total_variation,
)
from .qstate import RegisterPool
from .wire import (
    ChannelSpec,
    Chooser,
    ConfigError,
    Machine,
    Network,
    Party,
    World,
    enumerate_runs,
    run_schedule,
    transcript_json,
)

__all__ = [
    "PROTOCOLS",
    "ProtocolAbort",
    "TripleConfig",
    "Options",
    "RunReport",
    "topology",
    "validate_topology",
    "build_world",
    "run_protocol",
    "run_single_server",
    "run_bfk_double",
    "run_mf_double",
    "run_triple",
    "run_new_double",
    "run_new_single",
    "inverse",
]

PROTOCOLS = ("single", "bfk-double", "mf-double", "triple", "new-double", "new-single")

TC, CLIENT, S1, S2, S3 = Party.TC, Party.CLIENT, Party.SERVER1, Party.SERVER2, Party.SERVER3

ORACLE_TOL = 1e-9


class ProtocolAbort(RuntimeError):
    """Clean protocol abort, e.g. too few usable pairs in the triple protocol."""


@dataclass(frozen=True)
class TripleConfig:
    m: int
    overhead_factor: Fraction | float | int = 2
    forward_probability: float = 0.5

    def __post_init__(self) -> None:
        if self.m < 0:
            raise ConfigError("m must be non-negative")
        if Fraction(str(self.overhead_factor)) < 0:
            raise ConfigError("overhead_factor must be >= 0")
        if not 0.0 <= self.forward_probability <= 1.0:
            raise ConfigError("forward_probability must lie in [0, 1]")

    @property
    def n(self) -> int:
        return math.ceil((2 + Fraction(str(self.overhead_factor))) * self.m)


@dataclass(frozen=True)
class Options:
    """Knobs shared by all runs.

    ``corrections``/``perm`` force the trusted center's secrets, ``collude``
    makes Server1 forward everything it sees to Server2, ``attack`` runs the
    coalition Bell-measurement strategy instead of the computation,
    ``tamper_z`` silently flips one prepared pair's Z correction and
    ``biased`` zeroes the Client's angle and flip masks.
    """

    corrections: tuple | None = None
    perm: tuple | None = None
    collude: bool = False
    attack: bool = False
    tamper_z: int | None = None
    biased: bool = False
    keep_secrets: bool = False
    private_client_s1: bool = True
    private_package: bool = True
    extra_channels: tuple = ()
    triple: TripleConfig | None = None


def inverse(perm) -> tuple[int, ...]:
    inv = [0] * len(perm)
    for i, p in enumerate(perm):
        inv[p] = i
    return tuple(inv)


# -- topology ----------------------------------------------------------------

def _duplex(a: Party, b: Party, private: bool = False) -> list[ChannelSpec]:
    return [ChannelSpec(a, b, private=private), ChannelSpec(b, a, private=private)]


def topology(protocol: str, opts: Options = Options()) -> list[ChannelSpec]:
    q = "quantum"
    if protocol == "single":
        chans = [ChannelSpec(CLIENT, S1, q)] + _duplex(CLIENT, S1)
    elif protocol in ("bfk-double", "mf-double", "new-double"):
        chans = [ChannelSpec(TC, S1, q), ChannelSpec(TC, S2, q)]
        chans += _duplex(CLIENT, S1, opts.private_client_s1) + _duplex(CLIENT, S2)
        if protocol != "bfk-double":
            chans.append(ChannelSpec(TC, CLIENT, private=opts.private_package))
        if protocol == "new-double":
            chans += _duplex(S1, S2)
            if opts.attack:
                chans.append(ChannelSpec(S1, S2, q))
        elif opts.collude or opts.attack:
            chans += _duplex(S1, S2)
    elif protocol == "new-single":
        chans = [ChannelSpec(TC, S1, q), ChannelSpec(TC, CLIENT, private=opts.private_package)]
        chans += _duplex(CLIENT, S1)
    elif protocol == "triple":
        chans = [ChannelSpec(TC, p, q) for p in (CLIENT, S1, S2)]
        chans += [ChannelSpec(CLIENT, S3, q), ChannelSpec(S3, CLIENT)]
        chans += _duplex(CLIENT, S1) + _duplex(CLIENT, S2)
    else:
        raise ConfigError(f"unknown protocol {protocol!r}")
    chans += list(opts.extra_channels)
    validate_topology(protocol, chans)
    return chans


def validate_topology(protocol: str, channels) -> None:
    for c in channels:
        ends = {c.src, c.dst}
        if protocol in ("bfk-double", "mf-double") and ends == {S1, S2}:
            raise ConfigError(f"{protocol} forbids any channel between Server1 and Server2")
        if protocol in ("new-double", "new-single") and c.kind == "quantum" and CLIENT in ends:
            raise ConfigError(f"{protocol} gives the Client no quantum channel")
        if protocol == "new-single" and S2 in ends:
            raise ConfigError("new-single has a single server")


# -- shared machine parts ----------------------------------------------------

@dataclass(frozen=True)
class LoopCfg:
    pattern: Pattern
    server: Party
    keep: dict  # vertex -> last order position that reads its outcome


def _loop_cfg(pattern: Pattern, server: Party) -> LoopCfg:
    keep = {v: -1 for v in range(pattern.n)}
    for pos, v in enumerate(pattern.order):
        for u in pattern.xdep[v] | pattern.zdep[v]:
            keep[u] = max(keep[u], pos)
    return LoopCfg(pattern, server, keep)


class BlindClient(Machine):
    """Client side of the masked-angle loop; subclasses fill ``theta``."""

    party = CLIENT
    static = ("cfg", "loop")

    def __init__(self, loop: LoopCfg, biased: bool = False):
        self.loop = loop
        self.biased = biased
        self.theta: list = []
        self.s: dict[int, int] = {}
        self.r: dict[int, int] = {}
        self.out: dict[int, int] = {}
        self.cursor = 0
        self.awaiting: int | None = None
        self.result: str | None = None

    def _enter_loop(self, w: World) -> bool:
        self.phase = "loop"
        if not self.loop.pattern.order:
            self._finish()
        return True

    def _finish(self) -> None:
        self.result = "".join(str(self.out[v]) for v in self.loop.pattern.readout)
        self.out = {}
        self.done = True

    def _loop_step(self, w: World) -> bool:
        pat, srv = self.loop.pattern, self.loop.server
        if self.awaiting is not None:
            reply = w.net.recv(CLIENT, srv, "MeasureReply")
            if reply is None:
                return False
            v = self.awaiting
            b = reply[1]
            r = self.r.pop(v)
            m = b ^ r
            hook = w.hooks.get("flip")
            if hook:
                hook(v, b, r, m)
            self.s[v] = m
            if v in pat.readout:
                self.out[v] = m
            self.awaiting = None
            self.cursor += 1
            self.s = {u: k for u, k in self.s.items() if self.loop.keep[u] >= self.cursor}
            if self.cursor == len(pat.order):
                self._finish()
            return True
        v = pat.order[self.cursor]
        sx, sz = signals(pat, v, self.s)
        phi = adaptive_phi(pat.base[v], sx, sz)
        r = 0 if self.biased else w.rand(CLIENT).bit("client")
        d = delta(self.theta[v], phi, r)
        self.theta[v] = None
        self.r[v] = r
        w.net.send(CLIENT, srv, "DeltaMsg", (v, d))
        self.awaiting = v
        return True

    def _angle(self, w: World) -> Angle:
        return ZERO if self.biased else sample_uniform(w.rand(CLIENT))


class ComputeServer(Machine):
    """Builds the graph state on first demand and measures at each delta."""

    static = ("cfg", "pattern")

    def __init__(self, party: Party, pattern: Pattern):
        self.party = party
        self.stream = party
        self.pattern = pattern
        self.qubits: list[int] | None = None
        self.built = False
        self.left = len(pattern.order)
        self.phase = "qubits"

    def _compute_step(self, w: World) -> bool:
        if self.left == 0:
            self.done = True
            return True
        if not self.built:
            if w.net.peek(self.party, CLIENT, "DeltaMsg") is None:
                return False
            w.net.require(self.party, *self.qubits)
            build_graph_state(w.pool, self.qubits, self.pattern.graph)
            self.built = True
            return True
        msg = w.net.recv(self.party, CLIENT, "DeltaMsg")
        if msg is None:
            return False
        v, d = msg
        q = self.qubits[v]
        w.net.require(self.party, q)
        b = w.pool.measure_angle(q, d, w.rand(self.stream), "compute")
        w.net.send(self.party, CLIENT, "MeasureReply", (v, b))
        self.left -= 1
        if self.left == 0:
            self.done = True
        return True


def _rsp_measure(w: World, party: Party, qubits, angles) -> tuple[int, ...]:
    w.net.require(party, *qubits)
    rnd = w.rand(party)
    return tuple(w.pool.measure_angle(q, a, rnd, "rsp") for q, a in zip(qubits, angles))


# -- single server -----------------------------------------------------------

class SingleClient(BlindClient):
    def __init__(self, loop: LoopCfg, biased: bool = False):
        super().__init__(loop, biased)
        self.phase = "prepare"

    def step(self, w: World) -> bool:
        if self.phase == "loop":
            return self._loop_step(w)
        n = self.loop.pattern.n
        self.theta = [self._angle(w) for _ in range(n)]
        qs = tuple(w.pool.alloc_plus_theta(t) for t in self.theta)
        w.net.assign(CLIENT, *qs)
        w.net.send(CLIENT, self.loop.server, "QubitTransfer", qs)
        return self._enter_loop(w)


class SingleServer(ComputeServer):
    def step(self, w: World) -> bool:
        if self.phase == "qubits":
            qs = w.net.recv(self.party, CLIENT, "QubitTransfer")
            if qs is None:
                return False
            self.qubits = list(qs)
            self.phase = "compute"
            return True
        return self._compute_step(w)


# -- trusted center for the Bell-pair protocols ------------------------------

@dataclass(frozen=True)
class CenterCfg:
    n: int
    mode: str  # "bfk" | "mf" | "new"
    a_dest: Party
    b_dest: Party
    corrections: tuple | None
    perm: tuple | None
    tamper_z: int | None
    keep_secrets: bool


class Center(Machine):
    party = TC

    def __init__(self, cfg: CenterCfg):
        self.cfg = cfg
        self.phase = "prepare"
        self.perm = None
        self.corrections = None

    def step(self, w: World) -> bool:
        cfg, rnd, n = self.cfg, w.rand(TC), self.cfg.n
        if cfg.corrections is not None:
            corr = tuple(tuple(c) for c in cfg.corrections)
        elif cfg.mode == "bfk":
            corr = ((0, 0),) * n
        else:
            corr = tuple((rnd.bit("secret"), rnd.bit("secret")) for _ in range(n))
        if cfg.perm is not None:
            perm = tuple(cfg.perm)
        elif cfg.mode == "new":
            order = list(range(n))
            for i in range(n - 1, 0, -1):
                j = rnd.below(i + 1, "secret")
                order[i], order[j] = order[j], order[i]
            perm = tuple(order)
        else:
            perm = tuple(range(n))
        if len(corr) != n or sorted(perm) != list(range(n)):
            raise ConfigError("forced secrets do not match the pattern size")
        if cfg.mode != "bfk":
            w.net.send(TC, CLIENT, "SecretPackage", (corr, perm))
        pairs = []
        for i, (x, z) in enumerate(corr):
            pairs.append(w.pool.alloc_bell(x, z ^ (1 if cfg.tamper_z == i else 0)))
        w.net.assign(TC, *(q for p in pairs for q in p))
        inv = inverse(perm)
        w.net.send(TC, cfg.a_dest, "QubitTransfer", tuple(a for a, _ in pairs))
        w.net.send(TC, cfg.b_dest, "QubitTransfer", tuple(pairs[inv[j]][1] for j in range(n)))
        if cfg.keep_secrets:
            self.perm, self.corrections = perm, corr
        self.done = True
        return True


class RspClient(BlindClient):
    """Client of bfk-double, mf-double, new-double and new-single."""

    def __init__(self, loop: LoopCfg, rsp_server: Party, package: bool, attack: bool, biased: bool):
        super().__init__(loop, biased)
        self.rsp_server = rsp_server
        self.attack = attack
        self.phase = "package" if package else "angles"
        self.corr = None
        self.perm = None
        self.tilde = None

    def step(self, w: World) -> bool:
        n = self.loop.pattern.n
        if self.phase == "loop":
            return self._loop_step(w)
        if self.phase == "package":
            pkg = w.net.recv(CLIENT, TC, "SecretPackage")
            if pkg is None:
                return False
            self.corr, self.perm = pkg
            self.phase = "angles"
            return True
        if self.phase == "angles":
            corr = self.corr or ((0, 0),) * n
            self.tilde = [self._angle(w) for _ in range(n)]
            sent = tuple(mf_encode(t, x, z) for t, (x, z) in zip(self.tilde, corr))
            w.net.send(CLIENT, self.rsp_server, "AngleList", sent)
            self.corr = None
            if self.attack:
                self.tilde = self.perm = None
                self.done = True
                return True
            self.phase = "replies"
            return True
        ms = w.net.recv(CLIENT, self.rsp_server, "BitList")
        if ms is None:
            return False
        inv = inverse(self.perm or tuple(range(n)))
        self.theta = [-self.tilde[inv[j]] + PI.times(ms[inv[j]]) for j in range(n)]
        hook = w.hooks.get("theta_eff")
        if hook:
            hook(w, list(self.theta))
        self.tilde = self.perm = None
        return self._enter_loop(w)


class RspServer(Machine):
    """Server1 of the two-server protocols: measures A halves at the given angles."""

    party = S1

    def __init__(self, collude: bool, attack: bool):
        self.collude = collude
        self.attack = attack
        self.phase = "qubits"
        self.a: tuple | None = None

    def step(self, w: World) -> bool:
        if self.phase == "qubits":
            qs = w.net.recv(S1, TC, "QubitTransfer")
            if qs is None:
                return False
            self.a = qs
            if self.attack:
                w.net.send(S1, S2, "QubitTransfer", qs)
                self.a = None
            self.phase = "angles"
            return True
        if self.phase == "angles":
            angles = w.net.recv(S1, CLIENT, "AngleList")
            if angles is None:
                return False
            if self.attack:
                self.phase = "records"
                return True
            ms = _rsp_measure(w, S1, self.a, angles)
            w.net.send(S1, CLIENT, "BitList", ms)
            if self.collude:
                w.net.send(S1, S2, "AngleList", angles)
                w.net.send(S1, S2, "BitList", ms)
            self.a = None
            self.done = True
            return True
        if w.net.recv(S1, S2, "PairList") is None:
            return False
        self.done = True
        return True


class DoubleServer2(ComputeServer):
    def __init__(self, pattern: Pattern, collude: bool, attack: bool):
        super().__init__(S2, pattern)
        self.collude = collude
        self.attack = attack

    def step(self, w: World) -> bool:
        if self.phase == "qubits":
            qs = w.net.recv(S2, TC, "QubitTransfer")
            if qs is None:
                return False
            self.qubits = list(qs)
            self.phase = "attack" if self.attack else "forward" if self.collude else "compute"
            return True
        if self.phase == "forward":
            if w.net.peek(S2, S1, "AngleList") is None:
                return False
            w.net.recv(S2, S1, "AngleList")
            self.phase = "forward-bits"
            return True
        if self.phase == "forward-bits":
            if w.net.recv(S2, S1, "BitList") is None:
                return False
            self.phase = "compute"
            return True
        if self.phase == "attack":
            a = w.net.recv(S2, S1, "QubitTransfer")
            if a is None:
                return False
            w.net.require(S2, *a, *self.qubits)
            rnd = w.rand(S2)
            records = tuple(w.pool.measure_bell(x, y, rnd, "rsp") for x, y in zip(a, self.qubits))
            w.net.send(S2, S1, "PairList", records)
            self.qubits = None
            self.done = True
            return True
        return self._compute_step(w)


class MergedServer(ComputeServer):
    """new-single: one server runs both the measuring and computing roles."""

    def __init__(self, pattern: Pattern):
        super().__init__(S1, pattern)
        # draw computing-role randomness from the stream Server2 would use, so
        # merged and split runs stay aligned under one seed
        self.stream = S2
        self.phase = "a-qubits"
        self.a: tuple | None = None

    def step(self, w: World) -> bool:
        if self.phase == "a-qubits":
            qs = w.net.recv(S1, TC, "QubitTransfer")
            if qs is None:
                return False
            self.a = qs
            self.phase = "qubits"
            return True
        if self.phase == "qubits":
            qs = w.net.recv(S1, TC, "QubitTransfer")
            if qs is None:
                return False
            self.qubits = list(qs)
            self.phase = "angles"
            return True
        if self.phase == "angles":
            angles = w.net.recv(S1, CLIENT, "AngleList")
            if angles is None:
                return False
            w.net.send(S1, CLIENT, "BitList", _rsp_measure(w, S1, self.a, angles))
            self.a = None
            self.phase = "compute"
            return True
        return self._compute_step(w)


# -- triple server -----------------------------------------------------------

class TripleCenter(Machine):
    party = TC

    def __init__(self, n: int):
        self.n = n
        self.phase = "prepare"
        self.b1: tuple = ()
        self.b2: tuple = ()

    def step(self, w: World) -> bool:
        first = [w.pool.alloc_bell(0, 0) for _ in range(self.n)]
        second = [w.pool.alloc_bell(0, 0) for _ in range(self.n)]
        w.net.assign(TC, *(q for p in first + second for q in p))
        self.b1 = tuple(b for _, b in first)
        self.b2 = tuple(b for _, b in second)
        w.net.send(TC, CLIENT, "QubitTransfer", tuple(a for a, _ in first))
        w.net.send(TC, CLIENT, "QubitTransfer", tuple(a for a, _ in second))
        w.net.send(TC, S1, "QubitTransfer", self.b1)
        w.net.send(TC, S2, "QubitTransfer", self.b2)
        self.done = True
        return True


class TripleClient(BlindClient):
    def __init__(self, loop: LoopCfg, cfg: TripleConfig, biased: bool = False):
        super().__init__(loop, biased)
        self.cfg = cfg
        self.phase = "receive"
        self.a: tuple | None = None
        self.a2: tuple | None = None
        self.s_pos: tuple = ()
        self.t_pos: tuple = ()
        self.xz: tuple | None = None
        self.tilde = None

    def step(self, w: World) -> bool:
        m, n = self.cfg.m, self.cfg.n
        if self.phase == "loop":
            return self._loop_step(w)
        if self.phase == "receive":
            qs = w.net.recv(CLIENT, TC, "QubitTransfer")
            if qs is None:
                return False
            if self.a is None:
                self.a = qs
            else:
                self.a2 = qs
                self.phase = "forward"
            return True
        if self.phase == "forward":
            rnd = w.rand(CLIENT)
            picks = []
            for _ in range(2):
                kept: list[int] = []
                for k in range(n):
                    if len(kept) == m:
                        break
                    if rnd.bit("client", self.cfg.forward_probability):
                        kept.append(k)
                picks.append(tuple(kept))
            self.s_pos, self.t_pos = picks
            if len(self.s_pos) < m or len(self.t_pos) < m:
                raise ProtocolAbort("insufficient pairs")
            sent = tuple(q for i in range(m) for q in (self.a[self.s_pos[i]], self.a2[self.t_pos[i]]))
            w.net.send(CLIENT, S3, "QubitTransfer", sent)
            self.a = self.a2 = None
            self.phase = "bell"
            return True
        if self.phase == "bell":
            xz = w.net.recv(CLIENT, S3, "PairList")
            if xz is None:
                return False
            self.xz = xz
            hook = w.hooks.get("swap")
            if hook:
                hook(w, self.s_pos, self.t_pos, xz)
            self.phase = "angles"
            return True
        if self.phase == "angles":
            where = {k: i for i, k in enumerate(self.s_pos)}
            self.tilde = [None] * m
            sent = []
            for k in range(n):
                i = where.get(k)
                if i is None:
                    sent.append(sample_uniform(w.rand(CLIENT)))
                else:
                    self.tilde[i] = self._angle(w)
                    sent.append(mf_encode(self.tilde[i], *self.xz[i]))
            w.net.send(CLIENT, S1, "AngleList", tuple(sent))
            self.xz = None
            self.phase = "replies"
            return True
        ms = w.net.recv(CLIENT, S1, "BitList")
        if ms is None:
            return False
        self.theta = [-self.tilde[i] + PI.times(ms[self.s_pos[i]]) for i in range(m)]
        hook = w.hooks.get("theta_eff")
        if hook:
            hook(w, list(self.theta))
        self.tilde = None
        w.net.send(CLIENT, S2, "IndexList", self.t_pos)
        return self._enter_loop(w)


class SwapServer(Machine):
    """Server3: Bell-measures consecutive arrivals."""

    party = S3

    def step(self, w: World) -> bool:
        qs = w.net.recv(S3, CLIENT, "QubitTransfer")
        if qs is None:
            return False
        w.net.require(S3, *qs)
        rnd = w.rand(S3)
        out = tuple(w.pool.measure_bell(qs[i], qs[i + 1], rnd, "rsp") for i in range(0, len(qs), 2))
        w.net.send(S3, CLIENT, "PairList", out)
        self.done = True
        return True


class TripleServer1(Machine):
    party = S1

    def __init__(self):
        self.phase = "qubits"
        self.b: tuple | None = None

    def step(self, w: World) -> bool:
        if self.phase == "qubits":
            qs = w.net.recv(S1, TC, "QubitTransfer")
            if qs is None:
                return False
            self.b = qs
            self.phase = "angles"
            return True
        angles = w.net.recv(S1, CLIENT, "AngleList")
        if angles is None:
            return False
        w.net.send(S1, CLIENT, "BitList", _rsp_measure(w, S1, self.b, angles))
        self.b = None
        self.done = True
        return True


class TripleServer2(ComputeServer):
    def __init__(self, pattern: Pattern):
        super().__init__(S2, pattern)
        self.held: tuple | None = None

    def step(self, w: World) -> bool:
        if self.phase == "qubits":
            qs = w.net.recv(S2, TC, "QubitTransfer")
            if qs is None:
                return False
            self.held = qs
            self.phase = "index"
            return True
        if self.phase == "index":
            t = w.net.recv(S2, CLIENT, "IndexList")
            if t is None:
                return False
            self.qubits = [self.held[k] for k in t]
            self.held = None
            self.phase = "compute"
            return True
        return self._compute_step(w)


# -- world construction ------------------------------------------------------

def build_world(
    protocol: str,
    pattern: Pattern,
    seed: int,
    *,
    opts: Options = Options(),
    record="full",
    enumerate=(),
    hooks: dict | None = None,
) -> World:
    """Wire up the parties of ``protocol`` around ``pattern``."""
    if opts.attack and protocol != "new-double":
        raise ConfigError("the Bell-measurement attack is defined for new-double only")
    if opts.collude and protocol not in ("new-double", "bfk-double", "mf-double"):
        raise ConfigError(f"collusion forwarding is not defined for {protocol}")
    net = Network(topology(protocol, opts), record)
    n = pattern.n
    machines: dict[Party, Machine] = {}
    if protocol == "single":
        loop = _loop_cfg(pattern, S1)
        machines[CLIENT] = SingleClient(loop, opts.biased)
        machines[S1] = SingleServer(S1, pattern)
    elif protocol == "triple":
        cfg = opts.triple or TripleConfig(n)
        if cfg.m != n:
            raise ConfigError(f"triple config targets m={cfg.m} pairs but the pattern has {n} vertices")
        loop = _loop_cfg(pattern, S2)
        machines[TC] = TripleCenter(cfg.n)
        machines[CLIENT] = TripleClient(loop, cfg, opts.biased)
        machines[S1] = TripleServer1()
        machines[S2] = TripleServer2(pattern)
        machines[S3] = SwapServer()
    else:
        mode = {"bfk-double": "bfk", "mf-double": "mf"}.get(protocol, "new")
        merged = protocol == "new-single"
        compute = S1 if merged else S2
        machines[TC] = Center(
            CenterCfg(n, mode, S1, compute, opts.corrections, opts.perm, opts.tamper_z, opts.keep_secrets)
        )
        loop = _loop_cfg(pattern, compute)
        machines[CLIENT] = RspClient(loop, S1, mode != "bfk", opts.attack, opts.biased)
        if merged:
            machines[S1] = MergedServer(pattern)
        else:
            machines[S1] = RspServer(opts.collude, opts.attack)
            machines[S2] = DoubleServer2(pattern, opts.collude, opts.attack)
    return World(RegisterPool(), net, machines, Chooser(seed, enumerate), hooks=dict(hooks or {}))


# -- reports and runners -----------------------------------------------------

@dataclass
class RunReport:
    protocol: str
    n: int
    seed: int
    transcript: list = field(default_factory=list)
    outcomes: str | None = None
    distribution: dict | None = None
    oracle: dict | None = None
    oracle_match: bool | None = None
    tv: float | None = None
    checks: dict = field(default_factory=dict)
    merged_topology: bool = False

    def to_json(self) -> dict:
        out = {
            "protocol": self.protocol,
            "n": self.n,
            "seed": self.seed,
            "transcript": self.transcript,
            "outcomes": self.outcomes,
            "oracle_match": self.oracle_match,
            "checks": self.checks,
        }
        if self.distribution is not None:
            out["distribution"] = {k: round(v, 12) for k, v in sorted(self.distribution.items())}
            out["oracle"] = {k: round(v, 12) for k, v in sorted(self.oracle.items())} if self.oracle else None
            out["tv"] = self.tv
        if self.merged_topology:
            out["merged_topology"] = True
        return out


def _client_result(w: World) -> str:
    return w.machines[CLIENT].result


def run_protocol(
    protocol: str,
    circuit: Circuit | None = None,
    seed: int = 0,
    *,
    pattern: Pattern | None = None,
    opts: Options = Options(),
    exact: bool = True,
    hooks: dict | None = None,
) -> RunReport:
    """One seeded run, plus the exact output distribution when ``exact``.

    The exact distribution enumerates every computation-server measurement
    branch while all other randomness follows ``seed``; it therefore also
    verifies that correctness holds for the sampled secrets.  When a circuit
    is supplied the distribution is compared with the circuit oracle.
    """
    if protocol not in PROTOCOLS:
        raise ConfigError(f"unknown protocol {protocol!r}")
    if pattern is None:
        if circuit is None:
            raise ConfigError("need a circuit or a pattern")
        pattern = classical_pattern(circuit)
    if protocol == "triple" and opts.triple is None:
        opts = replace(opts, triple=TripleConfig(pattern.n))
    flips = []
    hk = {"flip": lambda *a: flips.append(a), **(hooks or {})}
    world = build_world(protocol, pattern, seed, opts=opts, hooks=hk)
    run_schedule(world)
    report = RunReport(
        protocol,
        pattern.n,
        int(seed),
        transcript_json(world.net.transcript),
        outcomes=_client_result(world),
        merged_topology=protocol == "new-single",
    )
    report.checks["deflip"] = all(m == b ^ r for _, b, r, m in flips)
    if protocol == "triple":
        c = world.machines[CLIENT]
        report.checks["positions"] = {"s": list(c.s_pos), "t": list(c.t_pos)}
    if exact and not opts.attack:
        w2 = build_world(protocol, pattern, seed, opts=opts, record=None, enumerate={"compute"}, hooks=hooks)
        report.distribution = enumerate_runs(w2, _client_result)
        if circuit is not None:
            report.oracle = oracle_distribution(circuit)
            report.tv = total_variation(report.distribution, report.oracle)
            report.oracle_match = report.tv < ORACLE_TOL
    return report


def run_single_server(circuit=None, seed=0, **kw) -> RunReport:
    return run_protocol("single", circuit, seed, **kw)


def run_bfk_double(circuit=None, seed=0, **kw) -> RunReport:
    return run_protocol("bfk-double", circuit, seed, **kw)


def run_mf_double(circuit=None, seed=0, **kw) -> RunReport:
    return run_protocol("mf-double", circuit, seed, **kw)


def run_triple(circuit=None, cfg: TripleConfig | None = None, seed=0, **kw) -> RunReport:
    opts = kw.pop("opts", Options())
    if cfg is not None:
        opts = replace(opts, triple=cfg)
    return run_protocol("triple", circuit, seed, opts=opts, **kw)


def run_new_double(circuit=None, seed=0, **kw) -> RunReport:
    return run_protocol("new-double", circuit, seed, **kw)


def run_new_single(circuit=None, seed=0, **kw) -> RunReport:
    return run_protocol("new-single", circuit, seed, **kw)
