"""Measurement patterns, graph/brickwork states and a two-wire circuit compiler.

A :class:`Circuit` is a sequence of ``J(theta) = H . diag(1, e^{i theta})``
gates and ``CZ`` gates acting on one or two wires that start in ``|+>``.
:func:`compile` turns it into a one-way pattern: every wire becomes a chain,
every ``J`` consumes the current chain head.  :func:`circuit_oracle` evaluates
the same circuit by plain matrix multiplication and shares no code with the
pattern path, so it can be used to check it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import reduce
from pathlib import Path

import numpy as np

from .angle import ZERO, Angle
from .qstate import RegisterPool

__all__ = [
    "J_ANGLE_SIGN",
    "BranchBoundError",
    "Graph",
    "Pattern",
    "Gate",
    "Circuit",
    "brickwork_graph",
    "build_graph_state",
    "adaptive_phi",
    "signals",
    "compile",
    "classical_pattern",
    "angle_pattern",
    "run_pattern",
    "circuit_oracle",
    "oracle_distribution",
    "output_distribution",
    "pad_to_brickwork",
    "brickwork_relabel",
    "total_variation",
    "SUITE",
    "min_branch_fidelity",
]

# Measuring a chain vertex at angle a implements H.diag(1, e^{-ia}), so J(theta)
# needs a = -theta.  Flipping this to +1 breaks the oracle suite.
J_ANGLE_SIGN = -1

MAX_BRANCH_QUBITS = 14


class BranchBoundError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    n: int
    edges: tuple[tuple[int, int], ...]
    inputs: tuple[int, ...] = ()
    outputs: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        edges = set()
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"self-loop on vertex {a}")
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise ValueError(f"edge ({a}, {b}) out of range")
            edges.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", tuple(sorted(edges)))
        for v in self.inputs + self.outputs:
            if not 0 <= v < self.n:
                raise ValueError(f"vertex {v} out of range")

    def neighbors(self, v: int) -> set[int]:
        return {b if a == v else a for a, b in self.edges if v in (a, b)}


@dataclass(frozen=True)
class Pattern:
    """Graph plus measurement program.

    ``base`` holds the un-corrected angle of every vertex, ``order`` the
    measurement sequence, ``xdep``/``zdep`` the vertices whose outcome parities
    flip the sign of / add pi to the angle.  Vertices in ``graph.outputs`` stay
    unmeasured; ``readout`` lists measured vertices whose outcomes form the
    classical result.
    """

    graph: Graph
    base: tuple[Angle, ...]
    order: tuple[int, ...]
    xdep: tuple[frozenset, ...]
    zdep: tuple[frozenset, ...]
    readout: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        outs = set(self.graph.outputs)
        if sorted(self.order) != sorted(set(range(self.graph.n)) - outs):
            raise ValueError("order must cover exactly the non-output vertices")
        pos = {v: i for i, v in enumerate(self.order)}
        for v in range(self.graph.n):
            for u in self.xdep[v] | self.zdep[v]:
                if u not in pos or (v in pos and pos[u] >= pos[v]):
                    raise ValueError(f"dependency {u} -> {v} violates the order")

    @property
    def n(self) -> int:
        return self.graph.n

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "edges": [list(e) for e in self.graph.edges],
            "outputs": list(self.graph.outputs),
            "base_eighths": [a.eighths for a in self.base],
            "order": list(self.order),
            "xdep": [sorted(d) for d in self.xdep],
            "zdep": [sorted(d) for d in self.zdep],
            "readout": list(self.readout),
        }


@dataclass(frozen=True)
class Gate:
    kind: str  # "J" or "CZ"
    wire: int = 0
    angle: Angle = ZERO


@dataclass(frozen=True)
class Circuit:
    wires: int
    gates: tuple[Gate, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.wires not in (1, 2):
            raise ValueError("circuits have one or two wires")
        for g in self.gates:
            if g.kind == "J":
                if not 0 <= g.wire < self.wires:
                    raise ValueError(f"bad wire {g.wire}")
            elif g.kind == "CZ":
                if self.wires != 2:
                    raise ValueError("CZ needs two wires")
            else:
                raise ValueError(f"unknown gate {g.kind!r}")

    @classmethod
    def from_json(cls, obj: dict) -> Circuit:
        gates = []
        for g in obj.get("gates", []):
            if g["type"] == "J":
                gates.append(Gate("J", int(g["wire"]), Angle(int(g["angle_eighths"]))))
            elif g["type"] == "CZ":
                gates.append(Gate("CZ"))
            else:
                raise ValueError(f"unknown gate type {g['type']!r}")
        return cls(int(obj["wires"]), tuple(gates))

    @classmethod
    def load(cls, path: str | Path) -> Circuit:
        return cls.from_json(json.loads(Path(path).read_text()))

    def to_json(self) -> dict:
        return {
            "wires": self.wires,
            "gates": [
                {"type": "J", "wire": g.wire, "angle_eighths": g.angle.eighths}
                if g.kind == "J"
                else {"type": "CZ"}
                for g in self.gates
            ],
        }

    def with_readout(self) -> Circuit:
        """Append ``J(0) = H`` to every wire."""
        return replace(self, gates=self.gates + tuple(Gate("J", w) for w in range(self.wires)))


def J(k: int, wire: int = 0) -> Gate:
    return Gate("J", wire, Angle(k))


CZ = Gate("CZ")


# -- graphs --------------------------------------------------------------

def brickwork_graph(wires: int, depth: int) -> Graph:
    """Two-row brickwork layout.

    Vertex ``w*depth + c`` sits on row ``w``, column ``c``.  Rows are chains;
    rungs join the rows at every column ``c`` with ``c % 8`` in ``{2, 4}``,
    i.e. one brick per eight columns.
    """
    if wires != 2:
        raise ValueError("only two-row brickwork is supported")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    edges = []
    for w in range(2):
        edges += [(w * depth + c, w * depth + c + 1) for c in range(depth - 1)]
    edges += [(c, depth + c) for c in range(depth) if c % 8 in (2, 4)]
    return Graph(
        2 * depth,
        tuple(edges),
        inputs=(0, depth),
        outputs=(depth - 1, 2 * depth - 1),
    )


def build_graph_state(pool: RegisterPool, qubits, graph: Graph) -> None:
    if len(qubits) != graph.n:
        raise ValueError("one qubit per vertex required")
    for a, b in graph.edges:  # lexicographic
        pool.apply_cz(qubits[a], qubits[b])


# -- corrections -----------------------------------------------------------

def adaptive_phi(base: Angle, sx: int, sz: int) -> Angle:
    """``(-1)**sx * base + sz*pi``."""
    return Angle((-base.eighths if sx else base.eighths) + 4 * sz)


def signals(pattern: Pattern, v: int, outcomes) -> tuple[int, int]:
    sx = sum(outcomes[u] for u in pattern.xdep[v]) & 1
    sz = sum(outcomes[u] for u in pattern.zdep[v]) & 1
    return sx, sz


def _flow_pattern(n, edges, base, order, succ, outputs, inputs, readout=()) -> Pattern:
    graph = Graph(n, tuple(edges), tuple(inputs), tuple(outputs))
    nbrs = {v: graph.neighbors(v) for v in range(n)}
    xdep = [set() for _ in range(n)]
    zdep = [set() for _ in range(n)]
    for u, f in succ.items():
        xdep[f].add(u)
        for w in nbrs[f] - {u}:
            zdep[w].add(u)
    return Pattern(
        graph,
        tuple(base),
        tuple(order),
        tuple(frozenset(d) for d in xdep),
        tuple(frozenset(d) for d in zdep),
        tuple(readout),
    )


def compile(circuit: Circuit) -> Pattern:
    """Chain compilation with flow ``f(v) = successor of v on its wire``.

    Corrections follow the flow: the successor of ``v`` takes ``v`` in its X
    set; the other neighbours of that successor take ``v`` in their Z set.
    Vertices are measured in the order their ``J`` appears in the circuit.
    """
    heads = list(range(circuit.wires))
    n = circuit.wires
    edges: set[tuple[int, int]] = set()
    base: dict[int, Angle] = {}
    order: list[int] = []
    succ: dict[int, int] = {}
    for g in circuit.gates:
        if g.kind == "J":
            v, u = heads[g.wire], n
            n += 1
            edges ^= {(v, u)}
            base[v] = g.angle.times(J_ANGLE_SIGN)
            order.append(v)
            succ[v] = u
            heads[g.wire] = u
        else:
            edges ^= {tuple(sorted(heads))}
    return _flow_pattern(
        n,
        edges,
        [base.get(v, ZERO) for v in range(n)],
        order,
        succ,
        heads,
        range(circuit.wires),
    )


def classical_pattern(circuit: Circuit) -> Pattern:
    """Pattern whose vertices are all measured in the XY plane.

    The circuit is extended by ``H`` on every wire and the resulting outputs
    are measured at angle 0 (X basis), which reads out the circuit's output
    in the computational basis.  ``readout`` is in wire order.
    """
    p = compile(circuit.with_readout())
    outs = p.graph.outputs
    g = Graph(p.n, p.graph.edges, p.graph.inputs, ())
    return Pattern(g, p.base, p.order + outs, p.xdep, p.zdep, outs)


def angle_pattern(phis) -> Pattern:
    """Chain of ``len(phis)`` vertices, all measured, with the given angles."""
    phis = [a if isinstance(a, Angle) else Angle(a) for a in phis]
    n = len(phis)
    return _flow_pattern(
        n,
        [(v, v + 1) for v in range(n - 1)],
        phis,
        range(n),
        {v: v + 1 for v in range(n - 1)},
        (),
        (0,) if n else (),
        readout=(n - 1,) if n else (),
    )


# -- execution -------------------------------------------------------------

def run_pattern(pool: RegisterPool, pattern: Pattern, rng, qubits=None):
    """Execute ``pattern`` locally (no blinding).

    Returns ``(outcomes, output_qubits, corrections)`` where ``outcomes`` maps
    measured vertices to bits and ``corrections[k] = (sx, sz)`` is the pending
    ``X^sx Z^sz`` byproduct on ``output_qubits[k]``.
    """
    if qubits is None:
        qubits = [pool.alloc_plus_theta(ZERO) for _ in range(pattern.n)]
    build_graph_state(pool, qubits, pattern.graph)
    outcomes: dict[int, int] = {}
    for v in pattern.order:
        sx, sz = signals(pattern, v, outcomes)
        outcomes[v] = pool.measure_angle(qubits[v], adaptive_phi(pattern.base[v], sx, sz), rng, "compute")
    outs = list(pattern.graph.outputs)
    return outcomes, [qubits[o] for o in outs], [signals(pattern, o, outcomes) for o in outs]


def _bits(k: int, width: int) -> str:
    return format(k, f"0{width}b") if width else ""


def output_distribution(pattern: Pattern) -> dict[str, float]:
    """Exact distribution of the corrected output bitstring.

    Explores both branches of every measurement on forked pools.  Quantum
    outputs are read in the computational basis after their byproducts are
    undone; for classical patterns the readout outcomes are used directly.
    """
    if len(pattern.order) > MAX_BRANCH_QUBITS:
        raise BranchBoundError(f"{len(pattern.order)} measured qubits exceeds the 2^{MAX_BRANCH_QUBITS} bound")
    pool = RegisterPool()
    qubits = [pool.alloc_plus_theta(ZERO) for _ in range(pattern.n)]
    build_graph_state(pool, qubits, pattern.graph)
    dist: dict[str, float] = {}

    def walk(pool: RegisterPool, k: int, outcomes: dict, weight: float) -> None:
        if k == len(pattern.order):
            outs = pattern.graph.outputs
            prefix = "".join(str(outcomes[v]) for v in pattern.readout)
            if not outs:
                dist[prefix] = dist.get(prefix, 0.0) + weight
                return
            for o in outs:
                sx, sz = signals(pattern, o, outcomes)
                if sz:
                    pool.apply_z(qubits[o])
                if sx:
                    pool.apply_x(qubits[o])
            probs = np.abs(pool.state_vector([qubits[o] for o in outs])) ** 2
            for i, p in enumerate(probs):
                if p > 1e-15:
                    key = prefix + _bits(i, len(outs))
                    dist[key] = dist.get(key, 0.0) + weight * float(p)
            return
        v = pattern.order[k]
        sx, sz = signals(pattern, v, outcomes)
        angle = adaptive_phi(pattern.base[v], sx, sz)
        p0, p1 = pool.angle_probs(qubits[v], angle)
        for s, p in ((0, p0), (1, p1)):
            if p <= 1e-12:
                continue
            branch = pool.fork()
            branch.project_angle(qubits[v], angle, s)
            walk(branch, k + 1, {**outcomes, v: s}, weight * p)

    walk(pool, 0, {}, 1.0)
    return dist


def min_branch_fidelity(circuit: Circuit) -> float:
    """Worst corrected-output fidelity with :func:`circuit_oracle` over every
    measurement branch of ``compile(circuit)``.

    Unlike output distributions this is sensitive to complex conjugation of
    the output state, which is what a wrong ``J_ANGLE_SIGN`` produces.
    """
    pattern = compile(circuit)
    if len(pattern.order) > MAX_BRANCH_QUBITS:
        raise BranchBoundError(f"{len(pattern.order)} measured qubits exceeds the 2^{MAX_BRANCH_QUBITS} bound")
    ref = circuit_oracle(circuit)
    pool = RegisterPool()
    qubits = [pool.alloc_plus_theta(ZERO) for _ in range(pattern.n)]
    build_graph_state(pool, qubits, pattern.graph)
    worst = 1.0

    def walk(pool: RegisterPool, k: int, outcomes: dict) -> None:
        nonlocal worst
        if k == len(pattern.order):
            outs = [qubits[o] for o in pattern.graph.outputs]
            for o, q in zip(pattern.graph.outputs, outs):
                sx, sz = signals(pattern, o, outcomes)
                if sz:
                    pool.apply_z(q)
                if sx:
                    pool.apply_x(q)
            worst = min(worst, pool.fidelity(outs, ref))
            return
        v = pattern.order[k]
        angle = adaptive_phi(pattern.base[v], *signals(pattern, v, outcomes))
        for s, p in enumerate(pool.angle_probs(qubits[v], angle)):
            if p > 1e-12:
                branch = pool.fork()
                branch.project_angle(qubits[v], angle, s)
                walk(branch, k + 1, {**outcomes, v: s})

    walk(pool, 0, {})
    return worst


# -- independent oracle -----------------------------------------------------

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_CZ = np.diag([1, 1, 1, -1]).astype(complex)


def _j_matrix(theta: Angle) -> np.ndarray:
    return _H @ np.diag([1, np.exp(1j * theta.radians)])


def circuit_oracle(circuit: Circuit) -> np.ndarray:
    """Output state by direct matrix products; wire 0 is the leading bit."""
    plus = np.ones(2, dtype=complex) / np.sqrt(2)
    state = reduce(np.kron, [plus] * circuit.wires)
    eye = np.eye(2, dtype=complex)
    for g in circuit.gates:
        if g.kind == "CZ":
            op = _CZ
        elif circuit.wires == 1:
            op = _j_matrix(g.angle)
        else:
            mats = [eye, eye]
            mats[g.wire] = _j_matrix(g.angle)
            op = np.kron(mats[0], mats[1])
        state = op @ state
    return state


def oracle_distribution(circuit: Circuit) -> dict[str, float]:
    probs = np.abs(circuit_oracle(circuit)) ** 2
    return {_bits(i, circuit.wires): float(p) for i, p in enumerate(probs) if p > 1e-15}


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


# -- brickwork padding -----------------------------------------------------

def _brick_interior(c: int) -> bool:
    return c % 8 in (2, 3)


def pad_to_brickwork(circuit: Circuit) -> tuple[Circuit, int]:
    """Embed a CZ-free two-wire circuit into the brickwork shape.

    Brick interiors get ``J(0) J(0)`` on both rows, so each brick is the
    identity; leftover free columns are filled with ``J(0)`` pairs.  Returns
    the padded circuit and the brickwork depth; ``compile`` of the result has
    exactly the graph ``brickwork_graph(2, depth)``.
    """
    if circuit.wires != 2 or any(g.kind == "CZ" for g in circuit.gates):
        raise ValueError("padding supports CZ-free two-wire circuits only")
    seqs = [[g.angle for g in circuit.gates if g.wire == w] for w in (0, 1)]
    if (len(seqs[0]) - len(seqs[1])) % 2:
        # filler comes in identity pairs J(0) J(0), so row parities must agree
        raise ValueError("both wires need J-gate counts of equal parity")
    depth = 1
    while True:
        free = [c for c in range(depth - 1) if not _brick_interior(c)]
        ok = (
            not _brick_interior(depth - 1)
            and len(free) >= max(map(len, seqs))
            and all((len(free) - len(s)) % 2 == 0 for s in seqs)
        )
        if ok:
            break
        depth += 1
    cols = [[ZERO] * (depth - 1) for _ in range(2)]
    for w in (0, 1):
        for c, a in zip(free, seqs[w]):
            cols[w][c] = a
    gates: list[Gate] = []
    for c in range(depth):
        if c % 8 in (2, 4):
            gates.append(CZ)
        if c < depth - 1:
            gates += [Gate("J", 0, cols[0][c]), Gate("J", 1, cols[1][c])]
    return Circuit(2, tuple(gates)), depth


def brickwork_relabel(pattern: Pattern) -> dict[int, int]:
    """Map vertex ids of a compiled two-wire pattern to ``row*depth + column``."""
    succ = {u: v for v in range(pattern.n) for u in pattern.xdep[v]}
    chains = []
    for w in (0, 1):
        chain = [w]
        while chain[-1] in succ:
            chain.append(succ[chain[-1]])
        chains.append(chain)
    depth = len(chains[0])
    return {v: w * depth + c for w, chain in enumerate(chains) for c, v in enumerate(chain)}


# -- bundled circuits -------------------------------------------------------

SUITE: dict[str, Circuit] = {
    "idle": Circuit(1),
    "h": Circuit(1, (J(0),)),
    "rot3": Circuit(1, (J(1), J(2), J(3))),
    "pi_t": Circuit(1, (J(4), J(1))),
    "plus2": Circuit(2, (J(0, 0), J(0, 1), CZ)),
    "bell": Circuit(2, (CZ, J(0, 1))),
    "mix8": Circuit(2, (J(1, 0), CZ, J(2, 1), J(0, 0), CZ, J(3, 1))),
    "deep": Circuit(2, (J(1, 0), J(2, 1), CZ, J(7, 0), J(5, 1), CZ, J(6, 0), J(1, 1))),
}
