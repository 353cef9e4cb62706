"""Blindness analysis.

Exact coalition-view distributions at small size, a chi-square test on
pooled ``delta`` messages at larger size, the remote-preparation and
entanglement-swapping tables, and the exact posterior over the hidden
permutation given a colluding-servers view.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import chisquare

from .angle import ALL, Angle, mf_encode
from .mbqc import Circuit, Pattern, angle_pattern, classical_pattern
from .proto import Options, build_world, inverse
from .qstate import RegisterPool, bell_vector
from .wire import ALL_TAGS, Party, enumerate_runs, run_schedule, trial_seed

__all__ = [
    "SpaceBoundError",
    "InsufficientTrials",
    "TranscriptDistribution",
    "BlindnessResult",
    "DEFAULT_COALITIONS",
    "transcript_distribution",
    "blindness_equal",
    "check_blindness",
    "delta_uniformity",
    "rsp_equivalence",
    "swap_table",
    "permutation_posterior",
    "posterior_brute_force",
    "attack_view",
]

TOL = 1e-9
SPACE_BOUND = 10**7

S1, S2 = Party.SERVER1, Party.SERVER2

DEFAULT_COALITIONS = {
    "single": frozenset({S1}),
    "bfk-double": frozenset({S2}),
    "mf-double": frozenset({S2}),
    "new-double": frozenset({S1, S2}),
    "new-single": frozenset({S1}),
}


class SpaceBoundError(ValueError):
    pass


class InsufficientTrials(ValueError):
    pass


class TranscriptDistribution(dict):
    """Canonical coalition view -> exact probability."""

    @property
    def total(self) -> float:
        return math.fsum(self.values())


@dataclass
class BlindnessResult:
    equal: bool
    deviation: float
    witness: tuple | None = None

    def __bool__(self) -> bool:
        return self.equal


def _as_pattern(target) -> Pattern:
    if isinstance(target, Pattern):
        return target
    if isinstance(target, Circuit):
        return classical_pattern(target)
    return angle_pattern([a if isinstance(a, Angle) else Angle(a) for a in target])


def enumeration_space(protocol: str, n: int) -> int:
    """Upper bound on enumerated leaves before merging."""
    client = 8**n * 2**n
    branches = 2**n * (2**n if protocol != "single" else 1)
    secrets = {"single": 1, "bfk-double": 1, "mf-double": 4**n}.get(protocol, 4**n * math.factorial(n))
    return client * branches * secrets


def transcript_distribution(protocol: str, target, coalition=None, opts: Options = Options()) -> TranscriptDistribution:
    """Exact distribution of the coalition's canonical view.

    ``target`` is a sequence of base angles (a chain pattern measured in
    full), a :class:`Pattern`, or a :class:`Circuit`.  Every client choice,
    trusted-center secret and measurement branch is enumerated with its exact
    probability.
    """
    pattern = _as_pattern(target)
    coalition = frozenset(coalition or DEFAULT_COALITIONS[protocol])
    space = enumeration_space(protocol, pattern.n)
    if space > SPACE_BOUND:
        raise SpaceBoundError(f"enumeration space {space} exceeds {SPACE_BOUND}")
    w = build_world(protocol, pattern, 0, opts=opts, record=coalition, enumerate=ALL_TAGS)
    return TranscriptDistribution(enumerate_runs(w, lambda w: w.net.view))


def blindness_equal(d1: dict, d2: dict, tol: float = TOL) -> BlindnessResult:
    worst, witness = 0.0, None
    for k in set(d1) | set(d2):
        p, q = d1.get(k), d2.get(k)
        dev = abs((p or 0.0) - (q or 0.0))
        if p is None or q is None:
            dev = max(dev, tol)  # support mismatch always counts
        if dev > worst or (witness is None and dev >= tol):
            worst, witness = dev, k
    equal = worst < tol
    return BlindnessResult(equal, worst, None if equal else witness)


def check_blindness(
    protocol: str,
    n: int,
    coalition=None,
    opts: Options = Options(),
    fail_fast: bool = True,
    tol: float = TOL,
) -> dict:
    """Compare the view distribution for every base-angle vector in S^n."""
    coalition = frozenset(coalition or DEFAULT_COALITIONS[protocol])
    ref_phis = (0,) * n
    ref = transcript_distribution(protocol, ref_phis, coalition, opts)
    failures, worst, cases = [], 0.0, 0
    sums_ok = abs(ref.total - 1) < tol
    for phis in itertools.product(range(8), repeat=n):
        cases += 1
        if phis == ref_phis:
            continue
        d = transcript_distribution(protocol, phis, coalition, opts)
        sums_ok &= abs(d.total - 1) < tol
        res = blindness_equal(ref, d, tol)
        worst = max(worst, res.deviation)
        if not res.equal:
            failures.append({"phi": list(ref_phis), "phi_other": list(phis), "deviation": res.deviation, "view": _plain(res.witness)})
            if fail_fast:
                break
    return {
        "check": f"blindness:{protocol}",
        "coalition": sorted(p.value for p in coalition),
        "n": n,
        "cases": cases,
        "failures": failures,
        "statistic": worst,
        "normalized": bool(sums_ok),
        "pass": not failures and bool(sums_ok),
    }


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


# -- statistical test ----------------------------------------------------------

def delta_uniformity(
    protocol: str,
    n: int,
    trials: int,
    seed: int,
    *,
    phis=None,
    biased: bool = False,
    alpha: float = 0.001,
) -> dict:
    """Chi-square test of the pooled ``delta`` values against uniform on S."""
    if trials * n / 8 < 100:
        raise InsufficientTrials(f"{trials} trials of {n} deltas give fewer than 100 expected per bin")
    pattern = _as_pattern(phis if phis is not None else (0,) * n)
    opts = Options(biased=biased)
    counts = np.zeros(8, dtype=int)
    for i in range(trials):
        w = build_world(protocol, pattern, trial_seed(seed, i), opts=opts)
        run_schedule(w)
        for m in w.net.transcript:
            if m.kind == "DeltaMsg":
                counts[m.payload[1].eighths] += 1
    stat, p = chisquare(counts)
    return {
        "check": f"delta-uniformity:{protocol}",
        "cases": int(counts.sum()),
        "counts": counts.tolist(),
        "statistic": float(stat),
        "p_value": float(p),
        "failures": [] if p > alpha else [{"p_value": float(p)}],
        "pass": bool(p > alpha),
    }


# -- equivalence and swapping tables -----------------------------------------

def _single_state(pool: RegisterPool, q: int) -> np.ndarray:
    return pool.state_vector([q])


def rsp_equivalence(tol: float = TOL) -> dict:
    """Corrected-pair measurement vs. plain-pair measurement, all 64 cases."""
    rows = []
    for t, x, z, m in itertools.product(ALL, (0, 1), (0, 1), (0, 1)):
        p1 = RegisterPool()
        a, b = p1.alloc_bell(x, z)
        pr1 = p1.project_angle(a, mf_encode(t, x, z), m)
        p2 = RegisterPool()
        a2, b2 = p2.alloc_bell(0, 0)
        pr2 = p2.project_angle(a2, t, m)
        fid = float(abs(np.vdot(_single_state(p2, b2), _single_state(p1, b))) ** 2)
        ok = fid >= 1 - tol and abs(pr1 - pr2) < tol
        rows.append({"theta": t.eighths, "x": x, "z": z, "m": m, "fidelity": fid, "p_corrected": pr1, "p_plain": pr2, "pass": ok})
    fails = [r for r in rows if not r["pass"]]
    return {"check": "rsp-equivalence", "cases": len(rows), "rows": rows, "failures": fails, "pass": not fails}


def swap_table(tol: float = TOL) -> dict:
    """Two parallel entanglement swaps, every joint Bell outcome forced.

    Pairs ``(A_k, B1_k)`` and ``(A'_k, B2_k)`` start in the plain Bell state;
    projecting ``(A_k, A'_k)`` onto outcome ``(x_k, z_k)`` must leave
    ``(B1_k, B2_k)`` in the Bell state labeled ``(x_k, z_k)``.
    """
    rows = []
    outcomes = list(itertools.product((0, 1), repeat=2))
    for o1, o2 in itertools.product(outcomes, repeat=2):
        pool = RegisterPool()
        first = [pool.alloc_bell(0, 0) for _ in range(2)]
        second = [pool.alloc_bell(0, 0) for _ in range(2)]
        prob = 1.0
        fids = []
        for k, (x, z) in enumerate((o1, o2)):
            prob *= pool.project_bell(first[k][0], second[k][0], x, z)
        for k, (x, z) in enumerate((o1, o2)):
            fids.append(pool.fidelity([first[k][1], second[k][1]], bell_vector(x, z)))
        ok = min(fids) >= 1 - tol and abs(prob - 1 / 16) < tol
        rows.append({"outcome": [list(o1), list(o2)], "probability": prob, "fidelity": fids, "pass": ok})
    fails = [r for r in rows if not r["pass"]]
    return {"check": "swap-table", "cases": len(rows), "rows": rows, "failures": fails, "pass": not fails}


# -- permutation posterior ---------------------------------------------------

COALITION = frozenset({S1, S2})


def attack_view(n: int, seed: int, leak: bool = False) -> tuple[tuple, tuple]:
    """Sample one new-double run under the coalition Bell-measurement
    strategy; return ``(canonical view, true permutation)``."""
    opts = Options(attack=True, keep_secrets=True, private_package=not leak)
    w = build_world("new-double", angle_pattern([Angle(0)] * n), seed, opts=opts, record=COALITION)
    run_schedule(w)
    return w.net.view, w.machines[Party.TC].perm


def _parse_view(view) -> dict:
    out = {}
    for src, dst, kind, payload in view:
        if kind == "AngleList":
            out["angles"] = tuple(Angle(a) for a in payload)
        elif kind == "PairList":
            out["records"] = tuple(tuple(r) for r in payload)
        elif kind == "SecretPackage":
            out["package"] = payload
    return out


def _cycles(perm) -> list[tuple[int, ...]]:
    """Cycles of the slot map ``j -> inverse(perm)[j]``."""
    inv = inverse(perm)
    seen, out = set(), []
    for j in range(len(perm)):
        if j in seen:
            continue
        cyc = []
        while j not in seen:
            seen.add(j)
            cyc.append(j)
            j = inv[j]
        out.append(tuple(cyc))
    return out


def _cycle_likelihood(cyc, angles, records, fixed_corr) -> float:
    """Probability of the angle messages and Bell records on one cycle.

    Slot ``j`` holds ``B_{inv(j)}`` and is Bell-measured with ``A_j``; along
    a cycle ``j -> inv(j)`` every pair involved belongs to the cycle.
    """
    k = len(cyc)
    total = 0.0
    options = [fixed_corr[j] for j in cyc] if fixed_corr else None
    for corr in itertools.product(((0, 0), (0, 1), (1, 0), (1, 1)), repeat=k) if options is None else [tuple(options)]:
        prior = 1.0 if options is not None else 0.25**k
        # the angle sent for pair i is mf_encode of a uniform angle
        p_angles = 1.0
        for idx, j in enumerate(cyc):
            x, z = corr[idx]
            p_angles *= sum(mf_encode(t, x, z) == angles[j] for t in ALL) / 8
        if p_angles == 0.0:
            continue
        pool = RegisterPool()
        pairs = {j: pool.alloc_bell(*corr[idx]) for idx, j in enumerate(cyc)}
        p_rec = 1.0
        for idx, j in enumerate(cyc):
            nxt = cyc[(idx + 1) % k]  # slot j holds the B half of pair inv(j) == nxt
            x, z = records[j]
            a, b = pairs[j][0], pairs[nxt][1]
            p = _project_or_zero(pool, a, b, x, z)
            p_rec *= p
            if p_rec == 0.0:
                break
        total += prior * p_angles * p_rec
    return total


def _project_or_zero(pool: RegisterPool, a: int, b: int, x: int, z: int) -> float:
    probs = pool._bell_branches(a, b)[2]
    if probs[2 * x + z] <= 1e-12:
        return 0.0
    return pool.project_bell(a, b, x, z)


def permutation_posterior(view, n: int) -> dict[tuple, float]:
    """Exact posterior over permutations given a coalition view.

    The likelihood of each permutation sums over the trusted center's Pauli
    corrections (or uses the leaked ones) and simulates the coalition's Bell
    measurements; it factorizes over the permutation's cycles.
    """
    info = _parse_view(view)
    angles, records = info["angles"], info["records"]
    pkg = info.get("package")
    fixed = tuple(tuple(c) for c in pkg[0]) if pkg else None
    memo: dict = {}
    weights = {}
    for perm in itertools.permutations(range(n)):
        if pkg and tuple(pkg[1]) != perm:
            weights[perm] = 0.0
            continue
        like = 1.0
        for cyc in _cycles(perm):
            key = tuple((angles[j], records[j], fixed[j] if fixed else None) for j in cyc)
            if key not in memo:
                memo[key] = _cycle_likelihood(cyc, angles, records, fixed)
            like *= memo[key]
        weights[perm] = like / math.factorial(n)
    z = math.fsum(weights.values())
    return {p: w / z for p, w in weights.items()}


def posterior_brute_force(view, n: int, leak: bool = False) -> dict[tuple, float]:
    """Same posterior by exhaustive enumeration of every run of the attack."""
    opts = Options(attack=True, keep_secrets=True, private_package=not leak)
    w = build_world("new-double", angle_pattern([Angle(0)] * n), 0, opts=opts, record=COALITION, enumerate=ALL_TAGS)
    joint = enumerate_runs(w, lambda w: (w.machines[Party.TC].perm, w.net.view))
    weights = {p: 0.0 for p in itertools.permutations(range(n))}
    for (perm, v), p in joint.items():
        if v == view:
            weights[perm] += p
    z = math.fsum(weights.values())
    return {p: w / z for p, w in weights.items()}
