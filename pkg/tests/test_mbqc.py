import itertools
import json
from functools import reduce
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bqcsim import mbqc
from bqcsim.angle import Angle
from bqcsim.mbqc import (
    CZ,
    SUITE,
    BranchBoundError,
    Circuit,
    Gate,
    J,
    adaptive_phi,
    angle_pattern,
    brickwork_graph,
    brickwork_relabel,
    build_graph_state,
    classical_pattern,
    compile,
    oracle_distribution,
    output_distribution,
    pad_to_brickwork,
    run_pattern,
    total_variation,
)
from bqcsim.qstate import RegisterPool

ROOT = Path(__file__).resolve().parent.parent


def dense_oracle(circuit):
    """Independent reference: J(t) = H Rz(t), CZ = diag(1,1,1,-1), |+> inputs."""
    H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    state = reduce(np.kron, [np.array([1, 1]) / np.sqrt(2)] * circuit.wires)
    for g in circuit.gates:
        if g.kind == "CZ":
            op = np.diag([1, 1, 1, -1])
        else:
            u = H @ np.diag([np.exp(-0.5j * g.angle.radians), np.exp(0.5j * g.angle.radians)])
            mats = [np.eye(2)] * circuit.wires
            mats[g.wire] = u
            op = reduce(np.kron, mats)
        state = op @ state
    return state


def dense_probs(circuit):
    p = np.abs(dense_oracle(circuit)) ** 2
    return {format(i, f"0{circuit.wires}b"): float(x) for i, x in enumerate(p) if x > 1e-15}


@st.composite
def circuits(draw):
    wires = draw(st.integers(1, 2))
    gate = st.builds(J, st.integers(0, 7), st.integers(0, wires - 1))
    if wires == 2:
        gate = st.one_of(gate, st.just(CZ))
    return Circuit(wires, tuple(draw(st.lists(gate, max_size=5))))


# -- graphs -------------------------------------------------------------------

@pytest.mark.parametrize("depth,n,edges", [(1, 2, 0), (5, 10, 10), (9, 18, 18), (11, 22, 23)])
def test_brickwork_golden_counts(depth, n, edges):
    g = brickwork_graph(2, depth)
    assert (g.n, len(g.edges)) == (n, edges)


@pytest.mark.parametrize("wires", [1, 3])
def test_brickwork_rejects_other_widths(wires):
    with pytest.raises(ValueError):
        brickwork_graph(wires, 5)


def test_single_edge_graph_state():
    pool = RegisterPool()
    qs = [pool.alloc_plus_theta(Angle(0)) for _ in range(2)]
    build_graph_state(pool, qs, mbqc.Graph(2, ((0, 1),), (), ()))
    assert pool.fidelity(qs, np.array([1, 1, 1, -1]) / 2) == pytest.approx(1)


def test_empty_edge_set_leaves_pool():
    pool = RegisterPool()
    qs = [pool.alloc_plus_theta(Angle(0)) for _ in range(3)]
    before = pool.key()
    build_graph_state(pool, qs, mbqc.Graph(3, (), (), ()))
    assert pool.key() == before


def test_three_chain_cluster():
    pool = RegisterPool()
    qs = [pool.alloc_plus_theta(Angle(0)) for _ in range(3)]
    build_graph_state(pool, qs, mbqc.Graph(3, ((0, 1), (1, 2)), (), ()))
    ref = np.array([(-1) ** (a * b + b * c) for a, b, c in itertools.product((0, 1), repeat=3)]) / np.sqrt(8)
    assert pool.fidelity(qs, ref) == pytest.approx(1)


@pytest.mark.parametrize("base,sx,sz,want", [(3, 0, 0, 3), (1, 1, 0, 7), (1, 1, 1, 3)])
def test_adaptive_phi(base, sx, sz, want):
    assert adaptive_phi(Angle(base), sx, sz) == Angle(want)


# -- compilation --------------------------------------------------------------

def test_compile_structure():
    p = compile(Circuit(1, (J(0),)))
    assert p.n == 2 and len(p.order) == 1
    p = compile(Circuit(1, (J(0), J(0))))
    assert p.n == 3 and len(p.order) == 2
    p = compile(Circuit(2, (J(0, 0), J(0, 1), CZ)))
    assert p.n == 4 and len(p.graph.edges) == 3


def test_flow_dependencies_precede():
    for c in SUITE.values():
        p = compile(c)
        pos = {v: i for i, v in enumerate(p.order)}
        for v in p.order:
            assert all(pos[u] < pos[v] for u in p.xdep[v] | p.zdep[v])


@pytest.mark.parametrize("name", sorted(SUITE))
def test_suite_oracle_equivalence(name):
    c = SUITE[name]
    ref = dense_probs(c)
    assert total_variation(oracle_distribution(c), ref) < 1e-12
    assert total_variation(output_distribution(compile(c)), ref) < 1e-9
    assert total_variation(output_distribution(classical_pattern(c)), ref) < 1e-9


@settings(max_examples=40, deadline=None)
@given(circuits())
def test_random_circuit_oracle_equivalence(c):
    assert total_variation(output_distribution(compile(c)), dense_probs(c)) < 1e-9
    assert total_variation(output_distribution(classical_pattern(c)), dense_probs(c)) < 1e-9


class Script:
    def __init__(self, outcomes):
        self.outcomes = list(outcomes)

    def pick(self, probs, tag=None):
        return self.outcomes.pop(0)


@pytest.mark.parametrize("name", ["rot3", "mix8", "bell"])
def test_every_branch_is_correct(name):
    c = SUITE[name]
    for branch in itertools.product((0, 1), repeat=len(compile(c).order)):
        assert corrected_fidelity(c, branch) == pytest.approx(1, abs=1e-9)


def test_seeded_runs_deterministic():
    p = compile(SUITE["deep"])
    a = run_pattern(RegisterPool(), p, np.random.default_rng(5))[0]
    b = run_pattern(RegisterPool(), p, np.random.default_rng(5))[0]
    assert a == b


def test_empty_pattern():
    p = compile(Circuit(1))
    outcomes, outs, corr = run_pattern(RegisterPool(), p, np.random.default_rng(0))
    assert outcomes == {} and len(outs) == 1
    assert output_distribution(p) == pytest.approx({"0": 0.5, "1": 0.5})


def test_branch_bound():
    with pytest.raises(BranchBoundError):
        output_distribution(angle_pattern([0] * 15))


def corrected_fidelity(c, branch):
    p = compile(c)
    pool = RegisterPool()
    _, outs, corr = run_pattern(pool, p, Script(branch))
    for q, (sx, sz) in zip(outs, corr):
        if sz:
            pool.apply_z(q)
        if sx:
            pool.apply_x(q)
    return pool.fidelity(outs, dense_oracle(c))


def test_flipped_j_sign_breaks_oracle(monkeypatch):
    # J(-t) is the complex conjugate of J(t), so only state fidelity exposes it
    c = SUITE["rot3"]
    branch = (0,) * len(compile(c).order)
    assert corrected_fidelity(c, branch) == pytest.approx(1)
    monkeypatch.setattr(mbqc, "J_ANGLE_SIGN", 1)
    assert corrected_fidelity(c, branch) < 0.99


# -- brickwork padding --------------------------------------------------------

@pytest.mark.parametrize(
    "gates",
    [(), (J(1, 0), J(3, 1)), (J(2, 0), J(5, 0), J(7, 1), J(1, 1)), (J(1, 0), J(1, 0), J(6, 0), J(3, 1))],
)
def test_pad_and_delegate(gates):
    c = Circuit(2, gates)
    padded, depth = pad_to_brickwork(c)
    p = compile(padded)
    relabel = brickwork_relabel(p)
    edges = sorted(tuple(sorted((relabel[a], relabel[b]))) for a, b in p.graph.edges)
    assert edges == sorted(brickwork_graph(2, depth).edges)
    assert total_variation(output_distribution(p), dense_probs(c)) < 1e-9


def test_pad_rejects_cz_and_parity_mismatch():
    with pytest.raises(ValueError):
        pad_to_brickwork(Circuit(2, (CZ,)))
    with pytest.raises(ValueError):
        pad_to_brickwork(Circuit(2, (J(1, 0),)))


# -- files --------------------------------------------------------------------

def test_circuit_json_roundtrip_and_bundle():
    for name, c in SUITE.items():
        assert Circuit.from_json(json.loads(json.dumps(c.to_json()))) == c
        assert Circuit.load(ROOT / "circuits" / f"{name}.json") == c


def test_circuit_validation():
    with pytest.raises(ValueError):
        Circuit(3)
    with pytest.raises(ValueError):
        Circuit(1, (CZ,))
    with pytest.raises(ValueError):
        Circuit(1, (Gate("J", 1),))


def test_pattern_dump_is_json():
    json.dumps(classical_pattern(SUITE["mix8"]).to_json())
