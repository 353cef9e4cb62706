import json
from collections import Counter

import pytest

from bqcsim.angle import ALL, Angle
from bqcsim.mbqc import SUITE, Circuit, J, angle_pattern, classical_pattern
from bqcsim.proto import (
    PROTOCOLS,
    Options,
    ProtocolAbort,
    TripleConfig,
    build_world,
    inverse,
    run_bfk_double,
    run_mf_double,
    run_new_double,
    run_new_single,
    run_protocol,
    run_single_server,
    run_triple,
    topology,
)
from bqcsim.qstate import bell_vector, plus_vector
from bqcsim.wire import ChannelSpec, ConfigError, Party, enumerate_runs, run_schedule

C, S1, S2, TC = Party.CLIENT, Party.SERVER1, Party.SERVER2, Party.TC


def payloads(report, drop=("SecretPackage",)):
    return [(m["from"], m["to"], m["kind"], m["payload"]) for m in report.transcript if m["kind"] not in drop]


def trivial(n):
    return Options(corrections=((0, 0),) * n, perm=tuple(range(n)))


# -- topology ------------------------------------------------------------------

def test_double_servers_may_not_talk_in_bfk_or_mf():
    for proto in ("bfk-double", "mf-double"):
        with pytest.raises(ConfigError):
            topology(proto, Options(extra_channels=(ChannelSpec(S1, S2),)))
        with pytest.raises(ConfigError):
            run_protocol(proto, SUITE["h"], 0, opts=Options(collude=True))


def test_new_protocol_has_no_client_quantum_channel():
    for proto in ("new-double", "new-single"):
        with pytest.raises(ConfigError):
            topology(proto, Options(extra_channels=(ChannelSpec(TC, C, "quantum"),)))


def test_triple_registers_client_quantum_channels():
    chans = {(c.src, c.dst, c.kind) for c in topology("triple")}
    assert (TC, C, "quantum") in chans and (C, Party.SERVER3, "quantum") in chans


def test_unknown_protocol():
    with pytest.raises(ConfigError):
        run_protocol("quadruple", SUITE["h"])


# -- single server -------------------------------------------------------------

def test_single_server_j0_always_zero():
    outs = {run_single_server(SUITE["h"], seed, exact=False).outcomes for seed in range(500)}
    assert outs == {"0"}


def test_empty_pattern_has_no_delta_traffic():
    rep = run_protocol("single", pattern=angle_pattern([]), seed=0)
    assert not any(m["kind"] == "DeltaMsg" for m in rep.transcript)
    assert rep.outcomes == ""


@pytest.mark.parametrize("proto", PROTOCOLS)
@pytest.mark.parametrize("name", ["h", "pi_t", "bell", "mix8"])
def test_oracle_match(proto, name):
    rep = run_protocol(proto, SUITE[name], seed=4, opts=Options(triple=TripleConfig(classical_pattern(SUITE[name]).n, 2, 1.0)))
    assert rep.oracle_match and rep.tv < 1e-9
    assert rep.checks["deflip"]


# -- two servers ---------------------------------------------------------------

def test_mf_matches_bfk_distribution_and_reduces_to_it():
    c = SUITE["rot3"]
    for seed in range(3):
        a, b = run_bfk_double(c, seed), run_mf_double(c, seed)
        assert a.distribution.keys() == b.distribution.keys()
        assert all(a.distribution[k] == pytest.approx(b.distribution[k]) for k in a.distribution)
        zero = run_mf_double(c, seed, exact=False, opts=Options(corrections=((0, 0),) * a.n))
        assert payloads(zero) == payloads(run_bfk_double(c, seed, exact=False))


def test_mf_tampered_pair_is_detected():
    rep = run_mf_double(SUITE["h"], 1, opts=Options(tamper_z=0))
    assert not rep.oracle_match


def test_new_double_reduces_to_bfk():
    c = SUITE["deep"]
    for seed in range(5):
        n = classical_pattern(c).n
        a = run_bfk_double(c, seed, exact=False)
        b = run_new_double(c, seed, exact=False, opts=trivial(n))
        assert payloads(a) == payloads(b)


def test_new_double_hh_and_collusion():
    c = Circuit(1, (J(0), J(0)))
    assert run_new_double(c, 2).oracle_match
    rep = run_new_double(c, 2, opts=Options(collude=True))
    assert rep.oracle_match
    assert any(m["from"] == "Server1" and m["to"] == "Server2" for m in rep.transcript)


def test_new_single_mirrors_new_double():
    c = SUITE["mix8"]
    for seed in range(3):
        a = run_new_double(c, seed, exact=False)
        b = run_new_single(c, seed, exact=False)
        strip = lambda r: [(m["kind"], m["payload"]) for m in r.transcript if m["kind"] != "QubitTransfer"]
        assert strip(a) == strip(b)
        assert b.merged_topology and not a.merged_topology


def test_effective_angle_law():
    fids = []

    def hook(w, theta):
        s2 = w.machines[S2]
        fids.extend(w.pool.fidelity([q], plus_vector(t)) for q, t in zip(s2.qubits, theta))

    for seed in range(4):
        run_new_double(SUITE["deep"], seed, exact=False, hooks={"theta_eff": hook})
    assert len(fids) == 4 * 10
    assert min(fids) == pytest.approx(1, abs=1e-9)


def test_permutation_sampling_is_uniform():
    pat = angle_pattern([Angle(0)] * 3)
    w = build_world("new-double", pat, 0, opts=Options(keep_secrets=True), record=None, enumerate={"secret"})
    dist = enumerate_runs(w, lambda w: w.machines[TC].perm)
    assert len(dist) == 6
    assert all(p == pytest.approx(1 / 6) for p in dist.values())


def test_inverse():
    assert inverse((2, 0, 1)) == (1, 2, 0)


# -- triple --------------------------------------------------------------------

def test_triple_degenerate_forwarding():
    rep = run_triple(SUITE["idle"], TripleConfig(2, 0, 1.0), seed=3)
    assert rep.checks["positions"] == {"s": [0, 1], "t": [0, 1]}
    assert rep.oracle_match


def test_triple_never_forwarding_aborts():
    with pytest.raises(ProtocolAbort, match="insufficient pairs"):
        run_triple(SUITE["idle"], TripleConfig(2, 2, 0.0), seed=3)


def test_triple_config():
    assert TripleConfig(2, 2, 0.5).n == 8
    assert TripleConfig(3, "1/3", 0.5).n == 7
    with pytest.raises(ConfigError):
        TripleConfig(2, -1, 0.5)
    with pytest.raises(ConfigError):
        TripleConfig(2, 1, 1.5)


def test_triple_swap_law():
    fids = []

    def hook(w, s, t, xz):
        tc = w.machines[TC]
        fids.extend(w.pool.fidelity([tc.b1[a], tc.b2[b]], bell_vector(*p)) for a, b, p in zip(s, t, xz))

    done = 0
    for seed in range(10):
        try:
            run_triple(SUITE["mix8"], seed=seed, exact=False, hooks={"swap": hook})
            done += 1
        except ProtocolAbort:
            pass
    assert done and len(fids) == 8 * done
    assert min(fids) == pytest.approx(1, abs=1e-9)


# -- reports -------------------------------------------------------------------

def test_report_json_and_determinism():
    a = run_protocol("new-double", SUITE["bell"], seed=9).to_json()
    b = run_protocol("new-double", SUITE["bell"], seed=9).to_json()
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert a["oracle_match"] is True
    assert {"protocol", "n", "seed", "transcript", "outcomes", "distribution", "oracle_match", "checks"} <= a.keys()


def test_raw_replies_are_masked():
    seen = []
    rep = run_protocol("single", SUITE["mix8"], seed=5, exact=False, hooks={"flip": lambda *a: seen.append(a)})
    assert len(seen) == 8
    assert all(m == b ^ r for _, b, r, m in seen)
    assert Counter(r for _, _, r, _ in seen)  # both masks occur across runs in general
