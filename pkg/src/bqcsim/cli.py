"""Command-line front end.

Exit codes: 0 pass, 1 verification failure, 2 usage or configuration error,
3 protocol abort.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

from . import blind
from .angle import ALL, ZERO, add, delta, mf_encode, negate
from .mbqc import SUITE, Circuit, classical_pattern, min_branch_fidelity, oracle_distribution
from .proto import PROTOCOLS, Options, ProtocolAbort, TripleConfig, run_protocol
from .wire import ConfigError, Party, trial_seed

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3

SUITES = ("rsp", "swap", "angle", "oracle", "posterior", "reduction")


class UsageError(Exception):
    pass


def _load_circuit(name: str) -> Circuit:
    if name in SUITE:
        return SUITE[name]
    path = Path(name)
    if not path.is_file():
        raise UsageError(f"no circuit file or bundled circuit named {name!r}")
    try:
        return Circuit.load(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad circuit file {name}: {exc}") from exc


def _coalition(text: str | None):
    if not text:
        return None
    names = {p.value.lower(): p for p in Party} | {p.name.lower(): p for p in Party}
    out = set()
    for part in text.split(","):
        p = names.get(part.strip().lower())
        if p is None:
            raise UsageError(f"unknown party {part!r}")
        out.add(p)
    return frozenset(out)


def _write(report: dict, out: str | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- run ---------------------------------------------------------------------

def cmd_run(args) -> int:
    circuit = _load_circuit(args.circuit)
    opts = Options()
    if args.protocol == "triple":
        m = classical_pattern(circuit).n
        opts = replace(opts, triple=TripleConfig(m, Fraction(args.overhead), args.forward_prob))
    exact = args.mode == "enumerate"
    oracle = oracle_distribution(circuit)
    trials, ok, aborts = [], True, 0
    for i in range(args.trials):
        seed = args.seed if args.trials == 1 else trial_seed(args.seed, i)
        try:
            rep = run_protocol(args.protocol, circuit, seed, opts=opts, exact=exact)
        except ProtocolAbort as exc:
            print(f"abort (seed {seed}): {exc}", file=sys.stderr)
            aborts += 1
            trials.append({"protocol": args.protocol, "seed": seed, "abort": str(exc)})
            continue
        if not exact:
            # a sampled outcome must lie in the oracle's support
            rep.oracle_match = oracle.get(rep.outcomes, 0.0) > 1e-12
        ok &= bool(rep.oracle_match) and rep.checks.get("deflip", True)
        trials.append(rep.to_json())
    if len(trials) == 1:
        report = trials[0]
    else:
        report = {"protocol": args.protocol, "seed": args.seed, "trials": trials,
                  "completed": len(trials) - aborts, "oracle_match": ok}
    _write(report, args.out)
    if aborts == len(trials):
        return EXIT_ABORT
    return EXIT_OK if ok else EXIT_FAIL


# -- blindness -----------------------------------------------------------------

def cmd_blindness(args) -> int:
    if args.protocol not in blind.DEFAULT_COALITIONS:
        raise UsageError(f"no blindness analysis for {args.protocol}")
    coalition = _coalition(args.coalition)
    opts = Options()
    if args.leak_control:
        if args.protocol == "single":
            raise UsageError("single has no private channel to leak")
        opts = Options(private_client_s1=False, private_package=False)
    if args.mode == "enumerate":
        report = blind.check_blindness(args.protocol, args.n, coalition, opts, fail_fast=not args.all_cases)
    else:
        report = blind.delta_uniformity(args.protocol, args.n, args.trials, args.seed, biased=args.leak_control)
    _write(report, args.out)
    return EXIT_OK if report["pass"] else EXIT_FAIL


# -- verify --------------------------------------------------------------------

def _angle_suite() -> dict:
    fails = []
    for a in ALL:
        if add(a, negate(a)) != ZERO:
            fails.append(f"negate {a}")
    for x, z in itertools.product((0, 1), repeat=2):
        if len({mf_encode(t, x, z) for t in ALL}) != 8:
            fails.append(f"mf_encode not bijective for {(x, z)}")
    for phi in ALL:
        counts = {}
        for t, r in itertools.product(ALL, (0, 1)):
            d = delta(t, phi, r)
            counts[d] = counts.get(d, 0) + 1
        if sorted(counts.values()) != [2] * 8:
            fails.append(f"delta not 2-to-1 onto S for phi={phi}")
    return {"check": "angle", "cases": 8 + 4 + 8, "failures": fails, "pass": not fails}


def _completed_run(protocol: str, circuit: Circuit, seed: int, attempts: int = 64):
    """First run that does not abort, trying derived seeds in order."""
    for i in range(attempts):
        try:
            return run_protocol(protocol, circuit, trial_seed(seed, i))
        except ProtocolAbort:
            continue
    raise ProtocolAbort(f"{attempts} consecutive aborts")


def _oracle_suite() -> dict:
    fails, cases = [], 0
    for name, circ in SUITE.items():
        cases += 1
        fid = min_branch_fidelity(circ)
        if fid < 1 - 1e-9:
            fails.append({"circuit": name, "pattern_fidelity": fid})
        for proto in PROTOCOLS:
            cases += 1
            rep = _completed_run(proto, circ, cases)
            if not rep.oracle_match:
                fails.append({"circuit": name, "protocol": proto, "tv": rep.tv})
    return {"check": "oracle", "cases": cases, "failures": fails, "pass": not fails}


def _posterior_suite() -> dict:
    fails = []
    view, perm = blind.attack_view(3, 0)
    post = blind.permutation_posterior(view, 3)
    dev = max(abs(p - 1 / 6) for p in post.values())
    if dev > 1e-9:
        fails.append({"case": "honest n=3", "deviation": dev})
    view, perm = blind.attack_view(3, 0, leak=True)
    post = blind.permutation_posterior(view, 3)
    if abs(post[perm] - 1) > 1e-9:
        fails.append({"case": "leaked package", "posterior_true": post[perm]})
    return {"check": "posterior", "cases": 2, "failures": fails, "pass": not fails}


def _strip(transcript) -> list:
    return [(m["from"], m["to"], m["kind"], m["payload"]) for m in transcript if m["kind"] != "SecretPackage"]


def _reduction_suite() -> dict:
    fails, cases = [], 0
    for name, circ in SUITE.items():
        cases += 1
        a = run_protocol("bfk-double", circ, seed=cases, exact=False)
        n = a.n
        opts = Options(corrections=((0, 0),) * n, perm=tuple(range(n)))
        b = run_protocol("new-double", circ, seed=cases, exact=False, opts=opts)
        if _strip(a.transcript) != _strip(b.transcript):
            fails.append({"circuit": name})
    return {"check": "reduction", "cases": cases, "failures": fails, "pass": not fails}


VERIFY = {
    "rsp": blind.rsp_equivalence,
    "swap": blind.swap_table,
    "angle": _angle_suite,
    "oracle": _oracle_suite,
    "posterior": _posterior_suite,
    "reduction": _reduction_suite,
}


def cmd_verify(args) -> int:
    chosen = []
    for item in args.only or []:
        chosen += [s.strip() for s in item.split(",") if s.strip()]
    for s in chosen:
        if s not in VERIFY:
            raise UsageError(f"unknown suite {s!r}; choose from {', '.join(SUITES)}")
    chosen = chosen or list(SUITES)
    results = {}
    for name in chosen:
        rep = VERIFY[name]()
        rep.pop("rows", None)
        results[name] = rep
        status = "PASS" if rep["pass"] else "FAIL"
        print(f"{name:<10} {status}  cases={rep['cases']}  failures={len(rep['failures'])}")
    failed = [k for k, r in results.items() if not r["pass"]]
    if failed:
        print("failed: " + ", ".join(failed))
    if args.out:
        _write(results, args.out)
    return EXIT_FAIL if failed else EXIT_OK


# -- entry point -------------------------------------------------------------

def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _probability(text: str) -> float:
    v = float(text)
    if not 0 <= v <= 1:
        raise argparse.ArgumentTypeError("must lie in [0, 1]")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bqcsim", description="Blind delegated quantum computation simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a protocol on a circuit")
    run.add_argument("--protocol", required=True, choices=PROTOCOLS)
    run.add_argument("--circuit", required=True, help="circuit JSON file or bundled circuit name")
    run.add_argument("--seed", required=True, type=_seed)
    run.add_argument("--trials", type=_positive, default=1)
    run.add_argument("--mode", choices=("sample", "enumerate"), default="enumerate")
    run.add_argument("--overhead", default="2", help="triple protocol overhead factor")
    run.add_argument("--forward-prob", type=_probability, default=0.5)
    run.add_argument("--out")
    run.set_defaults(func=cmd_run)

    bl = sub.add_parser("blindness", help="exact or statistical blindness analysis")
    bl.add_argument("--protocol", required=True, choices=PROTOCOLS)
    bl.add_argument("--mode", choices=("enumerate", "sample"), default="enumerate")
    bl.add_argument("--n", type=_positive, default=1)
    bl.add_argument("--trials", type=_positive, default=10**4)
    bl.add_argument("--seed", type=_seed, default=0)
    bl.add_argument("--coalition", help="comma-separated parties, e.g. Server1,Server2")
    bl.add_argument("--leak-control", action="store_true",
                    help="make the private channels public (enumerate) or zero the masks (sample)")
    bl.add_argument("--all-cases", action="store_true", help="do not stop at the first differing case")
    bl.add_argument("--out")
    bl.set_defaults(func=cmd_blindness)

    ve = sub.add_parser("verify", help="run the verification suites")
    ve.add_argument("--only", action="append", help=f"subset of {','.join(SUITES)}")
    ve.add_argument("--out")
    ve.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ConfigError, blind.SpaceBoundError, blind.InsufficientTrials, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
