"""Command-line entry point.

Three subcommands: ``solve`` runs a solver on a fixture or problem file
and writes a trace plus a summary, ``diagnose`` runs the constraint
qualification checks and writes one verdict document per check, and
``regress`` executes the fixture-by-check-by-solver matrix together
with the implication ordering and the randomized property suites.

Outputs land in --out-dir, the NSDPKIT_OUT_DIR environment variable, or
``./nsdpkit-out``.  Identical commands with identical seeds produce
byte-identical files except for the generated-at header line, which the
content hashes exclude.

Exit codes: solve 0 converged / 2 iteration cap / 3 error; diagnose 0
match or no comparison / 1 mismatch / 3 error; regress 0 clean / 1 any
failed entry.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import fields as dataclass_fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import cq, fixtures, kkt, model, selftest, solvers

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_CAP = 2
EXIT_ERROR = 3

DEFAULT_CHECKS = (
    "nondegeneracy", "robinson",
    "weak-nondegeneracy", "weak-robinson", "weak-crcq", "weak-cpld",
    "seq-crcq", "seq-cpld",
)


def _out_dir(args) -> Path:
    root = args.out_dir or os.environ.get("NSDPKIT_OUT_DIR") or "nsdpkit-out"
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _parse_vector(text: str, n: int, label: str) -> np.ndarray:
    try:
        vec = np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError as exc:
        raise ValueError(f"cannot parse {label} {text!r}: {exc}") from exc
    if vec.shape != (n,):
        raise ValueError(f"{label} has {vec.shape[0]} entries, expected {n}")
    return vec


class Source:
    """A problem plus the fixture metadata the subcommands consult."""

    def __init__(self, source_id, problem, x_bar, x0, curves=(),
                 embedding=None, expected=None):
        self.source_id = source_id
        self.problem = problem
        self.x_bar = x_bar
        self.x0 = x0
        self.curves = curves
        self.embedding = embedding
        self.expected = expected or {}

    def allowed(self, check: str):
        val = self.expected.get("checks", {}).get(check)
        if val is None:
            return None
        return tuple(val) if isinstance(val, list) else (val,)


def _load_source(args) -> Source:
    if getattr(args, "fixture", None):
        registry = fixtures.FixtureRegistry(getattr(args, "expected", None)) \
            if getattr(args, "expected", None) else fixtures.default_registry()
        fix = registry.get(args.fixture)
        return Source(fix.fixture_id, fix.problem, fix.x_bar, fix.x0,
                      curves=fix.curves, embedding=fix.embedding,
                      expected=fix.expected)
    if getattr(args, "problem", None):
        poly = model.load_problem(args.problem)
        problem = poly.problem()
        x_bar = poly.x_bar
        expected = poly.expected
        if getattr(args, "point", None):
            # the file's expected verdicts refer to the file's own point
            x_bar = _parse_vector(args.point, problem.n, "--point")
            expected = None
        x0 = x_bar if x_bar is not None else np.zeros(problem.n)
        if getattr(args, "x0", None):
            x0 = _parse_vector(args.x0, problem.n, "--x0")
        sid = problem.name or Path(args.problem).stem
        return Source(sid, problem, x_bar, x0, expected=expected)
    raise ValueError("need --fixture or --problem")


def _parse_budget(args) -> cq.CqBudget:
    overrides = {}
    if getattr(args, "budget", None):
        valid = {f.name for f in dataclass_fields(cq.CqBudget)}
        for pair in args.budget.split(","):
            key, _, raw = pair.partition("=")
            key = key.strip()
            if key not in valid:
                raise ValueError(f"unknown budget field {key!r}; "
                                 f"known: {', '.join(sorted(valid))}")
            overrides[key] = float(raw) if "." in raw or "e" in raw.lower() \
                else int(raw)
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = int(args.seed)
    return cq.CqBudget(**overrides)


def _load_config(args) -> dict:
    if not getattr(args, "config", None):
        return {}
    with open(args.config, "r", encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# solve


def _run_solver(problem, x0, solver: str, config: dict) -> solvers.SolverTrace:
    al_keys = {f.name for f in dataclass_fields(solvers.AlConfig)}
    al_overrides = {k: v for k, v in config.items() if k in al_keys}
    cfg = solvers.AlConfig(**al_overrides) if al_overrides else solvers.AlConfig()
    target_tol = float(config.get("target_tol", 1e-6))
    if solver == "penalty":
        rho1 = float(config.get("rho1", 10.0))
        growth = float(config.get("rho_growth", 10.0))
        max_outer = int(config.get("max_outer", 12))
        return solvers.solve_external_penalty(
            problem, x0,
            rho_schedule=lambda k: rho1 * growth ** (k - 1),
            inner_tol_schedule=lambda k: max(0.1 * 0.5 ** (k - 1),
                                             min(0.1, target_tol)),
            max_outer=max_outer, target_tol=target_tol, config=cfg)
    if solver == "al":
        max_outer = int(config.get("max_outer", 30))
        return solvers.solve_augmented_lagrangian(
            problem, x0, config=cfg, target_tol=target_tol,
            max_outer=max_outer)
    if solver == "sqp":
        max_iter = int(config.get("max_iter", 40))
        return solvers.solve_sqp(problem, x0, target_tol=target_tol,
                                 max_iter=max_iter)
    raise ValueError(f"unknown solver {solver!r}; choose penalty, al, or sqp")


def _summary_text(source: Source, solver: str, trace: solvers.SolverTrace) -> str:
    problem = source.problem
    final = trace.final
    res = kkt.kkt_residual(problem, final.x, final.y)
    first_y = float(np.linalg.norm(trace.records[0].y))
    final_y = float(np.linalg.norm(final.y))
    lines = [
        f"problem: {source.source_id}",
        f"solver: {solver}",
        f"termination: {trace.termination}",
        f"outer iterations: {len(trace)}",
        f"final rho: {final.rho:.6e}",
        f"final x: {np.array2string(final.x, precision=8)}",
        f"objective: {problem.f(final.x):.10e}",
        f"stationarity: {res.stationarity:.6e}",
        f"feasibility: {res.feasibility:.6e}",
        f"complementarity: {res.complementarity:.6e}",
        f"dual-feasibility: {res.dual_feasibility:.6e}",
        f"multiplier norm: {final_y:.6e}",
    ]
    if final_y >= 1e3 and final_y >= 10.0 * max(first_y, 1e-12):
        lines.append("note: multiplier estimates diverged "
                     f"({first_y:.3e} -> {final_y:.3e}); the limit point "
                     "may admit no Lagrange multiplier")
    return "\n".join(lines) + "\n"


def cmd_solve(args) -> int:
    try:
        source = _load_source(args)
        config = _load_config(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = _out_dir(args)
    try:
        trace = _run_solver(source.problem, source.x0, args.solver, config)
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    trace_path = out / f"{source.source_id}-{args.solver}.trace"
    kkt.write_trace(trace.certificate(), trace_path)
    summary = _summary_text(source, args.solver, trace)
    _atomic_write(out / f"{source.source_id}-{args.solver}-summary.txt", summary)
    print(summary, end="")
    print(f"trace written to {trace_path}")
    if trace.termination == "converged":
        return EXIT_OK
    if trace.termination == "iteration_cap":
        return EXIT_CAP
    return EXIT_ERROR


# ---------------------------------------------------------------------------
# diagnose


def _run_check(name: str, source: Source, budget: cq.CqBudget,
               msr_samples: int) -> cq.CqVerdict:
    problem, x_bar = source.problem, source.x_bar
    if x_bar is None:
        raise ValueError("no reference point: give --point or a file x_bar")
    if name == "nondegeneracy":
        return cq.check_nondegeneracy(problem, x_bar, budget)
    if name == "robinson":
        return cq.check_robinson(problem, x_bar, budget)
    if name in cq.WEAK_KINDS:
        return cq.check_weak_cq(problem, x_bar, name, budget,
                                curves=source.curves)
    if name in cq.SEQ_KINDS:
        return cq.check_seq_cq(problem, x_bar, name, budget,
                               curves=source.curves)
    if name == "msr":
        return cq.check_msr(problem, x_bar, budget, samples=msr_samples)
    if name in ("nlp-crcq", "nlp-cpld"):
        if source.embedding is None:
            raise ValueError(f"{name} needs a diagonal-embedding fixture")
        return cq.nlp_constant_rank_check(source.embedding, x_bar,
                                          name.split("-")[1], budget)
    raise ValueError(f"unknown check {name!r}")


def cmd_diagnose(args) -> int:
    try:
        source = _load_source(args)
        budget = _parse_budget(args)
        checks = [c.strip() for c in args.checks.split(",")] if args.checks \
            else list(DEFAULT_CHECKS)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = _out_dir(args)
    mismatches = []
    compared = 0
    try:
        for name in checks:
            verdict = _run_check(name, source, budget, args.msr_samples)
            cq.write_verdict(verdict, out / f"{source.source_id}-{name}.verdict")
            allowed = source.allowed(name)
            note = ""
            if allowed is not None:
                compared += 1
                if verdict.status not in allowed:
                    mismatches.append(name)
                    note = f"  MISMATCH (expected {' or '.join(allowed)})"
                else:
                    note = "  (matches expected)"
            print(f"{name}: {verdict.status}{note}")
    except cq.InfeasiblePointError as exc:
        print(f"error: point is infeasible, measured violation "
              f"{exc.infeasibility:.3e}", file=sys.stderr)
        return EXIT_ERROR
    except (cq.CombinatorialCapError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if mismatches:
        print(f"{len(mismatches)} mismatch(es): {', '.join(mismatches)}")
        return EXIT_MISMATCH
    if compared == 0:
        print("no expected table; verdicts recorded without comparison")
    return EXIT_OK


# ---------------------------------------------------------------------------
# regress


def _entry(section, fixture, item, status, expected, ok, **details):
    return {
        "section": section,
        "fixture": fixture,
        "item": item,
        "status": status,
        "expected": list(expected) if expected is not None else None,
        "ok": bool(ok),
        "details": details,
    }


def _regress_cq(registry, budget, msr_samples, run_msr):
    entries = []
    recorded = {}
    for fix in registry:
        source = Source(fix.fixture_id, fix.problem, fix.x_bar, fix.x0,
                        curves=fix.curves, embedding=fix.embedding,
                        expected=fix.expected)
        names = list(DEFAULT_CHECKS)
        if fix.embedding is not None:
            names += ["nlp-crcq", "nlp-cpld"]
        if run_msr:
            names.append("msr")
        for name in names:
            verdict = _run_check(name, source, budget, msr_samples)
            recorded[(fix.fixture_id, name)] = verdict.status
            allowed = fix.allowed(name)
            ok = allowed is None or verdict.status in allowed
            entries.append(_entry("cq", fix.fixture_id, name, verdict.status,
                                  allowed, ok))
    return entries, recorded


def _residual_rows(fixture_id, solver, trace, problem):
    rows = []
    for rec in trace.records:
        res = kkt.kkt_residual(problem, rec.x, rec.y)
        rows.append((fixture_id, solver, rec.k, rec.rho,
                     res.stationarity, res.feasibility,
                     res.complementarity, res.dual_feasibility,
                     float(np.linalg.norm(rec.y))))
    return rows


def _regress_solvers(registry, csv_rows):
    entries = []
    for fix in registry:
        problem = fix.problem
        for solver in ("penalty", "al", "sqp"):
            config = {"max_outer": 8} if solver == "penalty" else \
                     {"max_outer": 12} if solver == "al" else {"max_iter": 25}
            try:
                trace = _run_solver(problem, fix.x0, solver, config)
            except (ValueError, np.linalg.LinAlgError) as exc:
                entries.append(_entry("solvers", fix.fixture_id, solver,
                                      "error", None, False, error=str(exc)))
                continue
            csv_rows.extend(_residual_rows(fix.fixture_id, solver, trace, problem))
            detail = {"termination": trace.termination,
                      "outer_iterations": len(trace)}
            ok = True
            if solver in ("al", "sqp") and trace.termination == "converged":
                passed, failure = kkt.akkt_check(problem, trace.certificate(),
                                                 tol=1e-4)
                detail["akkt"] = bool(passed)
                if not passed:
                    ok = False
                    detail["akkt_failure"] = str(failure)
            entries.append(_entry("solvers", fix.fixture_id, solver,
                                  trace.termination, None, ok, **detail))
        # multiplier recovery from a fresh penalty trace at the reference point
        expected_rec = fix.expected.get("recovery")
        trace = solvers.solve_external_penalty(
            problem, fix.x0, rho_schedule=lambda k: 10.0 ** k,
            inner_tol_schedule=lambda k: 1e-10, max_outer=8)
        try:
            rec = kkt.recover_multiplier(problem, trace.certificate(), fix.x_bar)
            status = rec.status
            detail = {}
            if status == "recovered":
                res = kkt.kkt_residual(problem, fix.x_bar, rec.multiplier)
                detail["kkt_residual"] = res.max_entry
                if res.max_entry > 1e-4:
                    status = "recovered-but-inaccurate"
        except kkt.TraceTooShortError as exc:
            status, detail = "trace-too-short", {"error": str(exc)}
        ok = expected_rec is None or status == expected_rec
        entries.append(_entry("solvers", fix.fixture_id, "recovery", status,
                              (expected_rec,) if expected_rec else None,
                              ok, **detail))
    return entries


def _regress_safeguard_parity(registry):
    """Zero-radius safeguard must reproduce the external penalty bitwise."""
    fix = registry.get("ex-4.2")
    cfg = solvers.AlConfig(safeguard_radius=0.0)
    al = solvers.solve_augmented_lagrangian(fix.problem, fix.x0, config=cfg,
                                            target_tol=0.0, max_outer=6)
    rhos = [rec.rho for rec in al.records]
    pen = solvers.solve_external_penalty(
        fix.problem, fix.x0,
        rho_schedule=lambda k: rhos[k - 1],
        inner_tol_schedule=lambda k: max(0.1 * 0.5 ** (k - 1), 1e-8),
        max_outer=len(rhos))
    gap = max(float(np.linalg.norm(a.x - b.x)) + float(np.linalg.norm(a.y - b.y))
              for a, b in zip(al.records, pen.records))
    return [_entry("solvers", fix.fixture_id, "zero-safeguard-parity",
                   "match" if gap <= 1e-12 else "diverged", ("match",),
                   gap <= 1e-12, max_gap=gap)]


def _regress_msr_curve(registry, seed):
    fix = registry.get("ex-4.3")
    est = cq.estimate_msr_modulus(fix.problem, fix.x_bar, radius=0.1,
                                  samples=200, seed=seed)
    ok = 0.99 <= est.gamma_hat <= 1.01 and not est.unreliable
    rows = [("ex-4.3", est.radius, i, r) for i, r in enumerate(est.ratios)]
    entry = _entry("msr", fix.fixture_id, "ratio-curve",
                   f"gamma={est.gamma_hat:.6f}", ("0.99..1.01",), ok,
                   gamma_hat=est.gamma_hat, samples=est.samples,
                   failed_projections=est.n_failed)
    return [entry], rows


def _regress_props(registry, cases, seed):
    problems = [fix.problem for fix in registry]
    entries = []
    for res in selftest.run_all(problems, cases=cases, seed=seed):
        entries.append(_entry("props", "-", res.name,
                              "ok" if res.ok else "failed", ("ok",), res.ok,
                              cases=res.cases, failures=list(res.failures)))
    return entries


def _regress_meta(recorded):
    entries = []
    holds = ("CERTIFIED_HOLDS", "NO_VIOLATION_FOUND")
    by_fixture = {}
    for (fid, check), status in recorded.items():
        by_fixture.setdefault(fid, {})[check] = status
    for fid, table in sorted(by_fixture.items()):
        for strong, weak in fixtures.IMPLICATIONS:
            a, b = table.get(strong), table.get(weak)
            if a is None or b is None:
                continue
            bad = a in holds and b == "VIOLATED"
            if bad:
                entries.append(_entry("meta", fid, f"{strong}->{weak}",
                                      f"{a} vs {b}", None, False))
    entries.append(_entry("meta", "-", "implication-order",
                          "violated" if any(not e["ok"] for e in entries)
                          else "consistent", ("consistent",),
                          all(e["ok"] for e in entries)))
    return entries


def _write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def cmd_regress(args) -> int:
    try:
        registry = fixtures.FixtureRegistry(args.expected) if args.expected \
            else fixtures.default_registry()
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    out = _out_dir(args)
    budget = _parse_budget(args)
    suite = args.suite
    entries = []
    recorded = {}
    residual_rows = []
    if suite in ("full", "cq"):
        cq_entries, recorded = _regress_cq(registry, budget, args.msr_samples,
                                           run_msr=(suite == "full"))
        entries += cq_entries
    if suite in ("full", "solvers"):
        entries += _regress_solvers(registry, residual_rows)
        entries += _regress_safeguard_parity(registry)
    msr_rows = []
    if suite in ("full", "msr"):
        msr_entries, msr_rows = _regress_msr_curve(registry, budget.seed)
        entries += msr_entries
    if suite in ("full", "props"):
        entries += _regress_props(registry, args.prop_cases, budget.seed)
    if recorded:
        entries += _regress_meta(recorded)

    if residual_rows:
        _write_csv(out / "residuals.csv",
                   ("fixture", "solver", "k", "rho", "stationarity",
                    "feasibility", "complementarity", "dual_feasibility",
                    "multiplier_norm"), residual_rows)
    if msr_rows:
        _write_csv(out / "msr-ratio.csv",
                   ("fixture", "radius", "sample", "ratio"), msr_rows)

    failed = [e for e in entries if not e["ok"]]
    body = {
        "format": "nsdpkit-regress/1",
        "suite": suite,
        "seed": budget.seed,
        "entries": entries,
        "summary": {"total": len(entries), "failed": len(failed)},
    }
    canonical = json.dumps(body, sort_keys=True)
    digest = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
    report = dict(body)
    report["content_sha256"] = digest
    report["generated-at"] = datetime.now(timezone.utc).isoformat()
    _atomic_write(out / "report.json",
                  json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"suite {suite}: {len(entries)} entries, {len(failed)} failed")
    for e in failed:
        print(f"  FAIL {e['section']}/{e['fixture']}/{e['item']}: "
              f"{e['status']} (expected {e['expected']})")
    print(f"report content hash: {digest}")
    return EXIT_MISMATCH if failed else EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_source_args(sub):
    sub.add_argument("--fixture", help="built-in fixture id (see --list)")
    sub.add_argument("--problem", help="path to a problem file")
    sub.add_argument("--point", help="reference point as comma-separated floats")
    sub.add_argument("--x0", help="solver start as comma-separated floats")
    sub.add_argument("--out-dir", help="output directory "
                     "(default $NSDPKIT_OUT_DIR or ./nsdpkit-out)")
    sub.add_argument("--seed", type=int, default=None, help="sampling seed")
    sub.add_argument("--config", help="JSON file with solver overrides")
    sub.add_argument("--budget", help="comma-separated budget overrides, "
                     "e.g. n_directions=8,shrink_levels=10")
    sub.add_argument("--expected", help="alternate expected-verdict table file")
    sub.add_argument("--msr-samples", type=int, default=40,
                     help="samples per radius for the msr check")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nsdpkit",
        description="solvers and constraint-qualification diagnostics for "
                    "nonlinear semidefinite programming")
    subs = parser.add_subparsers(dest="command", required=True)

    solve = subs.add_parser("solve", help="run a solver, write trace + summary")
    _add_source_args(solve)
    solve.add_argument("--solver", choices=("penalty", "al", "sqp"),
                       default="al")
    solve.set_defaults(func=cmd_solve)

    diag = subs.add_parser("diagnose", help="run CQ checks, write verdicts")
    _add_source_args(diag)
    diag.add_argument("--checks", help="comma-separated check names "
                      f"(default {','.join(DEFAULT_CHECKS)}; also msr, "
                      "nlp-crcq, nlp-cpld)")
    diag.set_defaults(func=cmd_diagnose)

    reg = subs.add_parser("regress", help="run the regression matrix")
    _add_source_args(reg)
    reg.add_argument("--suite", choices=("full", "cq", "solvers", "msr",
                                         "props"), default="full")
    reg.add_argument("--prop-cases", type=int, default=500,
                     help="cases per property suite")
    reg.set_defaults(func=cmd_regress)

    lst = subs.add_parser("fixtures", help="list built-in fixtures")
    lst.set_defaults(func=cmd_fixtures)
    return parser


def cmd_fixtures(args) -> int:
    for fix in sorted(fixtures.default_registry(), key=lambda f: f.fixture_id):
        print(f"{fix.fixture_id:18s} n={fix.problem.n} m={fix.problem.m}  "
              f"{fix.description.splitlines()[0]}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
