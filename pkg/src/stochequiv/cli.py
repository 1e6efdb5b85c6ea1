"""Command-line interface.

Exit codes: 0 when the verdict is true (or the command succeeded), 1 when it
is false or inconclusive, 2 on malformed input or any other error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .documents import (
    DocumentError,
    load_boxes,
    load_inputs,
    load_matrix,
    load_relation,
    load_system,
    save_relation,
    save_system,
)
from .equivalence import (
    check_bisimulation,
    check_external_equivalence,
    check_linear_equivalence,
    check_same_realization,
    derive_transformation,
    maximal_external_relation,
)
from .montecarlo import (
    SimulationConfig,
    check_bisim_condition_empirical,
    compare_output_laws,
    empirical_moments,
    simulate,
    support_distance,
)
from .numlin import DEFAULT_TOL, Tolerance
from .reduction import minimal_bisim, minimal_external
from .sysmodel import conditional_moments

EXIT_TRUE, EXIT_FALSE, EXIT_ERROR = 0, 1, 2

ENV_TOL = {
    "rank_rel": "STOCHEQUIV_RANK_TOL",
    "eq_abs": "STOCHEQUIV_EQ_ABS",
    "eq_rel": "STOCHEQUIV_EQ_REL",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage already; keep messages on stderr
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def tolerance_from(args) -> Tolerance:
    vals = {}
    for field, env in ENV_TOL.items():
        flag = getattr(args, field, None)
        if flag is not None:
            vals[field] = flag
        elif os.environ.get(env):
            try:
                vals[field] = float(os.environ[env])
            except ValueError:
                raise UsageError(f"environment variable {env} is not a number")
    base = DEFAULT_TOL.as_dict()
    base.update(vals)
    return Tolerance(**base)


def _vector_arg(text: Optional[str], n: int, label: str) -> np.ndarray:
    if text is None:
        return np.zeros(n)
    try:
        v = np.array([float(s) for s in text.split(",") if s.strip()], dtype=float)
    except ValueError:
        raise UsageError(f"{label} must be a comma-separated list of numbers")
    if v.size != n:
        raise UsageError(f"{label} has {v.size} entries, expected {n}")
    return v


def _emit(args, payload: dict, text: str) -> None:
    if args.format == "json":
        print(json.dumps(payload, indent=2, default=float))
    else:
        print(text)


# -- commands ------------------------------------------------------------------


def cmd_check(args) -> int:
    tol = tolerance_from(args)
    s1, s2 = load_system(args.sys1), load_system(args.sys2)
    rel = load_relation(args.relation) if args.relation else None
    if args.kind == "lin":
        if args.transform:
            T = load_matrix(args.transform, "T")
        elif rel is not None:
            T = derive_transformation(rel, tol)
        else:
            raise UsageError("check lin needs --transform or --relation")
        rep = check_linear_equivalence(s1, s2, T, tol)
    elif args.kind == "ext":
        rep = check_external_equivalence(s1, s2, rel, tol)
    elif args.kind == "bisim":
        if rel is None:
            raise UsageError("check bisim needs --relation")
        rep = check_bisimulation(s1, s2, rel, tol)
    else:
        rep = check_same_realization(s1, s2, tol)
    _emit(args, rep.to_dict(), rep.to_text())
    return EXIT_TRUE if rep.verdict is True else EXIT_FALSE


def cmd_maximal_relation(args) -> int:
    tol = tolerance_from(args)
    s1, s2 = load_system(args.sys1), load_system(args.sys2)
    rel = maximal_external_relation(s1, s2, tol)
    save_relation(rel, args.output, name="maximal-external")
    _emit(args, {"output": str(args.output), "rows": rel.rows, "n1": rel.n1, "n2": rel.n2,
                 "tolerance": tol.as_dict()},
          f"wrote {args.output} ({rel.rows} rows, n1={rel.n1}, n2={rel.n2})")
    return EXIT_TRUE


def cmd_reduce(args) -> int:
    tol = tolerance_from(args)
    s = load_system(args.sys)
    res = minimal_external(s, tol) if args.kind == "ext" else minimal_bisim(s, tol)
    out = Path(args.output)
    rel_out = Path(args.relation_output) if args.relation_output else out.with_suffix(".relation.json")
    save_system(res.system, out)
    save_relation(res.link, rel_out, name="reduced-to-original")
    cert = res.certificate
    payload = {
        "kind": args.kind, "original_dim": s.n, "reduced_dim": res.system.n,
        "system": str(out), "relation": str(rel_out),
        "certificate": {"route": cert.route, "maximal": cert.maximal, "detail": cert.detail},
        "tolerance": tol.as_dict(),
    }
    text = "\n".join([
        f"reduce {args.kind}: {s.n} -> {res.system.n}",
        f"  certificate: {cert.route} (minimal: {'yes' if cert.maximal else 'not guaranteed'}); {cert.detail}",
        f"  wrote {out} and {rel_out}",
    ])
    _emit(args, payload, text)
    return EXIT_TRUE


def cmd_simulate(args) -> int:
    tol = tolerance_from(args)
    s = load_system(args.sys)
    x0 = _vector_arg(args.x0, s.n, "--x0")
    u = load_inputs(args.inputs) if args.inputs else None
    cfg = SimulationConfig(args.seed, args.trajectories, args.horizon, workers=args.workers)
    ens = simulate(s, x0, u, cfg)
    Path(args.output).write_text(ens.to_text(), encoding="utf-8")

    mom = conditional_moments(s, x0, u, horizon=args.horizon)
    summary = {"output": str(args.output), "trajectories": cfg.trajectories, "horizon": cfg.horizon,
               "seed": cfg.seed, "tolerance": tol.as_dict()}
    if cfg.trajectories >= 2:
        emp = empirical_moments(ens)
        diag = np.arange(cfg.horizon + 1)
        summary["max_mean_deviation"] = float(np.abs(emp.means - mom.output_means).max(initial=0.0))
        summary["max_cov_deviation"] = float(np.abs(emp.covs - mom.output_covs[diag, diag]).max(initial=0.0))
    summary["max_support_distance"] = float(support_distance(ens, s, x0, u, tol).max(initial=0.0))
    text = "\n".join(f"{k}: {v}" for k, v in summary.items() if k != "tolerance")
    _emit(args, summary, text)
    return EXIT_TRUE


def cmd_validate(args) -> int:
    tol = tolerance_from(args)
    s1, s2 = load_system(args.sys1), load_system(args.sys2)
    rel = load_relation(args.relation)
    x01 = _vector_arg(args.x0_1, s1.n, "--x0-1")
    x02 = _vector_arg(args.x0_2, s2.n, "--x0-2")
    if not rel.contains(x01, x02, tol):
        raise UsageError("initial states are not related")
    u = load_inputs(args.inputs) if args.inputs else None
    cfg = SimulationConfig(args.seed, args.trajectories, args.horizon, workers=args.workers)
    law = compare_output_laws(s1, s2, (x01, x02), u, cfg)
    boxes = []
    for t, cond, box in (load_boxes(args.boxes) if args.boxes else []):
        rep = check_bisim_condition_empirical(s1, s2, rel, (x01, x02), u, t, box, cfg, condition=cond, tol=tol)
        boxes.append(rep)
    ok = law.passed and all(b.passed for b in boxes)
    payload = {"passed": ok, "output_law": law.to_dict(), "boxes": [b.to_dict() for b in boxes],
               "tolerance": tol.as_dict()}
    lines = [f"validate: {'pass' if ok else 'FAIL'}",
             f"  output law: {'pass' if law.passed else 'FAIL'} (max z {law.max_z:.2f} at {law.worst[0]} t={law.worst[1]})"]
    for b in boxes:
        lines.append(f"  box t={b.t} ({b.condition}): {'pass' if b.passed else 'FAIL'} "
                     f"p_left={b.p_left:.5f} p_right={b.p_right:.5f} z={b.z:.2f}")
    _emit(args, payload, "\n".join(lines))
    return EXIT_TRUE if ok else EXIT_FALSE


# -- parser ----------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--rank-tol", dest="rank_rel", type=float, default=None,
                   help="relative singular-value threshold for ranks")
    p.add_argument("--eq-abs", dest="eq_abs", type=float, default=None, help="absolute equality tolerance")
    p.add_argument("--eq-rel", dest="eq_rel", type=float, default=None, help="relative equality tolerance")


def _sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--trajectories", "-N", type=int, default=100_000)
    p.add_argument("--horizon", "-T", type=int, default=10)
    p.add_argument("--inputs", help="input sequence document")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stochequiv", description="Equivalence checking and reduction of stochastic linear systems")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check", help="decide an equivalence between two systems")
    p.add_argument("kind", choices=("lin", "ext", "bisim", "realization"))
    p.add_argument("sys1")
    p.add_argument("sys2")
    p.add_argument("--relation", "-r")
    p.add_argument("--transform", "-t", help="document with field 'T' (for lin)")
    _common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("maximal-relation", help="write the largest output-preserving relation")
    p.add_argument("kind", choices=("ext",))
    p.add_argument("sys1")
    p.add_argument("sys2")
    p.add_argument("--output", "-o", required=True)
    _common(p)
    p.set_defaults(func=cmd_maximal_relation)

    p = sub.add_parser("reduce", help="minimal reduction of a system")
    p.add_argument("kind", choices=("ext", "bisim"))
    p.add_argument("sys")
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--relation-output")
    _common(p)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("simulate", help="sample trajectories to a text table")
    p.add_argument("sys")
    p.add_argument("--x0", help="comma-separated initial state (default zero)")
    p.add_argument("--output", "-o", required=True)
    _sim_flags(p)
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="Monte Carlo checks of an equivalence claim")
    p.add_argument("sys1")
    p.add_argument("sys2")
    p.add_argument("relation")
    p.add_argument("--x0-1", dest="x0_1")
    p.add_argument("--x0-2", dest="x0_2")
    p.add_argument("--boxes", help="box list document")
    _sim_flags(p)
    _common(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, DocumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (ValueError, ArithmeticError, AssertionError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
