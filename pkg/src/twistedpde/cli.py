"""Command-line entry point.

Exit codes: 0 success, 1 certificate failure, 2 usage or precondition
error, 3 numerical failure.  Errors print one line ``error: <kind>: <reason>``
on stderr.  JSON documents go to stdout; files are only written under
``--out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import ConvergenceError, preset_eq12, preset_prop13
from .concavity import (
    concavity_sweep,
    lemma31_sweep,
    random_prop24,
    sandwich_sweep,
)
from .concavity import PreconditionError as CertPrecondition
from .config import ConfigError, RunConfig
from .grid import ConvexDomain, DiscretizationError
from .oracle import (
    PreconditionError as OraclePrecondition,
    counterexample_roots,
    radial_coefficient,
    radial_polynomial,
    reduction_identity_check,
)
from .probe import holder_seminorm, refinement_study
from .solver import PreconditionError, SolveError, solve_dirichlet

IDENTITY_TOL = 1e-10
TABLE_COLUMNS = ("x", "y", "u", "residual", "min_eig_D2u", "hxx", "hxy", "hyy")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message.replace("\n", " "))


def _fraction(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _float_list(text: str) -> list:
    return [_fraction(t) for t in text.split(",") if t.strip()]


def _common(p, top: bool):
    kw = {} if top else {"default": argparse.SUPPRESS}
    p.add_argument("--dry-run", action="store_true", help="validate inputs only", **kw)
    p.add_argument("--threads", type=int, help="worker threads (default 1)",
                   **({"default": 1} if top else kw))
    p.add_argument("--out", type=Path, help="output directory", **kw)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="twistedpde", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    _common(p, True)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="Dirichlet solve from a config")
    s.add_argument("--config", type=Path, required=True)
    s.add_argument("--h", type=_fraction, help="grid spacing, overrides the config")
    _common(s, False)

    c = sub.add_parser("certify", help="sampled certificates")
    c.add_argument("kind", choices=["lemma31", "concavity", "sandwich"])
    c.add_argument("--preset", default="eq12", choices=["eq12", "prop13", "prop24"])
    c.add_argument("--n", type=int)
    c.add_argument("--samples", type=int, default=10_000)
    c.add_argument("--seed", type=int, default=0)
    _common(c, False)

    o = sub.add_parser("oracle", help="radial solutions and the counterexample")
    osub = o.add_subparsers(dest="oracle", required=True, parser_class=_Parser)
    r = osub.add_parser("radial")
    r.add_argument("--n", type=int, required=True)
    r.add_argument("--f", type=_fraction, required=True)
    _common(r, False)
    x = osub.add_parser("counterexample")
    x.add_argument("--n", type=int, required=True)
    x.add_argument("--c", type=_fraction, required=True)
    _common(x, False)

    pr = sub.add_parser("probe", help="Hölder seminorm diagnostics")
    psub = pr.add_subparsers(dest="probe", required=True, parser_class=_Parser)
    hh = psub.add_parser("holder")
    hh.add_argument("--field", type=Path, required=True, help="table written by solve")
    hh.add_argument("--alpha", type=_fraction, required=True)
    hh.add_argument("--ratio", type=_fraction, default=0.5)
    hh.add_argument("--pairs", type=int)
    hh.add_argument("--seed", type=int, default=0)
    _common(hh, False)
    rf = psub.add_parser("refine")
    rf.add_argument("--config", type=Path, required=True)
    rf.add_argument("--h", type=_float_list, default=[1 / 16, 1 / 32, 1 / 64])
    rf.add_argument("--alpha", type=_float_list, default=[0.25, 0.5, 0.75])
    rf.add_argument("--ratio", type=_fraction, default=0.5)
    _common(rf, False)

    i = sub.add_parser("identity", help="reduction identity sweep")
    i.add_argument("--n", type=int, required=True)
    i.add_argument("--samples", type=int, default=10_000)
    i.add_argument("--seed", type=int, default=0)
    _common(i, False)
    return p


# ---------------------------------------------------------------------------
# output helpers


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(args, name: str, doc: dict, table: str | None = None):
    sys.stdout.write(_dump(doc))
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / f"{name}.json").write_text(_dump(doc))
        if table is not None:
            (args.out / f"{name}.txt").write_text(table)


def _dry(args, what: dict) -> int:
    sys.stdout.write(_dump({"dry_run": True, "valid": True, **what}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# subcommands


def _solve_table(spec, u, f) -> str:
    grid = u.grid
    H = u.hessians()
    res = spec.value(H) - (f(grid.xy[:, 0], grid.xy[:, 1]) if callable(f) else f)
    eig = np.linalg.eigvalsh(H)[:, 0]
    cols = np.column_stack([grid.xy, u.nodal(), res, eig, H[:, 0, 0], H[:, 0, 1], H[:, 1, 1]])
    head = [f"# domain: {json.dumps(grid.domain.to_dict(), sort_keys=True)}",
            f"# h: {grid.h!r}",
            "# " + " ".join(TABLE_COLUMNS)]
    body = "\n".join(" ".join(f"{v:.17g}" for v in row) for row in cols)
    return "\n".join(head) + "\n" + body + "\n"


def cmd_solve(args) -> int:
    cfg = RunConfig.load(args.config)
    h = args.h if args.h is not None else cfg.h
    if h is None:
        raise UsageError("grid spacing missing: pass --h or set h in the config")
    if args.dry_run:
        return _dry(args, {"command": "solve", "h": h, "config": cfg.to_dict()})
    u, report = solve_dirichlet(cfg.operator, cfg.domain, cfg.f, cfg.phi, h,
                                cfg.continuity_steps,
                                allow_below_threshold=cfg.allow_below_threshold)
    doc = {"command": "solve", "config": cfg.to_dict(), "report": report.to_json()}
    _emit(args, "solve", doc, _solve_table(cfg.operator, u, cfg.f))
    return EXIT_OK if report.converged else EXIT_NUMERIC


def _lemma_spec(preset: str, n: int, seed: int):
    if preset == "eq12":
        return preset_eq12(n)
    if preset == "prop13":
        return preset_prop13(n)
    return random_prop24(n, seed)


def cmd_certify(args) -> int:
    if args.samples < 1:
        raise UsageError("--samples must be positive")
    n = args.n
    if n is not None and not 2 <= n <= 8:
        raise UsageError("--n must lie in 2..8")
    if args.dry_run:
        return _dry(args, {"command": "certify", "kind": args.kind})
    workers = max(1, args.threads)
    if args.kind == "lemma31":
        spec = _lemma_spec(args.preset, n or 2, args.seed)
        certs = [lemma31_sweep(spec, args.samples, args.seed, workers=workers)]
    elif args.kind == "concavity":
        n_values = (n,) if n is not None else (2, 3, 4)
        certs = concavity_sweep(n_values, args.samples, args.seed, workers=workers)
    else:
        certs = [sandwich_sweep(args.samples, args.seed)]
    docs = [c.to_json() for c in certs]
    passed = all(c.passed for c in certs)
    table = "name pass samples max_violation\n" + "".join(
        f"{d['name']} {d['pass']} {d['samples']} {d['max_violation']}\n" for d in docs)
    _emit(args, f"certify_{args.kind}",
          {"command": "certify", "kind": args.kind, "pass": passed, "certificates": docs},
          table)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_oracle(args) -> int:
    if not 2 <= args.n <= 8:
        raise UsageError("--n must lie in 2..8")
    if args.dry_run:
        return _dry(args, {"command": "oracle", "kind": args.oracle})
    if args.oracle == "radial":
        A = radial_coefficient(args.n, args.f)
        doc = {"command": "oracle", "kind": "radial", "n": args.n, "f": args.f, "A": A,
               "P_of_A": radial_polynomial(args.n, A),
               "profile": "A * (|x|^2 - 1) / 2"}
    else:
        rep = counterexample_roots(args.n, args.c)
        doc = {"command": "oracle", "kind": "counterexample", **rep.to_json()}
    _emit(args, f"oracle_{args.oracle}", doc)
    return EXIT_OK


def _read_field(path: Path):
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read field {path}: {exc.strerror}") from None
    domain = h = None
    for line in text.splitlines():
        if line.startswith("# domain:"):
            domain = ConvexDomain.from_dict(json.loads(line.split(":", 1)[1]))
        elif line.startswith("# h:"):
            h = float(line.split(":", 1)[1])
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] != len(TABLE_COLUMNS):
        raise ConfigError(f"field table needs {len(TABLE_COLUMNS)} columns")
    H = np.stack([np.stack([data[:, 5], data[:, 6]], -1),
                  np.stack([data[:, 6], data[:, 7]], -1)], -2)
    return data[:, :2], H, domain, h


def cmd_probe(args) -> int:
    if args.probe == "holder":
        if not 0 < args.alpha < 1:
            raise UsageError("--alpha must lie in (0, 1)")
        P, H, domain, h = _read_field(args.field)
        if args.dry_run:
            return _dry(args, {"command": "probe", "kind": "holder", "nodes": len(P)})
        if domain is not None:
            mask = domain.scaled(args.ratio).rho(P[:, 0], P[:, 1]) < 0
            region = {"kind": "scaled", "ratio": args.ratio, "domain": domain.to_dict()}
        else:
            mask = np.hypot(P[:, 0], P[:, 1]) < args.ratio
            region = {"kind": "ball", "radius": args.ratio}
        kw = {} if args.pairs is None else {"max_exhaustive": 0, "pairs": args.pairs}
        rep = holder_seminorm(H, args.alpha, mask, points=P, seed=args.seed, **kw)
        rep.region, rep.h = region, h
        doc = {"command": "probe", "kind": "holder", **rep.to_json()}
        table = "alpha seminorm pairs mode\n" + \
            f"{rep.alpha} {rep.seminorm:.17g} {rep.pairs} {rep.mode['kind']}\n"
        _emit(args, "probe_holder", doc, table)
        return EXIT_OK
    cfg = RunConfig.load(args.config)
    if any(not 0 < a < 1 for a in args.alpha):
        raise UsageError("--alpha values must lie in (0, 1)")
    if len(args.h) < 3 or any(b >= a for a, b in zip(args.h, args.h[1:])):
        raise UsageError("--h needs at least 3 strictly descending spacings")
    if args.dry_run:
        return _dry(args, {"command": "probe", "kind": "refine", "config": cfg.to_dict()})
    table = refinement_study(cfg.operator, cfg.domain, cfg.f, cfg.phi, args.alpha, args.h,
                             ratio=args.ratio, continuity_steps=cfg.continuity_steps,
                             allow_below_threshold=cfg.allow_below_threshold)
    doc = {"command": "probe", "kind": "refine", "config": cfg.to_dict(), **table.to_json()}
    _emit(args, "probe_refine", doc, table.format())
    return EXIT_OK


def cmd_identity(args) -> int:
    if not 2 <= args.n <= 8:
        raise UsageError("--n must lie in 2..8")
    if args.samples < 1:
        raise UsageError("--samples must be positive")
    if args.dry_run:
        return _dry(args, {"command": "identity", "n": args.n})
    rng = np.random.default_rng(args.seed)
    lam = rng.uniform(-2.0, 2.0, (args.samples, args.n))
    err = reduction_identity_check(lam)
    worst = float(np.max(err))
    passed = worst <= IDENTITY_TOL
    doc = {"command": "identity", "n": args.n, "samples": args.samples, "seed": args.seed,
           "max_error": worst, "tolerance": IDENTITY_TOL, "pass": passed}
    _emit(args, "identity", doc, f"n max_error pass\n{args.n} {worst:.6e} {passed}\n")
    return EXIT_OK if passed else EXIT_FAIL


COMMANDS = {"solve": cmd_solve, "certify": cmd_certify, "oracle": cmd_oracle,
            "probe": cmd_probe, "identity": cmd_identity}


def _fail(kind: str, reason, code: int) -> int:
    line = " ".join(str(reason).split())
    sys.stderr.write(f"error: {kind}: {line}\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        return _fail("usage", "--threads must be at least 1", EXIT_USAGE)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except ConfigError as exc:
        return _fail("config", exc, EXIT_USAGE)
    except (PreconditionError, CertPrecondition, OraclePrecondition,
            DiscretizationError) as exc:
        return _fail("precondition", exc, EXIT_USAGE)
    except (SolveError, ConvergenceError, FloatingPointError) as exc:
        return _fail("numerical", exc, EXIT_NUMERIC)


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
