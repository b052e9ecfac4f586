"""Command-line entry point.

Exit codes: 0 on success, 1 on domain errors (JSON error body on stderr),
2 on usage errors.  JSON goes to stdout; ``--out DIR`` also writes CSV
tables, a manifest and, with ``--plot``, PNG figures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .constants import compute_c_t_B, compute_Phi_B, l1_radius, make_context
from .errors import BolzaError
from .goldens import format_table, run_goldens
from .growth import check_G, check_H, check_M, check_superlinearity
from .lagrangian import ConditionSData, resolve_model
from .minimize import MinimizeConfig, lavrentiev_probe, solve
from .problems import load_problem, terminal_to_dict
from .reparam import nice_pair
from .report import OutputDir, RunManifest, dumps, lattice_csv, pair_csv, phi_csv, plot_lattice, plot_reparam
from .trajectory import pair_from_dict, pair_to_dict


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _read_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from None


def _model_arg(args):
    if getattr(args, "model_file", None):
        return resolve_model(_read_json(args.model_file))
    return resolve_model(args.model)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bolza-reparam", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    c = sub.add_parser("constants", help="c_t(B), R and Phi(B)")
    c.add_argument("--B", type=float, required=True)
    c.add_argument("--alpha", type=float, default=None)
    c.add_argument("--d", type=float, default=None)
    c.add_argument("--T", type=float, default=1.0)
    c.add_argument("--t", type=float, default=0.0)
    c.add_argument("--kappa", type=float, default=0.0)
    c.add_argument("--A", type=float, default=0.0)
    c.add_argument("--gamma", type=float, default=0.0, help="constant gamma in the bound on the time derivative")
    c.add_argument("--model", default=None, help="take alpha, d and the time-derivative bound from a built-in")

    g = sub.add_parser("check-growth", help="verdict for a growth condition")
    g.add_argument("--model", default="minimal_length")
    g.add_argument("--model-file", default=None)
    g.add_argument("--condition", choices=("superlinear", "G", "H", "M"), required=True)
    g.add_argument("--B", type=float, default=1.0)
    g.add_argument("--T", type=float, default=1.0)
    g.add_argument("--delta", type=float, default=0.0)
    g.add_argument("--delta-star", type=float, default=0.0)
    g.add_argument("--x-star", type=_floats, default=None)
    g.add_argument("--K", type=float, default=None)

    r = sub.add_parser("reparam", help="bounded-control reparametrization of a pair")
    r.add_argument("--problem", required=True)
    r.add_argument("--pair", required=True)
    r.add_argument("--config", default=None)
    r.add_argument("--eta", type=float, default=None, help="slack under the M condition (overrides the config)")
    _out_flags(r)

    for verb, text in (("minimize", "direct minimization on one grid"), ("lavrentiev", "gap probe over a lattice")):
        m = sub.add_parser(verb, help=text)
        m.add_argument("--problem", required=True)
        m.add_argument("--config", default=None)
        if verb == "minimize":
            m.add_argument("--cells", type=int, default=None)
            m.add_argument("--bound", type=float, default=None)
        _out_flags(m)

    gd = sub.add_parser("goldens", help="golden-value table")
    gd.add_argument("--only", default=None, help="substring filter on check names")
    return p


def _out_flags(p):
    p.add_argument("--out", default=None, help="directory for CSV, manifest and figures")
    p.add_argument("--plot", action="store_true", help="also render PNG figures (needs matplotlib)")


def _context_for(model, problem, cfg: dict):
    return make_context(model, T=problem.T, B=float(cfg.get("B", 1.0)), delta=float(cfg.get("delta", problem.t)),
                        delta_star=float(cfg.get("delta_star", 0.0)),
                        x_star=cfg.get("x_star", problem.x.tolist()), theta=problem.theta,
                        K=cfg.get("K"))


def cmd_constants(args) -> dict:
    alpha, d, cs = args.alpha, args.d, ConditionSData.constant(args.kappa, args.A, args.gamma)
    if args.model:
        model = resolve_model(args.model)
        alpha = model.linear_growth[0] if alpha is None else alpha
        d = model.linear_growth[1] if d is None else d
        cs = model.condition_s
    alpha = 1.0 if alpha is None else alpha
    d = 0.0 if d is None else d
    return {
        "B": args.B, "alpha": alpha, "d": d, "T": args.T, "t": args.t,
        "c_t_B": compute_c_t_B(args.t, args.B, alpha, d, args.T),
        "R": l1_radius(args.B, alpha, d, args.T),
        "Phi_B": compute_Phi_B(cs, args.B, alpha, d, args.T),
    }


def cmd_check_growth(args) -> dict:
    model = _model_arg(args)
    x_star = args.x_star if args.x_star is not None else [0.0] * (model.n or model.m)
    ctx = make_context(model, T=args.T, B=args.B, delta=args.delta, delta_star=args.delta_star, x_star=x_star,
                       K=args.K)
    if args.condition == "superlinear":
        cert = check_superlinearity(model, ctx.K, T=args.T)
    elif args.condition == "G":
        cert = check_G(model, ctx.K, T=args.T)
    elif args.condition == "H":
        cert = check_H(model, ctx)
    else:
        cert = check_M(model, ctx)
    return {"model": model.name, "context": ctx.to_dict(), "certificate": cert.to_dict()}


def cmd_reparam(args, out: OutputDir | None) -> dict:
    problem = load_problem(args.problem)
    cfg = _read_json(args.config) if args.config else {}
    pair = pair_from_dict(problem, _read_json(args.pair))
    model = problem.lagrangian
    ctx = _context_for(model, problem, cfg)
    condition = cfg.get("condition", "H")
    cert = check_M(model, ctx) if condition == "M" else check_H(model, ctx)
    overrides = dict(cfg.get("overrides", {}))
    if "Sigma" in overrides:
        overrides["Sigma"] = [tuple(iv) for iv in overrides["Sigma"]]
    eta = args.eta if args.eta is not None else float(cfg.get("eta", 0.0))
    new, rc = nice_pair(pair, ctx, cert, eta, overrides=overrides)
    if out is not None:
        out.write_text("pair_out.json", dumps(pair_to_dict(new)))
        out.write_text("certificate.json", dumps(rc))
        out.write_text("pair_in.csv", pair_csv(pair))
        out.write_text("pair_out.csv", pair_csv(new))
        out.write_text("phi.csv", phi_csv(rc.cov))
        if args.plot and plot_reparam(pair, new, rc.cov, os.path.join(out.path, "reparam.png")):
            out.manifest.outputs.append("reparam.png")
    return {"certificate": rc.to_dict(), "growth": cert.to_dict(), "pair": pair_to_dict(new)}


def _minimize_config(args) -> MinimizeConfig:
    return MinimizeConfig.from_dict(_read_json(args.config)) if args.config else MinimizeConfig()


def cmd_minimize(args, out: OutputDir | None) -> dict:
    problem = load_problem(args.problem)
    config = _minimize_config(args)
    cells = args.cells or config.grid_ladder[-1]
    bound = args.bound if args.bound is not None else config.control_bound_ladder[-1]
    res = solve(problem, cells, bound, config)
    if out is not None:
        out.write_text("pair.csv", pair_csv(res.pair))
    return {"cells": cells, "control_bound": bound, "cost": res.cost, "surrogate_cost": res.surrogate_cost,
            "terminal_cost": terminal_to_dict(problem.g), "pair": pair_to_dict(res.pair)}


def cmd_lavrentiev(args, out: OutputDir | None) -> dict:
    problem = load_problem(args.problem)
    report = lavrentiev_probe(problem, _minimize_config(args))
    if out is not None:
        out.write_text("lattice.csv", lattice_csv(report))
        if args.plot and plot_lattice(report, os.path.join(out.path, "lattice.png")):
            out.manifest.outputs.append("lattice.png")
    return report.to_dict()


def _inputs(args) -> list:
    return [getattr(args, k) for k in ("problem", "pair", "config", "model_file") if getattr(args, k, None)]


def _normalized(args) -> list:
    items = [args.verb]
    for k, v in sorted(vars(args).items()):
        if k in ("verb", "out") or v is None or v is False:
            continue
        items.append(f"--{k.replace('_', '-')}={v}")
    return items


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.verb == "goldens":
            results = run_goldens(args.only)
            print(format_table(results))
            failed = [r.name for r in results if not r.passed]
            if failed:
                print(dumps({"kind": "GoldenFailure", "message": "golden checks failed", "failed": failed}),
                      file=sys.stderr, end="")
                return 1
            return 0
        out = None
        if getattr(args, "out", None):
            manifest = RunManifest(_normalized(args))
            for path in _inputs(args):
                manifest.add_input(path)
            out = OutputDir(args.out, manifest)
        if args.verb == "constants":
            result = cmd_constants(args)
        elif args.verb == "check-growth":
            result = cmd_check_growth(args)
        else:
            result = {"reparam": cmd_reparam, "minimize": cmd_minimize, "lavrentiev": cmd_lavrentiev}[args.verb](args, out)
        text = dumps(result)
        if out is not None:
            out.write_text("result.json", text)
            out.finish()
        sys.stdout.write(text)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except BolzaError as exc:
        sys.stderr.write(dumps(exc.to_dict()))
        return 1
    except OSError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (KeyError, TypeError, ValueError) as exc:
        print(f"usage error: malformed input ({type(exc).__name__}: {exc})", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
