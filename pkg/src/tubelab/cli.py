"""``tubelab`` command line: iv, gh, tube, collapse, strat, verdier, paper."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import metric, strat
from .euclid import TubeSamplePlan
from .experiments import EXPERIMENTS, run_experiment
from .mesh import TriMesh, icosphere, surface_intrinsic_volumes, torus_grid, tube_volume_experiment
from .polytope import Polytope, intrinsic_volumes_polytope
from .records import RunRecord, append_record, write_table

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _load_target(path: str):
    p = Path(path)
    if not p.exists():
        raise UsageError(f"no such file: {path}")
    if p.suffix.lower() == ".off":
        return TriMesh.from_off(p.read_text())
    data = json.loads(p.read_text())
    if "triangles" in data:
        return TriMesh.from_json(data)
    if "vertices" in data:
        return Polytope.from_json(data)
    raise UsageError(f"{path}: expected a polytope or mesh document")


def _mesh_source(text: str) -> TriMesh:
    """A mesh file, or a generator call such as ``icosphere(1,4)``."""
    if Path(text).exists():
        target = _load_target(text)
        if not isinstance(target, TriMesh):
            raise UsageError(f"{text} is not a mesh")
        return target
    name, _, args = text.partition("(")
    vals = [float(x) for x in args.rstrip(")").split(",") if x.strip()]
    if name == "icosphere":
        return icosphere(vals[0] if vals else 1.0, int(vals[1]) if len(vals) > 1 else 3)
    if name == "torus_grid":
        a, b, m, n = (vals + [1.0, 1.0, 8, 8][len(vals):])[:4]
        return torus_grid(a, b, int(m), int(n))
    raise UsageError(f"unknown mesh source {text!r}")


def _space_source(text: str, n_points: int, seed):
    if Path(text).exists():
        return metric.load_space(text)
    if seed is None:
        raise UsageError("sampling a model space needs --seed")
    return metric.sample_space(metric.parse_spec(text), n_points, seed)


def _need_seed(args):
    if args.seed is None:
        raise UsageError(f"'{args.command}' needs --seed (or 'seed' in the --config file)")
    return args.seed


def cmd_iv(args, record: RunRecord):
    target = _load_target(args.target)
    if isinstance(target, TriMesh):
        v = surface_intrinsic_volumes(target)
    elif args.method == "mc":
        v = intrinsic_volumes_polytope(target, "mc", eps=args.eps_max or 0.5,
                                       samples=args.samples or 10**6, seed=_need_seed(args))
    else:
        v = intrinsic_volumes_polytope(target, "exact")
    record.outputs["intrinsic_volumes"] = v.to_dict()
    print("V = (" + ", ".join(f"{x:.12g}" for x in v) + ")")
    if v.std_errors:
        print("std errors = (" + ", ".join(f"{x:.3g}" for x in v.std_errors) + ")")
    return True


def cmd_gh(args, record: RunRecord):
    A = _space_source(args.a, args.points, args.seed)
    B = _space_source(args.b, args.points, None if args.seed is None else args.seed + 1)
    if args.mode == "exact":
        d = metric.gh_exact(A, B)
        record.outputs["gh_exact"] = d
        print(f"gh_exact = {d:.12g}")
        return True
    seed = _need_seed(args)
    lo = metric.gh_lower(A, B)
    hi = metric.gh_upper(A, B, iterations=args.iterations, restarts=args.restarts, seed=seed)
    record.outputs.update(gh_lower=lo, gh_upper=hi)
    record.verdicts["lower_le_upper"] = lo <= hi + 1e-12
    print(f"gh_lower = {lo:.12g}\ngh_upper = {hi:.12g}")
    return lo <= hi + 1e-12


def cmd_tube(args, record: RunRecord):
    mesh = _mesh_source(args.mesh)
    if args.pad:
        mesh = mesh.padded(args.pad)
    plan = TubeSamplePlan.log_spaced(args.eps_min or 0.05, args.eps_max or 0.3, args.count,
                                     args.samples or 10**6, _need_seed(args))
    exp = tube_volume_experiment(mesh, plan)
    v = exp.volumes
    record.outputs.update(intrinsic_volumes=v.to_dict(), residual=exp.residual,
                          tube_data=[list(r) for r in exp.data])
    print("V = (" + ", ".join(f"{x:.6g}" for x in v) + ")")
    print("std errors = (" + ", ".join(f"{x:.3g}" for x in v.std_errors) + ")")
    return True


def cmd_collapse(args, record: RunRecord):
    seed = _need_seed(args)
    eps = [float(x) for x in args.eps.split(",")]
    template = args.family
    if "{eps}" not in template:
        raise UsageError("--family must contain '{eps}', e.g. 'sphere({eps})'")
    family = lambda e: metric.parse_spec(template.replace("{eps}", repr(e)))
    table = metric.collapse_run(family, eps, metric.parse_spec(args.limit), args.points, seed,
                                iterations=args.iterations, restarts=args.restarts)
    rows = [dict(eps=r.eps, gh_upper=r.gh_upper, slack=r.slack, chi=r.chi,
                 limit_chi=r.limit_chi, flag=r.flag) for r in table.rows]
    record.outputs.update(rows=rows, discontinuity=table.discontinuity)
    sys.stdout.write(table.to_csv())
    if args.out:
        write_table(rows, Path(args.out) / "collapse.csv")
    return True


def cmd_strat(args, record: RunRecord):
    if args.map:
        if args.map not in strat.BUNDLED_MAPS:
            raise UsageError(f"unknown bundled map {args.map!r}; choose from {sorted(strat.BUNDLED_MAPS)}")
        f = strat.BUNDLED_MAPS[args.map]()
        F = strat.ConstructibleFunction.constant(f.source, 1)
        if args.file:
            doc = strat.load_strat(args.file)
            F = doc.get("F", F)
    else:
        if not args.file:
            raise UsageError("strat needs a JSON file or --map")
        doc = strat.load_strat(args.file)
        f = doc.get("map") or strat.identity_map(doc["poset"])
        F = doc.get("F") or strat.ConstructibleFunction.constant(f.source, 1)
    G = strat.euler_pushforward(f, F)
    out = {"F": F.values, "coefficients": strat.to_coeffs(F), "pushforward": G.values}
    record.outputs.update(out)
    print(json.dumps(out, indent=2))
    return True


def cmd_verdier(args, record: RunRecord):
    betas = [int(x) for x in args.betas.split(",") if x.strip()]
    res = strat.verdier_check(args.alpha, betas, args.parity)
    record.outputs.update(alpha=args.alpha, betas=betas, holds=res.holds, branch=res.branch)
    record.verdicts["constraint"] = res.holds
    print(f"{'holds' if res.holds else 'violated'}" + (f" ({res.branch})" if res.branch else ""))
    return res.holds


def cmd_paper(args, record: RunRecord):
    seed = _need_seed(args)
    names = sorted(EXPERIMENTS) if args.experiment == "all" else [args.experiment]
    if any(n not in EXPERIMENTS for n in names):
        raise UsageError(f"unknown experiment {args.experiment!r}; choose from {sorted(EXPERIMENTS)} or 'all'")
    ok = True
    for name in names:
        opts = {}
        if name == "weyl-independence":
            opts = dict(samples=args.samples, eps_min=args.eps_min, eps_max=args.eps_max)
        res = run_experiment(name, seed, **opts)
        ok &= res.passed
        record.outputs[name] = {"rows": res.rows, "seconds": res.seconds, **res.outputs}
        for k, v in res.verdicts.items():
            record.verdicts[f"{name}:{k}"] = bool(v)
            print(f"{'PASS' if v else 'FAIL'}  {name}: {k}")
        print(f"{'PASS' if res.passed else 'FAIL'}  {name} ({res.seconds:.1f} s)")
        if args.out:
            write_table(res.rows, Path(args.out) / f"{name}.csv")
    return ok


COMMANDS = {"iv": cmd_iv, "gh": cmd_gh, "tube": cmd_tube, "collapse": cmd_collapse,
            "strat": cmd_strat, "verdier": cmd_verdier, "paper": cmd_paper}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with defaults for the flags below")
    common.add_argument("--seed", type=int)
    common.add_argument("--samples", type=int)
    common.add_argument("--eps-min", type=float)
    common.add_argument("--eps-max", type=float)
    common.add_argument("--out", help="directory for runs.jsonl and CSV tables")

    parser = argparse.ArgumentParser(prog="tubelab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("iv", parents=[common], help="intrinsic volumes of a polytope or mesh file")
    p.add_argument("target")
    p.add_argument("--method", choices=["exact", "mc"], default="exact")

    p = sub.add_parser("gh", parents=[common], help="Gromov-Hausdorff distance of two spaces")
    p.add_argument("a", help="metric-space JSON file or model spec such as 'sphere(1)'")
    p.add_argument("b")
    p.add_argument("--mode", choices=["exact", "bounds"], default="bounds")
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--restarts", type=int, default=8)

    p = sub.add_parser("tube", parents=[common], help="Monte-Carlo tube fit of a mesh")
    p.add_argument("mesh", help="mesh file or generator such as 'icosphere(1,4)'")
    p.add_argument("--count", type=int, default=6, help="number of eps values")
    p.add_argument("--pad", type=int, default=0, help="extra ambient dimensions")

    p = sub.add_parser("collapse", parents=[common], help="GH collapse table for a family of spaces")
    p.add_argument("--family", required=True, help="spec template with {eps}, e.g. 'sphere({eps})'")
    p.add_argument("--eps", required=True, help="comma-separated eps values")
    p.add_argument("--limit", default="point")
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--restarts", type=int, default=2)

    p = sub.add_parser("strat", parents=[common], help="Euler push-forward of a constructible function")
    p.add_argument("file", nargs="?")
    p.add_argument("--map", help=f"bundled map model: {', '.join(sorted(strat.BUNDLED_MAPS))}")

    p = sub.add_parser("verdier", parents=[common], help="boundary constraint on (alpha; betas)")
    p.add_argument("--alpha", type=int, required=True)
    p.add_argument("--betas", required=True, help="comma-separated integers")
    p.add_argument("--parity", type=int, choices=[0, 1])

    p = sub.add_parser("paper", parents=[common], help="run a reproduction experiment")
    p.add_argument("experiment", help=f"one of {', '.join(sorted(EXPERIMENTS))}, or 'all'")
    return parser


def _apply_config(args, parser):
    if not args.config:
        return
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config: {exc}")
    for key, value in cfg.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            parser.error(f"unknown config key {key!r}")
        if getattr(args, attr) is None:
            setattr(args, attr, value)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _apply_config(args, parser)
    config = {k: v for k, v in vars(args).items() if k not in ("command",)}
    record = RunRecord(args.command, config, args.seed)
    try:
        ok = COMMANDS[args.command](args, record)
    except UsageError as exc:
        print(f"tubelab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, OSError) as exc:
        print(f"tubelab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    record.finish()
    if args.out:
        append_record(record, args.out)
    return EXIT_PASS if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
