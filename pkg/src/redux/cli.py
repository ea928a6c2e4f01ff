"""Command-line entry point.

Every subcommand reads one optional JSON config (``--config``) whose fields may
be overridden by flags. Exit codes: 0 success, 2 configuration error,
3 numerical failure, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .deim import deim_solve, stencil_size
from .errors import ConfigurationError, ReduxError
from .fem import fe_solve, l2_norm, temperature
from .galerkin_rb import rb_solve, rel_error
from .hyper_reduction import hr_solve
from .model import ParameterVector
from .pipeline import (
    STAGES,
    PipelineConfig,
    Workspace,
    report_offline,
    report_projection_errors,
    run_pipeline,
    run_uq,
    sweep_and_report,
    write_csv,
)

# flag name -> config field
OVERRIDES = {
    "n_angular": int,
    "n_radial": int,
    "hole_radius": float,
    "half_side": float,
    "grid_points": int,
    "m": int,
    "deim_modes": int,
    "hr_layers": int,
    "eps_max": float,
    "max_iter": int,
    "seed": int,
    "n_samples": int,
    "k_max": int,
    "out_dir": str,
    "threads": int,
}
ALIASES = {"deim_modes": ["--modes"], "hr_layers": ["--layers"], "out_dir": ["-o", "--out"]}


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("-c", "--config", help="JSON file with PipelineConfig fields")
    p.add_argument("-v", "--verbose", action="count", default=0)
    g = p.add_argument_group("config overrides")
    for name, typ in OVERRIDES.items():
        flags = ALIASES.get(name, []) + ["--" + name.replace("_", "-")]
        g.add_argument(*flags, dest=name, type=typ, default=None)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="redux", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"redux {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_)

    add("mesh", "generate and store the mesh")
    add("snapshots", "collect FE snapshots and the residual training set")
    add("pod", "build the POD basis and the projection-error table")
    add("deim-offline", "collateral basis and magic points (--modes M)")
    add("hr-offline", "reduced integration domain (--layers L)")
    s = add("solve", "solve one parameter with one method")
    s.add_argument("method", choices=["fe", "rb", "deim", "hr"])
    s.add_argument("--param", required=True, help="gx,gy,c or gx,gy,c,mu0,mu1")
    s.add_argument("--compare", action="store_true", help="also report the error against FE")
    s.add_argument("--output", help="write the nodal temperature to this CSV")
    s = add("sweep", "online sweep over test case A or B")
    s.add_argument("case", choices=["A", "B"])
    add("uq", "Monte Carlo moments and moment errors")
    add("report", "projection errors, sampling-set sizes and geometry")
    s = add("run", "the whole pipeline")
    s.add_argument("--stages", nargs="+", choices=STAGES, default=list(STAGES))
    return parser


def load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_json(args.config) if args.config else PipelineConfig()
    return cfg.replace(**{k: getattr(args, k) for k in OVERRIDES})


def _solve(ws: Workspace, args) -> dict:
    cfg = ws.cfg
    p = ParameterVector.parse(args.param).check_domain()
    mesh = ws.mesh()
    out = {"method": args.method, "param": p.to_list()}
    if args.method == "fe":
        w, rep = fe_solve(mesh, p, cfg.eps_max, cfg.max_iter)
        u = temperature(mesh, w, p)
    else:
        basis = ws.basis(cfg.m)
        if args.method == "rb":
            st = rb_solve(basis, p, cfg.eps_max, cfg.max_iter)
        elif args.method == "deim":
            mp = ws.magic_points(cfg.deim_modes)
            st = deim_solve(basis, mp, p, cfg.eps_max, cfg.max_iter)
            out["M"], out["M_bar"] = stencil_size(mp, mesh)
        else:
            rid = ws.rid(cfg.hr_layers)
            st = hr_solve(basis, rid, p, cfg.eps_max, cfg.max_iter)
            out["l"], out["l_bar"] = rid.l, rid.l_bar
        rep, u = st.report, st.temperature()
        out["m"] = basis.m
    out.update(iterations=rep.iterations, final_increment_norm=rep.final_increment_norm,
               counters_per_iteration={k: v / rep.iterations for k, v in rep.counters.as_dict().items()},
               temperature_l2=l2_norm(mesh, u))
    if args.compare and args.method != "fe":
        w_fe, _ = fe_solve(mesh, p, cfg.eps_max, cfg.max_iter)
        out["delta"] = rel_error(mesh, u, temperature(mesh, w_fe, p))
    if args.output:
        write_csv(Path(args.output), ["node", "x", "y", "u"],
                  [(i, float(x), float(y), float(v)) for i, ((x, y), v) in enumerate(zip(mesh.nodes, u))])
    return out


def dispatch(args) -> object:
    cfg = load_config(args)
    ws = Workspace(cfg)
    cmd = args.command
    if cmd == "mesh":
        m = ws.mesh()
        return {"n_nodes": m.n_nodes, "n_el": m.n_el, "n": m.n, "gamma1": len(m.gamma1), "mesh_id": m.mesh_id}
    if cmd == "snapshots":
        s = ws.snapshots()
        return {"snapshots": s.s, "training_columns": ws.training_set().shape[1],
                "iterations": sum(s.iterations)}
    if cmd == "pod":
        return {"report": str(report_projection_errors(ws))}
    if cmd == "deim-offline":
        mp = ws.magic_points(cfg.deim_modes)
        M, M_bar = stencil_size(mp, ws.mesh())
        return {"M": M, "M_bar": M_bar, "stencil_elements": len(mp.stencil_elements)}
    if cmd == "hr-offline":
        rid = ws.rid(cfg.hr_layers)
        return {"layers": cfg.hr_layers, "l": rid.l, "l_bar": rid.l_bar, "elements": len(rid.elements)}
    if cmd == "solve":
        return _solve(ws, args)
    if cmd == "sweep":
        return {"reports": [str(p) for p in sweep_and_report(ws, args.case, keep_fields=args.case == "B")]}
    if cmd == "uq":
        return {"reports": [str(p) for p in run_uq(ws)]}
    if cmd == "report":
        return {"reports": [str(report_projection_errors(ws))] + [str(p) for p in report_offline(ws)]}
    if cmd == "run":
        return run_pipeline(cfg, args.stages)
    raise ConfigurationError(f"unknown command {cmd}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = dispatch(args)
    except ReduxError as exc:
        print(f"redux: error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
