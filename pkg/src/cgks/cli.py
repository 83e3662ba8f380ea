"""Benchmark command line: run a case, drive a convergence study, emit meshes.

Configuration comes from an optional flat key=value file plus command-line
flags; flags win.  Exit codes: 0 success, 1 usage or configuration error,
2 numerical failure, 3 threshold failure in a convergence study.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import cases, output
from .errors import CgksError, ConfigError, NumericalError
from .gas import GasModel

USAGE_EXIT, NUMERICAL_EXIT, THRESHOLD_EXIT = 1, 2, 3

# every key a config file may set, with its parser
_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _parse_bool(text):
    try:
        return _BOOL[text.strip().lower()]
    except KeyError:
        raise ValueError(f"not a boolean: {text!r}") from None


CONFIG_KEYS = {
    "case": str,
    "h": float,
    "h_list": str,
    "cfl": float,
    "t_end": float,
    "mode": str,
    "detector": _parse_bool,
    "detector_c": float,
    "eps": float,
    "out": str,
    "cadence": int,
    "line_points": int,
    "min_order": float,
    "mach": float,
    "re": float,
    "refine": float,
    "gamma": float,
    "mu": float,
    "prandtl": float,
}

_CASE_PARAM_KEYS = {"mach", "re", "refine"}


@dataclasses.dataclass
class RunConfig:
    """Validated settings for one invocation."""

    case: str | None = None
    h: float | None = None
    h_list: str | None = None
    cfl: float = 0.35
    t_end: float | None = None
    mode: str | None = None
    detector: bool | None = None
    detector_c: float = 5.0
    eps: float = 1e-6
    out: str = "."
    cadence: int = 0
    line_points: int | None = None
    min_order: float = 0.0
    mach: float | None = None
    re: float | None = None
    refine: float | None = None
    gamma: float | None = None
    mu: float | None = None
    prandtl: float | None = None

    def validate(self):
        if self.case is None:
            raise ConfigError("no case given (flag --case or config key case=)")
        if self.h is not None and self.h <= 0.0:
            raise ConfigError("h must be positive")
        if not 0.0 < self.cfl <= 0.5:
            raise ConfigError("cfl must be in (0, 0.5]")
        if self.mode is not None and self.mode not in ("smooth", "characteristic"):
            raise ConfigError(f"unknown mode '{self.mode}'")
        if self.detector_c <= 0.0 or self.eps <= 0.0:
            raise ConfigError("detector_c and eps must be positive")
        if self.cadence < 0:
            raise ConfigError("cadence must be >= 0")
        return self


def parse_config_file(path):
    """Read a flat key=value file; '#' starts a comment, unknown keys error."""
    values = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected key=value, got {raw.strip()!r}")
            key, _, text = line.partition("=")
            key = key.strip()
            if key not in CONFIG_KEYS:
                raise ConfigError(f"{path}:{ln}: unknown key '{key}'")
            try:
                values[key] = CONFIG_KEYS[key](text.strip())
            except ValueError as exc:
                raise ConfigError(f"{path}:{ln}: bad value for {key}: {exc}") from None
    return values


def build_config(args):
    """Merge config file and CLI flags (flags win) into a RunConfig."""
    values = {}
    if getattr(args, "config", None):
        values.update(parse_config_file(args.config))
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return RunConfig(**values).validate()


def _case_from_config(cfg):
    params = {k: getattr(cfg, k) for k in _CASE_PARAM_KEYS if getattr(cfg, k) is not None}
    spec = cases.get_case(cfg.case, **params)
    overrides = {}
    if cfg.gamma is not None:
        overrides["gamma"] = cfg.gamma
    if cfg.mu is not None:
        overrides["mu"] = cfg.mu
    if cfg.prandtl is not None:
        overrides["prandtl"] = cfg.prandtl
    if overrides:
        spec = dataclasses.replace(
            spec, model=dataclasses.replace(spec.model, **overrides)
        )
    return spec


def _solver_for(spec, cfg, h):
    mesh = spec.mesh(h)
    return mesh, spec.solver(
        mesh,
        cfl=cfg.cfl,
        c_detect=cfg.detector_c,
        eps=cfg.eps,
        mode=cfg.mode,
        detector=cfg.detector,
    )


def _run_one(spec, cfg, h, write_outputs=True):
    mesh, sol = _solver_for(spec, cfg, h)
    t_end = spec.t_end if cfg.t_end is None else cfg.t_end
    tag = f"{spec.id}_h{h:g}"
    out_dir = output.ensure_dir(cfg.out)

    snaps = []
    if cfg.cadence:

        def callback(s, rep):
            if s.nstep % cfg.cadence == 0:
                p = os.path.join(out_dir, f"{tag}_{s.nstep:06d}.vtk")
                output.write_vtk(s, p)
                snaps.append(p)

    else:
        callback = None

    sol.run(t_end, callback=callback, log_every=max(cfg.cadence, 0))
    if write_outputs:
        output.write_vtk(sol, os.path.join(out_dir, f"{tag}.vtk"))
        if spec.line is not None:
            p0, p1, n_default = spec.line
            n = cfg.line_points or n_default
            pts, prim = cases.extract_line(sol, p0, p1, n)
            output.write_line_csv(pts, prim, os.path.join(out_dir, f"{tag}_line.csv"))
    return mesh, sol


def cmd_run(args):
    cfg = build_config(args)
    spec = _case_from_config(cfg)
    h = cfg.h if cfg.h is not None else spec.default_h
    mesh, sol = _run_one(spec, cfg, h)
    print(f"{spec.id}: {mesh.n_cells} cells, {sol.nstep} steps to t={sol.t:g}")
    return 0


def cmd_converge(args):
    cfg = build_config(args)
    if not cfg.h_list:
        raise ConfigError("converge needs --h-list a,b,c")
    try:
        hs = [float(tok) for tok in cfg.h_list.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad h-list: {exc}") from None
    if len(hs) < 1:
        raise ConfigError("empty h-list")
    if len(set(hs)) != len(hs):
        raise ConfigError("duplicate entries in h-list")

    spec = _case_from_config(cfg)
    if spec.exact is None:
        raise ConfigError(f"case '{spec.id}' has no exact solution to converge against")

    errors = []
    rows = []
    for h in hs:
        mesh, sol = _solver_for(spec, cfg, h)
        ref = sol._quad_averages(spec.exact)
        t_end = spec.t_end if cfg.t_end is None else cfg.t_end
        sol.run(t_end)
        l1, l2, linf = cases.error_norms(sol.w[:, 0], ref[:, 0], mesh)
        errors.append(linf)
        rows.append({"h": f"{h:g}", "L1": l1, "L2": l2, "Linf": linf, "order": ""})
        print(f"h={h:g}: Linf={linf:.6e}", flush=True)
    orders = cases.convergence_order(errors, hs) if len(hs) > 1 else []
    for i, o in enumerate(orders):
        rows[i + 1]["order"] = f"{o:.4f}"

    out_dir = output.ensure_dir(cfg.out)
    base = os.path.join(out_dir, f"{spec.id}_convergence")
    output.write_report(rows, base + ".txt", base + ".csv",
                        title=f"{spec.id} Linf(rho) convergence")
    if orders and orders[-1] < cfg.min_order:
        print(f"order {orders[-1]:.4f} below threshold {cfg.min_order}")
        return THRESHOLD_EXIT
    return 0


def cmd_mesh(args):
    cfg = build_config(args)
    spec = _case_from_config(cfg)
    h = cfg.h if cfg.h is not None else spec.default_h
    mesh = spec.mesh(h)
    if not args.mesh_out:
        raise ConfigError("mesh needs --out <path>")
    mesh.save(args.mesh_out)
    print(f"{spec.id}: wrote {mesh.n_cells} cells to {args.mesh_out}")
    return 0


def make_parser():
    ap = argparse.ArgumentParser(
        prog="cgks", description="compact gas-kinetic benchmark driver"
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, with_out=True):
        p.add_argument("--case", help="benchmark id, e.g. sod")
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--h", type=float, help="target mesh size")
        p.add_argument("--cfl", type=float)
        p.add_argument("--tend", dest="t_end", type=float)
        p.add_argument("--mode", choices=("smooth", "characteristic"))
        p.add_argument("--detector", type=_parse_bool)
        p.add_argument("--detector-c", dest="detector_c", type=float)
        p.add_argument("--eps", type=float)
        if with_out:
            p.add_argument("--out", help="output directory")
        p.add_argument("--mach", type=float, help="blunt body Mach number")
        p.add_argument("--re", type=float, help="cavity Reynolds number")

    run_p = sub.add_parser("run", help="run one case and write VTK/CSV outputs")
    common(run_p)
    run_p.add_argument("--cadence", type=int, help="write a snapshot every N steps")
    run_p.set_defaults(fn=cmd_run)

    conv_p = sub.add_parser("converge", help="mesh-refinement study")
    common(conv_p)
    conv_p.add_argument("--h-list", dest="h_list", help="comma separated mesh sizes")
    conv_p.add_argument("--min-order", dest="min_order", type=float)
    conv_p.set_defaults(fn=cmd_converge)

    mesh_p = sub.add_parser("mesh", help="generate and save a case mesh")
    common(mesh_p, with_out=False)
    mesh_p.add_argument("--out", dest="mesh_out", help="mesh file path")
    mesh_p.set_defaults(fn=cmd_mesh)
    return ap


def main(argv=None):
    ap = make_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return USAGE_EXIT if exc.code else 0
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_EXIT
    except CgksError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return NUMERICAL_EXIT


if __name__ == "__main__":
    sys.exit(main())
