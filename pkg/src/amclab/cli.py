"""Batch front end: TOML experiment configs, CSV/JSON/SVG emission.

Subcommands:

    check-g         print the condition report for a potential G
    solve           run the coupled second boundary value problem
    solve-ma        Monge-Ampere solve det D^2 u = g
    solve-lma       linearized solve U^ij w_ij = f with U from a u.csv
    verify-radial   closed-form radial family: operator check + blow-up table
    legendre-check  dual-equation residual and dual functional
    convergence     manufactured-solution sweep over grid levels
    report          render a report.json as text and CSV

Field CSVs use the schema node_id,x,y,value aligned with the grid export;
identical configs produce byte-identical CSVs (fixed node order and float
formatting, no timestamps).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:              # python < 3.11
    import tomli as tomllib

from . import discrete_ops as dops
from .discrete_ops import ScalarField, differentiate
from .errors import AmcError, ConfigError, ConvergenceError
from .geometry import ConvexDomain, build_grid
from .gfun import GFunction, check_conditions
from .legendre import dual_equation_residual, dual_functional, legendre_transform
from .lma_solver import solve_lma
from .ma_solver import MAConfig, solve_ma
from .manufactured import ManufacturedCase
from .radial import blowup_profile, make_case, radial_operator
from .sbvp import SBVPProblem, solve_sbvp

_EXPR_ENV = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "tanh": np.tanh, "arctan": np.arctan,
    "pi": np.pi, "e": np.e, "min": np.minimum, "max": np.maximum,
}


def _compile_expr(expr, where):
    try:
        return compile(expr, f"<{where}>", "eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression for {where}: {expr!r} ({exc})")


def make_expr_sampler(expr, where="field"):
    code = _compile_expr(str(expr), where)

    def sampler(x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        env = dict(_EXPR_ENV, x=x, y=y, r=np.hypot(x, y))
        out = eval(code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(out, float), x.shape).copy()

    return sampler


def write_field_csv(path, dd, values):
    pts = dd.pts_all
    with open(path, "w") as fh:
        fh.write("node_id,x,y,value\n")
        for i in range(dd.n_total):
            fh.write(f"{i},{pts[i,0]:.17g},{pts[i,1]:.17g},{values[i]:.17g}\n")


def read_field_csv(path, dd):
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    if data.shape[0] != dd.n_total:
        raise ConfigError(
            f"{path} holds {data.shape[0]} nodes; the grid has {dd.n_total}")
    if np.max(np.abs(data[:, 1:3] - dd.pts_all)) > 1e-9:
        raise ConfigError(f"{path} node positions do not match the grid")
    return data[:, 3]


def write_grid_csv(path, dd):
    with open(path, "w") as fh:
        fh.write("node_id,x,y,kind,nu_x,nu_y,K\n")
        for i in range(dd.n_int):
            p = dd.pts_int[i]
            fh.write(f"{i},{p[0]:.17g},{p[1]:.17g},interior,,,\n")
        for k in range(dd.n_bnd):
            p = dd.pts_bnd[k]
            nu = dd.bnd_nu[k]
            fh.write(f"{dd.n_int+k},{p[0]:.17g},{p[1]:.17g},boundary,"
                     f"{nu[0]:.17g},{nu[1]:.17g},{dd.bnd_K[k]:.17g}\n")


def write_report_json(path, payload):
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(f"not serializable: {type(o)}")

    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=default)
        fh.write("\n")


def write_contour_svg(path, dd, values, levels=10):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 5))
    vals = np.asarray(values)[: dd.n_int]
    lv = np.linspace(vals.min(), vals.max(), levels + 2)[1:-1]
    if lv[0] == lv[-1]:
        lv = None
    ax.tricontour(dd.pts_int[:, 0], dd.pts_int[:, 1], vals, levels=lv)
    ax.set_aspect("equal")
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# -- config loading ----------------------------------------------------------


def load_config(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file {path} does not exist")
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"bad TOML in {path}: {exc}")


def domain_from_config(cfg):
    try:
        blk = cfg["domain"]
        kind = blk["kind"]
        if kind == "disk":
            dom = ConvexDomain.disk(float(blk.get("R", 1.0)))
        elif kind == "ellipse":
            dom = ConvexDomain.ellipse(float(blk["a"]), float(blk["b"]))
        else:
            raise ConfigError(f"unknown domain kind {kind!r}")
        return dom, float(blk["h"])
    except KeyError as exc:
        raise ConfigError(f"domain block is missing {exc}")


def gfun_from_config(cfg, base_dir="."):
    blk = cfg.get("G", {})
    kind = blk.get("kind", "log")
    n = int(blk.get("n", 2))
    if kind == "power":
        return GFunction.power(float(blk["theta"]), n)
    if kind == "log":
        return GFunction.log(n)
    if kind == "loglog":
        return GFunction.loglog(n)
    if kind == "tabulated":
        path = os.path.join(base_dir, blk["table"])
        if not os.path.exists(path):
            raise ConfigError(f"G table {path} does not exist")
        data = np.genfromtxt(path, delimiter=",", skip_header=1)
        return GFunction.tabulated(data[:, 0], data[:, 1], n)
    raise ConfigError(f"unknown G kind {kind!r}")


def field_from_config(spec, dd, base_dir, where):
    """Interior-node values from an expression or a CSV path."""
    if isinstance(spec, str) and spec.endswith(".csv"):
        path = os.path.join(base_dir, spec)
        if not os.path.exists(path):
            raise ConfigError(f"field file for {where} does not exist: {path}")
        return read_field_csv(path, dd)[: dd.n_int]
    sampler = make_expr_sampler(spec, where)
    return dd.sample_interior(sampler)


def output_dir(cfg, args):
    out = args.out or os.environ.get("AMCLAB_OUT") \
        or cfg.get("output", {}).get("dir", "out")
    os.makedirs(out, exist_ok=True)
    return out


# -- subcommands -------------------------------------------------------------


def cmd_check_g(args):
    if args.kind == "power":
        G = GFunction.power(args.theta, args.n)
    elif args.kind in ("log", "abreu-log"):
        G = GFunction.log(args.n)
    elif args.kind == "loglog":
        G = GFunction.loglog(args.n)
    elif args.kind == "tabulated":
        data = np.genfromtxt(args.table, delimiter=",", skip_header=1)
        G = GFunction.tabulated(data[:, 0], data[:, 1], args.n)
    else:
        raise ConfigError(f"unknown kind {args.kind!r}")
    rep = check_conditions(G)
    print(f"conditions for {G}:")
    print(rep.summary())
    return 0


def cmd_solve(args):
    cfg = load_config(args.config)
    base = os.path.dirname(os.path.abspath(args.config))
    out = output_dir(cfg, args)
    dom, h = domain_from_config(cfg)
    dd = build_grid(dom, h)
    G = gfun_from_config(cfg, base)
    pblk = cfg.get("problem", {})
    f = field_from_config(pblk.get("f", "0"), dd, base, "f")
    phi = make_expr_sampler(pblk.get("phi", "0"), "phi")
    psi = make_expr_sampler(pblk.get("psi", "1"), "psi")
    sblk = cfg.get("solver", {})
    prob = SBVPProblem(G=G, dd=dd, f=f, phi=phi, psi=psi,
                       p=float(pblk.get("p", 4.0)))

    payload = {"config": args.config, "status": "failed"}
    code = 1
    try:
        u, w, rep = solve_sbvp(
            prob,
            tol=float(sblk.get("tol", 1e-6)),
            max_outer=int(sblk.get("max_outer", 60)),
            damping=float(sblk.get("damping", 0.5)),
            continuation=bool(sblk.get("continuation", True)),
        )
        write_field_csv(os.path.join(out, "u.csv"), dd, u.values)
        write_field_csv(os.path.join(out, "w.csv"), dd, w.values)
        if cfg.get("output", {}).get("contours", False):
            write_contour_svg(os.path.join(out, "u.svg"), dd, u.values)
            write_contour_svg(os.path.join(out, "w.svg"), dd, w.values)
        payload.update(status="ok", report=rep.to_dict())
        code = 0
    except ConvergenceError as exc:
        rep = exc.report
        payload.update(status="failed", error=str(exc),
                       report=rep.to_dict() if rep is not None else {})
    finally:
        write_grid_csv(os.path.join(out, "grid.csv"), dd)
        write_report_json(os.path.join(out, "report.json"), payload)
    print(f"solve: {payload['status']} (artifacts in {out})")
    return code


def cmd_solve_ma(args):
    cfg = load_config(args.config)
    base = os.path.dirname(os.path.abspath(args.config))
    out = output_dir(cfg, args)
    dom, h = domain_from_config(cfg)
    dd = build_grid(dom, h)
    pblk = cfg.get("problem", {})
    g = field_from_config(pblk.get("g", "1"), dd, base, "g")
    phi = make_expr_sampler(pblk.get("phi", "0"), "phi")
    sblk = cfg.get("solver", {})
    ma_cfg = MAConfig(tol=float(sblk.get("tol", 1e-8)),
                      max_iter=int(sblk.get("max_iter", 50)))
    payload = {"config": args.config, "status": "failed"}
    code = 1
    try:
        u, rep = solve_ma(dd, g, phi, ma_cfg)
        write_field_csv(os.path.join(out, "u.csv"), dd, u.values)
        payload.update(status="ok", report=rep.to_dict())
        code = 0
    except ConvergenceError as exc:
        payload.update(error=str(exc),
                       report=exc.report.to_dict() if exc.report else {})
    finally:
        write_grid_csv(os.path.join(out, "grid.csv"), dd)
        write_report_json(os.path.join(out, "report.json"), payload)
    print(f"solve-ma: {payload['status']} (artifacts in {out})")
    return code


def cmd_solve_lma(args):
    cfg = load_config(args.config)
    base = os.path.dirname(os.path.abspath(args.config))
    out = output_dir(cfg, args)
    dom, h = domain_from_config(cfg)
    dd = build_grid(dom, h)
    pblk = cfg.get("problem", {})
    if "u_csv" not in pblk:
        raise ConfigError("solve-lma needs problem.u_csv from a prior solve-ma export")
    u_vals = read_field_csv(os.path.join(base, pblk["u_csv"]), dd)
    U = differentiate(ScalarField(dd, u_vals))
    f = field_from_config(pblk.get("f", "0"), dd, base, "f")
    psi = make_expr_sampler(pblk.get("psi", "1"), "psi")
    payload = {"config": args.config, "status": "failed"}
    code = 1
    try:
        w, rep = solve_lma(dd, U, f, psi,
                           mode=pblk.get("mode", "nondivergence"))
        write_field_csv(os.path.join(out, "w.csv"), dd, w.values)
        payload.update(status="ok", report=rep.to_dict())
        code = 0
    except (ConvergenceError, AmcError) as exc:
        payload.update(error=str(exc))
        if isinstance(exc, ConvergenceError) and exc.report is not None:
            payload["report"] = exc.report.to_dict()
    finally:
        write_report_json(os.path.join(out, "report.json"), payload)
    print(f"solve-lma: {payload['status']} (artifacts in {out})")
    return code


def cmd_verify_radial(args):
    out = args.out or os.environ.get("AMCLAB_OUT") or "out"
    os.makedirs(out, exist_ok=True)
    sol = make_case(args.case, args.n, args.param)
    r = np.linspace(args.rmin, 1.0, args.points)
    f_disc, det_disc = radial_operator(sol.u(r), sol.w(r), sol.n, r)
    path = os.path.join(out, "radial.csv")
    with open(path, "w") as fh:
        fh.write("r,u,w,f,det,f_discrete,det_discrete\n")
        for i in range(len(r)):
            fh.write(f"{r[i]:.17g},{sol.u(r[i]):.17g},{sol.w(r[i]):.17g},"
                     f"{sol.f(r[i]):.17g},{sol.det(r[i]):.17g},"
                     f"{f_disc[i]:.17g},{det_disc[i]:.17g}\n")
    eps = np.geomspace(1e-1, 1e-4, 4)
    masses, slope = blowup_profile(sol, sol.n / 2.0, eps)
    with open(os.path.join(out, "blowup.csv"), "w") as fh:
        fh.write("eps,mass\n")
        for e, m in zip(eps, masses):
            fh.write(f"{e:.17g},{m:.17g}\n")
    spread = float((f_disc.max() - f_disc.min()) / abs(np.mean(f_disc)))
    print(f"case {args.case}: alpha = {sol.alpha:.6g}, theta = {sol.theta:.6g}, "
          f"C1 = {sol.C1:.6g}, C2 = {sol.C2:.6g}")
    print(f"discrete operator relative spread over [{args.rmin:g}, 1]: {spread:.3g}")
    print(f"fourth-derivative blow-up slope (p = n/2): {slope:.4f}")
    print(f"tables in {out}")
    return 0


def cmd_legendre_check(args):
    cfg = load_config(args.config)
    base = os.path.dirname(os.path.abspath(args.config))
    out = output_dir(cfg, args)
    dom, h = domain_from_config(cfg)
    dd = build_grid(dom, h)
    G = gfun_from_config(cfg, base)
    pblk = cfg.get("problem", {})
    if str(pblk.get("u", "")).endswith(".csv"):
        u_vals = read_field_csv(os.path.join(base, pblk["u"]), dd)
        u = ScalarField(dd, u_vals)
    else:
        u = ScalarField.from_function(dd, make_expr_sampler(pblk.get("u", "(x*x+y*y)/2"), "u"))
    f = make_expr_sampler(pblk.get("f", "0"), "f")
    dual_res = int(pblk.get("dual_res", 48))
    resid, detail = dual_equation_residual(u, None, f, G, dual_res=dual_res,
                                           full_output=True)
    jstar = dual_functional(u, f, G, dual_res=dual_res)
    df = detail["dual_field"]
    ii, jj = detail["nodes"]
    with open(os.path.join(out, "dual_residual.csv"), "w") as fh:
        fh.write("y1,y2,residual\n")
        for k in range(len(ii)):
            fh.write(f"{df.y1[ii[k]]:.17g},{df.y2[jj[k]]:.17g},"
                     f"{detail['residuals'][k]:.17g}\n")
    with open(os.path.join(out, "ustar.csv"), "w") as fh:
        fh.write("y1,y2,ustar,masked\n")
        Y1, Y2 = df.grid()
        for i in range(df.ustar.shape[0]):
            for j in range(df.ustar.shape[1]):
                fh.write(f"{Y1[i,j]:.17g},{Y2[i,j]:.17g},{df.ustar[i,j]:.17g},"
                         f"{int(df.mask[i,j])}\n")
    write_report_json(os.path.join(out, "report.json"),
                      {"dual_residual": resid, "dual_functional": jstar,
                       "dual_res": dual_res})
    print(f"dual-equation residual: {resid:.6g}")
    print(f"dual functional J*: {jstar:.6g}")
    print(f"tables in {out}")
    return 0


def cmd_convergence(args):
    cfg = load_config(args.config) if args.config else {}
    out = args.out or os.environ.get("AMCLAB_OUT") \
        or cfg.get("output", {}).get("dir", "out")
    os.makedirs(out, exist_ok=True)
    blk = cfg.get("convergence", {})
    levels = [int(v) for v in blk.get("levels", [32, 64, 128])]
    theta = float(blk.get("theta", 0.25))
    tol = float(blk.get("tol", 1e-7))
    G = GFunction.power(theta, 2) if theta != 0 else GFunction.log(2)
    dom = ConvexDomain.disk(1.0)
    rows = []
    for n in levels:
        h = 1.0 / n
        dd = build_grid(dom, h)
        mc = ManufacturedCase(G, h / 4.0)
        f = mc.f(dd.pts_int[:, 0], dd.pts_int[:, 1])
        prob = SBVPProblem(G=G, dd=dd, f=f, phi=mc.u, psi=mc.w)
        u, w, rep = solve_sbvp(prob, tol=tol, damping=float(blk.get("damping", 1.0)))
        err = float(np.max(np.abs(u.values - dd.sample(mc.u))))
        rows.append((n, err, rep.outer_iterations))
        print(f"h = 1/{n}: |u - u_exact|_inf = {err:.4e} ({rep.outer_iterations} outer)")
    orders = [float(np.log2(rows[i][1] / rows[i + 1][1])) for i in range(len(rows) - 1)]
    fit = float(np.polyfit(np.log([1.0 / r[0] for r in rows]),
                           np.log([r[1] for r in rows]), 1)[0])
    print("pairwise orders:", ", ".join(f"{o:.3f}" for o in orders))
    print(f"least-squares order: {fit:.3f}")
    with open(os.path.join(out, "convergence.csv"), "w") as fh:
        fh.write("level,h,error,outer_iterations\n")
        for n, err, it in rows:
            fh.write(f"{n},{1.0/n:.17g},{err:.17g},{it}\n")
    write_report_json(os.path.join(out, "report.json"),
                      {"levels": levels, "errors": [r[1] for r in rows],
                       "orders": orders, "lsq_order": fit})
    return 0


def cmd_report(args):
    with open(args.path) as fh:
        payload = json.load(fh)
    out = args.out or os.environ.get("AMCLAB_OUT") or os.path.dirname(args.path) or "."
    os.makedirs(out, exist_ok=True)
    rep = payload.get("report", payload)
    ledger = rep.get("ledger", {})
    print(f"status: {payload.get('status', 'n/a')}")
    if "r1_history" in rep:
        r1 = rep["r1_history"]
        r2 = rep["r2_history"]
        print(f"outer iterations: {rep.get('outer_iterations')}")
        if r1:
            print(f"final residuals: r1 = {r1[-1]:.3e}, r2 = {r2[-1]:.3e}")
    rows = [(k, v) for k, v in sorted(ledger.items())
            if isinstance(v, (int, float))]
    if rows:
        width = max(len(k) for k, _ in rows)
        print("diagnostic ledger:")
        for k, v in rows:
            print(f"  {k:<{width}}  {v:.6g}")
        with open(os.path.join(out, "ledger.csv"), "w") as fh:
            fh.write("quantity,value\n")
            for k, v in rows:
                fh.write(f"{k},{v:.17g}\n")
    if ledger.get("violations"):
        print("estimate violations:")
        for v in ledger["violations"]:
            print(f"  {v}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="amclab",
        description="Numerical laboratory for generalized affine mean curvature equations",
    )
    sub = p.add_subparsers(dest="cmd")

    q = sub.add_parser("check-g", help="check the structural conditions of G")
    q.add_argument("--kind", required=True,
                   choices=["power", "log", "abreu-log", "loglog", "tabulated"])
    q.add_argument("--theta", type=float, default=None)
    q.add_argument("--n", type=int, default=2)
    q.add_argument("--table", default=None)
    q.set_defaults(fn=cmd_check_g)

    for name, fn in (("solve", cmd_solve), ("solve-ma", cmd_solve_ma),
                     ("solve-lma", cmd_solve_lma), ("legendre-check", cmd_legendre_check)):
        q = sub.add_parser(name)
        q.add_argument("--config", required=True)
        q.add_argument("--out", default=None)
        q.set_defaults(fn=fn)

    q = sub.add_parser("verify-radial", help="closed-form radial family checks")
    q.add_argument("--case", required=True, choices=["i", "ii", "iii"])
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--param", type=float, required=True)
    q.add_argument("--points", type=int, default=4000)
    q.add_argument("--rmin", type=float, default=0.1)
    q.add_argument("--out", default=None)
    q.set_defaults(fn=cmd_verify_radial)

    q = sub.add_parser("convergence", help="manufactured-solution grid sweep")
    q.add_argument("--config", default=None)
    q.add_argument("--out", default=None)
    q.set_defaults(fn=cmd_convergence)

    q = sub.add_parser("report", help="render a report.json")
    q.add_argument("--path", required=True)
    q.add_argument("--out", default=None)
    q.set_defaults(fn=cmd_report)
    return p


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "fn", None):
        parser.print_usage()
        return 2
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1
    except AmcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
