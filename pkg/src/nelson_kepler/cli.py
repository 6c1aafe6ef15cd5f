"""Command-line front end: ``nelson-kepler <subcommand> [flags]``.

Exit codes: 0 success, 1 runtime or domain error, 2 usage error.
Points are given as comma-separated coordinates, e.g. ``--start 2,0``; use
``--start=-1.5,0.2`` when the first coordinate is negative.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import csvio, svg
from .core import ConvergenceError, DomainError, InconsistencyError, PhysParams, PoleError
from .dynamics import (
    check_kepler_orbit,
    critical_eccentricity,
    integrate_ode,
    lyapunov_certificate,
    period,
    period_quadrature,
    stability_integral,
    symmetry_curves,
    tilde_e,
)
from .exact_state import invariant_density_exact, nodal_curves
from .limit_state import divergence, drift2, invariant_density_limit, normalized_density_grid, speed_sq
from .sim import SimConfig, hitting_probability, simulate_ensemble, simulate_sde
from .trajectory import TRAJ_HEADER


def _point(text):
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if len(vals) not in (2, 3):
        raise argparse.ArgumentTypeError("a point needs 2 or 3 coordinates")
    return vals


def _add_params(p):
    g = p.add_argument_group("physical parameters")
    g.add_argument("--mu", type=float, default=1.0, help="force constant (default 1)")
    g.add_argument("--lambda", dest="lam", type=float, default=1.0, help="angular-momentum scale (default 1)")
    g.add_argument("--e", type=float, default=0.5, help="eccentricity in (0, 1) (default 0.5)")
    g.add_argument("--epsilon", type=float, default=None, help="diffusion scale (default 0, or sqrt(lambda/n))")
    g.add_argument("--n", type=int, default=None, help="quantum number for the exact state")


def _add_grid(p):
    g = p.add_argument_group("grid")
    g.add_argument("--xmin", type=float, default=-3.0)
    g.add_argument("--xmax", type=float, default=2.0)
    g.add_argument("--ymin", type=float, default=-2.0)
    g.add_argument("--ymax", type=float, default=2.0)
    g.add_argument("--nx", type=int, default=101)
    g.add_argument("--ny", type=int, default=81)


def _add_sim(p, tmax=10.0):
    g = p.add_argument_group("simulation")
    g.add_argument("--dt", type=float, default=1e-3)
    g.add_argument("--tmax", type=float, default=tmax)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--delta", type=float, default=1e-3, help="singular-set buffer (default 1e-3)")
    g.add_argument("--paths", type=int, default=1)
    g.add_argument("--dim", type=int, choices=(2, 3), default=2)
    g.add_argument("--start", type=_point, default=[2.0, 0.0])
    g.add_argument("--record-every", type=int, default=1)


def _add_out(p):
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--format", choices=("csv", "svg"), default="csv")


def build_parser():
    parser = argparse.ArgumentParser(prog="nelson-kepler", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("field", help="drift / divergence / speed / density on a grid")
    p.add_argument("--kind", choices=("drift", "divergence", "speed", "density"), default="drift")
    _add_params(p)
    _add_grid(p)
    _add_out(p)

    p = sub.add_parser("simulate", help="one path (ODE if epsilon = 0, else SDE) or an ensemble")
    _add_params(p)
    _add_sim(p)
    _add_out(p)

    p = sub.add_parser("density", help="limiting or exact invariant density on a grid")
    p.add_argument("--kind", choices=("limit", "exact"), default="limit")
    p.add_argument("--normalize", action="store_true", help="normalise the limiting density on the grid box")
    _add_params(p)
    _add_grid(p)
    _add_out(p)

    p = sub.add_parser("analyze", help="period, trace integral, tilde e, symmetry curves, Lyapunov certificate")
    _add_params(p)
    p.add_argument("--out", default=None)

    p = sub.add_parser("hit", help="Monte Carlo P(tau > t) for the singular-set buffer")
    _add_params(p)
    _add_sim(p, tmax=20.0)
    p.add_argument("--out", default=None)

    p = sub.add_parser("nodal", help="nodal hyperbolas of the exact state in the plane y = 0")
    _add_params(p)
    p.add_argument("--rmax", type=float, default=4.0)
    p.add_argument("--samples", type=int, default=200)
    _add_out(p)
    return parser


def _params(args):
    eps = args.epsilon
    if eps is None:
        eps = math.sqrt(args.lam / args.n) if args.n is not None else 0.0
    return PhysParams(mu=args.mu, lam=args.lam, e=args.e, epsilon=eps, n=args.n)


def _emit(args, text):
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _grid(args):
    xs = np.linspace(args.xmin, args.xmax, args.nx)
    ys = np.linspace(args.ymin, args.ymax, args.ny)
    X, Y = np.meshgrid(xs, ys)
    return xs, ys, np.stack([X, Y], axis=-1)


def _grid_rows(xs, ys, cols):
    for j, y in enumerate(ys):
        for i, x in enumerate(xs):
            yield (x, y, *[c[j, i] for c in cols])


def cmd_field(args):
    P = _params(args)
    xs, ys, pts = _grid(args)
    if args.kind == "drift":
        b = drift2(P, pts, strict=False)
        cols, header, heat = [b[..., 0], b[..., 1]], ["x", "y", "bx", "by"], np.hypot(b[..., 0], b[..., 1])
    else:
        if args.kind == "divergence":
            val = divergence(P, pts, strict=False)
        elif args.kind == "speed":
            val = speed_sq(P, pts, strict=False)
        else:
            if not P.epsilon > 0:
                raise DomainError("density needs --epsilon > 0")
            val = invariant_density_limit(P, pts, strict=False)
        cols, header, heat = [val], ["x", "y", "value"], val
    if args.format == "svg":
        _emit(args, svg.heatmap(xs, ys, heat, title=f"{args.kind} e={P.e}"))
    else:
        _emit(args, csvio.to_csv_string(header, _grid_rows(xs, ys, cols)))
    return 0


def cmd_density(args):
    P = _params(args)
    if args.kind == "exact":
        if P.n is None:
            raise DomainError("the exact density needs --n")
        xs, ys, pts = _grid(args)
        at_origin = np.all(pts == 0, axis=-1)
        # nu is undefined at the origin; leave that node empty
        val = invariant_density_exact(P, np.where(at_origin[..., None], 1.0, pts))
        val = np.where(at_origin, np.nan, val)
    else:
        if not P.epsilon > 0:
            raise DomainError("the limiting density needs --epsilon > 0")
        if args.normalize:
            xs, ys, val = normalized_density_grid(
                P, args.nx, args.ny, box=(args.xmin, args.xmax, args.ymin, args.ymax)
            )
        else:
            xs, ys, pts = _grid(args)
            val = invariant_density_limit(P, pts, strict=False)
    if args.format == "svg":
        _emit(args, svg.heatmap(xs, ys, val, title=f"density {args.kind}"))
    else:
        _emit(args, csvio.to_csv_string(["x", "y", "value"], _grid_rows(xs, ys, [val])))
    return 0


def _sim_config(args, P):
    return SimConfig(
        dt=args.dt, t_max=args.tmax, seed=args.seed, delta=args.delta,
        dimension=args.dim, ensemble_size=args.paths, record_every=args.record_every,
    )


def cmd_simulate(args):
    P = _params(args)
    start = np.asarray(args.start, dtype=float)
    if start.size != args.dim:
        if start.size == 2 and args.dim == 3:
            start = np.append(start, 0.0)
        else:
            raise DomainError(f"--start needs {args.dim} coordinates")
    if args.paths > 1:
        if not P.epsilon > 0:
            raise DomainError("ensembles need --epsilon > 0")
        res = simulate_ensemble(P, start, _sim_config(args, P))
        if args.format == "svg":
            xc = 0.5 * (res.x_edges[:-1] + res.x_edges[1:])
            yc = 0.5 * (res.y_edges[:-1] + res.y_edges[1:])
            _emit(args, svg.heatmap(xc, yc, res.hist_counts.T.astype(float), title="ensemble"))
        else:
            _emit(args, csvio.to_csv_string(["x", "y", "count"], res.histogram_rows()))
        sys.stderr.write(f"hit_fraction: {res.hit_fraction}\n")
        return 0
    if P.epsilon > 0:
        traj = simulate_sde(P, start, _sim_config(args, P))
    else:
        traj = integrate_ode(P, start, args.tmax, dt=args.dt, delta=args.delta, record_every=args.record_every)
    if args.format == "svg":
        _emit(args, svg.polylines([traj.states], title="trajectory"))
    else:
        _emit(args, csvio.to_csv_string(TRAJ_HEADER, traj._rows()))
        if args.out:
            traj.events_to_csv(args.out + ".events.csv")
    for t, kind in traj.events:
        sys.stderr.write(f"event: {kind} at t={t}\n")
    return 0


def analysis_report(P):
    """Plain-text report followed by CSV blocks (each introduced by a '# name' line)."""
    lines = [f"# parameters: mu={P.mu} lambda={P.lam} e={P.e} a={P.a}"]
    orbit = check_kepler_orbit(P, n_periods=3)
    si = stability_integral(P)
    lines += [
        f"period: {period(P)!r}",
        f"period_quadrature: {period_quadrature(P)!r}",
        f"period_measured: {orbit.period!r}",
        f"orbit_max_u_deviation: {orbit.max_u_deviation!r}",
        f"kepler_law_max_residual: {orbit.max_kepler_residual!r}",
        f"stability_integral: {si.closed_form!r}",
        f"stability_integral_fd: {si.finite_difference!r}",
        f"tilde_e: {tilde_e(P.e)!r}",
        f"critical_eccentricity: {critical_eccentricity()!r}",
    ]
    curves = symmetry_curves(P)
    for name, c in curves.items():
        cr = c.crossings()
        lines.append(
            f"curve_{name}: min_u={c.min_u()!r} crosses_kepler_ellipse={bool(cr.size)} "
            f"v_crossings={[float(v) for v in cr]}"
        )
    cert = lyapunov_certificate(P)
    lines += [
        f"lyapunov_min_V_off: {cert.min_v_off!r}",
        f"lyapunov_max_Vdot_off: {cert.max_vdot_off!r}",
        f"lyapunov_max_abs_V_on: {cert.max_abs_v_on!r}",
        f"lyapunov_max_abs_Vdot_on: {cert.max_abs_vdot_on!r}",
        f"lyapunov_certificate_ok: {cert.ok}",
        "",
    ]
    text = "\n".join(lines) + "\n"
    for name, c in curves.items():
        v, u = c.sample(100)
        xy = c.points(100)
        text += f"# curve {name}\n" + csvio.to_csv_string(
            ["v", "u", "x", "y"], zip(v, u, xy[:, 0], xy[:, 1])
        ) + "\n"
    text += "# lyapunov_certificate\n" + csvio.to_csv_string(
        ["delta1", "delta2", "nu", "nv", "min_V_off", "max_Vdot_off", "max_abs_V_on", "max_abs_Vdot_on"],
        [(cert.delta1, cert.delta2, cert.shape[0], cert.shape[1], cert.min_v_off, cert.max_vdot_off,
          cert.max_abs_v_on, cert.max_abs_vdot_on)],
    )
    return text


def cmd_analyze(args):
    _emit(args, analysis_report(_params(args)))
    return 0


def cmd_hit(args):
    P = _params(args)
    if not P.epsilon > 0:
        raise DomainError("hitting probabilities need --epsilon > 0")
    cfg = SimConfig(dt=args.dt, t_max=args.tmax, seed=args.seed, delta=args.delta,
                    dimension=args.dim, ensemble_size=args.paths)
    est = hitting_probability(P, np.asarray(args.start, dtype=float), cfg)
    _emit(args, csvio.to_csv_string(
        ["t", "survivors", "n", "estimate", "ci_low", "ci_high"],
        [(est.t, est.survivors, est.n, est.estimate, est.ci_low, est.ci_high)],
    ))
    return 0


def cmd_nodal(args):
    P = _params(args)
    if P.n is None:
        raise DomainError("nodal curves need --n")
    nc = nodal_curves(P)
    rows = []
    curves = []
    for k in range(len(nc.roots)):
        xz = nc.sample(k, num=args.samples, rmax=args.rmax)
        curves.append(xz)
        rows += [(k + 1, nc.roots[k], x, z) for x, z in xz]
    if args.format == "svg":
        _emit(args, svg.polylines(curves, title=f"nodal curves n={P.n}"))
    else:
        _emit(args, csvio.to_csv_string(["k", "root", "x", "z"], rows))
    return 0


COMMANDS = {
    "field": cmd_field,
    "simulate": cmd_simulate,
    "density": cmd_density,
    "analyze": cmd_analyze,
    "hit": cmd_hit,
    "nodal": cmd_nodal,
}


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return COMMANDS[args.command](args)
    except (DomainError, InconsistencyError, ConvergenceError, PoleError, ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
