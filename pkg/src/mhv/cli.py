"""Configuration-driven command-line driver.

Subcommands cover the full pipeline: ``run`` (discretize, stabilize,
integrate, measure), ``convergence`` (sweep node counts), ``analyze-spectrum``
(eigenvalue scatter of the stabilized advection operator under each node
spacing measure and eta statistic), ``gen-nodes`` and ``dump-matrices``.

Configuration is a flat ``key = value`` text file; command-line overrides
(``--key value``) and environment variables (``MHV_<KEY>``) take precedence
(in that order, CLI strongest).  ``params.csv`` written by a run uses the
same key namespace (plus an ignored ``info.`` diagnostic namespace), so a
finished run can be reproduced by pointing ``--config`` at its params.csv.

Exit codes: 0 success, 2 configuration error, 3 assembly failure,
4 time-integration blow-up.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass, asdict, field, replace

import numpy as np
import scipy.io
import scipy.linalg as sla

from . import geometry as geo
from . import hyperviscosity as hv
from . import problems as pb
from . import rbffd
from . import timeint

AUTO = "auto"


class ConfigError(Exception):
    """Invalid configuration key or value."""


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    """Flat run configuration; every field has a working default."""

    surface: str = "sphere"  # sphere | torus | path to an `x y z nx ny nz` file
    case: str = "gaussians"
    n: int = 2562  # target node count (sphere snaps to icosahedral sizes)
    xi: int = 4  # target spatial order
    smooth: bool = True
    scheme: str = AUTO  # rk1..4 | ab1..4 | sbdf1..4
    t_final: str = AUTO
    dt: str = AUTO
    peclet: float = 1.0
    nu: str = AUTO
    beta: float = 0.02  # Cahn-Hilliard interface parameter
    velocity_scale: float = 1.0  # streamfunction fields (applications)
    delta: str = AUTO  # stencil overlap
    tau_loi: str = AUTO  # basis conditioning tolerance
    gamma2: str = AUTO  # damping exponent
    gamma1: str = AUTO  # damping coefficient (force 0 to disable)
    h_measure: str = "h_bar"  # h_bar | h_q | h_rho
    eta_statistic: str = "mean"  # mean | min | max
    outdir: str = "out"
    seed: int = 0
    snapshot_every: int = 0  # 0: initial and final state only
    error_every: int = 1  # cadence of errors.csv rows (when exact is known)
    threads: int = 0  # 0: no cap


_BOOL_STRINGS = {"true": True, "1": True, "yes": True,
                 "false": False, "0": False, "no": False}


def _parse_value(key: str, raw: str):
    """Parse a raw string into the declared type of a RunConfig field."""
    proto = RunConfig.__dataclass_fields__
    if key not in proto:
        raise ConfigError(f"unknown configuration key: {key!r}")
    default = proto[key].default
    raw = raw.strip()
    if isinstance(default, bool):
        try:
            return _BOOL_STRINGS[raw.lower()]
        except KeyError:
            raise ConfigError(f"{key}: expected a boolean, got {raw!r}") from None
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    return raw  # str fields (including the auto-or-number ones)


def _auto_float(cfg_value, fallback: float | None) -> float | None:
    """Resolve an auto-or-number string field."""
    if isinstance(cfg_value, (int, float)):
        return float(cfg_value)
    if cfg_value == AUTO:
        return fallback
    try:
        return float(cfg_value)
    except ValueError:
        raise ConfigError(f"expected a number or 'auto', got {cfg_value!r}") from None


def load_config(path: str) -> dict:
    """Parse a flat config file: `key = value` lines (or `key,value` CSV).

    `#` comments and blank lines are skipped, as are diagnostic keys in the
    `info.` namespace (so a params.csv written by a run is a valid config).
    """
    out = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" in line:
                key, _, val = line.partition("=")
            elif "," in line:
                key, _, val = line.partition(",")
                val = next(csv.reader([val]))[0] if val else ""
            else:
                raise ConfigError(f"{path}:{lineno}: expected `key = value`")
            key = key.strip()
            if key.startswith("info.") or (key, val.strip()) == ("key", "value"):
                continue
            out[key] = _parse_value(key, val)
    return out


def build_config(config_path: str | None, overrides: list[tuple[str, str]],
                 environ=None) -> RunConfig:
    """File < environment < command line, each layer overriding the last."""
    values = {}
    if config_path:
        values.update(load_config(config_path))
    environ = os.environ if environ is None else environ
    for key in RunConfig.__dataclass_fields__:
        env_key = "MHV_" + key.upper()
        if env_key in environ:
            values[key] = _parse_value(key, environ[env_key])
    for key, raw in overrides:
        values[key] = _parse_value(key, raw)
    return RunConfig(**values)


# ---------------------------------------------------------------------------
# CSV output (RFC-4180 quoting, 17-significant-digit numbers)


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_csv(path, header: list, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_field_csv(path, points: np.ndarray, values: np.ndarray) -> None:
    write_csv(path, ["x", "y", "z", "value"],
              (( *p, v) for p, v in zip(points, values)))


# ---------------------------------------------------------------------------
# node sets


def make_nodes(cfg: RunConfig) -> geo.NodeSet:
    if cfg.surface == "sphere":
        # snap to the nearest icosahedral size N = 10 * 4^level + 2
        level = int(round(np.log((max(cfg.n, 12) - 2) / 10.0) / np.log(4.0)))
        level = min(max(level, 0), 7)
        return geo.generate_icosahedral_sphere(level)
    if cfg.surface == "torus":
        return geo.generate_staggered_torus(cfg.n)
    return geo.load_point_cloud(cfg.surface)


# ---------------------------------------------------------------------------
# cases


def _rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    K = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


@dataclass
class CaseSetup:
    """Everything a run needs beyond the discretization."""

    pde_kind: str
    velocity: pb.VelocityField | None
    initial: callable  # (nodes, seed) -> state vector
    exact: callable  # (points, t) -> values or None if unknown at t
    default_scheme: str
    default_t_final: float
    field_names: tuple
    system: pb.ReactionSystem | None = None
    manufactured: pb.ManufacturedProblem | None = None

    def build_semi_discrete(self, cfg, matrices, nodes, coeffs):
        if self.system is not None:
            return self.system.semi_discrete(matrices, nodes, coeffs)
        if self.manufactured is not None:
            mp = self.manufactured
            U = mp.velocity(nodes.points, 0.0)  # both fields are steady
            implicit = mp.nu * matrices.L
            if coeffs.gamma1 != 0.0:
                implicit = implicit + coeffs.gamma1 * \
                    matrices.hyperviscosity_matrix(coeffs.gamma2)

            def explicit(c, t):
                adv = (U[:, 0] * (matrices.Gx @ c)
                       + U[:, 1] * (matrices.Gy @ c)
                       + U[:, 2] * (matrices.Gz @ c))
                return -adv + mp.forcing(nodes.points, t)

            return timeint.SemiDiscreteSystem(explicit=explicit,
                                              implicit=implicit.tocsr())
        # pure advection: everything explicit
        vel = self.velocity
        g1, g2 = coeffs.gamma1, coeffs.gamma2
        steady_u = None
        if vel.period is not None and self.manufactured is None:
            try:
                u0 = vel(nodes.points, 0.0)
                steady_u = u0 if np.allclose(u0, vel(nodes.points, 0.37)) \
                    else None
            except Exception:
                steady_u = None

        def explicit(c, t):
            u = steady_u if steady_u is not None else vel(nodes.points, t)
            adv = (u[:, 0] * (matrices.Gx @ c) + u[:, 1] * (matrices.Gy @ c)
                   + u[:, 2] * (matrices.Gz @ c))
            out = -adv
            if g1 != 0.0:
                out = out + g1 * matrices.apply_hyperviscosity(c, g2)
            return out

        return timeint.SemiDiscreteSystem(explicit=explicit, implicit=None)


def _periodic_exact(ic, period: float):
    """Exact solution known only when tracers have returned to the start."""

    def exact(points, t):
        if abs((t + 0.5 * period) % period - 0.5 * period) < 1e-9 * max(period, 1.0):
            return ic(points)
        return None

    return exact


def build_case(cfg: RunConfig, surface_kind: str) -> CaseSetup:
    adv = rbffd.ADVECTION
    if surface_kind == geo.Surface.SPHERE:
        if cfg.case == "cosine-bell":
            vel = pb.sphere_solid_body()
            axis = np.array([0.0, 1.0, 0.0])  # alpha = pi/2 rotation axis

            def exact(points, t):
                return pb.cosine_bell_sphere(points @ _rotation(axis, t).T)

            return CaseSetup(adv, vel, lambda nd, s: pb.cosine_bell_sphere(nd.points),
                             exact, "rk3", 2.0 * np.pi, ("c",))
        if cfg.case == "gaussians":
            vel = pb.sphere_deformational(5.0)
            return CaseSetup(adv, vel, lambda nd, s: pb.gaussians_sphere(nd.points),
                             _periodic_exact(pb.gaussians_sphere, 5.0),
                             "rk3", 5.0, ("c",))
        if cfg.case == "manufactured":
            mp = pb.sphere_manufactured(nu=_auto_float(cfg.nu, None),
                                        peclet=cfg.peclet)
            return CaseSetup(rbffd.MIXED, mp.velocity,
                             lambda nd, s: mp.exact(nd.points, 0.0),
                             mp.exact, "sbdf4", 2.0 * np.pi, ("c",),
                             manufactured=mp)
    if surface_kind == geo.Surface.TORUS:
        if cfg.case == "cosine-bells":
            vel = pb.torus_knot_field()
            return CaseSetup(adv, vel, lambda nd, s: pb.cosine_bells_torus(nd.points),
                             _periodic_exact(pb.cosine_bells_torus, 2.0 * np.pi),
                             "rk3", 2.0 * np.pi, ("c",))
        if cfg.case == "gaussians":
            vel = pb.torus_knot_field()
            return CaseSetup(adv, vel, lambda nd, s: pb.gaussians_torus(nd.points),
                             _periodic_exact(pb.gaussians_torus, 2.0 * np.pi),
                             "rk3", 2.0 * np.pi, ("c",))
        if cfg.case == "manufactured":
            mp = pb.torus_manufactured(nu=_auto_float(cfg.nu, None),
                                       peclet=cfg.peclet)
            return CaseSetup(rbffd.MIXED, mp.velocity,
                             lambda nd, s: mp.exact(nd.points, 0.0),
                             mp.exact, "sbdf4", np.pi, ("c",),
                             manufactured=mp)
    if cfg.case == "cahn-hilliard":
        system = pb.cahn_hilliard_system(nu=_auto_float(cfg.nu, 0.5),
                                         beta=cfg.beta,
                                         velocity_scale=cfg.velocity_scale)
        vel_max = 10.0 * abs(cfg.velocity_scale)
        vel = pb.VelocityField(u=lambda p, t: None, divergence_free=True,
                               u_max=vel_max)
        return CaseSetup(rbffd.MIXED, vel, system.initial_condition,
                         lambda p, t: None, "sbdf2", 10.0, ("c",),
                         system=system)
    if cfg.case == "turing":
        system = pb.turing_system(velocity_scale=cfg.velocity_scale)
        vel_max = 10.0 * abs(cfg.velocity_scale)
        vel = pb.VelocityField(u=lambda p, t: None, divergence_free=True,
                               u_max=vel_max)
        return CaseSetup(rbffd.MIXED, vel, system.initial_condition,
                         lambda p, t: None, "sbdf2", 800.0, ("c1", "c2"),
                         system=system)
    raise ConfigError(
        f"unknown case {cfg.case!r} for surface {surface_kind!r}")


def _default_dt(cfg: RunConfig, case: CaseSetup, n_nodes: int) -> float:
    if case.system is not None:
        return 1e-3
    if case.manufactured is not None:
        return pb.advection_diffusion_dt(n_nodes, cfg.xi)
    return pb.advection_dt(n_nodes, case.velocity.u_max)


# ---------------------------------------------------------------------------
# the run pipeline


@dataclass
class RunResult:
    config: RunConfig
    nodes: geo.NodeSet
    matrices: rbffd.DiffMatrices
    report: hv.StabilizationReport
    errors: list  # (t, rel_l2, linf) rows
    final_state: np.ndarray
    final_error: float | None
    dt: float
    n_steps: int
    scheme: str


def _limit_threads(threads: int):
    if threads <= 0:
        return None
    import threadpoolctl
    return threadpoolctl.threadpool_limits(limits=threads)


def execute_run(cfg: RunConfig, write_outputs: bool = True) -> RunResult:
    """Discretize, stabilize, integrate and measure one configured run."""
    _limit_threads(cfg.threads)
    nodes = make_nodes(cfg)
    case = build_case(cfg, nodes.surface.kind)

    params = rbffd.plan(cfg.xi, case.pde_kind, cfg.smooth)
    delta = _auto_float(cfg.delta, params.delta)
    tau_loi = _auto_float(cfg.tau_loi, params.tau_loi)
    gamma2 = _auto_float(cfg.gamma2, params.gamma2)
    params = replace(params, delta=delta, tau_loi=tau_loi, gamma2=int(gamma2))
    matrices = rbffd.assemble(nodes, params)

    scheme = case.default_scheme if cfg.scheme == AUTO else cfg.scheme
    t_final = _auto_float(cfg.t_final, case.default_t_final)
    dt = _auto_float(cfg.dt, None) or _default_dt(cfg, case, nodes.n_nodes)
    n_steps = max(1, int(round(t_final / dt)))
    dt = t_final / n_steps  # land exactly on t_final

    h = nodes.spacing(cfg.h_measure)
    forced_g1 = _auto_float(cfg.gamma1, None)
    report = hv.stabilize(
        matrices, nodes,
        u_norm=0.0 if forced_g1 is not None else case.velocity.u_max,
        divergence_free=(case.velocity.divergence_free
                         if case.velocity else True),
        h=h, gamma2=params.gamma2, eta_statistic=cfg.eta_statistic,
        dt=dt, real_axis_extent=timeint.real_axis_limit(scheme))
    coeffs = (hv.HypCoeffs(forced_g1, params.gamma2)
              if forced_g1 is not None else report.coeffs)

    system = case.build_semi_discrete(cfg, matrices, nodes, coeffs)
    c0 = case.initial(nodes, cfg.seed)
    points = nodes.points
    n_fields = len(case.field_names)
    N = nodes.n_nodes

    if write_outputs:
        os.makedirs(cfg.outdir, exist_ok=True)

    def snapshot(state, index):
        if not write_outputs:
            return
        for f, name in enumerate(case.field_names):
            write_field_csv(os.path.join(cfg.outdir, f"{name}_{index}.csv"),
                            points, state[f * N:(f + 1) * N])

    errors = []

    def record(t, state):
        if n_fields != 1:
            return
        ex = case.exact(points, t)
        if ex is not None:
            errors.append((t, *pb.error_norms(state, ex)))

    snapshot(c0, 0)
    record(0.0, c0)

    def callback(i, t, c):
        step = i + 1
        if cfg.error_every > 0 and (step % cfg.error_every == 0
                                    or step == n_steps):
            record(t, c)
        if cfg.snapshot_every > 0 and step % cfg.snapshot_every == 0 \
                and step != n_steps:
            snapshot(c, step)

    final = timeint.integrate(system, c0, dt, n_steps, method=scheme,
                              callback=callback)
    snapshot(final, n_steps)
    final_error = errors[-1][1] if errors and errors[-1][0] >= t_final - 1e-12 \
        else None

    result = RunResult(config=cfg, nodes=nodes, matrices=matrices,
                       report=report, errors=errors, final_state=final,
                       final_error=final_error, dt=dt, n_steps=n_steps,
                       scheme=scheme)
    if write_outputs:
        write_csv(os.path.join(cfg.outdir, "errors.csv"),
                  ["time", "rel_l2", "linf"], errors)
        write_params_csv(os.path.join(cfg.outdir, "params.csv"), result,
                         params, coeffs)
    return result


def write_params_csv(path, result: RunResult, params: rbffd.DiscParams,
                     coeffs: hv.HypCoeffs) -> None:
    """All resolved parameters; re-readable as a config for reproduction."""
    cfg = result.config
    resolved = asdict(cfg)
    resolved.update(scheme=result.scheme, dt=result.dt,
                    t_final=result.dt * result.n_steps,
                    delta=params.delta, tau_loi=params.tau_loi,
                    gamma2=params.gamma2, gamma1=coeffs.gamma1)
    rows = [(k, fmt(v)) for k, v in resolved.items()]
    rep = result.report
    diag = {
        "info.n_nodes": result.nodes.n_nodes,
        "info.n_steps": result.n_steps,
        "info.ell": params.ell, "info.m": params.m,
        "info.stencil_n": params.n, "info.h": rep.h,
        "info.h_bar": result.nodes.h_bar, "info.h_q": result.nodes.h_q,
        "info.h_rho": result.nodes.h_rho,
        "info.u_norm": rep.u_norm,
        "info.tau_x": rep.growth.tau[0], "info.tau_y": rep.growth.tau[1],
        "info.tau_z": rep.growth.tau[2],
        "info.q_x": rep.growth.q[0], "info.q_y": rep.growth.q[1],
        "info.q_z": rep.growth.q[2],
        "info.eta_bar": rep.stats.eta_bar, "info.omega_bar": rep.stats.omega_bar,
        "info.final_error": (result.final_error
                             if result.final_error is not None else ""),
    }
    rows += [(k, fmt(v)) for k, v in diag.items()]
    write_csv(path, ["key", "value"], rows)


# ---------------------------------------------------------------------------
# subcommands


def cmd_run(cfg: RunConfig) -> int:
    result = execute_run(cfg)
    if result.final_error is not None:
        print(f"final relative l2 error: {result.final_error:.6e}")
    print(f"wrote {cfg.outdir}/errors.csv and {cfg.outdir}/params.csv")
    return 0


def fitted_slope(n_values, errors) -> float:
    """Least-squares slope of log(error) against log(1/sqrt(N))."""
    x = np.log(np.sqrt(np.asarray(n_values, dtype=float)))
    y = np.log(np.asarray(errors, dtype=float))
    return float(-np.polyfit(x, y, 1)[0])


def cmd_convergence(cfg: RunConfig, n_list: list[int]) -> int:
    os.makedirs(cfg.outdir, exist_ok=True)
    rows = []
    prev = None
    for n in n_list:
        sub = replace(cfg, n=n, outdir=os.path.join(cfg.outdir, f"N{n}"))
        result = execute_run(sub)
        if result.final_error is None:
            raise ConfigError(
                f"case {cfg.case!r} has no exact solution at t_final; "
                "convergence needs one")
        N = result.nodes.n_nodes
        err = result.final_error
        slope = ""
        if prev is not None:
            slope = (np.log(prev[1]) - np.log(err)) / \
                (np.log(np.sqrt(N)) - np.log(np.sqrt(prev[0])))
        rows.append((N, np.sqrt(N), err, slope))
        prev = (N, err)
        print(f"N={N}: error {err:.6e}" +
              (f", slope {slope:.2f}" if slope != "" else ""))
    write_csv(os.path.join(cfg.outdir, "convergence.csv"),
              ["N", "sqrtN", "error", "slope"], rows)
    return 0


SPECTRUM_VELOCITY = np.array([1.0, 1.0, 1.0])  # constant; |u| = sqrt(3)


def stabilized_operator(matrices, coeffs: hv.HypCoeffs):
    """G_H = -G^x - G^y - G^z + gamma1 H for a constant velocity (1,1,1)."""
    Gx, Gy, Gz = matrices.G
    out = -(Gx + Gy + Gz)
    if coeffs.gamma1 != 0.0:
        out = out + coeffs.gamma1 * matrices.hyperviscosity_matrix(coeffs.gamma2)
    return out.tocsr()


def spectrum_variants(matrices, nodes: geo.NodeSet):
    """gamma1 and dense spectrum of G_H per h-measure and eta statistic."""
    u_norm = float(np.linalg.norm(SPECTRUM_VELOCITY))
    for h_measure in ("h_bar", "h_q", "h_rho"):
        rep = hv.stabilize(matrices, nodes, u_norm,
                           h=nodes.spacing(h_measure))
        yield ("h", h_measure, rep)
    for stat in ("min", "mean", "max"):
        rep = hv.stabilize(matrices, nodes, u_norm, eta_statistic=stat)
        yield ("eta", stat, rep)


def cmd_analyze_spectrum(cfg: RunConfig) -> int:
    _limit_threads(cfg.threads)
    os.makedirs(cfg.outdir, exist_ok=True)
    nodes = make_nodes(cfg)
    params = rbffd.plan(cfg.xi, rbffd.ADVECTION, cfg.smooth)
    matrices = rbffd.assemble(nodes, params)
    summary = []
    for kind, name, rep in spectrum_variants(matrices, nodes):
        G_H = stabilized_operator(matrices, rep.coeffs)
        eig = sla.eigvals(np.asarray(G_H.todense()))
        write_csv(os.path.join(cfg.outdir, f"spectrum_{kind}_{name}.csv"),
                  ["re", "im"], zip(eig.real, eig.imag))
        max_re = float(eig.real.max())
        summary.append((kind, name, rep.coeffs.gamma1, max_re))
        print(f"{kind}={name}: gamma1 {rep.coeffs.gamma1:.6e}, "
              f"max Re {max_re:.6e}")
    write_csv(os.path.join(cfg.outdir, "summary.csv"),
              ["variant", "value", "gamma1", "max_re"], summary)
    return 0


def cmd_gen_nodes(cfg: RunConfig) -> int:
    os.makedirs(cfg.outdir, exist_ok=True)
    nodes = make_nodes(cfg)
    path = os.path.join(cfg.outdir, "nodes.txt")
    geo.save_point_cloud(path, nodes)
    print(f"wrote {nodes.n_nodes} nodes to {path}")
    return 0


def cmd_dump_matrices(cfg: RunConfig) -> int:
    _limit_threads(cfg.threads)
    os.makedirs(cfg.outdir, exist_ok=True)
    nodes = make_nodes(cfg)
    case = build_case(cfg, nodes.surface.kind)
    params = rbffd.plan(cfg.xi, case.pde_kind, cfg.smooth)
    matrices = rbffd.assemble(nodes, params)
    H = matrices.hyperviscosity_matrix()
    for name, mat in [("Gx", matrices.Gx), ("Gy", matrices.Gy),
                      ("Gz", matrices.Gz), ("L", matrices.L), ("H", H)]:
        scipy.io.mmwrite(os.path.join(cfg.outdir, name), mat)
    print(f"wrote Gx, Gy, Gz, L, H ({nodes.n_nodes} nodes) to {cfg.outdir}")
    return 0


# ---------------------------------------------------------------------------
# entry point


def _split_overrides(extra: list[str]) -> list[tuple[str, str]]:
    out = []
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument: {tok!r}")
        key = tok[2:].replace("-", "_")
        if "=" in key:
            key, _, val = key.partition("=")
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"missing value for override --{key}")
            val = extra[i + 1]
            i += 1
        out.append((key, val))
        i += 1
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mhv", description="meshfree surface-PDE solver driver",
        allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "convergence", "analyze-spectrum", "gen-nodes",
                 "dump-matrices"):
        p = sub.add_parser(name, allow_abbrev=False)
        p.add_argument("--config", default=None)
        if name == "convergence":
            p.add_argument("--n-list", required=True,
                           help="comma-separated node counts")
    args, extra = parser.parse_known_args(argv)
    try:
        cfg = build_config(args.config, _split_overrides(extra))
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "convergence":
            n_list = [int(v) for v in args.n_list.split(",") if v.strip()]
            return cmd_convergence(cfg, n_list)
        if args.command == "analyze-spectrum":
            return cmd_analyze_spectrum(cfg)
        if args.command == "gen-nodes":
            return cmd_gen_nodes(cfg)
        return cmd_dump_matrices(cfg)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (rbffd.WeightSolveError,) as exc:
        print(f"assembly error: {exc}", file=sys.stderr)
        return 3
    except timeint.BlowUpError as exc:
        print(f"integration blow-up: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
