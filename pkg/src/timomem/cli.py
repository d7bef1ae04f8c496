"""Command line entry point: ``timomem <subcommand> <config.toml>``.

Exit codes: 0 success, 1 a check failed, 2 config error, 3 I/O error,
4 insufficient data.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import envelope as env
from .config import RunConfig, load_config
from .diagnostics import cumulative_energy_monitor, dissipation_residual, envelope_compare, fit_decay
from .errors import ConfigError, EnvelopeError, InadmissibleKernelError, InsufficientDataError
from .kernel import PowerLawKernel, check_A1, check_A2
from .simulate import CSV_HEADER, RunSeries, run

log = logging.getLogger("timomem")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO, EXIT_DATA = 0, 1, 2, 3, 4


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    if isinstance(v, (tuple, list, np.ndarray)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def write_report(lines: dict, path: Optional[Path] = None, stream=None) -> str:
    text = "".join(f"{k}={_fmt(v)}\n" for k, v in lines.items())
    (stream or sys.stdout).write(text)
    if path is not None:
        Path(path).write_text(text)
    return text


# --------------------------------------------------------------------------
# envelope helpers shared by the CLI, scripts and tests

@dataclass
class EnvelopeResult:
    model: env.EnvelopeModel
    C: float
    q: np.ndarray
    bound: np.ndarray
    violations: int
    max_ratio: float
    m_tilde: float


def build_envelope(rc: RunConfig, t, E, s0_norm_sq: Optional[float] = None) -> EnvelopeResult:
    """Example-family envelope for a power-law kernel, calibrated at E(t[0]).

    q0 defaults to 0.5 min(1, kappa gamma / (8 m~)) with m~ the observed
    sup of int_0^t E / f over the series.
    """
    k = rc.kernel
    if not isinstance(k, PowerLawKernel):
        raise EnvelopeError("the decay envelope is implemented for power-law kernels only")
    t, E = np.asarray(t, float), np.asarray(E, float)
    r = rc.r
    if s0_norm_sq is None:
        s0_norm_sq = initial_strain_norm_sq(rc)
    A = rc.history.amplitude if rc.history.kind == "power_growth" else 0.0
    c = A * A * s0_norm_sq
    horizon = rc.envelope.horizon or float(t[-1])
    common = dict(r=r, c1=rc.envelope.c1, c2=rc.envelope.c2, c_over_d=rc.envelope.c_over_d,
                  horizon=horizon, lam=rc.envelope.chi_lambda)
    if r == 0:
        common["history_const"] = c
    else:
        common["history_norm"] = lambda s: c * (1.0 + s) ** r
    model = env.power_law_model(k, q0=rc.envelope.q0 or 0.5, **common)
    mon = cumulative_energy_monitor((t, E), model)
    m_tilde = mon.sup
    if rc.envelope.q0 is None:
        gamma = 1.0 - k.mass()
        q0 = 0.5 * min(1.0, rc.beam.kappa * gamma / (8.0 * m_tilde)) if m_tilde > 0 else 0.5
        model = env.power_law_model(k, q0=q0, **common)
    if not model.dif_ok:
        raise EnvelopeError(f"class-S condition fails (margin {model.dif_margin:.3e})")
    C = env.calibrate_C(model, float(E[0]))
    q = np.array([env.weight_q(model, x) for x in t])
    bound = np.array([env.predicted_envelope(model, C, x) for x in t])
    violations, max_ratio = envelope_compare((t, E), model, C)
    return EnvelopeResult(model, C, q, bound, violations, max_ratio, m_tilde)


def initial_strain_norm_sq(rc: RunConfig) -> float:
    from .spatial import Grid, shear_strain
    grid = Grid(rc.N, rc.beam.L)
    f, _ = rc.initial.fields(grid)
    s = shear_strain(f, grid)
    return float(np.dot(grid.weights, s * s))


# --------------------------------------------------------------------------
# CSV

def write_csv(path, series: RunSeries, q=None, bound=None):
    n = len(series.t)
    q = np.full(n, math.nan) if q is None else q
    bound = np.full(n, math.nan) if bound is None else bound
    cols = [series.t, series.E_total, series.E_kin_phi, series.E_kin_psi, series.E_bend,
            series.E_shear, series.E_mem, series.residual, q, bound]
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in zip(*cols):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_csv(path):
    """Returns a dict column -> array."""
    with open(path) as fh:
        header = fh.readline().strip()
    if not header:
        raise InsufficientDataError(f"{path} is empty")
    names = header.split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        data = np.zeros((0, len(names)))
    if data.shape[1] != len(names):
        raise ConfigError(f"{path}: {data.shape[1]} columns but {len(names)} header names")
    return {name: data[:, i] for i, name in enumerate(names)}


PLOT_RECIPE = '''"""Plot recipe for {csv}; needs matplotlib (not a package dependency)."""
import numpy as np
import matplotlib.pyplot as plt

d = np.genfromtxt("{csv}", delimiter=",", names=True)
fig, ax = plt.subplots()
ax.loglog(1 + d["t"], d["E_total"], label="E(t)")
if np.isfinite(d["envelope_bound"]).any():
    ax.loglog(1 + d["t"], d["envelope_bound"], "--", label="envelope")
ax.set_xlabel("1 + t")
ax.set_ylabel("energy")
ax.legend()
fig.savefig("{png}", dpi=150)
'''


# --------------------------------------------------------------------------
# subcommands

def cmd_check_kernel(rc: RunConfig) -> int:
    rep = check_A1(rc.kernel, rc.beam)
    lines = dict(passes_A1=rep.passes_A1, mass=rep.mass, ell=rep.ell, C0=rep.C0, t0=rep.t0)
    ok = rep.passes_A1
    if isinstance(rc.kernel, PowerLawKernel):
        nu = rc.kernel.nu
        xi_bar = nu * rc.kernel.a ** (-1.0 / nu)
        a2, margin = check_A2(rc.kernel, lambda t: xi_bar, env.make_H_power(nu).eval)
        lines.update(passes_A2=a2, A2_margin=margin)
        ok = ok and a2
    else:
        lines.update(passes_A2="not_checked")
    if rep.reason:
        lines["reason"] = rep.reason
    lines["status"] = "pass" if ok else "fail"
    write_report(lines)
    return EXIT_OK if ok else EXIT_FAIL


def _envelope_columns(rc: RunConfig, series: RunSeries):
    if not isinstance(rc.kernel, PowerLawKernel):
        return None, None, None
    try:
        res = build_envelope(rc, series.t, series.E_total)
    except EnvelopeError as exc:
        log.warning("no envelope columns: %s", exc)
        return None, None, None
    return res.q, res.bound, res


def cmd_simulate(rc: RunConfig) -> int:
    cfg = rc.sim_config()

    def progress(n, total):
        if n == total or n % max(1, total // 10) == 0:
            log.info("step %d/%d", n, total)

    series = run(cfg, progress=progress)
    q, bound, res = _envelope_columns(rc, series)
    out = rc.resolve(rc.output.path)
    write_csv(out, series, q, bound)
    if rc.output.plot_recipe:
        out.with_suffix(".plot.py").write_text(PLOT_RECIPE.format(csv=out.name, png=out.with_suffix(".png").name))
    _, max_res = dissipation_residual(series)
    lines = dict(csv=str(out), steps=series.meta["n_steps"], mode=series.meta["mode"],
                 E0=float(series.E_total[0]), E_final=float(series.E_total[-1]),
                 max_step_increase=series.meta["max_step_increase"], max_residual=max_res,
                 psi_mean_drift=series.meta["psi_mean_drift"])
    if res is not None:
        lines.update(envelope_violations=res.violations, envelope_max_ratio=res.max_ratio)
    write_report(lines)
    return EXIT_OK


def _load_series(rc: RunConfig, csv: Optional[str]):
    path = Path(csv) if csv else rc.resolve(rc.output.path)
    return path, read_csv(path)


def cmd_fit_decay(rc: RunConfig, csv: Optional[str] = None) -> int:
    path, d = _load_series(rc, csv)
    nu, r = rc.nu, rc.r
    target = nu - r - 1.0 if nu is not None else math.nan
    expect_log = rc.fit.log_corrected
    if expect_log is None:
        expect_log = nu is not None and abs(nu - r - 2.0) < 1e-12
    fit = fit_decay((d["t"], d["E_total"]), rc.fit.window_fraction, expect_log)
    ok = math.isfinite(target) and abs(fit.exponent - target) <= rc.fit.tolerance
    lines = dict(csv=str(path), exponent=fit.exponent, target=target, tolerance=rc.fit.tolerance,
                 log_corrected=fit.log_corrected, r2=fit.r2, amplitude=fit.amplitude,
                 window=fit.window, samples=fit.n_samples, status="pass" if ok else "fail")
    write_report(lines, rc.resolve(rc.output.report) if rc.output.report else None)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_envelope(rc: RunConfig, csv: Optional[str] = None) -> int:
    path, d = _load_series(rc, csv)
    if len(d["t"]) < 2:
        raise InsufficientDataError("envelope comparison needs at least two rows")
    res = build_envelope(rc, d["t"], d["E_total"])
    m = res.model
    lines = dict(csv=str(path), c1=m.c1, q0=m.q0, chi_lambda=m.chi_lambda, chi_p=m.chi_p,
                 dif_ok=m.dif_ok, dif_margin=m.dif_margin, C=res.C, m_tilde=res.m_tilde,
                 violations=res.violations, max_ratio=res.max_ratio,
                 status="pass" if res.violations == 0 else "fail")
    write_report(lines, rc.resolve(rc.output.report) if rc.output.report else None)
    return EXIT_OK if res.violations == 0 else EXIT_FAIL


def _order(errors):
    e = np.asarray(errors, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        o = np.log2(e[:-1] / e[1:])
    return o


def convergence_study(rc: RunConfig):
    """Residual order in dt and self-convergence order in N.

    Temporal: max energy-identity residual at (dt, dt/2, dt/4) on the finest
    grid.  Spatial: the energy history at (N, 2N, 4N) with the finest dt;
    successive differences of the recorded E_total series give the order.
    """
    levels = rc.convergence.levels
    Ns = [rc.N * 2 ** i for i in range(levels)]
    dts = [rc.dt / 2 ** i for i in range(levels)]
    cfl = rc.beam.L / (Ns[0] + 1) / rc.beam.max_speed
    cfl_warning = rc.dt > cfl
    table = {}
    for N in Ns:
        for dt in dts:
            every = int(round(rc.dt / dt))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                s = run(rc.sim_config(N=N, dt=dt, every=every))
            table[(N, dt)] = s
    t_res = [dissipation_residual(table[(Ns[-1], dt)])[1] for dt in dts]
    E_by_N = [table[(N, dts[-1])].E_total for N in Ns]
    s_err = [float(np.max(np.abs(E_by_N[i] - E_by_N[i + 1]))) for i in range(levels - 1)]
    return dict(N=Ns, dt=dts, temporal_residuals=t_res, temporal_orders=_order(t_res),
                spatial_differences=s_err, spatial_orders=_order(s_err),
                cfl_hint=cfl, cfl_warning=cfl_warning, runs=table)


def cmd_convergence(rc: RunConfig) -> int:
    st = convergence_study(rc)
    if st["cfl_warning"]:
        print(f"warning: dt={rc.dt!r} exceeds the CFL hint dx/c_max={st['cfl_hint']!r}")
    t_ord = float(np.min(st["temporal_orders"]))
    s_ord = float(np.min(st["spatial_orders"])) if len(st["spatial_orders"]) else math.nan
    ok = t_ord >= rc.convergence.min_order and s_ord >= rc.convergence.min_order
    lines = dict(N=st["N"], dt=st["dt"], temporal_residuals=st["temporal_residuals"],
                 temporal_orders=list(st["temporal_orders"]),
                 spatial_differences=st["spatial_differences"],
                 spatial_orders=list(st["spatial_orders"]), temporal_order=t_ord,
                 spatial_order=s_ord, status="pass" if ok else "fail")
    write_report(lines, rc.resolve(rc.output.report) if rc.output.report else None)
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "check-kernel": cmd_check_kernel,
    "envelope": cmd_envelope,
    "simulate": cmd_simulate,
    "fit-decay": cmd_fit_decay,
    "convergence": cmd_convergence,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="timomem", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("config", help="TOML run configuration")
    parser.add_argument("csv", nargs="?", help="run CSV for fit-decay/envelope (default: output.path)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = load_config(args.config)
        fn = COMMANDS[args.command]
        if args.command in ("fit-decay", "envelope"):
            return fn(rc, args.csv)
        return fn(rc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InsufficientDataError as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InadmissibleKernelError, EnvelopeError) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
