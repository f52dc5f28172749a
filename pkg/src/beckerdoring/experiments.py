"""End-to-end uniform moment-bound experiments and report emission.

The pipeline: integrate a subcritical run, detect the time T0 from which
the monomer concentration stays below the chosen cap omega, certify the
pre-T0 window by the exponential growth bound, build a dominating tail
sequence at T0, check domination from T0 on, and convert the dominating
sequence's weighted sums into a uniform moment certificate.  Every stage
reports its margins; a verdict is true only when all gating stages pass.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coefficients import CoefficientModel, Family, load_rate_table, make_exponential_tail_model, make_power_law_model
from .equilibrium import (
    CriticalValues,
    EquilibriumData,
    critical_values,
    equilibrium_profile,
    solve_monomer_activity,
)
from .errors import (
    ConfigError,
    ParameterError,
    SupercriticalError,
    UnboundedGrowthConstantError,
)
from .maximum_principle import check_domination
from .solver import ClusterState, IntegrateOptions, Trajectory, density, integrate
from .supersolution import (
    Supersolution,
    build_supersolution,
    make_params,
    verify_supersolution,
    weighted_sum_bound,
)
from .tails import stretched_weights, tail_density


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment, flat and serializable.

    ``omega = 0`` selects z_bar + omega_margin * (z_s - z_bar); ``abs_tol``
    and ``tol_dom`` of 0 select the density-scaled defaults.  For
    ``init = "file"`` the density is taken from the file and ``rho`` is
    ignored; every other shape is scaled to hit ``rho`` exactly.
    """

    family: str = "power_law"
    gamma: float = 0.5
    z_s: float = 1.0
    q: float = 1.0
    mu_c: float = 0.5
    sigma: float = 1.0
    rates_file: str = ""
    n: int = 2000
    rho: float = 1.0
    init: str = "monodisperse"
    init_ratio: float = 0.5
    init_file: str = ""
    t_end: float = 200.0
    snapshots: int = 401
    rel_tol: float = 1e-8
    abs_tol: float = 0.0
    tail_threshold: float = 1e-6
    k_moments: tuple[float, ...] = (2.0,)
    stretched: tuple[tuple[float, float], ...] = ((1.0, 0.5),)
    omega: float = 0.0
    omega_margin: float = 0.1
    delta: float = 1.0
    tol_dom: float = 0.0
    n_series: int = 100_000
    seed: int = 0

    def build_model(self) -> CoefficientModel:
        if self.family == Family.POWER_LAW.value:
            return make_power_law_model(self.gamma, self.z_s, self.q, self.mu_c)
        if self.family == Family.EXPONENTIAL_TAIL.value:
            return make_exponential_tail_model(self.gamma, self.z_s, self.sigma, self.mu_c)
        if self.family == Family.CUSTOM.value:
            if not self.rates_file:
                raise ConfigError("custom family needs rates_file")
            return load_rate_table(self.rates_file, gamma=self.gamma, z_s=self.z_s or None)
        raise ConfigError(f"unknown family {self.family!r}")

    def initial_state(self, eq: EquilibriumData | None = None) -> ClusterState:
        i = np.arange(1, self.n + 1, dtype=float)
        if self.init == "monodisperse":
            c = np.zeros(self.n)
            c[0] = self.rho
            return ClusterState(c)
        if self.init == "equilibrium":
            if eq is None:
                raise ConfigError("equilibrium initial data needs an equilibrium profile")
            shape = eq.profile
        elif self.init == "geometric":
            if not (0 < self.init_ratio < 1):
                raise ConfigError("init_ratio must be in (0, 1)")
            shape = self.init_ratio**i
        elif self.init == "file":
            data = np.loadtxt(self.init_file, dtype=float, ndmin=2)
            if data.shape[1] != 2 or not np.array_equal(data[:, 0], np.arange(1, len(data) + 1)):
                raise ConfigError("initial-state file needs contiguous columns 'i c_i'")
            c = np.zeros(self.n)
            m = min(self.n, len(data))
            c[:m] = data[:m, 1]
            return ClusterState(c)
        else:
            raise ConfigError(f"unknown initial shape {self.init!r}")
        mass = math.fsum(i * shape)
        if mass <= 0:
            raise ConfigError("initial shape carries no mass")
        return ClusterState(shape * (self.rho / mass))

    def to_dict(self) -> dict:
        return {
            "family": self.family, "gamma": self.gamma, "z_s": self.z_s, "q": self.q,
            "mu_c": self.mu_c, "sigma": self.sigma, "rates_file": self.rates_file,
            "n": self.n, "rho": self.rho, "init": self.init, "init_ratio": self.init_ratio,
            "init_file": self.init_file, "t_end": self.t_end, "snapshots": self.snapshots,
            "rel_tol": self.rel_tol, "abs_tol": self.abs_tol,
            "tail_threshold": self.tail_threshold,
            "k_moments": list(self.k_moments),
            "stretched": [list(p) for p in self.stretched],
            "omega": self.omega, "omega_margin": self.omega_margin, "delta": self.delta,
            "tol_dom": self.tol_dom, "n_series": self.n_series, "seed": self.seed,
        }


# -- short-time growth constant ----------------------------------------------


@dataclass(frozen=True)
class ShortTimeBound:
    """Constant C such that the phi-weighted sum grows at most like exp(C t).

    ``eps`` is the largest constant with phi_{i+1} - phi_i >= eps * phi_1;
    ``a_phi`` the supremum of a_i (phi_{i+1} - phi_i) / phi_i over the scan.
    Edge flags mark extrema still moving at the end of the range.
    """

    c_phi: float
    eps: float
    a_phi: float
    eps_at_edge: bool
    a_phi_argmax: int


def short_time_constant(
    model: CoefficientModel,
    phi: np.ndarray,
    rho: float,
    b_bar: float | None = None,
) -> ShortTimeBound:
    """C_phi = (rho + b_bar / eps) * A_phi for an admissible weight sequence.

    Raises when the weighted increment ratio is still climbing at the end of
    the truncation (the bound does not exist for such weights, e.g. plain
    exponentials against diverging coagulation rates).
    """
    phi = np.asarray(phi, dtype=float)
    if len(phi) < 10:
        raise ParameterError("weight sequence too short")
    if np.any(phi <= 0):
        raise ParameterError("weights must be positive")
    diffs = phi[1:] - phi[:-1]
    eps = float(np.min(diffs)) / float(phi[0])
    if eps <= 0:
        raise ParameterError("weights must be strictly increasing")
    eps_at_edge = int(np.argmin(diffs)) == len(diffs) - 1
    a = model.a(np.arange(1, len(phi), dtype=float))
    ratios = a * diffs / phi[:-1]
    argmax = int(np.argmax(ratios))
    edge = len(ratios) - 1
    if argmax > 0.99 * edge and ratios[edge] > ratios[int(0.9 * edge)] * (1 + 1e-9):
        raise UnboundedGrowthConstantError(
            "weighted increment ratio keeps rising at the end of the range; "
            "no finite growth constant for this weight"
        )
    a_phi = float(ratios[argmax])
    bb = b_bar if b_bar is not None else model.b_bar
    return ShortTimeBound(
        c_phi=(rho + bb / eps) * a_phi,
        eps=eps,
        a_phi=a_phi,
        eps_at_edge=eps_at_edge,
        a_phi_argmax=argmax + 1,
    )


def detect_threshold(trajectory: Trajectory, omega: float) -> float | None:
    """First snapshot time from which c_1 stays below omega for good.

    Returns None when the monomer concentration is still at or above omega
    at the final snapshot (never-below flag).
    """
    c1 = np.array([s.c1 for s in trajectory.snapshots])
    above = np.nonzero(c1 >= omega)[0]
    if not len(above):
        return trajectory.snapshots[0].t
    last = int(above[-1])
    if last == len(c1) - 1:
        return None
    return trajectory.snapshots[last + 1].t


# -- the pipeline -------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


@dataclass
class StageResult:
    name: str
    ok: bool
    gating: bool = True
    info: dict = field(default_factory=dict)


@dataclass
class UniformBoundReport:
    """Stage-by-stage record of one experiment with the final verdict."""

    config: ExperimentConfig
    z_s: float
    rho_s: float
    z_bar: float
    omega: float
    t0: float | None
    stages: list[StageResult]
    witness: dict
    verdict: bool
    trajectory: Trajectory | None = None  # not serialized
    supersolution: Supersolution | None = None  # not serialized

    def stage(self, name: str) -> StageResult:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)

    def to_dict(self) -> dict:
        return _jsonable(
            {
                "config": self.config.to_dict(),
                "z_s": self.z_s,
                "rho_s": self.rho_s if math.isfinite(self.rho_s) else "inf",
                "z_bar": self.z_bar,
                "omega": self.omega,
                "t0": self.t0,
                "stages": [
                    {"name": s.name, "ok": bool(s.ok), "gating": s.gating, "info": s.info}
                    for s in self.stages
                ],
                "witness": self.witness,
                "verdict": self.verdict,
            }
        )


def _check_hypotheses(config: ExperimentConfig, gamma: float) -> None:
    k_min = max(2.0 - gamma, 1.0 + gamma)
    for k in config.k_moments:
        if k < k_min - 1e-12:
            raise ConfigError(
                f"moment order k = {k} is below max(2 - gamma, 1 + gamma) = {k_min}; "
                "the certified pipeline needs at least that order"
            )
    if config.stretched:
        if gamma >= 1.0:
            raise ConfigError(
                "stretched-exponential certificates need the sublinear branch "
                "(gamma < 1); refuse for the linear branch"
            )
        for alpha, mu in config.stretched:
            if alpha <= 0 or not (0 < mu <= 1.0 - gamma + 1e-12):
                raise ConfigError(
                    f"stretched pair (alpha={alpha}, mu={mu}) needs alpha > 0 and "
                    f"0 < mu <= 1 - gamma = {1.0 - gamma}"
                )


def run_uniform_moment_experiment(config: ExperimentConfig) -> UniformBoundReport:
    """Run the full certificate pipeline for one configuration.

    Raises SupercriticalError when the configured density is not below the
    critical density (the uniform-bound machinery does not apply there) and
    ConfigError for weights outside the certified hypotheses.  Every other
    failure is a stage verdict, never a silent pass.
    """
    model = config.build_model()
    _check_hypotheses(config, model.gamma)
    crit = critical_values(model, config.n_series)
    if not crit.diverges and config.rho >= crit.rho_s:
        raise SupercriticalError(
            f"density {config.rho:.6g} >= critical density {crit.rho_s:.6g}; "
            "uniform moment bounds only hold below it"
        )
    z_bar = solve_monomer_activity(model, config.rho, critical=crit)
    eq = equilibrium_profile(model, z_bar, config.n, critical=crit)
    state0 = config.initial_state(eq)
    rho = density(state0)

    omega = config.omega if config.omega > 0 else z_bar + config.omega_margin * (crit.z_s - z_bar)
    if not omega < crit.z_s:
        raise ConfigError(f"omega = {omega:.6g} must be below z_s = {crit.z_s:.6g}")

    stages: list[StageResult] = []
    opts = IntegrateOptions(
        rel_tol=config.rel_tol,
        abs_tol=config.abs_tol,
        n_snapshots=config.snapshots,
        tail_threshold=config.tail_threshold,
        track_moments=tuple(config.k_moments),
        track_stretched=tuple(tuple(p) for p in config.stretched),
        equilibrium=eq,
    )
    trajectory = integrate(state0, model, config.t_end, opts)
    rho_drift = max(abs(s.rho - rho) for s in trajectory.snapshots) / rho
    stages.append(
        StageResult(
            "integrate",
            ok=rho_drift <= 1e-10,
            info={
                "n_steps": trajectory.n_steps,
                "n_rejected": trajectory.n_rejected,
                "rho_drift": rho_drift,
                "warnings": list(trajectory.warnings),
            },
        )
    )

    t0 = detect_threshold(trajectory, omega)
    if t0 is None:
        flag = "never-below-omega"
    elif t0 > 0.8 * config.t_end:
        flag = "late-detection"  # little horizon left to exercise domination
    else:
        flag = None
    stages.append(
        StageResult(
            "threshold",
            ok=t0 is not None,
            info={"t0": t0, "omega": omega, "flag": flag},
        )
    )

    witness: dict = {}
    if t0 is not None:
        i_grid = np.arange(1, config.n + 1, dtype=float)
        weight_sets: list[tuple[str, np.ndarray, str, object]] = []
        for k in config.k_moments:
            weight_sets.append((f"k={k:g}", i_grid**k, "moment", k))
        for alpha, mu in config.stretched:
            weight_sets.append(
                (f"alpha={alpha:g},mu={mu:g}", np.exp(alpha * i_grid**mu), "stretched", (alpha, mu))
            )

        pre = [s for s in trajectory.snapshots if s.t <= t0 + 1e-12]
        for label, phi, kind, key in weight_sets:
            bound = short_time_constant(model, phi, rho)
            m0 = pre[0].moments[key] if kind == "moment" else pre[0].stretched[key]
            worst = 0.0
            for snap in pre:
                mt = snap.moments[key] if kind == "moment" else snap.stretched[key]
                worst = max(worst, mt / (math.exp(bound.c_phi * (snap.t - pre[0].t)) * m0))
            stages.append(
                StageResult(
                    f"short_time_bound[{label}]",
                    ok=worst <= 1.0 + 1e-8,
                    info={"c_phi": bound.c_phi, "eps": bound.eps, "a_phi": bound.a_phi, "worst_ratio": worst},
                )
            )

        snap_t0 = trajectory.at(t0)
        g_t0 = tail_density(snap_t0.c).g
        params = make_params(model, omega, rho, config.delta, n_max=max(config.n, 1000), z_s_est=crit.z_s)
        super_sol = build_supersolution(model, params, g_t0)
        check = verify_supersolution(super_sol.r, model, omega, rho, tol=1e-12 * rho)
        witness = {
            "lambda": super_sol.lam,
            "n_switch": super_sol.n_switch,
            "tail_value": super_sol.tail_value,
            "uniform_bound": super_sol.uniform_bound,
            "r_max": float(np.max(super_sol.r)),
        }
        stages.append(
            StageResult(
                "supersolution",
                ok=check.ok,
                info={"worst_margin": check.worst_margin, "worst_index": check.worst_index, **witness},
            )
        )

        tol_dom = config.tol_dom if config.tol_dom > 0 else None
        dom = check_domination(trajectory, super_sol.r, t0, tol_dom)
        stages.append(
            StageResult(
                "domination",
                ok=dom.holds,
                info={
                    "max_gap": dom.max_gap,
                    "epsilon": dom.epsilon_used,
                    "first_violation": dom.first_violation,
                    "n_snapshots": dom.n_snapshots,
                },
            )
        )

        j_grid = i_grid
        for k in config.k_moments:
            certified = (k + 1) * math.fsum(j_grid ** (k - 1) * super_sol.r)
            observed = max(s.moments[k] for s in trajectory.snapshots)
            wb = weighted_sum_bound(super_sol.r, g_t0, j_grid ** (k - 1), params)
            stages.append(
                StageResult(
                    f"certified_moment[k={k:g}]",
                    ok=observed <= certified * (1 + 1e-12) and wb.lhs <= wb.rhs,
                    info={
                        "certified": certified,
                        "observed_sup": observed,
                        "weighted_sum_lhs": wb.lhs,
                        "weighted_sum_rhs": wb.rhs,
                        "c_used": wb.c_used,
                    },
                )
            )
        for alpha, mu in config.stretched:
            weights = stretched_weights(alpha, mu)
            psi = weights.psi(config.n)
            certified = weights.eta2 * math.fsum(psi * super_sol.r)
            observed = max(s.stretched[(alpha, mu)] for s in trajectory.snapshots)
            wb = weighted_sum_bound(super_sol.r, g_t0, psi, params)
            stages.append(
                StageResult(
                    f"certified_stretched[alpha={alpha:g},mu={mu:g}]",
                    ok=observed <= certified * (1 + 1e-12) and wb.lhs <= wb.rhs,
                    info={
                        "certified": certified,
                        "observed_sup": observed,
                        "eta1": weights.eta1,
                        "eta2": weights.eta2,
                        "weighted_sum_lhs": wb.lhs,
                        "weighted_sum_rhs": wb.rhs,
                        "regime": "mu == 1 - gamma" if abs(mu - (1 - model.gamma)) < 1e-12 else "mu < 1 - gamma",
                    },
                )
            )

    # qualitative relaxation toward the equilibrium profile (informational)
    l1w = [
        math.fsum(np.arange(1, config.n + 1, dtype=float) * np.abs(s.c - eq.profile))
        for s in trajectory.snapshots
    ]
    tail_start = 3 * len(l1w) // 4
    # below ~100 rel_tol * rho the distance is integrator noise; treat it as
    # converged rather than demanding monotonicity of noise
    floor = 100.0 * config.rel_tol * rho
    eventually_decreasing = all(
        l1w[j + 1] <= max(l1w[j] * (1 + 1e-6) + 1e-12 * rho, floor)
        for j in range(tail_start, len(l1w) - 1)
    )
    stages.append(
        StageResult(
            "convergence_shadow",
            ok=bool(l1w[-1] < 1e-3 * rho and eventually_decreasing),
            gating=False,
            info={"final_l1_weighted": l1w[-1], "eventually_decreasing": eventually_decreasing},
        )
    )

    verdict = all(s.ok for s in stages if s.gating)
    return UniformBoundReport(
        config=config,
        z_s=crit.z_s,
        rho_s=crit.rho_s,
        z_bar=z_bar,
        omega=omega,
        t0=t0,
        stages=stages,
        witness=witness,
        verdict=verdict,
        trajectory=trajectory,
        supersolution=super_sol if t0 is not None else None,
    )


# -- emission -----------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def trajectory_csv_lines(
    trajectory: Trajectory,
    header: dict[str, object],
    k_moments: tuple[float, ...],
    stretched: tuple[tuple[float, float], ...],
) -> list[str]:
    lines = [f"#{key}={_fmt(value)}" for key, value in header.items()]
    k_cols = [f"M_{k:g}" for k in k_moments]
    e_cols = [f"E_{a:g}_{m:g}" for a, m in stretched]
    lines.append(",".join(["t", "c1", "rho", "H"] + k_cols + e_cols))
    for s in trajectory.snapshots:
        row = [_fmt(s.t), _fmt(s.c1), _fmt(s.rho), _fmt(s.free_energy)]
        row += [_fmt(s.moments[k]) for k in k_moments]
        row += [_fmt(s.stretched[tuple(p)]) for p in stretched]
        lines.append(",".join(row))
    return lines


def report_csv_header(report: UniformBoundReport) -> dict[str, object]:
    config = report.config
    return {
        "family": config.family,
        "gamma": config.gamma,
        "z_s": report.z_s,
        "rho": report.trajectory.snapshots[0].rho,
        "z_bar": report.z_bar,
        "omega": report.omega,
        "rel_tol": config.rel_tol,
        "abs_tol": report.trajectory.abs_tol,
    }


def emit_report(report: UniformBoundReport, out_dir: str | Path, plot_data: bool = True) -> dict[str, Path]:
    """Write summary.json, timeseries.csv and the witness export.

    The parent of ``out_dir`` must exist; missing parents surface as I/O
    errors rather than being silently created.  Outputs are bit-identical
    for identical configs.
    """
    out = Path(out_dir)
    out.mkdir(exist_ok=True)
    paths: dict[str, Path] = {}

    summary = out / "summary.json"
    summary.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    paths["summary"] = summary

    if report.trajectory is not None:
        ts = out / "timeseries.csv"
        lines = trajectory_csv_lines(
            report.trajectory,
            report_csv_header(report),
            report.config.k_moments,
            report.config.stretched,
        )
        ts.write_text("\n".join(lines) + "\n")
        paths["timeseries"] = ts

    if report.supersolution is not None:
        paths["supersolution"] = export_supersolution(report.supersolution, out)
        witness = out / "witness.json"
        witness.write_text(json.dumps(report.witness, indent=2, sort_keys=True) + "\n")
        paths["witness"] = witness

    if plot_data and report.trajectory is not None:
        names = sorted(
            s.name for s in report.stages if s.name.startswith("certified_") and "certified" in s.info
        )
        certified = {name: report.stage(name).info["certified"] for name in names}
        observed = {name: _observed_series(report, name) for name in names}
        lines = ["# t " + " ".join(f"{n} {n}_certified" for n in names)]
        for idx, snap in enumerate(report.trajectory.snapshots):
            vals = [_fmt(snap.t)]
            for name in names:
                vals.append(_fmt(observed[name][idx]))
                vals.append(_fmt(certified[name]))
            lines.append(" ".join(vals))
        bounds = out / "bounds.dat"
        bounds.write_text("\n".join(lines) + "\n")
        paths["bounds"] = bounds
    return paths


def _observed_series(report: UniformBoundReport, stage_name: str) -> list[float]:
    snaps = report.trajectory.snapshots
    if stage_name.startswith("certified_moment"):
        k = float(stage_name.split("k=")[1].rstrip("]"))
        return [s.moments[k] for s in snaps]
    inner = stage_name.split("[")[1].rstrip("]")
    alpha = float(inner.split("alpha=")[1].split(",")[0])
    mu = float(inner.split("mu=")[1])
    return [s.stretched[(alpha, mu)] for s in snaps]


def export_supersolution(sol: Supersolution, out_dir: str | Path) -> Path:
    """Write the dominating sequence as CSV columns j, r_j, s_j."""
    out = Path(out_dir)
    out.mkdir(exist_ok=True)
    lines = ["j,r_j,s_j"]
    for j in range(sol.n):
        lines.append(f"{j + 1},{_fmt(float(sol.r[j]))},{_fmt(float(sol.s[j]))}")
    path = out / "supersolution.csv"
    path.write_text("\n".join(lines) + "\n")
    return path
