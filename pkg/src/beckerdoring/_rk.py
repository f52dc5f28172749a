"""Embedded Dormand-Prince 5(4) integrator with dense output.

Generic over the right-hand side; the cluster solver layers its positivity
filter on top and the comparison-principle checks reuse it directly.  Step
control is the classic PI controller (error exponent 0.17, memory exponent
0.04, safety 0.9).  Snapshots at requested times come from the standard
quartic interpolant of the pair, so accepted steps never need to land on
the output grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericalError, ParameterError, StepSizeUnderflowError

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)
# dense-output polynomial coefficients: y(t0 + s h) = y0 + h (K^T P) [s, s^2, s^3, s^4]
_P = np.array(
    [
        [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


@dataclass
class StepStats:
    n_steps: int = 0
    n_rejected_error: int = 0
    n_rejected_filter: int = 0
    n_fev: int = 0


@dataclass
class RKSolution:
    t: float
    y: np.ndarray
    t_eval: np.ndarray
    y_eval: np.ndarray  # shape (len(t_eval), n)
    stats: StepStats = field(default_factory=StepStats)


def _error_norm(err: np.ndarray, scale: np.ndarray) -> float:
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(f, t0, y0, f0, t_end, rel_tol, abs_tol, stats) -> float:
    # Hairer's starting-step heuristic for a 5th-order pair
    scale = abs_tol + rel_tol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, t_end - t0)
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    stats.n_fev += 1
    d2 = float(np.sqrt(np.mean(((f1 - f0) / scale) ** 2))) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, t_end - t0)


def solve_rk54(
    f: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    y0: np.ndarray,
    t_end: float,
    *,
    rel_tol: float = 1e-8,
    abs_tol: float = 1e-12,
    t_eval: np.ndarray | None = None,
    accept_filter: Callable[[float, np.ndarray], np.ndarray | None] | None = None,
    snapshot_transform: Callable[[np.ndarray], np.ndarray] | None = None,
    fixed_step: float | None = None,
    max_steps: int = 2_000_000,
) -> RKSolution:
    """Integrate y' = f(t, y) from t0 to t_end.

    ``accept_filter`` sees every step that passed the error test and may
    adjust the state (returning the new vector) or veto it (returning
    None, which halves the step).  ``snapshot_transform`` is applied to
    interpolated output states only.  ``fixed_step`` disables adaptivity
    and the veto path.
    """
    y = np.array(y0, dtype=float)
    t = float(t0)
    if t_end <= t:
        raise ParameterError("t_end must exceed t0")
    if t_eval is None:
        t_eval = np.array([t0, t_end])
    t_eval = np.asarray(t_eval, dtype=float)
    if np.any(np.diff(t_eval) <= 0):
        raise ParameterError("output times must be strictly increasing")
    if t_eval[0] < t0 - 1e-12 or t_eval[-1] > t_end + 1e-12:
        raise ParameterError("output times must lie within [t0, t_end]")

    stats = StepStats()
    n = len(y)
    k = np.empty((7, n))
    k[0] = f(t, y)
    stats.n_fev += 1

    y_eval = np.empty((len(t_eval), n))
    i_out = 0
    while i_out < len(t_eval) and t_eval[i_out] <= t0 + 1e-15 * max(1.0, abs(t0)):
        out = y.copy()
        y_eval[i_out] = snapshot_transform(out) if snapshot_transform else out
        i_out += 1

    if fixed_step is not None:
        h = float(fixed_step)
        if h <= 0:
            raise ParameterError("fixed_step must be positive")
    else:
        h = _initial_step(f, t, y, k[0], t_end, rel_tol, abs_tol, stats)
    fac_old = 1e-4

    while t < t_end:
        if stats.n_steps + stats.n_rejected_error + stats.n_rejected_filter >= max_steps:
            raise StepSizeUnderflowError(t, h)
        tiny = 1e-14 * max(1.0, abs(t))
        last = t + h >= t_end - tiny
        if last:
            h = t_end - t
        if h < tiny and not last:
            raise StepSizeUnderflowError(t, h)

        for s in range(1, 7):
            k[s] = f(t + _C[s] * h, y + h * (_A[s] @ k[:s]))
        stats.n_fev += 6
        y_new = y + h * (_B[:6] @ k[:6])
        # FSAL: _A[6] equals _B[:6], so k[6] already holds f(t+h, y_new)

        if fixed_step is None:
            err = h * (_E @ k)
            scale = abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = _error_norm(err, scale)
            if not math.isfinite(err_norm) or err_norm > 1.0:
                stats.n_rejected_error += 1
                if math.isfinite(err_norm):
                    factor = max(_MIN_FACTOR, _SAFETY * err_norm**-0.17 * fac_old**0.04)
                else:
                    factor = _MIN_FACTOR
                h *= min(1.0, factor)
                continue
        else:
            err_norm = 0.0
            if not np.all(np.isfinite(y_new)):
                raise NumericalError(
                    f"fixed-step solution left the representable range at t={t:.6g} "
                    f"(h={h:.3g} is past the stability limit)"
                )

        y_accepted = y_new
        filtered = False
        if accept_filter is not None:
            result = accept_filter(t + h, y_new)
            if result is None:
                if fixed_step is not None:
                    raise ParameterError("accept_filter may not veto in fixed-step mode")
                stats.n_rejected_filter += 1
                h *= 0.5
                continue
            filtered = result is not y_new
            y_accepted = result

        # emit snapshots inside (t, t+h] from the dense interpolant
        t_new = t_end if last else t + h
        while i_out < len(t_eval) and t_eval[i_out] <= t_new + 1e-15 * max(1.0, abs(t_new)):
            tq = t_eval[i_out]
            if tq >= t_new - 1e-15 * max(1.0, abs(t_new)):
                out = y_accepted.copy()
            else:
                theta = (tq - t) / h
                powers = np.array([theta, theta**2, theta**3, theta**4])
                out = y + h * ((k.T @ _P) @ powers)
            y_eval[i_out] = snapshot_transform(out) if snapshot_transform else out
            i_out += 1

        t = t_new
        y = y_accepted
        stats.n_steps += 1
        if filtered:
            k[0] = f(t, y)
            stats.n_fev += 1
        else:
            k[0] = k[6]
        if fixed_step is None:
            fac = _SAFETY * max(err_norm, 1e-10) ** -0.17 * fac_old**0.04
            h *= min(_MAX_FACTOR, max(_MIN_FACTOR, fac))
            fac_old = max(err_norm, 1e-4)

    return RKSolution(t=t, y=y, t_eval=t_eval, y_eval=y_eval, stats=stats)
