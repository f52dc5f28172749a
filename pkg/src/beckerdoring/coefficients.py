"""Coagulation/fragmentation rate families and their detailed-balance data.

Rates are evaluated lazily from closed-form expressions (or a user table for
the custom family); nothing of size N is stored except the log-prefix of the
detailed-balance coefficients, which callers are expected to keep around.
All evaluations are pure functions of (model, i) and safe to share across
workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import NumericalError, ParameterError

_EVAL_RANGE = 10_000  # default range scanned when estimating sup-type constants


class Family(str, Enum):
    POWER_LAW = "power_law"
    EXPONENTIAL_TAIL = "exponential_tail"
    CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class CoefficientModel:
    """A coagulation/fragmentation rate pair a_i, b_i with growth metadata.

    ``gamma`` is the coagulation growth exponent; ``z_s_param`` the asymptotic
    fragmentation-to-coagulation ratio (None when unknown, e.g. for raw
    tables).  ``a_bar`` bounds a_i / i^gamma from above; for gamma = 1 the
    linear-branch constants ``c1_lin <= a_i/i <= c2_lin`` apply instead.
    ``b_bar`` is sup_i b_i/a_i over the evaluated range.
    """

    family: Family
    gamma: float
    z_s_param: float | None
    q: float | None = None
    mu_c: float | None = None
    sigma: float | None = None
    a_bar: float | None = None
    c1_lin: float | None = None
    c2_lin: float | None = None
    b_bar: float = 0.0
    a_table: np.ndarray | None = field(default=None, repr=False)
    b_table: np.ndarray | None = field(default=None, repr=False)

    @property
    def positivity_start(self) -> int:
        """First index at which b_i > 0 is required.

        The exponential-tail family has b_1 = 0 by convention; b_1 never
        enters the dynamics, so checks start at i = 2 there.
        """
        return 2 if self.family is Family.EXPONENTIAL_TAIL else 1

    @property
    def table_length(self) -> int | None:
        """Largest evaluable index for tabulated rates, None for formulas."""
        return len(self.a_table) if self.a_table is not None else None

    # -- rate evaluation ---------------------------------------------------

    def a(self, i):
        """Coagulation rate a_i, vectorized over integer arrays."""
        i = np.asarray(i, dtype=float)
        self._check_range(i)
        if self.family is Family.CUSTOM:
            out = self.a_table[np.asarray(i, dtype=int) - 1]
        else:
            out = i**self.gamma
        return float(out) if out.ndim == 0 else out

    def b(self, i):
        """Fragmentation rate b_i, vectorized over integer arrays."""
        i = np.asarray(i, dtype=float)
        self._check_range(i)
        if self.family is Family.CUSTOM:
            out = self.b_table[np.asarray(i, dtype=int) - 1]
        elif self.family is Family.POWER_LAW:
            out = i**self.gamma * (self.z_s_param + self.q * i ** (self.mu_c - 1.0))
        else:
            out = np.where(
                i > 1,
                self.z_s_param
                * np.where(i > 1, i - 1.0, 1.0) ** self.gamma
                * np.exp(self.sigma * (i**self.mu_c - np.where(i > 1, i - 1.0, 1.0) ** self.mu_c)),
                0.0,
            )
        return float(out) if out.ndim == 0 else out

    def log_a(self, i):
        """log a_i, evaluated without forming a_i (safe for huge i)."""
        i = np.asarray(i, dtype=float)
        self._check_range(i)
        if self.family is Family.CUSTOM:
            out = np.log(self.a_table[np.asarray(i, dtype=int) - 1])
        else:
            out = self.gamma * np.log(i)
        return float(out) if out.ndim == 0 else out

    def log_b(self, i):
        """log b_i; -inf at i = 1 for the exponential-tail family."""
        i = np.asarray(i, dtype=float)
        self._check_range(i)
        if self.family is Family.CUSTOM:
            with np.errstate(divide="ignore"):
                out = np.log(self.b_table[np.asarray(i, dtype=int) - 1])
        elif self.family is Family.POWER_LAW:
            out = self.gamma * np.log(i) + np.log(
                self.z_s_param + self.q * i ** (self.mu_c - 1.0)
            )
        else:
            im1 = np.where(i > 1, i - 1.0, 1.0)
            with np.errstate(divide="ignore"):
                out = np.where(
                    i > 1,
                    math.log(self.z_s_param)
                    + self.gamma * np.log(im1)
                    + self.sigma * (i**self.mu_c - im1**self.mu_c),
                    -np.inf,
                )
        return float(out) if out.ndim == 0 else out

    def _check_range(self, i) -> None:
        if np.any(i < 1):
            raise ParameterError("cluster sizes are 1-based")
        if self.family is Family.CUSTOM and np.any(i > len(self.a_table)):
            raise ParameterError(
                f"index beyond the tabulated range (table length {len(self.a_table)})"
            )


def _sup_ratio_b_over_a(model: CoefficientModel, n_eval: int) -> float:
    i = np.arange(model.positivity_start, n_eval + 1)
    ratio = np.exp(model.log_b(i) - model.log_a(i))
    sup = float(np.max(ratio))
    if model.z_s_param is not None:
        sup = max(sup, model.z_s_param)  # asymptotic value of b_i/a_i
    return sup


def make_power_law_model(gamma: float, z_s: float, q: float, mu_c: float) -> CoefficientModel:
    """Rates a_i = i^gamma, b_i = a_i (z_s + q i^(mu_c - 1)).

    Requires 0 < gamma <= 1, z_s > 0, q > 0, 0 < mu_c < 1.  The ratio
    b_i/a_i = z_s + q i^(mu_c-1) is largest at i = 1, so b_bar = z_s + q.
    """
    if not (0 < gamma <= 1):
        raise ParameterError(f"gamma must be in (0, 1], got {gamma}")
    if z_s <= 0 or q <= 0:
        raise ParameterError("z_s and q must be positive")
    if not (0 < mu_c < 1):
        raise ParameterError(f"mu_c must be in (0, 1), got {mu_c}")
    lin = 1.0 if gamma == 1.0 else None
    return CoefficientModel(
        family=Family.POWER_LAW,
        gamma=gamma,
        z_s_param=z_s,
        q=q,
        mu_c=mu_c,
        a_bar=1.0,
        c1_lin=lin,
        c2_lin=lin,
        b_bar=z_s + q,
    )


def make_exponential_tail_model(
    gamma: float, z_s: float, sigma: float, mu_c: float
) -> CoefficientModel:
    """Rates a_i = i^gamma, b_i = z_s (i-1)^gamma exp(sigma (i^mu_c - (i-1)^mu_c)).

    Requires 0 < gamma < 1, z_s > 0, sigma > 0, 0 < mu_c < 1.  The formula
    gives b_1 = 0; the model keeps that value as a convention and the
    dynamics never evaluate it.
    """
    if not (0 < gamma < 1):
        raise ParameterError(f"gamma must be in (0, 1) for this family, got {gamma}")
    if z_s <= 0 or sigma <= 0:
        raise ParameterError("z_s and sigma must be positive")
    if not (0 < mu_c < 1):
        raise ParameterError(f"mu_c must be in (0, 1), got {mu_c}")
    model = CoefficientModel(
        family=Family.EXPONENTIAL_TAIL,
        gamma=gamma,
        z_s_param=z_s,
        sigma=sigma,
        mu_c=mu_c,
        a_bar=1.0,
    )
    object.__setattr__(model, "b_bar", _sup_ratio_b_over_a(model, _EVAL_RANGE))
    return model


def make_custom_model(
    a: np.ndarray,
    b: np.ndarray,
    *,
    gamma: float = 1.0,
    z_s: float | None = None,
) -> CoefficientModel:
    """Model backed by tabulated rates a_1..a_L, b_1..b_L.

    ``gamma`` classifies the growth branch used by the assumption checks
    (gamma = 1 selects the linear-branch bounds).  Bound constants are
    estimated from the table itself; assumptions are then checked
    numerically rather than assumed.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape or len(a) < 2:
        raise ParameterError("rate tables must be 1-d, equal length, length >= 2")
    if np.any(a <= 0):
        raise ParameterError("tabulated a_i must be positive")
    if np.any(b[1:] <= 0) or b[0] < 0:
        raise ParameterError("tabulated b_i must be positive (b_1 may be 0)")
    i = np.arange(1, len(a) + 1, dtype=float)
    if gamma == 1.0:
        c1 = float(np.min(a / i))
        c2 = float(np.max(a / i))
        a_bar = None
    else:
        c1 = c2 = None
        a_bar = float(np.max(a / i**gamma))
    model = CoefficientModel(
        family=Family.CUSTOM,
        gamma=gamma,
        z_s_param=z_s,
        a_bar=a_bar,
        c1_lin=c1,
        c2_lin=c2,
        a_table=a,
        b_table=b,
    )
    start = 1 if b[0] > 0 else 2
    ratio = b[start - 1 :] / a[start - 1 :]
    object.__setattr__(model, "b_bar", float(np.max(ratio)))
    return model


def load_rate_table(path: str | Path, *, gamma: float = 1.0, z_s: float | None = None) -> CoefficientModel:
    """Read a whitespace-separated table with columns ``i a_i b_i``.

    Indices must be 1-based and contiguous.
    """
    data = np.loadtxt(path, dtype=float, ndmin=2)
    if data.shape[1] != 3:
        raise ParameterError(f"rate file must have 3 columns 'i a_i b_i', got {data.shape[1]}")
    idx = data[:, 0]
    if not np.array_equal(idx, np.arange(1, len(idx) + 1)):
        raise ParameterError("rate file indices must be 1-based and contiguous")
    return make_custom_model(data[:, 1], data[:, 2], gamma=gamma, z_s=z_s)


# -- detailed balance --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DetailedBalance:
    """Detailed-balance prefix Q_1..Q_N, held in log space.

    ``log_q[i-1]`` is log Q_i with Q_1 = 1 and Q_{i+1} b_{i+1} = a_i Q_i.
    ``ratio_tail`` estimates lim Q_{i+1}/Q_i as the geometric mean of the
    last N//10 consecutive ratios.
    """

    log_q: np.ndarray
    ratio_tail: float

    @property
    def n(self) -> int:
        return len(self.log_q)

    def q(self) -> np.ndarray:
        """Q_i in linear scale; entries below the double range underflow to 0."""
        return np.exp(self.log_q)


def detailed_balance(model: CoefficientModel, n: int) -> DetailedBalance:
    """Compute Q_1..Q_n by the log-space recursion log Q_{i+1} = log Q_i + log(a_i/b_{i+1})."""
    if n < 2:
        raise ParameterError("detailed balance needs n >= 2")
    i = np.arange(1, n, dtype=float)
    incr = model.log_a(i) - model.log_b(i + 1)
    log_q = np.concatenate([[0.0], np.cumsum(incr)])
    if not np.all(np.isfinite(log_q)):
        raise NumericalError("log Q_i left the representable range")
    m = max(1, n // 10)
    ratio_tail = math.exp((log_q[-1] - log_q[-1 - m]) / m)
    if ratio_tail <= 0:
        raise NumericalError("non-positive tail ratio estimate")
    return DetailedBalance(log_q=log_q, ratio_tail=ratio_tail)


# -- assumption checks -------------------------------------------------------


@dataclass(frozen=True)
class AssumptionReport:
    """Verdicts for the four structural assumptions on a rate pair.

    Violations are reported, never raised.  ``profile_start_index`` is the
    first index i0 from which Q_i z_s^i is non-increasing (1 when globally
    monotone); a non-monotone prefix is tolerated.
    """

    growth_ok: bool
    growth_first_violation: int | None
    frag_ok: bool
    frag_first_violation: int | None
    b_bar_observed: float
    ratio_ok: bool
    ratio_estimate: float  # smoothed tail value of Q_{i+1}/Q_i
    ratio_target: float | None
    profile_monotone_ok: bool
    profile_start_index: int | None

    @property
    def all_ok(self) -> bool:
        return self.growth_ok and self.frag_ok and self.ratio_ok and self.profile_monotone_ok


def check_assumptions(model: CoefficientModel, n: int, tol: float = 1e-2) -> AssumptionReport:
    """Scan i = 1..n and report whether the standing assumptions hold.

    The ratio check splits the last N/10 indices into blocks and requires
    the block-averaged gap |Q_{i+1}/Q_i - 1/z_s| to shrink monotonically
    (within tol slack per block) or to sit already within tol of the
    target; without a known z_s it falls back to a stabilization test.
    The monotonicity check of Q_i z_s^i allows an initial non-monotone
    prefix and reports its end.
    """
    if n < 10:
        raise ParameterError("assumption scan needs n >= 10")
    slack = 1e-12
    i = np.arange(1, n + 1, dtype=float)
    av = model.a(i)

    # growth bound: positivity plus the branch bound on a_i
    growth_viol = None
    if np.any(av <= 0):
        growth_viol = int(np.argmax(av <= 0)) + 1
    elif model.gamma == 1.0 and model.c1_lin is not None:
        bad = (av < model.c1_lin * i * (1 - slack)) | (av > model.c2_lin * i * (1 + slack))
        if np.any(bad):
            growth_viol = int(np.argmax(bad)) + 1
    elif model.a_bar is not None:
        bad = av > model.a_bar * i**model.gamma * (1 + slack)
        if np.any(bad):
            growth_viol = int(np.argmax(bad)) + 1

    # fragmentation bound: positivity and bounded b_i/a_i (flag a sup that is
    # still climbing at the edge of the scan)
    start = model.positivity_start
    bi = np.arange(start, n + 1, dtype=float)
    log_ratio_ba = model.log_b(bi) - model.log_a(bi)
    frag_viol = None
    bv = model.b(bi)
    if np.any(bv <= 0):
        frag_viol = int(np.argmax(bv <= 0)) + start
    b_bar_obs = float(np.exp(np.max(log_ratio_ba)))
    argmax = int(np.argmax(log_ratio_ba))
    edge = len(log_ratio_ba) - 1
    climbing = (
        argmax > 0.99 * edge
        and log_ratio_ba[edge] > log_ratio_ba[int(0.9 * edge)] + slack
    )
    frag_ok = frag_viol is None and not climbing
    if frag_viol is None and climbing:
        frag_viol = argmax + start

    # tail ratio of Q: block-averaged gaps to 1/z_s must shrink (or already
    # hit) the target; stabilization test when no z_s is known
    ir = np.arange(1, n, dtype=float)
    log_ratio_q = model.log_a(ir) - model.log_b(ir + 1)
    tail = log_ratio_q[-max(5, len(ir) // 10) :]
    blocks = np.array_split(tail, 5)
    v = np.array([math.exp(float(np.mean(b))) for b in blocks])
    estimate = float(v[-1])
    if model.z_s_param is not None:
        target = 1.0 / model.z_s_param
        gaps = np.abs(v - target)
        trending = bool(
            np.all(gaps[1:] <= gaps[:-1] * (1 + tol) + slack * target)
        )
        ratio_ok = trending or bool(gaps[-1] <= tol * target)
    else:
        target = None
        spread = float(np.max(v) - np.min(v))
        ratio_ok = bool(spread <= tol * abs(float(np.mean(v))))

    # monotonicity of Q_i z_s^i from some i0 on
    z_ref = model.z_s_param if model.z_s_param is not None else 1.0 / estimate
    if z_ref is None or z_ref <= 0:
        profile_ok, i0 = False, None
    else:
        d = log_ratio_q + math.log(z_ref)  # log of (Q_{i+1} z^{i+1}) / (Q_i z^i)
        viol = np.nonzero(d > slack)[0]
        i0 = int(viol[-1]) + 2 if len(viol) else 1
        profile_ok = i0 <= max(2, int(0.9 * n))

    return AssumptionReport(
        growth_ok=growth_viol is None,
        growth_first_violation=growth_viol,
        frag_ok=frag_ok,
        frag_first_violation=frag_viol,
        b_bar_observed=b_bar_obs,
        ratio_ok=ratio_ok,
        ratio_estimate=estimate,
        ratio_target=target,
        profile_monotone_ok=profile_ok,
        profile_start_index=i0,
    )
