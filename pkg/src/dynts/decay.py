"""Drift schedules, per-step discounts and cumulative discount factors.

With the drift covariance tied to the previous posterior, ``Q_t = q_t Sigma_{t-1}``,
the prior at step ``t`` is the previous posterior raised to the power
``lambda_t = 1 / (1 + q_t)``.  A sample observed at time ``t`` therefore enters
the posterior at time ``T`` with weight

    lambda_{t:T} = prod_{tau=t+1}^{T} lambda_tau.

Everything here works in the log domain: ``log lambda_{t:T} = -sum log1p(q_tau)``.
Products are never formed directly, since ``q_t`` can be as small as 1e-12 and
``T`` as large as 1e9.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.special import zeta

from .core_model import check_pd

FAMILIES = ("static", "constant", "power", "exponential")
T_MAX = 10**9
_CHUNK = 1 << 20


@dataclass(frozen=True)
class DriftSchedule:
    """Scalar drift rate ``q_t`` (inference side) or ``delta_t`` (generation side).

    Families
    --------
    static       q_t = 0
    constant     q_t = eta
    power        q_t = eta * t**(-p)
    exponential  q_t = eta * gamma**t
    """

    family: str = "static"
    eta: float = 0.0
    p: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown drift family {self.family!r}; expected one of {FAMILIES}")
        for name in ("eta", "p", "gamma"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if self.family != "static" and self.eta <= 0:
            raise ValueError(f"eta must be > 0 for the {self.family} family, got {self.eta}")
        if self.family == "exponential" and self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")

    @classmethod
    def static(cls) -> "DriftSchedule":
        return cls("static")

    @classmethod
    def constant(cls, eta: float) -> "DriftSchedule":
        return cls("constant", eta=eta)

    @classmethod
    def power(cls, eta: float, p: float) -> "DriftSchedule":
        return cls("power", eta=eta, p=p)

    @classmethod
    def exponential(cls, eta: float, gamma: float) -> "DriftSchedule":
        return cls("exponential", eta=eta, gamma=gamma)

    @property
    def is_static(self) -> bool:
        return self.family == "static"

    @property
    def is_constant(self) -> bool:
        return (
            self.family == "constant"
            or (self.family == "power" and self.p == 0.0)
            or (self.family == "exponential" and self.gamma == 1.0)
        )

    def label(self) -> str:
        if self.family == "static":
            return "0"
        if self.family == "constant":
            return f"{self.eta:g}"
        if self.family == "power":
            return f"{self.eta:g}/t^{self.p:g}"
        return f"{self.eta:g}*{self.gamma:g}^t"

    def to_dict(self) -> dict:
        out = {"family": self.family}
        if self.family != "static":
            out["eta"] = self.eta
        if self.family == "power":
            out["p"] = self.p
        if self.family == "exponential":
            out["gamma"] = self.gamma
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DriftSchedule":
        data = dict(data)
        family = data.pop("family", "static")
        unknown = set(data) - {"eta", "p", "gamma"}
        if unknown:
            raise ValueError(f"unknown drift schedule keys: {sorted(unknown)}")
        return cls(family, **data)

    # vectorised evaluation over integer steps t >= 1

    def q(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.family == "static":
            return np.zeros_like(t)
        if self.family == "constant":
            return np.full_like(t, self.eta)
        with np.errstate(over="ignore"):
            if self.family == "power":
                return self.eta * np.power(t, -self.p)
            return self.eta * np.power(self.gamma, t)

    def log_q(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.family == "static":
            return np.full_like(t, -np.inf)
        if self.family == "constant":
            return np.full_like(t, math.log(self.eta))
        if self.family == "power":
            return math.log(self.eta) - self.p * np.log(t)
        return math.log(self.eta) + t * math.log(self.gamma)

    def log1p_q(self, t) -> np.ndarray:
        """``log(1 + q_t)``, accurate for tiny q and safe when q overflows."""
        q = self.q(t)
        with np.errstate(over="ignore", invalid="ignore"):
            big = ~(q < 1e300)
            if not np.any(big):
                return np.log1p(q)
            log_q = self.log_q(t)
            return np.where(big, log_q + np.log1p(np.exp(-log_q)), np.log1p(q))


def _check_t(t: int, name: str = "t") -> int:
    if int(t) != t or t < 1:
        raise ValueError(f"{name} must be a positive integer, got {t}")
    if t > T_MAX:
        raise ValueError(f"{name} exceeds the supported maximum {T_MAX}")
    return int(t)


def q_at(schedule: DriftSchedule, t: int) -> float:
    return float(schedule.q(_check_t(t)))


def lambda_at(schedule: DriftSchedule, t: int) -> float:
    """Per-step discount ``1 / (1 + q_t)``."""
    return math.exp(-float(schedule.log1p_q(_check_t(t))))


def _log1p_q_sum(schedule: DriftSchedule, start: int, stop: int) -> float:
    """``sum_{tau=start}^{stop} log(1 + q_tau)``; zero for an empty range."""
    if stop < start or schedule.is_static:
        return 0.0
    if schedule.is_constant:
        return (stop - start + 1) * math.log1p(schedule.eta)
    total = 0.0
    for lo in range(start, stop + 1, _CHUNK):
        hi = min(lo + _CHUNK - 1, stop)
        total += float(np.sum(schedule.log1p_q(np.arange(lo, hi + 1, dtype=float))))
    return total


@dataclass(frozen=True)
class DiscountFactor:
    log_value: float

    def __post_init__(self):
        if self.log_value > 0:
            raise ValueError("a discount factor cannot exceed 1")

    @property
    def value(self) -> float:
        return math.exp(self.log_value)

    def __mul__(self, other: "DiscountFactor") -> "DiscountFactor":
        return DiscountFactor(self.log_value + other.log_value)

    def __float__(self) -> float:
        return self.value


def discount_factor(schedule: DriftSchedule, t: int, T: int) -> DiscountFactor:
    """Cumulative discount ``lambda_{t:T}`` applied at time T to the sample from time t."""
    t = _check_t(t)
    T = _check_t(T, "T")
    if t > T:
        raise ValueError(f"need t <= T, got t={t}, T={T}")
    return DiscountFactor(-_log1p_q_sum(schedule, t + 1, T))


def log_discount_curve(schedule: DriftSchedule, Ts: Iterable[int], t: int = 1) -> np.ndarray:
    """``log lambda_{t:T}`` for every ``T`` in ``Ts`` with a single running sum."""
    Ts = np.asarray(list(Ts), dtype=np.int64)
    if Ts.size == 0:
        return np.zeros(0)
    if np.any(Ts < t):
        raise ValueError("every T must be >= t")
    _check_t(int(Ts.max()), "T")
    order = np.argsort(Ts, kind="stable")
    out = np.empty(Ts.size)
    running = 0.0
    pos = t  # sum covers tau in (t, pos]
    for idx in order:
        T = int(Ts[idx])
        running += _log1p_q_sum(schedule, pos + 1, T)
        pos = T
        out[idx] = -running
    return out


# ---------------------------------------------------------------------------
# asymptotic rates

RATE_TAGS = ("super_exponential", "exponential", "sub_exponential", "power_law", "bounded_below")


@dataclass(frozen=True)
class RateClass:
    """Asymptotic behaviour of ``lambda_{1:T}`` for a schedule.

    ``form`` is the closed-form asymptote as printed in the rate table.
    ``comparison`` says how the exact factor is compared with it:

    direct  lambda / asymptote settles to a constant (the form carries its constant)
    log     log(lambda) / log(asymptote) settles (the form is an order only)
    tail    log(lambda_T / lambda_inf) / asymptote settles; for bounded schedules
            the tabulated expression is the vanishing excess over the limit
    """

    tag: str
    schedule: DriftSchedule
    form: str
    comparison: str
    lower_bound: Optional[float] = None

    def __post_init__(self):
        if self.tag not in RATE_TAGS:
            raise ValueError(f"unknown rate tag {self.tag!r}")
        if (self.lower_bound is not None) != (self.tag == "bounded_below"):
            raise ValueError("lower_bound is present iff the rate is bounded_below")

    def to_dict(self) -> dict:
        return {
            "tag": self.tag,
            "schedule": self.schedule.to_dict(),
            "asymptote": self.form,
            "comparison": self.comparison,
            "lower_bound": self.lower_bound,
        }


def classify_rate(schedule: DriftSchedule) -> RateClass:
    s = schedule
    eta = s.eta
    if s.is_static:
        raise ValueError("static schedule: no decay to classify")
    if s.is_constant:
        return RateClass("exponential", s, "(1+eta) exp{-log(1+eta) T}", "direct")
    if s.family == "power":
        p = s.p
        if p < 0:
            return RateClass("super_exponential", s, "exp{p T log T}", "log")
        if p < 1:
            return RateClass("sub_exponential", s, "exp{-eta/(1-p) T^(1-p)}", "log")
        if p == 1:
            return RateClass("power_law", s, "(T+eta)^(-eta)", "direct")
        return RateClass(
            "bounded_below", s, "eta/(p-1) T^(1-p)", "tail", lower_bound=math.exp(-eta / (p - 1))
        )
    g = s.gamma
    if g > 1:
        return RateClass("super_exponential", s, "exp{-log(gamma) T^2}", "log")
    return RateClass(
        "bounded_below", s, "eta gamma/(1-gamma) gamma^T", "tail", lower_bound=math.exp(-eta / (1 - g))
    )


def log_asymptote(rate: RateClass, T: int) -> float:
    s = rate.schedule
    eta, p, g = s.eta, s.p, s.gamma
    T = float(T)
    if rate.tag == "exponential":
        return math.log1p(eta) - math.log1p(eta) * T
    if s.family == "power":
        if rate.tag == "super_exponential":
            return p * T * math.log(T)
        if rate.tag == "sub_exponential":
            return -eta / (1 - p) * T ** (1 - p)
        if rate.tag == "power_law":
            return -eta * math.log(T + eta)
        return math.log(eta / (p - 1)) + (1 - p) * math.log(T)
    if rate.tag == "super_exponential":
        return -math.log(g) * T * T
    return math.log(eta * g / (1 - g)) + T * math.log(g)


def asymptote_value(rate: RateClass, T: int) -> float:
    """Closed-form asymptote at T; a diagnostic, not the exact factor."""
    if T < 2:
        raise ValueError("asymptote is only defined for T >= 2")
    return math.exp(log_asymptote(rate, T))


def log_tail_sum(schedule: DriftSchedule, T: int) -> float:
    """``log sum_{tau > T} log(1 + q_tau)`` for a schedule whose sum converges."""
    rate = classify_rate(schedule)
    if rate.tag != "bounded_below":
        raise ValueError(f"the tail sum diverges for a {rate.tag} schedule")
    if schedule.family == "power":
        return math.log(_power_tail(schedule.eta, schedule.p, int(T)))
    return _exponential_log_tail(schedule.eta, schedule.gamma, int(T))


def _power_tail(eta: float, p: float, T: int) -> float:
    # direct terms until eta * tau^-p <= 1/2, then the alternating zeta series
    m = max(T + 1, int(math.ceil((2.0 * eta) ** (1.0 / p))) + 1)
    head = _log1p_q_sum(DriftSchedule.power(eta, p), T + 1, m - 1)
    tail = 0.0
    for k in range(1, 400):
        term = (-1) ** (k + 1) * eta**k / k * float(zeta(k * p, m))
        tail += term
        if abs(term) <= 1e-17 * abs(tail):
            break
    return head + tail


def _exponential_log_tail(eta: float, gamma: float, T: int) -> float:
    log_eta, log_g = math.log(eta), math.log(gamma)
    acc = -math.inf
    start = T + 1
    while True:
        tau = np.arange(start, start + 4096, dtype=float)
        z = log_eta + tau * log_g
        with np.errstate(divide="ignore"):
            terms = np.where(
                z < -20.0,
                z + np.log1p(-0.5 * np.exp(np.minimum(z, 0.0))),
                np.log(np.logaddexp(0.0, z)),
            )
        acc = float(np.logaddexp(acc, np.logaddexp.reduce(terms)))
        remaining = terms[-1] - math.log1p(-gamma)
        if remaining < acc - 40.0:
            return acc
        start += 4096


def limit_log_discount(schedule: DriftSchedule) -> float:
    """``log lambda_{1:inf}`` for a bounded schedule."""
    return -math.exp(log_tail_sum(schedule, 1))


def convergence_ratio(schedule: DriftSchedule, T: int) -> float:
    """Exact factor compared with the tabulated asymptote (see :class:`RateClass`)."""
    rate = classify_rate(schedule)
    la = log_asymptote(rate, T)
    if rate.comparison == "tail":
        return math.exp(log_tail_sum(schedule, T) - la)
    log_lam = discount_factor(schedule, 1, T).log_value
    if rate.comparison == "direct":
        return math.exp(log_lam - la)
    return log_lam / la


def finite_lower_bound(schedule: DriftSchedule, T: int) -> float:
    """Finite-T lower bound on ``lambda_{1:T}`` for bounded schedules.

    Power family: exp{-eta (1 - T^(1-p)) / (p-1)};
    exponential family: exp{eta (gamma^(T+1) - 1) / (1-gamma)}.
    Both decrease to ``RateClass.lower_bound``.
    """
    rate = classify_rate(schedule)
    if rate.tag != "bounded_below":
        raise ValueError("only bounded schedules have a lower bound")
    eta = schedule.eta
    if schedule.family == "power":
        p = schedule.p
        return math.exp(-eta * (1 - float(T) ** (1 - p)) / (p - 1))
    g = schedule.gamma
    return math.exp(eta * (g ** (T + 1) - 1) / (1 - g))


def _pow_or_zero(base: float, exponent: int) -> float:
    try:
        return base**exponent
    except OverflowError:
        return 0.0


def decay_table(schedule: DriftSchedule, Ts: Iterable[int]) -> list[dict]:
    """Rows ``T, lambda, asymptote, ratio, lower_bound`` for the decay CSV."""
    rate = classify_rate(schedule)
    Ts = [int(T) for T in Ts]
    logs = log_discount_curve(schedule, Ts)
    rows = []
    for T, log_lam in zip(Ts, logs):
        la = log_asymptote(rate, T)
        if rate.comparison == "tail":
            ratio = math.exp(log_tail_sum(schedule, T) - la)
        elif rate.comparison == "direct":
            ratio = math.exp(log_lam - la)
        else:
            ratio = log_lam / la
        lam, asym = math.exp(log_lam), math.exp(la)
        if schedule.family == "constant":
            # pow is exact where the closed form is representable, exp(log) is not
            lam = asym = _pow_or_zero(1.0 + schedule.eta, 1 - T)
        rows.append(
            {
                "T": T,
                "lambda": lam,
                "asymptote": asym,
                "ratio": ratio,
                "lower_bound": rate.lower_bound,
            }
        )
    return rows


def log_spaced_steps(T_max: int, n: int = 50, T_min: int = 2) -> list[int]:
    """``min(n, T_max - T_min + 1)`` distinct integers spaced roughly
    logarithmically over ``[T_min, T_max]``, always including both ends.

    Rounding collides at the small end, so collisions are pushed up by one;
    the upper end is sparse enough to absorb that.
    """
    if T_max < T_min:
        raise ValueError(f"T_max must be >= {T_min}")
    if n < 1:
        raise ValueError("n must be >= 1")
    n = min(n, T_max - T_min + 1)
    if n == 1:
        return [int(T_max)]
    out: list[int] = []
    for i, g in enumerate(np.geomspace(T_min, T_max, n)):
        floor = out[-1] + 1 if out else T_min
        # leave room for the remaining points below T_max
        out.append(int(min(max(round(float(g)), floor), T_max - (n - 1 - i))))
    return out


def Q_matrix(schedule: DriftSchedule, t: int, Sigma_prev) -> np.ndarray:
    """Drift covariance ``q_t * Sigma_{t-1}``."""
    Sigma_prev = np.asarray(Sigma_prev, dtype=float)
    check_pd(Sigma_prev, "previous covariance")
    return q_at(schedule, t) * Sigma_prev
