"""Closed-form limit objects and predictions."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .rules import (
    Affine,
    AttachmentRule,
    Constant,
    PowerLaw,
    Tabulated,
    fbar,
    phi_inverse,
    psi,
    regvar_asymptotics,
)


DEFAULT_RECURSION_WIDTH = 2048


class TruncationWarning(UserWarning):
    pass


# ----------------------------------------------------------------------------
# limiting degree distribution

def tail_products(rule: AttachmentRule, K: int) -> np.ndarray:
    """R_k = prod_{l<=k} f(l)/(1+f(l)) for k = 0..K."""
    f = rule.values(0, K + 1)
    return np.cumprod(f / (1.0 + f))


def mu_array(rule: AttachmentRule, K: int) -> np.ndarray:
    """mu_0..mu_K by direct products (exact where no underflow occurs)."""
    f = rule.values(0, K + 1)
    head = np.concatenate(([1.0], tail_products(rule, K - 1))) if K > 0 else np.ones(1)
    return head / (1.0 + f)


def log_mu(rule: AttachmentRule, k: int) -> float:
    f = rule.values(0, k + 1)
    logs = np.log(f[:-1]) - np.log1p(f[:-1])
    return float(-math.log1p(f[-1]) + math.fsum(logs))


def mu(rule: AttachmentRule, k: int) -> float:
    """Limit weight of indegree k; switches to log space when products underflow."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    value = float(mu_array(rule, k)[-1])
    if value > 1e-280:
        return value
    return math.exp(log_mu(rule, k))


@dataclass(frozen=True)
class LimitDistribution:
    rule: AttachmentRule

    def weights(self, K: int) -> np.ndarray:
        return mu_array(self.rule, K)

    def tail(self, k: int) -> float:
        """1 - sum_{l<=k} mu_l, as a product."""
        return float(tail_products(self.rule, k)[-1])


def stretched_exp_asymptote(gamma: float, alpha: float, k) -> float:
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return -(1 / gamma) * (1 / (1 - alpha)) * np.asarray(k, dtype=float) ** (1 - alpha)


def domination_constant(rule: AttachmentRule, probe_bound: int = 100_000) -> float:
    """Smallest eta with f(k) <= eta*k + 1 for k < probe_bound (requires f(0) <= 1)."""
    f = rule.values(0, probe_bound)
    if f[0] > 1:
        return math.inf
    k = np.arange(1, probe_bound)
    return float(max(0.0, np.max((f[1:] - 1.0) / k)))


class NotDominatedError(ValueError):
    pass


def _affine_beyond(rule: AttachmentRule) -> tuple[int, float] | None:
    """(K0, slope) if f is exactly affine with slope < 1 from index K0 on."""
    if isinstance(rule, Affine) and rule.eta < 1:
        return 0, rule.eta
    if isinstance(rule, Constant):
        return 0, 0.0
    if isinstance(rule, Tabulated):
        if rule.tail == "hold":
            return rule.table.size - 1, 0.0
        if rule.slope < 1:
            return rule.table.size - 1, rule.slope
    return None


def lam(rule: AttachmentRule, tol: float = 1e-14, probe_bound: int = 100_000,
        max_terms: int = 10**7) -> float:
    """lambda = <mu, f>.

    Since f(k) mu_k equals the tail mass R_k = prod_{l<=k} f/(1+f), the sum is
    sum_k R_k. If f(l) <= eta*l + 1 with eta < 1, the Gamma-ratio series
    sum_{j>=0} Gamma(x+j)/Gamma(y+j) = Gamma(x)/((y-x-1) Gamma(y-1)) gives

        sum_{k>K} R_k <= R_K * (eta*(K+1) + 1) / (1 - eta),

    with equality when f is exactly affine beyond K. Affine tails are summed
    exactly; otherwise terms are added until the bound drops below tol.
    """
    eta = domination_constant(rule, probe_bound)
    if not eta < 1:
        raise NotDominatedError(f"series not dominated (fitted eta={eta})")
    affine = _affine_beyond(rule)
    if affine is not None:
        K0, slope = affine
        R = tail_products(rule, K0)
        return math.fsum(R) + float(R[-1]) * rule.evaluate(K0 + 1) / (1 - slope)
    total = 0.0
    R = 1.0
    k = 0
    chunk = 1024
    while k < max_terms:
        f = rule.values(k, k + chunk)
        ratios = np.cumprod(f / (1.0 + f)) * R
        kk = np.arange(k, k + chunk)
        bounds = ratios * (eta * (kk + 1) + 1) / (1 - eta)
        hit = np.flatnonzero(bounds < tol)
        if hit.size:
            return math.fsum(np.concatenate(([total], ratios[: hit[0] + 1])))
        total = math.fsum(np.concatenate(([total], ratios)))
        R = float(ratios[-1])
        k += chunk
        chunk *= 2
    raise RuntimeError("lambda did not converge within max_terms")


def expected_distribution_recursion(
    rule: AttachmentRule, N: int, k_max: int | None = None, checkpoints=None
) -> dict[int, np.ndarray]:
    """Expected indegree proportions mu(n) at the checkpoints (default: all n).

    Mass above ``k_max`` is pooled in one absorbing bucket; its exact
    aggregate dynamics keep total mass at one. The returned arrays hold
    degrees 0..k_max followed by that pooled bucket.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if k_max is None:
        k_max = DEFAULT_RECURSION_WIDTH
    k_max = max(0, min(k_max, N - 1))
    wanted = set(range(1, N + 1) if checkpoints is None else (int(c) for c in checkpoints))
    f = rule.values(0, k_max + 1)
    out = {}
    m = np.zeros(k_max + 2)
    m[0] = 1.0
    if 1 in wanted:
        out[1] = m.copy()
    for n in range(1, N):
        flow = f * m[:-1]
        new = m.copy()
        new[:-1] -= (flow + m[:-1]) / (n + 1)
        new[1:-1] += flow[:-1] / (n + 1)
        new[-1] += (flow[-1] - m[-1]) / (n + 1)
        new[0] += 1.0 / (n + 1)
        m = new
        if n + 1 in wanted:
            out[n + 1] = m.copy()
    if m[-1] > 1e-9:
        warnings.warn(
            f"mass {m[-1]:.3g} above k_max={k_max} was pooled", TruncationWarning, stacklevel=2
        )
    return out


def total_variation(p, q_weights, q_tail: float = 0.0) -> float:
    """TV between p and a reference given by weights plus leftover tail mass."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q_weights, dtype=float)
    n = max(p.size, q.size)
    pp = np.zeros(n)
    qq = np.zeros(n)
    pp[: p.size] = p
    qq[: q.size] = q
    return 0.5 * (float(np.sum(np.abs(pp - qq))) + q_tail)


def tv_to_limit(rule: AttachmentRule, proportions) -> float:
    p = np.asarray(proportions, dtype=float)
    K = p.size - 1
    weights = mu_array(rule, K)
    return total_variation(p, weights, LimitDistribution(rule).tail(K))


# ----------------------------------------------------------------------------
# degree growth

def lln_prediction(rule: AttachmentRule, n: int) -> float:
    if n < 2:
        raise ValueError("n must be >= 2")
    return phi_inverse(rule, psi(n))


def power_law_form(gamma: float, alpha: float, n) -> float:
    if not alpha < 1:
        raise ValueError("alpha must be < 1")
    return (gamma * (1 - alpha) * np.log(np.asarray(n, dtype=float))) ** (1 / (1 - alpha))


@dataclass(frozen=True)
class CLTScaling:
    a_kappa: float
    variance: float
    exponent: float


def clt_scaling(alpha: float, c: float, kappa: float, t: float) -> CLTScaling:
    """Normalisation a_kappa and the limit variance at time t."""
    if not 0 <= alpha < 0.5:
        raise ValueError("requires alpha < 1/2")
    lbar = c ** (1 / (1 - alpha)) * (1 - alpha) ** (alpha / (1 - alpha))
    expo = (1 - 2 * alpha) / (1 - alpha)
    return CLTScaling(
        a_kappa=kappa ** (expo / 2) / math.sqrt(lbar),
        variance=(1 - alpha) / (1 - 2 * alpha) * t**expo,
        exponent=expo,
    )


# ----------------------------------------------------------------------------
# hub predictions

@dataclass(frozen=True)
class HubPrediction:
    alpha: float
    rule: AttachmentRule | None = None

    def __post_init__(self):
        if not 0 <= self.alpha < 0.5:
            raise ValueError("hub laws need alpha < 1/2 (strong preference has none)")

    @property
    def ratio(self) -> float:
        return (1 - self.alpha) / (1 - 2 * self.alpha)

    @property
    def exponent(self) -> float:
        return (1 - 2 * self.alpha) / (1 - self.alpha)

    @property
    def u_max(self) -> float:
        return 0.5 * self.ratio

    def h(self, u):
        u = np.asarray(u, dtype=float)
        return -u + np.sqrt(2 * self.ratio * u)

    def z(self, t):
        t = np.asarray(t, dtype=float)
        return self.ratio * np.minimum(t**self.exponent, 1.0)

    def z_dot(self, t):
        t = np.asarray(t, dtype=float)
        a = self.alpha / (1 - self.alpha)
        return np.where(t < 1.0, t ** (-a), 0.0)

    def _fbar(self, t):
        if self.rule is None:
            raise ValueError("a rule is needed for this prediction")
        return fbar(self.rule, t)

    def s_star(self, t):
        """Artificial birth time offset t - s of the hub at artificial time t."""
        return self.u_max * np.asarray(t, dtype=float) / self._fbar(t)

    def max_offset(self, t):
        """Predicted Z^max_t - t (same leading order as s_star)."""
        return self.s_star(t)

    def log_hub_index(self, n):
        """Natural-scale prediction for log m*_n."""
        desc = regvar_asymptotics(self.rule)
        L = np.log(np.asarray(n, dtype=float))
        return self.u_max * L**self.exponent / desc.lbar

    def natural_max_offset(self, n):
        """Predicted max indegree minus Phi^-1(Psi(n))."""
        return self.u_max * np.log(np.asarray(n, dtype=float))


def hub_prediction(alpha: float, rule: AttachmentRule | None = None) -> HubPrediction:
    if rule is not None and not isinstance(rule, (PowerLaw, Constant)):
        raise ValueError("hub prediction needs a regularly varying rule")
    return HubPrediction(alpha, rule)


def window_max_prediction(u: float, v: float, alpha: float) -> tuple[float, float]:
    if not 0 <= u < v:
        raise ValueError("need 0 <= u < v")
    if not 0 <= alpha < 0.5:
        raise ValueError("requires alpha < 1/2")
    r = math.sqrt((2 - 2 * alpha) / (1 - 2 * alpha) * v)
    return -v + r, -u + r


def poisson_pmf(lmbda: float, kmax: int) -> np.ndarray:
    k = np.arange(kmax + 1)
    logp = -lmbda + k * math.log(lmbda) - np.array([math.lgamma(i + 1) for i in k])
    return np.exp(logp)
