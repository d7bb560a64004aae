"""Rate functions for large and moderate deviations of degree paths.

Everything here is deterministic. Paths are piecewise linear, so the path
functionals reduce to per-segment closed forms. ``SmoothPath`` covers the
few analytic paths used as references (for example the hub limit shape).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate, optimize

INF = math.inf

# ----------------------------------------------------------------------------
# scalar transforms


def xi(u: float) -> float:
    """log 1/(1-u) for u < 1, infinite otherwise."""
    return -math.log1p(-u) if u < 1 else INF


def xi_star(t: float) -> float:
    """t - 1 - log t for t > 0, infinite otherwise."""
    return t - 1 - math.log(t) if t > 0 else INF


def psi_fn(t: float) -> float:
    """1 - t + t log t on t >= 0, with the value 1 at t = 0."""
    if t < 0:
        return INF
    if t == 0:
        return 1.0
    if math.isinf(t):
        return INF
    return 1 - t + t * math.log(t)


def _exponent(alpha: float) -> float:
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    return alpha / (1 - alpha)


# ----------------------------------------------------------------------------
# occupation-time transforms
#
# The integrals over [u, v] are taken in the variable y = log(s - u). That
# turns the logarithmic blow-up at s = u (when zeta approaches u^a) and the
# s^a cusp at s = 0 into smooth, exponentially decaying integrands.

_QUAD = dict(epsabs=0.0, epsrel=1e-12, limit=400)


def _log_integral(g: Callable[[float], float], u: float, v: float, scale: float) -> float:
    """Integral of g over [u, v]; ``scale`` is the width of any feature near u."""
    delta = v - u
    top = math.log(delta)
    bottom = min(top, math.log(scale)) - 45.0
    mid = min(top, math.log(scale))
    h = lambda y: g(u + math.exp(y)) * math.exp(y)
    pieces = [(bottom, mid), (mid, top)] if mid < top else [(bottom, top)]
    total = 0.0
    with warnings.catch_warnings():
        # quad flags roundoff once it is at machine precision; the oracle
        # tests pin the achieved accuracy instead
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for lo, hi in pieces:
            total += integrate.quad(h, lo, hi, **_QUAD)[0]
    return total


class _Occupation:
    """Lambda_{u,v} and its derivative parametrised by w = zeta_max - zeta > 0."""

    def __init__(self, u: float, v: float, alpha: float):
        self.u, self.v = float(u), float(v)
        self.a = _exponent(alpha)
        if self.a == 0:
            self.zmax = 1.0
        else:
            self.zmax = self.u**self.a if self.u > 0 else 0.0

    def _sa_minus_zmax(self, s: float) -> float:
        a, u = self.a, self.u
        if a == 0:
            return 0.0
        if u == 0:
            return s**a
        return u**a * math.expm1(a * math.log1p((s - u) / u))

    def scale(self, w: float) -> float:
        """Distance from u over which s^a - zeta grows from w to about 2w."""
        a, u = self.a, self.u
        if a == 0 or u == 0:
            return self.v - self.u
        return min(self.v - self.u, w * u ** (1 - a) / a)

    def value(self, w: float) -> float:
        zeta = self.zmax - w

        def g(s):
            sa = s**self.a
            gap = self._sa_minus_zmax(s) + w  # s^a - zeta
            if abs(zeta) < 0.5 * sa:
                return -sa * math.log1p(-zeta / sa)
            return -sa * math.log(gap / sa)

        return _log_integral(g, self.u, self.v, self.scale(w))

    def derivative(self, w: float) -> float:
        def g(s):
            return s**self.a / (self._sa_minus_zmax(s) + w)

        return _log_integral(g, self.u, self.v, self.scale(w))


def lambda_uv(u: float, v: float, zeta: float, alpha: float) -> float:
    """Integral over [u, v] of s^a * xi(zeta * s^-a), a = alpha/(1-alpha)."""
    if not 0 <= u < v:
        raise ValueError("need 0 <= u < v")
    if zeta == 0:
        return 0.0
    occ = _Occupation(u, v, alpha)
    if zeta >= occ.zmax:
        return INF
    return occ.value(occ.zmax - zeta)


def lambda_uv_derivative(u: float, v: float, zeta: float, alpha: float) -> float:
    occ = _Occupation(u, v, alpha)
    if zeta >= occ.zmax:
        return INF
    return occ.derivative(occ.zmax - zeta)


LOG_W_MIN = math.log(1e-300)
LOG_W_MAX = 40 * math.log(2.0)


def lambda_uv_star(u: float, v: float, t: float, alpha: float) -> float:
    """Legendre transform sup_zeta [t zeta - Lambda_{u,v}(zeta)].

    The maximiser solves Lambda'(zeta) = t. We search in log w with
    zeta = zeta_max - w, which keeps full precision when the maximiser sits
    close to the edge of the finiteness domain.
    """
    if not 0 <= u <= v:
        raise ValueError("need 0 <= u <= v")
    a = _exponent(alpha)
    if t < 0:
        return INF
    if u == v:
        return u**a * t
    if t == 0:
        return INF
    occ = _Occupation(u, v, alpha)

    def g(log_w):
        return occ.derivative(math.exp(log_w)) - t

    hi = max(0.0, math.log(occ.zmax) if occ.zmax > 0 else 0.0)
    while g(hi) > 0:
        if hi >= LOG_W_MAX:
            raise ArithmeticError("Legendre bracket exceeded zeta > -2^40")
        hi = min(hi + 2.0, LOG_W_MAX)
    lo = hi - 1.0
    while g(lo) <= 0:
        if lo <= LOG_W_MIN:
            # derivative stays below t up to the edge: supremum at the edge
            w = 0.0 if occ.zmax == 0 else math.exp(LOG_W_MIN)
            if w == 0.0:
                return t * occ.zmax - 0.0
            return t * (occ.zmax - w) - occ.value(w)
        lo = max(lo - 4.0, LOG_W_MIN)
    root = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    w = math.exp(root)
    return t * (occ.zmax - w) - occ.value(w)


def simplj_bound_check(u: float, v: float, w: float, t: float, alpha: float) -> tuple[float, float]:
    """(Lambda*_{u,v}(t), w^a t psi(delta/t)) for comparing the two."""
    if not 0 < u < v or not u <= w <= v or not t > 0:
        raise ValueError("need 0 < u < v, w in [u, v] and t > 0")
    a = _exponent(alpha)
    return lambda_uv_star(u, v, t, alpha), w**a * t * psi_fn((v - u) / t)


# ----------------------------------------------------------------------------
# paths

@dataclass(frozen=True)
class PiecewisePath:
    """Piecewise-linear path through breakpoints (t_i, x_i).

    Outside the breakpoints it continues linearly with the first and last
    segment slopes. ``x0`` optionally declares the limit at 0+ for paths
    that start after time 0.
    """

    t: np.ndarray
    x: np.ndarray
    x0: float | None = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if t.ndim != 1 or t.shape != x.shape or t.size < 2:
            raise ValueError("need at least two breakpoints with matching t and x")
        if np.any(np.diff(t) <= 0) or t[0] < 0:
            raise ValueError("breakpoint times must be nonnegative and strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x))):
            raise ValueError("breakpoints must be finite")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)

    @classmethod
    def from_csv(cls, path: str | Path) -> "PiecewisePath":
        data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#", skiprows=_header_rows(path))
        return cls(data[:, 0], data[:, 1])

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.x) / np.diff(self.t)

    def value(self, s):
        s_arr = np.asarray(s, dtype=float)
        out = np.interp(s_arr, self.t, self.x)
        sl = self.slopes
        out = np.where(s_arr > self.t[-1], self.x[-1] + sl[-1] * (s_arr - self.t[-1]), out)
        out = np.where(s_arr < self.t[0], self.x[0] + sl[0] * (s_arr - self.t[0]), out)
        return float(out) if np.ndim(s) == 0 else out

    def limit_at_zero(self) -> float:
        if self.x0 is not None:
            return float(self.x0)
        return float(self.value(0.0))

    def with_origin(self) -> "PiecewisePath":
        """Same path with an explicit breakpoint at t = 0."""
        if self.t[0] == 0:
            return self
        return PiecewisePath(
            np.concatenate(([0.0], self.t)), np.concatenate(([self.limit_at_zero()], self.x))
        )

    def clipped(self, lo: float, hi: float) -> "PiecewisePath":
        """Breakpoints restricted to [lo, hi] with the endpoints inserted."""
        inner = (self.t > lo) & (self.t < hi)
        t = np.concatenate(([lo], self.t[inner], [hi]))
        return PiecewisePath(t, self.value(t))


def _header_rows(path) -> int:
    with open(path) as fh:
        first = fh.readline()
    try:
        [float(v) for v in first.split(",")]
        return 0
    except ValueError:
        return 1


@dataclass(frozen=True)
class SmoothPath:
    """Analytic path given by value and derivative callables.

    Beyond ``t_end`` the path continues with slope ``tail_slope``. ``kinks``
    lists interior points where the derivative jumps.
    """

    value_fn: Callable
    derivative: Callable
    t_end: float
    tail_slope: float = 0.0
    kinks: tuple = field(default=())
    x0: float | None = None

    def value(self, s):
        s_arr = np.asarray(s, dtype=float)
        inside = self.value_fn(np.minimum(s_arr, self.t_end))
        out = np.where(s_arr > self.t_end, inside + self.tail_slope * (s_arr - self.t_end), inside)
        return float(out) if np.ndim(s) == 0 else out

    def limit_at_zero(self) -> float:
        return float(self.value_fn(0.0)) if self.x0 is None else float(self.x0)


def identity_path(t_end: float = 1.0) -> PiecewisePath:
    return PiecewisePath([0.0, t_end], [0.0, t_end])


# ----------------------------------------------------------------------------
# large deviation rates

def _power_integral(x0: float, slope: float, dt: float, a: float) -> float:
    """Integral over [0, dt] of (x0 + slope*s)^a."""
    if slope == 0 or dt == 0:
        return (x0**a if x0 > 0 or a == 0 else 0.0) * dt
    x1 = x0 + slope * dt
    if x0 > 0 and slope * dt <= x0:
        # short relative step: avoid cancellation in x1^(a+1) - x0^(a+1)
        growth = math.expm1((a + 1) * math.log1p(slope * dt / x0))
        return x0 ** (a + 1) * growth / ((a + 1) * slope)
    return (x1 ** (a + 1) - max(x0, 0.0) ** (a + 1)) / ((a + 1) * slope)


def ldp_rate_J(path: PiecewisePath, alpha: float, window: tuple[float, float] | None = None) -> float:
    """J(x) = integral of x^a (1 - x' + x' log x') dt, a = alpha/(1-alpha).

    Without a window the integral runs over [0, inf) and the final segment is
    extended; that tail is finite only if its bracket or integrand vanishes.
    """
    a = _exponent(alpha)
    if path.t[0] != 0 or path.x[0] != 0:
        raise ValueError("J needs a path starting at (0, 0)")
    slopes = path.slopes
    if np.any(slopes < 0):
        return INF
    if window is not None:
        lo, hi = window
        if not 0 <= lo < hi:
            raise ValueError("window must satisfy 0 <= lo < hi")
        seg = path.clipped(lo, hi)
        return _j_segments(seg.t, seg.x, a)
    total = _j_segments(path.t, path.x, a)
    last = float(slopes[-1])
    if psi_fn(last) == 0:
        return total
    if last == 0 and path.x[-1] == 0 and a > 0:
        return total
    return INF


def _j_segments(t, x, a) -> float:
    total = 0.0
    for i in range(t.size - 1):
        dt = t[i + 1] - t[i]
        slope = (x[i + 1] - x[i]) / dt
        if slope < 0:
            return INF
        bracket = psi_fn(slope)
        if bracket == 0:
            continue
        total += bracket * _power_integral(x[i], slope, dt, a)
    return total


def approx_J_partition(path, partition, alpha: float) -> float:
    """Partition sum of (t_j - t_{j-1}) x(t_j)^a psi(difference quotient)."""
    a = _exponent(alpha)
    p = np.asarray(partition, dtype=float)
    if p.size < 2 or np.any(np.diff(p) <= 0):
        raise ValueError("partition must be strictly increasing with at least two points")
    xs = np.asarray(path.value(p), dtype=float)
    total = 0.0
    for j in range(1, p.size):
        dt = p[j] - p[j - 1]
        bracket = psi_fn((xs[j] - xs[j - 1]) / dt)
        if bracket == 0:
            continue
        weight = xs[j] ** a if xs[j] > 0 or a == 0 else 0.0
        total += dt * weight * bracket
    return total


def dyadic_partition(lo: float, hi: float, k: int) -> np.ndarray:
    return lo + (hi - lo) * np.arange(2**k + 1) / 2**k


def fit_kink(path: PiecewisePath) -> float:
    """Least-squares a for the shape (t - a)_+ over the breakpoints."""
    t, x = path.t, path.x
    a0 = min(max(t[-1] - x[-1], 0.0), t[-1])

    def sse(a):
        return float(np.sum((x - np.maximum(t - a, 0.0)) ** 2))

    lo, hi = max(0.0, a0 - 1.0), min(t[-1], a0 + 1.0)
    if hi <= lo:
        return a0
    res = optimize.minimize_scalar(sse, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-13})
    return float(res.x) if sse(res.x) <= sse(a0) else a0


def ldp_rate_K(path: PiecewisePath, f0: float, shape_tol: float = 1e-9) -> float:
    """a*f0 if the path is (t - a)_+ (within shape_tol), infinite otherwise."""
    if path.t[0] != 0 or path.x[0] != 0:
        raise ValueError("K needs a path starting at (0, 0)")
    if np.any(path.slopes < 0) or abs(path.slopes[-1] - 1) > shape_tol:
        return INF
    a = fit_kink(path)
    pts = np.union1d(path.t, [a])
    gap = np.max(np.abs(path.value(pts) - np.maximum(pts - a, 0.0)))
    return a * f0 if gap <= shape_tol else INF


# ----------------------------------------------------------------------------
# moderate deviations

@dataclass(frozen=True)
class RateParams:
    alpha: float
    c: float = 1.0
    f0: float = 1.0

    def __post_init__(self):
        if not 0 <= self.alpha < 0.5:
            raise ValueError("alpha must lie in [0, 1/2)")
        if not self.c >= 0:
            raise ValueError("c must be nonnegative")
        if not self.f0 > 0:
            raise ValueError("f0 must be positive")

    @property
    def boundary_weight(self) -> float:
        """f0/c with 1/0 = inf."""
        return INF if self.c == 0 else self.f0 / self.c

    @property
    def exponent(self) -> float:
        return _exponent(self.alpha)

    def b_kappa(self, a_kappa: float, kappa: float, lbar: float) -> float:
        """Second speed b = a kappa^{(2 alpha - 1)/(1 - alpha)} lbar."""
        return a_kappa * kappa ** ((2 * self.alpha - 1) / (1 - self.alpha)) * lbar


def _boundary_term(x0: float, params: RateParams) -> float:
    if x0 > 0:
        return INF
    if x0 == 0:
        return 0.0
    w = params.boundary_weight
    return INF if math.isinf(w) else -w * x0


def mdp_rate_I(path, params: RateParams) -> float:
    """I(x) = 1/2 integral of x'^2 t^a dt - (f0/c) x_0 on (0, inf)."""
    a = params.exponent
    boundary = _boundary_term(path.limit_at_zero(), params)
    if math.isinf(boundary):
        return INF
    if isinstance(path, SmoothPath):
        if path.tail_slope != 0:
            return INF
        return 0.5 * _smooth_energy(path, a) + boundary
    p = path.with_origin()
    slopes = p.slopes
    if slopes[-1] != 0:
        return INF
    t = p.t
    energy = np.sum(slopes**2 * (t[1:] ** (a + 1) - t[:-1] ** (a + 1))) / (a + 1)
    return 0.5 * float(energy) + boundary


def _smooth_energy(path: SmoothPath, a: float) -> float:
    """Integral over (0, t_end) of x'(t)^2 t^a, computed in log time."""
    edges = sorted({float(k) for k in path.kinks if 0 < k < path.t_end} | {path.t_end})
    ys = [math.log(edges[0]) - 200.0] + [math.log(e) for e in edges]
    h = lambda y: path.derivative(math.exp(y)) ** 2 * math.exp((a + 1) * y)
    return sum(
        integrate.quad(h, lo, hi, **_QUAD)[0] for lo, hi in zip(ys[:-1], ys[1:])
    )


def script_I(u: float, v: float, alpha: float) -> float:
    """Integral of s^{-a} over [u, v]."""
    if not 0 <= u < v:
        raise ValueError("need 0 <= u < v")
    if not 0 <= alpha < 0.5:
        raise ValueError("alpha must lie in [0, 1/2)")
    p = (1 - 2 * alpha) / (1 - alpha)
    return (1 - alpha) / (1 - 2 * alpha) * (v**p - u**p)


def mdp_occ_rate(u: float, v: float, t: float, params: RateParams) -> float:
    """Occupation-time rate: quadratic, or linear past the kink when u = 0."""
    occ = script_I(u, v, params.alpha)
    w = params.boundary_weight
    if u > 0 or t <= occ * w:
        return t * t / (2 * occ)
    return w * t - 0.5 * occ * w * w


def mdp_occ_threshold(v: float, params: RateParams) -> float:
    return script_I(0.0, v, params.alpha) * params.boundary_weight


def hub_shape_path(alpha: float) -> SmoothPath:
    """Limit shape z_t = r (t^p wedge 1) with r = (1-a)/(1-2a), p = 1/r."""
    if not 0 <= alpha < 0.5:
        raise ValueError("alpha must lie in [0, 1/2)")
    r = (1 - alpha) / (1 - 2 * alpha)
    a = _exponent(alpha)
    return SmoothPath(
        value_fn=lambda t: r * np.minimum(np.asarray(t, dtype=float) ** (1 / r), 1.0),
        derivative=lambda t: t ** (-a) if t < 1 else 0.0,
        t_end=1.0,
        tail_slope=0.0,
        x0=0.0,
    )
