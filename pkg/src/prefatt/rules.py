"""Attachment rules and the deterministic scalings built from them.

A rule is a weight function ``f`` on indegrees. A new vertex links to an old
vertex of indegree ``k`` with probability ``f(k)/n``. The scalings here are
the artificial degree ``Phi``, artificial time ``Psi``, the variance clock
``varphi`` and the composed rule ``fbar = f o Phi^-1``.
"""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

EULER_GAMMA = 0.57721566490153286061

# Harmonic numbers are tabulated up to this index and expanded beyond it.
HARMONIC_SWITCH = 10**6

# Hard cap on the number of cached prefix entries (about 400 MB for three
# float64 arrays). Beyond this the degree scale is far outside desk reach.
PREFIX_CAP = 2**24

# numba-side family codes, see ``_kernels.f_at``
CODE_POWER, CODE_AFFINE, CODE_CONST, CODE_TABLE_HOLD, CODE_TABLE_AFFINE = range(5)


class Preference(enum.Enum):
    STRONG = "strong"
    WEAK = "weak"


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    probe_bound: int
    constraint: str | None = None
    index: int | None = None
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "probe_bound": self.probe_bound,
            "constraint": self.constraint,
            "index": self.index,
            "detail": self.detail,
        }


class _Prefix:
    """Lazily grown prefix sums of 1/f and 1/f**2.

    Arrays are replaced wholesale under a lock, never mutated in place, so a
    reader holding an old reference always sees a consistent snapshot.
    """

    def __init__(self, rule: "AttachmentRule"):
        self._rule = rule
        self._lock = threading.Lock()
        self.f = np.empty(0)
        self.inv = np.zeros(1)  # inv[j] = Phi(j)
        self.inv2 = np.zeros(1)  # inv2[j] = sum_{k<j} 1/f(k)^2

    def ensure(self, length: int) -> "_Prefix":
        if length <= self.f.size:
            return self
        if length > PREFIX_CAP:
            raise OverflowError(
                f"degree scale {length} exceeds the prefix cache cap {PREFIX_CAP}"
            )
        with self._lock:
            if length <= self.f.size:
                return self
            new = max(1024, self.f.size)
            while new < length:
                new *= 2
            new = min(new, PREFIX_CAP)
            f = self._rule.values(0, new)
            inv = np.concatenate(([0.0], np.cumsum(1.0 / f)))
            inv2 = np.concatenate(([0.0], np.cumsum(1.0 / (f * f))))
            # publish the larger arrays last so readers never see a short inv
            self.inv, self.inv2 = inv, inv2
            self.f = f
        return self

    def cover_phi(self, t: float, which: str = "inv") -> "_Prefix":
        """Grow until the requested prefix exceeds ``t`` (or the cap is hit)."""
        arr = getattr(self, which)
        while arr[-1] <= t:
            if self.f.size >= PREFIX_CAP:
                raise OverflowError(f"value {t} is beyond the cached degree range")
            self.ensure(max(1024, 2 * self.f.size))
            arr = getattr(self, which)
        return self


class AttachmentRule:
    """Base class. Subclasses provide ``values`` and ``kernel_args``."""

    def __init__(self):
        self._prefix = _Prefix(self)

    def __call__(self, k):
        return self.evaluate(k)

    def evaluate(self, k):
        if np.isscalar(k):
            return float(self.values(int(k), int(k) + 1)[0])
        k = np.asarray(k, dtype=np.int64)
        return self._vectorized(k)

    def values(self, start: int, stop: int) -> np.ndarray:
        return self._vectorized(np.arange(start, stop, dtype=np.int64))

    def _vectorized(self, k: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def kernel_args(self) -> tuple[int, float, float, np.ndarray]:
        raise NotImplementedError

    @property
    def f0(self) -> float:
        return self.evaluate(0)

    def _analytic_violation(self) -> tuple[str, int, str] | None:
        return None

    def spec(self) -> str:
        raise NotImplementedError

    def __repr__(self) -> str:
        return self.spec()


class PowerLaw(AttachmentRule):
    """f(k) = gamma * (k+1)**alpha."""

    def __init__(self, gamma: float, alpha: float):
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0 <= alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")
        self.gamma = float(gamma)
        self.alpha = float(alpha)
        super().__init__()

    def _vectorized(self, k):
        return self.gamma * (k + 1.0) ** self.alpha

    def kernel_args(self):
        return CODE_POWER, self.gamma, self.alpha, np.zeros(1)

    def _analytic_violation(self):
        # gamma*(k+1)**alpha <= k+1 for all k iff gamma <= 1
        if self.gamma > 1:
            return "f(k) <= k+1", 0, f"f(0)={self.gamma} > 1"
        return None

    def spec(self):
        return f"power:gamma={self.gamma!r},alpha={self.alpha!r}"


class Affine(AttachmentRule):
    """f(k) = eta*k + 1."""

    def __init__(self, eta: float):
        if not 0 < eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        self.eta = float(eta)
        super().__init__()

    def _vectorized(self, k):
        return self.eta * k + 1.0

    def kernel_args(self):
        return CODE_AFFINE, self.eta, 0.0, np.zeros(1)

    def spec(self):
        return f"affine:eta={self.eta!r}"


class Constant(AttachmentRule):
    def __init__(self, c: float):
        if not c > 0:
            raise ValueError("c must be positive")
        self.c = float(c)
        super().__init__()

    def _vectorized(self, k):
        return np.full(np.shape(k), self.c)

    def kernel_args(self):
        return CODE_CONST, self.c, 0.0, np.zeros(1)

    def _analytic_violation(self):
        if self.c > 1:
            return "f(k) <= k+1", 0, f"f(0)={self.c} > 1"
        return None

    def spec(self):
        return f"const:c={self.c!r}"


class Tabulated(AttachmentRule):
    """Finite table of values plus a tail rule.

    ``tail="hold"`` repeats the last value. ``tail="affine"`` continues with
    the slope of the last two entries, which must be positive.
    """

    def __init__(self, values, tail: str = "hold", source: str | None = None):
        vals = np.asarray(values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("table must be a non-empty list of values")
        if not np.all(vals > 0) or not np.all(np.isfinite(vals)):
            raise ValueError("table values must be positive and finite")
        if tail not in ("hold", "affine"):
            raise ValueError("tail must be 'hold' or 'affine'")
        if tail == "affine":
            if vals.size < 2 or not vals[-1] > vals[-2]:
                raise ValueError("affine tail needs two entries with positive slope")
        self.table = vals
        self.tail = tail
        self.slope = float(vals[-1] - vals[-2]) if tail == "affine" else 0.0
        self.source = source
        super().__init__()

    def _vectorized(self, k):
        k = np.asarray(k)
        n = self.table.size
        inside = np.minimum(k, n - 1)
        out = self.table[inside].astype(float)
        if self.tail == "affine":
            out = out + self.slope * np.maximum(k - (n - 1), 0)
        return out

    def kernel_args(self):
        code = CODE_TABLE_HOLD if self.tail == "hold" else CODE_TABLE_AFFINE
        return code, self.slope, 0.0, self.table

    def _analytic_violation(self):
        # beyond the table the tail is constant or grows with slope <= 1 only
        # if the affine slope itself is admissible
        if self.tail == "affine" and self.slope > 1:
            return "f(k) <= k+1", self.table.size, f"tail slope {self.slope} > 1"
        return None

    def spec(self):
        src = self.source or "<inline>"
        return f"table:file={src},tail={self.tail}"


# ----------------------------------------------------------------------------
# parsing

def parse_rule(text: str) -> AttachmentRule:
    """Parse ``family:key=value,...`` into a rule."""
    family, _, rest = text.strip().partition(":")
    params = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"malformed parameter {item!r} in rule {text!r}")
        params[key.strip()] = value.strip()

    def num(name):
        if name not in params:
            raise ValueError(f"rule {text!r} is missing {name!r}")
        return float(params.pop(name))

    if family == "power":
        rule = PowerLaw(num("gamma"), num("alpha"))
    elif family == "affine":
        rule = Affine(num("eta"))
    elif family == "const":
        rule = Constant(num("c"))
    elif family == "table":
        if "file" not in params:
            raise ValueError("table rule needs file=")
        path = params.pop("file")
        tail = params.pop("tail", "hold")
        rule = Tabulated(_read_table(path), tail=tail, source=path)
    else:
        raise ValueError(f"unknown rule family {family!r}")
    if params:
        raise ValueError(f"unexpected parameters {sorted(params)} in rule {text!r}")
    return rule


def _read_table(path: str) -> list[float]:
    vals = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            vals.append(float(line.split(",")[0]))
    return vals


# ----------------------------------------------------------------------------
# validation and classification

def validate(rule: AttachmentRule, probe_bound: int = 10_000) -> ValidationReport:
    """Check positivity, monotonicity and f(k) <= k+1 for k < probe_bound."""
    if probe_bound < 1:
        raise ValueError("probe_bound must be >= 1")
    f = rule.values(0, probe_bound)
    k = np.arange(probe_bound)
    checks = (
        ("positivity", ~(f > 0)),
        ("monotonicity", np.concatenate(([False], np.diff(f) < 0))),
        ("f(k) <= k+1", f > k + 1),
    )
    first = None
    for name, bad in checks:
        idx = np.flatnonzero(bad)
        if idx.size and (first is None or idx[0] < first[1]):
            first = (name, int(idx[0]), f"f({idx[0]})={float(f[idx[0]])!r}")
    if first is None:
        first = rule._analytic_violation()
    if first is None:
        return ValidationReport(True, probe_bound)
    name, index, detail = first
    return ValidationReport(False, probe_bound, name, index, detail)


def require_valid(rule: AttachmentRule, probe_bound: int = 4096) -> None:
    report = validate(rule, probe_bound)
    if not report.valid:
        raise ValueError(
            f"invalid rule {rule!r}: {report.constraint} fails at k={report.index} "
            f"({report.detail})"
        )


def classify_preference(rule: AttachmentRule) -> Preference:
    if isinstance(rule, PowerLaw):
        return Preference.STRONG if rule.alpha > 0.5 else Preference.WEAK
    if isinstance(rule, Affine):
        return Preference.STRONG
    if isinstance(rule, Constant):
        return Preference.WEAK
    if isinstance(rule, Tabulated):
        return Preference.STRONG if rule.tail == "affine" else Preference.WEAK
    raise TypeError(f"cannot classify {rule!r}")


def varphi_infinity(rule: AttachmentRule) -> float:
    """Sum of 1/f(k)^2 over all k (infinite under weak preference)."""
    if classify_preference(rule) is Preference.WEAK:
        return math.inf
    if isinstance(rule, PowerLaw):
        return float(special.zeta(2 * rule.alpha, 1)) / rule.gamma**2
    if isinstance(rule, Affine):
        return float(special.polygamma(1, 1 / rule.eta)) / rule.eta**2
    # Tabulated with affine tail: f(n-1+i) = last + slope*i for i >= 1
    t, s = rule.table, rule.slope
    head = float(np.sum(1.0 / t**2))
    return head + float(special.zeta(2, 1 + t[-1] / s)) / s**2


# ----------------------------------------------------------------------------
# scalings

def _prefix(rule: AttachmentRule) -> _Prefix:
    return rule._prefix


def phi(rule: AttachmentRule, u):
    """Artificial degree: piecewise-linear prefix sum of 1/f."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0):
        raise ValueError("u must be nonnegative")
    j = np.floor(u_arr).astype(np.int64)
    pre = _prefix(rule).ensure(int(j.max(initial=0)) + 1)
    out = pre.inv[j] + (u_arr - j) / pre.f[j]
    return float(out) if np.ndim(u) == 0 else out


def phi_inverse(rule: AttachmentRule, t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("t must be nonnegative")
    pre = _prefix(rule).cover_phi(float(t_arr.max(initial=0.0)))
    inv = pre.inv
    j = np.searchsorted(inv, t_arr, side="right") - 1
    out = j + (t_arr - inv[j]) * pre.f[j]
    return float(out) if np.ndim(t) == 0 else out


def fbar(rule: AttachmentRule, u):
    """f evaluated at the floor of the real degree matching artificial degree u."""
    t_arr = np.asarray(u, dtype=float)
    pre = _prefix(rule).cover_phi(float(t_arr.max(initial=0.0)))
    j = np.searchsorted(pre.inv, t_arr, side="right") - 1
    out = pre.f[j]
    return float(out) if np.ndim(u) == 0 else out


def varphi(rule: AttachmentRule, t):
    """Variance clock at artificial degree t."""
    x = np.asarray(phi_inverse(rule, t), dtype=float)
    j = np.floor(x).astype(np.int64)
    pre = _prefix(rule).ensure(int(j.max(initial=0)) + 1)
    out = pre.inv2[j] + (x - j) / pre.f[j] ** 2
    return float(out) if np.ndim(t) == 0 else out


def varphi_star(rule: AttachmentRule, y):
    """Inverse of ``varphi``."""
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr < 0):
        raise ValueError("y must be nonnegative")
    top = float(y_arr.max(initial=0.0))
    if top >= varphi_infinity(rule):
        raise ValueError("beyond clock horizon")
    pre = _prefix(rule).cover_phi(top, which="inv2")
    j = np.searchsorted(pre.inv2, y_arr, side="right") - 1
    x = j + (y_arr - pre.inv2[j]) * pre.f[j] ** 2
    jj = np.floor(x).astype(np.int64)
    pre = pre.ensure(int(jj.max(initial=0)) + 1)
    out = pre.inv[jj] + (x - jj) / pre.f[jj]
    return float(out) if np.ndim(y) == 0 else out


def prefix_arrays(rule: AttachmentRule, length: int):
    """(f, Phi, varphi-prefix) arrays covering degrees 0..length-1."""
    pre = _prefix(rule).ensure(length)
    return pre.f[:length], pre.inv[: length + 1], pre.inv2[: length + 1]


# ----------------------------------------------------------------------------
# artificial time

_HARMONIC: np.ndarray | None = None
_HARMONIC_LOCK = threading.Lock()


def _harmonic_table() -> np.ndarray:
    global _HARMONIC
    if _HARMONIC is None:
        with _HARMONIC_LOCK:
            if _HARMONIC is None:
                h = np.empty(HARMONIC_SWITCH + 1)
                h[0] = 0.0
                # extended precision keeps the running sum exact to float64
                terms = 1.0 / np.arange(1, HARMONIC_SWITCH + 1, dtype=np.longdouble)
                h[1:] = np.cumsum(terms)
                _HARMONIC = h
    return _HARMONIC


def harmonic_asymptotic(m):
    """H_m from its asymptotic expansion (accurate to 1e-16 for m >= 32)."""
    m = np.asarray(m, dtype=float)
    r = (1.0 / m) ** 2
    tail = r * (1 / 12 - r * (1 / 120 - r * (1 / 252 - r / 240)))
    return np.log(m) + EULER_GAMMA + 0.5 / m - tail


def psi(n):
    """Artificial time Psi(n) = H_{n-1}."""
    n_arr = np.asarray(n)
    if n_arr.dtype == object:  # integers beyond int64
        n_arr = n_arr.astype(float)
    if np.any(n_arr < 1):
        raise ValueError("n must be >= 1")
    m = n_arr - 1
    table = _harmonic_table()
    small = m <= HARMONIC_SWITCH
    if np.all(small):
        out = table[m.astype(np.int64)]
    else:
        out = np.where(
            small,
            table[np.minimum(m, HARMONIC_SWITCH).astype(np.int64)],
            harmonic_asymptotic(np.maximum(m, 1)),
        )
    return float(out) if np.ndim(n) == 0 else out


def psi_inverse_floor(t: float) -> int:
    """Largest n with Psi(n) <= t."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    table = _harmonic_table()
    if t < table[-1]:
        return int(np.searchsorted(table, t, side="right"))
    m = int(math.exp(t - EULER_GAMMA))
    while float(harmonic_asymptotic(m)) > t:
        m -= 1
    while float(harmonic_asymptotic(m + 1)) <= t:
        m += 1
    return m + 1


# ----------------------------------------------------------------------------
# regular variation

@dataclass(frozen=True)
class RegVarDescriptor:
    """Asymptotics for f(u) ~ c u**alpha with constant slowly varying part."""

    alpha: float
    c: float
    valid: bool = True
    lbar: float = field(init=False)

    def __post_init__(self):
        if not 0 <= self.alpha < 1 or not self.c > 0:
            raise ValueError("need alpha in [0,1) and c > 0")
        a = self.alpha
        object.__setattr__(
            self, "lbar", self.c ** (1 / (1 - a)) * (1 - a) ** (a / (1 - a))
        )

    def phi_asym(self, u):
        a = self.alpha
        return np.asarray(u, dtype=float) ** (1 - a) / ((1 - a) * self.c)

    def phi_inv_asym(self, t):
        a = self.alpha
        return (self.c * (1 - a) * np.asarray(t, dtype=float)) ** (1 / (1 - a))

    def fbar_asym(self, u):
        a = self.alpha
        return self.c ** (1 / (1 - a)) * ((1 - a) * np.asarray(u, dtype=float)) ** (
            a / (1 - a)
        )

    def _weak(self):
        if self.alpha >= 0.5:
            raise ValueError("requires alpha < 1/2")

    @property
    def clock_exponent(self) -> float:
        return (1 - 2 * self.alpha) / (1 - self.alpha)

    def varphi_asym(self, u):
        self._weak()
        a = self.alpha
        return (1 - a) / (1 - 2 * a) * np.asarray(u, dtype=float) ** self.clock_exponent / self.lbar

    def a_kappa(self, kappa):
        self._weak()
        return np.asarray(kappa, dtype=float) ** self.clock_exponent / self.lbar


def regvar_asymptotics(rule: AttachmentRule) -> RegVarDescriptor:
    if isinstance(rule, PowerLaw):
        return RegVarDescriptor(rule.alpha, rule.gamma)
    if isinstance(rule, Constant):
        return RegVarDescriptor(0.0, rule.c)
    raise ValueError("not regularly varying with known constant")
