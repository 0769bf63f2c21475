"""Forcing families: evaluation, mean tracking, and windowed norm schedules.

A `Forcing` supplies three things to the solver and the certificate:

* the mean-free spectral field fbar(t) used in the momentum equation,
* the integral mean (1/|box|) int f dx and its time integrals, which drive
  the (exact) mean ODE, and
* per-window schedules: int_{kT}^{(k+1)T} ||fbar||^2_X dt for X in
  {l2, h1, grad}, the mean-drift path, and their sups over the window
  index.  Closed-form families certify their sups; the generic fallback
  evaluates adaptive-Simpson quadrature (rtol 1e-10) and reports the sup
  as truncated.
"""

from __future__ import annotations

import math

import numpy as np

from nsbox.spectral import PeriodicGrid, SpectralField, lift_2d_to_3d

__all__ = [
    "Forcing",
    "ZeroForcing",
    "ConstantMeanForcing",
    "OscillatingMeanForcing",
    "DecayingModeForcing",
    "CompositeForcing",
    "PeriodicExtensionForcing",
    "SampledSeriesForcing",
    "LiftedForcing",
    "adaptive_simpson",
]

_GL4_NODES = np.array(
    [-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526]
)
_GL4_WEIGHTS = np.array(
    [0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538]
)


def adaptive_simpson(f, a, b, rtol=1e-10, max_depth=30):
    """Adaptive Simpson quadrature of a scalar function on [a, b]."""

    def simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    def recurse(x0, x2, f0, f1, f2, whole, depth):
        xm = 0.5 * (x0 + x2)
        xl, xr = 0.5 * (x0 + xm), 0.5 * (xm + x2)
        fl, fr = f(xl), f(xr)
        left = simpson(x0, xm, f0, fl, f1)
        right = simpson(xm, x2, f1, fr, f2)
        if depth >= max_depth or abs(left + right - whole) <= 15 * rtol * (abs(left) + abs(right) + 1e-300):
            return left + right + (left + right - whole) / 15.0
        return recurse(x0, xm, f0, fl, f1, left, depth + 1) + recurse(
            xm, x2, f1, fr, f2, right, depth + 1
        )

    if b <= a:
        return 0.0
    fa, fb = f(a), f(b)
    fm = f(0.5 * (a + b))
    return recurse(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), 0)


def _gl4(f, a, b):
    """4-point Gauss-Legendre; exact through degree 7."""
    if b <= a:
        return 0.0 * np.asarray(f(a))
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    acc = 0.0
    for x, w in zip(_GL4_NODES, _GL4_WEIGHTS):
        acc = acc + w * np.asarray(f(mid + half * x))
    return half * acc


class Forcing:
    """Base class; defaults integrate numerically, subclasses override with
    closed forms where available."""

    kind = "closed_form"

    def __init__(self, grid: PeriodicGrid, components: int):
        self.grid = grid
        self.components = components

    # -- momentum-equation side ---------------------------------------------

    def bar_field(self, t: float):
        """Mean-free part at time t as a SpectralField, or None if zero."""
        return None

    def mean(self, t: float) -> np.ndarray:
        return np.zeros(self.components)

    def mean_integral(self, t0: float, t1: float) -> np.ndarray:
        """int_{t0}^{t1} mean(t) dt (Gauss-Legendre 4 unless overridden)."""
        return _gl4(self.mean, t0, t1)

    def mean_double_integral(self, t0: float, t1: float) -> np.ndarray:
        """int_{t0}^{t1} int_{t0}^{tau} mean(s) ds dtau = int (t1-s) mean(s) ds."""
        return _gl4(lambda s: (t1 - s) * np.asarray(self.mean(s)), t0, t1)

    # -- schedule side -------------------------------------------------------

    def bar_norm_sq(self, t: float, norm: str = "l2") -> float:
        f = self.bar_field(t)
        if f is None:
            return 0.0
        if norm == "l2":
            return f.sobolev_norm_sq(0)
        if norm == "h1":
            return f.sobolev_norm_sq(1)
        if norm == "grad":
            return f.grad_norm_sq()
        raise ValueError(f"unknown norm {norm!r}")

    def window_bar_sq_integral(self, k: int, T: float, norm: str = "l2") -> float:
        return adaptive_simpson(lambda t: self.bar_norm_sq(t, norm), k * T, (k + 1) * T)

    def sup_window_bar_sq(self, T: float, k_max: int = 64, norm: str = "l2"):
        """(sup over k of the window integral, certified?).  Generic path
        truncates at k_max."""
        vals = [self.window_bar_sq_integral(k, T, norm) for k in range(k_max + 1)]
        return max(vals), False

    def drift(self, t: float, initial_mean) -> np.ndarray:
        """Mean path: initial velocity mean plus the accumulated mean force."""
        return np.asarray(initial_mean, dtype=float) + self.mean_integral(0.0, t)

    def drift_sup_abs(self, T: float, k_max: int, initial_mean):
        """(sup_t |drift(t)| over [0,(k_max+1)T], certified?)."""
        ts = np.linspace(0.0, (k_max + 1) * T, 16 * (k_max + 1) + 1)
        val = max(float(np.linalg.norm(self.drift(t, initial_mean))) for t in ts)
        return val, False

    def window_drift_sq_integral(self, k: int, T: float, initial_mean) -> float:
        return adaptive_simpson(
            lambda t: float(np.sum(self.drift(t, initial_mean) ** 2)), k * T, (k + 1) * T
        )

    def sup_window_drift_sq(self, T: float, k_max: int, initial_mean):
        vals = [self.window_drift_sq_integral(k, T, initial_mean) for k in range(k_max + 1)]
        return max(vals), False


class ZeroForcing(Forcing):
    def mean_integral(self, t0, t1):
        return np.zeros(self.components)

    def mean_double_integral(self, t0, t1):
        return np.zeros(self.components)

    def window_bar_sq_integral(self, k, T, norm="l2"):
        return 0.0

    def sup_window_bar_sq(self, T, k_max=64, norm="l2"):
        return 0.0, True

    def drift_sup_abs(self, T, k_max, initial_mean):
        return float(np.linalg.norm(initial_mean)), True

    def window_drift_sq_integral(self, k, T, initial_mean):
        return float(np.sum(np.asarray(initial_mean, dtype=float) ** 2)) * T

    def sup_window_drift_sq(self, T, k_max, initial_mean):
        return self.window_drift_sq_integral(0, T, initial_mean), True


class ConstantMeanForcing(Forcing):
    """Spatially constant force a: pure mean, no fluctuating part."""

    def __init__(self, grid, a):
        a = np.asarray(a, dtype=float)
        super().__init__(grid, len(a))
        self.a = a

    def mean(self, t):
        return self.a.copy()

    def mean_integral(self, t0, t1):
        return self.a * (t1 - t0)

    def mean_double_integral(self, t0, t1):
        return self.a * (t1 - t0) ** 2 / 2.0

    def window_bar_sq_integral(self, k, T, norm="l2"):
        return 0.0

    def sup_window_bar_sq(self, T, k_max=64, norm="l2"):
        return 0.0, True

    def drift(self, t, initial_mean):
        return np.asarray(initial_mean, dtype=float) + self.a * t

    def drift_sup_abs(self, T, k_max, initial_mean):
        if np.any(self.a != 0.0):
            return math.inf, True
        return float(np.linalg.norm(initial_mean)), True

    def window_drift_sq_integral(self, k, T, initial_mean):
        # int_{kT}^{(k+1)T} sum_c (m_c + a_c t)^2 dt, componentwise closed form
        m = np.asarray(initial_mean, dtype=float)
        t0, t1 = k * T, (k + 1) * T
        total = 0.0
        for mc, ac in zip(m, self.a):
            total += (
                mc * mc * (t1 - t0)
                + mc * ac * (t1 * t1 - t0 * t0)
                + ac * ac * (t1**3 - t0**3) / 3.0
            )
        return total

    def sup_window_drift_sq(self, T, k_max, initial_mean):
        if np.any(self.a != 0.0):
            return math.inf, True
        return float(np.sum(np.asarray(initial_mean) ** 2)) * T, True


class OscillatingMeanForcing(Forcing):
    """mean(t) = amp * sin(omega t); closed-form integrals."""

    def __init__(self, grid, amp, omega=1.0):
        amp = np.asarray(amp, dtype=float)
        super().__init__(grid, len(amp))
        self.amp = amp
        self.omega = float(omega)

    def mean(self, t):
        return self.amp * math.sin(self.omega * t)

    def mean_integral(self, t0, t1):
        w = self.omega
        return self.amp * (math.cos(w * t0) - math.cos(w * t1)) / w

    def mean_double_integral(self, t0, t1):
        w = self.omega
        # int_{t0}^{t1} (t1 - s) amp sin(w s) ds
        val = (t1 - t0) * math.cos(w * t0) / w - (math.sin(w * t1) - math.sin(w * t0)) / w**2
        return self.amp * val

    def window_bar_sq_integral(self, k, T, norm="l2"):
        return 0.0

    def sup_window_bar_sq(self, T, k_max=64, norm="l2"):
        return 0.0, True


class DecayingModeForcing(Forcing):
    """fbar(x, t) = amplitude * exp(-rate * t) * profile(x).

    The profile must be mean-free; all window integrals are closed-form and
    the sup over windows is attained at k = 0 (certified).
    """

    kind = "closed_form"

    def __init__(self, profile: SpectralField, rate: float, amplitude: float = 1.0):
        if rate <= 0:
            raise ValueError(f"decay rate must be positive, got {rate}")
        if np.max(np.abs(profile.mean())) > 1e-13:
            raise ValueError("profile must be mean-free")
        super().__init__(profile.grid, profile.components)
        self.profile = profile
        self.rate = float(rate)
        self.amplitude = float(amplitude)
        self._norm_sq = {
            "l2": profile.sobolev_norm_sq(0),
            "h1": profile.sobolev_norm_sq(1),
            "grad": profile.grad_norm_sq(),
        }

    def bar_field(self, t):
        return self.profile * (self.amplitude * math.exp(-self.rate * t))

    def bar_norm_sq(self, t, norm="l2"):
        return self.amplitude**2 * math.exp(-2 * self.rate * t) * self._norm_sq[norm]

    def window_bar_sq_integral(self, k, T, norm="l2"):
        lam = self.rate
        w = (math.exp(-2 * lam * k * T) - math.exp(-2 * lam * (k + 1) * T)) / (2 * lam)
        return self.amplitude**2 * self._norm_sq[norm] * w

    def sup_window_bar_sq(self, T, k_max=64, norm="l2"):
        return self.window_bar_sq_integral(0, T, norm), True

    def infinite_bar_sq_integral(self, norm="l2") -> float:
        """int_0^inf ||fbar||^2 dt = amplitude^2 ||profile||^2 / (2 rate)."""
        return self.amplitude**2 * self._norm_sq[norm] / (2 * self.rate)

    def mean_integral(self, t0, t1):
        return np.zeros(self.components)

    def mean_double_integral(self, t0, t1):
        return np.zeros(self.components)

    def drift_sup_abs(self, T, k_max, initial_mean):
        return float(np.linalg.norm(initial_mean)), True

    def window_drift_sq_integral(self, k, T, initial_mean):
        return float(np.sum(np.asarray(initial_mean, dtype=float) ** 2)) * T

    def sup_window_drift_sq(self, T, k_max, initial_mean):
        return self.window_drift_sq_integral(0, T, initial_mean), True


class CompositeForcing(Forcing):
    """Sum of parts.  Fluctuating-norm schedules delegate to the single
    bar-carrying part when there is exactly one (exact); otherwise they fall
    back to quadrature on the summed field."""

    def __init__(self, parts):
        parts = list(parts)
        if not parts:
            raise ValueError("empty composite")
        grid = parts[0].grid
        comp = parts[0].components
        if any(p.grid != grid or p.components != comp for p in parts):
            raise ValueError("composite parts must share grid and components")
        super().__init__(grid, comp)
        self.parts = parts
        self._bar_parts = [
            p for p in parts if not isinstance(p, (ConstantMeanForcing, OscillatingMeanForcing, ZeroForcing))
        ]

    def bar_field(self, t):
        fields = [p.bar_field(t) for p in self.parts]
        fields = [f for f in fields if f is not None]
        if not fields:
            return None
        out = fields[0]
        for f in fields[1:]:
            out = out + f
        return out

    def mean(self, t):
        return sum(p.mean(t) for p in self.parts)

    def mean_integral(self, t0, t1):
        return sum(p.mean_integral(t0, t1) for p in self.parts)

    def mean_double_integral(self, t0, t1):
        return sum(p.mean_double_integral(t0, t1) for p in self.parts)

    def window_bar_sq_integral(self, k, T, norm="l2"):
        if len(self._bar_parts) == 1:
            return self._bar_parts[0].window_bar_sq_integral(k, T, norm)
        if not self._bar_parts:
            return 0.0
        return super().window_bar_sq_integral(k, T, norm)

    def sup_window_bar_sq(self, T, k_max=64, norm="l2"):
        if len(self._bar_parts) == 1:
            return self._bar_parts[0].sup_window_bar_sq(T, k_max, norm)
        if not self._bar_parts:
            return 0.0, True
        return super().sup_window_bar_sq(T, k_max, norm)

    def drift_sup_abs(self, T, k_max, initial_mean):
        if any(isinstance(p, ConstantMeanForcing) and np.any(p.a != 0.0) for p in self.parts):
            return math.inf, True
        certs = []
        others = []
        for p in self.parts:
            if isinstance(p, (DecayingModeForcing, ZeroForcing)):
                certs.append(p)
            else:
                others.append(p)
        if not others:
            return float(np.linalg.norm(initial_mean)), True
        return super().drift_sup_abs(T, k_max, initial_mean)

    def window_drift_sq_integral(self, k, T, initial_mean):
        consts = [p for p in self.parts if isinstance(p, ConstantMeanForcing)]
        if len(consts) == 1 and all(
            isinstance(p, (DecayingModeForcing, ZeroForcing)) or p is consts[0] for p in self.parts
        ):
            return consts[0].window_drift_sq_integral(k, T, initial_mean)
        if all(isinstance(p, (DecayingModeForcing, ZeroForcing)) for p in self.parts):
            return float(np.sum(np.asarray(initial_mean, dtype=float) ** 2)) * T
        return super().window_drift_sq_integral(k, T, initial_mean)

    def sup_window_drift_sq(self, T, k_max, initial_mean):
        consts = [p for p in self.parts if isinstance(p, ConstantMeanForcing) and np.any(p.a != 0.0)]
        if consts:
            return math.inf, True
        if all(isinstance(p, (DecayingModeForcing, ZeroForcing, ConstantMeanForcing)) for p in self.parts):
            return self.window_drift_sq_integral(0, T, initial_mean), True
        return super().sup_window_drift_sq(T, k_max, initial_mean)


class PeriodicExtensionForcing(Forcing):
    """f(x, t) = h(x, t - kT) for t in [kT, (k+1)T): exact window reduction."""

    kind = "periodic_extension"

    def __init__(self, inner: Forcing, T: float):
        if T <= 0:
            raise ValueError("window length must be positive")
        super().__init__(inner.grid, inner.components)
        self.inner = inner
        self.T = float(T)

    def _reduce(self, t):
        k = math.floor(t / self.T)
        return t - k * self.T

    def bar_field(self, t):
        return self.inner.bar_field(self._reduce(t))

    def bar_norm_sq(self, t, norm="l2"):
        return self.inner.bar_norm_sq(self._reduce(t), norm)

    def mean(self, t):
        return self.inner.mean(self._reduce(t))

    def mean_integral(self, t0, t1):
        # accumulate over whole windows plus the two fringes
        T = self.T
        k0, k1 = math.floor(t0 / T), math.floor(t1 / T)
        if k0 == k1:
            return self.inner.mean_integral(t0 - k0 * T, t1 - k0 * T)
        per = self.inner.mean_integral(0.0, T)
        acc = self.inner.mean_integral(t0 - k0 * T, T) + (k1 - k0 - 1) * per
        return acc + self.inner.mean_integral(0.0, t1 - k1 * T)

    def window_bar_sq_integral(self, k, T, norm="l2"):
        if abs(T - self.T) < 1e-12:
            return self.inner.window_bar_sq_integral(0, T, norm)
        return super().window_bar_sq_integral(k, T, norm)

    def sup_window_bar_sq(self, T, k_max=64, norm="l2"):
        if abs(T - self.T) < 1e-12:
            return self.inner.window_bar_sq_integral(0, T, norm), True
        return super().sup_window_bar_sq(T, k_max, norm)

    def drift_sup_abs(self, T, k_max, initial_mean):
        per = self.inner.mean_integral(0.0, self.T)
        if np.max(np.abs(per)) > 1e-14:
            return math.inf, True  # mean accumulates every window
        return super().drift_sup_abs(T, min(k_max, 4), initial_mean)


class SampledSeriesForcing(Forcing):
    """Linear interpolation of stored (time, field, mean) samples."""

    kind = "sampled_series"

    def __init__(self, times, bar_fields, means=None):
        times = np.asarray(times, dtype=float)
        if len(times) < 2 or np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing, length >= 2")
        if len(bar_fields) != len(times):
            raise ValueError("one field per sample time")
        super().__init__(bar_fields[0].grid, bar_fields[0].components)
        self.times = times
        self.fields = list(bar_fields)
        self.means = (
            np.zeros((len(times), self.components)) if means is None else np.asarray(means, dtype=float)
        )

    def _locate(self, t):
        t = min(max(t, self.times[0]), self.times[-1])
        i = int(np.searchsorted(self.times, t, side="right") - 1)
        i = min(i, len(self.times) - 2)
        w = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        return i, w

    def bar_field(self, t):
        i, w = self._locate(t)
        return self.fields[i] * (1.0 - w) + self.fields[i + 1] * w

    def mean(self, t):
        i, w = self._locate(t)
        return (1.0 - w) * self.means[i] + w * self.means[i + 1]


class LiftedForcing(Forcing):
    """2D base forcing viewed on the 3D grid (for full-flow cross checks)."""

    def __init__(self, inner: Forcing, grid3d: PeriodicGrid):
        super().__init__(grid3d, 3)
        self.inner = inner
        self._grid3d = grid3d

    def bar_field(self, t):
        f = self.inner.bar_field(t)
        if f is None:
            return None
        return lift_2d_to_3d(f, self._grid3d)

    def mean(self, t):
        m = self.inner.mean(t)
        return np.concatenate([m, [0.0]])

    def mean_integral(self, t0, t1):
        m = self.inner.mean_integral(t0, t1)
        return np.concatenate([m, [0.0]])

    def mean_double_integral(self, t0, t1):
        m = self.inner.mean_double_integral(t0, t1)
        return np.concatenate([m, [0.0]])
