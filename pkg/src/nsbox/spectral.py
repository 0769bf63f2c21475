"""Fourier representation of periodic fields on [0, L]^d and spectral calculus.

Conventions: a real field u is stored through normalized coefficients
u_hat(m) with u(x) = sum_m u_hat(m) exp(i k_m . x), where k_m = (2 pi / L) m
and m runs over the usual FFT integer modes.  The forward transform carries
the 1/N^d factor, so u_hat(0) is the arithmetic mean of the samples and
Parseval reads ||u||_L2^2 = L^d sum_m |u_hat(m)|^2.
"""

from __future__ import annotations

import numpy as np
import scipy.fft as _fft

__all__ = [
    "PeriodicGrid",
    "SpectralField",
    "transform_forward",
    "transform_backward",
    "lift_2d_to_3d",
    "random_field",
    "inner_l2",
]


class PeriodicGrid:
    """Uniform N^dim grid on the periodic cube [0, L]^dim.

    N must be even and >= 4 so the 2/3-dealiased band is non-empty.
    """

    def __init__(self, L: float, dim: int, N: int):
        if L <= 0:
            raise ValueError(f"box size must be positive, got L={L}")
        if dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {dim}")
        if N < 4 or N % 2 != 0:
            raise ValueError(f"N must be even and >= 4, got {N}")
        self.L = float(L)
        self.dim = int(dim)
        self.N = int(N)
        m1 = np.fft.fftfreq(N, 1.0 / N).astype(np.int64)
        self.k1d = (2.0 * np.pi / float(L)) * m1.astype(np.float64)
        mgrids = np.meshgrid(*([m1] * dim), indexing="ij")
        self.modes = np.stack(mgrids)  # (dim, N, ..., N) integer mode vectors
        self.k = (2.0 * np.pi / self.L) * self.modes.astype(np.float64)
        self.ksq = np.sum(self.k * self.k, axis=0)
        self.dealias_mask = np.all(np.abs(self.modes) <= N / 3.0, axis=0)
        self.cell_volume = (self.L / N) ** dim
        self.volume = self.L**dim
        self.shape = (N,) * dim
        self._sob_mult: dict[int, np.ndarray] = {}

    def coords(self):
        """Sparse meshgrid of physical coordinates (x1, x2[, x3])."""
        x = self.L * np.arange(self.N) / self.N
        return np.meshgrid(*([x] * self.dim), indexing="ij", sparse=True)

    def sobolev_multiplier(self, s: int) -> np.ndarray:
        """sum_{|alpha| <= s} prod_a k_a^(2 alpha_a), the H^s Parseval weight."""
        if s not in (0, 1, 2, 3):
            raise ValueError(f"Sobolev order must be in 0..3, got {s}")
        if s not in self._sob_mult:
            mult = np.zeros(self.shape)
            for total in range(s + 1):
                for alpha in _multi_indices(self.dim, total):
                    term = np.ones(self.shape)
                    for a, p in enumerate(alpha):
                        if p:
                            term = term * self.k[a] ** (2 * p)
                    mult += term
            mult.setflags(write=False)
            self._sob_mult[s] = mult
        return self._sob_mult[s]

    def __eq__(self, other):
        return (
            isinstance(other, PeriodicGrid)
            and self.L == other.L
            and self.dim == other.dim
            and self.N == other.N
        )

    def __hash__(self):
        return hash((self.L, self.dim, self.N))

    def __repr__(self):
        return f"PeriodicGrid(L={self.L}, dim={self.dim}, N={self.N})"


def _multi_indices(dim, total):
    """All multi-indices of the given dimension summing to `total`."""
    if dim == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _multi_indices(dim - 1, total - first):
            yield (first,) + rest


class SpectralField:
    """Real scalar/vector field stored as normalized Fourier coefficients.

    Fields are immutable values: every operation returns a new instance and
    the coefficient array is marked read-only.  `mean_free` and `solenoidal`
    are advisory flags maintained by the operations that guarantee them.
    """

    __slots__ = ("grid", "coeffs", "mean_free", "solenoidal")

    def __init__(self, grid: PeriodicGrid, coeffs, *, mean_free=False, solenoidal=False):
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.ndim != grid.dim + 1 or coeffs.shape[1:] != grid.shape:
            raise ValueError(
                f"coefficient shape {coeffs.shape} does not match grid {grid.shape}"
            )
        if coeffs.shape[0] not in (1, 2, 3):
            raise ValueError(f"components must be 1..3, got {coeffs.shape[0]}")
        coeffs.setflags(write=False)
        self.grid = grid
        self.coeffs = coeffs
        self.mean_free = bool(mean_free)
        self.solenoidal = bool(solenoidal)

    # -- construction -------------------------------------------------------

    @classmethod
    def from_physical(cls, grid: PeriodicGrid, samples) -> "SpectralField":
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim == grid.dim:
            samples = samples[None]
        if samples.shape[1:] != grid.shape:
            raise ValueError(
                f"sample shape {samples.shape} does not match grid {grid.shape}"
            )
        axes = tuple(range(1, grid.dim + 1))
        coeffs = _fft.fftn(samples, axes=axes, norm="forward")
        return cls(grid, coeffs)

    @classmethod
    def zeros(cls, grid: PeriodicGrid, components: int) -> "SpectralField":
        c = np.zeros((components,) + grid.shape, dtype=np.complex128)
        return cls(grid, c, mean_free=True, solenoidal=True)

    # -- basic queries -------------------------------------------------------

    @property
    def components(self) -> int:
        return self.coeffs.shape[0]

    def physical(self) -> np.ndarray:
        """Grid samples (real part of the inverse transform)."""
        axes = tuple(range(1, self.grid.dim + 1))
        return _fft.ifftn(self.coeffs, axes=axes, norm="forward").real

    def mean(self) -> np.ndarray:
        """Integral mean over the box, one entry per component."""
        zero = (slice(None),) + (0,) * self.grid.dim
        return self.coeffs[zero].real.copy()

    def hermitian_defect(self) -> float:
        """Max |c(-m) - conj(c(m))| over all modes (0 for real fields)."""
        axes = tuple(range(1, self.grid.dim + 1))
        flipped = self.coeffs.copy()
        for ax in axes:
            flipped = np.flip(np.roll(flipped, -1, axis=ax), axis=ax)
        return float(np.max(np.abs(flipped - np.conj(self.coeffs))))

    # -- calculus ------------------------------------------------------------

    def derivative(self, alpha) -> "SpectralField":
        """Mixed partial D^alpha via the (i k)^alpha multiplier.

        The Nyquist plane carries no odd-derivative content (its sign is not
        representable), so odd powers zero it.
        """
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.grid.dim or any(a < 0 for a in alpha):
            raise ValueError(f"bad multi-index {alpha} for dim {self.grid.dim}")
        if sum(alpha) > 3:
            raise ValueError(f"derivative order {sum(alpha)} exceeds 3")
        mult = np.ones(self.grid.shape, dtype=np.complex128)
        for a, p in enumerate(alpha):
            if p:
                mult = mult * (1j * self.grid.k[a]) ** p
                if p % 2 == 1:
                    mult[self.grid.modes[a] == -(self.grid.N // 2)] = 0.0
        out = self.coeffs * mult
        mean_free = self.mean_free or sum(alpha) >= 1
        return SpectralField(self.grid, out, mean_free=mean_free, solenoidal=self.solenoidal)

    def gradient_components(self):
        """List over axes a of the componentwise derivative d/dx_a."""
        ek = [tuple(1 if j == a else 0 for j in range(self.grid.dim)) for a in range(self.grid.dim)]
        return [self.derivative(e) for e in ek]

    def divergence(self) -> "SpectralField":
        if self.components != self.grid.dim:
            raise ValueError("divergence requires a full vector field")
        div = np.zeros((1,) + self.grid.shape, dtype=np.complex128)
        for a in range(self.grid.dim):
            div[0] += 1j * self.grid.k[a] * self.coeffs[a]
        return SpectralField(self.grid, div, mean_free=True)

    def leray_project(self) -> "SpectralField":
        """Remove the gradient part per mode: u_hat -= k (k.u_hat)/|k|^2."""
        if self.components != self.grid.dim:
            raise ValueError("projection requires a vector field with components == dim")
        g = self.grid
        kdotu = np.zeros(g.shape, dtype=np.complex128)
        for a in range(g.dim):
            kdotu += g.k[a] * self.coeffs[a]
        inv_ksq = np.zeros_like(g.ksq)
        nz = g.ksq > 0
        inv_ksq[nz] = 1.0 / g.ksq[nz]
        corr = kdotu * inv_ksq
        out = self.coeffs.copy()
        for a in range(g.dim):
            out[a] -= g.k[a] * corr
        return SpectralField(g, out, mean_free=self.mean_free, solenoidal=True)

    def subtract_mean(self) -> "SpectralField":
        out = self.coeffs.copy()
        zero = (slice(None),) + (0,) * self.grid.dim
        out[zero] = 0.0
        return SpectralField(self.grid, out, mean_free=True, solenoidal=self.solenoidal)

    def add_constant(self, vec) -> "SpectralField":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.components,):
            raise ValueError("constant vector length must equal components")
        out = self.coeffs.copy()
        zero = (slice(None),) + (0,) * self.grid.dim
        out[zero] = out[zero] + vec
        sol = self.solenoidal  # constants are divergence free
        return SpectralField(self.grid, out, mean_free=False, solenoidal=sol)

    def dealias(self) -> "SpectralField":
        """Zero every mode with any |m_a| > N/3 (2/3 rule); idempotent."""
        out = self.coeffs * self.grid.dealias_mask
        return SpectralField(self.grid, out, mean_free=self.mean_free, solenoidal=self.solenoidal)

    # -- norms ---------------------------------------------------------------

    def sobolev_norm(self, s: int) -> float:
        """(sum_{|alpha|<=s} ||D^alpha u||_L2^2)^(1/2), exact by Parseval."""
        mult = self.grid.sobolev_multiplier(s)
        total = np.sum(mult * np.sum(np.abs(self.coeffs) ** 2, axis=0))
        return float(np.sqrt(self.grid.volume * total))

    def sobolev_norm_sq(self, s: int) -> float:
        mult = self.grid.sobolev_multiplier(s)
        return float(self.grid.volume * np.sum(mult * np.sum(np.abs(self.coeffs) ** 2, axis=0)))

    def grad_norm_sq(self) -> float:
        """||grad u||_L2^2 = sum over first derivatives of all components."""
        return float(
            self.grid.volume * np.sum(self.grid.ksq * np.sum(np.abs(self.coeffs) ** 2, axis=0))
        )

    def lp_norm(self, p) -> float:
        """L_p norm of the pointwise magnitude via equal-weight quadrature."""
        if p == np.inf or p == "inf":
            mag = np.sqrt(np.sum(self.physical() ** 2, axis=0))
            return float(np.max(mag))
        if p not in (2, 3, 4, 6):
            raise ValueError(f"unsupported p={p}; use 2, 3, 4, 6 or inf")
        magsq = np.sum(self.physical() ** 2, axis=0)
        return float((self.grid.cell_volume * np.sum(magsq ** (p / 2.0))) ** (1.0 / p))

    def div_norm(self) -> float:
        return self.divergence().sobolev_norm(0)

    # -- arithmetic ----------------------------------------------------------

    def _check_compatible(self, other):
        if self.grid != other.grid or self.components != other.components:
            raise ValueError("field mismatch: grids/components differ")

    def __add__(self, other) -> "SpectralField":
        self._check_compatible(other)
        return SpectralField(
            self.grid,
            self.coeffs + other.coeffs,
            mean_free=self.mean_free and other.mean_free,
            solenoidal=self.solenoidal and other.solenoidal,
        )

    def __sub__(self, other) -> "SpectralField":
        self._check_compatible(other)
        return SpectralField(
            self.grid,
            self.coeffs - other.coeffs,
            mean_free=self.mean_free and other.mean_free,
            solenoidal=self.solenoidal and other.solenoidal,
        )

    def __mul__(self, scalar) -> "SpectralField":
        return SpectralField(
            self.grid,
            self.coeffs * float(scalar),
            mean_free=self.mean_free,
            solenoidal=self.solenoidal,
        )

    __rmul__ = __mul__

    def __repr__(self):
        return (
            f"SpectralField(components={self.components}, grid={self.grid!r}, "
            f"mean_free={self.mean_free}, solenoidal={self.solenoidal})"
        )


def transform_forward(grid: PeriodicGrid, samples) -> SpectralField:
    """Exact DFT of physical samples; inverse of `transform_backward`."""
    return SpectralField.from_physical(grid, samples)


def transform_backward(field: SpectralField) -> np.ndarray:
    return field.physical()


def lift_2d_to_3d(field2d: SpectralField, grid3d: PeriodicGrid) -> SpectralField:
    """Embed a 2D velocity into 3D: coefficients on the k3=0 plane, w=0.

    All x3-derivatives of the result vanish identically.
    """
    g2 = field2d.grid
    if g2.dim != 2 or grid3d.dim != 3:
        raise ValueError("lift maps a 2D field onto a 3D grid")
    if g2.L != grid3d.L or g2.N != grid3d.N:
        raise ValueError("2D and 3D grids must share L and N")
    if field2d.components != 2:
        raise ValueError("lift expects a 2-component velocity")
    out = np.zeros((3,) + grid3d.shape, dtype=np.complex128)
    out[0:2, :, :, 0] = field2d.coeffs
    return SpectralField(
        grid3d, out, mean_free=field2d.mean_free, solenoidal=field2d.solenoidal
    )


def random_field(
    grid: PeriodicGrid,
    components: int,
    rng: np.random.Generator,
    *,
    band=None,
    k0=None,
    mean_free=True,
    solenoidal=False,
) -> SpectralField:
    """Random real field with an optional Gaussian spectral envelope.

    `band` restricts integer mode magnitudes |m| to [lo, hi]; `k0` applies the
    envelope exp(-|k|^2 / k0^2).  Built from white physical noise so Hermitian
    symmetry is exact.
    """
    samples = rng.standard_normal((components,) + grid.shape)
    f = SpectralField.from_physical(grid, samples)
    env = np.ones(grid.shape)
    if k0 is not None:
        env = env * np.exp(-grid.ksq / float(k0) ** 2)
    if band is not None:
        lo, hi = band
        mmag = np.sqrt(np.sum(grid.modes.astype(np.float64) ** 2, axis=0))
        env = env * ((mmag >= lo) & (mmag <= hi))
    out = SpectralField(grid, f.coeffs * env)
    if mean_free:
        out = out.subtract_mean()
    if solenoidal:
        out = out.leray_project()
    return out


def inner_l2(f: SpectralField, g: SpectralField) -> float:
    """L2 inner product over the box, summed over components."""
    f._check_compatible(g)
    return float(f.grid.volume * np.sum(np.conj(f.coeffs) * g.coeffs).real)
