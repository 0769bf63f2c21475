"""Time integration of the periodic-box flow systems with exact mean tracking.

Three systems share one stepper: the 2D base flow, the full 3D flow, and the
3D perturbation around a lifted 2D base flow.  Each advances its mean-free,
solenoidal part spectrally and its spatial mean by the exact mean ODE
d/dt mean = (1/|box|) int f dx.

Scheme: per-mode integrating factor exp(-nu |k|^2 dt - i k . int mean dt)
treats viscosity *and* advection by the spatial mean exactly (the latter is
a pure phase; leaving it in the explicit term is weakly unstable once the
mean grows, e.g. under a constant mean force).  The remaining nonlinearity
(advection by the mean-free velocity) and mean-free forcing are explicit:
Adams-Bashforth 2 with a Runge-Kutta 3 startup step, or RK3 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft

from nsbox.forcing import Forcing
from nsbox.spectral import PeriodicGrid, SpectralField

__all__ = [
    "SolverConfig",
    "FlowState",
    "Trajectory",
    "CFLViolation",
    "SolverAbort",
    "nonlinear_term",
    "mean_ode_step",
    "evolve_base_2d",
    "evolve_full_3d",
    "evolve_pair",
    "energy_balance_residual",
    "taylor_green_state",
]

_SCHEMES = ("imex-cnab2", "rk3-imex")


class CFLViolation(RuntimeError):
    """Step rejected: advective CFL number exceeded cfl_max."""

    def __init__(self, t, cfl, cfl_max, advisory_dt):
        super().__init__(
            f"CFL {cfl:.3g} > {cfl_max:.3g} at t={t:.6g}; retry with dt <= {advisory_dt:.3g}"
        )
        self.t = t
        self.cfl = cfl
        self.advisory_dt = advisory_dt


class SolverAbort(RuntimeError):
    """Run aborted (non-finite values detected)."""

    def __init__(self, t, step, diagnostic):
        super().__init__(f"solver abort at t={t:.6g} (step {step}): {diagnostic}")
        self.t = t
        self.step = step
        self.diagnostic = diagnostic


@dataclass
class SolverConfig:
    nu: float
    dt: float
    t_end: float
    scheme: str = "imex-cnab2"
    dealias: bool = True
    cfl_max: float = 0.5

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("viscosity must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < self.dt:
            raise ValueError("t_end must be at least one step")
        self.scheme = self.scheme.lower()
        if self.scheme not in _SCHEMES:
            raise ValueError(f"scheme must be one of {_SCHEMES}, got {self.scheme!r}")
        if self.cfl_max <= 0:
            raise ValueError("cfl_max must be positive")

    @property
    def n_steps(self) -> int:
        n = int(round(self.t_end / self.dt))
        if abs(n * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ValueError("dt must divide t_end")
        return n


@dataclass
class FlowState:
    """Mean-free solenoidal field plus its spatial mean at time t."""

    t: float
    field: SpectralField
    mean: np.ndarray
    role: str = "base2d"

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        if self.mean.shape != (self.field.components,):
            raise ValueError("mean length must equal field components")

    def velocity(self) -> SpectralField:
        """Recompose the unsplit velocity: mean-free part plus mean."""
        return self.field.add_constant(self.mean)

    def validate(self, div_tol=1e-11, mean_tol=1e-14):
        h1 = self.field.sobolev_norm(1)
        div = self.field.div_norm()
        if h1 > 0 and div > div_tol * h1:
            raise AssertionError(f"divergence {div:.3e} exceeds {div_tol:.1e} * H1")
        if np.max(np.abs(self.field.mean())) > mean_tol:
            raise AssertionError("mean-free part carries a nonzero mode 0")
        return True


@dataclass
class Trajectory:
    """Sampled states plus dense per-step scalar series."""

    role: str
    grid: PeriodicGrid
    cfg: SolverConfig
    window_T: float | None
    sample_times: list
    states: list
    series: dict
    forcing: Forcing
    initial: FlowState
    base: "Trajectory | None" = None

    def state_at(self, t: float) -> FlowState:
        for s in self.states:
            if abs(s.t - t) <= 1e-9 * max(1.0, abs(t)):
                return s
        raise KeyError(f"no stored state at t={t}")


# -- core spectral helpers on raw coefficient arrays -------------------------


def _phys(grid, c):
    axes = tuple(range(1, grid.dim + 1))
    return _fft.ifftn(c, axes=axes, norm="forward").real


def _spec(grid, s):
    axes = tuple(range(1, grid.dim + 1))
    return _fft.fftn(s, axes=axes, norm="forward")


def _project(grid, c):
    kdotu = np.zeros(grid.shape, dtype=np.complex128)
    for a in range(grid.dim):
        kdotu += grid.k[a] * c[a]
    inv = np.zeros_like(grid.ksq)
    nz = grid.ksq > 0
    inv[nz] = 1.0 / grid.ksq[nz]
    corr = kdotu * inv
    out = c.copy()
    for a in range(grid.dim):
        out[a] -= grid.k[a] * corr
    return out


def _residual_gradpart_normsq(grid, c):
    """||(I - P) c||_L2^2: the pressure-gradient reconstruction."""
    kdotu = np.zeros(grid.shape, dtype=np.complex128)
    for a in range(grid.dim):
        kdotu += grid.k[a] * c[a]
    inv = np.zeros_like(grid.ksq)
    nz = grid.ksq > 0
    inv[nz] = 1.0 / grid.ksq[nz]
    return float(grid.volume * np.sum(np.abs(kdotu) ** 2 * inv))


def _zero_mode0(c):
    zero = (slice(None),) + (0,) * (c.ndim - 1)
    c[zero] = 0.0
    return c


def _grad_phys(grid, c):
    """(dim, C, grid) physical gradients of the coefficient array c."""
    out = np.empty((grid.dim,) + c.shape, dtype=float)
    for a in range(grid.dim):
        out[a] = _phys(grid, 1j * grid.k[a] * c)
    return out


def _convective_raw(grid, u_coeffs, wbar_phys, wmean):
    """(w . grad) u pseudo-spectrally; returns (coeffs, max advecting speed)."""
    grads = _grad_phys(grid, u_coeffs)
    C = u_coeffs.shape[0]
    conv = np.zeros((C,) + grid.shape, dtype=float)
    for a in range(grid.dim):
        wa = wbar_phys[a] + wmean[a]
        for c in range(C):
            conv[c] += wa * grads[a][c]
    speedsq = np.zeros(grid.shape)
    for a in range(wbar_phys.shape[0]):
        speedsq += (wbar_phys[a] + wmean[a]) ** 2
    return _spec(grid, conv), float(np.sqrt(np.max(speedsq)))


def nonlinear_term(state: FlowState, advecting: SpectralField, advecting_mean=None) -> SpectralField:
    """Leray-projected, dealiased -(w . grad) u for the unsplit advecting
    velocity w (mean-free part `advecting` plus optional constant mean)."""
    grid = state.field.grid
    if advecting.grid != grid:
        raise ValueError("advecting field lives on a different grid")
    wmean = np.zeros(advecting.components) if advecting_mean is None else np.asarray(advecting_mean, float)
    conv, _ = _convective_raw(grid, state.field.coeffs, advecting.physical(), wmean)
    conv = -conv * grid.dealias_mask
    conv = _zero_mode0(conv)
    return SpectralField(grid, _project(grid, conv), mean_free=True, solenoidal=True)


def mean_ode_step(mean, forcing: Forcing, t: float, dt: float) -> np.ndarray:
    """mean(t+dt) = mean(t) + int_t^{t+dt} (1/|box|) int f dx dt'."""
    return np.asarray(mean, dtype=float) + forcing.mean_integral(t, t + dt)


# -- systems ------------------------------------------------------------------


class _SingleFlow:
    """Self-advecting flow (2D base or full 3D) under a given forcing."""

    def __init__(self, grid, forcing, role):
        self.grid = grid
        self.forcing = forcing
        self.role = role

    def advecting_mean_forcings(self):
        return (self.forcing,)

    def rhs(self, coeffs, mean, t, stage_ctx=None):
        grid = self.grid
        ubar_phys = _phys(grid, coeffs)
        conv, speed = _convective_raw(grid, coeffs, ubar_phys, np.zeros(len(mean)))
        raw = -conv
        fbar = self.forcing.bar_field(t)
        if fbar is not None:
            raw = raw + fbar.coeffs
        raw = raw * grid.dealias_mask
        rhs = _zero_mode0(_project(grid, raw.copy()))
        return rhs, raw, speed + float(np.linalg.norm(mean))


class _PerturbationFlow:
    """One-way coupled perturbation around a 2D base flow.

    d/dt ubar = -( (u + v_s) . grad ) ubar - ( u . grad ) vbar_s + gbar
    with u = ubar + mean_u and v_s the lifted base flow; advection of ubar
    by mean_u + mean_vs goes into the integrating factor.
    """

    def __init__(self, grid3, grid2, g_forcing, base_forcing, role="perturbation"):
        self.grid = grid3
        self.grid2 = grid2
        self.forcing = g_forcing
        self.base_forcing = base_forcing
        self.role = role
        self._base_cache = {}

    def advecting_mean_forcings(self):
        return (self.forcing, self.base_forcing)

    def set_base_stage(self, tag, coeffs2d, mean2d):
        grid2 = self.grid2
        # x3-independent base fields enter the 3D products as broadcast views
        vs_phys2 = _phys(grid2, coeffs2d)
        grad_vs2 = _grad_phys(grid2, coeffs2d)  # (2, 2, N, N)
        self._base_cache[round(tag, 12)] = (vs_phys2, grad_vs2, np.asarray(mean2d, float))

    def rhs(self, coeffs, mean, t, stage_ctx=None):
        grid = self.grid
        key = round(t if stage_ctx is None else stage_ctx, 12)
        vs_phys2, grad_vs2, mean_vs = self._base_cache[key]
        ubar_phys = _phys(grid, coeffs)
        grads_u = _grad_phys(grid, coeffs)
        conv = np.zeros((3,) + grid.shape)
        for a in range(3):
            wa = ubar_phys[a]
            if a < 2:
                wa = wa + vs_phys2[a][..., None]
            for c in range(3):
                conv[c] += wa * grads_u[a][c]
        # (u . grad) vbar_s with u = ubar + mean_u (x3-derivative vanishes)
        for a in range(2):
            ua = ubar_phys[a] + mean[a]
            for c in range(2):
                conv[c] += ua * grad_vs2[a][c][..., None]
        raw = -_spec(grid, conv)
        gbar = self.forcing.bar_field(t)
        if gbar is not None:
            raw = raw + gbar.coeffs
        raw = raw * grid.dealias_mask
        rhs = _zero_mode0(_project(grid, raw.copy()))
        speedsq = np.zeros(grid.shape)
        total_mean = mean + np.concatenate([mean_vs, [0.0]])
        for a in range(3):
            wa = ubar_phys[a]
            if a < 2:
                wa = wa + vs_phys2[a][..., None]
            speedsq += (wa + total_mean[a]) ** 2
        return rhs, raw, float(np.sqrt(np.max(speedsq)))


# -- stepping ----------------------------------------------------------------


def _pad(v, dim):
    v = np.asarray(v, dtype=float)
    if len(v) < dim:
        return np.concatenate([v, np.zeros(dim - len(v))])
    return v


def _mean_path_integrals(forcings, means, t, dt, dim):
    """Integrals of the advecting mean over [t, t+dt/2] and [t+dt/2, t+dt].

    The mean path is m(tau) = m(t) + int_t^tau mean-force, so
    int m = m(t) * h + double integral of the mean force.
    """
    h = dt / 2.0
    I1 = np.zeros(dim)
    I2 = np.zeros(dim)
    for f, m in zip(forcings, means):
        m = _pad(m, dim)
        I1 += m * h + _pad(f.mean_double_integral(t, t + h), dim)
        m_half = m + _pad(f.mean_integral(t, t + h), dim)
        I2 += m_half * h + _pad(f.mean_double_integral(t + h, t + dt), dim)
    return I1, I2


class _FactorCache:
    """Per-mode integrating factors exp(-nu |k|^2 h - i k . I).

    The viscous part is cached per substep length; the mean-advection phase
    factorizes over axes, so it costs three 1D exponentials plus broadcast
    multiplies.
    """

    def __init__(self, grid, nu):
        self.grid = grid
        self.nu = nu
        self._visc = {}

    def __call__(self, dt_sub, I_sub):
        key = round(dt_sub, 15)
        visc = self._visc.get(key)
        if visc is None:
            visc = np.exp(-self.nu * self.grid.ksq * dt_sub)
            self._visc[key] = visc
        if not np.any(I_sub != 0.0):
            return visc
        g = self.grid
        lam = visc.astype(np.complex128)
        for a in range(g.dim):
            if I_sub[a] != 0.0:
                ph = np.exp(-1j * g.k1d * I_sub[a])
                shape = [1] * g.dim
                shape[a] = g.N
                lam = lam * ph.reshape(shape)
        return lam


class _Stepper:
    """Integrating-factor stepping for one system."""

    def __init__(self, system, cfg, state0):
        self.system = system
        self.cfg = cfg
        self.coeffs = state0.field.dealias().coeffs.copy() if cfg.dealias else state0.field.coeffs.copy()
        self.mean = np.asarray(state0.mean, float).copy()
        self.prev_rhs = None
        self.prev_factor = None
        self._factor = _FactorCache(system.grid, cfg.nu)

    def rhs_now(self, t):
        return self.system.rhs(self.coeffs, self.mean, t)

    def advance(self, t, dt, rhs_now, use_rk3, stage_hook=None):
        """One step from t; rhs_now is the pre-computed explicit term at t."""
        grid = self.system.grid
        forcings = self.system.advecting_mean_forcings()
        means = self._advecting_means()
        I1, I2 = _mean_path_integrals(forcings, means, t, dt, grid.dim)
        if use_rk3:
            lam_h1 = self._factor(dt / 2.0, I1)
            lam_h2 = self._factor(dt / 2.0, I2)
            lam_f = lam_h1 * lam_h2
            n1 = rhs_now
            va = lam_h1 * (self.coeffs + (dt / 2.0) * n1)
            if stage_hook:
                stage_hook("half", va, t + dt / 2.0)
            n2, _, _ = self.system.rhs(va, self._mean_at(t, dt / 2.0), t + dt / 2.0,
                                       stage_ctx=t + dt / 2.0)
            vb = lam_f * (self.coeffs - dt * n1) + 2.0 * dt * lam_h2 * n2
            if stage_hook:
                stage_hook("full", vb, t + dt)
            n3, _, _ = self.system.rhs(vb, self._mean_at(t, dt), t + dt, stage_ctx=t + dt)
            new = lam_f * self.coeffs + (dt / 6.0) * (lam_f * n1 + 4.0 * lam_h2 * n2 + n3)
            self.prev_rhs = rhs_now
            self.prev_factor = lam_f
        else:
            lam = self._factor(dt, I1 + I2)
            new = lam * (self.coeffs + 1.5 * dt * rhs_now) - 0.5 * dt * lam * self.prev_factor * self.prev_rhs
            self.prev_rhs = rhs_now
            self.prev_factor = lam
        self.coeffs = _zero_mode0(new)
        self.mean = self._mean_at(t, dt)

    def _advecting_means(self):
        return (self.mean,)

    def _mean_at(self, t, h):
        m = self.mean.copy()
        acc = np.zeros_like(m)
        mi = self.system.forcing.mean_integral(t, t + h)
        acc[: len(mi)] += mi
        return m + acc


class _PairStepper(_Stepper):
    """Perturbation stepper whose advecting mean includes the base mean."""

    def __init__(self, system, cfg, state0, base_stepper):
        super().__init__(system, cfg, state0)
        self.base = base_stepper

    def _advecting_means(self):
        return (self.mean, self.base.mean)


# -- recording ----------------------------------------------------------------


class _Recorder:
    """Dense per-step scalar series."""

    def __init__(self, grid, role, forcing, initial_mean_norm=0.0):
        self.grid = grid
        self.role = role
        self.forcing = forcing
        self.data = {
            k: []
            for k in (
                "t",
                "l2_sq",
                "h1_sq",
                "h2_sq",
                "h3_sq",
                "grad_sq",
                "forcing_inner",
                "fbar_l2_sq",
                "gradp_sq",
                "speed",
                "dudt_sq",
            )
        }
        self.data["mean"] = []
        if role == "base2d":
            self.data["gradv_l3"] = []
        self._mults = np.stack([grid.sobolev_multiplier(s).ravel() for s in range(4)])
        self._prev_coeffs = None

    def record(self, t, coeffs, mean, raw, speed, dt):
        g = self.grid
        esq = np.sum(np.abs(coeffs) ** 2, axis=0).ravel()
        sob = g.volume * (self._mults @ esq)
        d = self.data
        d["t"].append(t)
        d["l2_sq"].append(sob[0])
        d["h1_sq"].append(sob[1])
        d["h2_sq"].append(sob[2])
        d["h3_sq"].append(sob[3])
        d["grad_sq"].append(float(g.volume * np.sum(g.ksq.ravel() * esq)))
        fbar = self.forcing.bar_field(t)
        if fbar is None:
            d["forcing_inner"].append(0.0)
            d["fbar_l2_sq"].append(0.0)
        else:
            d["forcing_inner"].append(float(g.volume * np.sum(np.conj(fbar.coeffs) * coeffs).real))
            d["fbar_l2_sq"].append(fbar.sobolev_norm_sq(0))
        d["gradp_sq"].append(_residual_gradpart_normsq(g, raw))
        d["speed"].append(speed)
        d["mean"].append(np.array(mean))
        if self._prev_coeffs is not None:
            diff = (coeffs - self._prev_coeffs) / dt
            d["dudt_sq"].append(float(g.volume * np.sum(np.abs(diff) ** 2)))
        else:
            d["dudt_sq"].append(0.0)
        self._prev_coeffs = coeffs.copy()
        if self.role == "base2d":
            gradmagsq = np.zeros(g.shape)
            for a in range(g.dim):
                gradmagsq += np.sum(_phys(g, 1j * g.k[a] * coeffs) ** 2, axis=0)
            d["gradv_l3"].append(float((g.cell_volume * np.sum(gradmagsq**1.5)) ** (1 / 3)))

    def finalize(self):
        out = {}
        for k, v in self.data.items():
            out[k] = np.array(v)
        return out


# -- drivers ------------------------------------------------------------------


def _sample_plan(cfg, window_T, sample_times):
    times = set()
    if sample_times:
        times.update(float(t) for t in sample_times)
    if window_T is not None:
        if cfg.dt > window_T:
            raise ValueError("dt exceeds the window length")
        if cfg.t_end < window_T:
            raise ValueError("t_end shorter than one window")
        k = 0
        while k * window_T <= cfg.t_end + 1e-9:
            times.add(round(k * window_T, 12))
            k += 1
    times.add(0.0)
    times.add(round(cfg.t_end, 12))
    return sorted(times)


def _check_cfl(t, dt, speed, grid, cfg):
    cfl = dt * speed * grid.N / grid.L
    if cfl > cfg.cfl_max:
        advisory = cfg.cfl_max * grid.L / (grid.N * speed)
        raise CFLViolation(t, cfl, cfg.cfl_max, advisory)


def _run_single(system, state0, cfg, window_T, sample_times, validate_every=0):
    grid = system.grid
    plan = _sample_plan(cfg, window_T, sample_times)
    rec = _Recorder(grid, system.role, system.forcing)
    stepper = _Stepper(system, cfg, state0)
    states = []
    n_steps = cfg.n_steps
    rk3 = cfg.scheme == "rk3-imex"
    for n in range(n_steps + 1):
        t = n * cfg.dt
        rhs, raw, speed = system.rhs(stepper.coeffs, stepper.mean, t)
        rec.record(t, stepper.coeffs, stepper.mean, raw, speed, cfg.dt)
        if any(abs(t - ts) <= 1e-9 for ts in plan):
            states.append(
                FlowState(
                    t=t,
                    field=SpectralField(grid, stepper.coeffs.copy(), mean_free=True, solenoidal=True),
                    mean=stepper.mean.copy(),
                    role=system.role,
                )
            )
        if n == n_steps:
            break
        _check_cfl(t, cfg.dt, speed, grid, cfg)
        use_rk3 = rk3 or stepper.prev_rhs is None
        stepper.advance(t, cfg.dt, rhs, use_rk3)
        if not np.all(np.isfinite(stepper.coeffs.view(float))):
            raise SolverAbort(t + cfg.dt, n + 1, "non-finite spectral coefficients")
        if validate_every and (n + 1) % validate_every == 0:
            FlowState(t + cfg.dt, SpectralField(grid, stepper.coeffs.copy(), mean_free=True,
                                                solenoidal=True), stepper.mean, system.role).validate()
    return Trajectory(
        role=system.role,
        grid=grid,
        cfg=cfg,
        window_T=window_T,
        sample_times=plan,
        states=states,
        series=rec.finalize(),
        forcing=system.forcing,
        initial=state0,
    )


def evolve_base_2d(state0: FlowState, forcing: Forcing, cfg: SolverConfig,
                   *, window_T=None, sample_times=None) -> Trajectory:
    """Advance the 2D base flow; the advecting velocity is the full one
    (mean-free part plus its exactly tracked mean)."""
    if state0.field.grid.dim != 2:
        raise ValueError("base flow must live on a 2D grid")
    sys2 = _SingleFlow(state0.field.grid, forcing, "base2d")
    return _run_single(sys2, state0, cfg, window_T, sample_times)


def evolve_full_3d(state0: FlowState, forcing: Forcing, cfg: SolverConfig,
                   *, window_T=None, sample_times=None) -> Trajectory:
    if state0.field.grid.dim != 3:
        raise ValueError("full flow must live on a 3D grid")
    sys3 = _SingleFlow(state0.field.grid, forcing, "full3d")
    return _run_single(sys3, state0, cfg, window_T, sample_times)


def evolve_pair(
    base_state0,
    base_forcing,
    u0: FlowState,
    g_forcing: Forcing,
    cfg: SolverConfig,
    *,
    window_T=None,
    sample_times=None,
) -> Trajectory:
    """Advance base flow and perturbation in lockstep; returns the
    perturbation trajectory with `.base` attached.

    The base flow may be given as (initial state, forcing) or as a
    previously computed `Trajectory`, which is replayed step-for-step
    (deterministically identical to the original run).
    """
    if isinstance(base_state0, Trajectory):
        traj = base_state0
        if base_forcing is None:
            base_forcing = traj.forcing
        if abs(traj.cfg.dt - cfg.dt) > 1e-15 or traj.cfg.scheme != cfg.scheme:
            raise ValueError("base trajectory time stepping does not align with cfg")
        base_state0 = traj.initial
    grid2 = base_state0.field.grid
    grid3 = u0.field.grid
    if grid2.dim != 2 or grid3.dim != 3:
        raise ValueError("pair expects a 2D base state and a 3D perturbation")
    if grid2.L != grid3.L or grid2.N != grid3.N:
        raise ValueError("base and perturbation grids must share L and N")
    plan = _sample_plan(cfg, window_T, sample_times)
    base_sys = _SingleFlow(grid2, base_forcing, "base2d")
    pert_sys = _PerturbationFlow(grid3, grid2, g_forcing, base_forcing)
    base_stepper = _Stepper(base_sys, cfg, base_state0)
    pert_stepper = _PairStepper(pert_sys, cfg, u0, base_stepper)
    base_rec = _Recorder(grid2, "base2d", base_forcing)
    pert_rec = _Recorder(grid3, "perturbation", g_forcing)
    base_states, pert_states = [], []
    n_steps = cfg.n_steps
    rk3 = cfg.scheme == "rk3-imex"
    for n in range(n_steps + 1):
        t = n * cfg.dt
        pert_sys.set_base_stage(t, base_stepper.coeffs, base_stepper.mean)
        base_rhs, base_raw, base_speed = base_stepper.rhs_now(t)
        pert_rhs, pert_raw, pert_speed = pert_stepper.rhs_now(t)
        base_rec.record(t, base_stepper.coeffs, base_stepper.mean, base_raw, base_speed, cfg.dt)
        pert_rec.record(t, pert_stepper.coeffs, pert_stepper.mean, pert_raw, pert_speed, cfg.dt)
        if any(abs(t - ts) <= 1e-9 for ts in plan):
            base_states.append(FlowState(t, SpectralField(grid2, base_stepper.coeffs.copy(),
                                                          mean_free=True, solenoidal=True),
                                         base_stepper.mean.copy(), "base2d"))
            pert_states.append(FlowState(t, SpectralField(grid3, pert_stepper.coeffs.copy(),
                                                          mean_free=True, solenoidal=True),
                                         pert_stepper.mean.copy(), "perturbation"))
        if n == n_steps:
            break
        _check_cfl(t, cfg.dt, max(base_speed, pert_speed), grid3, cfg)
        use_rk3 = rk3 or pert_stepper.prev_rhs is None
        if use_rk3:
            def base_hook(kind, coeffs, tau):
                pert_sys.set_base_stage(tau, coeffs, base_stepper._mean_at(t, tau - t))

            base_stepper.advance(t, cfg.dt, base_rhs, True, stage_hook=base_hook)
            pert_sys.set_base_stage(t + cfg.dt, base_stepper.coeffs, base_stepper.mean)
            pert_stepper.advance(t, cfg.dt, pert_rhs, True)
        else:
            base_stepper.advance(t, cfg.dt, base_rhs, False)
            pert_stepper.advance(t, cfg.dt, pert_rhs, False)
        ok = np.all(np.isfinite(pert_stepper.coeffs.view(float))) and np.all(
            np.isfinite(base_stepper.coeffs.view(float))
        )
        if not ok:
            raise SolverAbort(t + cfg.dt, n + 1, "non-finite spectral coefficients")
        pert_sys._base_cache.clear()
    base_traj = Trajectory("base2d", grid2, cfg, window_T, plan, base_states,
                           base_rec.finalize(), base_forcing, base_state0)
    return Trajectory("perturbation", grid3, cfg, window_T, plan, pert_states,
                      pert_rec.finalize(), g_forcing, u0, base=base_traj)


def energy_balance_residual(traj: Trajectory) -> dict:
    """Residual of d/dt (1/2)||ubar||^2 + nu ||grad ubar||^2 - <fbar, ubar>
    along the stored series, centered differences in time."""
    s = traj.series
    t = s["t"]
    if len(t) < 3:
        raise ValueError("need at least 3 samples for the centered residual")
    dt = t[1] - t[0]
    e = s["l2_sq"]
    dedt_half = (e[2:] - e[:-2]) / (4.0 * dt)  # d/dt of E/2
    r = dedt_half + traj.cfg.nu * s["grad_sq"][1:-1] - s["forcing_inner"][1:-1]
    return {"max_abs": float(np.max(np.abs(r))), "series": r, "t": t[1:-1]}


def taylor_green_state(grid: PeriodicGrid, amplitude=1.0) -> FlowState:
    """2D Taylor-Green velocity (sin x1 cos x2, -cos x1 sin x2) * amplitude."""
    if grid.dim != 2:
        raise ValueError("Taylor-Green preset is 2D")
    x1, x2 = grid.coords()
    a = 2.0 * np.pi / grid.L
    samples = amplitude * np.stack(
        [
            np.sin(a * x1) * np.cos(a * x2) * np.ones(grid.shape),
            -np.cos(a * x1) * np.sin(a * x2) * np.ones(grid.shape),
        ]
    )
    f = SpectralField.from_physical(grid, samples)
    f = SpectralField(grid, f.coeffs, mean_free=True, solenoidal=True)
    return FlowState(t=0.0, field=f, mean=np.zeros(2), role="base2d")
