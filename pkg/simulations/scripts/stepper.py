"""Per-step Picard fixed-point loop, adaptive step control and physics diagnostics.

Loop (coefficients frozen at t_n, iterate 0 = state_n):
 1. rho^k = advance_density(rho_n, u^k, dt)
 2. (c^{k+1}, mu^{k+1}) = solve_ch(...)
 3. u^{k+1} = solve_momentum(...)
 4. delta_k = weak_norm(u^{k+1} - u^k, c^{k+1} - c^k, mu^{k+1} - mu^k); stop at delta_k <= picard_tol.
After convergence rho_{n+1} is recomputed from u_{n+1} so the mass balance closes exactly.

Step control: Picard non-convergence or a CFL violation halves dt (at most max_halvings
times per step, then the run ends with a blow-up report); crossing the density floor ends
the run immediately. After grow_after clean steps a reduced dt doubles back toward dt0.

Residual audit: residual_fields evaluates the unsplit equations at the new state in their
time-derivative form, (q_{n+1} - q_n)/dt + fluxes - sources, so a converged step and an
exact solution report the same kind of defect; residual_nonlinear reduces them to norms.
"""
from __future__ import annotations
import logging, math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple
import numpy as np
from mesh import (Grid, ScalarField, VectorField, TensorField, apply_scalar_bc, div_coeff, discrete_l2, gradient,
                  integrate, strain_rate, tensor_divergence, viscous_operator, weak_norm, DEFAULT_WEAK_WEIGHTS)
from material import (MaterialLaws, State, capillary_force, chemical_potential, stress_capillary, stress_viscous,
                      total_energy)
from transport import CFLViolation, advance_density, min_density, upwind_divergence
from chsolver import freeze_coefficients, mass_flux_divergence, solve_ch
from momentum import convective_term, solve_momentum

log = logging.getLogger(__name__)


class PicardDivergence(RuntimeError):
    def __init__(self, msg: str, report: 'PicardReport' = None):
        super().__init__(msg)
        self.report = report


class DensityFloorError(RuntimeError):
    pass


class BlowUpError(RuntimeError):
    def __init__(self, msg: str, t: float = float('nan'), reason: str = ''):
        super().__init__(msg)
        self.t, self.reason = t, reason


class InitialDataError(ValueError):
    pass


@dataclass(frozen=True)
class StepperConfig:
    dt0: float = 1e-4
    t_end: float = 1e-2
    picard_tol: float = 1e-9
    max_picard: int = 25
    max_halvings: int = 8
    snapshot_every: int = 0
    weak_norm_weights: Tuple[float, ...] = DEFAULT_WEAK_WEIGHTS
    cfl_max: float = 0.9
    linear_tol: float = 1e-10
    density_floor: float = 1e-8
    grow_after: int = 4
    compat_rtol: float = 0.1


@dataclass
class Forcing:
    """Body force f_ext(t, grid) -> (dim, *n) and optional manufactured sources."""
    name: str = 'none'
    body: Optional[Callable[[float, Grid], np.ndarray]] = None
    sources: Optional[Callable[[float, Grid], Dict[str, np.ndarray]]] = None

    def f_ext(self, t: float, grid: Grid) -> Optional[np.ndarray]:
        return None if self.body is None else np.asarray(self.body(t, grid), dtype=float)

    def source_terms(self, t: float, grid: Grid) -> Dict[str, np.ndarray]:
        return {} if self.sources is None else self.sources(t, grid)


NO_FORCING = Forcing()


@dataclass
class NonlinearResidual:
    r_momentum: float
    r_ch: float
    r_mu: float
    r_mass: float
    r_momentum_conservative: float = float('nan')

    def audited(self) -> Tuple[float, float, float, float]:
        return self.r_momentum, self.r_ch, self.r_mu, self.r_mass


@dataclass
class PicardReport:
    iterations: int = 0
    deltas: List[float] = field(default_factory=list)
    converged: bool = False
    final_residual: Optional[NonlinearResidual] = None

    @property
    def contraction_factors(self) -> List[float]:
        d = self.deltas
        return [d[i + 1] / d[i] for i in range(len(d) - 1) if d[i] > 0.0]

    @property
    def mean_contraction(self) -> float:
        f = self.contraction_factors
        return float(np.mean(f)) if f else 0.0


DIAGNOSTICS_COLUMNS = ('t', 'E', 'diss_S', 'diss_mu', 'power_ext', 'energy_residual', 'mass', 'cmass', 'min_rho',
                       'picard_iters', 'mean_contraction')


@dataclass
class DiagnosticsRow:
    t: float
    E: float
    diss_S: float
    diss_mu: float
    power_ext: float
    energy_residual: float
    mass: float
    cmass: float
    min_rho: float
    picard_iters: int
    mean_contraction: float

    def as_tuple(self):
        return tuple(getattr(self, c) for c in DIAGNOSTICS_COLUMNS)


# --------------------------------------------------------------------------- Picard step

def _check_floor(rho: ScalarField, floor: float, t: float):
    m = min_density(rho)
    if not m > floor:
        raise DensityFloorError(f'density floor {floor:.3e} crossed: min rho = {m:.3e} at t = {t:.6g}')


def picard_step(material: MaterialLaws, state_n: State, dt: float, cfg: StepperConfig = StepperConfig(),
                forcing: Forcing = NO_FORCING, density_floor: float = 0.0) -> Tuple[State, PicardReport]:
    g = state_n.grid
    state_n.fill_ghosts()
    _check_floor(state_n.rho, density_floor, state_n.t)
    frozen = freeze_coefficients(material, state_n)
    t_next = state_n.t + dt
    f = forcing.f_ext(t_next, g)
    src = forcing.source_terms(t_next, g)
    report = PicardReport()
    it = state_n
    for k in range(cfg.max_picard):
        rho_k = advance_density(state_n.rho, it.u, dt, cfg.cfl_max, src.get('mass'))
        _check_floor(rho_k, density_floor, t_next)
        c1, mu1 = solve_ch(frozen, dt, it, rho_k, state_n.c, tol=cfg.linear_tol, sources=src)
        u1 = solve_momentum(frozen, dt, it, rho_k, state_n.u, c1, mu1, f, tol=cfg.linear_tol,
                            source=src.get('momentum'))
        delta = weak_norm(VectorField(g, u1.values - it.u.values), ScalarField(g, c1.values - it.c.values),
                          ScalarField(g, mu1.values - it.mu.values), cfg.weak_norm_weights)
        report.deltas.append(delta)
        report.iterations = k + 1
        log.debug('t=%.6g dt=%.3e picard %d delta=%.3e', t_next, dt, k, delta)
        if not math.isfinite(delta):
            raise PicardDivergence(f'non-finite Picard iterate at t = {t_next:.6g}', report)
        it = State(g, rho_k, u1, c1, mu1, t_next)
        if delta <= cfg.picard_tol:
            report.converged = True
            break
    if not report.converged:
        raise PicardDivergence(f'Picard loop did not converge in {cfg.max_picard} iterations at dt = {dt:.3e} '
                               f'(last delta {report.deltas[-1]:.3e})', report)
    rho_next = advance_density(state_n.rho, it.u, dt, cfg.cfl_max, src.get('mass'))
    _check_floor(rho_next, density_floor, t_next)
    state_next = State(g, rho_next, it.u, it.c, it.mu, t_next)
    report.final_residual = residual_nonlinear(material, state_next, state_n, dt, forcing)
    return state_next, report


# --------------------------------------------------------------------------- audits

def residual_fields(material: MaterialLaws, state_next: State, state_n: State, dt: float,
                    forcing: Forcing = NO_FORCING) -> Dict[str, np.ndarray]:
    """Per-cell defects of the unsplit equations at state_next, in time-derivative form."""
    g = state_next.grid
    s, sn = state_next.fill_ghosts(), state_n.fill_ghosts()
    f = forcing.f_ext(s.t, g)
    src = forcing.source_terms(s.t, g)
    r, c, u, mu = s.rho.values, s.c.values, s.u.values, s.mu.values

    mass = (r - sn.rho.values) / dt + upwind_divergence(sn.rho, s.u).values - src.get('mass', 0.0)

    gamma = apply_scalar_bc(ScalarField(g, material.mobility(r, c)))
    ch = ((r * c - sn.rho.values * sn.c.values) / dt + mass_flux_divergence(s.c, s.rho, s.u).values
          - div_coeff(gamma, s.mu).values - src.get('ch', 0.0))

    mu_law = mu - chemical_potential(material, s.rho, s.c).values - src.get('mu', 0.0)

    eta, lam = material.viscosities(r, c)
    V = viscous_operator(apply_scalar_bc(ScalarField(g, eta)), apply_scalar_bc(ScalarField(g, lam)))
    visc = (V @ u.ravel()).reshape(u.shape)
    body = r * f if f is not None else 0.0
    extra = src.get('momentum', 0.0)
    mom = (r * (u - sn.u.values) / dt - visc + capillary_force(material, s.rho, s.c, s.mu).values
           + r * convective_term(s.u) - body - extra)

    # tensor (conservative) form, informational
    flux_t = TensorField(g)
    flux_t.data[...] = s.rho.data * np.einsum('i...,j...->ij...', s.u.data, s.u.data)
    flux_t.ghost_filled = True
    cons = ((r * u - sn.rho.values * sn.u.values) / dt + tensor_divergence(flux_t).values
            - tensor_divergence(stress_viscous(material, s.u, s.rho, s.c)).values
            - tensor_divergence(stress_capillary(material, s.rho, s.c)).values - body - extra)
    return {'momentum': mom, 'ch': ch, 'mu': mu_law, 'mass': mass, 'momentum_conservative': cons}


def residual_nonlinear(material: MaterialLaws, state_next: State, state_n: State, dt: float,
                       forcing: Forcing = NO_FORCING) -> NonlinearResidual:
    fields = residual_fields(material, state_next, state_n, dt, forcing)
    g = state_next.grid
    return NonlinearResidual(r_momentum=discrete_l2(fields['momentum'], g), r_ch=discrete_l2(fields['ch'], g),
                             r_mu=discrete_l2(fields['mu'], g), r_mass=discrete_l2(fields['mass'], g),
                             r_momentum_conservative=discrete_l2(fields['momentum_conservative'], g))


def diagnostics(material: MaterialLaws, state_next: State, state_n: State, dt: float,
                forcing: Forcing = NO_FORCING, report: Optional[PicardReport] = None) -> DiagnosticsRow:
    g = state_next.grid
    s = state_next.fill_ghosts()
    r, c = s.rho.values, s.c.values
    E1, E0 = total_energy(material, s), total_energy(material, state_n.fill_ghosts())
    S = stress_viscous(material, s.u, s.rho, s.c).values
    D = strain_rate(s.u).values
    diss_S = integrate(np.einsum('ij...,ij...->...', S, D), g)
    gmu = gradient(s.mu).values
    diss_mu = integrate(material.mobility(r, c) * np.sum(gmu * gmu, axis=0), g)
    f = forcing.f_ext(s.t, g)
    power = integrate(r * np.sum(f * s.u.values, axis=0), g) if f is not None else 0.0
    return DiagnosticsRow(
        t=s.t, E=E1, diss_S=diss_S, diss_mu=diss_mu, power_ext=power,
        energy_residual=(E1 - E0) / dt + diss_S + diss_mu - power,
        mass=integrate(s.rho), cmass=integrate(r * c, g), min_rho=min_density(s.rho),
        picard_iters=report.iterations if report else 0,
        mean_contraction=report.mean_contraction if report else 0.0)


# --------------------------------------------------------------------------- initial data

@dataclass
class Violation:
    kind: str
    face: str
    magnitude: float
    threshold: float


@dataclass
class InitialDataReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _face_lines(v: np.ndarray, axis: int, side: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """First three cell layers counted inward from the face."""
    w = np.moveaxis(v, axis, 0)
    if side == 1:
        w = w[::-1]
    return w[0], w[1], w[2]


def boundary_slope(v: np.ndarray, h: float, axis: int, side: int) -> np.ndarray:
    """Inward normal derivative at the face from a three-point one-sided stencil."""
    v0, v1, v2 = _face_lines(v, axis, side)
    return (-2.0 * v0 + 3.0 * v1 - v2) / h


def boundary_value(v: np.ndarray, axis: int, side: int) -> np.ndarray:
    v0, v1, v2 = _face_lines(v, axis, side)
    return (15.0 * v0 - 10.0 * v1 + 3.0 * v2) / 8.0


def validate_initial_data(state0: State, material: MaterialLaws, forcing: Forcing = NO_FORCING,
                          compat_rtol: float = 0.1) -> InitialDataReport:
    g = state0.grid
    r = state0.rho.values
    if np.any(r <= 0.0) or not np.all(np.isfinite(r)):
        raise InitialDataError(f'initial density must be positive and finite (min {np.nanmin(r):.3e})')
    s = state0.copy().fill_ghosts()
    mu0 = chemical_potential(material, s.rho, s.c)
    report = InitialDataReport()

    def flag(kind, face, values, scale):
        mag = float(np.max(np.abs(values))) if np.size(values) else 0.0
        thr = compat_rtol * scale + 1e-12
        if mag > thr:
            report.violations.append(Violation(kind, face, mag, thr))

    names = ('x_lo', 'x_hi', 'y_lo', 'y_hi')
    c_scale = float(np.max(np.abs(gradient(s.c).values)))
    mu_scale = float(np.max(np.abs(gradient(mu0).values)))
    u = s.u.values
    u_scale = float(np.max(np.abs(u)))
    gu_scale = max((float(np.max(np.abs(gradient(apply_scalar_bc(ScalarField(g, u[i]))).values)))
                    for i in range(g.dim)), default=0.0)
    for a in range(g.dim):
        for side in (0, 1):
            face = names[2 * a + side]
            flag('dnu_c', face, boundary_slope(s.c.values, g.h[a], a, side), c_scale)
            flag('dnu_mu', face, boundary_slope(mu0.values, g.h[a], a, side), mu_scale)
            if g.face_tag(a, side) == 'noslip':
                for i in range(g.dim):
                    flag(f'u{i}_wall', face, boundary_value(u[i], a, side), u_scale)
            else:
                flag('u_normal', face, boundary_value(u[a], a, side), u_scale)
                for i in range(g.dim):
                    if i != a:
                        flag(f'tangential_stress_u{i}', face, boundary_slope(u[i], g.h[a], a, side), gu_scale)
    for v in report.violations:
        log.warning('initial data: %s on %s has magnitude %.3e (threshold %.3e)', v.kind, v.face, v.magnitude,
                    v.threshold)
    return report


# --------------------------------------------------------------------------- driver

@dataclass
class SimulationResult:
    snapshots: List[State] = field(default_factory=list)
    rows: List[DiagnosticsRow] = field(default_factory=list)
    residuals: List[NonlinearResidual] = field(default_factory=list)
    status: str = 'ok'
    message: str = ''
    halvings: int = 0


def run_simulation(material: MaterialLaws, state0: State, cfg: StepperConfig, forcing: Forcing = NO_FORCING,
                   on_snapshot: Optional[Callable[[State], None]] = None) -> SimulationResult:
    state = state0.copy().fill_ghosts()
    floor = cfg.density_floor * min_density(state.rho)
    result = SimulationResult(snapshots=[state])
    if on_snapshot:
        on_snapshot(state)
    dt, clean, step = cfg.dt0, 0, 0
    t_stop = cfg.t_end * (1.0 - 1e-12)
    while state.t < t_stop:
        dt_step = min(dt, cfg.t_end - state.t)
        halvings = 0
        try:
            while True:
                try:
                    nxt, report = picard_step(material, state, dt_step, cfg, forcing, floor)
                    break
                except (PicardDivergence, CFLViolation) as exc:
                    if halvings >= cfg.max_halvings:
                        raise BlowUpError(f'step control exhausted {cfg.max_halvings} halvings at t = {state.t:.6g}: '
                                          f'{exc}', state.t, 'halvings') from exc
                    halvings += 1
                    dt_step *= 0.5
                    log.warning('t=%.6g: %s; halving dt to %.3e', state.t, exc, dt_step)
        except DensityFloorError as exc:
            result.status, result.message = 'blowup', str(exc)
            log.error('blow-up: %s', exc)
            break
        except BlowUpError as exc:
            result.status, result.message = 'blowup', str(exc)
            log.error('blow-up: %s', exc)
            break
        result.halvings += halvings
        row = diagnostics(material, nxt, state, dt_step, forcing, report)
        result.rows.append(row)
        result.residuals.append(report.final_residual)
        state = nxt
        step += 1
        log.info('step %d t=%.6g dt=%.3e picard=%d E=%.10g min_rho=%.4g', step, state.t, dt_step,
                 report.iterations, row.E, row.min_rho)
        if halvings:
            dt, clean = dt_step, 0
        else:
            clean += 1
            if dt < cfg.dt0 and clean >= cfg.grow_after:
                dt, clean = min(2.0 * dt, cfg.dt0), 0
        if cfg.snapshot_every and step % cfg.snapshot_every == 0:
            result.snapshots.append(state)
            if on_snapshot:
                on_snapshot(state)
    if result.snapshots[-1] is not state:
        result.snapshots.append(state)
        if on_snapshot:
            on_snapshot(state)
    return result
