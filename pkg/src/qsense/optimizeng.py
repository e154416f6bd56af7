"""Optimisation drivers: probe states, readout times, n-level sweeps and the
two-spin lifting study."""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.stats import qmc

from .engineering import TWO_SPIN_BASE, freeze_phases, swap_effective_spectrum, two_spin_lift_schedule
from .errors import DomainError, NumericalFailure, UnsupportedError
from .estimation import (
    MeasurementSolution,
    ProbeState,
    Spectrum,
    bcrb,
    entropic_bound,
    gain,
    pair_from_phases,
    personick_solve,
    qfi,
    solve,
    sylvester_solve,
)
from .priors import GaussianPrior, Prior

logger = logging.getLogger(__name__)

SEESAW_MAX_ITER = 2000
SEESAW_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class OptResult:
    state: ProbeState
    spectrum: Spectrum
    t: float
    mse: float
    solution: MeasurementSolution
    iterations: int = 0
    restarts: int = 0
    converged: bool = True
    complex_fallback: bool = False


class _Model:
    """Precomputed transforms for one (prior, phases) pair.

    ``P[l, m] = p~(phi_m - phi_l)`` and ``Q[l, m] = -i p~'(phi_m - phi_l)``.
    For fixed ``S`` the cost is ``V0 + <c| P^T o S^2 - 2 Q^T o S |c>``.
    """

    def __init__(self, prior: Prior, phases):
        phi = np.asarray(phases, dtype=float)
        diff = phi[None, :] - phi[:, None]
        self.P = np.asarray(prior.characteristic_function(diff), dtype=complex)
        self.Q = -1j * np.asarray(prior.characteristic_derivative(diff), dtype=complex)
        self.n = phi.size

    def solve(self, c):
        cc = np.outer(c, c.conj())
        eta = cc * self.Q
        S = sylvester_solve(cc * self.P, eta, check_support=False)
        return float(np.real(np.sum(eta * S.T))), S

    def gain(self, c) -> float:
        return self.solve(c)[0]

    def best_state(self, S) -> np.ndarray:
        M = self.P.T * (S @ S) - 2 * self.Q.T * S
        _, vecs = np.linalg.eigh(0.5 * (M + M.conj().T))
        return np.abs(vecs[:, 0])


def _seesaw(model: _Model, c, max_iter=SEESAW_MAX_ITER, tol=SEESAW_TOL):
    c = np.abs(np.asarray(c, dtype=float))
    c /= np.linalg.norm(c)
    g, S = model.solve(c)
    for it in range(1, max_iter + 1):
        c_new = model.best_state(S)
        g_new, S_new = model.solve(c_new)
        if g_new < g:
            return c, g, it, True
        converged = g_new - g < tol
        c, g, S = c_new, g_new, S_new
        if converged:
            return c, g, it, True
    return c, g, max_iter, False


def _starts(n: int, restarts: int, seed: int, init=None) -> list[np.ndarray]:
    starts = []
    if init is not None:
        starts.append(np.abs(np.asarray(init, dtype=float)))
    starts.append(np.ones(n))
    extra = max(restarts - len(starts), 0)
    if extra:
        pts = qmc.Halton(d=n, scramble=True, seed=seed).random(extra)
        starts += [p + 1e-3 for p in pts]
    return [s / np.linalg.norm(s) for s in starts[:max(restarts, 1)]]


def _gain_and_grad(model: _Model, x):
    """Gain of ``x / |x|`` and its gradient in ``x``.

    At the Personick optimum the gain equals ``-<c|M_S|c>`` and ``S`` is
    stationary, so ``d gain / dc = -2 Re(M_S c)``.
    """
    nx = np.linalg.norm(x)
    c = x / nx
    g, S = model.solve(c)
    M = model.P.T * (S @ S) - 2 * model.Q.T * S
    dc = -2 * np.real(M @ c)
    return g, (dc - c * (c @ dc)) / nx


def _refine(model: _Model, c, gtol: float = 1e-11):
    with warnings.catch_warnings():
        # line searches stall harmlessly once the gain is flat to rounding
        warnings.simplefilter("ignore")
        res = minimize(lambda x: tuple(-v for v in _gain_and_grad(model, x)), c, jac=True,
                       method="BFGS", options={"gtol": gtol, "maxiter": 200 * model.n})
    c = np.abs(res.x) / np.linalg.norm(res.x)
    _, grad = _gain_and_grad(model, c)
    return c, model.gain(c), res.nit, bool(np.max(np.abs(grad)) < 1e-7)


def optimize_phases(prior: Prior, phases, restarts: int = 8, seed: int = 0, init=None,
                    seesaw_iter: int = 50):
    """Best nonnegative amplitudes for fixed phase coefficients.

    Each start runs a few see-saw sweeps (closed-form ``S``, then the minimal
    eigenvector for that ``S``) and is finished by BFGS with the analytic
    gradient. Returns ``(coeffs, gain, iterations, converged)``.

    Diagonal phases commute with the evolution, so the gain depends only on
    ``|c|`` and the search over nonnegative amplitudes is complete for any
    prior.
    """
    model = _Model(prior, phases)
    n = model.n
    if n == 1:
        return np.ones(1), 0.0, 0, True
    best = None
    total_it = 0
    for c0 in _starts(n, restarts, seed, init):
        c, _, it, _ = _seesaw(model, c0, max_iter=seesaw_iter, tol=1e-13)
        c, g, it2, ok = _refine(model, c)
        total_it += it + it2
        if best is None or g > best[1] + 1e-15:
            best = (c, g, ok)
    c, g, ok = best
    return c, g, total_it, ok


def optimize_state(prior: Prior, spectrum: Spectrum, t: float, restarts: int = 8, seed: int = 0,
                   init=None) -> OptResult:
    """Probe state minimising the MSE for a fixed spectrum and readout time."""
    c, _, iters, ok = optimize_phases(prior, spectrum.phases(t), restarts, seed, init)
    state = ProbeState(c.astype(complex))
    _, sol, value = solve(prior, state, spectrum, t)
    return OptResult(state, spectrum, float(t), value, sol, iters, restarts, ok,
                     complex_fallback=not prior.symmetric)


def _time_bracket(prior: Prior, spectrum: Spectrum) -> float:
    lam = np.unique(np.round(spectrum.lambdas, 12))
    gaps = np.diff(lam)
    if gaps.size == 0:
        raise DomainError("a single-level spectrum gains no information")
    sigma_gap = prior.sigma * gaps.min() / 2
    return 20.0 / sigma_gap


@dataclass(frozen=True)
class TmaxResult:
    t_max: float
    mse_min: float
    state: ProbeState | None = None


def find_tmax(prior: Prior, spectrum: Spectrum, state: ProbeState | None = None,
              grid_points: int = 200, t_hi: float | None = None, restarts: int = 4,
              seed: int = 0) -> TmaxResult:
    """Readout time minimising the MSE.

    ``state=None`` re-optimises the probe at every trial time. The minimum of
    a coarse grid on ``(0, t_hi]`` is refined by golden-section search.
    """
    if state is not None and qfi(state, spectrum) <= 1e-14:
        raise NumericalFailure("probe has zero QFI: the MSE does not depend on time")
    t_hi = _time_bracket(prior, spectrum) if t_hi is None else t_hi
    ts = np.linspace(0.0, t_hi, grid_points + 1)[1:]
    warm = {"c": None}

    def objective(t):
        if state is not None:
            return solve(prior, state, spectrum, float(t))[2]
        res = optimize_state(prior, spectrum, float(t), restarts=restarts, seed=seed, init=warm["c"])
        warm["c"] = res.state.coeffs.real
        return res.mse

    values = np.array([objective(t) for t in ts])
    i = int(np.argmin(values))
    lo = ts[i - 1] if i > 0 else 0.5 * ts[0]
    hi = ts[i + 1] if i + 1 < ts.size else ts[i]
    if hi > ts[i] and values[i] < objective(lo) and values[i] < objective(hi):
        res = minimize_scalar(objective, bracket=(lo, ts[i], hi), method="golden", tol=1e-10)
        t_best, v_best = float(res.x), float(res.fun)
    else:
        res = minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
        t_best, v_best = float(res.x), float(res.fun)
    if values[i] < v_best:
        t_best, v_best = float(ts[i]), float(values[i])
    best_state = state
    if state is None:
        best_state = optimize_state(prior, spectrum, t_best, restarts=restarts, seed=seed,
                                    init=warm["c"]).state
    return TmaxResult(t_best, v_best, best_state)


# -- n-level sweep ------------------------------------------------------------

SWEEP_COLUMNS = ("n", "t", "mse", "bound_entropic", "bound_bcrb", "converged")


@dataclass
class SweepTable:
    n_values: list[int]
    t_grid: np.ndarray
    mse: np.ndarray  # (len(n_values), len(t_grid))
    bound_entropic: np.ndarray
    bound_bcrb: np.ndarray
    converged: np.ndarray
    weights: dict = field(default_factory=dict)

    def rows(self):
        for a, n in enumerate(self.n_values):
            for b, t in enumerate(self.t_grid):
                yield (n, float(t), float(self.mse[a, b]), float(self.bound_entropic[a]),
                       float(self.bound_bcrb[a, b]), bool(self.converged[a, b]))

    def envelope(self):
        """Best MSE over ``n`` at each time and the ``n`` attaining it."""
        best = np.argmin(self.mse, axis=0)
        return self.mse[best, np.arange(self.t_grid.size)], np.array(self.n_values)[best]

    def crossover_times(self, tol: float = 1e-6) -> dict:
        """Grid time from which ``n+1`` levels stay better than ``n`` by ``tol``.

        At short times every ``n`` is limited by the same extremal-level QFI
        and the columns tie to within optimiser noise, so the first strict
        improvement is not meaningful; the permanent one is.
        """
        out = {}
        for a in range(len(self.n_values) - 1):
            not_better = np.flatnonzero(~(self.mse[a] - self.mse[a + 1] > tol))
            if not_better.size == 0:
                out[self.n_values[a]] = float(self.t_grid[0])
            elif not_better[-1] + 1 < self.t_grid.size:
                out[self.n_values[a]] = float(self.t_grid[not_better[-1] + 1])
            else:
                out[self.n_values[a]] = math.nan
        return out


def default_t_grid(prior: Prior, points: int = 200, span: float = 6.0) -> np.ndarray:
    return np.linspace(0.0, span / prior.sigma, points)


def _sweep_column(prior, n, t_grid, restarts, seed):
    spec = Spectrum.equally_gapped(n)
    out_mse, out_b, out_ok, out_w = [], [], [], []
    warm = None
    for t in t_grid:
        res = optimize_state(prior, spec, float(t), restarts=restarts, seed=seed, init=warm)
        warm = res.state.coeffs.real
        out_mse.append(res.mse)
        out_ok.append(res.converged)
        out_w.append(res.state.weights)
        try:
            out_b.append(bcrb(prior, res.state, spec, float(t)))
        except UnsupportedError:
            out_b.append(math.nan)
    return out_mse, out_b, out_ok, out_w


def nlevel_sweep(prior: Prior, n_range=range(2, 10), t_grid=None, restarts: int = 4, seed: int = 0,
                 threads: int = 1) -> SweepTable:
    """Optimal MSE of equally gapped ``n``-level probes over a time grid.

    Columns are computed independently (warm-started along ``t``) and merged
    in ``n`` order, so the result does not depend on ``threads``.
    """
    n_values = list(n_range)
    t_grid = default_t_grid(prior) if t_grid is None else np.asarray(t_grid, dtype=float)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cols = list(pool.map(lambda n: _sweep_column(prior, n, t_grid, restarts, seed), n_values))
    else:
        cols = [_sweep_column(prior, n, t_grid, restarts, seed) for n in n_values]
    ent = []
    for n in n_values:
        try:
            ent.append(entropic_bound(prior, n))
        except UnsupportedError:
            ent.append(math.nan)
    return SweepTable(
        n_values,
        t_grid,
        np.array([c[0] for c in cols]),
        np.array(ent),
        np.array([c[1] for c in cols]),
        np.array([c[2] for c in cols]),
        {n: np.array(c[3]) for n, c in zip(n_values, cols)},
    )


# -- two-spin study -----------------------------------------------------------

@dataclass
class TwoQubitReport:
    free_t: float
    free_mse: float
    lifted_x: float
    lifted_t: float
    lifted_mse: float
    ratio: float
    amplitudes: np.ndarray
    phase_coefficients: np.ndarray
    estimators: np.ndarray  # positive estimators, descending
    projector_amplitudes: np.ndarray  # rows: |phi_1+>, |phi_2+>
    projector_phases: np.ndarray
    equal_gap_t: float
    equal_gap_mse: float
    frozen_mse: np.ndarray
    frozen_times: np.ndarray


def _normalise_phase(v) -> np.ndarray:
    """Fix the global phase so the outer components have opposite phases."""
    v = np.asarray(v, dtype=complex)
    v = v * np.exp(-0.5j * (np.angle(v[0]) + np.angle(v[-1])))
    if abs(np.angle(v[0])) > math.pi / 2:
        v = -v
    return v


def _lifted_best(prior, x, t0, init, restarts, seed):
    spec = swap_effective_spectrum(TWO_SPIN_BASE, two_spin_lift_schedule(x))
    res = minimize_scalar(
        lambda t: optimize_state(prior, spec, t, restarts=restarts, seed=seed, init=init).mse,
        bounds=(0.6 * t0, 1.6 * t0), method="bounded", options={"xatol": 1e-8},
    )
    return float(res.fun), float(res.x)


def two_qubit_study(prior: Prior | None = None, restarts: int = 4, seed: int = 0,
                    freeze_span: float = 3.0) -> TwoQubitReport:
    """Free versus swap-lifted two-spin probes.

    The free spectrum is ``(1, 0, 0, -1)``; lifting swaps ``uu <-> du`` and
    ``dd <-> ud`` at fraction ``x`` giving ``(x, 1-x, -(1-x), -x)``. Both are
    optimised over readout time and probe; the lifted case also over ``x``.
    """
    prior = GaussianPrior(0.0, 1.0) if prior is None else prior
    sigma = prior.sigma
    free = find_tmax(prior, TWO_SPIN_BASE, restarts=restarts, seed=seed, t_hi=10 / sigma)
    four = find_tmax(prior, Spectrum.equally_gapped(4), restarts=restarts, seed=seed, t_hi=10 / sigma)

    # an equally gapped lift (x = 3/4) is the natural start: it is the 4-level
    # optimum slowed down by the spectral radius
    init = four.state.coeffs.real
    best = {}

    def outer(x):
        val, t = _lifted_best(prior, x, four.t_max / max(x, 1e-3), init, restarts, seed)
        best[x] = (val, t)
        return val

    res = minimize_scalar(outer, bounds=(0.55, 0.99), method="bounded", options={"xatol": 1e-7})
    x_opt = float(res.x)
    lifted_mse, t_opt = best.get(x_opt) or _lifted_best(prior, x_opt, four.t_max / x_opt, init, restarts, seed)
    spec = swap_effective_spectrum(TWO_SPIN_BASE, two_spin_lift_schedule(x_opt))
    opt = optimize_state(prior, spec, t_opt, restarts=restarts, seed=seed, init=init)

    sol = opt.solution
    order = np.argsort(sol.estimators)[::-1]
    pos = [m for m in order if sol.estimators[m] > 1e-9]
    estimators = sol.estimators[pos]
    vecs = []
    for m in pos:
        vals, v = np.linalg.eigh(sol.projectors[m])
        vecs.append(_normalise_phase(v[:, -1]))
    vecs = np.array(vecs)

    phases = freeze_phases(spec, t_opt, t_opt)
    frozen_times = t_opt + np.linspace(0.0, freeze_span / sigma, 7)
    frozen = []
    for t in frozen_times:
        phi = freeze_phases(spec, t_opt, float(t))
        pair = pair_from_phases(prior, opt.state.coeffs, phi, float(t))
        frozen.append(prior.variance - gain(pair, personick_solve(pair)))

    return TwoQubitReport(
        free_t=free.t_max,
        free_mse=free.mse_min,
        lifted_x=x_opt,
        lifted_t=t_opt,
        lifted_mse=opt.mse,
        ratio=free.mse_min / opt.mse,
        amplitudes=np.abs(opt.state.coeffs),
        phase_coefficients=phases,
        estimators=estimators,
        projector_amplitudes=np.abs(vecs),
        projector_phases=np.angle(vecs),
        equal_gap_t=four.t_max,
        equal_gap_mse=four.mse_min,
        frozen_mse=np.array(frozen),
        frozen_times=frozen_times,
    )
