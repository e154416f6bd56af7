"""Averaged operators, the Personick equation and the resulting MSE.

Phase convention: level ``l`` of a probe evolving for time ``t`` under the
effective spectrum ``lambdas`` picks up ``exp(-i w lambdas[l] t / 2)``. More
generally a level carries a *phase coefficient* ``phi[l]`` and the amplitude
phase is ``exp(-i w phi[l])``; a spectrum at time ``t`` is the special case
``phi = lambdas * t / 2``.

With that convention

    Gamma[l, m] = c_l conj(c_m) p~(phi_m - phi_l)
    eta[l, m]   = c_l conj(c_m) (-i) p~'(phi_m - phi_l)
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import (
    DegenerateOutcomeError,
    DomainError,
    InfeasiblePairError,
    SingularDenominatorError,
)
from ..priors import GridPrior, Prior, posterior_update

SUPPORT_RTOL = 1e-12
DEGENERACY_GAP = 1e-9
_NORM_TOL = 1e-12
_RADIUS_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Effective eigenvalues, one per level, in level order.

    Values must satisfy ``|lambda| <= 1``. The order is kept as given because
    it pairs each eigenvalue with a probe amplitude and a physical level.
    """

    lambdas: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float).ravel()
        if lam.size == 0:
            raise DomainError("spectrum needs at least one level")
        if not np.all(np.isfinite(lam)) or np.any(np.abs(lam) > 1 + _RADIUS_TOL):
            raise DomainError(f"effective eigenvalues must satisfy |lambda| <= 1, got {lam}")
        lam.flags.writeable = False
        object.__setattr__(self, "lambdas", lam)

    def __len__(self):
        return self.lambdas.size

    @classmethod
    def equally_gapped(cls, n: int, radius: float = 1.0) -> "Spectrum":
        if n < 2:
            return cls(np.array([radius]))
        return cls(radius * np.linspace(1.0, -1.0, n))

    @classmethod
    def qubit(cls) -> "Spectrum":
        return cls(np.array([1.0, -1.0]))

    @property
    def radius(self) -> float:
        return float(np.max(np.abs(self.lambdas)))

    def phases(self, t: float) -> np.ndarray:
        return self.lambdas * (t / 2.0)

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.lambdas) <= 0))


@dataclass(frozen=True, eq=False)
class ProbeState:
    """Pure probe state: amplitudes in the effective eigenbasis."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex).ravel()
        if abs(np.linalg.norm(c) - 1.0) > _NORM_TOL:
            raise DomainError(f"probe state must have unit norm, got {np.linalg.norm(c):.15g}")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    def __len__(self):
        return self.coeffs.size

    @classmethod
    def normalized(cls, vec) -> "ProbeState":
        v = np.asarray(vec, dtype=complex).ravel()
        return cls(v / np.linalg.norm(v))

    @classmethod
    def flat(cls, n: int) -> "ProbeState":
        return cls(np.full(n, 1 / np.sqrt(n), dtype=complex))

    @classmethod
    def from_weights(cls, weights) -> "ProbeState":
        w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
        return cls.normalized(np.sqrt(w))

    @property
    def weights(self) -> np.ndarray:
        return np.abs(self.coeffs) ** 2

    @property
    def density(self) -> np.ndarray:
        return np.outer(self.coeffs, self.coeffs.conj())


@dataclass(frozen=True, eq=False)
class AveragedPair:
    gamma: np.ndarray
    eta: np.ndarray
    t: float
    offset: float = 0.0


@dataclass(frozen=True, eq=False)
class MeasurementSolution:
    """Optimal measurement ``S = sum_m estimators[m] * projectors[m]``.

    ``S`` and ``estimators`` live in the centred frame; ``offset`` is the
    prior mean to add for absolute estimates.
    """

    S: np.ndarray
    estimators: np.ndarray
    projectors: list = field(default_factory=list)
    offset: float = 0.0

    @property
    def absolute_estimators(self) -> np.ndarray:
        return self.estimators + self.offset


def _check_dims(state: ProbeState, spectrum: Spectrum):
    if len(state) != len(spectrum):
        raise DomainError(f"state has {len(state)} amplitudes but spectrum has {len(spectrum)} levels")


def pair_from_phases(prior: Prior, coeffs, phases, t: float = float("nan")) -> AveragedPair:
    """Averaged pair for amplitudes ``coeffs`` with phase coefficients ``phases``."""
    c = np.asarray(coeffs, dtype=complex)
    phi = np.asarray(phases, dtype=float)
    if c.shape != phi.shape:
        raise DomainError("coefficients and phases must have equal length")
    diff = phi[None, :] - phi[:, None]
    cc = np.outer(c, c.conj())
    gamma = cc * prior.characteristic_function(diff)
    eta = cc * (-1j) * prior.characteristic_derivative(diff)
    return AveragedPair(gamma, eta, t, prior.offset)


def averaged_pair(prior: Prior, state: ProbeState, spectrum: Spectrum, t: float) -> AveragedPair:
    """Gamma_t and eta_t for ``state`` evolving under ``spectrum`` for time ``t``."""
    _check_dims(state, spectrum)
    if not t >= 0:
        raise DomainError(f"evolution time must be nonnegative, got {t}")
    return pair_from_phases(prior, state.coeffs, spectrum.phases(t), t)


def sylvester_solve(gamma: np.ndarray, eta: np.ndarray, check_support: bool = True) -> np.ndarray:
    """Solve ``gamma S + S gamma = 2 eta`` on the support of ``gamma``.

    Works in the eigenbasis of ``gamma``; entries whose eigenvalue sum falls
    below ``SUPPORT_RTOL * max(gamma)`` are left at zero.
    """
    g, V = np.linalg.eigh(gamma)
    eta_t = V.conj().T @ eta @ V
    denom = g[:, None] + g[None, :]
    keep = denom > SUPPORT_RTOL * max(g.max(), 0.0)
    if check_support:
        dropped = np.abs(eta_t[~keep])
        scale = max(np.linalg.norm(eta), 1.0)
        if dropped.size and dropped.max() > 1e-8 * scale:
            raise InfeasiblePairError(
                f"eta has weight {dropped.max():.3g} outside the support of Gamma"
            )
    St = np.zeros_like(eta_t)
    St[keep] = 2 * eta_t[keep] / denom[keep]
    S = V @ St @ V.conj().T
    return 0.5 * (S + S.conj().T)


def spectral_measurement(S: np.ndarray, offset: float = 0.0) -> MeasurementSolution:
    """Split Hermitian ``S`` into estimators and (merged) eigenprojectors."""
    vals, vecs = np.linalg.eigh(S)
    estimators, projectors = [], []
    start = 0
    for i in range(1, vals.size + 1):
        if i == vals.size or vals[i] - vals[i - 1] >= DEGENERACY_GAP:
            block = vecs[:, start:i]
            estimators.append(float(np.mean(vals[start:i])))
            projectors.append(block @ block.conj().T)
            start = i
    return MeasurementSolution(S, np.array(estimators), projectors, offset)


def personick_solve(pair: AveragedPair) -> MeasurementSolution:
    """Optimal von Neumann measurement and estimators for ``pair``."""
    S = sylvester_solve(pair.gamma, pair.eta)
    return spectral_measurement(S, pair.offset)


def gain(pair: AveragedPair, sol: MeasurementSolution) -> float:
    """Variance reduction ``tr(eta S)``."""
    if pair.eta.shape != sol.S.shape:
        raise DomainError("pair and solution dimensions differ")
    return float(np.real(np.sum(pair.eta * sol.S.T)))


def mse(prior: Prior, pair: AveragedPair, sol: MeasurementSolution) -> float:
    """Mean posterior variance ``V0 - tr(eta S)``."""
    return prior.variance - gain(pair, sol)


def solve(prior: Prior, state: ProbeState, spectrum: Spectrum, t: float):
    """Convenience: averaged pair, optimal measurement and its MSE."""
    pair = averaged_pair(prior, state, spectrum, t)
    sol = personick_solve(pair)
    return pair, sol, mse(prior, pair, sol)


def optimal_mse(prior: Prior, state: ProbeState, spectrum: Spectrum, t: float) -> float:
    return solve(prior, state, spectrum, t)[2]


@dataclass(frozen=True)
class BayesOracleResult:
    mse: float
    outcome_probabilities: np.ndarray
    posterior_means: np.ndarray  # absolute frequencies, NaN for skipped outcomes


def evolved_amplitudes(coeffs, phases, omegas) -> np.ndarray:
    """Rows: the probe state at each frequency in ``omegas``."""
    return np.asarray(coeffs)[None, :] * np.exp(-1j * np.multiply.outer(omegas, phases))


def outcome_likelihoods(psi: np.ndarray, projectors) -> np.ndarray:
    """``p(m | w_j)`` for rows ``psi[j]``; shape (outcomes, points)."""
    out = np.empty((len(projectors), psi.shape[0]))
    for m, E in enumerate(projectors):
        out[m] = np.real(np.sum(psi.conj() * (psi @ E.T), axis=1))
    return np.clip(out, 0.0, 1.0)


def simulate_bayes(prior: Prior, state: ProbeState, spectrum: Spectrum, t: float,
                   sol: MeasurementSolution) -> BayesOracleResult:
    """Brute-force mean posterior variance on a grid.

    Independent of the Personick algebra: builds the outcome likelihoods on
    every grid point, applies Bayes' rule and averages the posterior
    variances. Non-grid priors are discretised with ``prior.to_grid()``.
    """
    _check_dims(state, spectrum)
    grid = prior if isinstance(prior, GridPrior) else prior.to_grid()
    psi = evolved_amplitudes(state.coeffs, spectrum.phases(t), grid.x)
    lik = outcome_likelihoods(psi, sol.projectors)
    total, probs, means = 0.0, [], []
    for row in lik:
        try:
            post, evidence = posterior_update(grid, row)
        except DegenerateOutcomeError:
            probs.append(0.0)
            means.append(np.nan)
            continue
        probs.append(evidence)
        means.append(post.offset)
        total += evidence * post.variance
    return BayesOracleResult(total, np.array(probs), np.array(means))


def qubit_general_solution(prior: Prior, t: float):
    """Closed-form optimal measurement for the qubit ``|+>`` under ``(1, -1)``.

    Returns ``(S, gain)`` with ``r, i`` the real and imaginary parts of
    ``p~(t)`` and ``r', i'`` those of ``p~'(t)``::

        S_00 = S_11 = a = (r i' - i r') / (r^2 + i^2 - 1)
        S_01 = b = i conj(p~'(t)) - a conj(p~(t))
        gain = |p~'|^2 - (i r' - r i')^2 / (r^2 + i^2 - 1)
    """
    p = complex(prior.characteristic_function(t))
    q = complex(prior.characteristic_derivative(t))
    denom = abs(p) ** 2 - 1.0
    if abs(denom) < 1e-12:
        raise SingularDenominatorError(
            f"|p~(t)| = 1 at t={t}; no information is gained and the closed form is singular"
        )
    r, i, dr, di = p.real, p.imag, q.real, q.imag
    a = (r * di - i * dr) / denom
    b = 1j * q.conjugate() - a * p.conjugate()
    S = np.array([[a, b], [b.conjugate(), a]], dtype=complex)
    g = abs(q) ** 2 - (i * dr - r * di) ** 2 / denom
    return S, float(g)
