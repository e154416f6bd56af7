"""Quantum Fisher information, SLD and the three precision bounds."""
from __future__ import annotations

import math

import numpy as np

from ..errors import DomainError
from ..priors import Prior
from .core import ProbeState, Spectrum, _check_dims, averaged_pair, gain, personick_solve, sylvester_solve

SHORT_TIMES = (1e-3, 2e-3, 4e-3)


def generator(spectrum: Spectrum) -> np.ndarray:
    """Dimensionless generator ``h = diag(lambda) / 2``."""
    return np.diag(spectrum.lambdas / 2.0)


def qfi(state: ProbeState, spectrum: Spectrum) -> float:
    """QFI of a pure state: ``4 Var(h)``."""
    _check_dims(state, spectrum)
    p = state.weights
    h = spectrum.lambdas / 2.0
    mean = p @ h
    return float(4.0 * (p @ (h - mean) ** 2))


def sld(state: ProbeState, spectrum: Spectrum) -> np.ndarray:
    """Symmetric logarithmic derivative: ``rho L + L rho = -2i [h, rho]``."""
    _check_dims(state, spectrum)
    rho = state.density
    h = generator(spectrum)
    comm = h @ rho - rho @ h
    return sylvester_solve(rho, -1j * comm)


def bcrb(prior: Prior, state: ProbeState, spectrum: Spectrum, t: float) -> float:
    """Bayesian Cramer-Rao bound ``1 / (I(prior) + t^2 F_h)``.

    Raises ``UnsupportedError`` for priors without finite Fisher information.
    """
    info = prior.fisher_information()
    return 1.0 / (info + t * t * qfi(state, spectrum))


def entropic_bound(prior: Prior, dim: int) -> float:
    """Holevo-type bound ``exp(2 H) / (2 pi e d^2)``."""
    if dim < 1:
        raise DomainError(f"dimension must be at least 1, got {dim}")
    return math.exp(2.0 * prior.entropy()) / (2.0 * math.pi * math.e * dim * dim)


def short_time_check(prior: Prior, state: ProbeState, spectrum: Spectrum,
                     times=SHORT_TIMES) -> float:
    """Leading ``t^2`` coefficient of the variance decrease.

    Fits ``gain(t) / t^2 = a + b t + c t^2`` through the sampled times and
    returns ``a``; for small times it should equal ``V0^2 * qfi``.
    """
    times = np.asarray(times, dtype=float)
    ratios = []
    for t in times:
        pair = averaged_pair(prior, state, spectrum, float(t))
        ratios.append(gain(pair, personick_solve(pair)) / t ** 2)
    coef = np.polyfit(times, ratios, deg=min(2, times.size - 1))
    return float(coef[-1])
