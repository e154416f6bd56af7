"""Prior densities over the unknown frequency and their transforms.

Every prior is shifted to zero mean when it is built; the removed mean is kept
as ``offset`` and added back wherever absolute frequencies are reported
(estimators, posterior means). All transforms below refer to the centred
density ``p0``:

    characteristic function   p~(s)  = int exp(i s w) p0(w) dw
    its derivative            p~'(s) = i int w exp(i s w) p0(w) dw
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import DegenerateOutcomeError, DomainError, UnsupportedError

__all__ = [
    "Prior",
    "GaussianPrior",
    "UniformPrior",
    "GridPrior",
    "characteristic_function",
    "characteristic_derivative",
    "variance",
    "entropy",
    "fisher_information",
    "posterior_update",
    "load_grid_csv",
]

# default discretisation of analytic priors
GRID_POINTS = 4001
GRID_HALF_WIDTH = 8.0

_SYMMETRY_TOL = 1e-9
_NORM_TOL = 1e-12


def _check_finite(s):
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        raise DomainError("characteristic function needs finite arguments")
    return s


def _scalar_or_array(values, s):
    return values.item() if np.ndim(s) == 0 else values


class Prior:
    """Common interface of the prior families.

    Subclasses implement the centred transforms; ``offset`` is the mean that
    was removed at construction.
    """

    offset: float = 0.0
    symmetric: bool = False

    def characteristic_function(self, s):
        raise NotImplementedError

    def characteristic_derivative(self, s):
        raise NotImplementedError

    @property
    def variance(self) -> float:
        raise NotImplementedError

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    @property
    def mean(self) -> float:
        return self.offset

    def entropy(self) -> float:
        raise NotImplementedError

    def fisher_information(self) -> float:
        raise NotImplementedError

    def to_grid(self, num: int = GRID_POINTS, half_width: float = GRID_HALF_WIDTH) -> "GridPrior":
        raise NotImplementedError

    def scaled(self, factor: float) -> "Prior":
        """The same prior after multiplying the frequency unit by ``factor``."""
        raise NotImplementedError


class GaussianPrior(Prior):
    symmetric = True

    def __init__(self, mean: float = 0.0, sigma: float = 1.0):
        if not (sigma > 0 and math.isfinite(sigma)):
            raise DomainError(f"Gaussian width must be positive, got {sigma}")
        self.offset = float(mean)
        self._sigma = float(sigma)

    def __repr__(self):
        return f"GaussianPrior(mean={self.offset:g}, sigma={self._sigma:g})"

    @property
    def sigma(self) -> float:
        return self._sigma

    @property
    def variance(self) -> float:
        return self._sigma ** 2

    def characteristic_function(self, s):
        s = _check_finite(s)
        val = np.exp(-0.5 * (self._sigma * s) ** 2).astype(complex)
        return _scalar_or_array(val, s)

    def characteristic_derivative(self, s):
        s = _check_finite(s)
        sg = self._sigma
        val = (-(sg ** 2) * s * np.exp(-0.5 * (sg * s) ** 2)).astype(complex)
        return _scalar_or_array(val, s)

    def entropy(self) -> float:
        return math.log(math.sqrt(2 * math.pi * math.e) * self._sigma)

    def fisher_information(self) -> float:
        return 1.0 / self._sigma ** 2

    def to_grid(self, num=GRID_POINTS, half_width=GRID_HALF_WIDTH):
        x = np.linspace(-half_width * self._sigma, half_width * self._sigma, num)
        dx = x[1] - x[0]
        w = np.exp(-0.5 * (x / self._sigma) ** 2)
        w[0] *= 0.5
        w[-1] *= 0.5
        return GridPrior(x + self.offset, w / w.sum(), bin_width=dx)

    def scaled(self, factor):
        return GaussianPrior(self.offset * factor, self._sigma * factor)


class UniformPrior(Prior):
    symmetric = True

    def __init__(self, lo: float = -1.0, hi: float = 1.0):
        if not hi > lo:
            raise DomainError(f"uniform prior needs hi > lo, got [{lo}, {hi}]")
        self.lo, self.hi = float(lo), float(hi)
        self.offset = 0.5 * (self.lo + self.hi)

    def __repr__(self):
        return f"UniformPrior(lo={self.lo:g}, hi={self.hi:g})"

    @property
    def half_width(self) -> float:
        return 0.5 * (self.hi - self.lo)

    @property
    def variance(self) -> float:
        return (self.hi - self.lo) ** 2 / 12.0

    def characteristic_function(self, s):
        s = _check_finite(s)
        val = np.sinc(self.half_width * s / np.pi).astype(complex)
        return _scalar_or_array(val, s)

    def characteristic_derivative(self, s):
        s = _check_finite(s)
        a = self.half_width
        z = a * s
        small = np.abs(z) < 1e-3
        zs = np.where(small, 1.0, z)
        # d/ds sinc(as) = a (z cos z - sin z) / z^2, series near z = 0
        exact = a * (zs * np.cos(zs) - np.sin(zs)) / zs ** 2
        series = a * (-z / 3 + z ** 3 / 30 - z ** 5 / 840)
        val = np.where(small, series, exact).astype(complex)
        return _scalar_or_array(val, s)

    def entropy(self) -> float:
        return math.log(self.hi - self.lo)

    def fisher_information(self) -> float:
        raise UnsupportedError(
            "uniform prior is not differentiable at its edges; the Bayesian "
            "Cramer-Rao bound needs a prior with finite Fisher information"
        )

    def to_grid(self, num=GRID_POINTS, half_width=GRID_HALF_WIDTH):
        # midpoint rule: equal weights, differential entropy exactly ln(hi - lo)
        dx = (self.hi - self.lo) / num
        x = self.lo + dx * (np.arange(num) + 0.5)
        return GridPrior(x, np.full(num, 1.0 / num), bin_width=dx)

    def scaled(self, factor):
        return UniformPrior(self.lo * factor, self.hi * factor)


class GridPrior(Prior):
    """Discrete prior: weights on frequency points.

    ``points`` are given in absolute units; the centred copy is kept in
    ``x``. ``bin_width`` turns the weights into a density, which entropy and
    Fisher information need.
    """

    def __init__(self, points, weights, bin_width: float | None = None):
        points = np.asarray(points, dtype=float).ravel()
        weights = np.asarray(weights, dtype=float).ravel()
        if points.shape != weights.shape or points.size == 0:
            raise DomainError("grid points and weights must be non-empty and of equal length")
        if not (np.all(np.isfinite(points)) and np.all(np.isfinite(weights))):
            raise DomainError("grid contains non-finite values")
        if np.any(weights < 0):
            raise DomainError("grid weights must be nonnegative")
        if abs(weights.sum() - 1.0) > _NORM_TOL:
            raise DomainError(f"grid weights sum to {weights.sum():.15g}, not 1")
        if bin_width is not None and not bin_width > 0:
            raise DomainError("bin width must be positive")
        order = np.argsort(points, kind="stable")
        points, weights = points[order], weights[order]
        offset = float(weights @ points)
        self.points = points
        self.weights = weights
        self.offset = offset
        self.x = points - offset
        self.bin_width = bin_width
        self.symmetric = self._is_symmetric()
        for arr in (self.points, self.weights, self.x):
            arr.flags.writeable = False

    def _is_symmetric(self) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.x))))
        return bool(
            np.allclose(self.x[::-1], -self.x, rtol=0, atol=_SYMMETRY_TOL * scale)
            and np.allclose(self.weights[::-1], self.weights, rtol=0, atol=_SYMMETRY_TOL)
        )

    def __repr__(self):
        return f"GridPrior(n={self.x.size}, mean={self.offset:.6g}, var={self.variance:.6g})"

    @classmethod
    def from_density(cls, points, density) -> "GridPrior":
        """Trapezoid weights for a density sampled on uniformly spaced points."""
        points = np.asarray(points, dtype=float)
        w = np.asarray(density, dtype=float).copy()
        w[0] *= 0.5
        w[-1] *= 0.5
        return cls(points, w / w.sum(), bin_width=float(points[1] - points[0]))

    def characteristic_function(self, s):
        s = _check_finite(s)
        val = np.exp(1j * np.multiply.outer(s, self.x)) @ self.weights
        return _scalar_or_array(np.asarray(val), s)

    def characteristic_derivative(self, s):
        s = _check_finite(s)
        val = np.exp(1j * np.multiply.outer(s, self.x)) @ (1j * self.x * self.weights)
        return _scalar_or_array(np.asarray(val), s)

    @property
    def variance(self) -> float:
        return float(self.weights @ self.x ** 2)

    def _uniform_spacing(self) -> bool:
        if self.x.size < 3:
            return False
        d = np.diff(self.x)
        return bool(np.allclose(d, d[0], rtol=1e-9, atol=0))

    def entropy(self) -> float:
        if self.bin_width is None:
            raise UnsupportedError("differential entropy of a grid prior needs a bin width")
        w = self.weights[self.weights > 0]
        return float(-(w @ np.log(w / self.bin_width)))

    def fisher_information(self) -> float:
        # finite differences of the density; needs an evenly spaced grid whose
        # density vanishes at both ends (otherwise the edges act as jumps)
        if self.bin_width is None or not self._uniform_spacing():
            raise UnsupportedError("Fisher information needs an evenly spaced grid with a bin width")
        dens = self.weights / self.bin_width
        if max(dens[0], dens[-1]) > 1e-10 * dens.max():
            raise UnsupportedError("grid density does not vanish at the ends; prior is not differentiable")
        grad = np.gradient(dens, self.bin_width, edge_order=2)
        mask = dens > 0
        return float(np.sum(grad[mask] ** 2 / dens[mask]) * self.bin_width)

    def to_grid(self, num=GRID_POINTS, half_width=GRID_HALF_WIDTH):
        return self

    def scaled(self, factor):
        bw = None if self.bin_width is None else self.bin_width * factor
        return GridPrior(self.points * factor, self.weights, bin_width=bw)

    def absolute_points(self) -> np.ndarray:
        return self.points


# -- module-level operations -------------------------------------------------

def characteristic_function(prior: Prior, s):
    return prior.characteristic_function(s)


def characteristic_derivative(prior: Prior, s):
    return prior.characteristic_derivative(s)


def variance(prior: Prior) -> float:
    return prior.variance


def entropy(prior: Prior) -> float:
    """Differential entropy in nats."""
    return prior.entropy()


def fisher_information(prior: Prior) -> float:
    return prior.fisher_information()


def posterior_update(prior: GridPrior, likelihood) -> tuple[GridPrior, float]:
    """Bayes rule on a grid; returns the posterior and the evidence."""
    if not isinstance(prior, GridPrior):
        raise DomainError("posterior_update needs a grid prior; use prior.to_grid()")
    lik = np.asarray(likelihood, dtype=float).ravel()
    if lik.shape != prior.weights.shape:
        raise DomainError("likelihood must have one entry per grid point")
    if np.any(lik < -1e-12) or np.any(lik > 1 + 1e-12):
        raise DomainError("likelihood entries must lie in [0, 1]")
    post = prior.weights * np.clip(lik, 0.0, 1.0)
    evidence = float(post.sum())
    if not evidence > 0:
        raise DegenerateOutcomeError("outcome has zero evidence under this prior")
    return GridPrior(prior.points, post / evidence, bin_width=prior.bin_width), evidence


def load_grid_csv(path, bin_width: float | None = None) -> GridPrior:
    """Read a two-column ``omega,weight`` CSV (header row required).

    Weights are renormalised. Evenly spaced grids get their spacing as bin
    width unless one is given.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise DomainError(f"{path}: empty grid file")
    header = [h.strip().lower() for h in rows[0]]
    if header[:2] != ["omega", "weight"]:
        raise DomainError(f"{path}: expected header 'omega,weight', got {rows[0]}")
    try:
        data = np.array([[float(v) for v in r[:2]] for r in rows[1:]])
    except ValueError as exc:
        raise DomainError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[0] == 0:
        raise DomainError(f"{path}: no data rows")
    pts, w = data[:, 0], data[:, 1]
    if np.any(w < 0) or not w.sum() > 0:
        raise DomainError(f"{path}: weights must be nonnegative with positive sum")
    if bin_width is None and pts.size > 2:
        d = np.diff(np.sort(pts))
        if np.allclose(d, d[0], rtol=1e-9, atol=0):
            bin_width = float(d[0])
    return GridPrior(pts, w / w.sum(), bin_width=bin_width)
