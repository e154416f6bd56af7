"""On-the-fly stroboscopic level insertion and the sequential re-preparation
strategy."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.stats import qmc

from .errors import DegenerateOutcomeError, DomainError, ScheduleError
from .estimation import ProbeState, Spectrum, pair_from_phases, personick_solve
from .estimation.core import evolved_amplitudes, outcome_likelihoods
from .optimizeng import _Model, optimize_phases
from .priors import GridPrior, Prior, posterior_update

TAU_SIGMA = 0.775
MAX_ONTHEFLY_STEPS = 9
MAX_SEQUENTIAL_STEPS = 12
RESHUFFLE_RESTARTS = 8


def reshuffle_reachable(amplitudes, rotations) -> np.ndarray:
    """Apply two-level rotations between adjacent entries, in order.

    ``rotations`` holds ``(i, angle)`` pairs acting on entries ``i`` and
    ``i + 1`` (zero based) as ``[[cos, -sin], [sin, cos]]``.
    """
    a = np.array(amplitudes, dtype=float)
    for i, th in rotations:
        if not 0 <= i < a.size - 1:
            raise DomainError(f"rotation index {i} outside 0..{a.size - 2}")
        c, s = math.cos(th), math.sin(th)
        a[i], a[i + 1] = c * a[i] - s * a[i + 1], s * a[i] + c * a[i + 1]
    return a


def split_weights(weights, angles) -> np.ndarray:
    """Physical weights after splitting every level into an up and a down part.

    Returns the interleaved vector ``(up_0, down_0, up_1, down_1, ...)`` with
    ``up_i = cos^2(angle_i) w_i``.
    """
    w = np.asarray(weights, dtype=float)
    amp = np.zeros(2 * w.size)
    amp[::2] = np.sqrt(np.clip(w, 0.0, None))
    out = reshuffle_reachable(amp, [(2 * i, th) for i, th in enumerate(angles)])
    return out ** 2


def merge_split(split) -> np.ndarray:
    """Weights of the ``m + 1`` phase bins fed by ``m`` split levels.

    The up part of level ``i`` and the down part of level ``i - 1`` end up
    with equal phase one step later.
    """
    split = np.asarray(split, dtype=float)
    up, down = split[::2], split[1::2]
    out = np.zeros(up.size + 1)
    out[:-1] += up
    out[1:] += down
    return out


def split_fractions(prev_weights, next_weights, tol: float = 1e-9):
    """Up fractions mapping ``prev_weights`` onto ``next_weights``, or ``None``.

    Inverts :func:`merge_split`; the result is unique when every previous
    weight is nonzero.
    """
    w = np.asarray(prev_weights, dtype=float)
    target = np.asarray(next_weights, dtype=float)
    if target.size != w.size + 1:
        raise DomainError("next state must have exactly one more level")
    u = np.empty(w.size)
    carry = 0.0
    for i in range(w.size):
        if w[i] <= tol:
            u[i] = 1.0
        else:
            u[i] = (target[i] - carry) / w[i]
        carry = (1.0 - u[i]) * w[i]
    ok = np.all(u >= -tol) and np.all(u <= 1 + tol) and abs(target[-1] - carry) <= tol
    return np.clip(u, 0.0, 1.0) if ok else None


def sine_state(n: int) -> ProbeState:
    """Amplitudes proportional to ``sin(pi l / (n + 1))``, ``l = 1..n``."""
    if n < 1:
        raise DomainError("need at least one level")
    return ProbeState.normalized(np.sin(np.pi * np.arange(1, n + 1) / (n + 1)))


@dataclass
class TraceStep:
    step: int
    time: float
    spectrum: Spectrum
    weights: np.ndarray
    phases: np.ndarray  # accumulated phase coefficients, omega units factored out
    mse: float
    split: np.ndarray | None = None  # interleaved up/down weights created at the previous control
    mse_unconstrained: float = math.nan

    @property
    def levels(self) -> int:
        return self.weights.size


@dataclass
class ProtocolTrace:
    tau: float
    steps: list = field(default_factory=list)
    truncated: bool = False

    @property
    def mse(self) -> np.ndarray:
        return np.array([s.mse for s in self.steps])

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "truncated": self.truncated,
            "steps": [
                {
                    "step": s.step,
                    "time": s.time,
                    "lambdas": s.spectrum.lambdas.tolist(),
                    "weights": s.weights.tolist(),
                    "phase_coefficients": s.phases.tolist(),
                    "mse": s.mse,
                    "mse_unconstrained": s.mse_unconstrained,
                    "split_weights": None if s.split is None else s.split.tolist(),
                }
                for s in self.steps
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "time", "level_index", "weight", "phase_coefficient", "mse"])
        for s in self.steps:
            for i, (wt, ph) in enumerate(zip(s.weights, s.phases)):
                w.writerow([s.step, repr(s.time), i, repr(float(wt)), repr(float(ph)), repr(s.mse)])
        return buf.getvalue()


def _angle_starts(prev_w, target, m, restarts, seed):
    starts = []
    u = split_fractions(prev_w, target, tol=1e-6)
    if u is not None:
        starts.append(np.arccos(np.sqrt(u)))
    starts.append(np.full(m, math.pi / 4))
    extra = restarts - len(starts)
    if extra > 0:
        starts += list(qmc.Halton(d=m, scramble=True, seed=seed).random(extra) * (math.pi / 2))
    return starts[:restarts]


def onthefly_run(prior: Prior, steps: int = 6, tau: float | None = None,
                 restarts: int = RESHUFFLE_RESTARTS, seed: int = 0) -> ProtocolTrace:
    """Stroboscopic protocol adding one level at every multiple of ``tau``.

    Step ``k`` holds ``k + 2`` equally spaced phase levels at time
    ``(k + 1) tau``. At each control every level is split into an up part
    (phase rate ``+1/2``) and a down part (rate ``-1/2``); after another
    ``tau`` neighbouring parts share a phase and merge. The split angles are
    chosen by Nelder-Mead so that the MSE at the next step is minimal.
    """
    if not prior.symmetric:
        raise DomainError("the on-the-fly protocol assumes a symmetric prior")
    if not 0 <= steps <= MAX_ONTHEFLY_STEPS:
        raise DomainError(f"steps must lie in 0..{MAX_ONTHEFLY_STEPS}, got {steps}")
    tau = TAU_SIGMA / prior.sigma if tau is None else float(tau)
    if tau <= 0:
        raise DomainError("tau must be positive")
    v0 = prior.variance
    trace = ProtocolTrace(tau)

    def record(k, weights, split, mse_unc):
        m = weights.size
        spec = Spectrum.equally_gapped(m)
        t = (k + 1) * tau
        phases = spec.phases(t)
        g = _Model(prior, phases).gain(np.sqrt(weights))
        trace.steps.append(TraceStep(k, t, spec, weights, phases, v0 - g, split, mse_unc))

    record(0, np.array([0.5, 0.5]), None, math.nan)
    for k in range(1, steps + 1):
        prev = trace.steps[-1]
        m = prev.levels
        t_next = (k + 1) * tau
        model = _Model(prior, Spectrum.equally_gapped(m + 1).phases(t_next))
        c_opt, g_opt, _, _ = optimize_phases(prior, model_phases(m + 1, t_next), restarts=restarts, seed=seed)
        target = c_opt ** 2

        def cost(theta):
            return -model.gain(np.sqrt(merge_split(split_weights(prev.weights, theta))))

        best = None
        for th0 in _angle_starts(prev.weights, target, m, restarts, seed):
            res = minimize(cost, th0, method="Nelder-Mead",
                           options={"xatol": 1e-9, "fatol": 1e-10, "maxiter": 2000 * m})
            if best is None or res.fun < best.fun:
                best = res
        split = split_weights(prev.weights, best.x)
        weights = merge_split(split)
        weights /= weights.sum()
        mse_next = v0 + best.fun
        if mse_next > prev.mse + 1e-9:
            trace.truncated = True
            break
        record(k, weights, split, v0 - g_opt)
    return trace


def model_phases(n: int, t: float) -> np.ndarray:
    return Spectrum.equally_gapped(n).phases(t)


# -- sequential strategy ------------------------------------------------------

@dataclass(frozen=True)
class SequentialPlan:
    A: float
    R: float
    variances: np.ndarray  # V_0..V_steps
    times: np.ndarray  # t_0..t_{steps-1}
    cumulative: np.ndarray  # T_0..T_steps

    @property
    def coefficient(self) -> float:
        return sequential_coefficient(self.A)


def reduction_factor(A: float) -> float:
    return 1.0 - A * math.exp(-A)


def sequential_coefficient(A: float) -> float:
    """Asymptotic ``(1/V) / T^2`` of the sequential strategy."""
    R = reduction_factor(A)
    return (R ** -0.5 - 1.0) ** 2 / A


def sequential_plan(V0: float, A: float, steps: int) -> SequentialPlan:
    """Measurement times keeping ``t_k^2 V_k = A`` under the Gaussian assumption."""
    if not (V0 > 0 and A > 0):
        raise DomainError("V0 and A must be positive")
    if steps < 0:
        raise DomainError("steps must be nonnegative")
    R = reduction_factor(A)
    assert 0 < R < 1
    k = np.arange(steps + 1)
    V = V0 * R ** k
    t = np.sqrt(A / V[:-1])
    q = R ** -0.5
    T = math.sqrt(A / V0) * (q ** k - 1) / (q - 1)
    return SequentialPlan(A, R, V, t, T)


def sequential_optimize_A():
    """Maximise the asymptotic coefficient over ``A`` in ``(0, 10]``."""
    res = minimize_scalar(lambda a: -sequential_coefficient(a), bounds=(1e-6, 10.0),
                          method="bounded", options={"xatol": 1e-10})
    return float(res.x), float(-res.fun)


_PLUS = np.array([1.0, 1.0]) / math.sqrt(2.0)


def _qubit_branches(post: GridPrior, t: float):
    phases = np.array([t / 2, -t / 2])
    sol = personick_solve(pair_from_phases(post, _PLUS, phases, t))
    psi = evolved_amplitudes(_PLUS, phases, post.x)
    return outcome_likelihoods(psi, sol.projectors)


def sequential_simulate(prior: Prior, steps: int, times) -> float:
    """Exact mean posterior variance of repeated qubit measurements.

    Each step prepares ``|+>`` in the frame of the current posterior mean,
    evolves for ``times[k]`` and applies that posterior's optimal
    measurement. Every outcome branch is followed and weighted by its
    probability.
    """
    if steps > MAX_SEQUENTIAL_STEPS:
        raise ScheduleError(f"at most {MAX_SEQUENTIAL_STEPS} steps are supported, got {steps}")
    if steps < 0:
        raise DomainError("steps must be nonnegative")
    times = np.asarray(times, dtype=float)
    if times.size < steps:
        raise ScheduleError(f"need {steps} measurement times, got {times.size}")
    grid = prior if isinstance(prior, GridPrior) else prior.to_grid()

    def recurse(post: GridPrior, k: int) -> float:
        if k == steps:
            return post.variance
        total = 0.0
        for row in _qubit_branches(post, float(times[k])):
            try:
                child, evidence = posterior_update(post, row)
            except DegenerateOutcomeError:
                continue
            total += evidence * recurse(child, k + 1)
        return total

    return recurse(grid, 0)
