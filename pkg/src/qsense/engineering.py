"""Degeneracy lifting: control schedules that realise effective spectra.

A sensing qubit (levels ``j = 0, 1`` with phase rates ``+1`` and ``-1``) is
joined by ancilla levels ``k = 1..n``. The probe starts in
``c0 |0,1> + s0 |1,1>``. A lift event ``(j, k, time, angle)`` is an
instantaneous rotation by ``angle`` between the source level ``|j,1>`` and the
destination ``|1-j,k>`` (``k >= 2``). The amplitude moved at time ``tau``
ends with the effective eigenvalue

    mu = (1 - 2j) * (2 tau / t - 1)

so source branch 0 feeds ``mu >= 0`` when ``tau >= t/2``. What is left in
``|0,1>`` and ``|1,1>`` keeps ``mu = +1`` and ``mu = -1``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import DomainError, ScheduleError
from .estimation import ProbeState, Spectrum

_TOL = 1e-12


@dataclass(frozen=True)
class LiftEvent:
    j: int
    k: int
    time: float
    angle: float
    level: int | None = None  # spectral level this event realises, if any

    @property
    def destination(self) -> tuple[int, int]:
        return (1 - self.j, self.k)


@dataclass(frozen=True)
class LiftSchedule:
    events: tuple[LiftEvent, ...]
    total_time: float
    initial_split: tuple[float, float] = (1 / math.sqrt(2), 1 / math.sqrt(2))

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        t = self.total_time
        if not t > 0:
            raise ScheduleError("total time must be positive")
        c0, s0 = self.initial_split
        if c0 < 0 or s0 < 0 or abs(c0 * c0 + s0 * s0 - 1) > 1e-12:
            raise ScheduleError("initial split must be nonnegative and normalised")
        seen = set()
        last = {0: -np.inf, 1: -np.inf}
        for ev in self.events:
            if ev.j not in (0, 1) or ev.k < 2:
                raise ScheduleError(f"bad event labels j={ev.j}, k={ev.k}")
            if not (-_TOL <= ev.time <= t + _TOL):
                raise ScheduleError(f"event time {ev.time} outside [0, {t}]")
            if not (-_TOL <= ev.angle <= math.pi / 2 + _TOL):
                raise ScheduleError(f"angle {ev.angle} outside [0, pi/2]")
            if ev.destination in seen:
                raise ScheduleError(f"level {ev.destination} is fed twice")
            if ev.time < last[ev.j] - _TOL:
                raise ScheduleError("event times must be non-decreasing within a branch")
            seen.add(ev.destination)
            last[ev.j] = ev.time

    @property
    def n_aux(self) -> int:
        return max([1] + [ev.k for ev in self.events])

    @property
    def dim(self) -> int:
        return 2 * self.n_aux

    def index(self, j: int, k: int) -> int:
        return j * self.n_aux + (k - 1)

    def branch(self, j: int) -> list[LiftEvent]:
        return [ev for ev in self.events if ev.j == j]

    def to_dict(self) -> dict:
        return {
            "total_time": self.total_time,
            "initial_split": list(self.initial_split),
            "events": [
                {"j": ev.j, "k": ev.k, "time": ev.time, "angle": ev.angle}
                | ({} if ev.level is None else {"level": ev.level})
                for ev in self.events
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "LiftSchedule":
        events = [LiftEvent(int(e["j"]), int(e["k"]), float(e["time"]), float(e["angle"]),
                            e.get("level")) for e in d["events"]]
        return cls(tuple(events), float(d["total_time"]), tuple(d.get("initial_split", (1 / math.sqrt(2),) * 2)))

    @classmethod
    def from_json(cls, text: str) -> "LiftSchedule":
        return cls.from_dict(json.loads(text))


def lift_time(lam: float, t: float) -> float:
    """Switching time ``t (1 - lam) / 2`` for a per-branch eigenvalue ``lam``."""
    if abs(lam) > 1 + _TOL:
        raise DomainError(f"|lambda| = {abs(lam)} > 1 would need a negative switching time")
    return float(np.clip(t * (1.0 - lam) / 2.0, 0.0, t))


def _branch_of(mu: float) -> int:
    # positive targets are fed from source 0 into |1,k>; zero and negative from source 1
    return 0 if mu > 0 else 1


def lift_times_from_spectrum(spectrum: Spectrum, t: float) -> LiftSchedule:
    """Lift events (angles still zero) realising every level of ``spectrum``.

    Each target ``mu`` goes to destination branch ``jd`` with per-branch
    eigenvalue ``lam = (1 - 2 jd) mu`` and switching time ``t (1 - lam)/2``.
    Within a source branch the ancilla index follows switching time.
    """
    if not t > 0:
        raise DomainError("total time must be positive")
    pending = {0: [], 1: []}
    for level, mu in enumerate(spectrum.lambdas):
        j = _branch_of(mu)
        dest = 1 - j
        time = lift_time((1 - 2 * dest) * mu, t)
        pending[j].append((time, level))
    events = []
    for j in (0, 1):
        for k, (time, level) in enumerate(sorted(pending[j]), start=2):
            events.append(LiftEvent(j, k, time, 0.0, level))
    return LiftSchedule(tuple(events), float(t))


def coefficients_from_angles(angles, source_amplitude: float):
    """Stick-breaking forward map: fed amplitudes and what stays in the source."""
    remaining = float(source_amplitude)
    fed = []
    for th in angles:
        fed.append(remaining * math.sin(th))
        remaining *= math.cos(th)
    return np.array(fed), remaining


def angles_from_coefficients(coeffs, source_amplitude: float) -> np.ndarray:
    """Invert the stick-breaking chain for one source branch.

    ``coeffs`` are the amplitudes to feed, in switching order. Whatever is not
    fed stays in the source level. Once the source is empty the remaining
    angles are 0.
    """
    c = np.asarray(coeffs, dtype=float)
    if np.any(c < 0):
        raise DomainError("only nonnegative real amplitudes can be lifted")
    if c @ c > source_amplitude ** 2 * (1 + 1e-12) + 1e-15:
        raise DomainError("requested amplitudes exceed the source amplitude")
    remaining = float(source_amplitude)
    angles = []
    for ci in c:
        if remaining <= 1e-15:
            angles.append(0.0)
            continue
        s = ci / remaining
        th = math.pi / 2 if s > 1 - 1e-12 else math.asin(s)
        angles.append(th)
        remaining = math.sqrt(max(remaining * remaining - ci * ci, 0.0))
    return np.array(angles)


def lift_schedule(spectrum: Spectrum, state: ProbeState, t: float) -> LiftSchedule:
    """Full schedule (times, angles, initial split) for a target probe.

    ``state`` must have nonnegative real amplitudes. The source levels end up
    empty; every target level is fed by exactly one event.
    """
    c = np.asarray(state.coeffs)
    if np.any(np.abs(c.imag) > 1e-12) or np.any(c.real < -1e-12):
        raise DomainError("lifting needs nonnegative real amplitudes")
    c = np.clip(c.real, 0.0, None)
    skeleton = lift_times_from_spectrum(spectrum, t)
    split = []
    for j in (0, 1):
        split.append(math.sqrt(sum(c[ev.level] ** 2 for ev in skeleton.branch(j))))
    norm = math.hypot(*split)
    split = (split[0] / norm, split[1] / norm)
    events = []
    for j in (0, 1):
        branch = skeleton.branch(j)
        angles = angles_from_coefficients([c[ev.level] / norm for ev in branch], split[j])
        events += [LiftEvent(ev.j, ev.k, ev.time, float(a), ev.level) for ev, a in zip(branch, angles)]
    return LiftSchedule(tuple(events), float(t), split)


def effective_levels(schedule: LiftSchedule):
    """Closed-form level data: joint indices, eigenvalues and amplitudes.

    Returns ``(indices, mu, coeffs)`` covering the two source levels and every
    destination level.
    """
    t = schedule.total_time
    indices, mus, coeffs = [], [], []
    for j in (0, 1):
        src_amp = schedule.initial_split[j]
        branch = schedule.branch(j)
        fed, remaining = coefficients_from_angles([ev.angle for ev in branch], src_amp)
        indices.append(schedule.index(j, 1))
        mus.append(1.0 - 2 * j)
        coeffs.append(remaining)
        for ev, amp in zip(branch, fed):
            jd, k = ev.destination
            indices.append(schedule.index(jd, k))
            mus.append((1 - 2 * j) * (2 * ev.time / t - 1))
            coeffs.append(amp)
    return np.array(indices), np.array(mus), np.array(coeffs)


def closed_form_state(schedule: LiftSchedule, omega: float) -> np.ndarray:
    """``sum c_{j,k} exp(-i w mu_{j,k} t / 2) |j,k>`` on the joint space."""
    idx, mu, c = effective_levels(schedule)
    psi = np.zeros(schedule.dim, dtype=complex)
    psi[idx] = c * np.exp(-0.5j * omega * mu * schedule.total_time)
    return psi


def simulate_lift(schedule: LiftSchedule, omega: float) -> ProbeState:
    """Piecewise evolution of the qubit-ancilla system through the schedule."""
    n = schedule.n_aux
    psi = np.zeros(2 * n, dtype=complex)
    psi[schedule.index(0, 1)] = schedule.initial_split[0]
    psi[schedule.index(1, 1)] = schedule.initial_split[1]
    rates = np.repeat([1.0, -1.0], n)
    now = 0.0
    order = sorted(range(len(schedule.events)), key=lambda i: schedule.events[i].time)
    for i in order:
        ev = schedule.events[i]
        psi = psi * np.exp(-0.5j * omega * rates * (ev.time - now))
        now = ev.time
        a, b = schedule.index(ev.j, 1), schedule.index(1 - ev.j, ev.k)
        cs, sn = math.cos(ev.angle), math.sin(ev.angle)
        psi[a], psi[b] = cs * psi[a] - sn * psi[b], sn * psi[a] + cs * psi[b]
    psi = psi * np.exp(-0.5j * omega * rates * (schedule.total_time - now))
    return ProbeState(psi)


def embed_sequential(times) -> tuple[Spectrum, ProbeState]:
    """Effective spectrum of a predefined-time sequential scheme.

    ``N`` qubit runs of durations ``times`` act like one ``2^N``-level probe with
    eigenvalues ``sum_i s_i t_i / T`` (``s_i = +-1``) and a flat state.
    """
    times = np.asarray(times, dtype=float)
    total = times.sum()
    signs = np.array(np.meshgrid(*([[1.0, -1.0]] * times.size), indexing="ij")).reshape(times.size, -1).T
    mu = signs @ times / total
    return Spectrum(mu), ProbeState.flat(mu.size)


# -- multi-qubit lifting ------------------------------------------------------

@dataclass(frozen=True)
class SwapSchedule:
    pairs: tuple[tuple[int, int, float], ...]
    dimension: int

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(tuple(p) for p in self.pairs))
        used = set()
        for a, b, x in self.pairs:
            if a == b or not (0 <= a < self.dimension and 0 <= b < self.dimension):
                raise ScheduleError(f"bad swap pair ({a}, {b}) for dimension {self.dimension}")
            if not 0.0 <= x <= 1.0:
                raise ScheduleError(f"swap fraction {x} outside [0, 1]")
            if a in used or b in used:
                raise ScheduleError("each level may be swapped once per schedule")
            used.update((a, b))


def swap_effective_spectrum(base: Spectrum, schedule: SwapSchedule) -> Spectrum:
    """Eigenvalues after swapping each pair at fraction ``x`` of the run.

    The amplitude starting in ``a`` accrues ``x lam_a + (1 - x) lam_b`` and
    vice versa; untouched levels keep their eigenvalue.
    """
    if len(base) != schedule.dimension:
        raise DomainError("schedule dimension does not match the spectrum")
    lam = base.lambdas.copy()
    for a, b, x in schedule.pairs:
        la, lb = base.lambdas[a], base.lambdas[b]
        lam[a] = x * la + (1 - x) * lb
        lam[b] = (1 - x) * la + x * lb
    return Spectrum(lam)


def simulate_swaps(base: Spectrum, schedule: SwapSchedule, coeffs, omega: float, t: float) -> np.ndarray:
    """Direct simulation: free evolution, swaps at ``x t``, relabel at ``t``.

    The final relabelling swap returns each amplitude to its starting level
    so the result can be compared with ``swap_effective_spectrum``.
    """
    psi = np.asarray(coeffs, dtype=complex).copy()
    lam = base.lambdas
    now = 0.0
    for a, b, x in sorted(schedule.pairs, key=lambda p: p[2]):
        psi = psi * np.exp(-0.5j * omega * lam * (x * t - now))
        now = x * t
        psi[[a, b]] = psi[[b, a]]
    psi = psi * np.exp(-0.5j * omega * lam * (t - now))
    for a, b, _ in schedule.pairs:
        psi[[a, b]] = psi[[b, a]]
    return psi


TWO_SPIN_BASE = Spectrum(np.array([1.0, 0.0, 0.0, -1.0]))  # |uu>, |du>, |ud>, |dd>
_PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_PAULI_Z = np.diag([1.0, -1.0])


def two_spin_hamiltonian() -> np.ndarray:
    """``(sz x 1 + 1 x sz) / 2``, i.e. ``diag(1, 0, 0, -1)`` in units of ``w/2``.

    Basis order ``|uu>, |du>, |ud>, |dd>``: first factor is the second spin so
    that a pi pulse on the first spin swaps ``uu <-> du`` and ``ud <-> dd``.
    """
    eye = np.eye(2)
    return (np.kron(_PAULI_Z, eye) + np.kron(eye, _PAULI_Z)) / 2


def two_spin_pi_pulse() -> np.ndarray:
    """Pi pulse on the first spin in the ``|uu>, |du>, |ud>, |dd>`` basis."""
    return np.kron(np.eye(2), _PAULI_X)


def two_spin_lift_schedule(x: float) -> SwapSchedule:
    """Swaps ``uu <-> du`` and ``dd <-> ud`` at fraction ``x``."""
    return SwapSchedule(((0, 1, x), (3, 2, x)), 4)


def simulate_two_spin_lift(coeffs, omega: float, t: float, x: float) -> np.ndarray:
    """Full two-spin unitary evolution with the pi pulse at ``x t``.

    A second pi pulse at ``t`` restores the original level labels.
    """
    H = np.diag(two_spin_hamiltonian())
    X = two_spin_pi_pulse()
    psi = np.asarray(coeffs, dtype=complex)
    psi = np.exp(-0.5j * omega * H * x * t) * psi
    psi = X @ psi
    psi = np.exp(-0.5j * omega * H * (1 - x) * t) * psi
    return X @ psi


def freeze_phases(spectrum: Spectrum, t_star: float, t: float) -> np.ndarray:
    """Phase coefficients after freezing at ``t_star``: ``lam * t_star / 2``.

    Level ``l`` then carries ``exp(-i w phi_l)`` for every ``t >= t_star``.
    """
    if t < t_star:
        raise DomainError(f"freezing time {t_star} lies after the readout time {t}")
    return spectrum.phases(t_star)


def simulate_freeze(psi, lambdas, pairs, omega: float, duration: float, flips: int) -> np.ndarray:
    """Evolve for ``duration`` while flipping each ``(a, b)`` pair ``flips`` times.

    Flips sit at ``(i + 1/2) duration / flips`` (echo spacing). The paired
    levels must have opposite eigenvalues and ``flips`` must be even, so each
    amplitude spends half the time on either level and ends where it started.
    """
    lam = np.asarray(lambdas, dtype=float)
    for a, b in pairs:
        if abs(lam[a] + lam[b]) > _TOL:
            raise DomainError("frozen pairs need opposite eigenvalues")
    if flips < 0 or flips % 2:
        raise DomainError("the number of flips must be even and nonnegative")
    psi = np.asarray(psi, dtype=complex).copy()
    if flips == 0:
        return psi * np.exp(-0.5j * omega * lam * duration)
    marks = (np.arange(flips) + 0.5) * duration / flips
    now = 0.0
    for m in marks:
        psi = psi * np.exp(-0.5j * omega * lam * (m - now))
        now = m
        for a, b in pairs:
            psi[[a, b]] = psi[[b, a]]
    return psi * np.exp(-0.5j * omega * lam * (duration - now))


@dataclass(frozen=True)
class BandCapacity:
    levels: int
    radius_factor: float
    band: tuple[int, ...] = field(default=())


def band_capacity(n_qubits: int) -> BandCapacity:
    """Levels available from the middle Dicke sectors ``N/4 <= k <= 3N/4``.

    Counts the smallest sector multiplicity in the band (conservative); the
    usable spectral radius shrinks by a factor 1/2.
    """
    if n_qubits < 2:
        raise DomainError("band capacity needs at least two qubits")
    lo = math.ceil(n_qubits / 4)
    hi = math.floor(3 * n_qubits / 4)
    band = tuple(range(lo, hi + 1))
    return BandCapacity(min(comb(n_qubits, k) for k in band), 0.5, band)
