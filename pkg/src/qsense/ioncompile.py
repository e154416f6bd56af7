"""Compile probe protocols to trapped-ion pulses and check them by direct
simulation.

The ion carries four electronic levels ``g, e, g', e'`` and a motional ladder
``|1>..|n>``. States are arrays of shape ``(4, n)`` indexed by
``(electronic, k - 1)``. Free evolution is ``exp(-i B sigma_z dt)`` on the
``g, e`` pair; primed levels do not evolve.

Pulses are instantaneous:

* ``G(l)``: swap ``|g', j> <-> |g, j + l>``; ``E(l)`` likewise on ``e', e``.
* ``Xprime``: swap ``g' <-> e'``; ``SigmaX``: swap ``g <-> e``.
* ``Sideband(j)``: red sideband swap ``|e, j> <-> |g, j + 1>``.
* ``TwoLevelV(k1, k2)``: a 2x2 unitary on ``(g', e')``, used while the
  motional pair ``(k1, k2)`` is parked there.
* ``Uflip(k)``: the ideal controlled flip ``sigma_x`` on ``|g/e, k>``.

The block ``G_l E_l X' G_l E_l`` flips ``|g/e, k>`` for every ``k > l`` and
leaves the rest alone, so ``U_k`` is the block for ``l = k`` followed by the
block for ``l = k - 1``; for ``k = n`` the second block alone suffices.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ScheduleError, TruncationError
from .estimation import ProbeState, Spectrum
from .estimation.core import evolved_amplitudes

G, E, GP, EP = 0, 1, 2, 3
LEVEL_NAMES = ("g", "e", "g'", "e'")
KINDS = ("G", "E", "Xprime", "SigmaX", "Sideband", "TwoLevelV", "Uflip")
_LEAK_TOL = 1e-14


@dataclass(frozen=True)
class IonPulse:
    kind: str
    index: tuple = ()
    time: float = 0.0
    params: tuple | None = None  # TwoLevelV: row-major 2x2 as (re, im) pairs

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown pulse kind {self.kind!r}")
        object.__setattr__(self, "index", tuple(int(i) for i in self.index))

    @classmethod
    def two_level(cls, k1: int, k2: int, U, time: float = 0.0) -> "IonPulse":
        U = np.asarray(U, dtype=complex).reshape(2, 2)
        return cls("TwoLevelV", (k1, k2), time, tuple((float(z.real), float(z.imag)) for z in U.ravel()))

    @property
    def matrix(self) -> np.ndarray:
        return np.array([complex(a, b) for a, b in self.params]).reshape(2, 2)

    def at(self, time: float) -> "IonPulse":
        return IonPulse(self.kind, self.index, float(time), self.params)

    def to_dict(self) -> dict:
        d = {"time": float(self.time), "kind": self.kind, "indices": list(self.index)}
        if self.params is not None:
            d["params"] = [list(p) for p in self.params]
        return d

    @classmethod
    def from_dict(cls, d) -> "IonPulse":
        params = tuple(tuple(p) for p in d["params"]) if d.get("params") is not None else None
        return cls(d["kind"], tuple(d.get("indices", ())), float(d["time"]), params)


@dataclass
class IonState:
    amplitudes: np.ndarray  # (4, n)

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex)
        if a.ndim != 2 or a.shape[0] != 4:
            raise DomainError("ion amplitudes must have shape (4, n)")
        if abs(np.linalg.norm(a) - 1.0) > 1e-12:
            raise DomainError("ion state must have unit norm")
        self.amplitudes = a

    @property
    def cutoff(self) -> int:
        return self.amplitudes.shape[1]

    @classmethod
    def basis(cls, level: int, k: int, n: int) -> "IonState":
        a = np.zeros((4, n), dtype=complex)
        a[level, k - 1] = 1.0
        return cls(a)

    @classmethod
    def product(cls, level: int, motional, n: int | None = None) -> "IonState":
        m = np.asarray(motional, dtype=complex)
        n = m.size if n is None else n
        a = np.zeros((4, n), dtype=complex)
        a[level, :m.size] = m
        return cls(a)


def _swap_shifted(a, lo, hi, l, n):
    """Swap ``a[lo, j] <-> a[hi, j + l]``; unmatched ``lo`` entries must be empty."""
    if not 0 <= l < n:
        raise TruncationError(f"shift {l} leaves the motional cutoff n={n}")
    if np.any(np.abs(a[lo, n - l:]) > _LEAK_TOL):
        raise TruncationError(f"pulse would push population of {LEVEL_NAMES[lo]} past k={n}")
    upper = a[hi, l:].copy()
    a[hi, l:] = a[lo, :n - l]
    a[lo, :n - l] = upper


def _check_k(k, n):
    if not 1 <= k <= n:
        raise TruncationError(f"motional level {k} outside 1..{n}")


def apply_pulse(state: IonState, pulse: IonPulse, strict: bool = True) -> IonState:
    """Apply one instantaneous pulse; never truncates silently."""
    a = state.amplitudes.copy()
    n = a.shape[1]
    kind = pulse.kind
    if kind in ("G", "E"):
        lo, hi = (GP, G) if kind == "G" else (EP, E)
        if strict:
            _swap_shifted(a, lo, hi, pulse.index[0], n)
        else:
            l = pulse.index[0]
            upper = a[hi, l:].copy()
            a[hi, l:] = a[lo, :n - l]
            a[lo, :n - l] = upper
    elif kind == "Xprime":
        a[[GP, EP]] = a[[EP, GP]]
    elif kind == "SigmaX":
        a[[G, E]] = a[[E, G]]
    elif kind == "Sideband":
        j = pulse.index[0]
        _check_k(j, n)
        _check_k(j + 1, n)
        a[E, j - 1], a[G, j] = a[G, j], a[E, j - 1]
    elif kind == "TwoLevelV":
        a[[GP, EP]] = pulse.matrix @ a[[GP, EP]]
    elif kind == "Uflip":
        k = pulse.index[0]
        _check_k(k, n)
        a[G, k - 1], a[E, k - 1] = a[E, k - 1], a[G, k - 1]
    out = IonState.__new__(IonState)
    out.amplitudes = a
    return out


def free_evolution(state: IonState, B: float, dt: float) -> IonState:
    a = state.amplitudes.copy()
    a[G] *= np.exp(-1j * B * dt)
    a[E] *= np.exp(1j * B * dt)
    out = IonState.__new__(IonState)
    out.amplitudes = a
    return out


def _ordered(pulses):
    return sorted(pulses, key=lambda p: p.time)  # stable: keeps emission order at equal times


def simulate_ion(pulses, B: float, t: float, initial: IonState, strict: bool = True) -> IonState:
    """Free evolution under ``B sigma_z`` with the pulses applied at their times."""
    state, now = initial, 0.0
    for p in _ordered(pulses):
        if p.time < -1e-12 or p.time > t + 1e-12:
            raise ScheduleError(f"pulse at {p.time} outside [0, {t}]")
        state = free_evolution(state, B, p.time - now)
        state = apply_pulse(state, p, strict)
        now = max(now, p.time)
    return free_evolution(state, B, t - now)


def program_unitary(pulses, B: float, t: float, n: int) -> np.ndarray:
    """Full ``4n x 4n`` matrix of a pulse program (columns: basis inputs)."""
    cols = []
    for idx in range(4 * n):
        a = np.zeros(4 * n, dtype=complex)
        a[idx] = 1.0
        s = IonState.__new__(IonState)
        s.amplitudes = a.reshape(4, n)
        cols.append(simulate_ion(pulses, B, t, s, strict=False).amplitudes.ravel())
    return np.array(cols).T


# -- controlled flips ---------------------------------------------------------

def _block(l: int, time: float) -> list[IonPulse]:
    # operator G_l E_l X' G_l E_l, listed in time order
    return [IonPulse("E", (l,), time), IonPulse("G", (l,), time), IonPulse("Xprime", (), time),
            IonPulse("E", (l,), time), IonPulse("G", (l,), time)]


def compile_flip(k: int, n: int, time: float = 0.0, use_sigma_x: bool = False) -> list[IonPulse]:
    """Pulse sequence implementing ``U_k`` within cutoff ``n``.

    Ten pulses for ``k < n`` and five for ``k = n``. With ``use_sigma_x`` the
    ``l = 0`` block needed for ``k = 1 < n`` is replaced by a single
    ``sigma_x`` (six pulses).
    """
    if not 1 <= k <= n:
        raise DomainError(f"flip level {k} outside 1..{n}")
    if k == n:
        return _block(n - 1, time)
    tail = [IonPulse("SigmaX", (), time)] if (k == 1 and use_sigma_x) else _block(k - 1, time)
    return _block(k, time) + tail


def flip_matrix(k: int, n: int) -> np.ndarray:
    """``U_k`` on the full ``4n`` space (identity on primed levels)."""
    U = np.eye(4 * n, dtype=complex)
    gk, ek = G * n + k - 1, E * n + k - 1
    U[[gk, ek]] = U[[ek, gk]]
    return U


# -- two-level operations and preparation --------------------------------------

def transfer(k1: int, k2: int, n: int, time: float = 0.0) -> list[IonPulse]:
    """Park ``|g, k1>, |g, k2>`` on ``|g', 1>, |e', 1>``."""
    if k1 == k2:
        raise DomainError("transfer needs two distinct levels")
    return (compile_flip(k1, n, time) + [IonPulse("E", (k1 - 1,), time), IonPulse("Xprime", (), time)]
            + compile_flip(k2, n, time) + [IonPulse("E", (k2 - 1,), time)])


def two_level_operation(k1: int, k2: int, U, n: int, time: float = 0.0) -> list[IonPulse]:
    """``U`` on the motional pair ``(k1, k2)`` of the ``g`` sector."""
    there = transfer(k1, k2, n, time)
    return there + [IonPulse.two_level(k1, k2, U, time)] + there[::-1]


def _givens(a: complex, b: complex) -> np.ndarray:
    r = math.hypot(abs(a), abs(b))
    if r == 0:
        return np.eye(2, dtype=complex)
    return np.array([[np.conj(a), np.conj(b)], [-b, a]]) / r


def two_level_decomposition(U) -> list[tuple[int, int, np.ndarray]]:
    """Factor a unitary into 2x2 operations on motional pairs.

    Returns ``(k1, k2, V)`` in application order (1-based levels).
    """
    W = np.array(U, dtype=complex)
    n = W.shape[0]
    if W.shape != (n, n) or not np.allclose(W.conj().T @ W, np.eye(n), atol=1e-10):
        raise DomainError("expected a square unitary")
    reductions = []
    for col in range(n - 1):
        for row in range(n - 1, col, -1):
            a, b = W[row - 1, col], W[row, col]
            if abs(b) < 1e-15:
                continue
            Gm = _givens(a, b)
            W[[row - 1, row]] = Gm @ W[[row - 1, row]]
            reductions.append((row, row + 1, Gm))
    d = np.diag(W)
    ops = []
    for k in range(1, n):
        ops.append((k, k + 1, np.diag([d[k - 1], 1.0])))
    if n > 1:
        ops.append((n - 1, n, np.diag([1.0, d[n - 1]])))
    elif abs(d[0] - 1) > 1e-15:
        raise DomainError("a single level carries only a global phase")
    for k1, k2, Gm in reversed(reductions):
        ops.append((k1, k2, Gm.conj().T))
    return ops


def preparation_ops(coeffs) -> list[tuple[int, int, np.ndarray]]:
    """2x2 operations taking ``|1>`` to ``sum_k c_k |k>`` (application order)."""
    v = np.array(coeffs, dtype=complex)
    n = v.size
    reductions = []
    for k in range(n - 1, 0, -1):
        Gm = _givens(v[k - 1], v[k])
        v[[k - 1, k]] = Gm @ v[[k - 1, k]]
        reductions.append((k, k + 1, Gm))
    # v is now (|c|, 0, ..., 0); the phases were absorbed in the reductions
    return [(k1, k2, Gm.conj().T) for k1, k2, Gm in reversed(reductions)]


def compile_unitary(U, n: int | None = None, time: float = 0.0) -> list[IonPulse]:
    """Pulses applying the unitary ``U`` to the motional ``g`` sector."""
    dim = np.asarray(U).shape[0]
    n = dim if n is None else n
    out = []
    for k1, k2, V in two_level_decomposition(U):
        out += two_level_operation(k1, k2, V, n, time)
    return out


# -- protocols ------------------------------------------------------------------

@dataclass
class MeasureStep:
    """Two-outcome test ``{P_k, P_perp}``: flip ``|g, k>`` up and detect ``e``."""

    k: int
    outcome: int  # index of the target measurement outcome this level belongs to


@dataclass
class IonProgram:
    cutoff: int
    t: float
    pulses: list = field(default_factory=list)
    measurement: list = field(default_factory=list)
    basis_change: list = field(default_factory=list)  # pulses at time t before the tests
    lambdas: np.ndarray | None = None
    coeffs: np.ndarray | None = None

    def flip_times(self) -> np.ndarray:
        return flip_times(self.lambdas, self.t)

    def to_dict(self) -> dict:
        return {
            "cutoff": int(self.cutoff),
            "t": float(self.t),
            "lambdas": None if self.lambdas is None else [float(x) for x in self.lambdas],
            "coeffs": None if self.coeffs is None else [[float(z.real), float(z.imag)] for z in self.coeffs],
            "events": [p.to_dict() for p in self.pulses],
            "basis_change": [p.to_dict() for p in self.basis_change],
            "measurement": [{"k": m.k, "outcome": m.outcome} for m in self.measurement],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d) -> "IonProgram":
        return cls(
            int(d["cutoff"]),
            float(d["t"]),
            [IonPulse.from_dict(p) for p in d["events"]],
            [MeasureStep(int(m["k"]), int(m["outcome"])) for m in d.get("measurement", [])],
            [IonPulse.from_dict(p) for p in d.get("basis_change", [])],
            None if d.get("lambdas") is None else np.array(d["lambdas"], dtype=float),
            None if d.get("coeffs") is None else np.array([complex(a, b) for a, b in d["coeffs"]]),
        )

    @classmethod
    def from_json(cls, text: str) -> "IonProgram":
        return cls.from_dict(json.loads(text))


def flip_times(lambdas, t: float) -> np.ndarray:
    return t * (np.asarray(lambdas, dtype=float) + 1.0) / 2.0


def compile_protocol(spectrum: Spectrum, state: ProbeState, t: float, n: int | None = None,
                     projectors=None) -> IonProgram:
    """Preparation, timed flips and measurement for an effective-level probe.

    Level ``k`` of the probe lives on motional state ``|k>``. After
    preparation from ``|g, 1>``, ``U_k`` fires at ``t (lambda_k + 1) / 2``
    (equal times in order of ``k``). The final state is
    ``|e> (x) sum_k c_k exp(-i B lambda_k t) |k>``. If ``projectors`` are given
    (``n_levels x n_levels``, summing to the identity), the program also holds
    the basis change and the sequence of two-outcome tests realising them.
    """
    lam = spectrum.lambdas
    m = lam.size
    n = m if n is None else n
    if m != len(state):
        raise DomainError("state and spectrum sizes differ")
    if m > n:
        raise DomainError(f"{m} levels do not fit below cutoff {n}")
    if t < 0:
        raise DomainError("time must be nonnegative")
    coeffs = np.zeros(n, dtype=complex)
    coeffs[:m] = state.coeffs
    pulses = []
    for k1, k2, V in preparation_ops(coeffs):
        pulses += two_level_operation(k1, k2, V, n, 0.0)
    times = flip_times(lam, t)
    for k in sorted(range(m), key=lambda i: times[i]):
        pulses += compile_flip(k + 1, n, float(times[k]))
    prog = IonProgram(n, float(t), pulses, lambdas=lam.copy(), coeffs=coeffs[:m].copy())
    if projectors is not None:
        basis, labels = measurement_basis(projectors, n)
        prog.basis_change = [IonPulse("SigmaX", (), float(t))] + compile_unitary(basis.conj().T, n, float(t))
        prog.measurement = [MeasureStep(k + 1, int(labels[k])) for k in range(n)]
    return prog


def measurement_basis(projectors, n: int):
    """Orthonormal basis adapted to ``projectors`` and the outcome of each vector."""
    vecs, labels = [], []
    for idx, P in enumerate(projectors):
        P = np.asarray(P, dtype=complex)
        w, V = np.linalg.eigh(0.5 * (P + P.conj().T))
        for j in np.flatnonzero(w > 0.5):
            vecs.append(V[:, j])
            labels.append(idx)
    basis = np.array(vecs).T
    m = basis.shape[0]
    if basis.shape[1] != m:
        raise DomainError("projectors do not resolve the identity")
    if m < n:
        full = np.eye(n, dtype=complex)
        full[:m, :m] = basis
        basis = full
        labels += [len(projectors)] * (n - m)
    return basis, np.array(labels)


def effective_state(program: IonProgram, B: float) -> np.ndarray:
    """Motional amplitudes ``c_k exp(-i B lambda_k t)`` of the effective model."""
    # the estimation module writes exp(-i w lambda t / 2), so w = 2B
    return evolved_amplitudes(program.coeffs, np.asarray(program.lambdas) * program.t / 2, np.array([2 * B]))[0]


def run_program(program: IonProgram, B: float, strict: bool = True) -> IonState:
    """Simulate preparation and evolution from ``|g, 1>``."""
    start = IonState.basis(G, 1, program.cutoff)
    return simulate_ion(program.pulses, B, program.t, start, strict)


def program_deviation(program: IonProgram, B: float) -> float:
    """Max deviation of the simulated end state from ``|e> (x)`` the effective model.

    States are compared up to a global phase, which a single level cannot
    acquire from any pulse.
    """
    final = run_program(program, B).amplitudes
    target = np.zeros_like(final)
    target[E, :len(program.coeffs)] = effective_state(program, B)
    overlap = np.vdot(target, final)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.max(np.abs(final - phase * target)))


def measurement_probabilities(program: IonProgram, state: IonState) -> np.ndarray:
    """Outcome distribution of the compiled measurement by sequential collapse.

    After the basis change, test ``k = 1, 2, ...`` in turn: flip ``|g, k>`` to
    ``|e, k>`` and detect ``e``. A positive test ends the sequence; a negative
    one collapses the state and the flip is undone.
    """
    s = state
    for p in program.basis_change:
        s = apply_pulse(s, p)
    a = s.amplitudes.copy()
    n_out = max(m.outcome for m in program.measurement) + 1
    probs = np.zeros(n_out)
    remaining = 1.0
    for step in program.measurement:
        a = apply_pulse(_raw(a), IonPulse("Uflip", (step.k,))).amplitudes
        p_e = float(np.sum(np.abs(a[E]) ** 2))
        probs[step.outcome] += remaining * p_e
        a = a.copy()
        a[E] = 0.0
        norm = np.linalg.norm(a)
        if norm < 1e-15:
            break
        remaining *= 1.0 - p_e
        a /= norm
        a = apply_pulse(_raw(a), IonPulse("Uflip", (step.k,))).amplitudes
    return probs


def _raw(a) -> IonState:
    s = IonState.__new__(IonState)
    s.amplitudes = a
    return s


# -- small-n four-level scheme ----------------------------------------------------

FOUR_LEVEL_BASIS = ((G, 1), (E, 2), (G, 2), (E, 1))


def four_level_sideband(x: float, t: float) -> tuple[list[IonPulse], np.ndarray]:
    """Hide ``|e, 2>`` with ``E_1``, swap ``|e, 1> <-> |g, 2>`` and unhide at ``x t``.

    Returns the pulses and the effective eigenvalues of the initial levels
    ``|g,1>, |e,2>, |g,2>, |e,1>``: ``(1, -1, 2x - 1, 1 - 2x)``.
    """
    if not 0 <= x <= 1:
        raise DomainError("switch fraction must lie in [0, 1]")
    tx = x * t
    pulses = [IonPulse("E", (1,), tx), IonPulse("Sideband", (1,), tx), IonPulse("E", (1,), tx)]
    return pulses, np.array([1.0, -1.0, 2 * x - 1, 1 - 2 * x])
