import math

import numpy as np
import pytest
from scipy.stats import unitary_group

from qsense.errors import DomainError, ScheduleError, TruncationError
from qsense.estimation import ProbeState, Spectrum, averaged_pair, personick_solve
from qsense.ioncompile import (
    E,
    EP,
    FOUR_LEVEL_BASIS,
    G,
    GP,
    IonProgram,
    IonPulse,
    IonState,
    apply_pulse,
    compile_flip,
    compile_protocol,
    compile_unitary,
    effective_state,
    flip_matrix,
    flip_times,
    four_level_sideband,
    measurement_probabilities,
    preparation_ops,
    program_deviation,
    program_unitary,
    run_program,
    simulate_ion,
    two_level_decomposition,
)
from qsense.priors import GaussianPrior


def unprimed_state(rng, n):
    a = np.zeros((4, n), dtype=complex)
    a[[G, E]] = rng.normal(size=(2, n)) + 1j * rng.normal(size=(2, n))
    return IonState(a / np.linalg.norm(a))


def run_pulses(state, pulses):
    for p in pulses:
        state = apply_pulse(state, p)
    return state


def random_program(rng, n, measurement=False):
    spec = Spectrum(rng.uniform(-1, 1, n))
    st = ProbeState.normalized(rng.normal(size=n) + 1j * rng.normal(size=n))
    t = rng.uniform(0.5, 3)
    proj = None
    if measurement:
        proj = personick_solve(averaged_pair(GaussianPrior(), st, spec, t)).projectors
    return compile_protocol(spec, st, t, projectors=proj)


class TestPulses:
    def test_g_involution(self, rng):
        a = np.zeros((4, 4), dtype=complex)
        a[GP, :3] = rng.normal(size=3)
        a[G] = rng.normal(size=4)
        s = IonState(a / np.linalg.norm(a))
        twice = run_pulses(s, [IonPulse("G", (1,)), IonPulse("G", (1,))])
        np.testing.assert_allclose(twice.amplitudes, s.amplitudes)

    def test_sigma_x(self):
        out = apply_pulse(IonState.basis(G, 3, 4), IonPulse("SigmaX"))
        np.testing.assert_array_equal(out.amplitudes, IonState.basis(E, 3, 4).amplitudes)

    def test_shift(self):
        out = apply_pulse(IonState.basis(EP, 1, 4), IonPulse("E", (2,)))
        np.testing.assert_array_equal(out.amplitudes, IonState.basis(E, 3, 4).amplitudes)

    def test_sideband(self):
        out = apply_pulse(IonState.basis(E, 1, 3), IonPulse("Sideband", (1,)))
        np.testing.assert_array_equal(out.amplitudes, IonState.basis(G, 2, 3).amplitudes)

    @pytest.mark.parametrize("pulse,state", [
        (IonPulse("E", (2,)), IonState.basis(EP, 3, 4)),
        (IonPulse("G", (4,)), IonState.basis(GP, 1, 4)),
        (IonPulse("Sideband", (4,)), IonState.basis(E, 4, 4)),
        (IonPulse("Uflip", (5,)), IonState.basis(E, 4, 4)),
    ])
    def test_truncation_is_explicit(self, pulse, state):
        with pytest.raises(TruncationError):
            apply_pulse(state, pulse)

    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            IonPulse("Z")

    def test_free_evolution(self):
        B, t = 0.4, 2.0
        out = simulate_ion([], B, t, IonState.basis(G, 1, 3))
        assert out.amplitudes[G, 0] == pytest.approx(np.exp(-1j * B * t))

    def test_pulse_outside_window(self):
        with pytest.raises(ScheduleError):
            simulate_ion([IonPulse("SigmaX", (), 3.0)], 0.1, 2.0, IonState.basis(G, 1, 2))


class TestFlips:
    @pytest.mark.parametrize("k,n,count", [(1, 4, 10), (2, 4, 10), (3, 4, 10), (4, 4, 5), (1, 1, 5)])
    def test_counts(self, k, n, count):
        assert len(compile_flip(k, n)) == count

    def test_sigma_x_variant(self, rng):
        pulses = compile_flip(1, 4, use_sigma_x=True)
        assert len(pulses) == 6 and pulses[-1].kind == "SigmaX"
        s = unprimed_state(rng, 4)
        expected = (flip_matrix(1, 4) @ s.amplitudes.ravel()).reshape(4, 4)
        # sigma_x also flips k > 1, which the first block flipped already
        np.testing.assert_allclose(run_pulses(s, pulses).amplitudes, expected, atol=1e-12)

    @pytest.mark.parametrize("n", [1, 2, 5])
    def test_matches_flip_matrix(self, n, rng):
        for k in range(1, n + 1):
            s = unprimed_state(rng, n)
            expected = (flip_matrix(k, n) @ s.amplitudes.ravel()).reshape(4, n)
            np.testing.assert_allclose(run_pulses(s, compile_flip(k, n)).amplitudes, expected, atol=1e-12)

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            compile_flip(0, 3)

    def test_midpoint_flip_balances_phase(self):
        B, t, n = 0.7, 2.0, 3
        out = simulate_ion(compile_flip(2, n, t / 2), B, t, IonState.basis(G, 2, n))
        np.testing.assert_allclose(out.amplitudes, IonState.basis(E, 2, n).amplitudes, atol=1e-14)

    def test_flip_times(self):
        np.testing.assert_allclose(flip_times([1.0, -1.0, 0.0], 2.0), [2.0, 0.0, 1.0])


class TestDecomposition:
    @pytest.mark.parametrize("n", [1, 2, 3, 5])
    def test_reconstructs(self, n, rng):
        U = unitary_group.rvs(n, random_state=rng) if n > 1 else np.eye(1)
        W = np.eye(n, dtype=complex)
        for k1, k2, V in two_level_decomposition(U):
            full = np.eye(n, dtype=complex)
            idx = [k1 - 1, k2 - 1]
            full[np.ix_(idx, idx)] = V
            W = full @ W
        np.testing.assert_allclose(W, U, atol=1e-12)

    def test_rejects_non_unitary(self):
        with pytest.raises(DomainError):
            two_level_decomposition(np.ones((2, 2)))

    @pytest.mark.parametrize("n", [2, 4])
    def test_compiled_unitary(self, n, rng):
        U = unitary_group.rvs(n, random_state=rng)
        v = rng.normal(size=n) + 1j * rng.normal(size=n)
        v /= np.linalg.norm(v)
        out = run_pulses(IonState.product(G, v), compile_unitary(U))
        expected = np.zeros((4, n), dtype=complex)
        expected[G] = U @ v
        np.testing.assert_allclose(out.amplitudes, expected, atol=1e-12)

    def test_preparation(self, rng):
        c = rng.normal(size=4) + 1j * rng.normal(size=4)
        c /= np.linalg.norm(c)
        v = np.eye(4, dtype=complex)[0]
        for k1, k2, V in preparation_ops(c):
            v[[k1 - 1, k2 - 1]] = V @ v[[k1 - 1, k2 - 1]]
        np.testing.assert_allclose(v, c, atol=1e-12)


class TestProtocols:
    def test_three_level(self):
        spec = Spectrum.equally_gapped(3)
        st = ProbeState.normalized([0.5, 0.7, 0.5])
        prog = compile_protocol(spec, st, 2.0)
        assert program_deviation(prog, 0.4) < 1e-9
        expected = st.coeffs * np.exp(-1j * 0.4 * spec.lambdas * 2.0)
        final = run_program(prog, 0.4).amplitudes
        overlap = np.vdot(expected, final[E])
        assert abs(overlap) == pytest.approx(1.0, abs=1e-12)

    def test_random_instances(self, rng):
        for _ in range(20):
            prog = random_program(rng, int(rng.integers(1, 6)))
            for B in rng.uniform(-2, 2, 3):
                assert program_deviation(prog, B) < 1e-9

    def test_unitarity(self, rng):
        prog = random_program(rng, 4, measurement=True)
        U = program_unitary(prog.pulses + prog.basis_change, 0.3, prog.t, prog.cutoff)
        np.testing.assert_allclose(U.conj().T @ U, np.eye(4 * prog.cutoff), atol=1e-12)

    def test_larger_cutoff(self, rng):
        st = ProbeState.normalized(rng.uniform(0.1, 1, 3))
        prog = compile_protocol(Spectrum.equally_gapped(3), st, 1.5, n=5)
        assert prog.cutoff == 5
        assert program_deviation(prog, 0.9) < 1e-9

    def test_validation(self):
        with pytest.raises(DomainError):
            compile_protocol(Spectrum.equally_gapped(3), ProbeState.flat(3), 1.0, n=2)
        with pytest.raises(DomainError):
            compile_protocol(Spectrum.equally_gapped(3), ProbeState.flat(2), 1.0)

    def test_measurement_distribution(self, rng):
        for _ in range(5):
            prog = random_program(rng, int(rng.integers(2, 5)), measurement=True)
            spec = Spectrum(prog.lambdas)
            st = ProbeState(prog.coeffs)
            proj = personick_solve(averaged_pair(GaussianPrior(), st, spec, prog.t)).projectors
            for B in rng.uniform(-1.5, 1.5, 3):
                psi = effective_state(prog, B)
                born = np.array([np.real(np.vdot(psi, P @ psi)) for P in proj])
                got = measurement_probabilities(prog, run_program(prog, B))
                np.testing.assert_allclose(got[:len(proj)], born, atol=1e-12)

    def test_json_round_trip(self, rng):
        prog = random_program(rng, 3, measurement=True)
        back = IonProgram.from_json(prog.to_json())
        assert back.pulses == prog.pulses
        assert back.basis_change == prog.basis_change
        assert [m.k for m in back.measurement] == [m.k for m in prog.measurement]
        np.testing.assert_array_equal(back.coeffs, prog.coeffs)
        assert program_deviation(back, 0.5) == pytest.approx(program_deviation(prog, 0.5), abs=1e-15)


class TestFourLevel:
    @pytest.mark.parametrize("x", [0.2, 0.5, 0.85])
    def test_effective_spectrum(self, x, rng):
        B, t = 0.6, 1.7
        pulses, lam = four_level_sideband(x, t)
        np.testing.assert_allclose(sorted(lam), sorted([-1, -(1 - 2 * x), 1 - 2 * x, 1]))
        c = rng.normal(size=4) + 1j * rng.normal(size=4)
        c /= np.linalg.norm(c)
        a = np.zeros((4, 2), dtype=complex)
        for amp, (lev, k) in zip(c, FOUR_LEVEL_BASIS):
            a[lev, k - 1] = amp
        out = simulate_ion(pulses, B, t, IonState(a)).amplitudes
        # the sideband exchanged |g,2> and |e,1>
        final_loc = [(G, 1), (E, 2), (E, 1), (G, 2)]
        got = np.array([out[lev, k - 1] for lev, k in final_loc])
        np.testing.assert_allclose(got, c * np.exp(-1j * B * lam * t), atol=1e-12)

    def test_bad_fraction(self):
        with pytest.raises(DomainError):
            four_level_sideband(1.5, 1.0)
