import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsense.errors import DomainError, UnsupportedError
from qsense.estimation import (
    ProbeState,
    Spectrum,
    bcrb,
    entropic_bound,
    generator,
    optimal_mse,
    qfi,
    short_time_check,
    sld,
)
from qsense.priors import GaussianPrior, UniformPrior

PLUS = ProbeState.flat(2)
QUBIT = Spectrum.qubit()


def random_state(rng, n):
    return ProbeState.normalized(rng.normal(size=n) + 1j * rng.normal(size=n))


class TestQfi:
    def test_equator(self):
        assert qfi(PLUS, QUBIT) == pytest.approx(1.0)

    def test_eigenstate(self, rng):
        sp = Spectrum(rng.uniform(-1, 1, 4))
        assert qfi(ProbeState(np.eye(4)[2]), sp) == 0.0

    @pytest.mark.parametrize("n", [2, 3, 4, 7])
    def test_flat_equally_gapped(self, n):
        points = np.linspace(-1, 1, n) / 2
        assert qfi(ProbeState.flat(n), Spectrum.equally_gapped(n)) == pytest.approx(4 * np.var(points))

    def test_matches_sld(self, rng):
        # F = tr(rho L^2) for pure states
        for n in (2, 3, 5):
            s, sp = random_state(rng, n), Spectrum(rng.uniform(-1, 1, n))
            L = sld(s, sp)
            assert np.real(np.trace(s.density @ L @ L)) == pytest.approx(qfi(s, sp), rel=1e-10)


class TestSld:
    def test_eigenstate_zero(self):
        L = sld(ProbeState(np.array([0, 1.0, 0])), Spectrum.equally_gapped(3))
        np.testing.assert_allclose(L, 0, atol=1e-15)

    def test_qubit(self):
        L = sld(PLUS, QUBIT)
        assert np.real(np.trace(PLUS.density @ L @ L)) == pytest.approx(1.0)

    def test_residual(self, rng):
        s, sp = random_state(rng, 3), Spectrum(rng.uniform(-1, 1, 3))
        rho, h = s.density, generator(sp)
        L = sld(s, sp)
        resid = rho @ L + L @ rho + 2j * (h @ rho - rho @ h)
        assert np.max(np.abs(resid)) < 1e-10


class TestBcrb:
    def test_values(self):
        assert bcrb(GaussianPrior(), PLUS, QUBIT, 0.0) == 1.0
        assert bcrb(GaussianPrior(), PLUS, QUBIT, 1.0) == pytest.approx(0.5)

    def test_uniform_unsupported(self):
        with pytest.raises(UnsupportedError):
            bcrb(UniformPrior(), PLUS, QUBIT, 1.0)


class TestEntropic:
    @pytest.mark.parametrize("prior,d,expected", [
        (GaussianPrior(), 2, 0.25),
        (GaussianPrior(), 1, 1.0),
        (GaussianPrior(0, 3), 3, 1.0),
        (UniformPrior(0, 1), 3, 1 / (9 * 2 * math.pi * math.e)),
    ])
    def test_values(self, prior, d, expected):
        assert entropic_bound(prior, d) == pytest.approx(expected, rel=1e-12)

    def test_uniform_d3(self):
        assert entropic_bound(UniformPrior(0, 1), 3) == pytest.approx(0.00650, abs=1e-5)

    def test_bad_dimension(self):
        with pytest.raises(DomainError):
            entropic_bound(GaussianPrior(), 0)


class TestShortTime:
    def test_qubit(self):
        assert short_time_check(GaussianPrior(), PLUS, QUBIT) == pytest.approx(1.0, abs=0.01)

    def test_eigenstate(self):
        assert short_time_check(GaussianPrior(), ProbeState(np.array([1.0, 0, 0])),
                                Spectrum.equally_gapped(3)) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("sigma", [1.0, 0.5])
    def test_flat_four_level(self, sigma):
        prior = GaussianPrior(0, sigma)
        st4, sp = ProbeState.flat(4), Spectrum.equally_gapped(4)
        expected = prior.variance ** 2 * qfi(st4, sp)
        assert short_time_check(prior, st4, sp) == pytest.approx(expected, rel=0.01)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 5), st.floats(0.0, 6.0), st.floats(0.3, 3.0), st.integers(0, 2 ** 32 - 1))
def test_bound_chain(n, t, sigma, seed):
    rng = np.random.default_rng(seed)
    prior = GaussianPrior(0.0, sigma)
    s, sp = random_state(rng, n), Spectrum(rng.uniform(-1, 1, n))
    m = optimal_mse(prior, s, sp, t)
    assert m >= bcrb(prior, s, sp, t) - 1e-9
    assert m >= entropic_bound(prior, n) - 1e-9
