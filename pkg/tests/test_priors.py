import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from qsense.errors import DegenerateOutcomeError, DomainError, UnsupportedError
from qsense.priors import (
    GaussianPrior,
    GridPrior,
    UniformPrior,
    characteristic_derivative,
    characteristic_function,
    entropy,
    fisher_information,
    load_grid_csv,
    posterior_update,
    variance,
)


def gauss_pdf(w, sigma=1.0):
    return math.exp(-0.5 * (w / sigma) ** 2) / (math.sqrt(2 * math.pi) * sigma)


def quad_cf(pdf, s, lo, hi):
    re = quad(lambda w: math.cos(s * w) * pdf(w), lo, hi, limit=200)[0]
    im = quad(lambda w: math.sin(s * w) * pdf(w), lo, hi, limit=200)[0]
    return complex(re, im)


ASYM = GridPrior([-1.0, 2.0], [0.3, 0.7])
TWO_POINT = GridPrior([-1.0, 1.0], [0.5, 0.5])
FAMILIES = [GaussianPrior(0.0, 1.0), GaussianPrior(0.3, 0.6), UniformPrior(-1.0, 1.0),
            GaussianPrior().to_grid(), ASYM]


class TestCharacteristicFunction:
    def test_normalisation(self):
        assert characteristic_function(GaussianPrior(), 0.0) == 1 + 0j

    @pytest.mark.parametrize("prior,pdf,lo,hi,s", [
        (GaussianPrior(), gauss_pdf, -8, 8, 1.0),
        (GaussianPrior(), gauss_pdf, -8, 8, 2.7),
        (UniformPrior(-1, 1), lambda w: 0.5, -1, 1, math.pi),
        (UniformPrior(-1, 1), lambda w: 0.5, -1, 1, 0.4),
    ])
    def test_against_quadrature(self, prior, pdf, lo, hi, s):
        np.testing.assert_allclose(characteristic_function(prior, s), quad_cf(pdf, s, lo, hi), atol=1e-12)

    def test_gaussian_value(self):
        np.testing.assert_allclose(characteristic_function(GaussianPrior(), 1.0), 0.6065306597, atol=1e-10)

    def test_non_finite_rejected(self):
        with pytest.raises(DomainError):
            characteristic_function(GaussianPrior(), float("nan"))
        with pytest.raises(DomainError):
            characteristic_derivative(UniformPrior(), float("inf"))

    def test_vectorised(self):
        s = np.linspace(-3, 3, 7)
        vals = characteristic_function(GaussianPrior(), s)
        assert vals.shape == s.shape
        np.testing.assert_allclose(vals, np.exp(-s ** 2 / 2))

    @pytest.mark.parametrize("prior", FAMILIES)
    def test_bounded_by_one(self, prior, rng):
        s = rng.uniform(-50, 50, 1000)
        assert np.all(np.abs(characteristic_function(prior, s)) <= 1 + 1e-12)

    @pytest.mark.parametrize("prior", [p for p in FAMILIES if p.symmetric])
    def test_symmetric_transforms_real(self, prior, rng):
        s = rng.uniform(-20, 20, 200)
        assert np.max(np.abs(np.imag(characteristic_function(prior, s)))) < 1e-10
        assert np.max(np.abs(np.imag(characteristic_derivative(prior, s)))) < 1e-10


class TestCharacteristicDerivative:
    def test_zero_mean_gives_zero_slope(self):
        assert characteristic_derivative(GaussianPrior(), 0.0) == 0
        assert characteristic_derivative(TWO_POINT, 0.0) == 0

    def test_gaussian_value(self):
        np.testing.assert_allclose(characteristic_derivative(GaussianPrior(), 1.0), -math.exp(-0.5), atol=1e-14)

    @pytest.mark.parametrize("prior", FAMILIES)
    def test_matches_finite_difference(self, prior, rng):
        h = 1e-5
        for s in rng.uniform(-6, 6, 100):
            fd = (characteristic_function(prior, s + h) - characteristic_function(prior, s - h)) / (2 * h)
            assert abs(fd - characteristic_derivative(prior, s)) < 1e-6

    def test_uniform_series_branch_continuous(self):
        p = UniformPrior(-1, 1)
        a = characteristic_derivative(p, 1e-3 - 1e-12)
        b = characteristic_derivative(p, 1e-3 + 1e-12)
        assert abs(a - b) < 1e-12


class TestMoments:
    @pytest.mark.parametrize("prior,expected", [
        (GaussianPrior(0, 2), 4.0),
        (TWO_POINT, 1.0),
    ])
    def test_variance_closed(self, prior, expected):
        assert variance(prior) == pytest.approx(expected, abs=1e-14)

    def test_uniform_variance_by_quadrature(self):
        m2 = quad(lambda w: w * w * 0.5, -1, 1)[0]
        assert variance(UniformPrior(-1, 1)) == pytest.approx(m2, abs=1e-14)

    def test_gaussian_entropy_by_quadrature(self):
        h = quad(lambda w: -gauss_pdf(w) * math.log(gauss_pdf(w)), -12, 12)[0]
        assert entropy(GaussianPrior()) == pytest.approx(h, abs=1e-10)
        assert entropy(GaussianPrior()) == pytest.approx(1.41894, abs=1e-5)

    def test_entropy_scaling(self):
        assert entropy(GaussianPrior(0, 2)) == pytest.approx(entropy(GaussianPrior()) + math.log(2), abs=1e-14)

    def test_uniform_unit_entropy(self):
        assert entropy(UniformPrior(0, 1)) == 0.0

    def test_grid_entropy_needs_bin_width(self):
        with pytest.raises(UnsupportedError):
            entropy(ASYM)

    def test_grid_entropy_matches_continuous(self):
        assert entropy(GaussianPrior().to_grid()) == pytest.approx(entropy(GaussianPrior()), abs=1e-8)
        assert entropy(UniformPrior(-2, 1).to_grid()) == pytest.approx(math.log(3), abs=1e-12)

    @pytest.mark.parametrize("sigma", [1.0, 0.5])
    def test_fisher_information(self, sigma):
        oracle = quad(lambda w: (w / sigma ** 2) ** 2 * gauss_pdf(w, sigma), -12 * sigma, 12 * sigma)[0]
        assert fisher_information(GaussianPrior(0, sigma)) == pytest.approx(oracle, rel=1e-10)
        assert fisher_information(GaussianPrior(0, sigma)) == pytest.approx(1 / sigma ** 2)

    def test_fisher_on_grid(self):
        assert fisher_information(GaussianPrior(0, 0.5).to_grid()) == pytest.approx(4.0, rel=1e-5)

    def test_uniform_fisher_unsupported(self):
        with pytest.raises(UnsupportedError):
            fisher_information(UniformPrior(-1, 1))
        with pytest.raises(UnsupportedError):
            fisher_information(UniformPrior(-1, 1).to_grid())

    @pytest.mark.parametrize("prior", [GaussianPrior(), GaussianPrior(1, 3), UniformPrior(-1, 2),
                                       GaussianPrior().to_grid(), UniformPrior(0, 1).to_grid()])
    def test_gaussian_maximises_entropy(self, prior):
        assert 0.5 * math.log(2 * math.pi * math.e * prior.variance) >= entropy(prior) - 1e-9


class TestGridPrior:
    def test_mean_centred(self):
        g = GridPrior([1.0, 3.0], [0.5, 0.5])
        assert g.offset == 2.0
        np.testing.assert_array_equal(g.x, [-1.0, 1.0])
        assert g.symmetric

    def test_asymmetric_flag(self):
        assert not ASYM.symmetric

    def test_weights_must_sum_to_one(self):
        with pytest.raises(DomainError):
            GridPrior([0.0, 1.0], [0.5, 0.6])

    def test_gaussian_parameters_validated(self):
        with pytest.raises(DomainError):
            GaussianPrior(0, 0)
        with pytest.raises(DomainError):
            UniformPrior(1, 1)

    def test_default_gaussian_grid(self):
        g = GaussianPrior(0.5, 2.0).to_grid()
        assert g.x.size == 4001
        assert g.points[0] == pytest.approx(0.5 - 16.0)
        assert g.variance == pytest.approx(4.0, rel=1e-12)

    def test_csv_loader(self, tmp_path):
        path = tmp_path / "prior.csv"
        path.write_text("omega,weight\n-1,1\n0,2\n1,1\n")
        g = load_grid_csv(path)
        np.testing.assert_allclose(g.weights, [0.25, 0.5, 0.25])
        assert g.bin_width == pytest.approx(1.0)

    def test_csv_header_required(self, tmp_path):
        path = tmp_path / "prior.csv"
        path.write_text("-1,1\n1,1\n")
        with pytest.raises(DomainError):
            load_grid_csv(path)


class TestPosteriorUpdate:
    def test_flat_likelihood(self):
        g = GaussianPrior().to_grid(201, 6.0)
        post, ev = posterior_update(g, np.ones(201))
        assert ev == pytest.approx(1.0)
        np.testing.assert_allclose(post.weights, g.weights)

    def test_point_mass(self):
        post, ev = posterior_update(TWO_POINT, [1.0, 0.0])
        assert ev == 0.5
        assert post.offset == -1.0
        assert post.variance == 0.0

    def test_cosine_likelihood_reduces_variance(self):
        g = GaussianPrior().to_grid()
        post, ev = posterior_update(g, np.cos(g.x / 2) ** 2)
        oracle_ev = quad(lambda w: math.cos(w / 2) ** 2 * gauss_pdf(w), -8, 8)[0]
        assert ev == pytest.approx(oracle_ev, abs=1e-10)
        assert post.variance < 1.0

    def test_zero_evidence(self):
        with pytest.raises(DegenerateOutcomeError):
            posterior_update(TWO_POINT, [0.0, 0.0])

    def test_needs_grid(self):
        with pytest.raises(DomainError):
            posterior_update(GaussianPrior(), [1.0])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=12),
       st.floats(-30, 30))
def test_random_grid_cf_bounded(ws, s):
    w = np.array(ws) / sum(ws)
    g = GridPrior(np.arange(len(ws), dtype=float), w)
    assert abs(characteristic_function(g, s)) <= 1 + 1e-12
    assert characteristic_function(g, 0.0) == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(-3, 3))
def test_scaled_prior_cf(factor, s):
    p = GaussianPrior(0.0, 1.3)
    np.testing.assert_allclose(p.scaled(factor).characteristic_function(s),
                               p.characteristic_function(s * factor), atol=1e-14)
