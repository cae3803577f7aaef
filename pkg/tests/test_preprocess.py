import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spikeflag.errors import ConfigError, DomainError
from spikeflag.preprocess import (
    DnConfig,
    PreprocessConfig,
    StokesPixel,
    degree_of_polarisation,
    divisive_normalise,
    features,
    magnitude,
    scale_to_unit,
    stokes,
)


def test_magnitude():
    np.testing.assert_allclose(magnitude(np.array([3 + 4j, 0, -2 + 0j])), [5, 0, 2])


class TestDivisiveNormalisation:
    def test_window_one_scalar(self):
        y = divisive_normalise(np.ones((1, 1)), DnConfig(window=1, sigma=1, exponent=1))
        assert y[0, 0] == 0.5

    def test_zeros(self):
        assert not divisive_normalise(np.zeros((6, 5)), DnConfig()).any()

    @pytest.mark.parametrize("c", [0.0, 0.3, 1.0, 7.5, 1e3])
    def test_constant_field(self, c):
        y = divisive_normalise(np.full((9, 4), c), DnConfig(window=3, sigma=1, exponent=1))
        np.testing.assert_allclose(y, c / (1 + c), rtol=0, atol=1e-12)

    def test_matches_explicit_window(self, rng):
        # reflective boundary: index -1 -> 0, -2 -> 1, F -> F-1, ...
        x = rng.random((11, 3))
        cfg = DnConfig(window=5, sigma=0.7, exponent=2.0)
        F = x.shape[0]
        ref = np.empty_like(x)
        for f in range(F):
            idx = [k if 0 <= k < F else (-k - 1 if k < 0 else 2 * F - k - 1) for k in range(f - 2, f + 3)]
            pooled = x[idx].mean(axis=0)
            ref[f] = x[f] ** 2 / (0.7**2 + pooled**2)
        np.testing.assert_allclose(divisive_normalise(x, cfg), ref, rtol=1e-12)

    def test_time_permutation_commutes(self, rng):
        x = rng.random((16, 10))
        perm = rng.permutation(10)
        np.testing.assert_allclose(divisive_normalise(x)[:, perm], divisive_normalise(x[:, perm]))

    def test_monotone_in_centre(self, rng):
        # raising the centre pixel while holding its neighbours fixed
        x = rng.random((5, 1))
        cfg = DnConfig(window=5)
        lo = divisive_normalise(x, cfg)[2, 0]
        x[2, 0] += 0.5
        assert divisive_normalise(x, cfg)[2, 0] > lo

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            divisive_normalise(-np.ones((3, 3)))

    @pytest.mark.parametrize("kw", [{"window": 4}, {"window": 0}, {"sigma": 0}, {"exponent": -1}])
    def test_config_validation(self, kw):
        with pytest.raises(ConfigError):
            DnConfig(**kw)


class TestStokesDop:
    def test_unpolarised(self):
        s = stokes(1, 0, 0, 1)
        assert tuple(map(float, s)) == (2, 0, 0, 0)
        assert degree_of_polarisation(s) == 0

    def test_fully_linear(self):
        s = stokes(1, 0, 0, 0)
        assert tuple(map(float, s)) == (1, 1, 0, 0)
        assert degree_of_polarisation(s) == 1

    def test_cross_hands(self):
        s = stokes(1, 0.5, 0.5, 1)
        assert tuple(map(float, s)) == (2, 0, 1, 0)
        assert degree_of_polarisation(s) == pytest.approx(0.5)

    def test_circular_term(self):
        s = stokes(0, -1j, 1j, 0)
        assert float(s.Vs) == 2.0

    def test_epsilon_guards_zero(self):
        assert degree_of_polarisation(stokes(0, 0, 0, 0)) == 0

    def test_superposition(self, rng):
        a = rng.normal(size=4) + 1j * rng.normal(size=4)
        b = rng.normal(size=4) + 1j * rng.normal(size=4)
        sa, sb, sab = stokes(*a), stokes(*b), stokes(*(a + b))
        # U and Vs are linear in the cross-hands
        assert sab.U == pytest.approx(sa.U + sb.U)
        assert sab.Vs == pytest.approx(sa.Vs + sb.Vs)
        # I and Q are linear in the co-hand magnitudes
        assert stokes(2 * a[0], 0, 0, 3 * a[3]).I == pytest.approx(2 * abs(a[0]) + 3 * abs(a[3]))

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False),
                    min_size=4, max_size=4))
    def test_dop_bounded(self, q):
        d = degree_of_polarisation(stokes(*q))
        assert 0.0 <= d <= 1.0


class TestScaling:
    def test_minmax(self):
        np.testing.assert_allclose(scale_to_unit([0, 5, 10]), [0, 0.5, 1])

    def test_constant(self):
        np.testing.assert_array_equal(scale_to_unit([3, 3, 3]), [0, 0, 0])

    def test_log_minmax(self):
        np.testing.assert_allclose(scale_to_unit([1, 10, 100], "log-minmax"), [0, 0.5, 1])

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            scale_to_unit([1, 2], "zscore")


class TestFeatures:
    def _vis(self, rng):
        return rng.normal(size=(32, 16, 4)) + 1j * rng.normal(size=(32, 16, 4))

    def test_full_shape_and_range(self, rng):
        f = features(self._vis(rng), PreprocessConfig("full"))
        assert f.shape == (4, 32, 16)
        assert f.min() == 0 and f.max() == 1

    def test_dop_shape(self, rng):
        f = features(self._vis(rng), PreprocessConfig("dop"))
        assert f.shape == (1, 32, 16)
        assert ((f >= 0) & (f <= 1)).all()

    def test_dn_before_dop_preserves_phase(self, rng):
        v = self._vis(rng)
        cfg = PreprocessConfig("dop", divisive_normalisation=True, dn=DnConfig(window=3))
        mag = np.moveaxis(np.abs(v), -1, 0)
        normed = divisive_normalise(mag, cfg.dn)
        scaled = np.moveaxis(v, -1, 0) * normed / mag
        expected = degree_of_polarisation(stokes(*scaled))
        np.testing.assert_allclose(features(v, cfg)[0], expected)

    def test_patch_scope(self, rng):
        v = self._vis(rng)
        cfg = PreprocessConfig("full", divisive_normalisation=True, dn_scope="patch", scaling="minmax")
        with pytest.raises(ConfigError):
            features(v, cfg)
        whole = features(v, cfg, patch_freq=32)
        per = features(v, cfg, patch_freq=16)
        assert whole.shape == per.shape
        assert not np.allclose(whole, per)

    def test_from_dict(self):
        cfg = PreprocessConfig.from_dict({"polarisation": "dop",
                                          "divisive_normalisation": {"enabled": True, "window": 7}})
        assert cfg.divisive_normalisation and cfg.dn.window == 7
        assert PreprocessConfig.from_dict(cfg.to_dict()) == cfg
