import numpy as np
import pytest

from obliv.noise import (
    BoundedUniform,
    Cauchy,
    CorruptionSpec,
    HeavyMixture,
    RademacherScaled,
    ZeroOnSet,
    alpha_at,
    corrupt,
    corruption_from_dict,
    corruption_to_dict,
    noise_from_dict,
    noise_to_dict,
    sample_noise,
)
from obliv.tensor import Tensor, rank_one

ALL_SPECS = [
    BoundedUniform(zeta=1.5),
    Cauchy(scale=2.0),
    HeavyMixture(alpha=0.5, zeta=1.0, heavy_sigma=3.0),
    RademacherScaled(scale=0.7),
    ZeroOnSet(indices=(0, 5, 9), inner=Cauchy(scale=1.0)),
]


def test_sampling_is_deterministic_per_seed():
    for spec in ALL_SPECS:
        a = sample_noise(spec, 64, 123)
        b = sample_noise(spec, 64, 123)
        c = sample_noise(spec, 64, 124)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


def test_sampling_rejects_zero_count():
    with pytest.raises(ValueError):
        sample_noise(BoundedUniform(1.0), 0, 0)


def test_empirical_symmetry():
    """Symmetric about zero: both tails of |N| carry equal empirical mass."""
    for spec in ALL_SPECS:
        x = sample_noise(spec, 40_000, 7)
        pos = np.sum(x > 0.0)
        neg = np.sum(x < 0.0)
        total = pos + neg
        assert total > 0
        assert abs(pos - neg) / total < 0.02


def test_alpha_at_matches_empirical_mass():
    for spec in ALL_SPECS:
        for z in (0.5, 1.0, 2.5):
            a = alpha_at(spec, z)
            assert 0.0 <= a <= 1.0
            x = sample_noise(spec, 50_000, 42)
            if isinstance(spec, ZeroOnSet):
                x = np.delete(x, list(spec.indices))
            emp = float(np.mean(np.abs(x) <= z))
            assert emp == pytest.approx(a, abs=0.02)


def test_alpha_at_closed_forms():
    # Cauchy(2): mass of [-1, 1] by quadrature of the density
    assert alpha_at(Cauchy(2.0), 1.0) == pytest.approx(0.29516723530085814, abs=1e-9)
    # HeavyMixture(1/2, 1, 3) at zeta = 1: half from the uniform branch,
    # half the Gaussian mass
    assert alpha_at(HeavyMixture(0.5, 1.0, 3.0), 1.0) == pytest.approx(
        0.6305586598182351, abs=1e-9)
    assert alpha_at(BoundedUniform(2.0), 1.0) == pytest.approx(0.5)
    assert alpha_at(BoundedUniform(2.0), 3.0) == 1.0
    assert alpha_at(RademacherScaled(0.7), 0.5) == 0.0
    assert alpha_at(RademacherScaled(0.7), 0.7) == 1.0


def test_bounded_uniform_stays_in_range():
    x = sample_noise(BoundedUniform(0.3), 10_000, 1)
    assert np.all(np.abs(x) <= 0.3)


def test_rademacher_values():
    x = sample_noise(RademacherScaled(2.0), 1000, 3)
    assert set(np.unique(x)) == {-2.0, 2.0}


def test_zero_on_set_masks_positions():
    spec = ZeroOnSet(indices=(1, 3), inner=BoundedUniform(1.0))
    x = sample_noise(spec, 8, 5)
    assert x[1] == 0.0 and x[3] == 0.0
    inner = sample_noise(spec.inner, 8, 5)
    keep = [0, 2, 4, 5, 6, 7]
    assert np.array_equal(x[keep], inner[keep])


def test_spec_validation():
    with pytest.raises(ValueError):
        BoundedUniform(0.0)
    with pytest.raises(ValueError):
        Cauchy(-1.0)
    with pytest.raises(ValueError):
        HeavyMixture(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        HeavyMixture(1.5, 1.0, 1.0)
    with pytest.raises(ValueError):
        RademacherScaled(0.0)


def test_noise_dict_round_trip():
    for spec in ALL_SPECS:
        d = noise_to_dict(spec)
        assert noise_from_dict(d) == spec
    with pytest.raises(ValueError):
        noise_from_dict({"kind": "levy"})
    with pytest.raises(ValueError):
        noise_from_dict({"kind": "cauchy", "scale": 1.0, "bogus": 2})


def test_corruption_dict_round_trip():
    spec = CorruptionSpec(epsilon=0.05, strategy="targeted_sign_flip", magnitude=4.0)
    assert corruption_from_dict(corruption_to_dict(spec)) == spec
    with pytest.raises(ValueError):
        corruption_from_dict({"epsilon": 0.05})


def test_corruption_validation():
    with pytest.raises(ValueError):
        CorruptionSpec(epsilon=1.0, strategy="random_extreme", magnitude=1.0)
    with pytest.raises(ValueError):
        CorruptionSpec(epsilon=-0.1, strategy="random_extreme", magnitude=1.0)
    with pytest.raises(ValueError):
        CorruptionSpec(epsilon=0.1, strategy="outliers", magnitude=1.0)
    with pytest.raises(ValueError):
        CorruptionSpec(epsilon=0.1, strategy="random_extreme", magnitude=0.0)


def test_corrupt_count_is_exact_floor():
    signal = rank_one(np.ones(4) / 2.0, 3)
    Y = Tensor(3, 4, np.zeros(64))
    for eps, expect in ((0.0, 0), (0.015, 0), (0.016, 1), (0.25, 16), (0.999, 63)):
        spec = CorruptionSpec(epsilon=eps, strategy="random_extreme", magnitude=9.0)
        Z, mask = corrupt(Y, spec, signal, seed=2)
        assert mask.size == expect
        assert np.sum(Z.values != Y.values) == expect
        if expect:
            assert np.all(np.abs(Z.values[mask]) == 9.0)
            assert np.array_equal(mask, np.sort(mask))


def test_corrupt_is_deterministic():
    signal = rank_one(np.ones(3) / np.sqrt(3.0), 3)
    Y = Tensor(3, 3, np.linspace(-1, 1, 27))
    spec = CorruptionSpec(epsilon=0.3, strategy="random_extreme", magnitude=5.0)
    Z1, m1 = corrupt(Y, spec, signal, seed=9)
    Z2, m2 = corrupt(Y, spec, signal, seed=9)
    assert Z1 == Z2 and np.array_equal(m1, m2)
    Z3, _ = corrupt(Y, spec, signal, seed=10)
    assert Z1 != Z3
    assert np.array_equal(Y.values, np.linspace(-1, 1, 27))  # input untouched


def test_targeted_flip_hits_largest_signal_entries():
    v = np.array([0.9, 0.3, 0.1, 0.2])
    v /= np.linalg.norm(v)
    signal = rank_one(v, 3)
    Y = Tensor(3, 4, signal.values.copy())
    spec = CorruptionSpec(epsilon=0.05, strategy="targeted_sign_flip", magnitude=2.0)
    Z, mask = corrupt(Y, spec, signal, seed=0)
    assert mask.size == 3  # floor(0.05 * 64)
    top = np.argsort(-np.abs(signal.values), kind="stable")[:3]
    assert set(mask.tolist()) == set(top.tolist())
    for pos in mask:
        assert Z.values[pos] == -np.sign(signal.values[pos]) * 2.0


def test_corrupt_rejects_shape_mismatch():
    signal = rank_one(np.ones(3) / np.sqrt(3.0), 2)
    Y = Tensor(3, 3, np.zeros(27))
    spec = CorruptionSpec(epsilon=0.1, strategy="random_extreme", magnitude=1.0)
    with pytest.raises(ValueError):
        corrupt(Y, spec, signal, seed=0)
