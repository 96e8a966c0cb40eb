import numpy as np
import pytest

from wavesel import bases, transform
from wavesel.transform import (DB8, HAAR, CoefficientTree, InvalidFilterError,
                               MalformedTreeError, analyze, flatten, get_filter,
                               ordered_design_fit, qmf, synthesize, unflatten,
                               validate_filter)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_filter_registry():
    assert np.allclose(get_filter("haar"), [1 / np.sqrt(2)] * 2)
    assert len(get_filter("db8")) == 16
    with pytest.raises(KeyError):
        get_filter("nope")


def test_filter_validation():
    validate_filter(DB8)
    with pytest.raises(InvalidFilterError):
        validate_filter([0.5, 0.5])  # sums to 1, not sqrt(2)
    with pytest.raises(InvalidFilterError):
        validate_filter([1.0, 0.5, -0.2, 0.1141])  # fails double-shift orthogonality
    with pytest.raises(InvalidFilterError):
        validate_filter([1.0, 0.2, 0.2])  # odd length


def test_qmf_haar():
    g = qmf(HAAR)
    assert np.allclose(g, [1 / np.sqrt(2), -1 / np.sqrt(2)])


def test_constant_vector_all_detail_zero():
    c = 3.0
    tree = analyze(np.full(64, c), HAAR)
    assert all(np.allclose(d, 0.0) for d in tree.details)
    assert tree.approx[0] == pytest.approx(c * 8.0)  # c * 2^(p/2)


@pytest.mark.parametrize("filt", [HAAR, DB8])
@pytest.mark.parametrize("p", [2, 5, 10, 14])
def test_round_trip(filt, p):
    v = rng(p).standard_normal(1 << p)
    w = synthesize(analyze(v, filt), filt)
    assert np.max(np.abs(v - w)) < 1e-10 * max(1.0, np.max(np.abs(v)))


@pytest.mark.parametrize("filt", [HAAR, DB8])
def test_parseval(filt):
    v = rng(3).standard_normal(512)
    tree = analyze(v, filt)
    assert tree.energy() == pytest.approx(np.dot(v, v), rel=1e-10)


def test_length_must_be_power_of_two():
    with pytest.raises(ValueError):
        analyze(np.ones(48), HAAR)
    with pytest.raises(ValueError):
        analyze(np.ones(1), HAAR)


def test_tree_well_formedness():
    with pytest.raises(MalformedTreeError):
        CoefficientTree(np.zeros(1), (np.zeros(2),), 3)
    with pytest.raises(MalformedTreeError):
        CoefficientTree(np.zeros(2), (np.zeros(1),), 3)
    with pytest.raises(MalformedTreeError):
        unflatten(np.zeros(5), 8)


def test_zero_tree_synthesizes_to_zero():
    tree = unflatten(np.zeros(128), 128)
    assert np.allclose(synthesize(tree, DB8), 0.0)


def test_unit_detail_reconstructs_haar_atom():
    # single unit coefficient gives the atom on the grid, scaled by 2^(-p/2)
    n = 256
    flat = np.zeros(n)
    flat[4] = 1.0  # level-2 detail, first position: psi_{2,1}
    vals = synthesize(unflatten(flat, n), HAAR)
    x = (np.arange(n) + 0.5) / n
    atom = np.where(x < 1 / 8, 2.0, np.where(x < 1 / 4, -2.0, 0.0))
    assert np.allclose(vals, atom / np.sqrt(n), atol=1e-12)


def test_flatten_unflatten_round_trip():
    v = rng(9).standard_normal(64)
    tree = analyze(v, DB8)
    again = unflatten(flatten(tree), 64)
    assert np.allclose(flatten(again), flatten(tree))


def test_tree_serialization():
    tree = analyze(rng(2).standard_normal(32), HAAR)
    clone = CoefficientTree.from_dict(tree.to_dict())
    assert np.allclose(flatten(clone), flatten(tree))


class TestOrderedDesignFit:
    def setup_method(self):
        self.n = 1024
        self.model = bases.build_periodized_wavelet(DB8, 4)  # D = 32

    def _sample(self, y, x=None):
        from wavesel.signals import RegressionSample, SampleMeta
        x = (np.arange(len(y)) + 0.5) / len(y) if x is None else x
        return RegressionSample(np.asarray(x, float), np.asarray(y, float),
                                SampleMeta("custom", "custom", len(y), 0))

    def test_in_span_reproduced_at_design_points(self):
        # y in the discrete span of the model: projection returns it exactly
        flat = np.zeros(self.n)
        flat[: self.model.dim] = rng(1).standard_normal(self.model.dim)
        y = synthesize(unflatten(flat, self.n), DB8)
        sample = self._sample(y)
        beta = ordered_design_fit(sample, self.model)
        refit = np.zeros(self.n)
        refit[: self.model.dim] = beta * np.sqrt(self.n)
        values = synthesize(unflatten(refit, self.n), DB8)
        assert np.max(np.abs(values - y)) < 1e-10

    def test_nested_risk_monotone(self):
        from wavesel.signals import generate, get_noise, get_signal
        sample = generate(get_signal("wave"), get_noise("l1"), self.n, 21)
        coeffs = flatten(analyze(sample.y, DB8))
        energy = np.dot(sample.y, sample.y)
        risk16 = energy - np.sum(coeffs[:16] ** 2)
        risk32 = energy - np.sum(coeffs[:32] ** 2)
        assert risk32 <= risk16

    def test_constant_y_gives_constant_fit(self):
        y = np.full(self.n, 2.5)
        beta = ordered_design_fit(self._sample(y), self.model)
        assert beta[0] == pytest.approx(2.5)
        assert np.allclose(beta[1:], 0.0, atol=1e-12)

    def test_dimension_exceeds_n(self):
        big = bases.build_periodized_wavelet(DB8, 6)  # D = 128
        y = np.zeros(64)
        with pytest.raises(ValueError):
            ordered_design_fit(self._sample(y), big)

    def test_requires_dyadic_length(self):
        y = np.zeros(100)
        with pytest.raises(ValueError):
            ordered_design_fit(self._sample(y, x=np.linspace(0, 1, 100)), self.model)
