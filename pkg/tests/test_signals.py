import numpy as np
import pytest

from wavesel import signals
from wavesel.signals import (NoiseScenario, RegressionSample, TestSignal,
                             benchmark_scale, benchmark_signal, derive_seed,
                             eval_signal, generate, get_noise, get_signal)


GRID = (np.arange(1 << 14) + 0.5) / (1 << 14)


def test_heavisine_pinned_value():
    # 4 sin(2 pi) - sgn(0.2) - sgn(0.22) = -2
    assert eval_signal(get_signal("heavisine"), 0.5) == pytest.approx(-2.0, abs=1e-12)


def test_doppler_vanishes_at_one():
    assert eval_signal(get_signal("doppler"), 1.0) == pytest.approx(0.0, abs=1e-12)


def test_wave_at_zero():
    assert eval_signal(get_signal("wave"), 0.0) == pytest.approx(0.8, abs=1e-12)


def test_eval_rejects_out_of_domain():
    sig = get_signal("wave")
    with pytest.raises(ValueError):
        eval_signal(sig, -0.1)
    with pytest.raises(ValueError):
        eval_signal(sig, 1.0001)


def test_signals_total_on_grid():
    for name in signals.SIGNAL_NAMES:
        vals = eval_signal(get_signal(name), GRID)
        assert np.all(np.isfinite(vals))


def test_builtin_ranges():
    # measured ranges of the adopted formulas; HeaviSine genuinely reaches -6
    expected = {
        "wave": (0.19, 0.81),
        "heavisine": (-6.01, 4.01),
        "doppler": (-0.51, 0.51),
        "spikes": (-0.01, 2.51),
    }
    for name, (lo, hi) in expected.items():
        vals = eval_signal(get_signal(name), GRID)
        assert lo <= vals.min() and vals.max() <= hi, name


def test_noise_scenarios_match_definitions():
    x = np.array([0.0, 0.25, 1.0])
    assert np.allclose(get_noise("l1")(x), 0.01)
    assert np.allclose(get_noise("l2")(x), 0.02 * x)
    assert np.allclose(get_noise("h1")(x), 0.05)
    assert np.allclose(get_noise("h2")(x), 0.1 * x)
    for name in signals.NOISE_NAMES:
        assert np.all(get_noise(name)(GRID) >= 0.0)


def test_benchmark_scale_reference_is_wave():
    assert benchmark_scale("wave") == pytest.approx(1.0)
    wave = eval_signal(get_signal("wave"), GRID)
    ref_range = wave.max() - wave.min()
    for name in ("heavisine", "doppler", "spikes"):
        c = benchmark_scale(name)
        vals = eval_signal(benchmark_signal(name), GRID)
        assert 0 < c < 1
        assert vals.max() - vals.min() == pytest.approx(ref_range, rel=1e-12)


def test_generate_deterministic():
    sig, noi = get_signal("wave"), get_noise("l1")
    a = generate(sig, noi, 256, 42)
    b = generate(sig, noi, 256, 42)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    c = generate(sig, noi, 256, 43)
    assert not np.array_equal(a.y, c.y)


def test_generate_sorted_strictly_increasing():
    s = generate(get_signal("spikes"), get_noise("h2"), 2048, 9)
    assert np.all(np.diff(s.x) > 0)
    assert len(s.x) == len(s.y) == 2048


def test_zero_noise_reproduces_signal():
    sig = get_signal("wave")
    zero = NoiseScenario("Custom", lambda x: np.zeros_like(np.asarray(x, float)))
    s = generate(sig, zero, 8, 1)
    assert np.allclose(s.y, eval_signal(sig, s.x), atol=0.0)


def test_noise_chi_square_concentration():
    # mean of (y - s(x))^2 / sigma(x)^2 is a chi-square average near 1
    sig, noi = get_signal("spikes"), get_noise("h2")
    s = generate(sig, noi, 1024, 7)
    z = (s.y - eval_signal(sig, s.x)) / noi(s.x)
    assert 0.8 <= np.mean(z ** 2) <= 1.2


def test_noise_law_variance():
    # 10^4 draws: empirical variance of y - s(x) matches sigma(x)^2 within 5%
    sig, noi = get_signal("wave"), get_noise("h1")
    s = generate(sig, noi, 10_000, 12)
    resid = (s.y - eval_signal(sig, s.x)) / noi(s.x)
    assert abs(np.var(resid) - 1.0) < 0.05


def test_pairing_preserved_under_sort():
    # with zero noise the pairing is directly checkable after sorting
    sig = get_signal("doppler")
    zero = NoiseScenario("Custom", lambda x: np.zeros_like(np.asarray(x, float)))
    s = generate(sig, zero, 512, 77)
    assert np.allclose(s.y, eval_signal(sig, s.x))


def test_derive_seed_mixing():
    assert derive_seed(1, 0) != derive_seed(1, 1)
    assert derive_seed(1, 0) != derive_seed(2, 0)
    assert derive_seed(5, 3) == derive_seed(5, 3)


def test_round_trip_csv_json():
    s = generate(get_signal("wave"), get_noise("l2"), 64, 5)
    c = RegressionSample.from_csv(s.to_csv())
    assert np.array_equal(c.x, s.x) and np.array_equal(c.y, s.y)
    assert c.meta == s.meta
    j = RegressionSample.from_json(s.to_json())
    assert np.array_equal(j.x, s.x) and np.array_equal(j.y, s.y)
    assert j.meta == s.meta


def test_generate_requires_two_points():
    with pytest.raises(ValueError):
        generate(get_signal("wave"), get_noise("l1"), 1, 0)


def test_custom_signal_allowed():
    f = TestSignal("Custom", lambda x: np.asarray(x, float) ** 2)
    assert eval_signal(f, 0.5) == pytest.approx(0.25)
