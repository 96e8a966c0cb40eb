"""Test signals, heteroscedastic noise scenarios and sample generation.

The four built-in regression functions (Wave, HeaviSine, Doppler, Spikes)
use the standard simulation-benchmark formulas, and the built-in noise
scenarios are the low/high, homoscedastic/heteroscedastic levels
l1, l2, h1, h2. Samples are drawn with a counter-based generator
(Philox) so replications can be seeded independently of execution order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "TestSignal",
    "NoiseScenario",
    "SampleMeta",
    "RegressionSample",
    "SIGNAL_NAMES",
    "NOISE_NAMES",
    "get_signal",
    "get_noise",
    "eval_signal",
    "benchmark_scale",
    "benchmark_signal",
    "generate",
    "derive_seed",
]

_U64 = (1 << 64) - 1

_SPIKE_HEIGHTS = np.array([2.25, 2.25, 2.25, 2.25, 2.25])
_SPIKE_CENTERS = np.array([0.2, 0.35, 0.48, 0.6, 0.8])
_SPIKE_WIDTHS = np.array([0.03, 0.015, 0.008, 0.005, 0.012])


def _wave(x):
    x = np.asarray(x, dtype=float)
    return 0.5 + 0.2 * np.cos(4 * np.pi * x) + 0.1 * np.cos(24 * np.pi * x)


def _heavisine(x):
    x = np.asarray(x, dtype=float)
    return 4.0 * np.sin(4 * np.pi * x) - np.sign(x - 0.3) - np.sign(0.72 - x)


def _doppler(x):
    x = np.asarray(x, dtype=float)
    return np.sqrt(x * (1.0 - x)) * np.sin(2 * np.pi * 1.05 / (x + 0.05))


def _spikes(x):
    x = np.asarray(x, dtype=float)
    d = x[..., None] - _SPIKE_CENTERS
    return np.sum(_SPIKE_HEIGHTS * np.exp(-0.5 * (d / _SPIKE_WIDTHS) ** 2), axis=-1)


@dataclass(frozen=True)
class TestSignal:
    """A regression function on [0, 1]."""

    __test__ = False  # not a pytest collectable despite the name

    name: str
    eval: Callable[[np.ndarray], np.ndarray]
    smoothness_note: str = ""

    def __call__(self, x):
        return eval_signal(self, x)


@dataclass(frozen=True)
class NoiseScenario:
    """A nonnegative noise-level function sigma on [0, 1]."""

    name: str
    sigma: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        out = np.broadcast_to(np.asarray(self.sigma(arr), dtype=float), arr.shape)
        return float(out) if arr.ndim == 0 else np.array(out)


_SIGNALS = {
    "wave": TestSignal("Wave", _wave, "smooth, two cosine frequencies"),
    "heavisine": TestSignal("HeaviSine", _heavisine, "smooth with two jumps"),
    "doppler": TestSignal("Doppler", _doppler, "chirp, spatially inhomogeneous"),
    "spikes": TestSignal("Spikes", _spikes, "five narrow Gaussian peaks"),
}

_NOISES = {
    "l1": NoiseScenario("l1", lambda x: np.full_like(np.asarray(x, dtype=float), 0.01)),
    "l2": NoiseScenario("l2", lambda x: 0.02 * np.asarray(x, dtype=float)),
    "h1": NoiseScenario("h1", lambda x: np.full_like(np.asarray(x, dtype=float), 0.05)),
    "h2": NoiseScenario("h2", lambda x: 0.1 * np.asarray(x, dtype=float)),
}

SIGNAL_NAMES = tuple(_SIGNALS)
NOISE_NAMES = tuple(_NOISES)


def get_signal(name: str) -> TestSignal:
    try:
        return _SIGNALS[name.lower()]
    except KeyError:
        raise KeyError(f"unknown signal {name!r}; choose from {SIGNAL_NAMES}") from None


def get_noise(name: str) -> NoiseScenario:
    try:
        return _NOISES[name.lower()]
    except KeyError:
        raise KeyError(f"unknown noise scenario {name!r}; choose from {NOISE_NAMES}") from None


def eval_signal(signal: TestSignal, x):
    """Evaluate ``signal`` at ``x`` in [0, 1] (scalar or array)."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"signal argument outside [0, 1]: {x!r}")
    out = np.asarray(signal.eval(arr), dtype=float)
    return float(out) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class SampleMeta:
    signal: str
    noise: str
    n: int
    seed: int

    def to_dict(self) -> dict:
        return {"signal": self.signal, "noise": self.noise, "n": self.n, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "SampleMeta":
        return cls(str(d["signal"]), str(d["noise"]), int(d["n"]), int(d["seed"]))


@dataclass(frozen=True)
class RegressionSample:
    """Design/response pairs with x sorted strictly increasing."""

    x: np.ndarray
    y: np.ndarray
    meta: SampleMeta

    @property
    def n(self) -> int:
        return len(self.x)

    def to_csv(self) -> str:
        lines = ["# wavesel-sample schema=1"]
        lines.append("# meta: " + json.dumps(self.meta.to_dict(), sort_keys=True))
        lines.append("x,y")
        for xi, yi in zip(self.x, self.y):
            lines.append(f"{float(xi)!r},{float(yi)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "RegressionSample":
        meta = None
        xs, ys = [], []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith("# meta:"):
                    meta = SampleMeta.from_dict(json.loads(line[len("# meta:"):]))
                continue
            if line.startswith("x,"):
                continue
            sx, sy = line.split(",")
            xs.append(float(sx))
            ys.append(float(sy))
        if meta is None:
            meta = SampleMeta("custom", "custom", len(xs), 0)
        return cls(np.array(xs), np.array(ys), meta)

    def to_json(self) -> str:
        doc = {
            "schema_version": 1,
            "kind": "sample",
            "meta": self.meta.to_dict(),
            "x": [float(v) for v in self.x],
            "y": [float(v) for v in self.y],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RegressionSample":
        doc = json.loads(text)
        return cls(np.array(doc["x"], dtype=float), np.array(doc["y"], dtype=float),
                   SampleMeta.from_dict(doc["meta"]))


def benchmark_scale(name: str) -> float:
    """Multiplier bringing a built-in signal to Wave's range.

    The benchmark suite runs all four signals at a common amplitude so
    the shared noise grid (0.01 to 0.1) probes comparable signal-to-noise
    ratios; Wave is the reference and keeps scale 1. Ranges are measured
    on the 2^14 midpoint grid.
    """
    grid = (np.arange(1 << 14) + 0.5) / (1 << 14)
    ref_vals = _SIGNALS["wave"].eval(grid)
    vals = get_signal(name).eval(grid)
    spread = float(vals.max() - vals.min())
    if spread == 0.0:
        return 1.0
    return float(ref_vals.max() - ref_vals.min()) / spread


def benchmark_signal(name: str) -> TestSignal:
    """The built-in signal rescaled to the common benchmark amplitude."""
    base = get_signal(name)
    c = benchmark_scale(name)
    note = base.smoothness_note + "; benchmark scale %.6g" % c
    return TestSignal(base.name, lambda x: c * np.asarray(base.eval(x), dtype=float), note)


def derive_seed(base_seed: int, index: int) -> int:
    """Derive the per-replication seed: mix(base_seed, index) via SeedSequence.

    Replications seeded this way are independent of the order in which
    they run, which keeps parallel harnesses deterministic.
    """
    ss = np.random.SeedSequence((int(base_seed) & _U64, int(index) & _U64))
    return int(ss.generate_state(1, np.uint64)[0])


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed) & _U64)))


def generate(signal: TestSignal, noise: NoiseScenario, n: int, seed: int) -> RegressionSample:
    """Draw a sample y_i = s(x_i) + sigma(x_i) eps_i with uniform design.

    x_i are i.i.d. Uniform[0,1] sorted ascending (the eps_i permuted
    jointly, so the pairing is preserved), eps_i i.i.d. standard normal
    independent of the design. Identical arguments give bit-identical
    output.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    rng = _rng(seed)
    x = rng.random(n)
    eps = rng.standard_normal(n)
    order = np.argsort(x, kind="stable")
    x = x[order]
    eps = eps[order]
    if np.any(np.diff(x) <= 0):
        # ties are a probability-zero event; nudge upward by one ulp to keep
        # the design strictly increasing without changing the joint pairing
        for i in range(1, n):
            if x[i] <= x[i - 1]:
                x[i] = np.nextafter(x[i - 1], 1.0)
    y = eval_signal(signal, x) + np.asarray(noise.sigma(x), dtype=float) * eps
    meta = SampleMeta(signal.name.lower(), noise.name.lower(), n, int(seed))
    x.setflags(write=False)
    y.setflags(write=False)
    return RegressionSample(x, y, meta)
