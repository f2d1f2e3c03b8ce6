"""Benchmark potentials, deterministic sampling, and sample-set I/O.

The benchmark potential lives on lattice coordinates x = 1..N (array index
j holds x = j + 1).  For N = 36 it is

    v(x) = sin(2 pi x / 6),   1 <= x <= 12 and 25 <= x <= 36,
    v(x) = sin(2 pi x / 12),  13 <= x <= 24,

i.e. a 6-periodic background whose central third is replaced by a
12-periodic impurity band.  Other sizes scale the band boundaries
proportionally and keep the two periods.

Randomness comes from a counter-based generator so that every draw is a pure
function of (seed, stream, counter); results are bit-reproducible across
runs and platforms.  The mixing function is SplitMix64:

    out(k) = mix(base + (k + 1) * 0x9E3779B97F4A7C15)            (mod 2^64)
    base   = mix(seed + stream * 0xBF58476D1CE4E5B9)             (mod 2^64)
    mix(z) : z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
             z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31

A uniform double in [0, 1) takes the top 53 bits: (out >> 11) * 2**-53.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class CounterRng:
    """Counter-based deterministic RNG (SplitMix64 mixing, 53-bit doubles)."""

    def __init__(self, seed: int, stream: int = 0):
        seed = int(seed) % (1 << 64)
        stream = int(stream) % (1 << 64)
        with np.errstate(over="ignore"):
            self._base = _mix64(np.uint64(seed) + np.uint64(stream) * _MIX1)
        self._counter = 0

    def raw(self, size: int) -> np.ndarray:
        """Next `size` raw 64-bit outputs (advances the counter)."""
        ks = np.arange(self._counter + 1, self._counter + size + 1, dtype=np.uint64)
        self._counter += size
        with np.errstate(over="ignore"):
            return _mix64(self._base + ks * _GOLDEN)

    def uniforms(self, size: int) -> np.ndarray:
        """Array of uniform doubles in [0, 1)."""
        return (self.raw(size) >> np.uint64(11)).astype(float) * 2.0 ** -53

    def uniform(self) -> float:
        return float(self.uniforms(1)[0])

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi); floor(u * span) keeps determinism simple
        (the modulo bias at span << 2^53 is negligible for lattice-sized spans)."""
        if hi <= lo:
            raise ValueError(f"empty range [{lo}, {hi})")
        return lo + int(self.uniform() * (hi - lo))


def true_potential(n: int = 36) -> np.ndarray:
    """Benchmark potential on x = 1..n (see module docstring)."""
    if n < 3:
        raise ValueError(f"benchmark potential needs n >= 3, got {n}")
    x = np.arange(1, n + 1, dtype=float)
    lo = int(round(n / 3.0))       # last regular site before the impurity band
    hi = int(round(2.0 * n / 3.0))  # last impurity site
    v = np.sin(2.0 * np.pi * x / 6.0)
    band = (x > lo) & (x <= hi)
    v[band] = np.sin(2.0 * np.pi * x[band] / 12.0)
    return v


def impurity_band(n: int = 36) -> np.ndarray:
    """0-based indices of the impurity band (x = n/3 + 1 .. 2n/3)."""
    lo = int(round(n / 3.0))
    hi = int(round(2.0 * n / 3.0))
    return np.arange(lo, hi)


def regular_band(n: int = 36) -> np.ndarray:
    """0-based indices outside the impurity band."""
    return np.setdiff1d(np.arange(n), impurity_band(n))


def two_band_reference_potentials(n: int = 36) -> tuple[np.ndarray, np.ndarray]:
    """Reference pair used by the two-reference switching experiments.

    v1(x) = (2/3) sin(2 pi x / 6)
    v2(x) = sin^2(2 pi x / 6) * sign(sin(2 pi x / 6))
    """
    x = np.arange(1, n + 1, dtype=float)
    s = np.sin(2.0 * np.pi * x / 6.0)
    return (2.0 / 3.0) * s, s ** 2 * np.sign(s)


@dataclass(frozen=True)
class SampleSet:
    """Seeded set of position measurements (0-based lattice indices)."""

    positions: np.ndarray
    seed: int
    n_sites: int

    @property
    def n(self) -> int:
        return int(self.positions.size)

    def __eq__(self, other):
        if not isinstance(other, SampleSet):
            return NotImplemented
        return (self.seed == other.seed and self.n_sites == other.n_sites
                and np.array_equal(self.positions, other.positions))


def sample_positions(density, n: int, seed: int, stream: int = 0) -> SampleSet:
    """Draw n positions by inverse-CDF lookup: smallest j with cumsum >= u.

    The density must be nonnegative and sum to 1 within 1e-9 (it is
    renormalized before building the CDF).
    """
    density = np.asarray(density, dtype=float)
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    if np.any(density < 0) or not np.all(np.isfinite(density)):
        raise ValueError("density must be finite and nonnegative")
    total = float(density.sum())
    if total <= 0:
        raise ValueError("density sums to zero; nothing to sample")
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"density must sum to 1 within 1e-9, got {total!r}")
    cdf = np.cumsum(density / total)
    rng = CounterRng(seed, stream=stream)
    u = rng.uniforms(n)
    idx = np.searchsorted(cdf, u, side="left")
    idx = np.minimum(idx, density.size - 1)
    return SampleSet(positions=idx.astype(np.int64), seed=int(seed),
                     n_sites=int(density.size))


def empirical_density(samples, n_sites: int | None = None) -> np.ndarray:
    """Histogram of the sample positions divided by the sample count."""
    if isinstance(samples, SampleSet):
        positions, n_sites = samples.positions, samples.n_sites
    else:
        positions = np.asarray(samples)
        if n_sites is None:
            raise ValueError("n_sites is required for a bare position array")
    if positions.size == 0:
        raise ValueError("cannot form an empirical density from zero samples")
    return np.bincount(positions.astype(int), minlength=n_sites) / positions.size


def write_samples(path, samples: SampleSet) -> None:
    """Text format: '# seed=<u64> n=<int> N=<int>' then one index per line."""
    lines = [f"# seed={samples.seed} n={samples.n} N={samples.n_sites}"]
    lines.extend(str(int(p)) for p in samples.positions)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_samples(path) -> SampleSet:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing '# seed=.. n=.. N=..' header")
        fields = dict(part.split("=", 1) for part in header[1:].split())
        try:
            seed = int(fields["seed"])
            n = int(fields["n"])
            n_sites = int(fields["N"])
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{path}: malformed header {header!r}") from exc
        positions = np.array([int(line) for line in fh if line.strip()],
                             dtype=np.int64)
    if positions.size != n:
        raise ValueError(f"{path}: header says n={n} but found {positions.size} rows")
    if positions.size and (positions.min() < 0 or positions.max() >= n_sites):
        raise ValueError(f"{path}: positions outside 0..{n_sites - 1}")
    return SampleSet(positions=positions, seed=seed, n_sites=n_sites)
