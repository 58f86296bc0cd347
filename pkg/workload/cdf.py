"""Empirical flow-size distributions.

A CDF file is plain text, one ``size_bytes<TAB>cumulative_probability`` pair
per line; everything after ``#`` is a comment. Sizes and probabilities must
both strictly increase and the last probability must be 1. The first
breakpoint carries the probability mass of the smallest size.
"""
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DATA_DIR = Path(__file__).parent / "data"


class CdfError(ValueError):
    """Raised for malformed or inconsistent CDF definitions."""


@dataclass(frozen=True)
class SizeCdf:
    name: str
    sizes: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.sizes or len(self.sizes) != len(self.probs):
            raise CdfError(f"{self.name}: need matching, nonempty size and probability lists")
        if any(s <= 0 for s in self.sizes):
            raise CdfError(f"{self.name}: sizes must be positive")
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise CdfError(f"{self.name}: sizes must strictly increase")
        if any(b <= a for a, b in zip(self.probs, self.probs[1:])):
            raise CdfError(f"{self.name}: probabilities must strictly increase")
        if self.probs[0] <= 0 or not math.isclose(self.probs[-1], 1.0, rel_tol=0, abs_tol=1e-9):
            raise CdfError(f"{self.name}: probabilities must lie in (0, 1] and end at 1.0")

    @classmethod
    def from_pairs(cls, name: str, pairs: list[tuple[float, float]]) -> "SizeCdf":
        return cls(name, tuple(float(s) for s, _ in pairs), tuple(float(p) for _, p in pairs))

    def mean(self, log_interpolation: bool = False) -> float:
        """Analytic mean of the interpolated distribution."""
        total = self.sizes[0] * self.probs[0]
        for (s0, p0), (s1, p1) in zip(zip(self.sizes, self.probs), zip(self.sizes[1:], self.probs[1:])):
            if log_interpolation:
                segment = (s1 - s0) / math.log(s1 / s0)
            else:
                segment = (s0 + s1) / 2.0
            total += (p1 - p0) * segment
        return total

    def quantile(self, u: np.ndarray, log_interpolation: bool = False) -> np.ndarray:
        probs = np.asarray(self.probs)
        if log_interpolation:
            return np.exp(np.interp(u, probs, np.log(self.sizes)))
        return np.interp(u, probs, np.asarray(self.sizes))


def parse_cdf(text: str, name: str) -> SizeCdf:
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 2:
            raise CdfError(f"{name}:{lineno}: expected 'size<TAB>probability', got {raw!r}")
        try:
            pairs.append((float(fields[0]), float(fields[1])))
        except ValueError as e:
            raise CdfError(f"{name}:{lineno}: {e}") from e
    return SizeCdf.from_pairs(name, pairs)


def load_cdf(name_or_path: str | Path) -> SizeCdf:
    """
    Load a CDF by bundled name (``websearch``, ``datamining``, ``w4``, ``w1``) or by file path.

    Raises:
        CdfError: If nothing matches or the file is malformed.
    """
    path = Path(name_or_path)
    if not path.is_file():
        path = DATA_DIR / f"{name_or_path}.cdf"
    if not path.is_file():
        bundled = sorted(p.stem for p in DATA_DIR.glob("*.cdf"))
        raise CdfError(f"unknown workload {name_or_path!r}; bundled: {', '.join(bundled)}")
    return parse_cdf(path.read_text(), path.stem)


def sample_flows(cdf: SizeCdf, rng: np.random.Generator, n: int, log_interpolation: bool = False) -> np.ndarray:
    """Inverse-transform sample ``n`` flow sizes in whole bytes."""
    sizes = cdf.quantile(rng.random(n), log_interpolation)
    return np.maximum(1, np.rint(sizes)).astype(np.int64)


def sample_flow(cdf: SizeCdf, rng: np.random.Generator, log_interpolation: bool = False) -> int:
    return int(sample_flows(cdf, rng, 1, log_interpolation)[0])


@dataclass(frozen=True)
class SizeBuckets:
    """Flow-size classes: small is ``(0, small_max]``, large is ``(large_min, inf)``."""

    small_max: int = 1_000
    large_min: int = 10_000

    def label(self, size: int) -> str:
        if size <= self.small_max:
            return "small"
        if size > self.large_min:
            return "large"
        return "middle"

    @classmethod
    def for_workload(cls, name: str) -> "SizeBuckets":
        # the web-search mix has no flow below 1KB, so its classes move up a decade
        if Path(name).stem == "websearch":
            return cls(small_max=10_000, large_min=100_000)
        return cls()
