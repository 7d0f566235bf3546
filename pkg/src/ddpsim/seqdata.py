"""Sequence corpora: samples, cluster topology, synthetic generation, ingestion.

Training sequences are reduced to their token lengths; that is the only
property any balancing or accounting algorithm here consumes.  Synthetic
corpora are drawn from a binned length distribution whose defaults mirror
the published Wikipedia pre-training histogram (bins of width 128 up to a
512-token cap, with a bi-modal short/long shape).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .configio import load_toml

MAX_SEQ_LEN = 512

DEFAULT_BIN_BOUNDARIES = (128, 256, 384, 512)

# Published percentages are 37.3 / 19.7 / 11.7 / 31.4, which total 100.1%;
# normalized here so the probabilities sum to one.
_RAW_BIN_PCTS = (0.373, 0.197, 0.117, 0.314)
DEFAULT_BIN_PROBS = tuple(p / sum(_RAW_BIN_PCTS) for p in _RAW_BIN_PCTS)

WITHIN_BIN_RULES = ("uniform", "min", "max")


@dataclass(frozen=True, slots=True)
class Sample:
    """One training sequence: unique non-negative id plus token length."""

    id: int
    length: int

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"sample id must be non-negative, got {self.id}")
        if self.length < 1:
            raise ValueError(f"sample length must be >= 1, got {self.length}")


@dataclass(frozen=True, slots=True)
class Topology:
    """Cluster shape: number of nodes times GPUs per node."""

    num_nodes: int
    gpus_per_node: int

    def __post_init__(self):
        if self.num_nodes < 1:
            raise ValueError(f"num_nodes must be >= 1, got {self.num_nodes}")
        if self.gpus_per_node < 1:
            raise ValueError(f"gpus_per_node must be >= 1, got {self.gpus_per_node}")

    @property
    def total_gpus(self) -> int:
        return self.num_nodes * self.gpus_per_node


@dataclass(frozen=True)
class LengthDistribution:
    """Binned token-length distribution.

    ``bin_boundaries`` are inclusive upper bounds of consecutive bins; the
    first bin starts at length 1 and the last boundary is the maximum
    sequence length.  ``within_bin`` picks the rule for drawing a length
    inside a chosen bin: "uniform" over the bin's inclusive range (default),
    or the "min"/"max" point masses.
    """

    bin_boundaries: tuple[int, ...] = DEFAULT_BIN_BOUNDARIES
    bin_probs: tuple[float, ...] = DEFAULT_BIN_PROBS
    within_bin: str = "uniform"

    def __post_init__(self):
        bounds = tuple(int(b) for b in self.bin_boundaries)
        probs = tuple(float(p) for p in self.bin_probs)
        object.__setattr__(self, "bin_boundaries", bounds)
        object.__setattr__(self, "bin_probs", probs)
        if not bounds:
            raise ValueError("bin_boundaries must be non-empty")
        if bounds[0] < 1 or any(b >= c for b, c in zip(bounds, bounds[1:])):
            raise ValueError(f"bin_boundaries must be strictly ascending and >= 1, got {bounds}")
        if len(probs) != len(bounds):
            raise ValueError(
                f"bin_probs has {len(probs)} entries for {len(bounds)} bin_boundaries"
            )
        if any(p < 0 for p in probs):
            raise ValueError(f"bin_probs must be non-negative, got {probs}")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"bin_probs must sum to 1 (got {sum(probs)!r})")
        if self.within_bin not in WITHIN_BIN_RULES:
            raise ValueError(
                f"within_bin must be one of {WITHIN_BIN_RULES}, got {self.within_bin!r}"
            )

    @property
    def max_seq_len(self) -> int:
        return self.bin_boundaries[-1]

    def bin_ranges(self) -> list[tuple[int, int]]:
        """Inclusive (low, high) token range of each bin."""
        lows = (1,) + tuple(b + 1 for b in self.bin_boundaries[:-1])
        return list(zip(lows, self.bin_boundaries))


def generate_corpus(dist: LengthDistribution, n: int, seed: int) -> list[Sample]:
    """Draw ``n`` samples from ``dist``; ids run 0..n-1 in draw order.

    Deterministic for a fixed seed.  Generation for disjoint seeds is
    independent and may run concurrently.
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    rng = np.random.default_rng(seed)
    ranges = dist.bin_ranges()
    lows = np.array([lo for lo, _ in ranges])
    highs = np.array([hi for _, hi in ranges])
    bins = rng.choice(len(ranges), size=n, p=np.asarray(dist.bin_probs))
    if dist.within_bin == "uniform":
        lengths = rng.integers(lows[bins], highs[bins] + 1)
    elif dist.within_bin == "min":
        lengths = lows[bins]
    else:
        lengths = highs[bins]
    return [Sample(i, int(length)) for i, length in enumerate(lengths)]


def ingest_lengths(source, max_seq_len: int = MAX_SEQ_LEN) -> list[Sample]:
    """Read a newline-delimited length list into samples.

    ``source`` is a path or an open text stream of UTF-8 decimal integers,
    one per line, with an optional trailing newline.  Ids are assigned in
    input order starting at 0.  Any non-integer, zero, negative, or
    over-long record raises a ValueError naming its line number.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text(encoding="utf-8")
    if text.endswith("\n"):
        text = text[:-1]
    if not text:
        return []
    samples = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        token = line.strip()
        try:
            length = int(token, 10)
        except ValueError:
            raise ValueError(f"line {lineno}: not an integer: {line!r}") from None
        if not 1 <= length <= max_seq_len:
            raise ValueError(
                f"line {lineno}: length {length} outside [1, {max_seq_len}]"
            )
        samples.append(Sample(lineno - 1, length))
    return samples


def write_lengths(samples, path) -> None:
    """Write samples as the newline-delimited length-list format."""
    Path(path).write_text(
        "".join(f"{s.length}\n" for s in samples), encoding="utf-8"
    )


def load_distribution(path) -> LengthDistribution:
    """Build a LengthDistribution from a TOML document.

    Recognized fields: ``bin_boundaries``, ``bin_probs``, ``within_bin``.
    """
    doc = load_toml(path)
    known = {"bin_boundaries", "bin_probs", "within_bin"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValueError(f"{path}: unknown distribution fields: {', '.join(unknown)}")
    kwargs = {}
    for field in known:
        if field in doc:
            kwargs[field] = doc[field]
    return LengthDistribution(**kwargs)
