"""Estimators over METTS Markov chains: running averages, bunched error
bars and autocorrelation analysis.

Multiple chains are serialized by interleaving them in step order, so a
running average at small s already draws from every chain. Error bars come
from doubling the bin size until the estimate stops moving (bunching), to
absorb autocorrelation between consecutive chain steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.stats

CONFIDENCE_Z = {0.95: 1.96, 0.997: 3.0}
DEFAULT_BURN_IN = 10


@dataclass
class ChainRecord:
    chain_id: int
    seed: int
    steps: list[int]
    values: dict[str, list[float]]
    burn_in: int = DEFAULT_BURN_IN

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.steps, self.steps[1:])):
            raise ValueError("steps must be strictly increasing")
        for name, series in self.values.items():
            if len(series) != len(self.steps):
                raise ValueError(f"series {name!r} length != number of steps")

    def series(self, observable: str) -> np.ndarray:
        if observable not in self.values:
            raise KeyError(f"unknown observable {observable!r}")
        return np.asarray(self.values[observable], dtype=float)


@dataclass
class BunchedEstimate:
    mean: float
    stderr: float  # scaled to the requested confidence level
    bin_size: int
    confidence: float


def z_factor(confidence: float) -> float:
    for level, z in CONFIDENCE_Z.items():
        if abs(confidence - level) < 1e-9:
            return z
    return float(scipy.stats.norm.ppf(0.5 * (1.0 + confidence)))


def serialize(
    records: list[ChainRecord], observable: str, burn_in: int | None = None
) -> np.ndarray:
    """Interleave post-burn-in samples of all chains in step order."""
    series = []
    for rec in records:
        cut = rec.burn_in if burn_in is None else burn_in
        series.append(rec.series(observable)[cut:])
    if not series or all(len(s) == 0 for s in series):
        raise ValueError("no samples left after burn-in")
    length = max(len(s) for s in series)
    out = []
    for j in range(length):
        for s in series:
            if j < len(s):
                out.append(s[j])
    return np.asarray(out)


def running_average(
    records: list[ChainRecord], observable: str, s_i: int | None = None
) -> list[tuple[int, float]]:
    """Mean over the first s serialized samples, for every s."""
    data = serialize(records, observable, burn_in=s_i)
    csum = np.cumsum(data)
    return [(s + 1, csum[s] / (s + 1)) for s in range(len(data))]


def bunched_error(
    records: list[ChainRecord],
    observable: str,
    confidence: float = 0.95,
    burn_in: int | None = None,
) -> BunchedEstimate:
    """Bin-doubling error estimate: grow the bin until the standard error
    stops changing by 10% or fewer than 16 bins remain."""
    data = serialize(records, observable, burn_in=burn_in)
    if len(data) < 16:
        raise ValueError(f"need >= 16 post-burn-in samples, got {len(data)}")
    mean = float(np.mean(data))
    bin_size = 1
    prev_err = None
    chosen = 1
    err = 0.0
    while True:
        n_bins = len(data) // bin_size
        if n_bins < 16:
            break
        means = np.mean(data[: n_bins * bin_size].reshape(n_bins, bin_size), axis=1)
        cur = float(np.std(means, ddof=1) / np.sqrt(n_bins))
        if prev_err is not None and prev_err > 0 and abs(cur - prev_err) < 0.1 * prev_err:
            err, chosen = cur, bin_size
            break
        err, chosen = cur, bin_size
        prev_err = cur
        bin_size *= 2
    return BunchedEstimate(
        mean=mean,
        stderr=z_factor(confidence) * err,
        bin_size=chosen,
        confidence=confidence,
    )


def autocorrelation(
    records: list[ChainRecord],
    observable: str,
    max_lag: int,
    burn_in: int | None = None,
) -> tuple[list[tuple[int, float]], float]:
    """Normalized fluctuation autocorrelation per lag, averaged over chains,
    and the integrated time tau = 1 + 2 sum(Gamma) cut at the first
    negative value."""
    chains = []
    for rec in records:
        cut = rec.burn_in if burn_in is None else burn_in
        s = rec.series(observable)[cut:]
        if len(s):
            chains.append(s)
    n_total = sum(len(s) for s in chains)
    if n_total <= 4 * max_lag:
        raise ValueError(f"need more than {4 * max_lag} samples, got {n_total}")
    mean = np.mean(np.concatenate(chains))
    var = np.mean([np.mean((s - mean) ** 2) for s in chains])
    gammas = []
    for lag in range(max_lag + 1):
        num, cnt = 0.0, 0
        for s in chains:
            if len(s) > lag:
                d = s - mean
                num += float(np.sum(d[: len(s) - lag] * d[lag:]))
                cnt += len(s) - lag
        gammas.append((lag, num / cnt / var if var > 0 else 0.0))
    tau = 1.0
    for lag, g in gammas[1:]:
        if g < 0:
            break
        tau += 2.0 * g
    return gammas, tau
