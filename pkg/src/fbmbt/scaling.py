"""Background scaling laws for plain fBm on deterministic dyadic grids.

Quadratic variation: 2^{n(2H-1)} * sum (increment)^2 -> t almost surely.
Cubic variation (H < 1/2): 2^{n(3H-1/2)} * sum (increment)^3 converges in
law to a centered normal whose variance has no closed form here; it is
estimated from replicas at the largest level and reused as the KS
reference for every level.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fgn import FbmPath, HurstParameter, sample_fbm_two_sided, uniform_step
from .skeleton import SpacingError
from .stats import ks_one_sample_normal
from .streams import SeedRecord

__all__ = ["ScalingReport", "power_variation", "check_quadratic", "check_cubic"]

SCALING_SCHEMA_VERSION = 1


@dataclass
class ScalingReport:
    hurst: float
    power: int
    t: float
    levels: list
    replicas: int
    per_level: list
    estimated_sigma2: "float | None"
    seed: int
    wall_time: float = 0.0
    schema_version: int = SCALING_SCHEMA_VERSION

    def body_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "hurst": self.hurst,
            "power": self.power,
            "t": self.t,
            "levels": self.levels,
            "replicas": self.replicas,
            "per_level": self.per_level,
            "estimated_sigma2": self.estimated_sigma2,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps({"body": self.body_dict(), "wall_time": self.wall_time},
                          sort_keys=True, indent=2)

    def save(self, file: "str | Path") -> None:
        Path(file).write_text(self.to_json() + "\n", encoding="utf-8")

    def per_level_csv(self) -> str:
        keys = sorted({k for row in self.per_level for k in row})
        lines = ["level," + ",".join(keys)]
        for lev, row in zip(self.levels, self.per_level):
            lines.append(str(lev) + "," + ",".join(repr(row.get(k, "")) for k in keys))
        return "\n".join(lines) + "\n"


def power_variation(path: FbmPath, power: int, level: int, t: float) -> float:
    """Unnormalized sum of increment powers over [0, t] at spacing 2^{-level}."""
    if power < 1:
        raise ValueError("power must be a positive integer")
    step = uniform_step(level)
    if path.spacing != step:
        raise SpacingError(
            f"path spacing {path.spacing} does not equal 2^-{level} = {step}"
        )
    k = int(np.floor(2.0**level * t + 1e-9))
    if k * step > path.extent:
        raise ValueError(f"horizon {t} beyond path extent {path.extent}")
    center = path.half_extent
    seg = path.values[center: center + k + 1]
    inc = np.diff(seg)
    return float(np.sum(inc**power))


def _levels_tuple(levels) -> list:
    out = [int(n) for n in levels]
    if sorted(out) != out or len(set(out)) != len(out):
        raise ValueError("levels must be strictly increasing")
    return out


def check_quadratic(hurst, t: float, levels, replicas: int, seed: int) -> ScalingReport:
    """Median deviation of the normalized quadratic variation from t, per level."""
    h = HurstParameter(float(hurst))
    levels = _levels_tuple(levels)
    base = SeedRecord(int(seed))
    start = time.perf_counter()
    per_level = []
    for n in levels:
        norm = 2.0 ** (n * (2.0 * h.value - 1.0))
        devs = np.empty(replicas)
        raw = np.empty(replicas)
        for rep in range(replicas):
            path = sample_fbm_two_sided(
                h, uniform_step(n), int(np.ceil(2.0**n * t)),
                base.derive("scaling", 2, n, rep))
            pv = power_variation(path, 2, n, t)
            raw[rep] = pv
            devs[rep] = abs(norm * pv - t)
        per_level.append({
            "median_abs_error": float(np.median(devs)),
            "mean_normalized": float(np.mean(norm * raw)),
            "mean_unnormalized": float(np.mean(raw)),
        })
    return ScalingReport(hurst=h.value, power=2, t=t, levels=levels,
                         replicas=replicas, per_level=per_level,
                         estimated_sigma2=None, seed=int(seed),
                         wall_time=time.perf_counter() - start)


def check_cubic(hurst, t: float, levels, replicas: int, seed: int) -> ScalingReport:
    """Normality of the normalized cubic variation, with estimated variance."""
    h = HurstParameter(float(hurst))
    if not h.value < 0.5:
        raise ValueError("cubic-variation normality requires H < 1/2")
    levels = _levels_tuple(levels)
    base = SeedRecord(int(seed))
    start = time.perf_counter()
    stats_per_level = []
    samples_per_level = []
    for n in levels:
        norm = 2.0 ** (n * (3.0 * h.value - 0.5))
        vals = np.empty(replicas)
        for rep in range(replicas):
            path = sample_fbm_two_sided(
                h, uniform_step(n), int(np.ceil(2.0**n * t)),
                base.derive("scaling", 3, n, rep))
            vals[rep] = norm * power_variation(path, 3, n, t)
        samples_per_level.append(vals)
        stats_per_level.append({"mean": float(vals.mean()),
                                "variance": float(vals.var(ddof=1))})
    # Reference variance from the largest level; KS against N(0, sigma2 * t).
    sigma2 = stats_per_level[-1]["variance"] / t
    std_ref = float(np.sqrt(sigma2 * t))
    per_level = []
    for row, vals in zip(stats_per_level, samples_per_level):
        ks = ks_one_sample_normal(vals, mean=0.0, std=std_ref)
        row = dict(row)
        row["ks_distance"] = ks.statistic
        row["ks_p"] = ks.p_value
        per_level.append(row)
    return ScalingReport(hurst=h.value, power=3, t=t, levels=levels,
                         replicas=replicas, per_level=per_level,
                         estimated_sigma2=float(sigma2), seed=int(seed),
                         wall_time=time.perf_counter() - start)
