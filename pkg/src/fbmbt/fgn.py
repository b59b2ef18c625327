"""Exact-covariance Gaussian samplers for fractional Brownian motion.

Covariance kernels
------------------
Two-sided fBm with Hurst parameter ``H`` has covariance

    C_H(t, s) = 0.5 * (|s|^{2H} + |t|^{2H} - |t - s|^{2H}),   s, t in R,

and its increments over any uniform grid (positive and negative times
alike) form stationary fractional Gaussian noise with autocovariance
``spacing^{2H} * rho(q)`` where

    rho(q) = 0.5 * (|q+1|^{2H} + |q-1|^{2H} - 2|q|^{2H}).

Sampling
--------
Primary method: Davies-Harte circulant embedding of the increment
sequence across the whole two-sided grid, exact whenever the embedding
spectrum is nonnegative (always the case for fGn in practice).  Fallback
for a defective spectrum: Cholesky of the exact Toeplitz covariance,
restricted to desk-scale grids.

References: Davies & Harte (1987); Dieker, "Simulation of fractional
Brownian motion" (2004).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .streams import SeedRecord, as_seed_record

__all__ = [
    "CRITICAL_HURST",
    "HurstParameter",
    "FbmPath",
    "BmPath",
    "EmbeddingError",
    "ExtentError",
    "fbm_covariance",
    "increment_autocovariance",
    "sample_fbm_two_sided",
    "sample_bm",
    "dyadic_step",
    "uniform_step",
    "coarsen",
    "write_path",
    "read_path",
    "write_path_csv",
]

CRITICAL_HURST = 1.0 / 6.0
_CRITICAL_TOL = 1e-12

# Grid size cap for the O(M^3) Cholesky fallback.
_CHOLESKY_MAX = 4096

FORMAT_VERSION = 1


class EmbeddingError(RuntimeError):
    """Circulant spectrum defective and the exact fallback is infeasible."""


class ExtentError(ValueError):
    """A requested time lies outside the sampled grid."""


@dataclass(frozen=True)
class HurstParameter:
    """Hurst exponent in (0, 1) with its change-of-variable regime tag."""

    value: float

    def __post_init__(self):
        v = float(self.value)
        if not (0.0 < v < 1.0):
            raise ValueError(f"Hurst parameter must lie in (0, 1), got {v}")
        object.__setattr__(self, "value", v)

    @property
    def regime(self) -> str:
        """'subcritical' below 1/6, 'critical' at 1/6, 'supercritical' above."""
        if abs(self.value - CRITICAL_HURST) <= _CRITICAL_TOL:
            return "critical"
        return "subcritical" if self.value < CRITICAL_HURST else "supercritical"

    def __float__(self) -> float:
        return self.value


def _hvalue(hurst: "float | HurstParameter") -> float:
    if isinstance(hurst, HurstParameter):
        return hurst.value
    return HurstParameter(float(hurst)).value


def dyadic_step(level: int) -> float:
    """Spatial grid step 2^{-level/2}.

    Single source of that float so grid arithmetic matches bit-for-bit
    across modules (for odd levels the value is irrational and rounds).
    """
    return float(2.0 ** (-level / 2.0))


def uniform_step(level: int) -> float:
    """Temporal grid step 2^{-level}."""
    return float(2.0 ** (-float(level)))


def fbm_covariance(t, s, hurst) -> "float | np.ndarray":
    """E[X_t X_s] for two-sided fBm; symmetric in (t, s), broadcasts."""
    h2 = 2.0 * _hvalue(hurst)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    out = 0.5 * (np.abs(s) ** h2 + np.abs(t) ** h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def increment_autocovariance(q, hurst) -> "float | np.ndarray":
    """Autocovariance rho(q) of unit-spacing fGn; rho(0) = 1, even in q."""
    h2 = 2.0 * _hvalue(hurst)
    q = np.asarray(q, dtype=float)
    out = 0.5 * (np.abs(q + 1.0) ** h2 + np.abs(q - 1.0) ** h2 - 2.0 * np.abs(q) ** h2)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Sampling machinery
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _circulant_spectrum(n_inc: int, hvalue: float) -> np.ndarray:
    """Eigenvalues of the 2n circulant embedding the fGn Toeplitz covariance."""
    q = np.arange(n_inc + 1)
    gamma = increment_autocovariance(q, hvalue)
    row = np.concatenate([gamma, gamma[-2:0:-1]])  # length 2n, symmetric
    eig = np.fft.rfft(row).real
    return eig


def _sample_fgn_embedding(rng: np.random.Generator, n_inc: int, hvalue: float,
                          size: int = 1) -> np.ndarray:
    """``size`` rows of standardized fGn of length ``n_inc`` (exact law).

    Raises EmbeddingError when the spectrum is negative beyond tolerance.
    """
    eig = _circulant_spectrum(n_inc, hvalue)
    neg = eig.min()
    if neg < -1e-8 * eig.max():
        raise EmbeddingError(
            f"circulant spectrum has eigenvalue {neg:.3e} (min) for "
            f"n={n_inc}, H={hvalue}; exact embedding unavailable"
        )
    lam = np.clip(eig, 0.0, None)  # clip roundoff-level negatives
    two_n = 2 * n_inc
    # Hermitian half-spectrum draw: W_0, W_n real; interior complex.
    re = rng.standard_normal((size, n_inc + 1))
    im = rng.standard_normal((size, n_inc - 1))
    w = np.empty((size, n_inc + 1), dtype=complex)
    w[:, 0] = re[:, 0] * np.sqrt(lam[0])
    w[:, n_inc] = re[:, n_inc] * np.sqrt(lam[n_inc])
    interior = np.sqrt(lam[1:n_inc] / 2.0)
    w[:, 1:n_inc] = (re[:, 1:n_inc] + 1j * im) * interior
    fgn = np.fft.irfft(w, n=two_n, axis=1)[:, :n_inc]
    fgn *= np.sqrt(two_n)
    return fgn


def _sample_fgn_cholesky(rng: np.random.Generator, n_inc: int, hvalue: float,
                         size: int = 1) -> np.ndarray:
    """Exact O(n^2)/O(n^3) fallback via Cholesky of the Toeplitz covariance."""
    if n_inc > _CHOLESKY_MAX:
        raise EmbeddingError(
            f"Cholesky fallback capped at {_CHOLESKY_MAX} increments, "
            f"requested {n_inc}"
        )
    q = np.abs(np.arange(n_inc)[:, None] - np.arange(n_inc)[None, :])
    cov = increment_autocovariance(q, hvalue)
    chol = np.linalg.cholesky(cov)
    z = rng.standard_normal((size, n_inc))
    return z @ chol.T


def _sample_fgn(rng: np.random.Generator, n_inc: int, hvalue: float,
                size: int = 1, method: str = "auto") -> tuple[np.ndarray, str]:
    if method not in ("auto", "embedding", "cholesky"):
        raise ValueError(f"unknown sampling method {method!r}")
    if method == "cholesky":
        return _sample_fgn_cholesky(rng, n_inc, hvalue, size), "cholesky"
    try:
        return _sample_fgn_embedding(rng, n_inc, hvalue, size), "circulant"
    except EmbeddingError:
        if method == "embedding":
            raise
        warnings.warn(
            "circulant embedding spectrum defective; falling back to Cholesky",
            RuntimeWarning,
            stacklevel=3,
        )
        return _sample_fgn_cholesky(rng, n_inc, hvalue, size), "cholesky"


# ---------------------------------------------------------------------------
# Path containers
# ---------------------------------------------------------------------------

def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FbmPath:
    """Two-sided fBm sample on the uniform grid (i - M) * spacing, i = 0..2M.

    values[half_extent] is time zero, pinned to 0.0 exactly.
    """

    hurst: HurstParameter
    spacing: float
    half_extent: int
    values: np.ndarray
    seed_record: SeedRecord
    method: str = "circulant"

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        if len(self.values) != 2 * self.half_extent + 1:
            raise ValueError("values length must be 2*half_extent + 1")
        if self.values[self.half_extent] != 0.0:
            raise ValueError("value at time zero must be exactly 0")

    @property
    def extent(self) -> float:
        """Largest |t| on the grid."""
        return self.half_extent * self.spacing

    def time_grid(self) -> np.ndarray:
        return (np.arange(2 * self.half_extent + 1) - self.half_extent) * self.spacing

    def index_at_time(self, t: float) -> int:
        """Nearest grid index to t; ExtentError when |t| exceeds the grid."""
        idx = int(round(t / self.spacing)) + self.half_extent
        if idx < 0 or idx >= len(self.values):
            raise ExtentError(
                f"time {t} outside grid extent {self.extent} "
                f"(need half_extent >= {abs(int(round(t / self.spacing)))})"
            )
        return idx

    def value_at_time(self, t: float) -> float:
        return float(self.values[self.index_at_time(t)])

    def dyadic_stride(self, level: int) -> int:
        """Integer stride m with m * spacing == 2^{-level/2}, else error."""
        ratio = dyadic_step(level) / self.spacing
        m = int(round(ratio))
        if m < 1 or ratio != float(m):
            raise ValueError(
                f"path spacing {self.spacing} does not subdivide the level-"
                f"{level} dyadic step {dyadic_step(level)}"
            )
        return m


@dataclass(frozen=True)
class BmPath:
    """One-sided standard Brownian path on 0, spacing, 2*spacing, ..."""

    spacing: float
    horizon: float
    values: np.ndarray
    seed_record: SeedRecord

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        if self.values[0] != 0.0:
            raise ValueError("Brownian path must start at 0")

    def index_at_time(self, t: float) -> int:
        x = t / self.spacing
        idx = int(round(x))
        if abs(x - idx) > 1e-9:
            idx = int(np.floor(x))
        if idx < 0 or idx >= len(self.values):
            raise ExtentError(f"time {t} beyond horizon {self.horizon}")
        return idx

    def value_at_time(self, t: float) -> float:
        return float(self.values[self.index_at_time(t)])


def sample_fbm_two_sided(hurst, spacing: float, half_extent: int,
                         seed: "int | SeedRecord", method: str = "auto") -> FbmPath:
    """Exact two-sided fBm path; deterministic given the seed record."""
    h = HurstParameter(_hvalue(hurst))
    if not spacing > 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    half_extent = int(half_extent)
    if half_extent < 1:
        raise ValueError(f"half_extent must be >= 1, got {half_extent}")
    record = as_seed_record(seed)
    rng = record.generator()
    n_inc = 2 * half_extent
    fgn, used = _sample_fgn(rng, n_inc, h.value, size=1, method=method)
    inc = fgn[0] * spacing**h.value
    cs = np.concatenate([[0.0], np.cumsum(inc)])
    values = cs - cs[half_extent]
    values[half_extent] = 0.0
    return FbmPath(hurst=h, spacing=float(spacing), half_extent=half_extent,
                   values=values, seed_record=record, method=used)


def sample_bm(horizon: float, spacing: float, seed: "int | SeedRecord") -> BmPath:
    """Standard Brownian path: cumulative i.i.d. N(0, spacing) increments."""
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if not spacing > 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    record = as_seed_record(seed)
    rng = record.generator()
    n = int(np.ceil(horizon / spacing))
    inc = rng.standard_normal(n) * np.sqrt(spacing)
    values = np.concatenate([[0.0], np.cumsum(inc)])
    return BmPath(spacing=float(spacing), horizon=n * float(spacing),
                  values=values, seed_record=record)


def extend_bm(path: BmPath, new_horizon: float) -> BmPath:
    """Append fresh increments (child stream) so the path reaches new_horizon.

    The existing prefix is preserved bit-for-bit, so extension commutes with
    any causal scan of the path.
    """
    if new_horizon <= path.horizon:
        return path
    extra = int(np.ceil((new_horizon - path.horizon) / path.spacing))
    child = path.seed_record.derive("extend", len(path.values))
    inc = child.generator().standard_normal(extra) * np.sqrt(path.spacing)
    tail = path.values[-1] + np.cumsum(inc)
    values = np.concatenate([path.values, tail])
    return BmPath(spacing=path.spacing,
                  horizon=(len(values) - 1) * path.spacing,
                  values=values, seed_record=path.seed_record)


def coarsen(path: FbmPath, factor: int) -> FbmPath:
    """Restriction of the same realization to a grid coarser by ``factor``."""
    factor = int(factor)
    if factor < 1 or path.half_extent % factor != 0:
        raise ValueError(f"factor {factor} must divide half_extent {path.half_extent}")
    values = path.values[::factor].copy()
    return FbmPath(hurst=path.hurst, spacing=path.spacing * factor,
                   half_extent=path.half_extent // factor, values=values,
                   seed_record=path.seed_record, method=path.method)


# ---------------------------------------------------------------------------
# Serialization: one-line JSON header + little-endian float64 payload
# ---------------------------------------------------------------------------

def write_path(path_obj: "FbmPath | BmPath", file: "str | Path") -> None:
    if isinstance(path_obj, FbmPath):
        header = {
            "format_version": FORMAT_VERSION,
            "kind": "fbm",
            "hurst": path_obj.hurst.value,
            "spacing": path_obj.spacing,
            "half_extent": path_obj.half_extent,
            "method": path_obj.method,
            "seed_record": path_obj.seed_record.to_dict(),
        }
    elif isinstance(path_obj, BmPath):
        header = {
            "format_version": FORMAT_VERSION,
            "kind": "bm",
            "spacing": path_obj.spacing,
            "horizon": path_obj.horizon,
            "seed_record": path_obj.seed_record.to_dict(),
        }
    else:
        raise TypeError(f"cannot serialize {type(path_obj).__name__}")
    payload = np.asarray(path_obj.values, dtype="<f8").tobytes()
    with open(file, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)


def read_path(file: "str | Path") -> "FbmPath | BmPath":
    with open(file, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    header = json.loads(header_line.decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported format_version {header.get('format_version')}")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    record = SeedRecord.from_dict(header["seed_record"])
    if header["kind"] == "fbm":
        return FbmPath(hurst=HurstParameter(header["hurst"]),
                       spacing=header["spacing"],
                       half_extent=header["half_extent"],
                       values=values, seed_record=record,
                       method=header.get("method", "circulant"))
    if header["kind"] == "bm":
        return BmPath(spacing=header["spacing"], horizon=header["horizon"],
                      values=values, seed_record=record)
    raise ValueError(f"unknown path kind {header['kind']!r}")


def write_path_csv(path_obj: "FbmPath | BmPath", file: "str | Path") -> None:
    """Interop format: time,value rows."""
    if isinstance(path_obj, FbmPath):
        times = path_obj.time_grid()
    else:
        times = np.arange(len(path_obj.values)) * path_obj.spacing
    with open(file, "w", encoding="utf-8") as fh:
        fh.write("time,value\n")
        for t, v in zip(times, path_obj.values):
            fh.write(f"{float(t)!r},{float(v)!r}\n")
