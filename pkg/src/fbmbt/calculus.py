"""Change-of-variable verification for the time-changed process Z = X(Y).

Three regimes of the Hurst parameter are checked against Monte Carlo
evidence:

* supercritical (H > 1/6): the symmetric-sum residual
  f(Z_t) - f(0) - V_n(f', t) tightens to zero as the level grows;
* critical (H = 1/6): f(Z_t) - f(0) + (kappa3/12) * int_0^{Y_t} f'''(X) dW
  matches V_n(f', t) in law (two-sample KS across independent pools);
* subcritical (H < 1/6): the variance of V_n^{(3)}(1, t) grows like
  2^{n(1-6H)/2}, so the symmetric sums cannot converge.

The module also provides the symmetric two-point expansion

    f(b) - f(a) = 1/2 (f'(a)+f'(b))(b-a) - 1/24 (f'''(a)+f'''(b))(b-a)^3
                  + sum_{r=3}^{7} c_r (f^{(2r-1)}(a)+f^{(2r-1)}(b))(b-a)^{2r-1}
                  + O(|b-a|^14),

whose coefficients are fixed by exactness on odd monomials up to degree 13
and solved in exact rational arithmetic.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np

from .fgn import (BmPath, ExtentError, FbmPath, HurstParameter, dyadic_step,
                  extend_bm, sample_bm, sample_fbm_two_sided)
from .skeleton import SkeletalStructure, build_skeleton
from .stats import SampleSummary, fit_log2_slope, ks_two_sample
from .streams import SeedRecord, as_seed_record
from .variations import SmoothFunction, symmetric_variation_direct

__all__ = [
    "KAPPA3",
    "JointSample",
    "TaylorScheme",
    "VerifyConfig",
    "VerificationReport",
    "evaluate_z",
    "taylor_coefficients",
    "ito_residual",
    "correction_integral",
    "sample_joint",
    "verify_branch",
    "evaluate_gate",
]

# Correction-integral constant for the critical regime; configurable at the
# call sites, pinned here to the published three-decimal value.
KAPPA3 = 2.322

BRANCHES = ("supercritical", "critical", "subcritical")

REPORT_SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Joint sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JointSample:
    """One realization of (X, Y, W) with the skeleton of Y at one level.

    x, y, w come from disjoint substreams of the master seed, so the three
    processes are independent; the skeleton always derives from y.
    """

    x: FbmPath
    y: BmPath
    w: FbmPath
    skeleton: SkeletalStructure
    level: int
    seed_record: SeedRecord

    def __post_init__(self):
        if abs(self.w.hurst.value - 0.5) > 1e-12:
            raise ValueError("w must be a two-sided Brownian motion (H = 1/2)")
        if self.skeleton.level != self.level:
            raise ValueError("skeleton level disagrees with sample level")


def _horizon_for(level: int, t: float) -> float:
    # Mean time to complete 2^n t steps is ~t; fluctuation is O(2^{-n/2}).
    return t + 6.0 * math.sqrt((2.0 / 3.0) * max(t, 1.0) * 2.0**-level) + 64.0 * 2.0**-level


def _pow2_at_least(x: float) -> int:
    return 1 << max(0, int(math.ceil(math.log2(max(x, 1.0)))))


def sample_joint(hurst, level: int, t: float, seed: "int | SeedRecord", *,
                 mode: str = "bridge", x_refine: int = 64,
                 y_spacing: "float | None" = None) -> JointSample:
    """Draw (X, Y, W, skeleton) adequate for horizon t at the given level.

    The spatial grids adapt to the realized walk range and |Y_t| (rounded up
    to a power of two so embedding spectra are shared across replicas).
    """
    record = as_seed_record(seed)
    h = HurstParameter(float(hurst) if not isinstance(hurst, HurstParameter) else hurst.value)
    steps_needed = int(math.floor(2.0**level * t + 1e-9))
    dt = y_spacing if y_spacing is not None else 2.0 ** (-(level + 2))
    y = sample_bm(_horizon_for(level, t), dt, record.derive("bm"))
    sk = build_skeleton(y, level, mode=mode, seed=record.derive("bridge"))
    while sk.n_steps < steps_needed:
        y = extend_bm(y, y.horizon * 1.5)
        sk = build_skeleton(y, level, mode=mode, seed=record.derive("bridge"))
    a = dyadic_step(level)
    spacing = a / x_refine
    y_t = y.value_at_time(t)
    walk_reach = int(np.max(np.abs(sk.walk[: steps_needed + 1]))) + 1 if steps_needed else 1
    need = max(walk_reach * a, abs(y_t) + 2 * spacing, 4 * spacing)
    half_extent = _pow2_at_least(need / spacing)
    x = sample_fbm_two_sided(h, spacing, half_extent, record.derive("fbm"))
    w = sample_fbm_two_sided(0.5, spacing, half_extent, record.derive("wiener"))
    return JointSample(x=x, y=y, w=w, skeleton=sk, level=level, seed_record=record)


def evaluate_z(x: FbmPath, y_value: float) -> float:
    """Z at a Brownian position: X snapped to the nearest grid point.

    Snapping (rather than interpolating) keeps the evaluation a true sample
    of the rough path; the value error is O(h^H sqrt(2 ln(1/h))) for grid
    step h.
    """
    return x.value_at_time(y_value)


# ---------------------------------------------------------------------------
# Symmetric two-point expansion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TaylorScheme:
    """Coefficients gamma_r of the symmetric expansion, r = 1..7.

    gamma_1 = 1/2 and gamma_2 = -1/24 are pinned; c_3..c_7 come from the
    5x5 exact-rational solve.  remainder_order is the first neglected power.
    """

    gammas: tuple
    remainder_order: int = 14

    @property
    def c(self) -> tuple:
        """The free coefficients c_3..c_7."""
        return self.gammas[2:]

    def gamma_floats(self) -> np.ndarray:
        return np.array([float(g) for g in self.gammas])

    def expand(self, f: SmoothFunction, a: float, b: float) -> float:
        """Scheme value approximating f(b) - f(a)."""
        d = b - a
        total = 0.0
        p = d
        for r, g in enumerate(self.gammas, start=1):
            k = 2 * r - 1
            fk = f.derivative(k)
            total += float(g) * (fk(a) + fk(b)) * p
            p *= d * d
        return total


@lru_cache(maxsize=1)
def taylor_coefficients() -> TaylorScheme:
    """Solve for c_3..c_7 by exactness on x^5, x^7, ..., x^13 at (a,b)=(0,1)."""
    g1 = Fraction(1, 2)
    g2 = Fraction(-1, 24)

    def deriv_coeffs(k_power: int, order: int) -> Fraction:
        # d^order/dx^order x^k evaluated as coefficient function at x
        if order > k_power:
            return Fraction(0)
        c = Fraction(1)
        for i in range(order):
            c *= k_power - i
        return c

    def scheme_on_monomial(k: int, gammas: list) -> Fraction:
        # scheme applied to f(x) = x^k at (a, b) = (0, 1)
        total = Fraction(0)
        for r, g in enumerate(gammas, start=1):
            m = 2 * r - 1
            c = deriv_coeffs(k, m)
            f_at_0 = c if m == k else Fraction(0)
            f_at_1 = c
            total += g * (f_at_0 + f_at_1)
        return total

    unknown_rows = []
    rhs = []
    for k in (5, 7, 9, 11, 13):
        base = scheme_on_monomial(k, [g1, g2])
        row = []
        for r in range(3, 8):
            m = 2 * r - 1
            c = deriv_coeffs(k, m)
            f_at_0 = c if m == k else Fraction(0)
            row.append(f_at_0 + c if m <= k else Fraction(0))
        unknown_rows.append(row)
        rhs.append(Fraction(1) - base)

    # Back-substitution: the system is lower-triangular in (c_3, ..., c_7).
    cs = [Fraction(0)] * 5
    for i in range(5):
        acc = rhs[i]
        for jj in range(i):
            acc -= unknown_rows[i][jj] * cs[jj]
        diag = unknown_rows[i][i]
        if diag == 0:
            raise AssertionError("degenerate exactness system")
        cs[i] = acc / diag
    return TaylorScheme(gammas=(g1, g2, *cs))


# ---------------------------------------------------------------------------
# Residual and correction integral
# ---------------------------------------------------------------------------

def _skeletal_z_values(js: JointSample, t: float) -> np.ndarray:
    steps = int(math.floor(2.0**js.level * t + 1e-9))
    if js.skeleton.n_steps < steps:
        raise ExtentError(
            f"skeleton covers {js.skeleton.n_steps} steps, need {steps}"
        )
    stride = js.x.dyadic_stride(js.level)
    idx = js.skeleton.walk[: steps + 1] * stride + js.x.half_extent
    if idx.min() < 0 or idx.max() >= len(js.x.values):
        raise ExtentError("spatial grid does not cover the walk range")
    return js.x.values[idx]


def ito_residual(f: SmoothFunction, js: JointSample, t: float) -> float:
    """f(Z_t) - f(0) - V_n(f', t), the supercritical-formula defect."""
    z = _skeletal_z_values(js, t)
    # fewer than one full step: the variation is an empty sum
    v = symmetric_variation_direct(_as_weight(f, 1), z, 1) if len(z) > 1 else 0.0
    y_t = js.y.value_at_time(t)
    return float(f(evaluate_z(js.x, y_t)) - f(0.0) - v)


def _as_weight(f: SmoothFunction, order: int) -> SmoothFunction:
    """Shift the derivative family so weight(x) = f^{(order)}(x)."""
    return SmoothFunction(descriptor=f"{f.descriptor}^({order})",
                          derivatives=f.derivatives[order:])


def _correction_sum(f3, x_values: np.ndarray, w_values: np.ndarray,
                    center: int, count: int, sign: int, kappa3: float) -> float:
    """(kappa3/12) * forward sum of f'''(X) dW over one branch of the grid."""
    if count <= 0:
        return 0.0
    j = sign * np.arange(count) + center
    j1 = sign * np.arange(1, count + 1) + center
    terms = f3(x_values[j]) * (w_values[j1] - w_values[j])
    return (kappa3 / 12.0) * math.fsum(terms.tolist())


def correction_integral(f: SmoothFunction, js: JointSample, t: float,
                        kappa3: float = KAPPA3) -> float:
    """Critical-regime bracket term (kappa3/12) int_0^{Y_t} f'''(X_s) dW_s.

    Grid sum in the Wiener-Ito (forward) sense along the x/w grid from 0 to
    Y_t; for Y_t < 0 the sum runs over the negative side of both two-sided
    processes.
    """
    if js.x.hurst.regime != "critical":
        raise ValueError(
            f"correction integral is defined at H = 1/6, sample has H = {js.x.hurst.value}"
        )
    if js.x.spacing != js.w.spacing or js.x.half_extent != js.w.half_extent:
        raise ValueError("x and w must share their grid")
    y_t = js.y.value_at_time(t)
    h = js.x.spacing
    count = int(math.floor(abs(y_t) / h + 1e-12))
    if count > js.x.half_extent:
        raise ExtentError(
            f"grid extent {js.x.extent} cannot reach Y_t = {y_t}"
        )
    sign = 1 if y_t >= 0 else -1
    return _correction_sum(f.derivative(3), js.x.values, js.w.values,
                           js.x.half_extent, count, sign, kappa3)


# ---------------------------------------------------------------------------
# Branch verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerifyConfig:
    """Monte Carlo layout for one branch verification."""

    hurst: float
    f: SmoothFunction
    t: float
    levels: tuple
    replicas: int
    seed: int
    workers: int = 1
    x_refine: int = 64
    lhs_spacing: float = 2.0**-13
    kappa3: float = KAPPA3

    def __post_init__(self):
        HurstParameter(self.hurst)
        if len(self.levels) < 1:
            raise ValueError("need at least one level")
        if self.replicas < 2:
            raise ValueError("need at least two replicas")


@dataclass
class VerificationReport:
    """Per-level Monte Carlo evidence for one branch of the formula check."""

    branch: str
    hurst: float
    f_descriptor: str
    t: float
    levels: list
    replicas: int
    per_level: list
    extra: dict
    seed: int
    wall_time: float = 0.0
    schema_version: int = REPORT_SCHEMA_VERSION

    def body_dict(self) -> dict:
        """Deterministic payload: everything except timing."""
        return {
            "schema_version": self.schema_version,
            "branch": self.branch,
            "hurst": self.hurst,
            "f": self.f_descriptor,
            "t": self.t,
            "levels": self.levels,
            "replicas": self.replicas,
            "per_level": self.per_level,
            "extra": self.extra,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        doc = {"body": self.body_dict(), "wall_time": self.wall_time}
        return json.dumps(doc, sort_keys=True, indent=2)

    def save(self, file: "str | Path") -> None:
        Path(file).write_text(self.to_json() + "\n", encoding="utf-8")

    def per_level_csv(self) -> str:
        keys = sorted({k for row in self.per_level for k in row})
        lines = ["level," + ",".join(keys)]
        for lev, row in zip(self.levels, self.per_level):
            lines.append(str(lev) + "," + ",".join(repr(row.get(k, "")) for k in keys))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "VerificationReport":
        doc = json.loads(text)
        body = doc["body"]
        return cls(branch=body["branch"], hurst=body["hurst"],
                   f_descriptor=body["f"], t=body["t"], levels=body["levels"],
                   replicas=body["replicas"], per_level=body["per_level"],
                   extra=body["extra"], seed=body["seed"],
                   wall_time=doc.get("wall_time", 0.0),
                   schema_version=body["schema_version"])


def _map_replicas(fn, reps: int, workers: int) -> list:
    if workers <= 1:
        return [fn(r) for r in range(reps)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(reps)))


def _branch_supercritical_level(cfg: VerifyConfig, level: int) -> dict:
    base = SeedRecord(cfg.seed)

    def one(rep: int) -> tuple:
        js = sample_joint(cfg.hurst, level, cfg.t,
                          base.derive("supercritical", level, rep),
                          x_refine=cfg.x_refine)
        z = _skeletal_z_values(js, cfg.t)
        v = symmetric_variation_direct(_as_weight(cfg.f, 1), z, 1)
        z_t = evaluate_z(js.x, js.y.value_at_time(cfg.t))
        full = float(cfg.f(z_t) - cfg.f(0.0) - v)
        at_end = float(cfg.f(z[-1]) - cfg.f(0.0) - v)
        return full, at_end

    pairs = _map_replicas(one, cfg.replicas, cfg.workers)
    res = np.abs(np.array([p[0] for p in pairs]))
    res_end = np.abs(np.array([p[1] for p in pairs]))
    s = SampleSummary.from_samples(res)
    return {
        "mean_abs": s.mean,
        "p90": s.p90,
        "stderr": s.stderr,
        "mean_abs_at_skeleton_end": float(res_end.mean()),
    }


def _branch_critical_level(cfg: VerifyConfig, level: int) -> dict:
    base = SeedRecord(cfg.seed)
    f3 = cfg.f.derivative(3)
    f1 = cfg.f.derivative(1)
    h = cfg.lhs_spacing

    def lhs(rep: int) -> float:
        rec = base.derive("critical-lhs", level, rep)
        y_t = math.sqrt(cfg.t) * float(rec.derive("bm").generator().standard_normal())
        count = int(math.floor(abs(y_t) / h + 1e-12))
        half = _pow2_at_least(max(abs(y_t) + 2 * h, 4 * h) / h)
        x = sample_fbm_two_sided(cfg.hurst, h, half, rec.derive("fbm"))
        w = sample_fbm_two_sided(0.5, h, half, rec.derive("wiener"))
        sign = 1 if y_t >= 0 else -1
        corr = _correction_sum(f3, x.values, w.values, half, count, sign, cfg.kappa3)
        return float(cfg.f(evaluate_z(x, y_t)) - cfg.f(0.0) + corr)

    def rhs(rep: int) -> float:
        rec = base.derive("critical-rhs", level, rep)
        steps = int(math.floor(2.0**level * cfg.t + 1e-9))
        draw = int(rec.derive("walk").generator().binomial(steps, 0.5))
        jstar = 2 * draw - steps
        a = dyadic_step(level)
        half = _pow2_at_least(abs(jstar) + 2)
        x = sample_fbm_two_sided(cfg.hurst, a, half, rec.derive("fbm"))
        if jstar == 0:
            return 0.0
        j = np.arange(0, jstar) if jstar > 0 else np.arange(jstar, 0)
        x0 = x.values[j + half]
        x1 = x.values[j + 1 + half]
        w01 = 0.5 * (f1(x0) + f1(x1))
        sgn = 1.0 if jstar > 0 else -1.0
        return sgn * math.fsum((w01 * (x1 - x0)).tolist())

    lhs_pool = np.array(_map_replicas(lhs, cfg.replicas, cfg.workers))
    rhs_pool = np.array(_map_replicas(rhs, cfg.replicas, cfg.workers))
    ks = ks_two_sample(lhs_pool, rhs_pool)
    return {"ks_distance": ks.statistic, "ks_p": ks.p_value,
            "lhs_std": float(lhs_pool.std(ddof=1)),
            "rhs_std": float(rhs_pool.std(ddof=1))}


def _branch_subcritical_level(cfg: VerifyConfig, level: int) -> dict:
    base = SeedRecord(cfg.seed)

    def one(rep: int) -> float:
        rec = base.derive("subcritical", level, rep)
        steps = int(math.floor(2.0**level * cfg.t + 1e-9))
        draw = int(rec.derive("walk").generator().binomial(steps, 0.5))
        jstar = 2 * draw - steps
        if jstar == 0:
            return 0.0
        a = dyadic_step(level)
        half = _pow2_at_least(abs(jstar) + 2)
        x = sample_fbm_two_sided(cfg.hurst, a, half, rec.derive("fbm"))
        j = np.arange(0, jstar) if jstar > 0 else np.arange(jstar, 0)
        d = x.values[j + 1 + half] - x.values[j + half]
        sgn = 1.0 if jstar > 0 else -1.0
        return sgn * math.fsum((d * d * d).tolist())

    vals = np.array(_map_replicas(one, cfg.replicas, cfg.workers))
    s = SampleSummary.from_samples(vals)
    return {"mean": s.mean, "variance": s.variance,
            "var_stderr": float(s.variance * math.sqrt(2.0 / (len(vals) - 1)))}


def verify_branch(branch: str, config: VerifyConfig) -> VerificationReport:
    """Run the Monte Carlo check for one regime of the change-of-variable formula."""
    if branch not in BRANCHES:
        raise ValueError(f"branch must be one of {BRANCHES}, got {branch!r}")
    regime = HurstParameter(config.hurst).regime
    if regime != branch:
        raise ValueError(
            f"branch {branch!r} requires a {branch} Hurst parameter; "
            f"H = {config.hurst} is {regime}"
        )
    runners = {
        "supercritical": _branch_supercritical_level,
        "critical": _branch_critical_level,
        "subcritical": _branch_subcritical_level,
    }
    start = time.perf_counter()
    per_level = [runners[branch](config, n) for n in config.levels]
    extra: dict = {}
    if branch == "subcritical":
        if len(config.levels) < 3:
            raise ValueError("subcritical verification needs >= 3 levels for the slope fit")
        slope, stderr = fit_log2_slope(
            [(n, row["variance"]) for n, row in zip(config.levels, per_level)]
        )
        extra = {"slope": slope, "slope_stderr": stderr,
                 "slope_target": (1.0 - 6.0 * config.hurst) / 2.0}
    elif branch == "supercritical" and len(config.levels) >= 3:
        slope, stderr = fit_log2_slope(
            [(n, row["mean_abs"]) for n, row in zip(config.levels, per_level)]
        )
        extra = {"mean_abs_log2_slope": slope, "mean_abs_log2_slope_stderr": stderr}
    return VerificationReport(
        branch=branch, hurst=config.hurst, f_descriptor=config.f.descriptor,
        t=config.t, levels=list(config.levels), replicas=config.replicas,
        per_level=per_level, extra=extra, seed=config.seed,
        wall_time=time.perf_counter() - start,
    )


def evaluate_gate(report: VerificationReport, slope_tolerance: float = 0.10) -> list:
    """Default acceptance thresholds per branch; returns failure messages."""
    failures = []
    if report.branch == "supercritical":
        means = [row["mean_abs"] for row in report.per_level]
        if any(b >= a for a, b in zip(means, means[1:])):
            failures.append(f"mean_abs not strictly decreasing: {means}")
    elif report.branch == "critical":
        ks = [row["ks_distance"] for row in report.per_level]
        if len(ks) >= 2 and ks[-1] >= ks[0]:
            failures.append(
                f"ks_distance at level {report.levels[-1]} ({ks[-1]:.4f}) not "
                f"smaller than at level {report.levels[0]} ({ks[0]:.4f})"
            )
    elif report.branch == "subcritical":
        slope = report.extra["slope"]
        target = report.extra["slope_target"]
        if abs(slope - target) > slope_tolerance:
            failures.append(
                f"variance slope {slope:.3f} outside {target:.3f} +- {slope_tolerance}"
            )
    return failures
