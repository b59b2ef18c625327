"""End-to-end acceptance suite.

One test per acceptance criterion, in order.  Each test prints a single
``ACCEPTANCE k <name>: PASS/FAIL`` line with the measured statistics and
asserts every clause of the criterion at its stated tolerance.  Master
seeds are pinned so the suite is reproducible run-to-run.

Criterion 7 asserts, as stated, that the mean absolute residual of the
supercritical change-of-variable check at level 14 is at most half its
value at level 8.  The residual is dominated by the endpoint mismatch
f(Z_t) - f(Z at the last skeletal time), whose mean decays like
2^{-nH/4}; over six levels at H = 0.35 that is a factor ~0.7, not 0.5,
so the clause fails for the statistic the criterion itself defines.  The
assertion is kept faithful rather than loosened; see the failure message
for the measured numbers and the decision log for the full analysis.
"""

import math
import time
from fractions import Fraction

import numpy as np

from fbmbt.calculus import (VerifyConfig, evaluate_z, ito_residual,
                            sample_joint, taylor_coefficients, verify_branch,
                            _skeletal_z_values)
from fbmbt.fgn import dyadic_step, sample_fbm_two_sided
from fbmbt.scaling import check_cubic, check_quadratic
from fbmbt.skeleton import (crossing_counts, sample_walk_exact,
                            updown_difference)
from fbmbt.streams import SeedRecord
from fbmbt.variations import (decompose_variation, function_by_name, hermite,
                              polynomial, sine, symmetric_variation_direct,
                              symmetric_variation_skeletal,
                              weighted_hermite_variation)

MASTER = 20260810


def _report(num: int, name: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {num:02d} {name}: {'PASS' if ok else 'FAIL'} - {detail}")


def _ident_tol(a: float, b: float) -> float:
    return max(1e-9 * max(abs(a), abs(b)), 1e-12)


class TestAcceptance:
    def test_c01_cell_sum_identity(self):
        """Direct and cell-sum variation evaluations agree to 1e-9 relative."""
        start = time.perf_counter()
        hurst, t = 0.3, 1.0
        worst = 0.0
        base = SeedRecord(MASTER + 1)
        for n in range(4, 13):
            for i in range(100):
                js = sample_joint(hurst, n, t, base.derive("replica", n, i),
                                  x_refine=1)
                cc = crossing_counts(js.skeleton, t)
                z = _skeletal_z_values(js, t)
                for r in (1, 2, 3):
                    direct = symmetric_variation_direct(sine(), z, 2 * r - 1)
                    skel = symmetric_variation_skeletal(sine(), js.x, cc, 2 * r - 1)
                    err = abs(direct - skel)
                    tol = _ident_tol(direct, skel)
                    worst = max(worst, err / tol if tol else 0.0)
                    assert err <= tol, (n, i, r, direct, skel)
        elapsed = time.perf_counter() - start
        ok = worst <= 1.0 and elapsed < 60
        _report(1, "cell-sum identity", ok,
                f"r in 1..3, n in 4..12, 100 paths each; worst err/tol "
                f"{worst:.2e}; {elapsed:.1f}s")
        assert elapsed < 60

    def test_c02_hermite_decomposition_identity(self):
        """Variation equals its Hermite recombination to 1e-9 relative."""
        start = time.perf_counter()
        hurst, t = 0.3, 1.0
        worst = 0.0
        base = SeedRecord(MASTER + 2)
        for n in (4, 6, 8, 10, 12):
            for r in (1, 2, 3):
                for i in range(50):
                    rec = base.derive("replica", n, r, i)
                    sk = sample_walk_exact(n, 2**n, rec)
                    reach = int(np.max(np.abs(sk.walk))) + 2
                    x = sample_fbm_two_sided(hurst, dyadic_step(n), reach,
                                             rec.derive("fbm"))
                    cc = crossing_counts(sk, t)
                    lhs, rhs = decompose_variation(sine(), x, cc)[2 * r - 1]
                    err = abs(lhs - rhs)
                    tol = _ident_tol(lhs, rhs)
                    worst = max(worst, err / tol if tol else 0.0)
                    assert err <= tol, (n, r, i, lhs, rhs)
        elapsed = time.perf_counter() - start
        _report(2, "Hermite decomposition identity", True,
                f"r<=3, n<=12, 50 samples per cell; worst err/tol {worst:.2e}; "
                f"{elapsed:.1f}s")
        assert elapsed < 60

    def test_c03_two_point_expansion_exact(self):
        """Symmetric expansion reproduces monomials to degree 13; f''' term -1/24."""
        start = time.perf_counter()
        scheme = taylor_coefficients()
        assert scheme.gammas[1] == Fraction(-1, 24)
        rng = np.random.default_rng(MASTER + 3)
        worst = 0.0
        for k in range(14):
            mono = polynomial([0.0] * k + [1.0])
            for _ in range(100):
                a, b = rng.uniform(-2.0, 2.0, size=2)
                err = abs(scheme.expand(mono, a, b) - (b**k - a**k))
                bound = 1e-10 * max(1.0, abs(b - a)) ** 13
                worst = max(worst, err / bound)
                assert err <= bound, (k, a, b)
        elapsed = time.perf_counter() - start
        _report(3, "two-point expansion exactness", True,
                f"monomials to degree 13, 100 pairs each; worst err/bound "
                f"{worst:.2e}; third-derivative coefficient -1/24 exact; "
                f"{elapsed:.1f}s")
        assert elapsed < 5

    def test_c04_residual_telescoping(self):
        """Residuals for x and x^2 equal their endpoint closed forms to 1e-12."""
        start = time.perf_counter()
        worst = 0.0
        for i in range(5):
            js = sample_joint(0.35, 8, 1.0, SeedRecord(MASTER + 4).derive("replica", i))
            z = _skeletal_z_values(js, 1.0)
            z_t = evaluate_z(js.x, js.y.value_at_time(1.0))
            r1 = ito_residual(function_by_name("identity"), js, 1.0)
            r2 = ito_residual(function_by_name("square"), js, 1.0)
            worst = max(worst, abs(r1 - (z_t - z[-1])), abs(r2 - (z_t**2 - z[-1] ** 2)))
        elapsed = time.perf_counter() - start
        ok = worst <= 1e-12
        _report(4, "residual telescoping", ok,
                f"5 joint samples at level 8; worst deviation {worst:.2e} "
                f"(tolerance 1e-12); {elapsed:.1f}s")
        assert ok
        assert elapsed < 5

    def test_c05_quadratic_variation_scaling(self):
        """Normalized quadratic variation concentrates at t for three H values."""
        start = time.perf_counter()
        medians = {}
        for i, hurst in enumerate((0.25, 0.5, 0.75)):
            rep = check_quadratic(hurst, 1.0, [16], 50, seed=MASTER + 50 + i)
            medians[hurst] = rep.per_level[0]["median_abs_error"]
        elapsed = time.perf_counter() - start
        ok = all(m <= 0.05 for m in medians.values())
        _report(5, "quadratic variation scaling", ok,
                "median |normalized QV - 1| at n=16, 50 paths: "
                + ", ".join(f"H={h}: {m:.4f}" for h, m in medians.items())
                + f" (gate 0.05); {elapsed:.1f}s")
        assert ok
        assert elapsed < 120

    def test_c06_cubic_variation_clt(self):
        """Normalized cubic variation is centered and Gaussian at H=1/6, n=14."""
        start = time.perf_counter()
        rep = check_cubic(1 / 6, 1.0, [14], 5000, seed=MASTER + 6)
        row = rep.per_level[0]
        mean_ok = abs(row["mean"]) <= 3 * math.sqrt(row["variance"] / 5000)
        ks_ok = row["ks_p"] > 0.01
        elapsed = time.perf_counter() - start
        ok = mean_ok and ks_ok
        _report(6, "cubic variation CLT", ok,
                f"n=14, 5000 replicas: mean {row['mean']:+.4f} "
                f"(3SE {3 * math.sqrt(row['variance'] / 5000):.4f}), "
                f"sigma2 {rep.estimated_sigma2:.3f}, KS p {row['ks_p']:.4f} "
                f"(gate 0.01); {elapsed:.1f}s")
        assert ok
        assert elapsed < 300

    def test_c07_supercritical_residual_tightens(self):
        """Supercritical residual: strict decrease and halving over n=8..14.

        The halving clause contradicts the criterion's own residual
        definition (endpoint-mismatch decay 2^{-nH/4} gives ~0.70 over six
        levels at H=0.35); it is asserted anyway, unweakened.
        """
        start = time.perf_counter()
        cfg = VerifyConfig(hurst=0.35, f=sine(), t=1.0, levels=(8, 10, 12, 14),
                           replicas=500, seed=7)
        rep = verify_branch("supercritical", cfg)
        means = [row["mean_abs"] for row in rep.per_level]
        ends = [row["mean_abs_at_skeleton_end"] for row in rep.per_level]
        decreasing = all(b < a for a, b in zip(means, means[1:]))
        ratio = means[-1] / means[0]
        halved = ratio <= 0.5
        elapsed = time.perf_counter() - start
        ok = decreasing and halved
        _report(7, "supercritical residual", ok,
                f"mean|res| by level {[round(m, 4) for m in means]}, strictly "
                f"decreasing: {decreasing}, ratio n14/n8 {ratio:.3f} (gate 0.50); "
                f"diagnostic residual at the skeleton endpoint decays "
                f"{ends[-1] / ends[0]:.3f}; {elapsed:.1f}s")
        assert decreasing, means
        assert halved, (
            f"mean |residual| fell by {ratio:.3f} from level 8 to 14, above the "
            f"0.5 gate. The statistic includes f(Z_t) - f(Z at T_(2^n t)), whose "
            f"mean decays like 2^(-nH/4) = {2.0 ** (-6 * 0.35 / 4):.3f} over six "
            f"levels at H=0.35, so the gate is unattainable as defined; the "
            f"Taylor-remainder part alone (diagnostic ratio "
            f"{ends[-1] / ends[0]:.3f}) does halve. See notes/decisions.md."
        )
        assert elapsed < 600

    def test_c08_critical_law_match(self):
        """Two-sample KS between the corrected increment and the symmetric sum."""
        start = time.perf_counter()
        cfg = VerifyConfig(hurst=1 / 6, f=sine(), t=1.0, levels=(8, 12),
                           replicas=2000, seed=20260808)
        rep = verify_branch("critical", cfg)
        ks = [row["ks_distance"] for row in rep.per_level]
        ps = [row["ks_p"] for row in rep.per_level]
        elapsed = time.perf_counter() - start
        ok = ks[1] < ks[0]
        _report(8, "critical-case law match", ok,
                f"KS distance n=8: {ks[0]:.4f}, n=12: {ks[1]:.4f} (must shrink); "
                f"non-rejection at n=12: p={ps[1]:.4f} (reported); {elapsed:.1f}s")
        assert ok, ks
        assert elapsed < 900

    def test_c09_subcritical_variance_growth(self):
        """Variance of the cubic skeletal sum grows at rate (1-6H)/2."""
        start = time.perf_counter()
        cfg = VerifyConfig(hurst=0.10, f=sine(), t=1.0, levels=(8, 10, 12, 14),
                           replicas=2500, seed=202)
        rep = verify_branch("subcritical", cfg)
        slope = rep.extra["slope"]
        target = rep.extra["slope_target"]
        elapsed = time.perf_counter() - start
        ok = abs(slope - target) <= 0.10
        _report(9, "subcritical variance growth", ok,
                f"fitted log2-variance slope {slope:.4f} vs target {target:.2f} "
                f"+- 0.10 (stderr {rep.extra['slope_stderr']:.4f}); {elapsed:.1f}s")
        assert ok
        assert elapsed < 600

    def test_c10_moment_bound(self):
        """Increment second moments of W_n obey the calibrated envelope."""
        start = time.perf_counter()
        hurst = 0.25
        cal_pairs = [(0.0, 0.5), (0.25, 1.0), (-0.5, 0.5), (-1.0, -0.25),
                     (0.1, 0.2), (-0.75, 0.0), (0.4, 1.6), (-1.4, 0.3)]
        hold_pairs = [(0.0, 1.0), (0.5, 1.5), (-1.5, 0.5), (-1.25, -0.5),
                      (0.3, 0.4), (0.05, 1.7), (-0.2, 0.6), (0.9, 1.1),
                      (-1.7, -1.0), (0.6, 0.7)]
        replicas = 4000

        def second_moments(order, level, seed, pairs):
            base = SeedRecord(seed)
            a = dyadic_step(level)
            bound = max(max(abs(s), abs(t)) for s, t in pairs) + 1.0
            k_max = int(np.ceil(bound * 2 ** (level / 2)))
            half = 1 << int(np.ceil(np.log2(k_max + 2)))
            scale = 2.0 ** (level * hurst / 2)
            j = np.arange(k_max)
            acc = np.zeros(len(pairs))
            first_x = None
            for rep in range(replicas):
                x = sample_fbm_two_sided(hurst, a, half,
                                         base.derive("replica", level, rep))
                if first_x is None:
                    first_x = x
                v, c = x.values, half
                prefix = {}
                for sign in (1, -1):
                    x0 = v[c + sign * j]
                    x1 = v[c + sign * (j + 1)]
                    terms = 0.5 * (np.sin(x0) + np.sin(x1)) * \
                        hermite(order, scale * (x1 - x0))
                    prefix[sign] = np.concatenate([[0.0], np.cumsum(terms)])

                def w_at(tv):
                    k = int(np.floor(abs(tv) * 2 ** (level / 2) + 1e-9))
                    return prefix[1][k] if tv >= 0 else prefix[-1][k]

                for idx, (s, t) in enumerate(pairs):
                    d = w_at(t) - w_at(s)
                    acc[idx] += d * d
            # anchor the vectorized prefix form to the public operation
            probe = pairs[0][1]
            direct = weighted_hermite_variation(sine(), first_x, level, order, probe)
            k = int(np.floor(abs(probe) * 2 ** (level / 2) + 1e-9))
            v, c = first_x.values, half
            x0 = v[c + np.arange(k)]
            x1 = v[c + np.arange(1, k + 1)]
            terms = 0.5 * (np.sin(x0) + np.sin(x1)) * hermite(order, scale * (x1 - x0))
            assert abs(direct - float(np.sum(terms))) <= 1e-10 * max(1.0, abs(direct))
            return acc / replicas

        def envelope(s, t, level):
            return max(abs(s), abs(t)) ** (2 * hurst) * \
                (abs(t - s) * 2 ** (level / 2) + 1.0)

        cells = [(order, level) for order in (1, 3) for level in (6, 8)]
        c = 0.0
        for order, level in cells:
            moments = second_moments(order, level, MASTER + 100, cal_pairs)
            for m, (s, t) in zip(moments, cal_pairs):
                c = max(c, m / envelope(s, t, level))
        total = passed = 0
        worst = 0.0
        for order, level in cells:
            moments = second_moments(order, level, MASTER + 200, hold_pairs)
            for m, (s, t) in zip(moments, hold_pairs):
                total += 1
                ratio = m / (2.0 * c * envelope(s, t, level))
                worst = max(worst, ratio)
                passed += ratio <= 1.0
        elapsed = time.perf_counter() - start
        ok = passed / total >= 0.95
        _report(10, "moment bound", ok,
                f"calibrated c {c:.4f}; held-out pass rate {passed}/{total} "
                f"(gate 95%), worst ratio vs 2c envelope {worst:.3f}; "
                f"{elapsed:.1f}s")
        assert ok
        assert elapsed < 300

    def test_c11_remainder_scaling(self):
        """Degree-14 increment sums scale like 2^{n(1-7H)}."""
        start = time.perf_counter()
        replicas = 6000
        levels = (8, 10, 12, 14)
        results = {}
        for hurst in (1 / 6, 0.3):
            base = SeedRecord(MASTER + 11)
            means = []
            for n in levels:
                a = dyadic_step(n)
                total = 0.0
                for rep in range(replicas):
                    rec = base.derive("replica", n, rep)
                    sk = sample_walk_exact(n, 2**n, rec, with_times=False)
                    w = sk.walk
                    reach = int(np.abs(w).max()) + 2
                    half = 1 << int(np.ceil(np.log2(reach)))
                    x = sample_fbm_two_sided(hurst, a, half, rec.derive("fbm"))
                    cells = np.minimum(w[:-1], w[1:]) + half
                    inc14 = np.abs(np.diff(x.values)) ** 14
                    total += float(inc14[cells].sum())
                means.append((n, total / replicas))
            ys = np.log2([m for _, m in means])
            slope = float(np.polyfit(levels, ys, 1)[0])
            results[hurst] = slope
        elapsed = time.perf_counter() - start
        ok = all(abs(results[h] - (1 - 7 * h)) <= 0.3 for h in results)
        _report(11, "degree-14 remainder scaling", ok,
                ", ".join(f"H={h:.3f}: slope {results[h]:.3f} vs {1 - 7 * h:.3f}"
                          for h in results)
                + f" (tolerance 0.3); {elapsed:.1f}s")
        assert ok
        assert elapsed < 300

    def test_c12_skeleton_law_checks(self):
        """Mean first hitting time, conservation, and the crossing closed form."""
        start = time.perf_counter()
        # E[T_{1,n}] = 2^{-n} over 10^4 draws, 3 SE
        n, draws = 8, 10_000
        base = SeedRecord(MASTER + 12)
        t1 = np.array([
            sample_walk_exact(n, 1, base.derive("replica", r)).times[1]
            for r in range(draws)
        ])
        se = math.sqrt(2.0 / 3.0) * 2.0**-n / math.sqrt(draws)
        mean_ok = abs(t1.mean() - 2.0**-n) <= 3 * se

        # exhaustive: all +-1 walks of length <= 12
        from fbmbt.skeleton import SkeletalStructure
        closed_ok = True
        conservation_ok = True
        for length in range(1, 13):
            for bits in range(2**length):
                walk = np.zeros(length + 1, dtype=np.int64)
                for i in range(length):
                    walk[i + 1] = walk[i] + (1 if (bits >> i) & 1 else -1)
                sk = SkeletalStructure(level=2, times=np.arange(length + 1, dtype=float),
                                       walk=walk, mode="naive", source={})
                cc = crossing_counts(sk, length / 4.0)
                conservation_ok &= cc.n_steps == length
                for j in range(int(walk.min()) - 1, int(walk.max()) + 2):
                    if cc.up.get(j, 0) - cc.down.get(j, 0) != \
                            updown_difference(cc.terminal, j):
                        closed_ok = False
        # random longer walks
        rng = np.random.default_rng(MASTER + 13)
        for _ in range(1000):
            steps = rng.choice([-1, 1], size=300)
            walk = np.concatenate([[0], np.cumsum(steps)])
            sk = SkeletalStructure(level=2, times=np.arange(301, dtype=float),
                                   walk=walk, mode="naive", source={})
            cc = crossing_counts(sk, 75.0)
            conservation_ok &= cc.n_steps == 300
            for j in range(int(walk.min()) - 1, int(walk.max()) + 2):
                if cc.up.get(j, 0) - cc.down.get(j, 0) != \
                        updown_difference(cc.terminal, j):
                    closed_ok = False
        elapsed = time.perf_counter() - start
        ok = mean_ok and closed_ok and conservation_ok
        _report(12, "skeleton law checks", ok,
                f"mean T1 {t1.mean():.6f} vs 2^-8 {2.0**-8:.6f} "
                f"(3SE {3 * se:.2e}); closed form exhaustive to length 12 and "
                f"1000 random length-300 walks: {closed_ok}; conservation: "
                f"{conservation_ok}; {elapsed:.1f}s")
        assert ok
        assert elapsed < 120
