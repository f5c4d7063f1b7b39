import numpy as np
import pytest

from stpnet import (
    ModelParams,
    Region,
    StructureError,
    classify_region,
    drift,
    equilibria,
    nullclines,
)


@pytest.fixture(scope="module")
def roots(paper_params):
    return [e.u_star for e in equilibria(paper_params)]


def _curves_at(params, u):
    nc = nullclines(params, np.array([u]))
    return float(nc.calcium[0]), float(nc.potential[0])


class TestClassifyRegion:
    def test_origin_is_boundary(self, paper_params):
        assert classify_region(paper_params, 0.0, 0.0) is Region.BOUNDARY

    def test_far_above_both_curves_is_r4(self, paper_params, roots):
        region = classify_region(paper_params, 5.0, 50.0, roots=roots)
        assert region is Region.R4
        du, dr = drift(5.0, 50.0, paper_params)
        assert du > 0.0 and dr < 0.0

    def test_point_on_curve_is_boundary(self, paper_params, roots):
        u = 5.0
        r_cal, _ = _curves_at(paper_params, u)
        assert classify_region(paper_params, u, r_cal, roots=roots) is Region.BOUNDARY

    def test_requires_three_roots(self, rate_a3):
        weak = ModelParams(alpha=1e-6, beta=1.0, lam=1.0, rate=rate_a3)
        with pytest.raises(StructureError):
            classify_region(weak, 1.0, 1.0)

    def test_rejects_negative_coordinates(self, paper_params):
        with pytest.raises(Exception):
            classify_region(paper_params, -1.0, 0.5)


class TestRegionSignPatterns:
    """Flow directions in each sector, sampled away from the curves."""

    def _sample_between(self, params, u, lo, hi, rng):
        # point strictly between the two curve values at this u
        w = rng.uniform(0.05, 0.95)
        return lo + w * (hi - lo)

    def test_r1_both_decrease(self, paper_params, roots):
        rng = np.random.default_rng(1)
        x1 = roots[1]
        found = 0
        while found < 100:
            u = rng.uniform(1e-4, x1 * 0.999)
            r_cal, r_pot = _curves_at(paper_params, u)
            lo, hi = min(r_cal, r_pot), max(r_cal, r_pot)
            if hi - lo < 1e-6:
                continue
            r = self._sample_between(paper_params, u, lo, hi, rng)
            if classify_region(paper_params, u, r, roots=roots) is not Region.R1:
                continue
            du, dr = drift(u, r, paper_params)
            assert du <= 0.0 and dr <= 0.0
            found += 1

    def test_r3_both_decrease(self, paper_params, roots):
        rng = np.random.default_rng(2)
        x2 = roots[2]
        found = 0
        while found < 100:
            u = rng.uniform(x2 * 1.001, x2 * 3.0)
            r_cal, r_pot = _curves_at(paper_params, u)
            lo, hi = min(r_cal, r_pot), max(r_cal, r_pot)
            if hi - lo < 1e-6:
                continue
            r = self._sample_between(paper_params, u, lo, hi, rng)
            if classify_region(paper_params, u, r, roots=roots) is not Region.R3:
                continue
            du, dr = drift(u, r, paper_params)
            assert du <= 0.0 and dr <= 0.0
            found += 1

    def test_r2_potential_falls_calcium_rises(self, paper_params, roots):
        rng = np.random.default_rng(3)
        found = 0
        while found < 100:
            u = rng.uniform(1e-3, roots[2] * 2.0)
            r_cal, r_pot = _curves_at(paper_params, u)
            r = rng.uniform(0.0, min(r_cal, r_pot) * 0.98)
            if r <= 0.0:
                continue
            if classify_region(paper_params, u, r, roots=roots) is not Region.R2:
                continue
            du, dr = drift(u, r, paper_params)
            assert du < 0.0 and dr > 0.0
            found += 1

    def test_r4_potential_rises_calcium_falls(self, paper_params, roots):
        rng = np.random.default_rng(4)
        found = 0
        while found < 100:
            u = rng.uniform(1e-3, roots[2] * 2.0)
            r_cal, r_pot = _curves_at(paper_params, u)
            r = rng.uniform(max(r_cal, r_pot) * 1.02, max(r_cal, r_pot) * 3.0 + 1.0)
            if classify_region(paper_params, u, r, roots=roots) is not Region.R4:
                continue
            du, dr = drift(u, r, paper_params)
            assert du > 0.0 and dr < 0.0
            found += 1

    def test_r5_membership_consistency(self, paper_params, roots):
        # between the separatrix and the upper fixed point, between curves:
        # membership only (no sign pattern asserted for this sector)
        rng = np.random.default_rng(5)
        x1, x2 = roots[1], roots[2]
        found = 0
        while found < 100:
            u = rng.uniform(x1 * 1.001, x2 * 0.999)
            r_cal, r_pot = _curves_at(paper_params, u)
            lo, hi = min(r_cal, r_pot), max(r_cal, r_pot)
            if hi - lo < 1e-6:
                continue
            r = self._sample_between(paper_params, u, lo, hi, rng)
            region = classify_region(paper_params, u, r, roots=roots)
            assert region in (Region.R5, Region.BOUNDARY)
            if region is Region.R5:
                # consistency with the defining inequalities
                assert x1 <= u <= x2
                assert min(r_cal, r_pot) <= r <= max(r_cal, r_pot)
                found += 1

    def test_partition_covers_positive_quadrant(self, paper_params, roots):
        rng = np.random.default_rng(6)
        for _ in range(300):
            u = rng.uniform(0.0, roots[2] * 2.5)
            r = rng.uniform(0.0, 12.0)
            region = classify_region(paper_params, u, r, roots=roots)
            assert isinstance(region, Region)
