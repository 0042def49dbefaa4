import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polarnav.errors import (
    BadDimensions,
    DegenerateGeometry,
    InsufficientSamples,
    UndefinedAop,
    ZeroIntensity,
)
from polarnav.frames import EulerAngles, dcm_from_euler
from polarnav.polarimetry import (
    CameraIntrinsics,
    MosaicFrame,
    MosaicPattern,
    StokesVector,
    SuperPixelIntensities,
    aop,
    canonicalize_sign,
    demosaic,
    dop,
    dop_raw,
    estimate_bidir_solar,
    evector_body,
    stokes,
    stokes_arrays,
    superpixel_csv,
    view_direction,
)

from .oracles.gridsearch import angle_between_lines_deg, brute_force_solar


def aop_branch_oracle(s1, s2):
    """Direct transcription of the three-branch arctan form."""
    if s1 > 0:
        return 0.5 * math.atan(s2 / s1)
    if s1 < 0 and s2 > 0:
        return 0.5 * math.atan(s2 / s1) + math.pi / 2
    if s1 < 0 and s2 < 0:
        return 0.5 * math.atan(s2 / s1) - math.pi / 2
    raise ValueError("branch form undefined here")


class TestDemosaic:
    def test_single_block_relabeling(self):
        frame = MosaicFrame(np.array([[5.0, 3.0], [1.0, 7.0]]),
                            MosaicPattern.TL90_TR45_BL135_BR0)
        grid = demosaic(frame)
        sp = grid[0]
        assert (sp.i90, sp.i45, sp.i135, sp.i0) == (5.0, 3.0, 1.0, 7.0)
        assert (sp.x, sp.y) == (1.0, 1.0)

    def test_uniform_frame_unpolarized(self):
        grid = demosaic(MosaicFrame(np.full((6, 8), 4.25)))
        for sp in grid:
            assert sp.i0 == sp.i45 == sp.i90 == sp.i135 == 4.25

    def test_4x4_centers(self):
        grid = demosaic(MosaicFrame(np.zeros((4, 4))))
        assert len(grid) == 4
        centers = [(sp.x, sp.y) for sp in grid]
        assert centers == [(1.0, 1.0), (3.0, 1.0), (1.0, 3.0), (3.0, 3.0)]

    def test_odd_dimensions_rejected(self):
        with pytest.raises(BadDimensions):
            demosaic(MosaicFrame(np.zeros((3, 4))))
        with pytest.raises(BadDimensions):
            demosaic(MosaicFrame(np.zeros((4, 5))))

    @pytest.mark.parametrize("pattern", list(MosaicPattern))
    def test_all_patterns_consistent(self, pattern):
        tl, tr, bl, br = pattern.value
        frame = MosaicFrame(np.array([[10.0, 20.0], [30.0, 40.0]]), pattern)
        sp = demosaic(frame)[0]
        got = {tl: 10.0, tr: 20.0, bl: 30.0, br: 40.0}
        assert sp.i0 == got[0] and sp.i45 == got[45]
        assert sp.i90 == got[90] and sp.i135 == got[135]

    def test_pattern_string_round_trip(self):
        for p in MosaicPattern:
            assert MosaicPattern.from_string(str(p)) is p


class TestStokes:
    @pytest.mark.parametrize("quad,expected", [
        ((2.0, 1.0, 0.0, 1.0), (2.0, 2.0, 0.0, 0.0)),
        ((3.5, 3.5, 3.5, 3.5), (7.0, 0.0, 0.0, 0.0)),
        ((1.0, 2.0, 1.0, 0.0), (2.0, 0.0, 2.0, 0.0)),
    ])
    def test_direct_substitution(self, quad, expected):
        s = stokes(SuperPixelIntensities(*quad, x=0.0, y=0.0))
        assert (s.s0, s.s1, s.s2, s.s3) == expected

    def test_array_form_matches_scalar(self):
        rng = np.random.default_rng(31)
        frame = MosaicFrame(rng.uniform(0, 100, size=(8, 8)))
        grid = demosaic(frame)
        s0, s1, s2 = stokes_arrays(grid)
        for k, sp in enumerate(grid):
            s = stokes(sp)
            assert s.s0 == s0.flat[k] and s.s1 == s1.flat[k] and s.s2 == s2.flat[k]


class TestDop:
    def test_fully_polarized(self):
        assert dop(StokesVector(2.0, 2.0, 0.0)) == 1.0

    def test_partial(self):
        assert dop(StokesVector(2.0, 1.0, 1.0)) == pytest.approx(math.sqrt(2) / 2)

    def test_unpolarized(self):
        assert dop(StokesVector(2.0, 0.0, 0.0)) == 0.0

    def test_clamped_vs_raw(self):
        s = StokesVector(1.0, 1.5, 0.0)
        assert dop(s) == 1.0
        assert dop_raw(s) == pytest.approx(1.5)

    def test_zero_intensity(self):
        with pytest.raises(ZeroIntensity):
            dop(StokesVector(0.0, 0.0, 0.0))


class TestAop:
    def test_first_branch_zero(self):
        assert aop(StokesVector(1.0, 2.0, 0.0)) == 0.0

    def test_second_branch(self):
        assert math.degrees(aop(StokesVector(1.0, -1.0, 1.0))) == pytest.approx(67.5)

    def test_third_branch(self):
        assert math.degrees(aop(StokesVector(1.0, -1.0, -1.0))) == pytest.approx(-67.5)

    def test_undefined(self):
        with pytest.raises(UndefinedAop):
            aop(StokesVector(1.0, 0.0, 0.0))

    @given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
    @settings(max_examples=300, deadline=None)
    def test_matches_branch_oracle(self, s1, s2):
        if s1 == 0.0 or (s1 < 0 and s2 == 0.0):
            return  # outside the branch form's domain
        got = aop(StokesVector(1.0, s1, s2))
        # axial angle: compare modulo pi so the -pi/2 boundary rounding of
        # the branch form (outside the documented half-open range) matches
        # its +pi/2 representative
        diff = abs(got - aop_branch_oracle(s1, s2)) % math.pi
        assert min(diff, math.pi - diff) < 1e-12

    def test_range(self):
        rng = np.random.default_rng(32)
        for _ in range(500):
            s1, s2 = rng.standard_normal(2)
            a = aop(StokesVector(1.0, s1, s2))
            assert -math.pi / 2 < a <= math.pi / 2


CAM = CameraIntrinsics(dx=3.45e-6, dy=3.45e-6, nx=64, ny=64, f=8e-3)


class TestViewDirection:
    def test_center_is_optical_axis(self):
        v = view_direction((CAM.nx + 1) / 2, (CAM.ny + 1) / 2, CAM)
        np.testing.assert_allclose(v, [0.0, 0.0, CAM.f])

    def test_unit_offset(self):
        v = view_direction((CAM.nx + 1) / 2 + 1.0, (CAM.ny + 1) / 2, CAM)
        np.testing.assert_allclose(v, [CAM.dx, 0.0, CAM.f])

    def test_corner_substitution(self):
        # direct substitution at pixel (1, 1): offsets -(n - 1)/2 pitches
        v = view_direction(1.0, 1.0, CAM)
        off = (CAM.nx + 1) / 2 - 1.0
        np.testing.assert_allclose(v, [-CAM.dx * off, -CAM.dy * off, CAM.f])

    def test_array_input(self):
        xs = np.array([1.0, 2.0, 3.0])
        ys = np.array([4.0, 5.0, 6.0])
        v = view_direction(xs, ys, CAM)
        assert v.shape == (3, 3)
        np.testing.assert_allclose(v[1], view_direction(2.0, 5.0, CAM))


class TestEvector:
    def test_aop_zero_on_axis(self):
        v = view_direction((CAM.nx + 1) / 2, (CAM.ny + 1) / 2, CAM)
        np.testing.assert_allclose(evector_body(0.0, v, CAM), [0.0, 1.0, 0.0])

    def test_off_axis_z_component(self):
        k = 7.0
        v = np.array([0.0, CAM.dy * k, CAM.f])
        e = evector_body(0.0, v, CAM)
        np.testing.assert_allclose(e, [0.0, 1.0, -CAM.dy * k / CAM.f])
        assert abs(float(np.dot(e, v))) < 1e-18

    def test_perpendicularity_always(self):
        rng = np.random.default_rng(33)
        xs = rng.uniform(1, CAM.nx, 200)
        ys = rng.uniform(1, CAM.ny, 200)
        aops = rng.uniform(-math.pi / 2, math.pi / 2, 200)
        v = view_direction(xs, ys, CAM)
        e = evector_body(aops, v, CAM)
        dots = np.abs(np.sum(e * v, axis=1))
        scale = np.linalg.norm(e, axis=1) * np.linalg.norm(v, axis=1)
        assert np.max(dots / scale) < 1e-12


class TestCanonicalizeSign:
    def test_negate_up(self):
        np.testing.assert_array_equal(
            canonicalize_sign(np.array([0.0, 0.0, -1.0])), [0.0, 0.0, 1.0])

    def test_largest_magnitude_rule(self):
        np.testing.assert_allclose(
            canonicalize_sign(np.array([0.6, -0.8, 0.0])), [-0.6, 0.8, 0.0])

    def test_tie_prefers_z_then_y(self):
        v = np.array([0.0, -math.sqrt(0.5), -math.sqrt(0.5)])
        out = canonicalize_sign(v)
        assert out[2] > 0  # z decided the tie

    @given(st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)))
    @settings(max_examples=300, deadline=None)
    def test_idempotent_and_sign_fixing(self, xyz):
        v = np.array(xyz)
        n = np.linalg.norm(v)
        if n < 1e-3:
            return
        v = v / n
        once = canonicalize_sign(v)
        np.testing.assert_array_equal(canonicalize_sign(once), once)
        np.testing.assert_array_equal(canonicalize_sign(-v), once)


def perp_evecs(sun, n, rng):
    """Random unit E-vectors exactly perpendicular to ``sun``."""
    u = rng.standard_normal((n, 3))
    e = np.cross(u, sun)
    keep = np.linalg.norm(e, axis=1) > 1e-6
    e = e[keep]
    return e / np.linalg.norm(e, axis=1)[:, None]


def jitter(e, sigma, rng):
    out = e + sigma * rng.standard_normal(e.shape)
    return out / np.linalg.norm(out, axis=1)[:, None]


class TestEstimateBidirSolar:
    def test_two_orthogonal_evecs(self):
        e = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        res = estimate_bidir_solar(e, np.ones(2))
        np.testing.assert_allclose(res.vector, [0.0, 0.0, 1.0], atol=1e-15)
        assert res.min_eigenvalue <= 1e-15
        assert res.sample_count == 2

    def test_parallel_evecs_degenerate(self):
        e = np.tile([1.0, 0.0, 0.0], (10, 1))
        with pytest.raises(DegenerateGeometry):
            estimate_bidir_solar(e, np.ones(10))

    def test_insufficient_samples(self):
        with pytest.raises(InsufficientSamples):
            estimate_bidir_solar(np.array([[1.0, 0.0, 0.0]]), np.ones(1))
        with pytest.raises(InsufficientSamples):
            estimate_bidir_solar(np.eye(3), np.array([1.0, 0.0, 0.0]))

    def test_noise_free_recovery(self):
        rng = np.random.default_rng(34)
        for _ in range(20):
            sun = rng.standard_normal(3)
            sun /= np.linalg.norm(sun)
            e = perp_evecs(sun, 100, rng)
            res = estimate_bidir_solar(e, np.ones(len(e)))
            assert angle_between_lines_deg(res.vector, sun) < 1e-5
            assert res.min_eigenvalue < 1e-12 * len(e)

    def test_sign_blind(self):
        rng = np.random.default_rng(35)
        sun = np.array([0.3, -0.5, 0.81])
        sun /= np.linalg.norm(sun)
        e = jitter(perp_evecs(sun, 60, rng), 1e-3, rng)
        w = rng.uniform(0.2, 1.0, len(e))
        base = estimate_bidir_solar(e, w)
        flips = np.where(rng.uniform(size=len(e)) < 0.5, -1.0, 1.0)
        flipped = estimate_bidir_solar(e * flips[:, None], w)
        np.testing.assert_array_equal(base.vector, flipped.vector)
        assert base.min_eigenvalue == flipped.min_eigenvalue

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(36)
        sun = np.array([0.1, 0.7, 0.7])
        sun /= np.linalg.norm(sun)
        e = jitter(perp_evecs(sun, 80, rng), 1e-4, rng)
        w = rng.uniform(0.1, 1.0, len(e))
        base = estimate_bidir_solar(e, w)
        for _ in range(10):
            r = dcm_from_euler(EulerAngles(*rng.uniform(-1.0, 1.0, 3)))
            rot = estimate_bidir_solar(e @ r.T, w)
            assert angle_between_lines_deg(rot.vector, r @ base.vector) < 1e-7

    def test_weight_scaling_invariance(self):
        rng = np.random.default_rng(37)
        sun = np.array([0.0, 0.6, 0.8])
        e = jitter(perp_evecs(sun, 50, rng), 1e-3, rng)
        w = rng.uniform(0.1, 1.0, len(e))
        a = estimate_bidir_solar(e, w)
        b = estimate_bidir_solar(e, 7.5 * w)
        np.testing.assert_allclose(a.vector, b.vector, atol=1e-12)
        assert b.min_eigenvalue == pytest.approx(7.5 * a.min_eigenvalue, rel=1e-9)

    def test_matches_brute_force_grid(self):
        rng = np.random.default_rng(38)
        for _ in range(10):
            sun = rng.standard_normal(3)
            sun /= np.linalg.norm(sun)
            e = jitter(perp_evecs(sun, 120, rng), 0.02, rng)
            w = rng.uniform(0.05, 1.0, len(e))
            oracle = brute_force_solar(e, w, step_deg=0.5)
            res = estimate_bidir_solar(e, w)
            assert angle_between_lines_deg(res.vector, oracle) < 0.5

    def test_polar_sample_interface(self):
        from polarnav.polarimetry import PolarSample
        samples = [
            PolarSample(view_dir=np.array([0.0, 0.0, 1.0]),
                        evec=np.array([1.0, 0.0, 0.0]), aop=0.0, dop=0.9,
                        weight=0.9),
            PolarSample(view_dir=np.array([0.0, 0.0, 1.0]),
                        evec=np.array([0.0, 1.0, 0.0]), aop=0.5, dop=0.8,
                        weight=0.8),
        ]
        res = estimate_bidir_solar(samples)
        np.testing.assert_allclose(res.vector, [0.0, 0.0, 1.0], atol=1e-15)

    def test_weighting_monotonicity(self):
        # corrupting the heavily weighted cluster must hurt more than
        # corrupting the lightly weighted one (median over 120 seeds)
        sun = np.array([0.2, 0.5, 0.84])
        sun /= np.linalg.norm(sun)
        err_low, err_high = [], []
        for seed in range(120):
            rng = np.random.default_rng(1000 + seed)
            a = perp_evecs(sun, 40, rng)
            b = perp_evecs(sun, 40, rng)
            w = np.concatenate([np.full(len(a), 1.0), np.full(len(b), 0.05)])
            noisy_b = np.vstack([a, jitter(b, 0.05, rng)])
            err_low.append(angle_between_lines_deg(
                estimate_bidir_solar(noisy_b, w).vector, sun))
            noisy_a = np.vstack([jitter(a, 0.05, rng), b])
            err_high.append(angle_between_lines_deg(
                estimate_bidir_solar(noisy_a, w).vector, sun))
        assert np.median(err_low) < np.median(err_high)

    def test_scatter_matrix_psd(self):
        rng = np.random.default_rng(39)
        for _ in range(50):
            e = rng.standard_normal((20, 3))
            e /= np.linalg.norm(e, axis=1)[:, None]
            w = rng.uniform(0.0, 1.0, 20)
            k = (e * w[:, None]).T @ e
            assert np.min(np.linalg.eigvalsh(k)) > -1e-9


class TestCsvExport:
    def test_header_and_rows(self):
        rng = np.random.default_rng(40)
        grid = demosaic(MosaicFrame(rng.uniform(1, 100, size=(4, 4))))
        text = superpixel_csv(grid)
        lines = text.strip().split("\n")
        assert lines[0] == "x,y,s0,s1,s2,dop,aop"
        assert len(lines) == 1 + len(grid)

    def test_unpolarized_cells_empty(self):
        grid = demosaic(MosaicFrame(np.full((2, 2), 5.0)))
        row = superpixel_csv(grid).strip().split("\n")[1]
        assert row.endswith(",,")
