import numpy as np
import pytest
import scipy.optimize as so
from hypothesis import given
from hypothesis import strategies as st

from stripres.cell_operator import assemble_shifted, spectral_report
from stripres.errors import EigOnContour, GapCollapse, PathExitsZ
from stripres.medium import MediumSpec, ModeBasis, Rectangle, convolution_matrix
from stripres.pole_tracker import (
    BasisPolicy,
    PathSpec,
    _branch_gap,
    PoleRecord,
    auto_path,
    classify_and_delta0,
    companion_matrix,
    cyl_dist,
    fold,
    in_Z,
    pencil_eigs,
    pencil_spectrum,
    replay_reverse,
    riesz_rank,
    riesz_singular_values,
    track_poles,
)
from stripres.symbol import CPoint2, RectContour, free_poles_in_D

PI = np.pi
TWO_PI = 2.0 * PI
THETA, DELTA = PI / 2, PI / 8


def free_oracle(k2, lam, tau1, n2_half=8):
    """Folded ``k1 = ±i·sqrt((m2 + k2)² - λ)`` for a unit free medium, ``|Im| < τ₁``."""
    out = []
    for n2 in range(-n2_half, n2_half + 1):
        r = np.sqrt(complex((TWO_PI * n2 + k2) ** 2 - lam))
        for z in (1j * r, -1j * r):
            z = fold(z)
            if abs(z.imag) < tau1 and all(abs(z - w) > 1e-9 for w in out):
                out.append(z)
    return np.array(sorted(out, key=lambda z: (z.real, z.imag)))


def max_set_distance(a, b):
    a, b = np.asarray(a), np.asarray(b)
    assert len(a) == len(b)
    d = cyl_dist(a[:, None], b[None, :])
    return max(d.min(axis=1).max(), d.min(axis=0).max())


@pytest.fixture
def skew():
    """A real medium with no reflection symmetry."""
    return MediumSpec(
        1.0,
        (Rectangle(0.1, 0.45, 0.2, 0.9, 1.5), Rectangle(0.5, 0.8, 0.05, 0.3, 0.7)),
        (Rectangle(0.3, 0.6, 0.4, 0.7, 1.0),),
    )


class TestFold:
    @pytest.mark.parametrize("z", [PI + 1j, -PI, 7.0 - 2j, -13.2 + 0.5j])
    def test_range(self, z):
        w = fold(z)
        assert -PI <= w.real < PI
        assert w.imag == complex(z).imag
        assert abs(((w - z).real / TWO_PI) - round((w - z).real / TWO_PI)) < 1e-12

    def test_cyl_dist_wraps(self):
        assert cyl_dist(PI - 0.1, -PI + 0.1) == pytest.approx(0.2)


class TestPencil:
    def test_companion_eigs_zero_the_quadratic(self, rect, small_basis):
        k2, mu = 2.0 + 0.5j, 1.0
        conv = convolution_matrix(rect, "eps0", small_basis)
        eigs = np.linalg.eigvals(companion_matrix(k2, mu, small_basis, conv))
        for z in eigs[::7]:
            cm = assemble_shifted(CPoint2(z, k2), mu, rect, small_basis)
            assert spectral_report(cm).sigma_min <= 1e-9 * np.linalg.norm(cm.entries, 2)

    def test_free_reference(self, free):
        b = ModeBasis.symmetric(5, 5)
        got = [r.k1 for r in pencil_eigs(PI + 2.5j * PI, 0.0, free, b, TWO_PI)]
        assert max_set_distance(got, free_poles_in_D(PI, TWO_PI, TWO_PI, 5)) <= 1e-10

    @pytest.mark.parametrize("k2", [2.0 + 0.0j, PI + 0.7j, PI + 4.0j])
    def test_free_negative_lambda(self, free, k2):
        b = BasisPolicy(TWO_PI).basis_for(k2)
        got = [r.k1 for r in pencil_eigs(k2, -1.0, free, b, TWO_PI)]
        assert max_set_distance(got, free_oracle(k2, -1.0, TWO_PI)) <= 1e-9

    def test_records_are_folded_and_trusted(self, rect):
        s = pencil_spectrum(2.0 + 0.5j, 1.0, rect, ModeBasis.symmetric(4, 4), TWO_PI)
        assert s.records
        for r in s.records:
            assert -PI <= r.k1.real < PI and abs(r.k1.imag) < TWO_PI
            assert r.trusted and r.residual < 1e-10
            assert cyl_dist(r.k1, r.raw) < 1e-12
        assert all(r.klass == "untrusted" for r in s.untrusted)

    def test_records_have_singular_cell_matrix(self, rect, small_basis):
        k2 = 2.0 + 0.5j
        for r in pencil_eigs(k2, 1.0, rect, small_basis, TWO_PI):
            cm = assemble_shifted(CPoint2(r.k1, k2), 1.0, rect, small_basis)
            assert spectral_report(cm).sigma_min <= 1e-9 * np.linalg.norm(cm.entries, 2)

    def test_every_sigma_min_dip_is_a_record(self, rect, small_basis):
        k2, mu, tau1 = 2.0 + 0.5j, 1.0, TWO_PI
        spec = pencil_spectrum(k2, mu, rect, small_basis, tau1)
        poles = np.array([r.k1 for r in spec.records + spec.untrusted])

        def smin(x):
            cm = assemble_shifted(CPoint2(complex(x[0], x[1]), k2), mu, rect, small_basis)
            return spectral_report(cm).sigma_min

        re = np.linspace(-PI, PI, 49)[:-1]
        im = np.linspace(-tau1 + 0.1, tau1 - 0.1, 97)
        grid = np.array([[smin((a, b)) for b in im] for a in re])
        dips = []
        for i in range(len(re)):
            for j in range(1, len(im) - 1):
                nb = grid[[(i - 1) % len(re), (i + 1) % len(re)], j].tolist() + [grid[i, j - 1], grid[i, j + 1]]
                if grid[i, j] < min(nb):
                    res = so.minimize(smin, (re[i], im[j]), method="Nelder-Mead", options={"xatol": 1e-11, "fatol": 1e-14})
                    if res.fun < 1e-6:
                        dips.append(complex(res.x[0], res.x[1]))
        assert len(dips) >= len(spec.records)
        for z in dips:
            assert cyl_dist(poles, z).min() <= 1e-4

    def test_small_mu_is_linear(self, rect, small_basis):
        k2 = 2.0 + 0.5j
        base = np.array([r.k1 for r in pencil_eigs(k2, 0.0, rect, small_basis, TWO_PI)])
        disp = []
        for mu in (1e-2, 1e-3):
            got = np.array([r.k1 for r in pencil_eigs(k2, mu, rect, small_basis, TWO_PI)])
            disp.append(max_set_distance(got, base))
        assert 8 <= disp[0] / disp[1] <= 12

    def test_conjugate_and_reflected_k2(self, skew, small_basis):
        k2 = 2.3 + 0.6j
        p = np.array([r.k1 for r in pencil_eigs(k2, 1.0, skew, small_basis, TWO_PI)])
        pc = np.array([r.k1 for r in pencil_eigs(np.conj(k2), 1.0, skew, small_basis, TWO_PI)])
        pr = np.array([r.k1 for r in pencil_eigs(-k2, 1.0, skew, small_basis, TWO_PI)])
        assert len(p) == len(pc) == len(pr) > 0
        assert max_set_distance(pc, np.conj(p)) <= 1e-9
        assert max_set_distance(pr, -p) <= 1e-9


def sample_records(k2s, lam, medium):
    return [pencil_eigs(k, lam, medium, BasisPolicy(TWO_PI).basis_for(k), TWO_PI) for k in k2s]


class TestClassify:
    def test_free_delta0(self, free):
        xs = THETA + (PI - THETA) * (np.arange(1, 9) / 9)
        g0 = 0.5 * (PI + THETA)
        samples = sample_records(xs, -1.0, free)
        start = sample_records([g0], -1.0, free)[0]
        d0, cls = classify_and_delta0(samples, start)
        # The nearest free poles sit at ±i·sqrt(x² + 1) for the smallest sample x.
        expect = 0.5 * np.sqrt(min(xs.min(), g0) ** 2 + 1)
        assert d0 == pytest.approx(expect, rel=1e-10)
        assert [r.index for r in cls] == list(range(len(start)))
        assert sum(r.klass == "up" for r in cls) == sum(r.klass == "down" for r in cls) == 2

    def test_requires_samples(self, free):
        with pytest.raises(ValueError):
            classify_and_delta0([[]] * 7, [])

    def test_gap_collapse_on_tuned_medium(self, free):
        xs = THETA + (PI - THETA) * (np.arange(1, 9) / 9)
        # λ = x² - η² puts a free pole at Im = η for k2 = x.
        lam = xs[3] ** 2 - (5e-6) ** 2
        samples = sample_records(xs, lam, free)
        with pytest.raises(GapCollapse):
            classify_and_delta0(samples, samples[0])

    def test_real_class(self):
        recs = [PoleRecord(0.1 + 0.0j, 0.1, 0.0), PoleRecord(0.5 + 2j, 0.5 + 2j, 0.0), PoleRecord(0.5 - 2j, 0.5 - 2j, 0.0)]
        _, cls = classify_and_delta0([recs] * 8, recs)
        assert sorted(r.klass for r in cls) == ["down", "real", "up"]


class TestPath:
    def test_in_Z(self):
        assert in_Z(PI + 50j, THETA, DELTA)
        assert in_Z(THETA + 0.01 + 0.1j, THETA, DELTA)
        assert not in_Z(THETA + 0.01 + 1j, THETA, DELTA)
        assert not in_Z(THETA - 0.01, THETA, DELTA)

    def test_waypoint_outside(self):
        with pytest.raises(PathExitsZ):
            PathSpec([PI, 1.0 + 2j], THETA, DELTA)

    def test_decreasing_rejected(self):
        with pytest.raises(ValueError):
            PathSpec([PI + 2j, PI + 1j], THETA, DELTA)
        PathSpec([PI + 2j, PI + 1j], THETA, DELTA, monotone=False)

    def test_auto_path_lands_on_heights(self):
        p = auto_path(THETA, DELTA, 10.0, heights=(3.0, 7.0, 12.0))
        assert p.waypoints == [0.5 * (PI + THETA), PI, PI + 3j, PI + 7j, PI + 10j]
        assert p.max_step == min(0.25, DELTA)

    def test_basis_policy(self):
        b = BasisPolicy(TWO_PI).basis_for(PI + (PI / 2 + 2 * TWO_PI) * 1j)
        assert (b.n1_max, b.n2_max) == (2 + 4, 1 + 4)


@pytest.fixture(scope="module")
def free_track():
    from stripres.medium import free_medium

    med, lam, tau1 = free_medium(), -1.0, TWO_PI
    policy = BasisPolicy(tau1, 2, 2)
    path = auto_path(THETA, DELTA, 2.5 * PI)
    g0 = path.waypoints[0]
    xs = THETA + (PI - THETA) * (np.arange(1, 9) / 9)
    samples = [pencil_eigs(x, lam, med, policy.basis_for(x), tau1) for x in xs]
    _, start = classify_and_delta0(samples, pencil_eigs(g0, lam, med, policy.basis_for(g0), tau1))
    traj = track_poles(path, lam, med, policy, tau1, start)
    return med, lam, tau1, policy, traj


class TestTracking:
    def test_matches_free_oracle(self, free_track):
        _, lam, tau1, _, traj = free_track
        for s in traj.accepted:
            assert max_set_distance([r.k1 for r in s.records], free_oracle(s.k2, lam, tau1)) <= 1e-9

    def test_count_constant(self, free_track):
        traj = free_track[-1]
        assert set(traj.counts()) == {traj.n_poles} == {4}

    def test_collision_at_real_pi_offsets(self, free_track):
        traj = free_track[-1]
        flagged = [s for s in traj.steps if s.flags]
        assert flagged and all(not s.accepted for s in flagged)
        # The free pairs meet at k2 = π; the flagged step brackets it.
        assert abs(flagged[0].k2 - PI) <= min(0.25, DELTA)
        assert traj.offsets and traj.offsets[0][1] == pytest.approx(-DELTA / 4)
        assert traj.accepted_k2[-1] == pytest.approx(PI - DELTA / 4 + 2.5j * PI)

    def test_labels_follow_imaginary_sign(self, free_track):
        traj = free_track[-1]
        for s in traj.accepted:
            for r in s.records:
                assert (r.klass == "up") == (r.k1.imag > 0)

    def test_reverse_replay(self, free_track):
        med, lam, tau1, policy, traj = free_track
        _, err = replay_reverse(traj, lam, med, policy, tau1, THETA, DELTA)
        assert err <= 1e-6

    def test_rows(self, free_track):
        rows = free_track[-1].rows()
        assert {"step", "re_k2", "im_k2", "pole_index", "re_k1", "im_k1", "klass", "tail_mass", "flags"} == set(rows[0])


def _pm_sqrt(z):
    r = np.sqrt(complex(z))
    return np.array([r, -r])


class TestBranchGap:
    def test_detects_crossing_between_samples(self):
        # ±sqrt(z) with z from -0.01 to 0.02: sampled gaps are 0.2, 0.07 and 0.28
        z = [-0.01, 0.005, 0.02]
        # the gap is a square root of a rounded quantity, so √eps is the floor
        assert _branch_gap(*[_pm_sqrt(x) for x in z]) <= 1e-7

    def test_far_from_branch_point(self):
        z = [1.0, 1.25, 1.5]
        assert _branch_gap(*[_pm_sqrt(x) for x in z]) == pytest.approx(2.0, rel=1e-12)

    def test_single_pole(self):
        assert _branch_gap(np.array([1j]), np.array([1j]), np.array([1j])) == np.inf

    @given(
        st.complex_numbers(max_magnitude=0.5, allow_nan=False, allow_infinity=False),
        st.complex_numbers(max_magnitude=0.5, allow_nan=False, allow_infinity=False),
    )
    def test_exact_for_square_root_branch(self, z0, z1):
        # The squared gap 4z is linear, so the interpolant is exact.
        d = abs(z1 - z0)
        t = 0.0 if d == 0 else min(max(-((z0 * np.conj((z1 - z0) / d)).real) / d, 0.0), 1.0)
        expect = 2.0 * np.sqrt(abs(z0 + t * (z1 - z0)))
        got = _branch_gap(_pm_sqrt(z0), _pm_sqrt(0.5 * (z0 + z1)), _pm_sqrt(z1))
        assert got == pytest.approx(expect, abs=1e-7)


@pytest.fixture(scope="module")
def rect_track():
    med = MediumSpec(1.0, (Rectangle(0.25, 0.75, 0.25, 0.75, 2.0),), (Rectangle(0.3, 0.7, 0.3, 0.7, 1.0),))
    lam, tau1 = 0.5, TWO_PI
    policy = BasisPolicy(tau1, 2, 2)
    path = auto_path(THETA, DELTA, 0.5)
    g0 = path.waypoints[0]
    xs = THETA + (PI - THETA) * (np.arange(1, 9) / 9)
    samples = [pencil_eigs(x, lam, med, policy.basis_for(x), tau1) for x in xs]
    _, start = classify_and_delta0(samples, pencil_eigs(g0, lam, med, policy.basis_for(g0), tau1))
    traj = track_poles(path, lam, med, policy, tau1, start)
    return med, lam, tau1, policy, traj


class TestBranchPointDetour:
    """On Re k2 = π a real medium makes the spectrum symmetric under
    k1 -> -conj(k1), so pole pairs meet on the imaginary axis at branch points."""

    def test_branch_point_on_ascent(self, rect_track):
        med, lam, tau1, policy, _ = rect_track
        lo = np.array([r.k1 for r in pencil_eigs(PI + 0j, lam, med, policy.basis_for(PI), tau1)])
        hi = np.array([r.k1 for r in pencil_eigs(PI + 0.25j, lam, med, policy.basis_for(PI + 0.25j), tau1)])
        assert np.abs(lo.real).max() < 1e-8
        assert np.abs(hi.real).min() > 0.1

    def test_detour_starts_at_corner(self, rect_track):
        traj = rect_track[-1]
        flagged = [s for s in traj.steps if s.flags]
        assert len(flagged) == 1 and 0 < flagged[0].k2.imag <= min(0.25, DELTA)
        assert traj.offsets == [(PI + 0j, pytest.approx(DELTA / 4))]
        assert traj.accepted_k2[-1] == pytest.approx(PI + DELTA / 4 + 0.5j)

    def test_abandoned_steps_not_accepted(self, rect_track):
        traj = rect_track[-1]
        assert all(s.k2.real > PI + 1e-12 for s in traj.accepted if s.k2.imag > 0)
        assert all(np.diff([s.k2.imag for s in traj.accepted]) >= 0)

    def test_count_and_reverse(self, rect_track):
        med, lam, tau1, policy, traj = rect_track
        assert set(traj.counts()) == {4}
        _, err = replay_reverse(traj, lam, med, policy, tau1, THETA, DELTA)
        assert err <= 1e-6


class TestRiesz:
    def test_rank_one_around_free_pole(self, free):
        b = ModeBasis.symmetric(4, 4)
        k2 = PI + 2.5j * PI
        assert riesz_rank(RectContour(1, TWO_PI, DELTA), k2, 0.0, free, b) == 1
        s64, s128 = (riesz_singular_values(RectContour(1, TWO_PI, DELTA), k2, 0.0, free, b, q) for q in (64, 128))
        # Oblique rank-one projector: top singular value at least 1; the rest is
        # second-order quadrature error.
        assert s64[0] >= 1 - 1e-9 and s64[1] < 0.01
        assert 3.5 <= s64[1] / s128[1] <= 4.5

    def test_rank_zero_for_empty_contour(self, free):
        b = ModeBasis.symmetric(4, 4)
        k2 = PI + 3j * PI
        for c in RectContour.all_for(DELTA, TWO_PI):
            assert riesz_rank(c, k2, 0.0, free, b) == 0

    def test_eig_on_contour(self, free):
        with pytest.raises(EigOnContour):
            riesz_rank(RectContour(1, TWO_PI, DELTA), (PI / 2 + TWO_PI) * 1j, 0.0, free, ModeBasis.symmetric(3, 3))

    def test_homotopy_keeps_rank(self, free):
        k2 = PI + (PI / 2 + 4 * TWO_PI) * 1j
        b = BasisPolicy(TWO_PI).basis_for(k2)
        for mu in np.linspace(0.0, -1.0, 5):
            ranks = [riesz_rank(c, k2, mu, free, b) for c in RectContour.all_for(DELTA, TWO_PI)]
            assert ranks == [1, 1, 1, 1]
