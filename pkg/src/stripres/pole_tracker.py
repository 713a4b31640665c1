"""Poles of ``T(·, k2)`` as eigenvalues of a companion-linearized pencil.

For fixed ``k2`` the cell matrix is quadratic in ``k1``::

    S(k1) = k1² + 2 k1 diag(m1) + diag(m1² + (m2 + k2)²) - μ Conv(ε̂₀)

and its zeros are the eigenvalues of the companion matrix
``W = [[0, I], [A, B]]`` with ``A = -diag(s(m, (0, k2))) + μ Conv(ε̂₀)`` and
``B = -diag(2 m1)``.  Poles repeat with period 2π in ``Re k1``; records
carry one representative with ``Re k1 ∈ [-π, π)``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .cell_operator import symbol_diagonal
from .errors import (
    EXCEPTIONAL_PROXIMITY,
    EigKernelFailure,
    EigOnContour,
    GapCollapse,
    PathExitsZ,
    TrackingLost,
)
from .medium import MediumSpec, ModeBasis, convolution_matrix
from .symbol import RectContour, gamma_contour_points, polyline_weights

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
TAIL_THRESHOLD = 0.05
MERGE_TOL = 1e-6
SEAM_TOL = 1e-3
TOL_REAL = 1e-6
COLLISION_TOL = 1e-3

__all__ = [
    "PoleRecord",
    "PencilSpectrum",
    "BasisPolicy",
    "PathSpec",
    "TrackStep",
    "Trajectory",
    "companion_matrix",
    "cyl_diff",
    "cyl_dist",
    "fold",
    "pencil_spectrum",
    "pencil_eigs",
    "classify_and_delta0",
    "in_Z",
    "auto_path",
    "track_poles",
    "replay_reverse",
    "riesz_rank",
    "riesz_singular_values",
]


def fold(z: complex) -> complex:
    """Representative of ``z`` in ``ℂ/2π`` with ``Re ∈ [-π, π)``."""
    z = complex(z)
    return complex((z.real + np.pi) % TWO_PI - np.pi, z.imag)


def cyl_diff(a, b):
    """``a - b`` in ``ℂ/2π`` with real part in ``[-π, π)``."""
    d = np.asarray(a) - np.asarray(b)
    return (d.real + np.pi) % TWO_PI - np.pi + 1j * d.imag


def cyl_dist(a, b):
    return np.abs(cyl_diff(a, b))


@dataclass(frozen=True)
class PoleRecord:
    """One pole of ``T(·, k2)`` in ``D``.

    Attributes
    ----------
    k1 : complex
        Representative with ``Re k1 ∈ [-π, π)``.
    raw : complex
        The companion eigenvalue the record came from (before folding).
    klass : str
        ``up``, ``down``, ``real`` or ``untrusted``; empty until classified.
    tail_mass : float
        Eigenvector mass fraction on the outermost mode shell.
    index : int
        Stable identifier along a tracked path (-1 when unassigned).
    residual : float
        ``‖S(k1) u‖ / (‖S(k1)‖_F ‖u‖)`` for the computed eigenvector.
    """

    k1: complex
    raw: complex
    tail_mass: float
    klass: str = ""
    index: int = -1
    residual: float = 0.0

    @property
    def trusted(self) -> bool:
        return self.tail_mass <= TAIL_THRESHOLD


@dataclass
class PencilSpectrum:
    """All companion eigenvalues plus the trusted records in ``D``."""

    k2: complex
    mu: float
    basis: ModeBasis
    tau1: float
    raw: np.ndarray
    records: list
    untrusted: list


def companion_matrix(
    k2: complex, mu: float, basis: ModeBasis, conv: np.ndarray
) -> np.ndarray:
    """``W_μ(k2) = [[0, I], [A, B]]`` of size ``2N``."""
    n = basis.size
    a = -np.diag(symbol_diagonal(basis, 0.0, k2)) + mu * conv
    w = np.zeros((2 * n, 2 * n), dtype=complex)
    w[:n, n:] = np.eye(n)
    w[n:, :n] = a
    w[n:, n:] = np.diag(-2.0 * basis.m1)
    return w


def _null_vector(s: np.ndarray) -> np.ndarray:
    """Approximate kernel vector of a nearly singular matrix by inverse iteration."""
    n = s.shape[0]
    rng = np.random.default_rng(12345)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu = sla.lu_factor(s, check_finite=False)
        for _ in range(2):
            x = sla.lu_solve(lu, x, check_finite=False)
            nrm = np.linalg.norm(x)
            if not np.isfinite(nrm) or nrm == 0:
                break
            x = x / nrm
    if not np.all(np.isfinite(x)):
        # Exactly singular pivot: fall back to the last right singular vector.
        x = sla.svd(s)[2][-1].conj()
    return x


def pencil_spectrum(
    k2: complex,
    mu: float,
    medium: MediumSpec,
    basis: ModeBasis,
    tau1: float,
    conv: Optional[np.ndarray] = None,
    tail_threshold: float = TAIL_THRESHOLD,
) -> PencilSpectrum:
    """Eigenvalues of ``W_μ(k2)`` and the trusted pole records in ``D``.

    Candidates are raw eigenvalues with ``Re ∈ [-π, π)`` and
    ``|Im| < τ₁``.  Their eigenvectors come from inverse iteration on
    ``S(k1)``; the tail mass is measured on the outermost shell.  Records that
    coincide in ``ℂ/2π`` are merged (within ``1e-6``, or within ``1e-3`` when
    both sit next to the seam ``Re = ±π``).
    """
    if conv is None:
        conv = convolution_matrix(medium, "eps0", basis)
    w = companion_matrix(k2, mu, basis, conv)
    try:
        raw = sla.eigvals(w, overwrite_a=True, check_finite=False)
    except (sla.LinAlgError, ValueError) as exc:
        raise EigKernelFailure(f"eigensolver failed at k2={k2}: {exc}") from exc
    if not np.all(np.isfinite(raw)):
        raise EigKernelFailure(f"non-finite eigenvalues at k2={k2}")
    raw = raw[np.lexsort((raw.imag, raw.real))]

    edge = basis.edge_mask(1)
    cand = raw[(raw.real >= -np.pi) & (raw.real < np.pi) & (np.abs(raw.imag) < tau1)]
    trusted, untrusted = [], []
    base = np.diag(basis.m1**2 + (basis.m2 + k2) ** 2) - mu * conv
    for z in cand:
        s = base + np.diag(z * z + 2.0 * z * basis.m1)
        u = _null_vector(s)
        p = np.abs(u) ** 2
        tail = float(p[edge].sum() / p.sum())
        resid = float(np.linalg.norm(s @ u) / (np.linalg.norm(s) * np.linalg.norm(u)))
        rec = PoleRecord(fold(z), complex(z), tail, residual=resid)
        (trusted if tail <= tail_threshold else untrusted).append(rec)

    merged: list = []
    for rec in sorted(trusted, key=lambda r: r.tail_mass):
        dup = False
        for other in merged:
            d = cyl_dist(rec.k1, other.k1)
            near_seam = min(np.pi - abs(rec.k1.real), np.pi - abs(other.k1.real)) < SEAM_TOL
            if d < MERGE_TOL or (near_seam and d < SEAM_TOL):
                dup = True
                break
        if not dup:
            merged.append(rec)
    merged.sort(key=lambda r: (r.k1.real, r.k1.imag))
    untrusted = [replace(r, klass="untrusted") for r in untrusted]
    return PencilSpectrum(complex(k2), float(mu), basis, float(tau1), raw, merged, untrusted)


def pencil_eigs(
    k2: complex,
    mu: float,
    medium: MediumSpec,
    basis: ModeBasis,
    tau1: float,
    conv: Optional[np.ndarray] = None,
) -> list:
    """Trusted pole records of ``T(·, k2)`` in ``D`` (see :func:`pencil_spectrum`)."""
    return pencil_spectrum(k2, mu, medium, basis, tau1, conv).records


def classify_and_delta0(
    samples: Sequence,
    start_records: Sequence[PoleRecord],
    tol_real: float = TOL_REAL,
) -> tuple[float, list]:
    """Half-gap ``δ₀`` and the up/down/real split at the path start.

    Parameters
    ----------
    samples : sequence of lists of PoleRecord
        Pole sets at at least 8 real ``k2`` samples.
    start_records : sequence of PoleRecord
        Poles at ``Γ(0)``.  They also enter the ``δ₀`` minimum.

    Returns
    -------
    delta0 : float
    classified : list of PoleRecord
        ``start_records`` with ``klass`` set and ``index`` numbered from 0.

    Raises
    ------
    GapCollapse
        If some non-real pole has ``|Im| < 10·tol_real``.
    """
    if len(samples) < 8:
        raise ValueError("need at least 8 real k2 samples")
    ims = [abs(r.k1.imag) for recs in list(samples) + [list(start_records)] for r in recs]
    nonreal = [v for v in ims if v > tol_real]
    if not nonreal:
        raise GapCollapse("no non-real poles; delta0 is undefined")
    gap = min(nonreal)
    if gap < 10 * tol_real:
        raise GapCollapse(f"non-real pole with |Im|={gap:.3e} too close to the real axis")
    delta0 = 0.5 * gap
    out = []
    for i, r in enumerate(sorted(start_records, key=lambda r: (r.k1.real, r.k1.imag))):
        if abs(r.k1.imag) <= tol_real:
            klass = "real"
        elif r.k1.imag > delta0:
            klass = "up"
        else:
            klass = "down"
        out.append(replace(r, klass=klass, index=i))
    return delta0, out


@dataclass(frozen=True)
class BasisPolicy:
    """Mode box that widens in ``n1`` with ``Im k2``.

    ``n1 ∈ ±(ceil(Im k2 / 2π) + n1_margin)``, ``n2 ∈ ±(τ₁/2π + n2_margin)``.
    At ``Im k2 = π/2 + ℓ`` with ``n1_margin = 3`` this is ``±(ℓ/2π + 4)``.
    """

    tau1: float
    n1_margin: int = 3
    n2_margin: int = 4
    n1_min_half: int = 0

    def basis_for(self, k2: complex) -> ModeBasis:
        h1 = max(int(math.ceil(max(complex(k2).imag, 0.0) / TWO_PI - 1e-9)) + self.n1_margin, self.n1_min_half)
        h2 = int(round(self.tau1 / TWO_PI)) + self.n2_margin
        return ModeBasis.symmetric(h1, h2)


def in_Z(z: complex, theta: float, delta: float) -> bool:
    """Membership in ``Z``: the vertical band about ``Re = π`` plus the thin
    horizontal strip ``θ < Re < π + δ``, ``|Im| < δ``."""
    z = complex(z)
    band = np.pi - delta < z.real < np.pi + delta
    strip = theta < z.real < np.pi + delta and abs(z.imag) < delta
    return bool(band or strip)


@dataclass
class PathSpec:
    """Polyline in the ``k2`` plane.

    ``base_re`` is the real part of the vertical ascent; lateral offsets
    shift every later waypoint with that real part.
    """

    waypoints: list
    theta: float
    delta: float
    max_step: float = 0.25
    monotone: bool = True

    def __post_init__(self):
        self.waypoints = [complex(w) for w in self.waypoints]
        if len(self.waypoints) < 2:
            raise ValueError("a path needs at least two waypoints")
        for w in self.waypoints:
            if not in_Z(w, self.theta, self.delta):
                raise PathExitsZ(f"waypoint {w} outside Z")
        if self.monotone:
            ims = [w.imag for w in self.waypoints]
            if any(b < a - 1e-15 for a, b in zip(ims, ims[1:])):
                raise ValueError("Im k2 must be nondecreasing along the path")
        if self.max_step <= 0:
            raise ValueError("max_step must be positive")


def auto_path(theta: float, delta: float, im_max: float, heights=(), max_step: Optional[float] = None, start=None) -> PathSpec:
    """Horizontal run from ``Γ(0)`` to ``Re = π`` then a vertical ascent.

    ``heights`` are inserted as waypoints so the tracker lands on them.
    """
    if max_step is None:
        max_step = min(0.25, delta)
    g0 = 0.5 * (np.pi + theta) if start is None else float(start)
    pts = [complex(g0, 0.0), complex(np.pi, 0.0)]
    for h in sorted(set(float(h) for h in heights if 0 < h < im_max)):
        pts.append(complex(np.pi, h))
    if im_max > 0:
        pts.append(complex(np.pi, im_max))
    return PathSpec(pts, theta, delta, max_step)


@dataclass
class TrackStep:
    step: int
    k2: complex
    records: list
    flags: str = ""
    accepted: bool = True


@dataclass
class Trajectory:
    """Result of :func:`track_poles`."""

    steps: list
    start: list
    final: list
    n_poles: int
    offsets: list = field(default_factory=list)

    @property
    def accepted(self) -> list:
        return [s for s in self.steps if s.accepted]

    @property
    def accepted_k2(self) -> list:
        return [s.k2 for s in self.accepted]

    def counts(self) -> list:
        return [len(s.records) for s in self.steps if not s.flags]

    def records_at(self, k2: complex, tol: float = 1e-12) -> list:
        for s in reversed(self.steps):
            if s.accepted and abs(s.k2 - complex(k2)) <= tol:
                return s.records
        raise KeyError(f"no accepted step at k2={k2}")

    def nearest_accepted(self, im: float):
        """Accepted step whose ``Im k2`` is closest to ``im`` (last among ties)."""
        best = None
        for s in self.steps:
            if s.accepted and (best is None or abs(s.k2.imag - im) <= abs(best.k2.imag - im)):
                best = s
        return best

    def rows(self) -> list:
        """Flat rows for the trajectory CSV."""
        out = []
        for s in self.steps:
            for r in s.records:
                out.append(
                    {
                        "step": s.step,
                        "re_k2": s.k2.real,
                        "im_k2": s.k2.imag,
                        "pole_index": r.index,
                        "re_k1": r.k1.real,
                        "im_k1": r.k1.imag,
                        "klass": r.klass,
                        "tail_mass": r.tail_mass,
                        "flags": s.flags,
                    }
                )
        return out


def _segment_min_distance(a0, a1, b0, b1) -> float:
    """Closest approach of two points moving linearly from ``*0`` to ``*1``."""
    d0 = complex(cyl_diff(a0, b0))
    dd = complex(cyl_diff(a1, a0)) - complex(cyl_diff(b1, b0))
    den = abs(dd) ** 2
    t = 0.0 if den == 0 else min(max(-(d0.real * dd.real + d0.imag * dd.imag) / den, 0.0), 1.0)
    return abs(d0 + t * dd)


def _branch_gap(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    """Smallest pair separation over a step, from squared gaps at its ends and midpoint.

    The squared gap of two poles is analytic through a square-root branch
    point, so its quadratic interpolant can vanish inside a step whose
    sampled gaps are all large.
    """
    n = len(a)
    if n < 2:
        return np.inf
    iu = np.triu_indices(n, 1)
    g0, g1, g2 = (cyl_diff(x[:, None], x[None, :])[iu] ** 2 for x in (a, b, c))
    # q(s) = α s² + β s + γ through s = 0, 1/2, 1
    alpha, beta, gamma = 2 * g0 - 4 * g1 + 2 * g2, -3 * g0 + 4 * g1 - g2, g0
    best = np.inf
    for q in zip(alpha, beta, gamma):
        scale = max(abs(c) for c in q)
        if scale < 1e-150:
            # |q| <= 3·scale on the step, so the gap is zero to working accuracy
            return 0.0
        q = np.array(q) / scale
        der = np.polyder(np.polymul(q, np.conj(q)).real)
        crit = []
        if der.size and np.abs(der).max() > 0:
            # drop negligible leading terms; their roots lie far outside [0, 1]
            der = der[np.argmax(np.abs(der) > 1e-14 * np.abs(der).max()) :]
            crit = [r.real for r in np.roots(der) if abs(r.imag) < 1e-12 and 0 < r.real < 1]
        best = min(best, scale * min(abs(np.polyval(q, t)) for t in [0.0, 1.0, *crit]))
    return float(np.sqrt(best))


def _match(pred: np.ndarray, new: np.ndarray):
    """Nearest-neighbour assignment; ``None`` when ambiguous or not a bijection."""
    if len(new) != len(pred):
        return None
    if len(pred) == 0:
        return []
    d = cyl_dist(pred[:, None], new[None, :])
    order = np.argsort(d, axis=1)
    perm = order[:, 0]
    if len(set(perm.tolist())) != len(perm):
        return None
    if len(new) > 1:
        d1 = d[np.arange(len(pred)), order[:, 0]]
        d2 = d[np.arange(len(pred)), order[:, 1]]
        if np.any(d2 < 2.0 * d1):
            return None
    return perm.tolist()


def track_poles(
    path: PathSpec,
    lam: float,
    medium: MediumSpec,
    policy: BasisPolicy,
    tau1: float,
    start_records: Sequence[PoleRecord],
    collision_tol: float = COLLISION_TOL,
    max_halvings: int = 12,
    allow_offset: bool = True,
) -> Trajectory:
    """Continue the poles along ``path`` by predictor plus nearest-neighbour matching.

    Each step recomputes the trusted pole set with :func:`pencil_eigs` at
    ``μ = λ``, predicts every tracked pole by linear extrapolation in ``k2``,
    and matches predictions to the new set in ``ℂ/2π``.  An ambiguous match
    (second-nearest within twice the nearest) or a change in the count halves
    the step.  A pole pair closer than ``collision_tol`` (also between
    samples, along the linear interpolant) flags ``ExceptionalProximity``; the
    step is rejected and the rest of the path is shifted sideways by ``δ/4``.
    A match that is still ambiguous at the finest step is flagged the same
    way when offsets are allowed.

    Raises
    ------
    TrackingLost
        Matching still fails after ``max_halvings`` halvings with offsets
        disabled.
    PathExitsZ
        A lateral offset would leave ``Z``.
    """
    theta, delta = path.theta, path.delta
    convs: dict = {}

    def records_at(k2):
        b = policy.basis_for(k2)
        key = (b.n1_min, b.n1_max, b.n2_min, b.n2_max)
        if key not in convs:
            convs[key] = convolution_matrix(medium, "eps0", b)
        return pencil_eigs(k2, lam, medium, b, tau1, convs[key])

    start = sorted(start_records, key=lambda r: r.index)
    n = len(start)
    cur = [r for r in start]
    k2 = path.waypoints[0]
    slopes = np.zeros(n, dtype=complex)
    targets = list(path.waypoints[1:])
    offset = 0.0
    steps = [TrackStep(0, k2, cur, "")]
    offsets: list = []
    h = path.max_step
    min_step = path.max_step / 2**max_halvings
    counter = 1
    # accepted states on the current segment, for rewinding before a detour
    segment = [(k2, cur, slopes, len(steps) - 1)]

    while targets:
        tgt = targets[0]
        gap = abs(tgt - k2)
        if gap < 1e-14:
            targets.pop(0)
            segment = [(k2, cur, slopes, len(steps) - 1)]
            continue
        hh = min(h, gap)
        k2_new = tgt if hh >= gap - 1e-14 else k2 + hh * (tgt - k2) / gap
        new = records_at(k2_new)
        old = np.array([r.k1 for r in cur])
        pred = old + slopes * (k2_new - k2)
        new_k1 = np.array([r.k1 for r in new])
        perm = _match(pred, new_k1)

        flagged = False
        if perm is not None and n > 1:
            moved = new_k1[perm]
            closest = np.inf
            for i in range(n):
                for j in range(i + 1, n):
                    closest = min(closest, _segment_min_distance(old[i], moved[i], old[j], moved[j]))
            flagged = closest < collision_tol
            if not flagged:
                mid_k1 = np.array([r.k1 for r in records_at(0.5 * (k2 + k2_new))])
                mid_perm = _match(old + 0.5 * cyl_diff(moved, old), mid_k1)
                if mid_perm is None:
                    perm = None
                else:
                    flagged = _branch_gap(old, mid_k1[mid_perm], moved) < collision_tol
        if perm is None and len(new) == n and n > 1:
            pair = cyl_dist(new_k1[:, None], new_k1[None, :])
            np.fill_diagonal(pair, np.inf)
            flagged = bool(pair.min() < collision_tol)
            # At the finest step an unresolved match signals square-root
            # branching nearby, which only a lateral detour can avoid.
            flagged = flagged or (hh / 2 < min_step and allow_offset)

        if flagged:
            labelled = [replace(r, index=-1) for r in new]
            steps.append(TrackStep(counter, k2_new, labelled, EXCEPTIONAL_PROXIMITY, accepted=False))
            counter += 1
            if not allow_offset:
                raise TrackingLost(f"exceptional proximity at k2={k2_new} with offsets disabled")
            # Turn sideways at least δ/4 before the flag so the detour keeps
            # clear of the branch point; steps given up are not accepted.
            back = next((e for e in reversed(segment) if abs(e[0] - k2) >= delta / 4), segment[0])
            k2, cur, slopes, kept = back
            for s in steps[kept + 1 :]:
                s.accepted = False
            segment = [back]
            direction = tgt - k2
            if abs(direction.imag) <= 1e-12 * abs(direction):
                sign = -1.0 if direction.real > 0 else 1.0
            else:
                sign = 1.0
            new_offset = offset + sign * delta / 4
            if not in_Z(complex(np.pi + new_offset, k2.imag), theta, delta) or abs(new_offset) >= delta:
                new_offset = offset - sign * delta / 4
                if not in_Z(complex(np.pi + new_offset, k2.imag), theta, delta) or abs(new_offset) >= delta:
                    raise PathExitsZ(f"lateral offset leaves Z at k2={k2}")
            shift = new_offset - offset
            offset = new_offset
            offsets.append((k2, offset))
            moved_targets = [t + shift if abs(t.real - (np.pi + offset - shift)) < 1e-12 else t for t in targets]
            lateral = complex(np.pi + offset, k2.imag)
            targets = [lateral] + [t for t in moved_targets if not (abs(t.imag - k2.imag) < 1e-14 and abs(t.real - lateral.real) < 1e-14)]
            log.info("collision near k2=%s; ascent moved to Re k2 = %.6f", k2_new, np.pi + offset)
            h = path.max_step
            continue

        if perm is None:
            h = hh / 2
            if h < min_step:
                raise TrackingLost(f"matching ambiguous at k2={k2_new} with step {hh:.3e}")
            continue

        nxt = [replace(new[perm[i]], klass=cur[i].klass, index=cur[i].index) for i in range(n)]
        new_arr = np.array([r.k1 for r in nxt])
        dk2 = k2_new - k2
        slopes = cyl_diff(new_arr, old) / dk2 if n else slopes
        cur = nxt
        k2 = k2_new
        steps.append(TrackStep(counter, k2, cur, ""))
        counter += 1
        segment.append((k2, cur, slopes, len(steps) - 1))
        h = min(path.max_step, 2 * hh)
        if abs(k2 - tgt) < 1e-14:
            targets.pop(0)
            segment = [segment[-1]]

    return Trajectory(steps, start, cur, n, offsets)


def replay_reverse(
    traj: Trajectory,
    lam: float,
    medium: MediumSpec,
    policy: BasisPolicy,
    tau1: float,
    theta: float,
    delta: float,
) -> tuple[Trajectory, float]:
    """Track back along the accepted points of ``traj``.

    Returns the backward trajectory and the largest ``ℂ/2π`` distance between
    a pole's start position and its position after the round trip.
    """
    pts = traj.accepted_k2[::-1]
    dedup = [pts[0]]
    for p in pts[1:]:
        if abs(p - dedup[-1]) > 1e-14:
            dedup.append(p)
    if len(dedup) < 2:
        return traj, 0.0
    longest = max(abs(b - a) for a, b in zip(dedup, dedup[1:]))
    path = PathSpec(dedup, theta, delta, max_step=longest * (1 + 1e-9), monotone=False)
    back = track_poles(path, lam, medium, policy, tau1, traj.final, allow_offset=False)
    by_index = {r.index: r for r in back.final}
    err = 0.0
    for r in traj.start:
        err = max(err, float(cyl_dist(by_index[r.index].k1, r.k1)))
    return back, err


def riesz_singular_values(
    contour: RectContour,
    k2: complex,
    mu: float,
    medium: MediumSpec,
    basis: ModeBasis,
    q_nodes: int = 64,
    raw_eigs: Optional[np.ndarray] = None,
    probe: int = 16,
    seed: int = 0,
    conv: Optional[np.ndarray] = None,
    min_distance: float = 1e-4,
) -> np.ndarray:
    """Singular values of the Riesz projector of ``W_μ(k2)`` for a contour.

    The projector ``P = (1/2πi)∮(k - W)^{-1} dk`` has low rank, so it is
    sketched: ``Y = PΩ`` for a Gaussian block ``Ω`` with ``probe`` columns,
    ``Q = orth(Y)``, and the singular values of ``Q^H P`` equal those of
    ``P`` whenever ``rank P ≤ probe``.  Resolvent actions use one LU of the
    ``N x N`` quadratic matrix per node.

    Raises
    ------
    EigOnContour
        If an eigenvalue of ``W_μ(k2)`` lies within ``min_distance`` of the
        contour.
    """
    if conv is None:
        conv = convolution_matrix(medium, "eps0", basis)
    if raw_eigs is None:
        raw_eigs = sla.eigvals(companion_matrix(k2, mu, basis, conv), overwrite_a=True, check_finite=False)
    dmin = min((contour.distance_to_boundary(complex(z)) for z in raw_eigs), default=np.inf)
    if dmin < min_distance:
        raise EigOnContour(f"eigenvalue within {dmin:.3e} of contour {contour}")

    n = basis.size
    nodes = gamma_contour_points(contour, q_nodes)
    weights = polyline_weights(nodes) / (2j * np.pi)
    bdiag = -2.0 * basis.m1
    base = np.diag(basis.m1**2 + (basis.m2 + k2) ** 2) - mu * conv
    rng = np.random.default_rng(seed)
    omega = rng.standard_normal((2 * n, probe)) + 1j * rng.standard_normal((2 * n, probe))

    cache_ok = len(nodes) * n * n * 16 <= 64 * 2**20
    lus = []

    def lu_at(j, z):
        if cache_ok and j < len(lus):
            return lus[j]
        lu = sla.lu_factor(base + np.diag(z * z - z * bdiag), check_finite=False)
        if cache_ok:
            lus.append(lu)
        return lu

    # Resolvent (k - W)^{-1}[f; g] = [x; -f + k x] with x = Q(k)^{-1}(g - (B - k) f).
    y = np.zeros((2 * n, probe), dtype=complex)
    f, g = omega[:n], omega[n:]
    for j, (z, w) in enumerate(zip(nodes, weights)):
        x = sla.lu_solve(lu_at(j, z), g - (bdiag - z)[:, None] * f, check_finite=False)
        y[:n] += w * x
        y[n:] += w * (-f + z * x)
    q, _ = np.linalg.qr(y)

    # Adjoint: (k - W)^{-H}[a; b] = [-(B - conj k) t - b; t], t = Q(k)^{-H}(a + conj(k) b).
    zh = np.zeros((2 * n, q.shape[1]), dtype=complex)
    a, b = q[:n], q[n:]
    for j, (z, w) in enumerate(zip(nodes, weights)):
        t = sla.lu_solve(lu_at(j, z), a + np.conj(z) * b, trans=2, check_finite=False)
        zh[:n] += np.conj(w) * (-(bdiag - np.conj(z))[:, None] * t - b)
        zh[n:] += np.conj(w) * t
    return sla.svdvals(zh.conj().T)


def riesz_rank(
    contour: RectContour,
    k2: complex,
    mu: float,
    medium: MediumSpec,
    basis: ModeBasis,
    q_nodes: int = 64,
    raw_eigs: Optional[np.ndarray] = None,
    conv: Optional[np.ndarray] = None,
) -> int:
    """Number of singular values of the Riesz projector above 0.5."""
    s = riesz_singular_values(contour, k2, mu, medium, basis, q_nodes, raw_eigs, conv=conv)
    return int(np.sum(s > 0.5))
