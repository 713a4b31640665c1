"""The operator family ``A(k2)`` and the Fredholm equation built on it.

``A(k2) r = ∫_{[-π, π] + iδ₀} H(k1, k2) r dk1`` for real ``k2``; after
pushing the line up to ``Im k1 = τ₁`` the same operator is the line integral
there plus ``2πi`` times the residues of ``H`` at the upward poles, and that
form continues analytically along the path.  Matrices act on a
:class:`~stripres.medium.ModeBasis` and are materialized column-block-wise
from :class:`~stripres.cell_operator.HMatrixBuilder`.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .cell_operator import HMatrixBuilder
from .errors import PoleOnContour, PoleTooClose, QuadratureNotConverged
from .medium import MediumSpec, ModeBasis, convolution_matrix
from .pole_tracker import PoleRecord, cyl_dist

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
R_MIN = 1e-3
R_CAP = 0.3
QUAD_RTOL = 1e-7

__all__ = [
    "AFamily",
    "FredholmReport",
    "DecayTable",
    "default_core",
    "assemble_A_direct",
    "assemble_A_deformed",
    "residue_radius",
    "a_decay_sweep",
    "fredholm_scan",
    "fredholm_report",
    "cauchy_center_check",
    "decay_slope",
]


@dataclass
class AFamily:
    """Assembled ``A(k2)`` with its pieces and quadrature provenance."""

    k2: complex
    matrix: np.ndarray
    basis: ModeBasis
    tau1: Optional[float]
    delta0: Optional[float]
    line_contrib: np.ndarray
    residue_contribs: list = field(default_factory=list)
    q_line: int = 64
    q_circle: int = 0
    norm2: float = 0.0
    kind: str = "direct"

    def __post_init__(self):
        if not self.norm2:
            self.norm2 = float(sla.svdvals(self.matrix, check_finite=False)[0])


@dataclass(frozen=True)
class FredholmReport:
    k2: complex
    sigma_min_IlAe: float
    neumann_bound: float
    conclusion: str


def default_core(medium: MediumSpec, basis: ModeBasis, core_pad: int = 25) -> ModeBasis:
    """Core window for the coupled solve.

    A constant medium needs no padding: the diagonal tail is then exact.
    """
    if medium.is_free or core_pad <= 0:
        return basis
    return ModeBasis(basis.n1_min - core_pad, basis.n1_max + core_pad, basis.n2_min, basis.n2_max)


def _ordered_sum(fn: Callable, items: Sequence, weights: Sequence, threads: int = 1) -> np.ndarray:
    """``Σ w_j fn(item_j)`` with a fixed summation order."""
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            mats = list(pool.map(fn, items))
        acc = None
        for w, m in zip(weights, mats):
            acc = w * m if acc is None else acc + w * m
        return acc
    acc = None
    for item, w in zip(items, weights):
        m = fn(item)
        acc = w * m if acc is None else acc + w * m
    return acc


def _line(builder: HMatrixBuilder, height: float, q: int, check: bool, threads: int) -> tuple[np.ndarray, float]:
    """Trapezoid over ``[-π, π) + i·height``; with ``check`` also the ``2q`` rule."""
    if not check:
        nodes = -np.pi + TWO_PI * np.arange(q) / q + 1j * height
        return _ordered_sum(builder.matrix, nodes, [TWO_PI / q] * q, threads), 0.0
    nodes = -np.pi + TWO_PI * np.arange(2 * q) / (2 * q) + 1j * height
    even = _ordered_sum(builder.matrix, nodes[0::2], [TWO_PI / q] * q, threads)
    odd = _ordered_sum(builder.matrix, nodes[1::2], [TWO_PI / q] * q, threads)
    fine = 0.5 * (even + odd)
    rel = float(np.linalg.norm(fine - even, 2) / max(np.linalg.norm(fine, 2), 1e-300))
    return fine, rel


def _circle(builder: HMatrixBuilder, center: complex, radius: float, q: int, check: bool, threads: int):
    """``(1/2πi)∮ H dk1`` on a circle; trapezoid in the angle."""
    def rule(qq, phase=0.0):
        t = TWO_PI * (np.arange(qq) + phase) / qq
        z = center + radius * np.exp(1j * t)
        w = radius * np.exp(1j * t) / qq
        return _ordered_sum(builder.matrix, z, w, threads)

    if not check:
        return rule(q), 0.0
    coarse = rule(q)
    fine = 0.5 * (coarse + rule(q, 0.5))
    rel = float(np.linalg.norm(fine - coarse, 2) / max(np.linalg.norm(fine, 2), 1e-300))
    return fine, rel


def assemble_A_direct(
    k2: complex,
    lam: float,
    medium: MediumSpec,
    basis: ModeBasis,
    delta0: float,
    q_line: int = 64,
    poles: Optional[Sequence[PoleRecord]] = None,
    core_basis: Optional[ModeBasis] = None,
    tail_extent: int = 2000,
    check_convergence: bool = False,
    threads: int = 1,
) -> AFamily:
    """``A(k2)`` by the trapezoid rule on ``[-π, π] + iδ₀``.

    Raises
    ------
    PoleOnContour
        A supplied pole lies within ``1e-4`` of the line.
    QuadratureNotConverged
        With ``check_convergence``, doubling ``q_line`` moved the matrix by
        more than ``1e-7`` relative.
    """
    for p in poles or ():
        if abs(p.k1.imag - delta0) < 1e-4:
            raise PoleOnContour(f"pole {p.k1} within 1e-4 of Im k1 = {delta0}")
    core = default_core(medium, basis) if core_basis is None else core_basis
    builder = HMatrixBuilder(k2, lam, medium, basis, core, tail_extent)
    mat, rel = _line(builder, delta0, q_line, check_convergence, threads)
    if check_convergence and rel > QUAD_RTOL:
        raise QuadratureNotConverged(f"line quadrature changed by {rel:.3e} on doubling", rel)
    return AFamily(complex(k2), mat, basis, None, delta0, mat, [], q_line, 0, kind="direct")


def residue_radius(pole: PoleRecord, others: Sequence[PoleRecord]) -> float:
    """``min(0.45·(distance to the nearest other pole), 0.3)`` in ``ℂ/2π``."""
    d = [float(cyl_dist(pole.k1, o.k1)) for o in others if o is not pole and cyl_dist(pole.k1, o.k1) > 1e-9]
    nearest = min(d) if d else np.inf
    return min(0.45 * nearest, R_CAP)


def assemble_A_deformed(
    k2: complex,
    lam: float,
    medium: MediumSpec,
    basis: ModeBasis,
    poles: Sequence[PoleRecord],
    tau1: float,
    q_line: int = 64,
    q_circle: int = 32,
    all_poles: Optional[Sequence[PoleRecord]] = None,
    core_basis: Optional[ModeBasis] = None,
    tail_extent: int = 2000,
    check_convergence: bool = False,
    threads: int = 1,
) -> AFamily:
    """``A(k2)`` as the line integral at ``Im k1 = τ₁`` plus ``2πi Σ Res``.

    Parameters
    ----------
    poles : sequence of PoleRecord
        The upward poles ``q⁺`` whose residues are added.
    all_poles : sequence of PoleRecord, optional
        Every pole in ``D``, used for the isolation radius.  Defaults to
        ``poles``.

    Raises
    ------
    PoleTooClose
        A residue radius fell below ``1e-3``.
    QuadratureNotConverged
        With ``check_convergence``, doubling moved a piece by more than
        ``1e-7`` relative.
    """
    core = default_core(medium, basis) if core_basis is None else core_basis
    builder = HMatrixBuilder(k2, lam, medium, basis, core, tail_extent)
    others = list(all_poles) if all_poles is not None else list(poles)
    line, rel = _line(builder, tau1, q_line, check_convergence, threads)
    if check_convergence and rel > QUAD_RTOL:
        raise QuadratureNotConverged(f"line quadrature changed by {rel:.3e} on doubling", rel)
    contribs = []
    total = line.copy()
    for p in poles:
        r = residue_radius(p, others)
        if r < R_MIN:
            raise PoleTooClose(f"residue radius {r:.3e} below {R_MIN} at pole {p.k1}")
        res, rel = _circle(builder, p.k1, r, q_circle, check_convergence, threads)
        if check_convergence and rel > QUAD_RTOL:
            raise QuadratureNotConverged(f"residue quadrature changed by {rel:.3e} on doubling", rel)
        piece = 2j * np.pi * res
        contribs.append((p.index, piece))
        total = total + piece
    return AFamily(complex(k2), total, basis, tau1, None, line, contribs, q_line, q_circle, kind="deformed")


def decay_slope(ells: Sequence[float], norms: Sequence[float]) -> float:
    """Least-squares slope of ``log‖A‖`` against ``log ℓ``."""
    return float(np.polyfit(np.log(np.asarray(ells, float)), np.log(np.asarray(norms, float)), 1)[0])


@dataclass
class DecayTable:
    ells: list
    re_k2: float
    norms: list
    neumann: list
    slope_fit: float
    families: list = field(default_factory=list, repr=False)

    @property
    def c_empirical(self) -> float:
        return float(max(l * n for l, n in zip(self.ells, self.norms)))

    def bounded_ratio(self) -> float:
        """``max ℓ‖A‖`` over the sweep divided by ``min ℓ‖A‖`` over its top half."""
        prod = [l * n for l, n in zip(self.ells, self.norms)]
        top = prod[len(prod) // 2 :]
        return float(max(prod) / min(top))

    def rows(self) -> list:
        return [
            {"ell": l, "re_k2": self.re_k2, "norm2": n, "neumann_bound": b}
            for l, n, b in zip(self.ells, self.norms, self.neumann)
        ]


def eps1_norm(medium: MediumSpec, basis: ModeBasis) -> float:
    return float(sla.svdvals(convolution_matrix(medium, "eps1", basis), check_finite=False)[0])


def a_decay_sweep(
    re_k2: float,
    ells: Sequence[float],
    lam: float,
    medium: MediumSpec,
    basis_policy,
    tau1: float,
    qplus_provider: Callable,
    q_line: int = 64,
    q_circle: int = 32,
    core_pad: int = 25,
    tail_extent: int = 2000,
    threads: int = 1,
) -> DecayTable:
    """``‖A(re_k2 + i(π/2 + ℓ))‖₂`` over ascending ``ℓ`` with a slope fit.

    ``qplus_provider(k2, basis)`` returns ``(qplus, all_poles)`` at each
    height; the pipeline supplies tracked poles.
    """
    ells = [float(e) for e in ells]
    if any(b <= a for a, b in zip(ells, ells[1:])):
        raise ValueError("ells must be strictly ascending")
    norms, neumann, fams = [], [], []
    for ell in ells:
        k2 = complex(re_k2, np.pi / 2 + ell)
        basis = basis_policy.basis_for(k2)
        qplus, allp = qplus_provider(k2, basis)
        core = default_core(medium, basis, core_pad)
        fam = assemble_A_deformed(
            k2, lam, medium, basis, qplus, tau1, q_line, q_circle, allp, core, tail_extent, threads=threads
        )
        fams.append(fam)
        norms.append(fam.norm2)
        neumann.append(abs(lam) * fam.norm2 * eps1_norm(medium, basis))
        log.info("ell=%.4f |A|=%.6e", ell, fam.norm2)
    slope = decay_slope(ells, norms) if len(ells) >= 2 else float("nan")
    return DecayTable(ells, float(re_k2), norms, neumann, slope, fams)


def fredholm_report(fam: AFamily, lam: float, medium: MediumSpec, near_singular_rtol: float = 1e-6) -> FredholmReport:
    """``σ_min(I - λ A Conv(ε̂₁))`` with the Neumann certificate."""
    e1 = convolution_matrix(medium, "eps1", fam.basis)
    n = fam.basis.size
    m = np.eye(n) - lam * fam.matrix @ e1
    s = sla.svdvals(m, check_finite=False)
    smin = float(s[-1])
    bound = abs(lam) * fam.norm2 * float(sla.svdvals(e1, check_finite=False)[0])
    if bound < 1:
        verdict = "definitely_invertible"
    elif smin > near_singular_rtol * float(s[0]):
        verdict = "numerically_invertible"
    else:
        verdict = "near_singular"
    return FredholmReport(fam.k2, smin, bound, verdict)


def fredholm_scan(families: Sequence[AFamily], lam: float, medium: MediumSpec) -> list:
    """One :class:`FredholmReport` per assembled sample."""
    return [fredholm_report(f, lam, medium) for f in families]


def cauchy_center_check(assemble: Callable, center: complex, radius: float, nodes: int = 32) -> float:
    """Relative gap between ``A(center)`` and its Cauchy integral over a circle."""
    t = TWO_PI * np.arange(nodes) / nodes
    acc = None
    for tt in t:
        m = assemble(center + radius * np.exp(1j * tt))
        acc = m / nodes if acc is None else acc + m / nodes
    mid = assemble(center)
    return float(np.linalg.norm(acc - mid, 2) / np.linalg.norm(mid, 2))
