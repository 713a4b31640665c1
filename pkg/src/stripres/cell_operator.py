"""Truncated cell operators ``-Δ_k - λε₀`` and the resolvents built from them.

Matrices live in a :class:`~stripres.medium.ModeBasis`.  Two flavours of the
modulated resolvent ``H(k1, k2) r = e^{ik1x1} T(k1, k2)[e^{-ik1·} r]`` are
provided:

* :func:`h_apply` acts on one coefficient vector and performs the
  modulations on a sampling grid, with an aliasing budget;
* :class:`HMatrixBuilder` materializes ``H`` as a matrix using the exact
  L² projection of the modulated modes, a fully coupled core window and a
  diagonal constant-medium tail.  This keeps ``H`` 2π-periodic in ``k1`` to
  rounding level, which the contour quadratures in :mod:`stripres.a_family`
  rely on.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import AliasingBudgetExceeded, NotInvertible
from .medium import ModeBasis, MediumSpec, convolution_matrix, fourier_coefficient
from .symbol import CPoint2

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
INVERTIBILITY_RTOL = 1e-8
ALIASING_BUDGET = 0.01

__all__ = [
    "CellMatrix",
    "SpectralReport",
    "symbol_diagonal",
    "assemble_shifted",
    "spectral_report",
    "solve_refined",
    "resolvent_apply",
    "modulate_grid",
    "h_apply",
    "band_eigs",
    "sigma_min_scan",
    "modulation_matrix",
    "HMatrixBuilder",
]


@dataclass(frozen=True)
class CellMatrix:
    """Dense matrix in a mode basis plus provenance."""

    basis: ModeBasis
    entries: np.ndarray
    k: Optional[CPoint2] = None
    lam: Optional[float] = None
    kind: str = "shifted_laplacian"

    def __post_init__(self):
        n = self.basis.size
        if self.entries.shape != (n, n):
            raise ValueError(f"entries shape {self.entries.shape} does not match basis size {n}")
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("matrix entries must be finite")


@dataclass(frozen=True)
class SpectralReport:
    """Smallest singular value, inverse norm and the invertibility verdict."""

    sigma_min: float
    inv_norm: float
    invertible: bool
    norm: float = field(default=float("nan"))


def symbol_diagonal(basis: ModeBasis, k1: complex, k2: complex) -> np.ndarray:
    """Values ``s(m, k)`` over the basis in enumeration order."""
    return (basis.m1 + k1) ** 2 + (basis.m2 + k2) ** 2


def assemble_shifted(
    k: CPoint2,
    lam: float,
    medium: MediumSpec,
    basis: ModeBasis,
    conv: Optional[np.ndarray] = None,
) -> CellMatrix:
    """Matrix of ``-Δ_k - λε₀``: ``diag(s(m, k)) - λ·Conv(ε̂₀)``.

    ``conv`` may carry a precomputed ``convolution_matrix(medium, 'eps0',
    basis)`` to avoid recomputation inside scans.
    """
    if conv is None:
        conv = convolution_matrix(medium, "eps0", basis)
    entries = np.diag(symbol_diagonal(basis, k.k1, k.k2)) - lam * conv
    return CellMatrix(basis, entries, k, lam, "shifted_laplacian")


def spectral_report(matrix: np.ndarray | CellMatrix, rtol: float = INVERTIBILITY_RTOL) -> SpectralReport:
    """Invertibility verdict ``σ_min > rtol·‖M‖₂``."""
    a = matrix.entries if isinstance(matrix, CellMatrix) else np.asarray(matrix)
    s = sla.svdvals(a, check_finite=False)
    smin, smax = float(s[-1]), float(s[0])
    invertible = smin > rtol * smax
    inv_norm = 1.0 / smin if smin > 0 else float("inf")
    return SpectralReport(smin, inv_norm, bool(invertible), smax)


def solve_refined(a: np.ndarray, b: np.ndarray, lu=None, steps: int = 2) -> np.ndarray:
    """LU solve followed by a few rounds of iterative refinement."""
    if lu is None:
        lu = sla.lu_factor(a, check_finite=False)
    x = sla.lu_solve(lu, b, check_finite=False)
    for _ in range(steps):
        r = b - a @ x
        x = x + sla.lu_solve(lu, r, check_finite=False)
    return x


def resolvent_apply(
    k: CPoint2,
    lam: float,
    medium: MediumSpec,
    basis: ModeBasis,
    f: np.ndarray,
    conv: Optional[np.ndarray] = None,
) -> np.ndarray:
    """``T(k) f = (1/2π)(-Δ_k - λε₀)^{-1} f`` on coefficient vectors.

    Raises
    ------
    NotInvertible
        If ``σ_min ≤ 1e-8·‖M‖₂``, i.e. ``k1`` sits at or next to a pole.
    """
    cm = assemble_shifted(k, lam, medium, basis, conv)
    rep = spectral_report(cm)
    if not rep.invertible:
        raise NotInvertible(
            f"cell matrix singular at k={k}: sigma_min={rep.sigma_min:.3e}, norm={rep.norm:.3e}",
            rep.sigma_min,
            rep.norm,
        )
    x = solve_refined(cm.entries, np.asarray(f, dtype=complex))
    return x / TWO_PI


def _grid_size(basis: ModeBasis, factor: int) -> int:
    extent = 2 * max(abs(basis.n1_min), abs(basis.n1_max)) + 1
    g = factor * extent
    return g + (g % 2)


def modulate_grid(
    coeffs: np.ndarray,
    basis: ModeBasis,
    c: complex,
    grid_factor: int = 2,
) -> tuple[np.ndarray, float]:
    """Multiply the function with coefficients ``coeffs`` by ``e^{i c x1}``.

    The product is formed on a uniform grid in ``x1`` and transformed back;
    the result is projected onto ``basis``.  Modulation does not touch
    ``x2``, so only the ``x1`` direction is sampled.

    Returns
    -------
    projected : ndarray
        Coefficients on ``basis``.
    tail : float
        ``‖discarded part‖ / ‖modulated function‖`` on the grid.
    """
    g = _grid_size(basis, grid_factor)
    a = np.asarray(coeffs, dtype=complex).reshape(basis.N1, basis.N2)
    spec = np.zeros((g, basis.N2), dtype=complex)
    spec[np.mod(basis.n1_range, g), :] = a
    values = np.fft.ifft(spec, axis=0) * g
    x = np.arange(g) / g
    values *= np.exp(1j * c * x)[:, None]
    full = np.fft.fft(values, axis=0) / g
    kept = full[np.mod(basis.n1_range, g), :]
    total = np.linalg.norm(full)
    tail = float(np.sqrt(max(total**2 - np.linalg.norm(kept) ** 2, 0.0)) / total) if total > 0 else 0.0
    return kept.reshape(-1), tail


def h_apply(
    k1: complex,
    k2: complex,
    lam: float,
    medium: MediumSpec,
    basis_big: ModeBasis,
    f: np.ndarray,
    grid_factor: int = 2,
    aliasing_budget: float = ALIASING_BUDGET,
    conv: Optional[np.ndarray] = None,
) -> np.ndarray:
    """``H(k1, k2) f = e^{ik1x1} T(k1, k2)[e^{-ik1·} f]`` with grid modulations.

    Raises
    ------
    AliasingBudgetExceeded
        If either modulation discards more than ``aliasing_budget`` of the
        norm of the modulated function.
    NotInvertible
        As in :func:`resolvent_apply`.
    """
    f = np.asarray(f, dtype=complex)
    if not np.any(f):
        return np.zeros_like(f)
    v, tail_in = modulate_grid(f, basis_big, -k1, grid_factor)
    if tail_in > aliasing_budget:
        raise AliasingBudgetExceeded(f"input modulation tail {tail_in:.3e} exceeds budget", tail_in)
    u = resolvent_apply(CPoint2(k1, k2), lam, medium, basis_big, v, conv)
    w, tail_out = modulate_grid(u, basis_big, k1, grid_factor)
    if tail_out > aliasing_budget:
        raise AliasingBudgetExceeded(f"output modulation tail {tail_out:.3e} exceeds budget", tail_out)
    return w


def band_eigs(k, medium: MediumSpec, basis: ModeBasis, count: int) -> np.ndarray:
    """Lowest ``count`` eigenvalues of ``-Δ_k u = λ ε₀ u`` for real ``k``."""
    k1, k2 = float(np.real(k[0])), float(np.real(k[1]))
    count = min(int(count), basis.size)
    lhs = np.diag(np.real(symbol_diagonal(basis, k1, k2)))
    rhs = convolution_matrix(medium, "eps0", basis)
    w = sla.eigh(lhs, rhs, eigvals_only=True, subset_by_index=[0, count - 1])
    return np.sort(w)


def sigma_min_scan(
    height: float,
    k2: complex,
    lam: float,
    medium: MediumSpec,
    basis: ModeBasis,
    samples: int = 32,
) -> float:
    """Minimum ``σ_min`` of the cell matrix along ``k1 ∈ [-π, π] + i·height``."""
    if samples < 16:
        raise ValueError("samples must be at least 16")
    conv = convolution_matrix(medium, "eps0", basis)
    best = np.inf
    for x in np.linspace(-np.pi, np.pi, samples):
        m = assemble_shifted(CPoint2(x + 1j * height, k2), lam, medium, basis, conv)
        best = min(best, float(sla.svdvals(m.entries, check_finite=False)[-1]))
    return best


def modulation_matrix(c: complex, n_in: np.ndarray, n_out: np.ndarray) -> np.ndarray:
    """Exact L² coefficients of ``e^{icx1} e^{2πi n x1}`` on modes ``n_out``.

    Entry ``[p, n] = ∫_0^1 e^{i(c + 2π(n - p))x} dx``.
    """
    w = c + TWO_PI * (np.asarray(n_in)[None, :] - np.asarray(n_out)[:, None])
    out = np.ones(w.shape, dtype=complex)
    nz = np.abs(w) > 1e-12
    out[nz] = np.expm1(1j * w[nz]) / (1j * w[nz])
    return out


class HMatrixBuilder:
    """Matrices of ``H(k1, k2)`` on an output basis for a fixed ``k2``.

    The resolvent is solved on a coupled ``core`` basis that contains the
    output basis and shares its ``n2`` range.  Modes further out in ``n1``
    (``tail_extent`` shells on each side) are treated as a diagonal constant
    medium with the cell mean of ``ε₀``.  For a constant medium the tail is
    exact.

    Parameters
    ----------
    k2 : complex
    lam : float
    medium : MediumSpec
    out_basis : ModeBasis
    core_basis : ModeBasis, optional
        Defaults to ``out_basis``.
    tail_extent : int
        Number of extra ``n1`` shells on each side of the core.
    """

    def __init__(
        self,
        k2: complex,
        lam: float,
        medium: MediumSpec,
        out_basis: ModeBasis,
        core_basis: Optional[ModeBasis] = None,
        tail_extent: int = 2000,
    ):
        core_basis = out_basis if core_basis is None else core_basis
        if (core_basis.n2_min, core_basis.n2_max) != (out_basis.n2_min, out_basis.n2_max):
            raise ValueError("core and output bases must share the n2 range")
        if not core_basis.contains(out_basis):
            raise ValueError("core basis must contain the output basis")
        self.k2 = complex(k2)
        self.lam = float(lam)
        self.medium = medium
        self.out = out_basis
        self.core = core_basis
        self.conv = convolution_matrix(medium, "eps0", core_basis)
        self.eps_mean = fourier_coefficient(medium, "eps0", (0.0, 0.0)).real
        lo = np.arange(core_basis.n1_min - tail_extent, core_basis.n1_min)
        hi = np.arange(core_basis.n1_max + 1, core_basis.n1_max + 1 + tail_extent)
        self.tail_n1 = np.concatenate([lo, hi])
        self._eye2 = np.eye(out_basis.N2)

    def shifted(self, k1: complex) -> np.ndarray:
        return np.diag(symbol_diagonal(self.core, k1, self.k2)) - self.lam * self.conv

    def matrix(self, k1: complex) -> np.ndarray:
        """``H(k1, k2)`` as an ``N_out × N_out`` matrix."""
        out, core = self.out, self.core
        g_in = modulation_matrix(-k1, out.n1_range, core.n1_range)
        g_out = modulation_matrix(k1, core.n1_range, out.n1_range)
        rhs = np.kron(g_in, self._eye2)
        sol = solve_refined(self.shifted(k1), rhs, steps=1)
        h = np.kron(g_out, self._eye2) @ sol
        if self.tail_n1.size:
            t_in = modulation_matrix(-k1, out.n1_range, self.tail_n1)
            t_out = modulation_matrix(k1, self.tail_n1, out.n1_range)
            q2 = out.n2_range
            d = (TWO_PI * self.tail_n1[None, :] + k1) ** 2 + (TWO_PI * q2[:, None] + self.k2) ** 2
            d = d - self.lam * self.eps_mean
            blocks = np.matmul(t_out[None, :, :] / d[:, None, :], t_in[None, :, :])
            h4 = h.reshape(out.N1, out.N2, out.N1, out.N2)
            idx = np.arange(out.N2)
            h4[:, idx, :, idx] += blocks
        return h / TWO_PI
