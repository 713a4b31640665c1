"""Discrete Floquet-Bloch transforms and the supercell strip-resolvent check.

A :class:`GridFunction` samples a function on ``L1 x L2`` unit cells with
``g1 x g2`` points per cell.  The forward transform along one axis splits it
into ``L`` cell functions indexed by the dual nodes ``k = 2πj/L``.  The
transform is unitary for the discrete inner product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .cell_operator import INVERTIBILITY_RTOL, resolvent_apply
from .errors import NotInvertible
from .medium import MediumSpec, ModeBasis, fourier_coefficients
from .symbol import CPoint2

TWO_PI = 2.0 * np.pi

__all__ = [
    "GridFunction",
    "FloquetField",
    "floquet_forward",
    "floquet_inverse",
    "inner",
    "grid_to_coeffs",
    "coeffs_to_grid",
    "strip_resolvent_check",
    "StripCheck",
]


@dataclass
class GridFunction:
    """Samples on a uniform grid covering ``cells[0] x cells[1]`` unit cells."""

    values: np.ndarray
    g1: int
    g2: int
    cells: tuple = (1, 1)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.g1 < 4 or self.g2 < 4:
            raise ValueError("g1 and g2 must be at least 4")
        expect = (self.cells[0] * self.g1, self.cells[1] * self.g2)
        if self.values.shape != expect:
            raise ValueError(f"values shape {self.values.shape} != {expect}")

    def norm(self) -> float:
        return float(np.sqrt(inner(self, self).real))


def inner(f: GridFunction, g: GridFunction) -> complex:
    """Discrete L² inner product with cell measure ``1 / (g1 g2)`` per point."""
    return complex(np.vdot(g.values, f.values) / (f.g1 * f.g2))


@dataclass
class FloquetField:
    """Cell functions at the dual nodes ``k_j = 2πj/L`` along one axis."""

    direction: str
    ks: np.ndarray
    slices: np.ndarray  # shape (L, cell rows, cell cols)
    g1: int
    g2: int
    other_cells: int = 1

    def slice(self, j: int) -> GridFunction:
        cells = (1, self.other_cells) if self.direction == "x1" else (self.other_cells, 1)
        return GridFunction(self.slices[j], self.g1, self.g2, cells)


def _axis(direction: str) -> int:
    if direction not in ("x1", "x2"):
        raise ValueError(f"direction must be 'x1' or 'x2', got {direction!r}")
    return 0 if direction == "x1" else 1


def floquet_forward(direction: str, f: GridFunction) -> FloquetField:
    """Slice ``j``: ``(1/√L) Σ_n e^{ik_j(n - x)} f(x - n)`` on one cell."""
    ax = _axis(direction)
    L = f.cells[ax]
    g = f.g1 if ax == 0 else f.g2
    v = np.moveaxis(f.values, ax, 0).reshape(L, g, -1)
    ks = TWO_PI * np.arange(L) / L
    x = np.arange(g) / g
    # Cell c holds f(x - n) with n ≡ -c, so the sum is a DFT over cells.
    s = np.fft.fft(v, axis=0) / np.sqrt(L)
    s *= np.exp(-1j * np.outer(ks, x))[:, :, None]
    s = np.moveaxis(s.reshape((L, g) + np.moveaxis(f.values, ax, 0).shape[1:]), 1, ax + 1)
    return FloquetField(direction, ks, s, f.g1, f.g2, f.cells[1 - ax])


def floquet_inverse(field: FloquetField) -> GridFunction:
    """Inverse of :func:`floquet_forward`."""
    ax = _axis(field.direction)
    L = len(field.ks)
    g = field.g1 if ax == 0 else field.g2
    s = np.moveaxis(field.slices, ax + 1, 1)
    rest = s.shape[2:]
    s = s.reshape(L, g, -1)
    x = np.arange(g) / g
    s = s * np.exp(1j * np.outer(field.ks, x))[:, :, None]
    v = np.fft.ifft(s, axis=0) * np.sqrt(L)
    v = v.reshape((L * g,) + rest)
    values = np.moveaxis(v, 0, ax)
    cells = (L, field.other_cells) if ax == 0 else (field.other_cells, L)
    return GridFunction(values, field.g1, field.g2, cells)


def grid_to_coeffs(values: np.ndarray, n1: np.ndarray, n2: np.ndarray) -> np.ndarray:
    """Discrete Fourier coefficients of grid samples at integer modes."""
    G1, G2 = values.shape
    spec = np.fft.fft2(values) / (G1 * G2)
    return spec[np.mod(n1, G1), np.mod(n2, G2)]


def coeffs_to_grid(coeffs: np.ndarray, n1: np.ndarray, n2: np.ndarray, shape: tuple) -> np.ndarray:
    """Samples of ``Σ c·e^{2πi(n1 x1 + n2 x2)}`` at ``x = (j1/G1, j2/G2)``.

    Inverse of :func:`grid_to_coeffs` when the modes fit in the grid.
    """
    G1, G2 = shape
    spec = np.zeros(shape, dtype=complex)
    np.add.at(spec, (np.mod(n1, G1), np.mod(n2, G2)), coeffs)
    return np.fft.ifft2(spec) * (G1 * G2)


@dataclass
class StripCheck:
    lhs: np.ndarray
    rhs: np.ndarray
    rel_err: float


def _supercell_conv(medium: MediumSpec, n1: np.ndarray, n2: np.ndarray, L: int) -> np.ndarray:
    d1 = np.subtract.outer(n1, n1)
    d2 = np.subtract.outer(n2, n2)
    coupled = (d1 % L) == 0
    c = fourier_coefficients(medium, "eps0", TWO_PI * (d1 // L), TWO_PI * d2)
    return np.where(coupled, c, 0.0)


def strip_resolvent_check(
    k2: float,
    lam: float,
    medium: MediumSpec,
    basis: ModeBasis,
    L: int,
    f: GridFunction,
) -> StripCheck:
    """Compare a supercell solve with the quasimomentum integral of ``T``.

    ``lhs`` solves ``(-Δ_{k2} - λε₀) u = f`` on an ``L``-cell periodic
    supercell in ``x1`` (Fourier-Galerkin over ``L`` times the ``n1`` range)
    with ``f`` placed in the centre cell, and restricts ``u`` to that cell.
    ``rhs`` evaluates ``(2π/L) Σ_j e^{ik_j x1} (T(k_j, k2)[e^{-ik_j·} f])(x)``
    at the dual nodes ``k_j = 2πj/L`` with grid modulations.  Both are
    returned as grid samples on one cell.
    """
    if f.cells != (1, 1):
        raise ValueError("f must be sampled on a single cell")
    g1, g2 = f.g1, f.g2
    if g1 < 2 * basis.N1 or g2 < 2 * basis.N2:
        raise ValueError("cell grid must be at least twice the basis extent")
    x1 = np.arange(g1) / g1
    n1c, n2c = basis.n1, basis.n2

    # Quadrature side: one cell problem per dual node.
    rhs = np.zeros((g1, g2), dtype=complex)
    for j in range(L):
        kj = TWO_PI * j / L
        mod = f.values * np.exp(-1j * kj * x1)[:, None]
        v = grid_to_coeffs(mod, n1c, n2c)
        u = resolvent_apply(CPoint2(kj, k2), lam, medium, basis, v)
        rhs += (TWO_PI / L) * np.exp(1j * kj * x1)[:, None] * coeffs_to_grid(u, n1c, n2c, (g1, g2))

    # Supercell side: one dense coupled solve.
    sn1 = np.repeat(np.arange(L * basis.n1_min, L * (basis.n1_max + 1)), basis.N2)
    sn2 = np.tile(basis.n2_range, L * basis.N1)
    c0 = L // 2
    big = np.zeros((L * g1, g2), dtype=complex)
    big[c0 * g1 : (c0 + 1) * g1] = f.values
    F = grid_to_coeffs(big, sn1, sn2)
    M = np.diag((TWO_PI * sn1 / L) ** 2 + (TWO_PI * sn2 + k2) ** 2) - lam * _supercell_conv(medium, sn1, sn2, L)
    s = sla.svdvals(M, check_finite=False)
    if s[-1] <= INVERTIBILITY_RTOL * s[0]:
        raise NotInvertible(f"supercell matrix singular: sigma_min={s[-1]:.3e}", float(s[-1]), float(s[0]))
    U = sla.solve(M, F, check_finite=False)
    lhs = coeffs_to_grid(U, sn1, sn2, (L * g1, g2))[c0 * g1 : (c0 + 1) * g1]

    denom = np.linalg.norm(lhs)
    err = np.linalg.norm(lhs - rhs)
    rel = float(err / denom) if denom > 0 else float(err)
    return StripCheck(lhs, rhs, rel)
