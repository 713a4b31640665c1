"""Symbol of the shifted Laplacian and the closed-form estimates built on it.

Everything here is a pure formula: the symbol ``s(m, k) = (m + k)²``, its
lower bounds, the gap lemma used to pick ``τ₁``, the set of lines ``𝕃`` with
the rectangular contours inside it, and the exact zeros of the symbol used
as a pole oracle for the constant medium.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

TWO_PI = 2.0 * np.pi

__all__ = [
    "CPoint2",
    "LinesSet",
    "RectContour",
    "symbol",
    "hammer_bounds",
    "min_gap",
    "select_tau1",
    "lines_contains",
    "gamma_contour_points",
    "polyline_weights",
    "free_pole_oracle",
    "free_poles_in_D",
    "hammer_violations",
    "min_gap_brute",
]


@dataclass(frozen=True)
class CPoint2:
    """Complex quasimomentum pair ``(k1, k2)``."""

    k1: complex
    k2: complex

    def __post_init__(self):
        object.__setattr__(self, "k1", complex(self.k1))
        object.__setattr__(self, "k2", complex(self.k2))
        if not (np.isfinite(self.k1) and np.isfinite(self.k2)):
            raise ValueError("quasimomentum components must be finite")

    @property
    def xi(self) -> np.ndarray:
        return np.array([self.k1.real, self.k2.real])

    @property
    def eta(self) -> np.ndarray:
        return np.array([self.k1.imag, self.k2.imag])


def symbol(m, k) -> complex | np.ndarray:
    """``(m1 + k1)² + (m2 + k2)²`` with complex (non-Hermitian) squaring.

    ``m`` is a pair of mode components (scalars or arrays), ``k`` either a
    :class:`CPoint2` or a pair of complex numbers.
    """
    if isinstance(k, CPoint2):
        k1, k2 = k.k1, k.k2
    else:
        k1, k2 = k
    return (np.asarray(m[0]) + k1) ** 2 + (np.asarray(m[1]) + k2) ** 2


def hammer_bounds(m, xi, eta):
    """Lower bounds ``(b1, b2)`` for ``|s(m, ξ + iη)|²``.

    ``b1`` pairs ``m2 + ξ2`` with ``η1`` and ``m1 + ξ1`` with ``η2``;
    ``b2 = 2((m + ξ)·η)²``.  With ``a = m + ξ`` one has
    ``|s|² - b1 = 2(a2² - η1²)(a1² - η2²) + 4(a·η)²``, which expands to a sum
    of squares, so the cross pairing is a valid bound.

    Inputs broadcast, so whole sample batches can be checked at once.
    """
    a1 = np.asarray(m[0]) + np.asarray(xi[0])
    a2 = np.asarray(m[1]) + np.asarray(xi[1])
    e1 = np.asarray(eta[0])
    e2 = np.asarray(eta[1])
    b1 = (a2**2 - e1**2) ** 2 + (a1**2 - e2**2) ** 2
    b2 = 2.0 * (a1 * e1 + a2 * e2) ** 2
    return b1, b2


def min_gap(beta: float, m: float) -> float:
    """Certified lower bound ``(2m + 3π + β)(π - β)``.

    Bounds ``|(m2 + ξ2)² - (m + 2π)²|`` from below over ``m2 ∈ 2πℤ`` and
    ``ξ2 ∈ [π - β, π + β]``, for ``m ∈ {0, 2π, 4π, ...}``.
    """
    if not (0.0 < beta < np.pi):
        raise ValueError(f"beta must lie in (0, π), got {beta}")
    n = m / TWO_PI
    if m < 0 or abs(n - round(n)) > 1e-9:
        raise ValueError(f"m must be a nonnegative multiple of 2π, got {m}")
    return (2.0 * m + 3.0 * np.pi + beta) * (np.pi - beta)


def select_tau1(lam: float, eps0_sup: float, theta: float, n_max: int = 100000) -> float:
    """Smallest ``τ₁ = 2πn`` with ``θ(2(τ₁ - 2π) + 4π - θ) ≥ 2λ·sup ε₀``.

    The left side is the gap bound of :func:`min_gap` at ``β = π - θ`` and
    ``m = τ₁ - 2π``; the right side makes the Neumann series for the
    ``λε₀`` perturbation converge on the lines ``Im k1 = ±τ₁``.  For
    ``λ ≤ 0`` the convention ``τ₁ = 2π`` is returned.
    """
    if not (0.0 < theta < np.pi):
        raise ValueError(f"theta must lie in (0, π), got {theta}")
    if eps0_sup <= 0:
        raise ValueError("eps0_sup must be positive")
    if lam <= 0:
        return TWO_PI
    rhs = 2.0 * lam * eps0_sup
    for n in range(1, n_max + 1):
        tau1 = TWO_PI * n
        if theta * (2.0 * (tau1 - TWO_PI) + 4.0 * np.pi - theta) >= rhs:
            return tau1
    raise ValueError("no admissible tau1 below the search limit")


@dataclass(frozen=True)
class LinesSet:
    """Four vertical lines ``Re k1 = ±π/2 ± 2δ`` plus horizontal segments.

    The horizontal segments sit at ``Im k1 ∈ 2πℤ`` with ``|Im k1| ≤ τ₁`` and
    ``Re k1 ∈ [-π, π]``.
    """

    delta: float
    tau1: float

    def __post_init__(self):
        if not (0.0 < self.delta < np.pi / 4):
            raise ConfigError(f"delta must lie in (0, π/4), got {self.delta}")
        n = self.tau1 / TWO_PI
        if n < 1 - 1e-12 or abs(n - round(n)) > 1e-9:
            raise ConfigError(f"tau1 must be a positive multiple of 2π, got {self.tau1}")


def lines_contains(k1: complex, lines: LinesSet, tol: float = 1e-12) -> bool:
    """Membership of ``k1`` in the set of lines, up to a relative ``tol``."""
    k1 = complex(k1)
    scale = tol * max(1.0, abs(k1))
    for c in (np.pi / 2, -np.pi / 2):
        for s in (2 * lines.delta, -2 * lines.delta):
            if abs(k1.real - (c + s)) <= scale:
                return True
    nu = k1.imag / TWO_PI
    on_level = abs(k1.imag - TWO_PI * round(nu)) <= scale
    return bool(
        on_level
        and abs(k1.imag) <= lines.tau1 + scale
        and -np.pi - scale <= k1.real <= np.pi + scale
    )


@dataclass(frozen=True)
class RectContour:
    """Rectangle ``Re k1 ∈ [±π/2 - 2δ, ±π/2 + 2δ]``, ``Im k1 ∈ [m2 - 2π, m2]``."""

    sign: int
    m2: float
    delta: float
    tau1: float | None = None

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ConfigError("sign must be +1 or -1")
        n = self.m2 / TWO_PI
        if abs(n - round(n)) > 1e-9:
            raise ConfigError(f"m2 must lie in 2πℤ, got {self.m2}")
        if not (0.0 < self.delta < np.pi / 4):
            raise ConfigError(f"delta must lie in (0, π/4), got {self.delta}")
        if self.tau1 is not None and not (-self.tau1 + TWO_PI - 1e-9 <= self.m2 <= self.tau1 + 1e-9):
            raise ConfigError(f"m2={self.m2} outside [-τ₁+2π, τ₁]")

    @property
    def center(self) -> complex:
        return complex(self.sign * np.pi / 2, self.m2 - np.pi)

    @property
    def corners(self) -> tuple:
        lo, hi = self.sign * np.pi / 2 - 2 * self.delta, self.sign * np.pi / 2 + 2 * self.delta
        b, t = self.m2 - TWO_PI, self.m2
        return (complex(lo, b), complex(hi, b), complex(hi, t), complex(lo, t))

    def contains(self, z: complex) -> bool:
        """Strict interior test."""
        lo, hi = self.sign * np.pi / 2 - 2 * self.delta, self.sign * np.pi / 2 + 2 * self.delta
        return lo < z.real < hi and self.m2 - TWO_PI < z.imag < self.m2

    def distance_to_boundary(self, z: complex) -> float:
        lo, hi = self.sign * np.pi / 2 - 2 * self.delta, self.sign * np.pi / 2 + 2 * self.delta
        b, t = self.m2 - TWO_PI, self.m2
        dx = max(lo - z.real, 0.0, z.real - hi)
        dy = max(b - z.imag, 0.0, z.imag - t)
        if dx > 0 or dy > 0:
            return math.hypot(dx, dy)
        return min(z.real - lo, hi - z.real, z.imag - b, t - z.imag)

    @classmethod
    def all_for(cls, delta: float, tau1: float) -> list:
        """Every contour ``Γ±_{m2}`` with ``-τ₁ + 2π ≤ m2 ≤ τ₁``."""
        n_top = int(round(tau1 / TWO_PI))
        out = []
        for sign in (1, -1):
            for n in range(-n_top + 1, n_top + 1):
                out.append(cls(sign, TWO_PI * n, delta, tau1))
        return out


def gamma_contour_points(c: RectContour, q_nodes: int = 64) -> np.ndarray:
    """Counterclockwise nodes on ``Γ±_{m2}``, ``q_nodes/4`` per side.

    Each side contributes its starting corner and ``q_nodes/4 - 1`` interior
    points, so the polyline closes back onto the first node.
    """
    if q_nodes < 8 or q_nodes % 4:
        raise ValueError(f"q_nodes must be a multiple of 4 and at least 8, got {q_nodes}")
    per = q_nodes // 4
    corners = c.corners
    t = np.arange(per) / per
    pts = [corners[i] + t * (corners[(i + 1) % 4] - corners[i]) for i in range(4)]
    return np.concatenate(pts)


def polyline_weights(points: np.ndarray) -> np.ndarray:
    """Trapezoid weights for ``∮ f dz`` on the closed polyline through ``points``."""
    return 0.5 * (np.roll(points, -1) - np.roll(points, 1))


def free_pole_oracle(m, xi2: float, ell: float, sign: int) -> complex:
    """Zero ``𝒥±(m)`` of ``k1 ↦ s(m, (k1, ξ2 + i(π/2 + ℓ)))``.

    ``𝒥±(m) = ±(π/2 + ℓ) - m1 ∓ i|m2 + ξ2|`` for ``m2 ≥ 0`` and
    ``±(π/2 + ℓ) - m1 ± i|m2 + ξ2|`` for ``m2 < 0``.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    m1, m2 = float(m[0]), float(m[1])
    eta2 = np.pi / 2 + ell
    im = -abs(m2 + xi2) if m2 >= 0 else abs(m2 + xi2)
    return complex(sign * eta2 - m1, sign * im)


def free_poles_in_D(xi2: float, ell: float, tau1: float, n2_half: int) -> np.ndarray:
    """Distinct ``𝒥±(m)`` folded into ``Re ∈ [-π, π)`` with ``|Im| < τ₁``.

    ``m1`` only translates by ``2π``, so it is fixed at 0; ``m2`` runs over
    ``2π·[-n2_half, n2_half]``.  Sorted by real then imaginary part.
    """
    out: list = []
    for n2 in range(-n2_half, n2_half + 1):
        for sign in (1, -1):
            z = free_pole_oracle((0.0, TWO_PI * n2), xi2, ell, sign)
            if abs(z.imag) >= tau1:
                continue
            z = complex((z.real + np.pi) % TWO_PI - np.pi, z.imag)
            if all(abs(z - w) > 1e-9 for w in out):
                out.append(z)
    return np.array(sorted(out, key=lambda z: (round(z.real, 9), z.imag)))


def hammer_violations(
    n: int,
    seed: int = 0,
    rtol: float = 1e-9,
    m_box: int = 8,
    eta_max: float = 20.0,
    chunk: int = 250_000,
) -> tuple[int, int]:
    """Count random draws where ``|s|² + rtol·(1 + |s|²)`` falls below a bound.

    Draws ``m ∈ 2π·[-m_box, m_box]²``, ``ξ ∈ [-π, π]²`` and
    ``η ∈ [-eta_max, eta_max]²`` uniformly.  Returns the violation counts for
    ``b1`` and ``b2``.
    """
    rng = np.random.default_rng(seed)
    v1 = v2 = 0
    done = 0
    while done < n:
        k = min(chunk, n - done)
        m = TWO_PI * rng.integers(-m_box, m_box + 1, size=(2, k))
        xi = rng.uniform(-np.pi, np.pi, size=(2, k))
        eta = rng.uniform(-eta_max, eta_max, size=(2, k))
        s = symbol(m, (xi[0] + 1j * eta[0], xi[1] + 1j * eta[1]))
        s2 = np.abs(s) ** 2
        b1, b2 = hammer_bounds(m, xi, eta)
        slack = s2 + rtol * (1.0 + s2)
        v1 += int(np.sum(slack < b1))
        v2 += int(np.sum(slack < b2))
        done += k
    return v1, v2


def min_gap_brute(beta: float, m: float, m2_half: int = 200, n_xi: int = 10_000) -> float:
    """Grid minimum of ``|(m2 + ξ2)² - (m + 2π)²|`` behind :func:`min_gap`.

    ``m2`` runs over ``2π·[-m2_half, m2_half]`` and ``ξ2`` over ``n_xi``
    equispaced points of ``[π - β, π + β]`` (endpoints included).
    """
    xi = np.linspace(np.pi - beta, np.pi + beta, n_xi)
    target = (m + TWO_PI) ** 2
    best = np.inf
    for n2 in range(-m2_half, m2_half + 1):
        best = min(best, float(np.min(np.abs((TWO_PI * n2 + xi) ** 2 - target))))
    return best
