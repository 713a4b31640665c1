"""Piecewise-constant periodic media and their exact Fourier data.

The dielectric ``eps0`` is a positive background plus a list of axis-aligned
rectangles on the unit cell; overlapping rectangles add.  The defect ``eps1``
has zero background and rectangles whose x1-extent lies strictly inside
(0, 1).  Fourier coefficients are evaluated in closed form, so no quadrature
error enters any downstream matrix.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError

TWO_PI = 2.0 * np.pi

__all__ = [
    "Rectangle",
    "MediumSpec",
    "ModeBasis",
    "interval_transform",
    "fourier_coefficient",
    "fourier_coefficients",
    "convolution_matrix",
    "sup_norm_eps0",
    "inf_norm_eps0",
    "free_medium",
]


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned rectangle ``[x1_lo, x1_hi] x [x2_lo, x2_hi]`` with a value."""

    x1_lo: float
    x1_hi: float
    x2_lo: float
    x2_hi: float
    value: float

    def __post_init__(self):
        ok = (0.0 <= self.x1_lo < self.x1_hi <= 1.0) and (0.0 <= self.x2_lo < self.x2_hi <= 1.0)
        if not ok:
            raise ConfigError(f"rectangle out of the unit cell or empty: {self}")
        if not np.isfinite(self.value):
            raise ConfigError("rectangle value must be finite")

    @classmethod
    def from_sequence(cls, seq: Sequence[float]) -> "Rectangle":
        if len(seq) != 5:
            raise ConfigError(f"rectangle needs 5 numbers (x1_lo, x1_hi, x2_lo, x2_hi, value), got {seq!r}")
        return cls(*(float(s) for s in seq))

    def as_list(self) -> list:
        return [self.x1_lo, self.x1_hi, self.x2_lo, self.x2_hi, self.value]

    def contains(self, x1: float, x2: float) -> bool:
        return self.x1_lo <= x1 <= self.x1_hi and self.x2_lo <= x2 <= self.x2_hi


def _cell_values(background: float, rects: Sequence[Rectangle]) -> np.ndarray:
    """Values of ``background + sum(rects)`` on every sub-cell of the corner grid."""
    xs = sorted({0.0, 1.0, *itertools.chain.from_iterable((r.x1_lo, r.x1_hi) for r in rects)})
    ys = sorted({0.0, 1.0, *itertools.chain.from_iterable((r.x2_lo, r.x2_hi) for r in rects)})
    mx = 0.5 * (np.asarray(xs[:-1]) + np.asarray(xs[1:]))
    my = 0.5 * (np.asarray(ys[:-1]) + np.asarray(ys[1:]))
    vals = np.full((mx.size, my.size), float(background))
    for r in rects:
        inside = ((mx > r.x1_lo) & (mx < r.x1_hi))[:, None] & ((my > r.x2_lo) & (my < r.x2_hi))[None, :]
        vals = vals + np.where(inside, r.value, 0.0)
    return vals


@dataclass(frozen=True)
class MediumSpec:
    """Background dielectric ``eps0`` and defect ``eps1`` on the unit cell.

    Parameters
    ----------
    eps0_background : float
        Constant part of ``eps0``; must be positive.
    eps0_rectangles : tuple of Rectangle
        Inclusions added on top of the background.
    eps1_rectangles : tuple of Rectangle
        Defect inclusions.  Each must satisfy ``0 < x1_lo`` and ``x1_hi < 1``.
    require_defect : bool
        When true (default) at least one defect rectangle with nonzero value
        is required.
    """

    eps0_background: float = 1.0
    eps0_rectangles: tuple = ()
    eps1_rectangles: tuple = ()
    require_defect: bool = field(default=True, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "eps0_rectangles", tuple(self.eps0_rectangles))
        object.__setattr__(self, "eps1_rectangles", tuple(self.eps1_rectangles))
        if not (np.isfinite(self.eps0_background) and self.eps0_background > 0):
            raise ConfigError("eps0_background must be a positive finite number")
        if inf_norm_eps0(self) <= 0:
            raise ConfigError("essential infimum of eps0 must be positive")
        for r in self.eps1_rectangles:
            if not (r.x1_lo > 0.0 and r.x1_hi < 1.0):
                raise ConfigError(f"eps1 rectangle must satisfy 0 < x1_lo and x1_hi < 1: {r}")
        if self.require_defect and not any(abs(r.value) > 0 for r in self.eps1_rectangles):
            raise ConfigError("eps1 needs at least one rectangle with nonzero value")

    @property
    def is_free(self) -> bool:
        """True when ``eps0`` is constant."""
        return all(r.value == 0 for r in self.eps0_rectangles)

    def part(self, name: str) -> tuple[float, tuple]:
        if name == "eps0":
            return self.eps0_background, self.eps0_rectangles
        if name == "eps1":
            return 0.0, self.eps1_rectangles
        raise ValueError(f"unknown medium part {name!r}; use 'eps0' or 'eps1'")

    def to_dict(self) -> dict:
        return {
            "eps0_background": self.eps0_background,
            "eps0_rectangles": [r.as_list() for r in self.eps0_rectangles],
            "eps1_rectangles": [r.as_list() for r in self.eps1_rectangles],
        }

    @classmethod
    def from_dict(cls, d: dict, require_defect: bool = True) -> "MediumSpec":
        try:
            return cls(
                eps0_background=float(d.get("eps0_background", 1.0)),
                eps0_rectangles=tuple(Rectangle.from_sequence(r) for r in d.get("eps0_rectangles", [])),
                eps1_rectangles=tuple(Rectangle.from_sequence(r) for r in d.get("eps1_rectangles", [])),
                require_defect=require_defect,
            )
        except (TypeError, AttributeError) as exc:
            raise ConfigError(f"malformed medium section: {exc}") from exc

    def sample(self, part: str, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        """Point values of a medium part on broadcastable coordinate arrays."""
        bg, rects = self.part(part)
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        out = np.full(x1.shape, float(bg))
        for r in rects:
            out = out + np.where((x1 >= r.x1_lo) & (x1 < r.x1_hi) & (x2 >= r.x2_lo) & (x2 < r.x2_hi), r.value, 0.0)
        return out


def free_medium(value: float = 1.0, defect: Iterable[Rectangle] | None = None) -> MediumSpec:
    """Constant ``eps0 = value``; the defect defaults to a centred square."""
    if defect is None:
        defect = (Rectangle(0.3, 0.7, 0.3, 0.7, 1.0),)
    return MediumSpec(value, (), tuple(defect))


@dataclass(frozen=True)
class ModeBasis:
    """Truncated Fourier basis ``m = 2π(n1, n2)`` on a rectangular index box.

    Modes are enumerated lexicographically with ``n1`` outer and ``n2``
    inner, so ``index = (n1 - n1_min) * N2 + (n2 - n2_min)``.
    """

    n1_min: int
    n1_max: int
    n2_min: int
    n2_max: int

    def __post_init__(self):
        for name in ("n1_min", "n1_max", "n2_min", "n2_max"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.n1_max < self.n1_min or self.n2_max < self.n2_min:
            raise ConfigError(f"empty mode box: {self}")

    @classmethod
    def symmetric(cls, h1: int, h2: int) -> "ModeBasis":
        return cls(-h1, h1, -h2, h2)

    @property
    def N1(self) -> int:
        return self.n1_max - self.n1_min + 1

    @property
    def N2(self) -> int:
        return self.n2_max - self.n2_min + 1

    @property
    def size(self) -> int:
        return self.N1 * self.N2

    def __len__(self) -> int:
        return self.size

    @property
    def n1_range(self) -> np.ndarray:
        return np.arange(self.n1_min, self.n1_max + 1)

    @property
    def n2_range(self) -> np.ndarray:
        return np.arange(self.n2_min, self.n2_max + 1)

    @property
    def n1(self) -> np.ndarray:
        return np.repeat(self.n1_range, self.N2)

    @property
    def n2(self) -> np.ndarray:
        return np.tile(self.n2_range, self.N1)

    @property
    def m1(self) -> np.ndarray:
        return TWO_PI * self.n1

    @property
    def m2(self) -> np.ndarray:
        return TWO_PI * self.n2

    def index(self, n1: int, n2: int) -> int:
        if not (self.n1_min <= n1 <= self.n1_max and self.n2_min <= n2 <= self.n2_max):
            raise IndexError(f"mode ({n1}, {n2}) outside {self}")
        return (n1 - self.n1_min) * self.N2 + (n2 - self.n2_min)

    def edge_mask(self, width: int = 1) -> np.ndarray:
        """Boolean mask of the ``width`` outermost shells of the box."""
        n1, n2 = self.n1, self.n2
        return (
            (n1 < self.n1_min + width)
            | (n1 > self.n1_max - width)
            | (n2 < self.n2_min + width)
            | (n2 > self.n2_max - width)
        )

    def contains(self, other: "ModeBasis") -> bool:
        return (
            self.n1_min <= other.n1_min
            and other.n1_max <= self.n1_max
            and self.n2_min <= other.n2_min
            and other.n2_max <= self.n2_max
        )

    def embed(self, other: "ModeBasis") -> np.ndarray:
        """Indices in ``self`` of the modes of a contained basis ``other``."""
        if not self.contains(other):
            raise ConfigError(f"{other} is not contained in {self}")
        return (other.n1 - self.n1_min) * self.N2 + (other.n2 - self.n2_min)


def interval_transform(mu: np.ndarray, a: float, b: float) -> np.ndarray:
    """``∫_a^b e^{-i mu x} dx`` evaluated in closed form, elementwise in ``mu``."""
    mu = np.asarray(mu, dtype=float)
    out = np.empty(mu.shape, dtype=complex)
    zero = np.abs(mu) < 1e-14
    out[zero] = b - a
    nz = mu[~zero]
    out[~zero] = (np.exp(-1j * nz * b) - np.exp(-1j * nz * a)) / (-1j * nz)
    return out


def fourier_coefficients(medium: MediumSpec, part: str, m1, m2) -> np.ndarray:
    """Vectorized ``∫_Ω ε(x) e^{-i m·x} dx`` for broadcastable mode arrays."""
    bg, rects = medium.part(part)
    m1, m2 = np.broadcast_arrays(np.asarray(m1, float), np.asarray(m2, float))
    at_zero = (np.abs(m1) < 1e-14) & (np.abs(m2) < 1e-14)
    out = np.where(at_zero, float(bg), 0.0).astype(complex)
    for r in rects:
        if r.value == 0:
            continue
        out = out + r.value * interval_transform(m1, r.x1_lo, r.x1_hi) * interval_transform(m2, r.x2_lo, r.x2_hi)
    return out


def fourier_coefficient(medium: MediumSpec, part: str, m) -> complex:
    """Fourier coefficient of ``eps0`` or ``eps1`` at one mode ``m ∈ 2πℤ²``."""
    return complex(fourier_coefficients(medium, part, m[0], m[1]))


def convolution_matrix(medium: MediumSpec, part: str, basis: ModeBasis) -> np.ndarray:
    """Matrix of multiplication by ``eps`` in ``basis``: entry ``ε̂(m - m')``."""
    n1, n2 = basis.n1, basis.n2
    d1 = np.subtract.outer(n1, n1)
    d2 = np.subtract.outer(n2, n2)
    # Only the distinct differences need evaluating.
    u1, inv1 = np.unique(d1, return_inverse=True)
    u2, inv2 = np.unique(d2, return_inverse=True)
    table = fourier_coefficients(medium, part, TWO_PI * u1[:, None], TWO_PI * u2[None, :])
    return table[inv1.reshape(d1.shape), inv2.reshape(d2.shape)]


def sup_norm_eps0(medium: MediumSpec) -> float:
    """Essential supremum of ``eps0`` from the rectangle corner grid."""
    bg, rects = medium.part("eps0")
    return float(_cell_values(bg, rects).max())


def inf_norm_eps0(medium: MediumSpec) -> float:
    """Essential infimum of ``eps0`` from the rectangle corner grid."""
    bg, rects = medium.part("eps0")
    return float(_cell_values(bg, rects).min())


def l2_norm_squared(medium: MediumSpec, part: str) -> float:
    """``∫_Ω |ε|²`` computed exactly from the sub-cell decomposition."""
    bg, rects = medium.part(part)
    xs = sorted({0.0, 1.0, *itertools.chain.from_iterable((r.x1_lo, r.x1_hi) for r in rects)})
    ys = sorted({0.0, 1.0, *itertools.chain.from_iterable((r.x2_lo, r.x2_hi) for r in rects)})
    area = np.outer(np.diff(xs), np.diff(ys))
    return float((area * _cell_values(bg, rects) ** 2).sum())
