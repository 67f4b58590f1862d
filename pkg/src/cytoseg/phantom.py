"""Synthetic smear phantoms with overlapping elliptical cells.

Geometry is placed with integer arithmetic only: rotations come from a fixed
table of 15-degree steps with cosines and sines scaled by 4096, and ellipse
membership is an exact integer test. Floating point appears only in the
additive noise. All randomness comes from :class:`SplitMix64`:

    state <- state + 0x9E3779B97F4A7C15            (mod 2**64)
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9        (mod 2**64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB        (mod 2**64)
    output z ^ (z >> 31)

``randint(lo, hi)`` is ``lo + out % (hi - lo + 1)``; ``uniform()`` is
``(out >> 11) * 2**-53``; a normal deviate uses two consecutive uniforms
``u1, u2`` as ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import L_MAX

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

_SCALE = 4096
# (cos, sin) * 4096 for 0, 15, ..., 165 degrees.
_ROTATIONS = (
    (4096, 0), (3956, 1060), (3547, 2048), (2896, 2896), (2048, 3547), (1060, 3956),
    (0, 4096), (-1060, 3956), (-2048, 3547), (-2896, 2896), (-3547, 2048), (-3956, 1060),
)
# 16 compass directions as (dx, dy) * 4096.
_DIRECTIONS = (
    (4096, 0), (3784, 1567), (2896, 2896), (1567, 3784), (0, 4096), (-1567, 3784),
    (-2896, 2896), (-3784, 1567), (-4096, 0), (-3784, -1567), (-2896, -2896), (-1567, -3784),
    (0, -4096), (1567, -3784), (2896, -2896), (3784, -1567),
)

OVERLAP_ATTENUATION = 0.85
MAX_ATTEMPTS = 500
# Largest share of the smaller cell that one other cell may cover.
MAX_PAIR_OVERLAP = 0.5
# Nucleus area as a fraction of its cell.
NUCLEUS_FRACTION = (0.03, 0.08)


class PhantomError(ValueError):
    """The requested phantom cannot be built."""


class SplitMix64:
    """Counter-based 64-bit generator; see the module docstring."""

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK64

    @staticmethod
    def _mix(z: int) -> int:
        z = ((z ^ (z >> 30)) * _M1) & _MASK64
        z = ((z ^ (z >> 27)) * _M2) & _MASK64
        return z ^ (z >> 31)

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK64
        return self._mix(self.state)

    def randint(self, lo: int, hi: int) -> int:
        """Integer in ``[lo, hi]``."""
        return lo + self.next_u64() % (hi - lo + 1)

    def uniform_array(self, n: int) -> np.ndarray:
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * _GAMMA) & _MASK64
        return (z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def normal_array(self, n: int) -> np.ndarray:
        u = self.uniform_array(2 * n)
        return np.sqrt(-2.0 * np.log1p(-u[0::2])) * np.cos(2.0 * np.pi * u[1::2])


@dataclass(frozen=True)
class PhantomSpec:
    """Phantom parameters.

    ``overlap_level`` shrinks the spacing between neighboring cell centers
    from ``r_i + r_j`` (0, roughly touching) toward 0 (1, concentric), where
    ``r`` is a cell's mean semi-axis. A placement is redrawn when it would
    cover any pixel with three cells or cover more than half of a smaller
    cell. ``n_groups`` splits the cells round-robin into separate clumps
    laid side by side.
    """

    width: int = 256
    height: int = 256
    n_cells: int = 3
    overlap_level: float = 0.3
    cytoplasm_level: int = 150
    nucleus_level: int = 60
    background_level: int = 220
    noise_sigma: float = 4.0
    seed: int = 42
    n_groups: int = 1

    def check(self) -> None:
        if self.n_cells < 1:
            raise PhantomError(f"n_cells must be >= 1, got {self.n_cells}")
        if not 1 <= self.n_groups <= self.n_cells:
            raise PhantomError("n_groups must lie in [1, n_cells]")
        if not 0.0 <= self.overlap_level <= 1.0:
            raise PhantomError(f"overlap_level must lie in [0, 1], got {self.overlap_level}")
        if not 0 <= self.nucleus_level < self.cytoplasm_level < self.background_level <= L_MAX:
            raise PhantomError("levels must satisfy nucleus < cytoplasm < background <= 255")
        if self.noise_sigma < 0:
            raise PhantomError("noise_sigma must be non-negative")
        if self.width < 64 or self.height < 64:
            raise PhantomError("phantom must be at least 64x64")


@dataclass(frozen=True)
class _Ellipse:
    cx: int
    cy: int
    a: int
    b: int
    rot: int

    def mask(self, shape) -> np.ndarray:
        c, s = _ROTATIONS[self.rot]
        yy, xx = np.mgrid[: shape[0], : shape[1]].astype(np.int64)
        dx, dy = xx - self.cx, yy - self.cy
        u = dx * c + dy * s
        v = dy * c - dx * s
        return (u * self.b) ** 2 + (v * self.a) ** 2 <= (self.a * self.b * _SCALE) ** 2

    def fits(self, shape, margin: int = 2) -> bool:
        r = max(self.a, self.b) + margin
        return r <= self.cx < shape[1] - r and r <= self.cy < shape[0] - r


def _acceptable(mask, area, placed_masks, coverage) -> bool:
    if np.any(coverage[mask] >= 2):
        return False
    for other in placed_masks:
        shared = np.count_nonzero(mask & other)
        if shared > MAX_PAIR_OVERLAP * min(area, np.count_nonzero(other)):
            return False
    return True


def _place_cells(spec: PhantomSpec, rng: SplitMix64) -> list[_Ellipse]:
    shape = (spec.height, spec.width)
    overlap_milli = int(round(spec.overlap_level * 1000))
    cells: list[_Ellipse | None] = [None] * spec.n_cells
    coverage = np.zeros(shape, dtype=np.int32)
    for g in range(spec.n_groups):
        members = list(range(g, spec.n_cells, spec.n_groups))
        anchor_x = (2 * g + 1) * spec.width // (2 * spec.n_groups)
        anchor_y = spec.height // 2
        lo = g * spec.width // spec.n_groups
        hi = (g + 1) * spec.width // spec.n_groups
        placed: list[_Ellipse] = []
        placed_masks: list[np.ndarray] = []
        for idx in members:
            for _ in range(MAX_ATTEMPTS):
                a, b = rng.randint(20, 45), rng.randint(20, 45)
                rot = rng.randint(0, len(_ROTATIONS) - 1)
                if not placed:
                    cx = anchor_x + rng.randint(-8, 8)
                    cy = anchor_y + rng.randint(-8, 8)
                else:
                    ref = placed[rng.randint(0, len(placed) - 1)]
                    dx, dy = _DIRECTIONS[rng.randint(0, len(_DIRECTIONS) - 1)]
                    dist = (1000 - overlap_milli) * (ref.a + ref.b + a + b) // 2000
                    cx = ref.cx + dist * dx // _SCALE
                    cy = ref.cy + dist * dy // _SCALE
                cell = _Ellipse(cx, cy, a, b, rot)
                r = max(a, b)
                if not cell.fits(shape):
                    continue
                if spec.n_groups > 1 and not lo + r + 4 <= cx < hi - r - 4:
                    continue
                mask = cell.mask(shape)
                if _acceptable(mask, np.count_nonzero(mask), placed_masks, coverage):
                    break
            else:
                raise PhantomError("could not place a cell inside the image")
            placed.append(cell)
            placed_masks.append(mask)
            coverage += mask
            cells[idx] = cell
    return cells


def _place_nucleus(cell: _Ellipse, cell_mask, others, shape, rng: SplitMix64):
    for _ in range(MAX_ATTEMPTS):
        # Scale in permille; area fraction (scale/1000)^2 lies in [3%, 8%].
        scale = rng.randint(174, 282)
        a = max(2, cell.a * scale // 1000)
        b = max(2, cell.b * scale // 1000)
        ox = rng.randint(-cell.a // 4, cell.a // 4)
        oy = rng.randint(-cell.b // 4, cell.b // 4)
        c, s = _ROTATIONS[cell.rot]
        cx = cell.cx + (ox * c - oy * s) // _SCALE
        cy = cell.cy + (ox * s + oy * c) // _SCALE
        nucleus = _Ellipse(cx, cy, a, b, rng.randint(0, len(_ROTATIONS) - 1)).mask(shape)
        if not nucleus.any() or np.any(nucleus & ~cell_mask):
            continue
        # Pixelization can nudge the measured fraction past the range.
        if not NUCLEUS_FRACTION[0] <= nucleus.sum() / cell_mask.sum() <= NUCLEUS_FRACTION[1]:
            continue
        # Keep a one-pixel gap so nuclei never touch, even diagonally.
        grown = np.zeros_like(nucleus)
        ys, xs = np.nonzero(nucleus)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                grown[np.clip(ys + dy, 0, shape[0] - 1), np.clip(xs + dx, 0, shape[1] - 1)] = True
        if any(np.any(grown & other) for other in others):
            continue
        return nucleus
    raise PhantomError("could not place disjoint nuclei")


def generate_phantom(spec: PhantomSpec = PhantomSpec()):
    """Render a phantom image with its ground truth.

    Returns
    -------
    image : ndarray of uint8
    cells : list of bool ndarray
        One mask per cell, possibly overlapping.
    nuclei : list of bool ndarray
        One mask per cell; pairwise disjoint and inside their cell.
    """
    spec.check()
    rng = SplitMix64(spec.seed)
    shape = (spec.height, spec.width)
    ellipses = _place_cells(spec, rng)
    cells = [e.mask(shape) for e in ellipses]
    nuclei: list[np.ndarray] = []
    for ellipse, cell in zip(ellipses, cells):
        nuclei.append(_place_nucleus(ellipse, cell, nuclei, shape, rng))

    coverage = np.sum(cells, axis=0)
    base = np.full(shape, float(spec.background_level))
    covered = coverage > 0
    base[covered] = spec.cytoplasm_level * OVERLAP_ATTENUATION ** (coverage[covered] - 1)
    for nucleus in nuclei:
        base[nucleus] = spec.nucleus_level
    base = np.rint(base)
    if spec.noise_sigma > 0:
        base = base + spec.noise_sigma * rng.normal_array(base.size).reshape(shape)
    image = np.clip(np.rint(base), 0, L_MAX).astype(np.uint8)
    return image, cells, nuclei
