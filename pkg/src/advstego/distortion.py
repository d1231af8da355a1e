"""Additive per-pixel embedding costs: HILL and spatial S-UNIWARD.

Both maps are low in textured areas and high in smooth ones. Pixels valued
0 or 255 are wet and receive ``WET_COST``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .image import GrayImage, wet_mask

WET_COST = 1e13

HILL_KB = np.array([[-1, 2, -1],
                    [2, -4, 2],
                    [-1, 2, -1]], dtype=np.float64)

# Daubechies-8 high-pass decomposition filter (16 taps).
DB8_HPDF = np.array([
    -0.0544158422, 0.3128715909, -0.6756307363, 0.5853546837,
    0.0158291053, -0.2840155430, -0.0004724846, 0.1287474266,
    0.0173693010, -0.0440882539, -0.0139810279, 0.0087460940,
    0.0048703530, -0.0003917404, -0.0006754494, -0.0001174768,
])
DB8_LPDF = (-1.0) ** np.arange(16) * DB8_HPDF[::-1]

SUNIWARD_FILTERS = (
    np.outer(DB8_LPDF, DB8_HPDF),
    np.outer(DB8_HPDF, DB8_LPDF),
    np.outer(DB8_HPDF, DB8_HPDF),
)

_DEFAULT_STABILIZER = {"hill": 1e-10, "suniward": 1.0}
_BOUNDARY_MODES = {"mirror": "reflect"}  # d c b a | a b c d | d c b a


@dataclass(frozen=True)
class CostProfile:
    algorithm: str = "hill"
    stabilizer: float | None = None
    boundary: str = "mirror"

    def __post_init__(self):
        if self.algorithm not in _DEFAULT_STABILIZER:
            raise ValueError(f"unknown cost algorithm {self.algorithm!r}")
        if self.stabilizer is None:
            object.__setattr__(self, "stabilizer", _DEFAULT_STABILIZER[self.algorithm])
        if not self.stabilizer > 0:
            raise ValueError("stabilizer must be positive")
        if self.boundary not in _BOUNDARY_MODES:
            raise ValueError(f"unknown boundary rule {self.boundary!r}")

    @property
    def mode(self) -> str:
        return _BOUNDARY_MODES[self.boundary]


@dataclass(frozen=True, eq=False)
class CostMap:
    costs: np.ndarray
    wet_cost: float = WET_COST

    @property
    def shape(self):
        return self.costs.shape


def _finish(img: GrayImage, rho: np.ndarray) -> CostMap:
    rho = np.minimum(rho, WET_COST)
    rho[~np.isfinite(rho)] = WET_COST
    rho[wet_mask(img)] = WET_COST
    rho.setflags(write=False)
    return CostMap(rho)


def hill_cost(img: GrayImage, profile: CostProfile | None = None) -> CostMap:
    """HILL: high-pass residual, 3x3 local mean, inverse, then 15x15 spreading."""
    profile = profile or CostProfile("hill")
    if img.height < 3 or img.width < 3:
        raise ValueError("HILL needs an image of at least 3x3 pixels")
    x = img.pixels.astype(np.float64)
    residual = ndimage.convolve(x, HILL_KB, mode=profile.mode)
    local = ndimage.uniform_filter(np.abs(residual), size=3, mode=profile.mode)
    rho = ndimage.uniform_filter(1.0 / (local + profile.stabilizer), size=15, mode=profile.mode)
    return _finish(img, rho)


def suniward_cost(img: GrayImage, profile: CostProfile | None = None) -> CostMap:
    """Spatial UNIWARD: sum over three wavelet directions of |F| back-projected 1/(|R|+sigma)."""
    profile = profile or CostProfile("suniward")
    if img.height < 8 or img.width < 8:
        raise ValueError("S-UNIWARD needs an image of at least 8x8 pixels")
    x = img.pixels.astype(np.float64)
    rho = np.zeros_like(x)
    for f in SUNIWARD_FILTERS:
        residual = ndimage.convolve(x, f, mode=profile.mode)
        # correlate with |F| is the adjoint of convolve with F, so the even-size offset cancels
        rho += ndimage.correlate(1.0 / (np.abs(residual) + profile.stabilizer), np.abs(f), mode=profile.mode)
    return _finish(img, rho)


def compute_costs(img: GrayImage, profile: CostProfile | str) -> CostMap:
    if isinstance(profile, str):
        profile = CostProfile(profile)
    if profile.algorithm == "hill":
        return hill_cost(img, profile)
    return suniward_cost(img, profile)


def flatten_costs(cmap: CostMap) -> tuple[np.ndarray, np.ndarray]:
    """Row-major (pixel index, cost) pairs as two parallel arrays."""
    flat = cmap.costs.ravel()
    return np.arange(flat.size), flat.copy()


def unflatten_costs(costs, shape, wet_cost: float = WET_COST) -> CostMap:
    return CostMap(np.asarray(costs, dtype=np.float64).reshape(shape).copy(), wet_cost)


def cost_heatmap(cmap: CostMap) -> GrayImage:
    """Min-max normalized log-cost image for debugging."""
    c = np.log10(cmap.costs + 1e-300)
    lo, hi = c.min(), c.max()
    if hi == lo:
        return GrayImage(np.zeros(c.shape, dtype=np.uint8))
    return GrayImage(np.round(255 * (c - lo) / (hi - lo)).astype(np.uint8))
