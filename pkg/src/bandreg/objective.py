"""Similarity metrics, smoothness regularizer, and the total loss.

The total loss for a low-resolution parameter field ``s`` is

    loss = sim(warp(moving, phi), fixed) + lambda * smooth(field)

with ``field = decode(s)`` and ``phi = field`` (plain mode) or
``phi = Exp(field)`` (diffeomorphic mode, where the regularizer stays on
the velocity field).  Both terms are averaged per element so ``lambda``
is resolution independent.  Gradients are fully analytic and back-chain
through the warp, the optional exponential, and the decoder adjoint.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.ndimage import uniform_filter

from . import deform, spectral
from .grids import DenseField, LowResField, ScalarImage

__all__ = [
    "LossConfig",
    "LossParts",
    "mse",
    "ncc_local",
    "smoothness",
    "total_loss",
]

# Defaults follow the usual pairing of each similarity with its
# regularization weight: 0.01 for MSE, 5 for windowed NCC.
LAMBDA_MSE = 0.01
LAMBDA_NCC = 5.0


@dataclass(frozen=True)
class LossConfig:
    similarity: str = "mse"
    lam: float = LAMBDA_MSE
    ncc_window: int = 9
    epsilon: float = 1e-5

    def __post_init__(self):
        if self.similarity not in ("mse", "ncc"):
            raise ValueError(f"similarity must be 'mse' or 'ncc', got {self.similarity!r}")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.ncc_window < 3 or self.ncc_window % 2 == 0:
            raise ValueError(f"ncc window must be odd and >= 3, got {self.ncc_window}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")

    @classmethod
    def for_similarity(cls, similarity: str, lam: float | None = None, **kw) -> "LossConfig":
        """Config with the conventional lambda for the chosen similarity."""
        if lam is None:
            lam = LAMBDA_MSE if similarity == "mse" else LAMBDA_NCC
        return cls(similarity=similarity, lam=lam, **kw)


class LossParts(NamedTuple):
    similarity: float
    smoothness: float


def _check_grids(a: ScalarImage, b: ScalarImage):
    if a.grid.dims != b.grid.dims:
        raise ValueError(f"grid mismatch: {a.grid.dims} vs {b.grid.dims}")


def mse(a: ScalarImage, b: ScalarImage) -> tuple[float, np.ndarray]:
    """Mean squared difference and its gradient with respect to ``a``."""
    _check_grids(a, b)
    diff = a.values - b.values
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


def _box_sum(x: np.ndarray, size: int) -> np.ndarray:
    # Window sums with the window clipped at the borders (zero padding).
    return uniform_filter(x, size=size, mode="constant", cval=0.0) * float(size**x.ndim)


def ncc_local(a: ScalarImage, b: ScalarImage, config: LossConfig) -> tuple[float, np.ndarray]:
    """Windowed squared local correlation and its gradient with respect to ``a``.

    Per voxel, over the (border-clipped) window,
    ``cc = cross^2 / ((var_a + eps) * (var_b + eps))`` with mean-removed
    sums; the similarity is the mean of ``cc`` and lies in [0, 1].  It
    is invariant to per-window affine intensity maps of either image; a
    locally constant image contributes ~0 through the epsilon guard.
    """
    _check_grids(a, b)
    w = config.ncc_window
    eps = config.epsilon
    av, bv = a.values, b.values

    n = _box_sum(np.ones_like(av), w)
    sa = _box_sum(av, w)
    sb = _box_sum(bv, w)
    sab = _box_sum(av * bv, w)
    saa = _box_sum(av * av, w)
    sbb = _box_sum(bv * bv, w)

    cross = sab - sa * sb / n
    var_a = saa - sa * sa / n
    var_b = sbb - sb * sb / n
    da = var_a + eps
    db = var_b + eps
    cc = cross * cross / (da * db)
    similarity = float(np.mean(cc))

    # d(cc)/d(window sums), pushed back to voxels through one more box
    # sum per term (the window is symmetric, so membership is symmetric).
    u = 2.0 * cross / (da * db)
    wgt = 2.0 * cc / da
    q = -u * (sb / n) + wgt * (sa / n)
    grad = (bv * _box_sum(u, w) + _box_sum(q, w) - av * _box_sum(wgt, w)) / av.size
    return similarity, grad


def _smooth_lanes(f: np.ndarray) -> tuple[float, np.ndarray]:
    nd = f.ndim - 1
    denom = float(f.size * nd)
    total = 0.0
    grad = np.zeros_like(f)
    for axis in range(1, f.ndim):
        lo = [slice(None)] * f.ndim
        lo[axis] = slice(0, -1)
        hi = [slice(None)] * f.ndim
        hi[axis] = slice(1, None)
        d = f[tuple(hi)] - f[tuple(lo)]
        total += float(np.sum(d * d))
        grad[tuple(lo)] -= 2.0 * d
        grad[tuple(hi)] += 2.0 * d
    return total / denom, grad / denom


def smoothness(field: DenseField) -> tuple[float, np.ndarray]:
    """Mean squared forward difference over voxels, channels, and axes.

    The difference at the far border is zero.  Returns the value and its
    gradient with respect to the field, the adjoint of the
    forward-difference stencil.
    """
    return _smooth_lanes(field.channels)


def total_loss(
    s: LowResField,
    moving: ScalarImage,
    fixed: ScalarImage,
    config: LossConfig,
    diffeo: bool = False,
    exp_steps: int = 7,
) -> tuple[float, LowResField, LossParts]:
    """Full loss and its gradient with respect to the band-grid parameters.

    Forward chain: decode, optionally exponentiate, warp the moving
    image, then similarity plus ``lambda`` times smoothness of the
    decoded field.  Returns ``(loss, gradient, parts)`` where ``parts``
    splits the similarity and smoothness values.
    """
    _check_grids(moving, fixed)
    window = s.window
    if window.parent.dims != moving.grid.dims:
        raise ValueError(f"window parent {window.parent.dims} != image grid {moving.grid.dims}")

    field = spectral.decode(s)
    if diffeo:
        phi = deform.exp_velocity(field, exp_steps)
    else:
        phi = field
    warped = deform.warp(moving, phi)

    if config.similarity == "mse":
        sim_loss, g_warped = mse(warped, fixed)
        sim_value = sim_loss
    else:
        sim_value, g_sim = ncc_local(warped, fixed, config)
        sim_loss, g_warped = -sim_value, -g_sim

    smooth_value, g_smooth = smoothness(field)
    loss = sim_loss + config.lam * smooth_value

    g_phi = deform.warp_gradient(moving, phi, g_warped)
    if diffeo:
        g_field = deform.exp_velocity_adjoint(field, g_phi, exp_steps).channels
    else:
        g_field = g_phi.channels
    g_field = g_field + config.lam * g_smooth
    grad = spectral.decode_adjoint(DenseField(window.parent, g_field), window)
    return loss, grad, LossParts(similarity=sim_value, smoothness=smooth_value)
