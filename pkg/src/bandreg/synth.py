"""Synthetic image pairs with known band-limited ground-truth deformations.

The generator builds a smooth blob image, draws a random low-resolution
field, decodes it into a fold-free ground-truth displacement, and warps
the image (and its blob-dominance labels) to produce the fixed side.
Registering the pair should recover the ground truth, which makes these
bundles usable as end-to-end oracles.

Randomness comes from a self-contained SplitMix64 stream (documented
constants below) rather than a library generator, so fixtures are
reproducible from the seed alone in any implementation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import deform, metrics, spectral
from .grids import DenseField, LabelMap, LowResField, ScalarImage, make_grid, make_window

__all__ = ["SynthConfig", "SynthPair", "SplitMix64", "make_pair"]


class SplitMix64:
    """Tiny deterministic generator: state += 0x9E3779B97F4A7C15 per draw,
    output mixed with the murmur-style constants 0xBF58476D1CE4E5B9 and
    0x94D049BB133111EB (shifts 30/27/31)."""

    _MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = seed & self._MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & self._MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self._MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self._MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def normal(self) -> float:
        """Standard normal via Box-Muller (one fresh pair per call, the
        cosine branch; the sine branch is discarded for simplicity)."""
        u1 = 1.0 - self.uniform()  # avoid log(0)
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@dataclass(frozen=True)
class SynthConfig:
    dims: tuple[int, ...] = (64, 96)
    band_dims: tuple[int, ...] = (16, 24)
    amplitude: float = 3.0
    blob_count: int = 10
    seed: int = 0
    contamination: float = 0.0  # out-of-band energy added to phi_gt, off by default

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.blob_count < 1:
            raise ValueError("blob_count must be >= 1")
        object.__setattr__(self, "dims", tuple(int(m) for m in self.dims))
        object.__setattr__(self, "band_dims", tuple(int(m) for m in self.band_dims))


@dataclass(frozen=True)
class SynthPair:
    moving: ScalarImage
    fixed: ScalarImage
    phi_gt: DenseField
    labels_moving: LabelMap
    labels_fixed: LabelMap
    s_gt: LowResField


# label only where some blob contributes noticeably; elsewhere background
_LABEL_FLOOR = 0.05


def _bump(coords, center, sigma) -> np.ndarray:
    r2 = np.zeros(coords.shape[1:])
    for d in range(coords.shape[0]):
        r2 += (coords[d] - center[d]) ** 2
    return np.exp(-r2 / (2.0 * sigma * sigma))


def _blob_image(grid, rng: SplitMix64, blob_count: int):
    """Blob image plus labels from blob dominance.

    Two bump populations, all isotropic squared exponentials: a few
    large labeled blobs, and many small signed texture bumps that give
    the similarity term gradients everywhere (registration could not
    pin the field down in flat regions otherwise).  Dominance slivers
    smaller than a voxel-count floor fall back to background.
    """
    dims = np.asarray(grid.dims, dtype=np.float64)
    coords = np.indices(grid.dims, dtype=np.float64)
    sigma_lo, sigma_hi = 0.08 * dims.min(), 0.18 * dims.min()
    contributions = np.empty((blob_count,) + grid.dims)
    for k in range(blob_count):
        center = [0.1 * m + 0.8 * m * rng.uniform() for m in dims]
        sigma = sigma_lo + (sigma_hi - sigma_lo) * rng.uniform()
        amp = 0.5 + 0.5 * rng.uniform()
        contributions[k] = amp * _bump(coords, center, sigma)
    image = contributions.sum(axis=0)

    texture_count = min(400, max(40, grid.voxels // 50))
    tex_lo, tex_hi = 0.03 * dims.min(), 0.06 * dims.min()
    for _ in range(texture_count):
        center = [m * rng.uniform() for m in dims]
        sigma = tex_lo + (tex_hi - tex_lo) * rng.uniform()
        amp = 0.35 + 0.25 * rng.uniform()
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
        image = image + sign * amp * _bump(coords, center, sigma)

    lo, hi = image.min(), image.max()
    image = (image - lo) / (hi - lo) if hi > lo else np.zeros_like(image)

    strongest = contributions.max(axis=0)
    labels = np.where(strongest >= _LABEL_FLOOR, contributions.argmax(axis=0) + 1, 0)
    min_region = max(16, grid.voxels // 200)
    for lab in range(1, blob_count + 1):
        region = labels == lab
        if 0 < region.sum() < min_region:
            labels[region] = 0
    return image, labels


def _lowpass_envelope(band_dims) -> np.ndarray:
    # radial Gaussian falloff over the band's own frequency range; keeps
    # the draw normal but correlated, so peak-normalized fields stay
    # fold-free at the amplitudes the oracles use
    axes = [
        (np.fft.fftfreq(mc) * mc / (mc // 2)) ** 2  # squared freq / band Nyquist
        for mc in band_dims
    ]
    r2 = np.zeros(band_dims)
    for d, ax in enumerate(axes):
        shape = [1] * len(band_dims)
        shape[d] = band_dims[d]
        r2 = r2 + ax.reshape(shape)
    return np.exp(-12.0 * r2)


def _border_taper(n: int, frac: float = 0.25) -> np.ndarray:
    # raised-cosine ramp over the first/last quarter of a band-grid axis;
    # applied on the band grid it keeps decoded fields band-limited while
    # sending them to ~0 at the volume border, where clamped warping
    # would otherwise make the ground truth unrecoverable
    t = np.ones(n)
    w = int(round(frac * n))
    ramp = 0.5 * (1.0 - np.cos(np.pi * (np.arange(w) + 0.5) / w))
    t[:w] = ramp
    t[n - w :] = ramp[::-1]
    return t


def _ground_truth_field(window, rng: SplitMix64, amplitude: float,
                        contamination: float) -> DenseField:
    shape = (window.parent.ndim,) + window.band_dims
    draws = np.array([rng.normal() for _ in range(int(np.prod(shape)))])
    draws = draws.reshape(shape)
    envelope = _lowpass_envelope(window.band_dims)
    axes = tuple(range(1, len(shape)))
    smooth = np.fft.ifftn(np.fft.fftn(draws, axes=axes) * envelope, axes=axes).real
    for d, mc in enumerate(window.band_dims):
        taper_shape = [1] * len(shape)
        taper_shape[d + 1] = mc
        smooth = smooth * _border_taper(mc).reshape(taper_shape)
    s = LowResField(window, smooth)
    phi = spectral.decode(s).channels
    peak = np.abs(phi).max()
    if peak > 0 and amplitude > 0:
        phi = phi * (amplitude / peak)
    else:
        phi = np.zeros_like(phi)
    if contamination > 0:
        noise_shape = (window.parent.ndim,) + window.parent.dims
        noise = np.array([rng.normal() for _ in range(int(np.prod(noise_shape)))])
        noise = noise.reshape(noise_shape)
        dense = DenseField(window.parent, noise)
        _, low = spectral.encode(dense, window)
        high = noise - spectral.decode(low).channels
        high_peak = np.abs(high).max()
        if high_peak > 0:
            phi = phi + high * (contamination / high_peak)
    return DenseField(window.parent, phi)


def make_pair(config: SynthConfig) -> SynthPair:
    """Deterministic synthetic bundle: images, labels, and ground truth.

    ``fixed`` is the blob image warped by the ground-truth field, so a
    registration of (moving, fixed) should recover a field close to
    ``phi_gt``.  Raises if the requested amplitude makes the ground
    truth fold.
    """
    grid = make_grid(config.dims)
    window = make_window(grid, config.band_dims)
    rng = SplitMix64(config.seed)

    image, labels = _blob_image(grid, rng, config.blob_count)
    phi_gt = _ground_truth_field(window, rng, config.amplitude, config.contamination)

    folding = deform.jacobian(phi_gt).folding_percent
    if folding > 0:
        raise ValueError(
            f"amplitude {config.amplitude} folds the ground truth "
            f"({folding:.3f}% negative determinant); use a smaller amplitude"
        )

    moving = ScalarImage(grid, image)
    labels_moving = LabelMap(grid, labels)
    fixed = deform.warp(moving, phi_gt)
    labels_fixed = metrics.warp_labels(labels_moving, phi_gt)
    _, s_gt = spectral.encode(phi_gt, window)
    return SynthPair(
        moving=moving,
        fixed=fixed,
        phi_gt=phi_gt,
        labels_moving=labels_moving,
        labels_fixed=labels_fixed,
        s_gt=s_gt,
    )
