"""DFT primitives and the band-limited encode/decode transforms.

Transform convention, pinned by tests against hand-expanded sums:

* forward: unnormalized, ``C[k] = sum_x f[x] exp(-2i*pi*<k, x/dims>)``
  (what :func:`numpy.fft.fftn` computes),
* inverse: ``1/prod(dims)`` times the conjugate-exponent sum.

Layouts: "corner" means DC at index 0, "centered" means DC at
``dims/2`` (even extents only, so the two shifts coincide).

The decoder maps a real low-resolution field ``s`` on the band grid to
a full-resolution field whose spectrum is zero outside the centered
window: take the centered DFT of ``s``, zero the leading (most negative
frequency) plane per axis, embed into a zero full-grid spectrum, and
inverse-transform.  The leading-plane zeroing is required because those
bins have no conjugate partner after embedding, and keeping them would
make the output complex.  The decoder multiplies by the product of the
reduction factors so that a constant ``s == c`` decodes to a constant
displacement of ``c`` voxels; with that scaling the decoded field
agrees with ``s`` at the subsampled lattice points.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .grids import BandSpectrum, CropWindow, DenseField, GridSpec, LowResField

__all__ = [
    "FullSpectrum",
    "dft",
    "idft",
    "shift_center",
    "unshift_center",
    "crop_center",
    "pad_center",
    "decode",
    "encode",
    "decode_adjoint",
    "band_energy_split",
]

# Error threshold for the Hermitian-symmetry guard in idft; property
# tests pin the much tighter 1e-9 bound.
_IMAG_TOL = 1e-6


@dataclass(frozen=True)
class FullSpectrum:
    """Complex full-grid spectrum with an explicit DC-position layout."""

    grid: GridSpec
    channels: np.ndarray = dataclass_field(repr=False)
    layout: str = "corner"

    def __post_init__(self):
        arr = np.array(self.channels, dtype=np.complex128)
        arr.flags.writeable = False
        if arr.ndim != self.grid.ndim + 1 or arr.shape[1:] != self.grid.dims:
            raise ValueError(f"channels shape {arr.shape} incompatible with grid {self.grid.dims}")
        if self.layout not in ("corner", "centered"):
            raise ValueError(f"unknown layout {self.layout!r}")
        object.__setattr__(self, "channels", arr)


def _spatial_axes(lanes: np.ndarray) -> tuple[int, ...]:
    return tuple(range(1, lanes.ndim))


def _as_lanes(field) -> tuple[np.ndarray, GridSpec | None]:
    """Accept a DenseField (stacked lanes) or a bare array (a single lane)."""
    if isinstance(field, DenseField):
        return field.channels, field.grid
    arr = np.asarray(field, dtype=np.float64)
    return arr[None], None


def dft(field):
    """Unnormalized forward transform of a vector field or a bare lane.

    Returns a corner-layout :class:`FullSpectrum` for a
    :class:`~bandreg.grids.DenseField` input, or a plain complex array of
    the input's shape for an ndarray input.
    """
    lanes, grid = _as_lanes(field)
    spec = np.fft.fftn(lanes, axes=_spatial_axes(lanes))
    if grid is None:
        return spec[0]
    return FullSpectrum(grid, spec, layout="corner")


def idft(spec):
    """Inverse transform of a corner-layout spectrum.

    Returns ``(lanes, imag_residual)`` where ``lanes`` is the real part
    and ``imag_residual`` is the largest leftover imaginary magnitude.

    Raises
    ------
    ValueError
        If the spectrum is not corner layout, or the imaginary residual
        exceeds ``1e-6`` relative to the real part (a non-Hermitian
        spectrum, which signals a shift or padding convention bug).
    """
    if isinstance(spec, FullSpectrum):
        if spec.layout != "corner":
            raise ValueError("idft expects corner layout; apply unshift_center first")
        lanes = spec.channels
        squeeze = False
    else:
        lanes = np.asarray(spec, dtype=np.complex128)[None]
        squeeze = True
    out = np.fft.ifftn(lanes, axes=_spatial_axes(lanes))
    real = out.real
    residual = float(np.max(np.abs(out.imag))) if out.size else 0.0
    if residual > _IMAG_TOL * (float(np.max(np.abs(real), initial=0.0)) + 1e-12):
        raise ValueError(
            f"non-Hermitian spectrum: imaginary residual {residual:.3e}"
        )
    if squeeze:
        return real[0], residual
    return real, residual


def shift_center(spec: FullSpectrum) -> FullSpectrum:
    """Rotate a corner-layout spectrum so DC sits at ``dims/2``."""
    if spec.layout != "corner":
        raise ValueError("shift_center expects corner layout")
    shifted = np.fft.fftshift(spec.channels, axes=_spatial_axes(spec.channels))
    return FullSpectrum(spec.grid, shifted, layout="centered")


def unshift_center(spec: FullSpectrum) -> FullSpectrum:
    """Inverse of :func:`shift_center` (identical rotation for even extents)."""
    if spec.layout != "centered":
        raise ValueError("unshift_center expects centered layout")
    shifted = np.fft.ifftshift(spec.channels, axes=_spatial_axes(spec.channels))
    return FullSpectrum(spec.grid, shifted, layout="corner")


def _zero_leading_planes(block: np.ndarray) -> np.ndarray:
    """Zero index 0 of every spatial axis of a centered band block (in place).

    Index 0 holds the band's most negative frequency, whose conjugate
    partner lies outside the window after embedding.
    """
    for axis in _spatial_axes(block):
        index = [slice(None)] * block.ndim
        index[axis] = 0
        block[tuple(index)] = 0.0
    return block


def crop_center(spec: FullSpectrum, window: CropWindow) -> BandSpectrum:
    """Extract the centered low-frequency window of a centered spectrum.

    The leading plane of the cropped block along each axis is set to
    exactly zero so that padding the result back preserves realness.
    """
    if spec.layout != "centered":
        raise ValueError("crop_center expects centered layout")
    if spec.grid.dims != window.parent.dims:
        raise ValueError(f"window parent {window.parent.dims} != spectrum grid {spec.grid.dims}")
    block = spec.channels[(slice(None),) + window.slices()].copy()
    _zero_leading_planes(block)
    return BandSpectrum(window, block)


def pad_center(band: BandSpectrum) -> FullSpectrum:
    """Embed a band patch into an otherwise zero centered full spectrum."""
    block = band.channels
    for axis in _spatial_axes(block):
        index = [slice(None)] * block.ndim
        index[axis] = 0
        if np.any(block[tuple(index)] != 0):
            raise ValueError(
                f"band spectrum has nonzero leading plane on axis {axis - 1}; "
                "decode output would not be real"
            )
    window = band.window
    full = np.zeros((block.shape[0],) + window.parent.dims, dtype=np.complex128)
    full[(slice(None),) + window.slices()] = block
    return FullSpectrum(window.parent, full, layout="centered")


def _band_dft_centered(lanes: np.ndarray) -> np.ndarray:
    """Centered, leading-plane-zeroed DFT of band-grid lanes."""
    axes = _spatial_axes(lanes)
    spec = np.fft.fftshift(np.fft.fftn(lanes, axes=axes), axes=axes)
    return _zero_leading_planes(spec)


def _decode_lanes(s: np.ndarray, window: CropWindow) -> np.ndarray:
    axes = _spatial_axes(s)
    block = _band_dft_centered(np.asarray(s, dtype=np.float64))
    full = np.zeros((s.shape[0],) + window.parent.dims, dtype=np.complex128)
    full[(slice(None),) + window.slices()] = block
    out = np.fft.ifftn(np.fft.ifftshift(full, axes=axes), axes=axes)
    residual = float(np.max(np.abs(out.imag)))
    real_max = float(np.max(np.abs(out.real), initial=0.0))
    if residual > _IMAG_TOL * (real_max + 1e-12):
        raise ValueError(f"non-Hermitian spectrum: imaginary residual {residual:.3e}")
    return window.gain * out.real


def decode(s: LowResField) -> DenseField:
    """Zero-pad + inverse-DFT decoder from the band grid to full resolution.

    The output is exactly band-limited: its forward transform vanishes
    outside the centered window.  The map is linear in ``s``, and for
    any ``s`` free of leading-plane (Nyquist) energy the decoded field
    equals ``s`` at the subsampled lattice points.
    """
    return DenseField(s.window.parent, _decode_lanes(s.channels, s.window))


def _encode_lanes(phi: np.ndarray, window: CropWindow) -> tuple[np.ndarray, np.ndarray]:
    axes = _spatial_axes(phi)
    spec = np.fft.fftshift(np.fft.fftn(phi, axes=axes), axes=axes)
    block = spec[(slice(None),) + window.slices()].copy()
    _zero_leading_planes(block)
    small = np.fft.ifftn(np.fft.ifftshift(block, axes=axes), axes=axes)
    return block, small.real / window.gain


def encode(phi: DenseField, window: CropWindow) -> tuple[BandSpectrum, LowResField]:
    """Band-limiting transform: crop the spectrum and return its small-grid field.

    ``B`` is the centered window of the unnormalized full transform
    (leading planes zeroed).  ``S`` is scaled to invert :func:`decode`
    on the band-limited subspace, i.e. ``encode(decode(s))[1] == s`` up
    to the leading-plane zeroing; equivalently ``S`` equals the
    band-limited part of ``phi`` at the subsampled lattice points.  The
    unnormalized small-grid inverse of ``B`` (the raw convention, where
    a constant field ``c`` encodes to ``gain * c``) is ``gain * S``.
    """
    if phi.grid.dims != window.parent.dims:
        raise ValueError(f"field grid {phi.grid.dims} != window parent {window.parent.dims}")
    block, small = _encode_lanes(phi.channels, window)
    return BandSpectrum(window, block), LowResField(window, small)


def _decode_adjoint_lanes(g: np.ndarray, window: CropWindow) -> np.ndarray:
    # Transpose of the decode linear map.  Conjugate-transposing each
    # factor of decode collapses all normalization constants to one:
    # full forward FFT, center, crop with leading-plane zeroing, then a
    # small-grid normalized inverse FFT.
    axes = _spatial_axes(g)
    spec = np.fft.fftshift(np.fft.fftn(np.asarray(g, dtype=np.float64), axes=axes), axes=axes)
    block = spec[(slice(None),) + window.slices()].copy()
    _zero_leading_planes(block)
    out = np.fft.ifftn(np.fft.ifftshift(block, axes=axes), axes=axes)
    return out.real


def decode_adjoint(g: DenseField, window: CropWindow) -> LowResField:
    """Adjoint of :func:`decode`: pulls a full-grid gradient back to the band grid.

    Satisfies ``<decode(s), g> == <s, decode_adjoint(g)>`` for all ``s``
    and ``g`` (dense inner products over channels and voxels).
    """
    if g.grid.dims != window.parent.dims:
        raise ValueError(f"gradient grid {g.grid.dims} != window parent {window.parent.dims}")
    return LowResField(window, _decode_adjoint_lanes(g.channels, window))


def band_energy_split(phi: DenseField, window: CropWindow) -> tuple[float, float]:
    """Spectral energy of ``phi`` inside and outside the band window.

    Returns ``(in_band, out_of_band)`` sums of squared coefficient
    magnitudes over all channels.  Useful for reporting how far a field
    (for example an exponentiated velocity) strays from band-limitedness.
    """
    axes = _spatial_axes(phi.channels)
    spec = np.fft.fftshift(np.fft.fftn(phi.channels, axes=axes), axes=axes)
    power = np.abs(spec) ** 2
    mask = window.mask_centered()
    in_band = float(power[:, mask].sum())
    return in_band, max(float(power.sum() - in_band), 0.0)
