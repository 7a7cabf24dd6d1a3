"""Grid containers shared by every other module.

Conventions fixed here and relied on everywhere else:

* arrays are row-major (C order) with the fastest-varying axis last,
* all coordinates and displacements are in voxel units (spacing is 1),
* a vector field stores one channel per spatial axis, channel ``d``
  displacing array axis ``d``,
* every spatial extent is even and >= 4 so that centered frequency
  windows are unambiguous.

All containers are immutable after construction (their arrays are
frozen), so they are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GridSpec",
    "CropWindow",
    "ScalarImage",
    "DenseField",
    "LowResField",
    "BandSpectrum",
    "LabelMap",
    "make_grid",
    "make_window",
]


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GridSpec:
    """Spatial extents of a full-resolution 2D or 3D grid."""

    dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.dims) not in (2, 3):
            raise ValueError(f"grid must be 2D or 3D, got {len(self.dims)} extents")
        for axis, m in enumerate(self.dims):
            if m < 4:
                raise ValueError(f"axis {axis} extent {m} < 4")
            if m % 2 != 0:
                raise ValueError(f"axis {axis} extent odd: {m}")
        object.__setattr__(self, "dims", tuple(int(m) for m in self.dims))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def voxels(self) -> int:
        return int(np.prod(self.dims))


@dataclass(frozen=True)
class CropWindow:
    """Centered low-frequency window of a parent grid.

    Along an axis of parent extent ``m`` and band extent ``m_c`` the
    window covers centered-layout indices ``[m/2 - m_c/2, m/2 + m_c/2)``.
    The reduction factor per axis (parent extent / band extent) must be
    an even positive integer.
    """

    parent: GridSpec
    band_dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.band_dims) != self.parent.ndim:
            raise ValueError(
                f"band dims rank {len(self.band_dims)} != grid rank {self.parent.ndim}"
            )
        for axis, (m, mc) in enumerate(zip(self.parent.dims, self.band_dims)):
            if mc < 2:
                raise ValueError(f"axis {axis} band extent {mc} < 2")
            if mc % 2 != 0:
                raise ValueError(f"axis {axis} band extent odd: {mc}")
            if m % mc != 0:
                raise ValueError(
                    f"axis {axis}: band extent {mc} does not divide parent extent {m}"
                )
            if (m // mc) % 2 != 0:
                raise ValueError(
                    f"axis {axis}: reduction factor {m // mc} is odd (must be even)"
                )
        object.__setattr__(self, "band_dims", tuple(int(m) for m in self.band_dims))

    @property
    def factors(self) -> tuple[int, ...]:
        return tuple(m // mc for m, mc in zip(self.parent.dims, self.band_dims))

    @property
    def gain(self) -> int:
        """Product of the reduction factors, a*b in 2D and a*b*c in 3D."""
        return int(np.prod(self.factors))

    @property
    def band_voxels(self) -> int:
        return int(np.prod(self.band_dims))

    def slices(self) -> tuple[slice, ...]:
        """Centered-layout index slices of the window inside the parent grid."""
        return tuple(
            slice(m // 2 - mc // 2, m // 2 + mc // 2)
            for m, mc in zip(self.parent.dims, self.band_dims)
        )

    def mask_centered(self) -> np.ndarray:
        """Boolean sampling mask over the parent grid in centered layout.

        True on the low-frequency positions the window keeps; the
        leading (most negative frequency) plane of the window along each
        axis is excluded because it is zeroed by the crop.
        """
        mask = np.zeros(self.parent.dims, dtype=bool)
        mask[self.slices()] = True
        for axis, sl in enumerate(self.slices()):
            index = [slice(None)] * self.parent.ndim
            index[axis] = sl.start
            mask[tuple(index)] = False
        return mask


@dataclass(frozen=True)
class ScalarImage:
    """Real-valued intensity image on a full-resolution grid."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = _frozen(self.values, np.float64)
        if arr.shape != self.grid.dims:
            raise ValueError(f"values shape {arr.shape} != grid dims {self.grid.dims}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class DenseField:
    """Full-resolution vector field, one channel per axis, voxel units.

    Holds either a displacement field or a stationary velocity field;
    ``channels`` has shape ``(ndim, *dims)``.
    """

    grid: GridSpec
    channels: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = _frozen(self.channels, np.float64)
        expected = (self.grid.ndim,) + self.grid.dims
        if arr.shape != expected:
            raise ValueError(f"channels shape {arr.shape} != {expected}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "channels", arr)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "DenseField":
        return cls(grid, np.zeros((grid.ndim,) + grid.dims))


@dataclass(frozen=True)
class LowResField:
    """Real-valued field on the band grid: the optimizable parameterization.

    Scaled so that its decoded full-resolution field takes the same
    values at the subsampled lattice points (see :mod:`bandreg.spectral`).
    """

    window: CropWindow
    channels: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = _frozen(self.channels, np.float64)
        expected = (self.window.parent.ndim,) + self.window.band_dims
        if arr.shape != expected:
            raise ValueError(f"channels shape {arr.shape} != {expected}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "channels", arr)

    @classmethod
    def zeros(cls, window: CropWindow) -> "LowResField":
        return cls(window, np.zeros((window.parent.ndim,) + window.band_dims))


@dataclass(frozen=True)
class BandSpectrum:
    """Complex coefficients of the band-limited patch, centered layout.

    DC sits at index ``band_dims/2``.  Spectra produced by the crop
    operation have their leading plane along each axis zeroed; the pad
    operation enforces that before embedding (see :mod:`bandreg.spectral`).
    """

    window: CropWindow
    channels: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = _frozen(self.channels, np.complex128)
        expected = (self.window.parent.ndim,) + self.window.band_dims
        if arr.shape != expected:
            raise ValueError(f"channels shape {arr.shape} != {expected}")
        object.__setattr__(self, "channels", arr)


@dataclass(frozen=True)
class LabelMap:
    """Integer segmentation volume used for overlap metrics."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = _frozen(self.values, np.int64)
        if arr.shape != self.grid.dims:
            raise ValueError(f"values shape {arr.shape} != grid dims {self.grid.dims}")
        if arr.min(initial=0) < 0:
            raise ValueError("labels must be non-negative")
        object.__setattr__(self, "values", arr)

    def labels(self) -> list[int]:
        """Sorted non-background labels present in the map."""
        present = np.unique(self.values)
        return [int(v) for v in present if v != 0]


def make_grid(dims) -> GridSpec:
    """Validate spatial extents and return a :class:`GridSpec`."""
    return GridSpec(tuple(int(m) for m in dims))


def make_window(grid: GridSpec, band_dims) -> CropWindow:
    """Validate band extents against ``grid`` and return a :class:`CropWindow`."""
    return CropWindow(grid, tuple(int(m) for m in band_dims))
