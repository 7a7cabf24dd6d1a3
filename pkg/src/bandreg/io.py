"""Volume, field, and render file formats.

NIfTI-1 support is deliberately minimal: the 348-byte header is parsed
directly (either endianness), only scalar datatypes are accepted, and
orientation/affine information is recorded in :class:`VolumeMeta` but
never applied — all math runs in voxel space.  Arrays index as
``[z, y, x]`` (slowest axis first), i.e. grid dims are the header dims
reversed, which keeps the in-memory layout byte-identical to the file.

Fields persist as a JSON manifest next to a flat little-endian binary
payload.  Renders are binary PGM/PPM: zero-dependency, byte-pinnable.
"""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import deform
from .grids import (
    DenseField,
    GridSpec,
    LabelMap,
    LowResField,
    ScalarImage,
    make_grid,
    make_window,
)

__all__ = [
    "NiftiFormatError",
    "VolumeMeta",
    "read_nifti",
    "write_nifti",
    "write_field",
    "read_field",
    "render_slice",
    "render_grid",
    "render_spectrum",
]


class NiftiFormatError(ValueError):
    """Raised for malformed or unsupported NIfTI-1 files."""


# struct layout of the fixed 348-byte header (no padding)
_HDR_FMT = (
    "i10s18sihbb8h3fhhhh8ffffhbbffffii80s24shh6f12f16s4s"
)
_HDR_SIZE = 348
_DTYPES = {2: np.uint8, 4: np.int16, 16: np.float32, 64: np.float64}
_FLOAT32_CODE = 16


@dataclass(frozen=True)
class VolumeMeta:
    dims: tuple[int, ...]
    datatype: int
    spacing: tuple[float, ...]
    scl_slope: float
    scl_inter: float
    source: str = ""


def _maybe_gzip_bytes(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def read_nifti(path, as_labels: bool = False):
    """Read a NIfTI-1 volume into a :class:`ScalarImage` or :class:`LabelMap`.

    Handles plain, gzip-compressed, and paired (.hdr/.img) files, both
    endiannesses, and the scalar datatypes uint8/int16/float32/float64.
    ``scl_slope``/``scl_inter`` are applied when the slope is nonzero.
    With ``as_labels=True`` values are rounded into a label map instead
    of a scalar image.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    blob = _maybe_gzip_bytes(path)
    if len(blob) < _HDR_SIZE:
        raise NiftiFormatError(f"{path}: shorter than a NIfTI-1 header")

    byte_order = "<"
    (sizeof_hdr,) = struct.unpack_from("<i", blob, 0)
    if sizeof_hdr != _HDR_SIZE:
        (sizeof_hdr,) = struct.unpack_from(">i", blob, 0)
        if sizeof_hdr != _HDR_SIZE:
            raise NiftiFormatError(f"{path}: not a NIfTI-1 file (sizeof_hdr != 348)")
        byte_order = ">"

    fields = struct.unpack_from(byte_order + _HDR_FMT, blob, 0)
    dim = fields[7:15]
    datatype = fields[19]
    pixdim = fields[22:30]
    vox_offset = fields[30]
    scl_slope = fields[31]
    scl_inter = fields[32]
    magic = fields[-1]

    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise NiftiFormatError(f"{path}: not a NIfTI-1 file (bad magic {magic!r})")
    ndim = dim[0]
    if ndim > 3:
        raise NiftiFormatError(f"{path}: dim[0] = {ndim} > 3 spatial dims unsupported")
    if ndim < 2:
        raise NiftiFormatError(f"{path}: dim[0] = {ndim}, need 2 or 3 spatial dims")
    if datatype not in _DTYPES:
        raise NiftiFormatError(f"{path}: unsupported datatype code {datatype}")

    header_dims = tuple(int(d) for d in dim[1 : 1 + ndim])
    count = int(np.prod(header_dims))
    dtype = np.dtype(_DTYPES[datatype]).newbyteorder(byte_order)

    if magic == b"n+1\x00":
        payload = blob[int(vox_offset) : int(vox_offset) + count * dtype.itemsize]
    else:
        img_path = path.with_suffix(".img")
        if path.name.endswith(".hdr.gz"):
            img_path = path.with_name(path.name[: -len(".hdr.gz")] + ".img")
        if not img_path.exists():
            raise NiftiFormatError(f"{path}: paired data file {img_path} missing")
        payload = _maybe_gzip_bytes(img_path)[int(vox_offset) : int(vox_offset) + count * dtype.itemsize]
    if len(payload) < count * dtype.itemsize:
        raise NiftiFormatError(f"{path}: truncated payload")

    flat = np.frombuffer(payload, dtype=dtype, count=count)
    # header lists the fastest axis first; our arrays put it last
    values = flat.reshape(header_dims[::-1]).astype(np.float64)
    if scl_slope != 0.0 and (scl_slope, scl_inter) != (1.0, 0.0):
        values = values * float(scl_slope) + float(scl_inter)

    meta = VolumeMeta(
        dims=header_dims,
        datatype=int(datatype),
        spacing=tuple(float(p) for p in pixdim[1 : 1 + ndim]),
        scl_slope=float(scl_slope),
        scl_inter=float(scl_inter),
        source=str(path),
    )
    grid = make_grid(values.shape)
    if as_labels:
        return LabelMap(grid, np.rint(values).astype(np.int64)), meta
    return ScalarImage(grid, values), meta


def write_nifti(volume, path, meta: VolumeMeta | None = None):
    """Write a scalar image, label map, or bare lane as float32 NIfTI-1.

    Single-file layout (magic ``n+1``), payload at offset 352 (348-byte
    header plus four zero extension bytes).  Gzip-compresses when the
    path ends in ``.gz``.
    """
    if isinstance(volume, ScalarImage):
        values = volume.values
    elif isinstance(volume, LabelMap):
        values = volume.values.astype(np.float64)
    else:
        values = np.asarray(volume, dtype=np.float64)
    header_dims = values.shape[::-1]
    ndim = len(header_dims)
    spacing = meta.spacing if meta is not None and len(meta.spacing) == ndim else (1.0,) * ndim

    dim = [ndim, 1, 1, 1, 1, 1, 1, 1]
    dim[1 : 1 + ndim] = header_dims
    pixdim = [0.0] * 8
    pixdim[1 : 1 + ndim] = spacing

    header = struct.pack(
        "<" + _HDR_FMT,
        _HDR_SIZE,
        b"", b"", 0, 0, 0, 0,
        *dim,
        0.0, 0.0, 0.0,
        0,               # intent_code
        _FLOAT32_CODE,   # datatype
        32,              # bitpix
        0,
        *pixdim,
        352.0,           # vox_offset
        1.0, 0.0,        # scl_slope, scl_inter
        0, 0, 0,
        0.0, 0.0, 0.0, 0.0,
        0, 0,
        b"", b"",
        0, 0,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        *([0.0] * 12),
        b"",
        b"n+1\x00",
    )
    blob = header + b"\x00\x00\x00\x00" + values.astype("<f4").tobytes()
    path = Path(path)
    if path.name.endswith(".gz"):
        # fixed mtime so identical volumes produce identical bytes
        path.write_bytes(gzip.compress(blob, mtime=0))
    else:
        path.write_bytes(blob)


def write_field(field, path, dtype: str = "float32"):
    """Persist a dense or low-resolution field: JSON manifest + raw payload.

    The payload is little-endian, channels concatenated in order, C
    layout within each channel.  ``dtype`` may be float32 or float64;
    float64 round-trips bit-exactly.
    """
    if dtype not in ("float32", "float64"):
        raise ValueError(f"dtype must be float32 or float64, got {dtype!r}")
    path = Path(path)
    payload = path.with_suffix(".raw")
    if isinstance(field, DenseField):
        manifest = {
            "kind": "dense",
            "dims": list(field.grid.dims),
            "channels": field.grid.ndim,
        }
        lanes = field.channels
    elif isinstance(field, LowResField):
        manifest = {
            "kind": "lowres",
            "dims": list(field.window.parent.dims),
            "band_dims": list(field.window.band_dims),
            "channels": field.window.parent.ndim,
        }
        lanes = field.channels
    else:
        raise TypeError(f"cannot persist {type(field).__name__}")
    manifest.update({"dtype": dtype, "byte_order": "little", "payload": payload.name})
    np_dtype = "<f4" if dtype == "float32" else "<f8"
    payload.write_bytes(lanes.astype(np_dtype).tobytes())
    path.write_text(json.dumps(manifest, indent=2) + "\n")


def read_field(path):
    """Load a field written by :func:`write_field`; accepts the manifest
    path or a directory containing exactly one ``*.json`` manifest."""
    path = Path(path)
    if path.is_dir():
        manifests = sorted(path.glob("*.json"))
        if len(manifests) != 1:
            raise ValueError(f"{path}: expected exactly one field manifest, found {len(manifests)}")
        path = manifests[0]
    manifest = json.loads(path.read_text())
    dims = tuple(int(m) for m in manifest["dims"])
    channels = int(manifest["channels"])
    if channels != len(dims):
        raise ValueError(f"{path}: channel count {channels} != rank {len(dims)}")
    if manifest.get("byte_order", "little") != "little":
        raise ValueError(f"{path}: unsupported byte order {manifest['byte_order']!r}")
    np_dtype = {"float32": "<f4", "float64": "<f8"}[manifest["dtype"]]

    grid = make_grid(dims)
    if manifest["kind"] == "lowres":
        window = make_window(grid, tuple(int(m) for m in manifest["band_dims"]))
        shape = (channels,) + window.band_dims
    elif manifest["kind"] == "dense":
        shape = (channels,) + dims
    else:
        raise ValueError(f"{path}: unknown field kind {manifest['kind']!r}")

    raw = (path.parent / manifest["payload"]).read_bytes()
    expected = int(np.prod(shape)) * np.dtype(np_dtype).itemsize
    if len(raw) != expected:
        raise ValueError(f"{path}: payload is {len(raw)} bytes, manifest implies {expected}")
    lanes = np.frombuffer(raw, dtype=np_dtype).reshape(shape).astype(np.float64)
    if manifest["kind"] == "lowres":
        return LowResField(window, lanes)
    return DenseField(grid, lanes)


def _to_u8(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.full(values.shape, 128, dtype=np.uint8)
    scaled = (values - lo) / (hi - lo)
    return np.rint(scaled * 255.0).astype(np.uint8)


def _write_pgm(gray: np.ndarray, path):
    h, w = gray.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + gray.tobytes())


def _write_ppm(rgb: np.ndarray, path):
    h, w, _ = rgb.shape
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + rgb.tobytes())


def _slice2d(values: np.ndarray, axis: int, index: int) -> np.ndarray:
    if values.ndim == 2:
        return values
    if not 0 <= index < values.shape[axis]:
        raise IndexError(f"slice index {index} out of range for axis {axis}")
    return np.take(values, index, axis=axis)


def render_slice(image: ScalarImage, path, axis: int = 0, index: int = 0):
    """Min-max normalized 8-bit graymap of one slice (2D images ignore
    axis/index)."""
    _write_pgm(_to_u8(_slice2d(image.values, axis, index)), path)


def render_grid(phi: DenseField, path, stride: int = 8, axis: int = 0, index: int = 0):
    """Deformation-grid rendering: gridlines every ``stride`` voxels,
    displaced by ``phi + Id``, rasterized into a portable pixmap."""
    if stride < 2:
        raise ValueError(f"stride must be >= 2, got {stride}")
    if phi.grid.ndim == 2:
        lanes = phi.channels
    else:
        keep = [d for d in range(3) if d != axis]
        lanes = np.stack([_slice2d(phi.channels[d], axis, index) for d in keep])
    rows, cols = lanes.shape[1:]
    canvas = np.full((rows, cols, 3), 255, dtype=np.uint8)

    def draw(points_r, points_c):
        coords = np.stack([points_r, points_c])
        disp_r = deform._sample(lanes[0], coords)
        disp_c = deform._sample(lanes[1], coords)
        rr = np.rint(points_r + disp_r).astype(np.intp)
        cc = np.rint(points_c + disp_c).astype(np.intp)
        keep = (rr >= 0) & (rr < rows) & (cc >= 0) & (cc < cols)
        canvas[rr[keep], cc[keep]] = (40, 40, 40)

    samples_r = np.arange(0, rows - 1 + 1e-9, 0.125)
    samples_c = np.arange(0, cols - 1 + 1e-9, 0.125)
    for r0 in range(0, rows, stride):
        draw(np.full_like(samples_c, float(r0)), samples_c)
    for c0 in range(0, cols, stride):
        draw(samples_r, np.full_like(samples_r, float(c0)))
    _write_ppm(canvas, path)


def render_spectrum(field: DenseField, path, channel: int = 0, axis: int = 0, index: int = 0):
    """Log-magnitude (log(1+|C|)) graymap of the centered spectrum of one
    channel's slice; band-limited fields light up only the central window."""
    lane = _slice2d(field.channels[channel], axis, index)
    spec = np.fft.fftshift(np.fft.fft2(lane))
    _write_pgm(_to_u8(np.log1p(np.abs(spec))), path)
