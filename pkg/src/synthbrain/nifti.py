"""Minimal NIfTI-1 reader/writer (single-file ``.nii`` / ``.nii.gz``).

Scope: 3D scalar/label volumes and 4D channels-last soft segmentation
maps, little- or big-endian, with scale slope/intercept applied on read.
Writing always emits little-endian files with a diagonal sform affine
and a fixed (zero) gzip timestamp so repeated runs are byte-identical.
"""

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .labels import SoftSegMap
from .volume import INTENSITY, LABEL, Volume

HEADER_SIZE = 348
VOX_OFFSET = 352
MAGIC_SINGLE = b"n+1\x00"
MAGIC_PAIR = b"ni1\x00"

_DTYPES = {
    2: np.dtype(np.uint8),
    4: np.dtype(np.int16),
    8: np.dtype(np.int32),
    16: np.dtype(np.float32),
    64: np.dtype(np.float64),
    256: np.dtype(np.int8),
    512: np.dtype(np.uint16),
    768: np.dtype(np.uint32),
    1024: np.dtype(np.int64),
}
_CODES = {v: k for k, v in _DTYPES.items()}


class NiftiParseError(ValueError):
    """File-level parse failure; ``reason`` is a stable machine tag."""

    def __init__(self, message, reason="bad-header"):
        super().__init__(message)
        self.reason = reason


@dataclass(frozen=True)
class NiftiHeader:
    dims: tuple
    datatype: int
    spacing: tuple
    affine: np.ndarray
    scl_slope: float
    scl_inter: float

    def __post_init__(self):
        if self.datatype not in _DTYPES:
            raise NiftiParseError(f"unsupported datatype code {self.datatype}",
                                  reason="unsupported-datatype")
        if any(d < 1 for d in self.dims):
            raise NiftiParseError(f"non-positive dims {self.dims}")
        if any(s <= 0 for s in self.spacing):
            raise NiftiParseError(f"non-positive voxel spacing {self.spacing}")


def _read_bytes(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
        rest = fh.read()
    raw = head + rest
    if head == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise NiftiParseError(f"corrupt gzip stream: {exc}",
                                  reason="truncated") from exc
    return raw


def _parse_header(raw, path):
    if len(raw) < VOX_OFFSET:
        raise NiftiParseError(
            f"{path}: truncated header, need bytes 0..{VOX_OFFSET - 1} "
            f"but file has {len(raw)}", reason="truncated")
    order = "<"
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != HEADER_SIZE:
        (sizeof_hdr_be,) = struct.unpack_from(">i", raw, 0)
        if sizeof_hdr_be == HEADER_SIZE:
            order = ">"
        else:
            raise NiftiParseError(
                f"{path}: sizeof_hdr is {sizeof_hdr}, expected {HEADER_SIZE}")
    magic = raw[344:348]
    if magic == MAGIC_PAIR:
        raise NiftiParseError(
            f"{path}: detached header/image pairs are not supported",
            reason="bad-magic")
    if magic != MAGIC_SINGLE:
        raise NiftiParseError(f"{path}: bad magic {magic!r}", reason="bad-magic")

    dim = struct.unpack_from(f"{order}8h", raw, 40)
    ndim = dim[0]
    if ndim not in (3, 4):
        raise NiftiParseError(f"{path}: unsupported rank {ndim} (want 3 or 4)")
    dims = tuple(int(d) for d in dim[1:1 + ndim])
    (datatype,) = struct.unpack_from(f"{order}h", raw, 70)
    pixdim = struct.unpack_from(f"{order}8f", raw, 76)
    (vox_offset,) = struct.unpack_from(f"{order}f", raw, 108)
    scl_slope, scl_inter = struct.unpack_from(f"{order}2f", raw, 112)
    (sform_code,) = struct.unpack_from(f"{order}h", raw, 254)
    srow = struct.unpack_from(f"{order}12f", raw, 280)

    spacing = tuple(float(p) for p in pixdim[1:4])
    affine = np.eye(4)
    if sform_code > 0:
        affine[:3, :] = np.asarray(srow, dtype=np.float64).reshape(3, 4)
    else:
        affine[0, 0], affine[1, 1], affine[2, 2] = spacing
    header = NiftiHeader(dims, int(datatype), spacing, affine,
                         float(scl_slope), float(scl_inter))
    return header, order, int(vox_offset)


def read_header(path):
    header, _, _ = _parse_header(_read_bytes(path), path)
    return header


def read_nifti(path, kind=None):
    """Load a 3D volume (label if the on-disk type is integer and no
    scaling applies, else intensity) or a 4D channels-last soft map.

    ``kind`` forces the 3D interpretation ("intensity" or "label").
    """
    raw = _read_bytes(path)
    header, order, vox_offset = _parse_header(raw, path)
    dtype = _DTYPES[header.datatype].newbyteorder(order)
    count = int(np.prod(header.dims))
    need = vox_offset + count * dtype.itemsize
    if len(raw) < need:
        raise NiftiParseError(
            f"{path}: truncated data, need bytes {vox_offset}..{need - 1} "
            f"but file has {len(raw)}", reason="truncated")
    flat = np.frombuffer(raw, dtype=dtype, count=count, offset=vox_offset)
    data = flat.reshape(header.dims, order="F")

    slope, inter = header.scl_slope, header.scl_inter
    scaled = False
    if slope not in (0.0, 1.0) or (slope != 0.0 and inter != 0.0):
        data = data.astype(np.float64) * slope + inter
        scaled = True

    if len(header.dims) == 4:
        channels = np.moveaxis(data.astype(np.float64), -1, 0)
        return SoftSegMap(channels, tuple(range(header.dims[3])),
                          header.spacing)
    if kind is None:
        is_int = np.issubdtype(_DTYPES[header.datatype], np.integer)
        kind = LABEL if (is_int and not scaled) else INTENSITY
    return Volume(np.asarray(data), header.spacing, kind)


def _pack_header(dims, datatype, spacing, nchannels=None):
    buf = bytearray(VOX_OFFSET)
    struct.pack_into("<i", buf, 0, HEADER_SIZE)
    ndim = 4 if nchannels is not None else 3
    dim = [ndim] + list(dims) + ([nchannels] if nchannels else []) + [1] * 8
    struct.pack_into("<8h", buf, 40, *dim[:8])
    struct.pack_into("<h", buf, 70, datatype)
    struct.pack_into("<h", buf, 72, _DTYPES[datatype].itemsize * 8)
    pixdim = [1.0] + list(spacing) + [1.0] * 5
    struct.pack_into("<8f", buf, 76, *pixdim[:8])
    struct.pack_into("<f", buf, 108, float(VOX_OFFSET))
    struct.pack_into("<2f", buf, 112, 1.0, 0.0)   # scl_slope, scl_inter
    struct.pack_into("<B", buf, 123, 2)           # spatial units: mm
    struct.pack_into("<80s", buf, 148, b"synthbrain")
    struct.pack_into("<2h", buf, 252, 0, 1)       # qform unset, sform scaled
    srow = np.zeros((3, 4), dtype=np.float64)
    srow[0, 0], srow[1, 1], srow[2, 2] = spacing
    struct.pack_into("<12f", buf, 280, *srow.reshape(-1))
    struct.pack_into("<4s", buf, 344, MAGIC_SINGLE)
    return bytes(buf)


def _write_bytes(path, payload):
    path = str(path)
    if path.endswith(".gz"):
        with open(path, "wb") as fh:
            with gzip.GzipFile(fileobj=fh, mode="wb", mtime=0, filename="") as gz:
                gz.write(payload)
    else:
        with open(path, "wb") as fh:
            fh.write(payload)


def write_nifti(path, obj, dtype=None):
    """Write a Volume (3D) or SoftSegMap (4D channels-last) as NIfTI-1.

    Default on-disk types: float32 for intensities and soft maps, int32
    for labels. Pass ``dtype`` to override the intensity type.
    """
    if isinstance(obj, SoftSegMap):
        out = np.moveaxis(obj.data, 0, -1).astype(np.float32)
        header = _pack_header(obj.dims, _CODES[np.dtype(np.float32)],
                              obj.spacing, nchannels=obj.num_classes)
        _write_bytes(path, header + out.tobytes(order="F"))
        return
    if not isinstance(obj, Volume):
        raise TypeError(f"cannot write object of type {type(obj).__name__}")
    if obj.kind == LABEL:
        arr = obj.data.astype(np.int32)
    else:
        arr = obj.data.astype(np.dtype(dtype) if dtype is not None else np.float32)
    code = _CODES.get(arr.dtype)
    if code is None:
        raise ValueError(f"unsupported on-disk dtype {arr.dtype}")
    header = _pack_header(obj.dims, code, obj.spacing)
    _write_bytes(path, header + arr.tobytes(order="F"))
