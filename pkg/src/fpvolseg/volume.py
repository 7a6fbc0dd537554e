"""Dense 3D volumes, the FPVOL container format, and basic preprocessing.

Arrays are laid out (z, y, x) in C order, so x varies fastest.  Every
volume holds float32 data in memory; masks are 0/1 floats and are narrowed
to u8 only on disk.
"""

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptFileError, DimensionError, FormatError, KindError, ParameterError
from .validation import check_kind, check_same_geometry

MAGIC = b"FPVOL001"
FORMAT_VERSION = "FPVOL001"
DEFAULT_SPACING_MM = (1.5, 1.5, 1.5)
KINDS = ("image", "probability", "mask")
_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}
_ZSCORE_EPS = 1e-8


@dataclass(frozen=True)
class Volume3D:
    """Single-channel scalar grid with physical voxel spacing in mm.

    ``data`` is copied into a read-only float32 array so volumes can be
    shared between workers without defensive copies.
    """

    data: np.ndarray
    spacing_mm: tuple = DEFAULT_SPACING_MM
    kind: str = "image"

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float32, order="C", copy=True)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise DimensionError(f"volume data must be a non-empty 3D array, got shape {arr.shape}")
        spacing = tuple(float(s) for s in self.spacing_mm)
        if len(spacing) != 3 or not all(s > 0 and np.isfinite(s) for s in spacing):
            raise ParameterError(f"spacing_mm must be 3 positive reals, got {self.spacing_mm}")
        if self.kind not in KINDS:
            raise KindError(f"unknown volume kind {self.kind!r}")
        if self.kind == "mask" and not np.all((arr == 0) | (arr == 1)):
            raise KindError("mask volumes must contain only 0 and 1")
        if self.kind == "probability" and not np.all((arr >= 0) & (arr <= 1)):
            raise KindError("probability volumes must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing_mm", spacing)

    @property
    def shape(self):
        return self.data.shape

    @property
    def voxel_volume_mm3(self):
        return float(np.prod(self.spacing_mm))

    def with_data(self, data, kind=None):
        """New volume on the same grid."""
        return Volume3D(data, self.spacing_mm, kind or self.kind)

    def __eq__(self, other):
        if not isinstance(other, Volume3D):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.spacing_mm == other.spacing_mm
            and self.shape == other.shape
            and self.data.tobytes() == other.data.tobytes()
        )

    __hash__ = None


@dataclass(frozen=True)
class MultiChannelVolume:
    """Co-registered channels; by convention channel 0 is CT and channel 1 is PET."""

    channels: tuple = field(default_factory=tuple)

    def __post_init__(self):
        channels = tuple(self.channels)
        if not channels:
            raise DimensionError("a multi-channel volume needs at least one channel")
        for ch in channels[1:]:
            check_same_geometry(channels[0], ch)
        object.__setattr__(self, "channels", channels)

    @property
    def shape(self):
        return self.channels[0].shape

    @property
    def spacing_mm(self):
        return self.channels[0].spacing_mm

    @property
    def n_channels(self):
        return len(self.channels)

    def as_array(self, dtype=np.float32):
        """Stacked array of shape (channels, z, y, x)."""
        return np.stack([ch.data for ch in self.channels]).astype(dtype, copy=False)


def save_volume(v, path):
    """Write ``v`` to ``path`` in FPVOL format.

    The file is written to a temporary sibling and renamed into place.
    """
    dtype = "u8" if v.kind == "mask" else "f32"
    header = json.dumps(
        {
            "shape": [int(s) for s in v.shape],
            "spacing_mm": list(v.spacing_mm),
            "dtype": dtype,
            "kind": v.kind,
        }
    ).encode("utf-8")
    payload = v.data.astype(_DTYPES[dtype], copy=False).tobytes(order="C")
    blob = MAGIC + struct.pack("<I", len(header)) + header + payload
    atomic_write_bytes(path, blob)


def load_volume(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    return decode_volume(blob)


def decode_volume(blob):
    if len(blob) < 12 or blob[:8] != MAGIC:
        raise FormatError("not an FPVOL file (bad magic)")
    (hlen,) = struct.unpack("<I", blob[8:12])
    if 12 + hlen > len(blob):
        raise CorruptFileError("header length exceeds file size")
    try:
        header = json.loads(blob[12 : 12 + hlen].decode("utf-8"))
        shape = tuple(int(s) for s in header["shape"])
        spacing = tuple(float(s) for s in header["spacing_mm"])
        dtype = _DTYPES[header["dtype"]]
        kind = header["kind"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptFileError(f"malformed FPVOL header: {exc}") from exc
    if len(shape) != 3:
        raise CorruptFileError(f"header shape must have 3 entries, got {shape}")
    payload = blob[12 + hlen :]
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(payload) != expected:
        raise CorruptFileError(
            f"payload holds {len(payload)} bytes, header {shape}/{header['dtype']} needs {expected}"
        )
    data = np.frombuffer(payload, dtype=dtype).reshape(shape)
    return Volume3D(data, spacing, kind)


def atomic_write_bytes(path, blob):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def stack_channels(ct, pet):
    if ct.shape != pet.shape:
        raise DimensionError(f"CT {ct.shape} and PET {pet.shape} shapes differ")
    return MultiChannelVolume((ct, pet))


def normalize_zscore(v):
    """Standardize an image to zero mean and unit population std.

    Constant images map to all zeros.
    """
    check_kind(v, "image")
    x = v.data.astype(np.float64)
    std = x.std()
    if std < _ZSCORE_EPS:
        return v.with_data(np.zeros_like(x))
    return v.with_data((x - x.mean()) / std)


def normalize_channels(mc):
    return MultiChannelVolume(tuple(normalize_zscore(ch) for ch in mc.channels))


def flip_array(arr, flips):
    """Reverse the trailing three axes of ``arr`` where ``flips`` is true."""
    axes = [arr.ndim - 3 + i for i, f in enumerate(flips) if f]
    return np.flip(arr, axis=axes) if axes else arr


def draw_flips(rng):
    return tuple(bool(f) for f in rng.random(3) < 0.5)


def random_flip(mc, mask, rng):
    """Flip every channel and the mask along the same randomly chosen axes."""
    if mask.shape != mc.shape:
        raise DimensionError(f"mask shape {mask.shape} differs from image shape {mc.shape}")
    flips = draw_flips(rng)
    channels = tuple(ch.with_data(flip_array(ch.data, flips)) for ch in mc.channels)
    return MultiChannelVolume(channels), mask.with_data(flip_array(mask.data, flips))
