"""Volumes and their on-disk formats.

Two formats are supported:

* ``raw_f32``: little-endian IEEE-754 float32, z-major then row (y) then
  column (x), with a JSON sidecar ``<path>.json`` describing shape, dtype,
  axis order, voxel spacing and stripe axis. Bit-exact round trips.
* ``tiff_multipage``: uncompressed grayscale multipage TIFF, one page per
  slice. 8/16-bit pages are mapped to [0, 1]; 32-bit float pages are taken
  as-is. Voxel spacing and stripe axis ride along in the ImageDescription
  tag as JSON.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

STRIPE_AXIS_NAMES = ("horizontal", "vertical")


def stripe_axis_degrees(axis):
    """Spatial direction along which stripes run, in degrees over [0, 180).

    0 means stripes run along x (horizontal bands), 90 along y (vertical
    bands). Numeric input is folded into [0, 180).
    """
    if axis == "horizontal":
        return 0.0
    if axis == "vertical":
        return 90.0
    try:
        return float(axis) % 180.0
    except (TypeError, ValueError):
        raise ValueError(
            f"stripe_axis must be 'horizontal', 'vertical' or degrees, got {axis!r}"
        ) from None


@dataclass
class Volume:
    """A real-valued 3D stack of shape (N_d, N_h, N_v) with physical metadata.

    ``voxel_spacing`` is (z, y, x) in micrometers. ``stripe_axis`` is the
    in-slice direction the stripes run along ('horizontal', 'vertical', or
    an angle in degrees).
    """

    data: np.ndarray
    voxel_spacing: tuple = (1.0, 1.0, 1.0)
    stripe_axis: object = "vertical"

    def __post_init__(self):
        self.data = np.asarray(self.data)
        self.voxel_spacing = tuple(float(s) for s in self.voxel_spacing)

    @property
    def shape(self):
        return self.data.shape

    def validate(self):
        if self.data.ndim != 3:
            raise ValueError(f"volume must be 3D, got shape {self.data.shape}")
        n_d, n_h, n_v = self.data.shape
        if n_d < 1 or n_h < 8 or n_v < 8:
            raise ValueError(
                f"volume too small: need N_d >= 1 and in-slice dims >= 8, got {self.data.shape}"
            )
        if not np.issubdtype(self.data.dtype, np.floating):
            raise ValueError(f"volume data must be floating point, got {self.data.dtype}")
        bad = int(np.size(self.data) - np.count_nonzero(np.isfinite(self.data)))
        if bad:
            raise ValueError(f"volume contains {bad} non-finite voxels")
        if len(self.voxel_spacing) != 3 or any(s <= 0 for s in self.voxel_spacing):
            raise ValueError(f"voxel_spacing must be 3 positive values, got {self.voxel_spacing}")
        stripe_axis_degrees(self.stripe_axis)
        return self


def _sidecar_path(path):
    return str(path) + ".json"


def _load_raw(path, expect_dtype="float32"):
    sidecar = _sidecar_path(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"volume file not found: {path}")
    if not os.path.exists(sidecar):
        raise FileNotFoundError(f"raw sidecar not found: {sidecar}")
    with open(sidecar, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    for key in ("shape", "dtype", "order"):
        if key not in meta:
            raise ValueError(f"sidecar {sidecar} missing key '{key}'")
    if meta["dtype"] != expect_dtype:
        raise ValueError(f"sidecar dtype is {meta['dtype']!r}, expected {expect_dtype!r}")
    if meta["order"] != "zyx":
        raise ValueError(f"sidecar order is {meta['order']!r}, expected 'zyx'")
    shape = tuple(int(s) for s in meta["shape"])
    dtype = np.dtype(expect_dtype).newbyteorder("<")
    raw = np.fromfile(path, dtype=dtype)
    n_expected = int(np.prod(shape))
    if raw.size != n_expected:
        raise ValueError(
            f"shape mismatch: sidecar says {shape} ({n_expected} values) "
            f"but file holds {raw.size}"
        )
    data = raw.reshape(shape)
    return data, meta


def load_volume(path, format="raw_f32"):
    """Load a Volume from disk. See module docstring for the formats."""
    if format == "raw_f32":
        data, meta = _load_raw(path, "float32")
        vol = Volume(
            data=data.astype("<f4", copy=False),
            voxel_spacing=tuple(meta.get("voxel_spacing", (1.0, 1.0, 1.0))),
            stripe_axis=meta.get("stripe_axis", "vertical"),
        )
        return vol.validate()
    if format == "tiff_multipage":
        return _load_tiff(path).validate()
    raise ValueError(f"unknown volume format {format!r}")


def save_volume(vol, path, format="raw_f32"):
    """Write a Volume to disk; inverse of :func:`load_volume`."""
    vol.validate()
    if format == "raw_f32":
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        data = np.ascontiguousarray(vol.data, dtype="<f4")
        data.tofile(path)
        meta = {
            "shape": list(vol.data.shape),
            "dtype": "float32",
            "order": "zyx",
            "voxel_spacing": list(vol.voxel_spacing),
            "stripe_axis": vol.stripe_axis,
        }
        with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2)
            fh.write("\n")
        return
    if format == "tiff_multipage":
        _save_tiff(vol, path)
        return
    raise ValueError(f"unknown volume format {format!r}")


def save_mask(mask, path):
    """Write a binary/uint8 3D grid as raw bytes with a JSON sidecar."""
    arr = np.ascontiguousarray(np.asarray(mask), dtype=np.uint8)
    if arr.ndim != 3:
        raise ValueError(f"mask must be 3D, got shape {arr.shape}")
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    arr.tofile(path)
    meta = {"shape": list(arr.shape), "dtype": "uint8", "order": "zyx"}
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def load_mask(path):
    data, _ = _load_raw(path, "uint8")
    return data


def _load_tiff(path):
    from PIL import Image, ImageSequence

    if not os.path.exists(path):
        raise FileNotFoundError(f"volume file not found: {path}")
    im = Image.open(path)
    slices = []
    for page in ImageSequence.Iterator(im):
        if page.mode == "F":
            slices.append(np.asarray(page, dtype=np.float32))
        elif page.mode == "L":
            slices.append(np.asarray(page, dtype=np.float32) / 255.0)
        elif page.mode in ("I;16", "I;16B", "I;16L"):
            slices.append(np.asarray(page, dtype=np.float32) / 65535.0)
        elif page.mode == "I":
            # PIL promotes some 16-bit pages to 32-bit int
            arr = np.asarray(page, dtype=np.float32)
            slices.append(arr / 65535.0)
        else:
            raise ValueError(f"unsupported TIFF page mode {page.mode!r} in {path}")
    data = np.stack(slices, axis=0)
    spacing = (1.0, 1.0, 1.0)
    axis = "vertical"
    desc = im.tag_v2.get(270) if hasattr(im, "tag_v2") else None
    if desc:
        try:
            meta = json.loads(desc)
            spacing = tuple(meta.get("voxel_spacing", spacing))
            axis = meta.get("stripe_axis", axis)
        except (json.JSONDecodeError, TypeError):
            pass
    return Volume(data=data, voxel_spacing=spacing, stripe_axis=axis)


def _save_tiff(vol, path):
    from PIL import Image

    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    data = np.ascontiguousarray(vol.data, dtype=np.float32)
    pages = [Image.fromarray(s, mode="F") for s in data]
    desc = json.dumps(
        {"voxel_spacing": list(vol.voxel_spacing), "stripe_axis": vol.stripe_axis}
    )
    pages[0].save(
        path,
        save_all=True,
        append_images=pages[1:],
        compression=None,
        description=desc,
    )
