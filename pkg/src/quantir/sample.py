"""Per-pixel sample descriptions and the scene generators used for testing.

A :class:`SampleMap` carries what the idler beam sees at each object-plane
pixel: amplitude reflectivity, single-pass amplitude transmission, surface
height and a mask of strongly scattering (metal) regions.  Planes are held
as float64 in memory and written as float32 to the container file.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DataError
from .io import atomic_write_bytes
from .optics import idler_wavelength
from .rng import generator

SAMPLE_MAGIC = b"NLISAMP1"
PLANES = ("r", "tau", "height_map", "scatter_mask")

R_SILICON = 0.55
R_METAL = 0.1


def _plane(values, name):
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise ConfigError(f"{name} must be a 2-D array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SampleMap:
    pixel_pitch: float
    r: np.ndarray
    tau: np.ndarray
    height_map: np.ndarray
    scatter_mask: np.ndarray
    immersion_index: float = 1.0
    seed: int | None = None
    sample_id: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("r", "tau", "height_map"):
            object.__setattr__(self, name, _plane(getattr(self, name), name))
        mask = np.array(self.scatter_mask, dtype=bool, copy=True)
        mask.setflags(write=False)
        object.__setattr__(self, "scatter_mask", mask)
        shape = self.r.shape
        if any(getattr(self, n).shape != shape for n in PLANES):
            raise ConfigError("all sample planes must share one shape")
        if 0 in shape:
            raise ConfigError("sample has zero area")
        if not self.pixel_pitch > 0:
            raise ConfigError("pixel_pitch must be positive")
        for name in ("r", "tau"):
            arr = getattr(self, name)
            if arr.min() < 0 or arr.max() > 1 or not np.isfinite(arr).all():
                raise ConfigError(f"{name} must lie in [0, 1]")
        if not np.isfinite(self.height_map).all():
            raise ConfigError("height_map must be finite")
        if self.immersion_index < 1:
            raise ConfigError("immersion_index must be >= 1")

    @property
    def height(self):
        return self.r.shape[0]

    @property
    def width(self):
        return self.r.shape[1]

    @property
    def shape(self):
        return self.r.shape

    def equals(self, other):
        return (
            self.pixel_pitch == other.pixel_pitch
            and self.immersion_index == other.immersion_index
            and all(np.array_equal(getattr(self, n), getattr(other, n)) for n in PLANES)
        )

    def summary(self):
        out = {
            "width": self.width,
            "height": self.height,
            "pixel_pitch_um": self.pixel_pitch,
            "immersion_index": self.immersion_index,
            "sample_id": self.sample_id,
        }
        for name in ("r", "tau", "height_map"):
            arr = getattr(self, name)
            out[name] = [float(arr.min()), float(arr.max())]
        out["scatter_fraction"] = float(self.scatter_mask.mean())
        return out

    @classmethod
    def uniform(cls, width, height, pixel_pitch, r=0.0, tau=1.0, **kwargs):
        if width <= 0 or height <= 0:
            raise ConfigError("canvas must have positive width and height")
        shape = (int(height), int(width))
        return cls(
            pixel_pitch=pixel_pitch,
            r=np.full(shape, r),
            tau=np.full(shape, tau),
            height_map=np.zeros(shape),
            scatter_mask=np.zeros(shape, dtype=bool),
            **kwargs,
        )


@dataclass(frozen=True)
class SpeckleModel:
    enabled: bool = True
    grain_size: float = 10.0
    amplitude_floor: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not self.grain_size > 0:
            raise ConfigError("grain_size must be positive")
        if not 0 <= self.amplitude_floor <= 1:
            raise ConfigError("amplitude_floor must lie in [0, 1]")


@dataclass(frozen=True)
class Stroke:
    """Axis-aligned rectangle in pixel coordinates: columns x..x+w, rows y..y+h."""

    x: int
    y: int
    w: int
    h: int

    @classmethod
    def parse(cls, item):
        if isinstance(item, dict):
            return cls(int(item["x"]), int(item["y"]), int(item["w"]), int(item["h"]))
        x, y, w, h = (int(v) for v in item)
        return cls(x, y, w, h)


def gen_bar_target(line_width, n_bars, canvas, pixel_pitch, orientation="horizontal"):
    """Three-bar style resolution target: ``n_bars`` reflective bars (r=1)
    separated by equal-width gaps (r=0), centred on the canvas.

    ``canvas`` is ``(width, height)`` in pixels.  Horizontal bars vary along
    rows.  Bar width is ``line_width / pixel_pitch`` and must be a whole
    number of pixels.
    """
    width, height = canvas
    if line_width <= 0:
        raise ConfigError("line_width must be positive")
    if n_bars < 0:
        raise ConfigError("n_bars must be non-negative")
    px = line_width / pixel_pitch
    bar = int(round(px))
    if bar < 1 or abs(px - bar) > 1e-6 * max(1.0, px):
        raise ConfigError(f"line width {line_width} um is not a whole number of {pixel_pitch} um pixels")
    sample = SampleMap.uniform(width, height, pixel_pitch, r=0.0, sample_id="bar-target",
                               params={"line_width_um": line_width, "n_bars": n_bars,
                                       "orientation": orientation})
    if n_bars == 0:
        return sample
    extent = (2 * n_bars - 1) * bar
    axis_len = height if orientation == "horizontal" else width
    if extent > axis_len:
        raise ConfigError(f"{n_bars} bars of {bar} px need {extent} px, canvas has {axis_len}")
    profile = np.zeros(axis_len)
    start = (axis_len - extent) // 2
    for k in range(n_bars):
        a = start + 2 * k * bar
        profile[a:a + bar] = 1.0
    if orientation == "horizontal":
        r = np.repeat(profile[:, None], width, axis=1)
    elif orientation == "vertical":
        r = np.repeat(profile[None, :], height, axis=0)
    else:
        raise ConfigError(f"unknown orientation {orientation!r}")
    return replace(sample, r=r)


def gen_periodic_bars(period, canvas, pixel_pitch, orientation="vertical"):
    """Fill the canvas with a 50 % duty bar grating of the given period (um)."""
    width, height = canvas
    line = period / 2.0
    axis_len = width if orientation == "vertical" else height
    n_bars = max(1, int((axis_len * pixel_pitch + line) // period))
    return gen_bar_target(line, n_bars, canvas, pixel_pitch, orientation)


def default_chip_layout(width, height):
    """Contact pattern loosely shaped like an interconnect test die: a comb of
    vertical lines hanging from a horizontal rail, with isolated pads below
    every other line."""
    line_w = max(2, width // 20)
    pitch = max(2 * line_w + 2, width // 6)
    top, bottom = height // 5, height - height // 4
    rail_h = max(2, height // 16)
    xs = list(range(pitch // 2, width - line_w - pitch // 3 + 1, pitch))
    strokes = [Stroke(x, top, line_w, bottom - top) for x in xs]
    if xs:
        strokes.append(Stroke(xs[0], top - rail_h, xs[-1] + line_w - xs[0], rail_h))
    pad = max(2, min(line_w * 2, (height - bottom) // 2))
    for x in xs[::2]:
        if bottom + pad // 2 + pad <= height and x + pad <= width:
            strokes.append(Stroke(x, bottom + pad // 2, pad, pad))
    return strokes


def gen_chip_contacts(layout, canvas, pixel_pitch, r_si=R_SILICON, r_metal=R_METAL):
    """Silicon substrate with metal contact strokes.

    ``layout`` is a list of :class:`Stroke` (or ``[x, y, w, h]`` lists), or
    ``None`` for :func:`default_chip_layout`.
    """
    width, height = canvas
    if width <= 0 or height <= 0:
        raise ConfigError("canvas must have positive width and height")
    if layout is None:
        layout = default_chip_layout(width, height)
    strokes = [Stroke.parse(s) if not isinstance(s, Stroke) else s for s in layout]
    mask = np.zeros((height, width), dtype=bool)
    for s in strokes:
        if s.w <= 0 or s.h <= 0 or s.x < 0 or s.y < 0 or s.x + s.w > width or s.y + s.h > height:
            raise ConfigError(f"stroke {s} lies outside the {width}x{height} canvas")
        mask[s.y:s.y + s.h, s.x:s.x + s.w] = True
    r = np.where(mask, r_metal, r_si)
    return SampleMap(
        pixel_pitch=pixel_pitch,
        r=r,
        tau=np.ones_like(r),
        height_map=np.zeros_like(r),
        scatter_mask=mask,
        sample_id="chip",
        params={"r_si": r_si, "r_metal": r_metal, "strokes": [[s.x, s.y, s.w, s.h] for s in strokes]},
    )


def bow_profile(shape, sag):
    """Parabolic bow, ``sag`` nm at the centre falling to 0 at the corners."""
    h, w = shape
    v = np.linspace(-1.0, 1.0, h)[:, None] if h > 1 else np.zeros((1, 1))
    u = np.linspace(-1.0, 1.0, w)[None, :] if w > 1 else np.zeros((1, 1))
    return sag * (1.0 - (u ** 2 + v ** 2) / 2.0)


def gen_capped_chip(base, cap_transmission, bend_sag=0.0, immersion_index=1.0):
    """Cover ``base`` with a silicon cap: scale the amplitude transmission,
    add a bending bow to the surface height and record the immersion index."""
    if not 0 <= cap_transmission <= 1:
        raise ConfigError("cap_transmission must lie in [0, 1]")
    if bend_sag < 0:
        raise ConfigError("bend_sag must be non-negative")
    tau = base.tau * cap_transmission
    height = base.height_map
    if bend_sag:
        height = height + bow_profile(base.shape, bend_sag)
    params = dict(base.params)
    params.update(cap_transmission=cap_transmission, bend_sag_nm=bend_sag)
    return replace(base, tau=tau, height_map=height, immersion_index=float(immersion_index),
                   sample_id="capped-" + (base.sample_id or "sample"), params=params)


def value_noise(shape, cell, rng):
    """Smooth random field in [0, 1]: uniform values on a lattice with spacing
    ``cell`` pixels, bilinearly interpolated."""
    h, w = shape
    coarse = rng.random((int(np.ceil(h / cell)) + 2, int(np.ceil(w / cell)) + 2))
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    field_ = ndimage.map_coordinates(coarse, [yy / cell, xx / cell], order=1, mode="nearest")
    return np.clip(field_, 0.0, 1.0)


def apply_speckle(sample, model, lambda_idler=None):
    """Granular amplitude and random height on the scattering regions only."""
    if not model.enabled or not sample.scatter_mask.any():
        return sample
    cell = model.grain_size / sample.pixel_pitch
    if cell < 1:
        raise ConfigError("speckle grain_size must be at least one pixel pitch")
    if lambda_idler is None:
        lambda_idler = idler_wavelength(532.0, 810.0)
    rng = generator(model.seed, "speckle")
    grain = model.amplitude_floor + (1.0 - model.amplitude_floor) * value_noise(sample.shape, cell, rng)
    jitter = rng.uniform(0.0, lambda_idler / 2.0, size=sample.shape)
    mask = sample.scatter_mask
    r = sample.r.copy()
    r[mask] *= grain[mask]
    height = sample.height_map.copy()
    height[mask] += jitter[mask]
    params = dict(sample.params)
    params["speckle"] = {"grain_size_um": model.grain_size, "amplitude_floor": model.amplitude_floor,
                         "seed": model.seed}
    return replace(sample, r=r, height_map=height, seed=model.seed, params=params)


def write_sample(sample, path):
    """Write the ``NLISAMP1`` container: magic, uint32 LE header length, JSON
    header, then one float32 LE row-major plane per field in header order."""
    header = {
        "width": sample.width,
        "height": sample.height,
        "pixel_pitch": sample.pixel_pitch,
        "fields": list(PLANES),
        "dtype": "<f4",
        "seed": sample.seed,
        "immersion_index": sample.immersion_index,
        "sample_id": sample.sample_id,
        "params": sample.params,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    parts = [SAMPLE_MAGIC, struct.pack("<I", len(blob)), blob]
    for name in PLANES:
        parts.append(np.ascontiguousarray(getattr(sample, name), dtype="<f4").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def read_sample(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != SAMPLE_MAGIC:
        raise DataError(f"{path}: not a sample container (bad magic)", offset=0)
    if len(data) < 12:
        raise DataError(f"{path}: truncated header length", offset=len(data))
    (n,) = struct.unpack("<I", data[8:12])
    if len(data) < 12 + n:
        raise DataError(f"{path}: truncated JSON header", offset=len(data))
    try:
        header = json.loads(data[12:12 + n])
    except ValueError as exc:
        raise DataError(f"{path}: malformed JSON header: {exc}", offset=12) from exc
    w, h = int(header["width"]), int(header["height"])
    plane_bytes = w * h * 4
    offset = 12 + n
    planes = {}
    for name in header["fields"]:
        if len(data) < offset + plane_bytes:
            raise DataError(f"{path}: plane {name!r} truncated", offset=len(data))
        planes[name] = np.frombuffer(data, dtype="<f4", count=w * h, offset=offset).reshape(h, w)
        offset += plane_bytes
    if len(data) != offset:
        raise DataError(f"{path}: {len(data) - offset} trailing bytes", offset=offset)
    missing = set(PLANES) - set(planes)
    if missing:
        raise DataError(f"{path}: missing planes {sorted(missing)}", offset=12)
    return SampleMap(
        pixel_pitch=header["pixel_pitch"],
        r=planes["r"],
        tau=planes["tau"],
        height_map=planes["height_map"],
        scatter_mask=planes["scatter_mask"] != 0,
        immersion_index=header.get("immersion_index", 1.0),
        seed=header.get("seed"),
        sample_id=header.get("sample_id", ""),
        params=header.get("params", {}),
    )
