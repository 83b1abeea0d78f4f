"""Forward model: interference frames of the signal beam for a scanned sample.

Per pixel the detected signal intensity is

    I = i0 * (1 + mu * tau**2 * r * cos(phi_ref - 4 pi (z + height) / lambda_idler))

i.e. the fringe visibility is set by the idler's round-trip transmission and
reflection while its phase follows the sample position.  Blur, shot noise,
read noise and 16-bit quantization are layered on top to mimic a camera.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DataError
from .io import atomic_write_bytes, dump_json, atomic_write_text
from .optics import OpticalConfig, ScanPlan, acquisition_time, phase_from_z, scan_positions
from .rng import frame_generator

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
STACK_FORMAT = "quantir-stack/1"
DEFAULT_I0 = 1000.0
U16_MAX = 65535


def pixel_intensity(r, tau, mu, phi_total, i0):
    """Signal counts for one pixel (or element-wise for arrays)."""
    return i0 * (1.0 + mu * np.square(tau) * r * np.cos(phi_total))


def total_phase(sample, optics, z):
    return optics.phi_ref - phase_from_z(z + sample.height_map, optics.lambda_idler)


def render_frame(sample, optics, z, i0=DEFAULT_I0):
    """Noise-free, unblurred frame at piezo position ``z`` (nm)."""
    phi = total_phase(sample, optics, z)
    return pixel_intensity(sample.r, sample.tau, optics.mu, phi, i0)


def apply_psf(image, fwhm, pixel_pitch):
    """Blur with a normalized Gaussian of full width ``fwhm`` (um).

    Mirror padding at the borders; with a symmetric kernel this keeps the
    total flux unchanged.
    """
    if fwhm < 0:
        raise ConfigError("fwhm must be non-negative")
    image = np.asarray(image, dtype=np.float64)
    if fwhm == 0:
        return image.copy()
    sigma = fwhm / FWHM_PER_SIGMA / pixel_pitch
    return ndimage.gaussian_filter(image, sigma=sigma, mode="reflect", truncate=5.0)


@dataclass(frozen=True)
class NoiseModel:
    """Camera model.  ``mean_counts`` is the expected count level for a pixel
    at the interference offset (the ``i0`` of the signal model)."""

    mean_counts: float = DEFAULT_I0
    shot_noise: bool = True
    read_noise_sigma: float = 0.0
    quantize: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.mean_counts > 0:
            raise ConfigError("mean_counts must be positive")
        if self.read_noise_sigma < 0:
            raise ConfigError("read_noise_sigma must be non-negative")

    @classmethod
    def noiseless(cls, mean_counts=DEFAULT_I0):
        return cls(mean_counts=mean_counts, shot_noise=False, read_noise_sigma=0.0, quantize=False)


def apply_noise(frame, noise, frame_index):
    rng = frame_generator(noise.seed, frame_index)
    out = np.asarray(frame, dtype=np.float64)
    if noise.shot_noise:
        out = rng.poisson(np.maximum(out, 0.0)).astype(np.float64)
    if noise.read_noise_sigma > 0:
        out = out + rng.normal(0.0, noise.read_noise_sigma, size=out.shape)
    out = np.maximum(out, 0.0)
    if noise.quantize:
        return np.clip(np.rint(out), 0, U16_MAX).astype(np.uint16)
    return out


@dataclass(frozen=True, eq=False)
class FrameStack:
    frames: np.ndarray
    z_positions: np.ndarray
    optics: OpticalConfig
    plan: ScanPlan
    seed: int = 0
    sample_id: str = ""
    i0: float = DEFAULT_I0
    psf_fwhm: float = 0.0
    noise: dict | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 3:
            raise ConfigError(f"frames must be (n, height, width), got shape {frames.shape}")
        z = np.asarray(self.z_positions, dtype=np.float64)
        if len(z) != frames.shape[0]:
            raise ConfigError("need exactly one z position per frame")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "z_positions", z)

    def __len__(self):
        return self.frames.shape[0]

    @property
    def shape(self):
        return self.frames.shape[1:]

    @property
    def quantized(self):
        return self.frames.dtype == np.uint16

    @property
    def identifier(self):
        return f"{self.sample_id or 'stack'}:seed={self.seed}"

    @property
    def acquisition_seconds(self):
        return acquisition_time(len(self), self.plan.exposure)

    def subset(self, indices):
        idx = np.asarray(indices, dtype=int)
        return FrameStack(
            frames=self.frames[idx],
            z_positions=self.z_positions[idx],
            optics=self.optics,
            plan=self.plan,
            seed=self.seed,
            sample_id=self.sample_id,
            i0=self.i0,
            psf_fwhm=self.psf_fwhm,
            noise=self.noise,
            extra=dict(self.extra, indices=[int(i) for i in idx]),
        )


def render_stack(sample, optics, plan, psf=True, noise=None, threads=1, i0=None):
    """Render every frame of ``plan``.

    Without ``noise`` the frames are exact float64 intensities at level
    ``i0`` (default 1000).  With a :class:`NoiseModel`, ``i0`` is taken from
    ``noise.mean_counts`` and frame ``k`` draws from its own generator keyed
    by ``(noise.seed, k)``, so the result does not depend on ``threads``.
    """
    if noise is not None:
        i0 = noise.mean_counts
    elif i0 is None:
        i0 = DEFAULT_I0
    zs = scan_positions(plan)
    fwhm = optics.resolution_fwhm if psf else 0.0

    def one(k):
        frame = render_frame(sample, optics, zs[k], i0)
        if fwhm:
            frame = apply_psf(frame, fwhm, sample.pixel_pitch)
        if noise is not None:
            frame = apply_noise(frame, noise, k)
        return frame

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            frames = list(pool.map(one, range(len(zs))))
    else:
        frames = [one(k) for k in range(len(zs))]
    return FrameStack(
        frames=np.stack(frames),
        z_positions=np.array(zs),
        optics=optics,
        plan=plan,
        seed=noise.seed if noise is not None else (sample.seed or 0),
        sample_id=sample.sample_id,
        i0=float(i0),
        psf_fwhm=float(fwhm),
        noise=asdict(noise) if noise is not None else None,
    )


def stack_meta(stack):
    h, w = stack.shape
    return {
        "format": STACK_FORMAT,
        "dtype": "<u2" if stack.quantized else "<f4",
        "count": len(stack),
        "width": w,
        "height": h,
        "optics": stack.optics.to_dict(),
        "plan": stack.plan.to_dict(),
        "seed": stack.seed,
        "sample_id": stack.sample_id,
        "i0": stack.i0,
        "psf_fwhm_um": stack.psf_fwhm,
        "noise": stack.noise,
        "z_positions": [float(z) for z in stack.z_positions],
        "acquisition_seconds": stack.acquisition_seconds,
        "extra": stack.extra,
    }


def write_stack(stack, directory):
    """Write ``meta.json`` and ``frames.bin`` (frame-major, row-major,
    little-endian uint16 if quantized else float32)."""
    directory = Path(directory)
    meta = stack_meta(stack)
    raw = np.ascontiguousarray(stack.frames, dtype=meta["dtype"]).tobytes()
    atomic_write_bytes(directory / "frames.bin", raw)
    atomic_write_text(directory / "meta.json", dump_json(meta))
    return directory


def read_stack(directory):
    directory = Path(directory)
    meta_path, bin_path = directory / "meta.json", directory / "frames.bin"
    if not meta_path.is_file() or not bin_path.is_file():
        raise DataError(f"{directory}: expected meta.json and frames.bin")
    try:
        meta = json.loads(meta_path.read_text())
    except ValueError as exc:
        raise DataError(f"{meta_path}: malformed JSON: {exc}", offset=0) from exc
    if meta.get("format") != STACK_FORMAT:
        raise DataError(f"{meta_path}: unknown format {meta.get('format')!r}", offset=0)
    dtype = np.dtype(meta["dtype"])
    n, h, w = int(meta["count"]), int(meta["height"]), int(meta["width"])
    data = bin_path.read_bytes()
    expected = n * h * w * dtype.itemsize
    if len(data) != expected:
        offset = min(len(data), expected)
        raise DataError(
            f"{bin_path}: {len(data)} bytes but header declares {n}x{h}x{w} {dtype.name} = {expected}",
            offset=offset,
        )
    if len(meta["z_positions"]) != n:
        raise DataError(f"{meta_path}: z_positions length does not match count", offset=0)
    frames = np.frombuffer(data, dtype=dtype).reshape(n, h, w)
    if dtype.kind == "f":
        frames = frames.astype(np.float64)
    return FrameStack(
        frames=frames,
        z_positions=np.array(meta["z_positions"], dtype=np.float64),
        optics=OpticalConfig.from_dict(meta["optics"]),
        plan=ScanPlan.from_dict(meta["plan"]),
        seed=meta.get("seed", 0),
        sample_id=meta.get("sample_id", ""),
        i0=meta.get("i0", DEFAULT_I0),
        psf_fwhm=meta.get("psf_fwhm_um", 0.0),
        noise=meta.get("noise"),
        extra=meta.get("extra", {}),
    )
