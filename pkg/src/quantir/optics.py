"""Optical configuration, wavelength bookkeeping and scan plans.

Lengths follow the lab convention: wavelengths and piezo positions in nm,
focal lengths in mm, object-plane sizes in micrometres, exposure in ms.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigError

# Energy-conservation tolerance on 1/lp - 1/ls - 1/li, in 1/nm.
ENERGY_TOL = 1e-4

PUMP_NM = 532.0
SIGNAL_NM = 810.0
F1_MM = 75.0
F2_MM = 75.0
EXPOSURE_MS = 300.0
Z_STEP_NM = 20.0
SILICON_INDEX = 3.5

# Rayleigh resolution measured on a bar target for each F3 choice, in um.
RESOLUTION_BY_F3 = {25.0: 39.0, 5.0: 7.8}

# Source parameters that select the wavelengths but never enter the signal
# model.  Kept for run metadata only.
SOURCE_NOTES = {
    "crystal": "PPLN",
    "poling_period_um": 7.5,
    "crystal_temperature_c": 70.0,
    "signal_bandpass_nm": [810.0, 10.0],
}


def idler_wavelength(lambda_pump, lambda_signal):
    """Idler wavelength fixed by photon energy conservation, 1/lp = 1/ls + 1/li."""
    if not (0 < lambda_pump < lambda_signal):
        raise ConfigError(
            f"need 0 < lambda_pump < lambda_signal, got {lambda_pump}, {lambda_signal}"
        )
    return 1.0 / (1.0 / lambda_pump - 1.0 / lambda_signal)


def phase_from_z(z, lambda_idler, phi0=0.0):
    """Idler round-trip phase for a sample displaced by ``z`` nm (not wrapped).

    Works element-wise on arrays.
    """
    if lambda_idler <= 0:
        raise ConfigError(f"lambda_idler must be positive, got {lambda_idler}")
    out = phi0 + 4.0 * math.pi * np.asarray(z, dtype=float) / lambda_idler
    return float(out) if out.ndim == 0 else out


def wrap_phase(phase):
    """Wrap to the half-open interval (-pi, pi]."""
    return math.pi - np.mod(math.pi - np.asarray(phase, dtype=float), 2.0 * math.pi)


def acquisition_time(n_frames, exposure):
    """Total camera time in seconds for ``n_frames`` exposures of ``exposure`` ms."""
    if n_frames < 0 or exposure < 0:
        raise ConfigError("n_frames and exposure must be non-negative")
    return n_frames * exposure / 1000.0


class _JsonMixin:
    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class OpticalConfig(_JsonMixin):
    """Wavelengths, lens train and imaging scale of the interferometer.

    ``phi_ref`` lumps the pump and signal phases of the mirror arm into one
    constant; only the difference with the idler phase matters.
    ``magnification`` defaults to ``f3 / f1 * immersion_index``.
    """

    lambda_pump: float = PUMP_NM
    lambda_signal: float = SIGNAL_NM
    lambda_idler: float = field(default_factory=lambda: idler_wavelength(PUMP_NM, SIGNAL_NM))
    mu: float = 1.0
    phi_ref: float = 0.0
    f1: float = F1_MM
    f2: float = F2_MM
    f3: float = 25.0
    resolution_fwhm: float = RESOLUTION_BY_F3[25.0]
    magnification: float | None = None
    immersion_index: float = 1.0

    def __post_init__(self):
        if self.magnification is None:
            object.__setattr__(self, "magnification", self.f3 / self.f1 * self.immersion_index)
        if min(self.lambda_pump, self.lambda_signal, self.lambda_idler) <= 0:
            raise ConfigError("wavelengths must be positive")
        if not self.lambda_pump < self.lambda_signal < self.lambda_idler:
            raise ConfigError("need lambda_pump < lambda_signal < lambda_idler")
        mismatch = 1 / self.lambda_pump - 1 / self.lambda_signal - 1 / self.lambda_idler
        if abs(mismatch) > ENERGY_TOL:
            raise ConfigError(f"energy conservation violated by {mismatch:.3g} 1/nm")
        if not 0.0 <= self.mu <= 1.0:
            raise ConfigError(f"mu must lie in [0, 1], got {self.mu}")
        if self.resolution_fwhm <= 0:
            raise ConfigError("resolution_fwhm must be positive")
        if self.magnification <= 0:
            raise ConfigError("magnification must be positive")
        if self.immersion_index < 1.0:
            raise ConfigError("immersion_index must be >= 1")
        if min(self.f1, self.f2, self.f3) <= 0:
            raise ConfigError("focal lengths must be positive")

    @classmethod
    def for_lens(cls, f3=25.0, immersion_index=1.0, **overrides):
        """Configuration of the published setup for a given F3 lens (25 or 5 mm)."""
        fwhm = RESOLUTION_BY_F3.get(float(f3))
        if fwhm is None:
            # Resolution scales with the final focal length for this lens train.
            fwhm = RESOLUTION_BY_F3[25.0] * f3 / 25.0
        kwargs = dict(f3=float(f3), resolution_fwhm=fwhm, immersion_index=immersion_index)
        kwargs.update(overrides)
        return cls(**kwargs)

    def with_immersion(self, immersion_index):
        data = self.to_dict()
        data["immersion_index"] = float(immersion_index)
        data["magnification"] = self.f3 / self.f1 * immersion_index
        return OpticalConfig(**data)


@dataclass(frozen=True)
class ScanPlan(_JsonMixin):
    """Piezo positions ``z_start + k * z_step`` (nm), ``n_frames`` exposures of ``exposure`` ms."""

    z_start: float = 0.0
    z_step: float = Z_STEP_NM
    n_frames: int = 64
    exposure: float = EXPOSURE_MS

    def __post_init__(self):
        if int(self.n_frames) != self.n_frames or self.n_frames < 1:
            raise ConfigError(f"n_frames must be a positive integer, got {self.n_frames}")
        if self.z_step < 0:
            raise ConfigError("z_step must be non-negative")
        if self.z_step == 0 and self.n_frames != 1:
            raise ConfigError("z_step may be 0 only for a single-frame plan")
        if self.exposure < 0:
            raise ConfigError("exposure must be non-negative")
        object.__setattr__(self, "n_frames", int(self.n_frames))

    @classmethod
    def over_phase(cls, lambda_idler, n_frames=64, periods=2, exposure=EXPOSURE_MS, z_start=0.0):
        """Evenly sample ``periods`` full fringe periods (endpoint excluded).

        Two periods span a travel of one idler wavelength, i.e. idler phase
        0 to 4 pi.
        """
        if int(n_frames) < 1:
            raise ConfigError("n_frames must be at least 1")
        span = periods * lambda_idler / 2.0
        return cls(z_start=z_start, z_step=span / n_frames, n_frames=n_frames, exposure=exposure)

    @property
    def acquisition_seconds(self):
        return acquisition_time(self.n_frames, self.exposure)


def scan_positions(plan):
    return [plan.z_start + k * plan.z_step for k in range(plan.n_frames)]
