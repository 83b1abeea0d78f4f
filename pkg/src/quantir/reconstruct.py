"""Images from a phase-scanned frame stack.

The fringe at each pixel is ``m * (1 + V cos(psi + theta))``.  Over whole
fringe periods its mean-normalized population variance is ``V**2 / 2``, so
the normalized standard deviation is ``V / sqrt(2)`` and the variance tracks
the intensity reflectivity ``R = r**2`` of the sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, RankDeficientError
from .optics import wrap_phase

KINDS = ("mean", "variance", "std", "visibility", "reflectivity", "phase")
NONNEGATIVE_KINDS = ("variance", "std", "visibility", "reflectivity")
MEAN_EPS = 1e-9
AMPLITUDE_FLOOR = 0.02


@dataclass(frozen=True, eq=False)
class ScalarImage:
    """A reconstructed map.  ``mask`` marks pixels the estimator flagged
    (zero mean, clamped to physical bounds, or undefined phase)."""

    values: np.ndarray
    kind: str
    source: str = ""
    frames_used: int = 0
    normalized: bool = False
    mask: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown image kind {self.kind!r}")
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ConfigError("image values must be 2-D")
        object.__setattr__(self, "values", values)
        if self.mask is None:
            object.__setattr__(self, "mask", np.zeros(values.shape, dtype=bool))

    @property
    def shape(self):
        return self.values.shape

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def height(self):
        return self.values.shape[0]

    def metadata(self):
        return {
            "kind": self.kind,
            "source": self.source,
            "frames_used": self.frames_used,
            "normalized": self.normalized,
            "width": self.width,
            "height": self.height,
            "flagged_pixels": int(self.mask.sum()),
            **self.meta,
        }


@dataclass(frozen=True)
class FringeFit:
    amplitude: float
    phase: float
    offset: float
    rms_residual: float


class RunningStats:
    """Welford accumulator over equally shaped arrays; population variance."""

    def __init__(self):
        self.n = 0
        self._mean = None
        self._m2 = None

    def __len__(self):
        return self.n

    def update(self, arr):
        arr = np.asarray(arr, dtype=np.float64)
        self.n += 1
        if self.n == 1:
            self._mean = arr.copy()
            self._m2 = np.zeros_like(arr)
            return
        delta = arr - self._mean
        self._mean += delta / self.n
        self._m2 += delta * (arr - self._mean)

    @property
    def mean(self):
        return self._mean

    @property
    def variance(self):
        return self._m2 / self.n


def _accumulate(stack):
    if len(stack) == 0:
        raise ConfigError("stack is empty")
    stats = RunningStats()
    for frame in stack.frames:
        stats.update(frame)
    return stats


def mean_image(stack):
    stats = _accumulate(stack)
    return ScalarImage(stats.mean, "mean", stack.identifier, len(stack))


def variance_image(stack, normalized=True, eps=MEAN_EPS):
    """Per-pixel population variance, in one pass over the frames.

    With ``normalized`` each pixel trace is divided by its own mean first;
    pixels whose mean is below ``eps`` times the global mean are set to 0
    and flagged.
    """
    if len(stack) < 2:
        raise ConfigError("variance needs at least 2 frames")
    stats = _accumulate(stack)
    var = stats.variance
    mask = np.zeros(var.shape, dtype=bool)
    if normalized:
        mean = stats.mean
        floor = eps * abs(float(mean.mean()))
        mask = ~(mean > floor)
        safe = np.where(mask, 1.0, mean)
        var = np.where(mask, 0.0, var / np.square(safe))
    return ScalarImage(np.maximum(var, 0.0), "variance", stack.identifier, len(stack),
                       normalized, mask)


def std_image(stack, normalized=True, eps=MEAN_EPS):
    var = variance_image(stack, normalized, eps)
    return ScalarImage(np.sqrt(var.values), "std", var.source, var.frames_used, normalized, var.mask)


def _clamp(values, lo=0.0, hi=1.0):
    clamped = (values < lo) | (values > hi)
    return np.clip(values, lo, hi), clamped


def visibility_image(stack, eps=MEAN_EPS):
    """Fringe visibility ``sqrt(2) * normalized std``, clamped to [0, 1].

    Only unbiased when the frames cover whole fringe periods; see
    :func:`variance_bias_factor`.
    """
    std = std_image(stack, True, eps)
    vis, clamped = _clamp(math.sqrt(2.0) * std.values)
    return ScalarImage(vis, "visibility", std.source, std.frames_used, True, std.mask | clamped,
                       {"clamped_pixels": int(clamped.sum())})


def reflectivity_image(stack, tau_assumed=1.0, mu_assumed=1.0, eps=MEAN_EPS):
    """Intensity reflectivity ``(V / (mu * tau**2))**2``, clamped to [0, 1]."""
    if not (0 < tau_assumed <= 1 and 0 < mu_assumed <= 1):
        raise ConfigError("tau_assumed and mu_assumed must lie in (0, 1]")
    vis = visibility_image(stack, eps)
    refl, clamped = _clamp(np.square(vis.values / (mu_assumed * tau_assumed ** 2)))
    return ScalarImage(refl, "reflectivity", vis.source, vis.frames_used, True, vis.mask | clamped,
                       {"tau_assumed": tau_assumed, "mu_assumed": mu_assumed,
                        "clamped_pixels": int(clamped.sum())})


def scan_phases(z_positions, lambda_idler):
    return 4.0 * math.pi * np.asarray(z_positions, dtype=np.float64) / lambda_idler


def variance_bias_factor(z_positions, lambda_idler):
    """Expected ratio of the measured to the whole-period fringe variance
    for this z grid, averaged over the unknown fringe phase.

    Equals ``1 - |mean(exp(i psi_k))|**2``: 1 for whole periods, below 1
    when the grid covers a partial period.
    """
    psi = scan_phases(z_positions, lambda_idler)
    return float(1.0 - abs(np.mean(np.exp(1j * psi))) ** 2)


def _design(z_positions, lambda_idler):
    psi = scan_phases(z_positions, lambda_idler)
    design = np.column_stack([np.ones_like(psi), np.cos(psi), np.sin(psi)])
    if len(psi) < 3 or np.linalg.matrix_rank(design) < 3:
        raise RankDeficientError(
            "fringe fit needs at least 3 frames at 3 distinct phases modulo 2 pi"
        )
    return design


def _solve(design, values):
    # closed-form normal equations; values is (n_frames, n_series)
    gram = design.T @ design
    return np.linalg.solve(gram, design.T @ values)


def fit_fringe(trace, z_positions, lambda_idler):
    """Least-squares ``a + b cos(psi) + c sin(psi)`` with ``psi = 4 pi z / lambda``.

    Returned as ``offset + amplitude * cos(psi + phase)``.
    """
    trace = np.asarray(trace, dtype=np.float64)
    if trace.shape != np.shape(z_positions):
        raise ConfigError("trace and z_positions must have the same length")
    design = _design(z_positions, lambda_idler)
    a, b, c = _solve(design, trace[:, None])[:, 0]
    resid = trace - design @ np.array([a, b, c])
    return FringeFit(
        amplitude=float(math.hypot(b, c)),
        phase=float(wrap_phase(math.atan2(-c, b))),
        offset=float(a),
        rms_residual=float(math.sqrt(np.mean(resid ** 2))),
    )


def fit_fringe_image(stack, lambda_idler=None):
    """Per-pixel fringe fit.  Returns ``(offset, amplitude, phase, rms)`` arrays."""
    if lambda_idler is None:
        lambda_idler = stack.optics.lambda_idler
    design = _design(stack.z_positions, lambda_idler)
    n, h, w = stack.frames.shape
    values = stack.frames.reshape(n, h * w).astype(np.float64)
    coef = _solve(design, values)
    resid = values - design @ coef
    a, b, c = (coef[i].reshape(h, w) for i in range(3))
    rms = np.sqrt(np.mean(resid ** 2, axis=0)).reshape(h, w)
    return a, np.hypot(b, c), wrap_phase(np.arctan2(-c, b)), rms


def phase_map(stack, lambda_idler=None, amplitude_floor=AMPLITUDE_FLOOR):
    """Fitted fringe phase per pixel, wrapped to (-pi, pi].

    Pixels whose fringe amplitude is below ``amplitude_floor`` times their
    offset carry no usable phase: they are set to 0 and flagged in ``mask``.
    """
    offset, amp, phase, rms = fit_fringe_image(stack, lambda_idler)
    undefined = ~(amp > amplitude_floor * np.abs(offset))
    phase = np.where(undefined, 0.0, phase)
    return ScalarImage(phase, "phase", stack.identifier, len(stack), False, undefined,
                       {"amplitude_floor": amplitude_floor,
                        "undefined_pixels": int(undefined.sum())})


def reconstruct(stack, mode="variance", normalized=True, tau=1.0, mu=1.0,
                amplitude_floor=AMPLITUDE_FLOOR):
    """Dispatch on ``mode`` (one of :data:`KINDS`)."""
    if mode == "mean":
        return mean_image(stack)
    if mode == "variance":
        return variance_image(stack, normalized)
    if mode == "std":
        return std_image(stack, normalized)
    if mode == "visibility":
        return visibility_image(stack)
    if mode == "reflectivity":
        return reflectivity_image(stack, tau, mu)
    if mode == "phase":
        return phase_map(stack, amplitude_floor=amplitude_floor)
    raise ConfigError(f"unknown reconstruction mode {mode!r}")


def image_sidecar(image, vmin, vmax):
    meta = image.metadata()
    meta["pgm_scale"] = {"min": vmin, "max": vmax, "maxval": 65535}
    return meta
