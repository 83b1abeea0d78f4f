"""Frame-subset ("compressive") study: how much does the variance image
degrade when only part of the phase scan is used?

Three subset strategies are supported: a continuous run of the first ``n``
frames, a gapped run keeping every ``gap + 1``-th frame, and ``k`` frames drawn
at random without replacement.  Degradation is measured as the Frobenius
norm of the difference to the full-stack image.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, QuantirError
from .optics import acquisition_time
from .reconstruct import ScalarImage, reconstruct
from .rng import derive_seed, generator

STRATEGIES = ("continuous", "gapped", "random")
MAX_GAP = 7


@dataclass(frozen=True)
class SelectionSpec:
    strategy: str
    n: int | None = None
    gap: int | None = None
    k: int | None = None
    seed: int = 0
    max_gap: int = MAX_GAP

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown selection strategy {self.strategy!r}")
        wanted = {"continuous": "n", "gapped": "gap", "random": "k"}[self.strategy]
        for name in ("n", "gap", "k"):
            value = getattr(self, name)
            if name == wanted and value is None:
                raise ConfigError(f"{self.strategy} selection needs {name}")
            if name != wanted and value is not None:
                raise ConfigError(f"{self.strategy} selection does not take {name}")
        if self.strategy == "gapped":
            if not 1 <= self.gap <= self.max_gap:
                raise ConfigError(f"gap must lie in [1, {self.max_gap}], got {self.gap}")
        elif getattr(self, wanted) < 1:
            raise ConfigError(f"{wanted} must be at least 1")

    @property
    def param(self):
        return {"continuous": self.n, "gapped": self.gap, "random": self.k}[self.strategy]

    @property
    def label(self):
        return f"{self.strategy}-{self.param}"

    @classmethod
    def continuous(cls, n):
        return cls("continuous", n=n)

    @classmethod
    def gapped(cls, gap, max_gap=MAX_GAP):
        return cls("gapped", gap=gap, max_gap=max_gap)

    @classmethod
    def random(cls, k, seed=0):
        return cls("random", k=k, seed=seed)


def selection_indices(n_available, spec):
    if spec.strategy == "continuous":
        if spec.n > n_available:
            raise ConfigError(f"continuous run of {spec.n} frames exceeds the {n_available} available")
        return np.arange(spec.n)
    if spec.strategy == "gapped":
        return np.arange(0, n_available, spec.gap + 1)
    if spec.k > n_available:
        raise ConfigError(f"cannot draw {spec.k} of {n_available} frames without replacement")
    rng = generator(spec.seed, "select")
    return np.sort(rng.choice(n_available, size=spec.k, replace=False))


def select_frames(stack, spec):
    """Subset of ``stack`` in original order, z positions carried along."""
    return stack.subset(selection_indices(len(stack), spec))


def _values(image):
    return image.values if isinstance(image, ScalarImage) else np.asarray(image, dtype=np.float64)


def frobenius_norm(image):
    """Square root of the sum of squared elements."""
    a = _values(image)
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if scale == 0.0 or not math.isfinite(scale):
        return scale
    # scaled so the squares neither underflow nor overflow
    return scale * math.sqrt(float(np.sum(np.square(a / scale))))


def frobenius_diff(a, b):
    va, vb = _values(a), _values(b)
    if va.shape != vb.shape:
        raise ConfigError(f"image shapes differ: {va.shape} vs {vb.shape}")
    return frobenius_norm(va - vb)


@dataclass
class TruncationReport:
    baseline_norm: float
    rows: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    def groups(self):
        """Per-spec statistics over repeats: mean/std/stderr of relative_diff."""
        out = {}
        for row in self.rows:
            g = out.setdefault(row["label"], {"label": row["label"], "strategy": row["strategy"],
                                              "param": row["param"], "frames_used": row["frames_used"],
                                              "rel": [], "fro": [], "acquisition_seconds":
                                                  row["acquisition_seconds"], "errors": 0})
            if row["error"] is None:
                g["rel"].append(row["relative_diff"])
                g["fro"].append(row["frobenius_diff"])
            else:
                g["errors"] += 1
        summary = []
        for g in out.values():
            rel, fro = np.array(g.pop("rel")), np.array(g.pop("fro"))
            n = len(rel)
            g["repeats"] = n
            g["mean_relative_diff"] = float(rel.mean()) if n else None
            g["std_relative_diff"] = float(rel.std(ddof=1)) if n > 1 else 0.0 if n else None
            g["stderr_relative_diff"] = (g["std_relative_diff"] / math.sqrt(n)) if n else None
            g["mean_frobenius_diff"] = float(fro.mean()) if n else None
            summary.append(g)
        return summary

    def to_dict(self):
        return {"baseline_norm": self.baseline_norm, "settings": self.settings,
                "rows": self.rows, "summary": self.groups()}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self):
        buf = _io.StringIO()
        cols = ["label", "strategy", "param", "repeat", "seed", "frames_used",
                "frobenius_diff", "relative_diff", "acquisition_seconds", "error"]
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({c: "" if row[c] is None else (repr(row[c]) if isinstance(row[c], float)
                                                             else row[c]) for c in cols})
        return buf.getvalue()

    def to_gnuplot(self):
        lines = [f"# baseline_norm {self.baseline_norm!r}",
                 "# index label frames_used mean_relative_diff stderr_relative_diff "
                 "mean_frobenius_diff acquisition_seconds"]
        for i, g in enumerate(self.groups()):
            if g["repeats"] == 0:
                continue
            lines.append(f"{i} {g['label']} {g['frames_used']} {g['mean_relative_diff']!r} "
                         f"{g['stderr_relative_diff']!r} {g['mean_frobenius_diff']!r} "
                         f"{g['acquisition_seconds']!r}")
        lines.append("# plot 'report.dat' using 1:4:5:xticlabels(2) with yerrorbars")
        return "\n".join(lines) + "\n"


def expand_repeats(specs, repeats):
    """Random specs become ``repeats`` realizations with derived seeds;
    deterministic strategies run once."""
    out = []
    for spec in specs:
        if spec.strategy == "random" and repeats > 1:
            for rep in range(repeats):
                out.append((rep, replace(spec, seed=derive_seed(spec.seed, f"random:{spec.k}:{rep}"))))
        else:
            out.append((0, spec))
    return out


def run_truncation_study(stack, specs, repeats=1, mode="variance", normalized=True):
    """Compare subset reconstructions against the full-stack image.

    Rows come out in the order of ``specs`` (repeats contiguous).  A failing
    row records its error and the study carries on.
    """
    if repeats < 1:
        raise ConfigError("repeats must be at least 1")
    baseline = reconstruct(stack, mode, normalized)
    base_norm = frobenius_norm(baseline)
    report = TruncationReport(base_norm, settings={"mode": mode, "normalized": normalized,
                                                   "repeats": repeats, "source": stack.identifier,
                                                   "frames_available": len(stack)})
    exposure = stack.plan.exposure
    for rep, spec in expand_repeats(specs, repeats):
        row = {"label": spec.label, "strategy": spec.strategy, "param": spec.param,
               "repeat": rep, "seed": spec.seed if spec.strategy == "random" else None,
               "frames_used": None, "frobenius_diff": None, "relative_diff": None,
               "acquisition_seconds": None, "error": None}
        try:
            subset = select_frames(stack, spec)
            row["frames_used"] = len(subset)
            row["acquisition_seconds"] = acquisition_time(len(subset), exposure)
            image = reconstruct(subset, mode, normalized)
            diff = frobenius_diff(image, baseline)
            row["frobenius_diff"] = diff
            row["relative_diff"] = diff / base_norm if base_norm > 0 else 0.0 if diff == 0 else math.inf
        except (QuantirError, np.linalg.LinAlgError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        report.rows.append(row)
    return report
