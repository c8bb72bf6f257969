"""Deterministic evaluation metrics.

* ``motion_energy`` — mean absolute inter-frame pixel difference in [0, 1];
  0 exactly for frozen clips, 1 for alternating black/white frames.
* ``concept_fidelity`` — per-frame similarity between a clip and a concept's
  canonical render, combining smoothed colour histograms with translation-
  invariant central moments of the intensity-deviation mass.  1 for the
  rendered concept itself, low for noise and for the base shape classes.

Both are cheap, closed-form, and need no learned models, which is what makes
method-versus-baseline comparisons here exactly reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import ConceptSpec, VideoClip
from .errors import ProtocolError

HIST_BINS = 16
# Sharpness constants calibrated once against the shipped concept set so that
# the rendered concept scores 1.0, mild blur/noise stays above ~0.6, and
# uniform-noise clips score below 0.3 for every object concept.
_HIST_SHARPNESS = 5.0
_MOMENT_SHARPNESS = 12.0


def _as_pixels(clip) -> np.ndarray:
    if isinstance(clip, VideoClip):
        return clip.pixels
    return np.asarray(clip, dtype=np.float32)


def motion_energy(clip) -> float:
    """Mean |frame_t - frame_{t-1}| over consecutive frame pairs; 0 if F < 2."""
    pixels = _as_pixels(clip)
    if pixels.shape[0] < 2:
        return 0.0
    return float(np.mean(np.abs(np.diff(pixels.astype(np.float64), axis=0))))


def _soft_histogram(channel: np.ndarray) -> np.ndarray:
    """Linear-binned histogram over [0, 1]: each pixel splits its mass between
    the two nearest bin centres, so the histogram moves continuously as pixel
    values change."""
    x = np.clip(channel.reshape(-1).astype(np.float64), 0.0, 1.0) * (HIST_BINS - 1)
    lo = np.floor(x).astype(np.int64)
    frac = x - lo
    hi = np.minimum(lo + 1, HIST_BINS - 1)
    hist = np.zeros(HIST_BINS)
    np.add.at(hist, lo, 1.0 - frac)
    np.add.at(hist, hi, frac)
    return hist / x.size


def _moment_features(channel: np.ndarray) -> np.ndarray:
    """Shape statistics of the deviation-from-median mass.

    Taking mass as |I - median(I)| zeroes out a dominant background, so the
    features describe the foreground structure: its spread (central second
    moments, translation-invariant), orientation correlation, how concentrated
    the mass is (participation ratio: 1 for uniform noise, small for a compact
    object), and its mean amplitude."""
    h, w = channel.shape
    ch = channel.astype(np.float64)
    mass = np.abs(ch - np.median(ch))
    total = mass.sum()
    if total < 1e-9:
        return np.zeros(5)
    yy, xx = np.meshgrid(np.arange(h) + 0.5, np.arange(w) + 0.5, indexing="ij")
    mx = (mass * xx).sum() / total
    my = (mass * yy).sum() / total
    dx, dy = xx - mx, yy - my
    mu20 = (mass * dx * dx).sum() / total
    mu02 = (mass * dy * dy).sum() / total
    mu11 = (mass * dx * dy).sum() / total
    sx, sy = math.sqrt(mu20), math.sqrt(mu02)
    rho = mu11 / (sx * sy) if sx * sy > 1e-9 else 0.0
    pr = total * total / (h * w * (mass * mass).sum())
    return np.array([
        sx / w,
        sy / h,
        0.25 * np.clip(rho, -1.0, 1.0),
        pr,
        total / (h * w),
    ])


def frame_signature(frame: np.ndarray):
    """(histograms [C, BINS], moment features [C, 5]) of one [H, W, C] frame."""
    hists = np.stack([_soft_histogram(frame[..., c]) for c in range(frame.shape[-1])])
    moments = np.stack([_moment_features(frame[..., c]) for c in range(frame.shape[-1])])
    return hists, moments


def signature_similarity(sig_a, sig_b) -> float:
    """Similarity in [0, 1] between two frame signatures.

    Histograms are compared by normalised earth-mover distance (mean |CDF
    difference|), moments by mean absolute feature difference; both map to
    similarity through calibrated exponentials and average with equal
    weight."""
    ha, ma = sig_a
    hb, mb = sig_b
    emd = np.abs(np.cumsum(ha - hb, axis=-1)).mean()
    hist_sim = math.exp(-_HIST_SHARPNESS * HIST_BINS / (HIST_BINS - 1) * float(emd))
    moment_sim = math.exp(-_MOMENT_SHARPNESS * float(np.abs(ma - mb).mean()))
    return 0.5 * hist_sim + 0.5 * moment_sim


_SPEC_SIG_CACHE: dict[tuple, tuple] = {}


def concept_signature(spec: ConceptSpec, h: int, w: int):
    key = (spec.name, spec.rare_token, h, w)
    if key not in _SPEC_SIG_CACHE:
        _SPEC_SIG_CACHE[key] = frame_signature(spec.render(h, w))
    return _SPEC_SIG_CACHE[key]


def concept_fidelity(clip, spec: ConceptSpec) -> float:
    """Mean per-frame similarity to the concept's canonical render, in [0, 1]."""
    pixels = _as_pixels(clip)
    ref = concept_signature(spec, pixels.shape[1], pixels.shape[2])
    sims = [signature_similarity(frame_signature(frame), ref) for frame in pixels]
    return float(np.mean(sims))


# -- reporting ----------------------------------------------------------------


def sem(values) -> float:
    """Standard error of the mean, ddof=1; 0 for a single value."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return 0.0
    return float(v.std(ddof=1) / math.sqrt(v.size))


@dataclass
class MethodSamples:
    seeds: list[int]
    clips: list  # VideoClip or [F, H, W, C] arrays, one per seed


@dataclass
class ReportRow:
    method: str
    metric: str
    median: float
    sme: float
    n: int


def eval_report(samples: dict[str, MethodSamples], spec: ConceptSpec | None,
                header: dict | None = None) -> tuple[list[ReportRow], str]:
    """Per-method median and standard error of motion energy (always) and
    concept fidelity (when a spec is given).  All methods must have been
    sampled with identical seed lists."""
    if not samples:
        raise ProtocolError("no methods to report")
    seed_lists = {m: tuple(s.seeds) for m, s in samples.items()}
    reference = next(iter(seed_lists.values()))
    for method, seeds in seed_lists.items():
        if seeds != reference:
            raise ProtocolError(
                f"seed mismatch across methods: {method}={list(seeds)} vs {list(reference)}"
            )
    rows = []
    for method, s in samples.items():
        me = [motion_energy(c) for c in s.clips]
        rows.append(ReportRow(method, "motion_energy", float(np.median(me)), sem(me), len(me)))
        if spec is not None:
            cf = [concept_fidelity(c, spec) for c in s.clips]
            rows.append(ReportRow(method, "concept_fidelity", float(np.median(cf)), sem(cf), len(cf)))
    lines = ["# report v1"]
    meta = dict(header or {})
    if spec is not None:
        meta.setdefault("concept", spec.name)
    meta["seeds"] = ",".join(str(s) for s in reference)
    for key in sorted(meta):
        lines.append(f"# {key}={meta[key]}")
    for row in rows:
        lines.append(
            f"method={row.method} metric={row.metric} "
            f"median={row.median:.6f} sme={row.sme:.6f} n={row.n}"
        )
    return rows, "\n".join(lines) + "\n"


def parse_report(text: str) -> list[ReportRow]:
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        kv = dict(part.split("=", 1) for part in line.split())
        rows.append(ReportRow(kv["method"], kv["metric"], float(kv["median"]),
                              float(kv["sme"]), int(kv["n"])))
    return rows
