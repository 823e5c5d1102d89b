"""Detection metrics: intersection-based PSDS and segment-based mPAUC.

PSDS scores timestamped events: a detection is valid when it overlaps
same-class references by at least rho_dtc of its own duration, a reference
counts as found when valid detections cover at least rho_gtc of it, and the
score is the normalized area under the effective-TPR vs effective-FPR curve
obtained by sweeping the detection confidences.  mPAUC scores one-second
segments per class by the partial area under the ROC up to a maximum false
positive rate, McClish-standardized so chance sits at 0.5, then macro
averaged.  The ranking joint score is simply PSDS + mPAUC.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Event, Posteriorgram
from .postprocess import SEBB

SECONDS_PER_HOUR = 3600.0
SEGMENT_SECONDS = 1.0
MAX_FPR = 0.1
HARD_LABEL_THRESHOLD = 0.5


@dataclass(frozen=True)
class PsdsConfig:
    rho_dtc: float = 0.7  # detection tolerance: intersection / detection length
    rho_gtc: float = 0.7  # ground truth intersection: coverage / reference length
    rho_cttc: float = 0.3  # cross-trigger tolerance (active when alpha_ct > 0)
    alpha_ct: float = 0.0  # cross-trigger weight in the effective FP rate
    alpha_st: float = 1.0  # across-class instability penalty on the TPR
    e_max: float = 100.0  # FP-per-hour integration limit

    def __post_init__(self) -> None:
        if self.e_max <= 0:
            raise ValueError(f"e_max must be > 0, got {self.e_max}")
        for name in ("rho_dtc", "rho_gtc", "rho_cttc"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.alpha_ct < 0 or self.alpha_st < 0:
            raise ValueError("alpha_ct and alpha_st must be >= 0")


@dataclass(frozen=True, eq=False)
class OperatingPointCurve:
    """Operating points sorted by effective FP rate.

    ``efpr`` is [P] non-decreasing; ``tpr`` is [P, C]; ``included`` marks
    classes that have references (excluded classes carry zero TPR and stay
    out of every average).
    """

    efpr: np.ndarray
    tpr: np.ndarray
    included: np.ndarray

    def __post_init__(self) -> None:
        efpr = np.asarray(self.efpr, dtype=np.float64)
        tpr = np.asarray(self.tpr, dtype=np.float64)
        included = np.asarray(self.included, dtype=bool)
        object.__setattr__(self, "efpr", efpr)
        object.__setattr__(self, "tpr", tpr)
        object.__setattr__(self, "included", included)
        if efpr.ndim != 1 or tpr.ndim != 2 or tpr.shape[0] != efpr.size:
            raise ValueError(f"inconsistent curve shapes: {efpr.shape}, {tpr.shape}")
        if included.shape != (tpr.shape[1],):
            raise ValueError("included mask must have one entry per class")
        if np.any(np.diff(efpr) < 0):
            raise ValueError("efpr must be non-decreasing")
        if efpr.size and (efpr[0] < 0 or tpr.min(initial=0) < 0 or tpr.max(initial=0) > 1):
            raise ValueError("efpr must be >= 0 and tpr within [0, 1]")

    @property
    def tpr_std(self) -> np.ndarray:
        """Population std of the per-class TPRs (included classes) per point."""
        if not self.included.any():
            return np.zeros(self.efpr.size)
        return self.tpr[:, self.included].std(axis=1)

    @property
    def points(self) -> list[tuple[float, np.ndarray, float]]:
        stds = self.tpr_std
        return [(float(e), self.tpr[i], float(stds[i])) for i, e in enumerate(self.efpr)]


def _merge_intervals(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    if not intervals:
        return []
    intervals = sorted(intervals)
    merged = [intervals[0]]
    for lo, hi in intervals[1:]:
        if lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


def _overlap(lo: float, hi: float, merged: list[tuple[float, float]]) -> float:
    return sum(max(0.0, min(hi, b) - max(lo, a)) for a, b in merged)


def _by_clip(events, class_idx: int) -> dict[str, list[tuple[float, float]]]:
    grouped: dict[str, list[tuple[float, float]]] = {}
    for ev in events:
        if ev.class_idx == class_idx:
            grouped.setdefault(ev.clip_id, []).append((ev.onset, ev.offset))
    return grouped


def intersection_match(
    dets: Sequence, refs: Sequence[Event], rho_dtc: float, rho_gtc: float, num_classes: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class true/false positive counts under the intersection criteria.

    A detection passes the DTC when its overlap with the union of same-class
    references (same clip) is at least rho_dtc of its own duration; failing
    detections are false positives.  A reference is a true positive when the
    union of DTC-passing detections covers at least rho_gtc of it.
    """
    tp = np.zeros(num_classes, dtype=np.int64)
    fp = np.zeros(num_classes, dtype=np.int64)
    for c in range(num_classes):
        ref_by_clip = {k: _merge_intervals(v) for k, v in _by_clip(refs, c).items()}
        passing: dict[str, list[tuple[float, float]]] = {}
        for clip_id, det_spans in _by_clip(dets, c).items():
            merged_refs = ref_by_clip.get(clip_id, [])
            for lo, hi in det_spans:
                ratio = _overlap(lo, hi, merged_refs) / (hi - lo)
                if ratio >= rho_dtc:
                    passing.setdefault(clip_id, []).append((lo, hi))
                else:
                    fp[c] += 1
        for clip_id, ref_spans in _by_clip(refs, c).items():
            covering = _merge_intervals(passing.get(clip_id, []))
            for lo, hi in ref_spans:
                if _overlap(lo, hi, covering) / (hi - lo) >= rho_gtc:
                    tp[c] += 1
    return tp, fp


def cross_trigger_counts(
    dets: Sequence, refs: Sequence[Event], rho_dtc: float, rho_cttc: float, num_classes: int
) -> np.ndarray:
    """Cross-trigger matrix ct[c, c']: DTC-failing class-c detections whose
    overlap ratio with class-c' references reaches rho_cttc."""
    ct = np.zeros((num_classes, num_classes), dtype=np.int64)
    merged_refs = {
        c: {k: _merge_intervals(v) for k, v in _by_clip(refs, c).items()} for c in range(num_classes)
    }
    for c in range(num_classes):
        for clip_id, det_spans in _by_clip(dets, c).items():
            own = merged_refs[c].get(clip_id, [])
            for lo, hi in det_spans:
                if _overlap(lo, hi, own) / (hi - lo) >= rho_dtc:
                    continue
                for other in range(num_classes):
                    if other == c:
                        continue
                    spans = merged_refs[other].get(clip_id, [])
                    if spans and _overlap(lo, hi, spans) / (hi - lo) >= rho_cttc:
                        ct[c, other] += 1
    return ct


def _effective_fpr(
    fp: np.ndarray, ct: np.ndarray | None, hours: float, cfg: PsdsConfig, num_classes: int
) -> np.ndarray:
    efpr = fp / hours
    if cfg.alpha_ct > 0 and ct is not None and num_classes > 1:
        efpr = efpr + cfg.alpha_ct * ct.sum(axis=1) / (num_classes - 1) / hours
    return efpr


def _ref_counts(refs: Sequence[Event], num_classes: int) -> np.ndarray:
    counts = np.zeros(num_classes, dtype=np.int64)
    for ev in refs:
        if not 0 <= ev.class_idx < num_classes:
            raise ValueError(f"reference class index {ev.class_idx} out of range")
        counts[ev.class_idx] += 1
    return counts


def _curve_from_point_lists(per_class: list[list[tuple[float, float]]], included: np.ndarray) -> OperatingPointCurve:
    """Assemble the step-function curve on the union grid of per-class rates,
    applying the monotone upper envelope (running max TPR) per class."""
    envelopes = []
    for pts in per_class:
        pts = sorted(set(pts))
        best = 0.0
        env_e, env_t = [], []
        for e, t in pts:
            best = max(best, t)
            if env_e and env_e[-1] == e:
                env_t[-1] = best
            else:
                env_e.append(e)
                env_t.append(best)
        envelopes.append((np.asarray(env_e), np.asarray(env_t)))
    grid = np.unique(np.concatenate([[0.0]] + [e for e, _ in envelopes]))
    tpr = np.zeros((grid.size, len(per_class)))
    for c, (env_e, env_t) in enumerate(envelopes):
        pos = np.searchsorted(env_e, grid, side="right") - 1
        tpr[:, c] = np.where(pos >= 0, env_t[np.maximum(pos, 0)], 0.0)
    return OperatingPointCurve(efpr=grid, tpr=tpr, included=included)


def roc_from_confidences(
    dets: Sequence[SEBB],
    refs: Sequence[Event],
    total_hours: float,
    cfg: PsdsConfig = PsdsConfig(),
    num_classes: int | None = None,
) -> OperatingPointCurve:
    """Operating point curve from a confidence sweep over the detections.

    Every distinct confidence value is a threshold (keeping detections with
    confidence >= that value); classes without references are excluded with
    a warning.
    """
    if total_hours <= 0:
        raise ValueError(f"total_hours must be > 0, got {total_hours}")
    if num_classes is None:
        num_classes = 1 + max(
            [e.class_idx for e in refs] + [d.class_idx for d in dets], default=-1
        )
    n_refs = _ref_counts(refs, num_classes)
    included = n_refs > 0
    excluded = np.flatnonzero(~included)
    if excluded.size:
        warnings.warn(f"classes without references excluded from PSDS: {excluded.tolist()}", stacklevel=2)

    per_class: list[list[tuple[float, float]]] = [[(0.0, 0.0)] for _ in range(num_classes)]
    ordered = sorted(dets, key=lambda d: -d.confidence)
    thresholds = sorted({d.confidence for d in dets}, reverse=True)
    for value in thresholds:
        subset = [d for d in ordered if d.confidence >= value]
        tp, fp = intersection_match(subset, refs, cfg.rho_dtc, cfg.rho_gtc, num_classes)
        ct = None
        if cfg.alpha_ct > 0:
            ct = cross_trigger_counts(subset, refs, cfg.rho_dtc, cfg.rho_cttc, num_classes)
        efpr = _effective_fpr(fp, ct, total_hours, cfg, num_classes)
        with np.errstate(invalid="ignore"):
            tpr = np.where(included, tp / np.maximum(n_refs, 1), 0.0)
        for c in range(num_classes):
            per_class[c].append((float(efpr[c]), float(tpr[c])))
    return _curve_from_point_lists(per_class, included)


def curve_from_events(
    dets: Sequence[Event],
    refs: Sequence[Event],
    total_hours: float,
    cfg: PsdsConfig = PsdsConfig(),
    num_classes: int | None = None,
) -> OperatingPointCurve:
    """Single-operating-point curve for detections without confidences."""
    if total_hours <= 0:
        raise ValueError(f"total_hours must be > 0, got {total_hours}")
    if num_classes is None:
        num_classes = 1 + max(
            [e.class_idx for e in refs] + [d.class_idx for d in dets], default=-1
        )
    n_refs = _ref_counts(refs, num_classes)
    included = n_refs > 0
    excluded = np.flatnonzero(~included)
    if excluded.size:
        warnings.warn(f"classes without references excluded from PSDS: {excluded.tolist()}", stacklevel=2)
    tp, fp = intersection_match(dets, refs, cfg.rho_dtc, cfg.rho_gtc, num_classes)
    ct = None
    if cfg.alpha_ct > 0:
        ct = cross_trigger_counts(dets, refs, cfg.rho_dtc, cfg.rho_cttc, num_classes)
    efpr = _effective_fpr(fp, ct, total_hours, cfg, num_classes)
    tpr = np.where(included, tp / np.maximum(n_refs, 1), 0.0)
    per_class = [[(0.0, 0.0), (float(efpr[c]), float(tpr[c]))] for c in range(num_classes)]
    return _curve_from_point_lists(per_class, included)


def psds(curve: OperatingPointCurve, cfg: PsdsConfig = PsdsConfig()) -> float:
    """Normalized area under the effective TPR as a step function of eFPR.

    Effective TPR at a grid point is mean - alpha_st * std of the per-class
    TPRs (included classes), clamped at zero; the step value holds until the
    next point and the area is normalized by e_max.
    """
    if not curve.included.any():
        return 0.0
    tpr = curve.tpr[:, curve.included]
    etpr = np.maximum(0.0, tpr.mean(axis=1) - cfg.alpha_st * tpr.std(axis=1))
    area = 0.0
    for i in range(curve.efpr.size):
        e = curve.efpr[i]
        if e >= cfg.e_max:
            break
        e_next = curve.efpr[i + 1] if i + 1 < curve.efpr.size else cfg.e_max
        # duplicate eFPR values: only the last (envelope max) step counts
        if e_next == e:
            continue
        area += (min(e_next, cfg.e_max) - e) * etpr[i]
    return float(area / cfg.e_max)


def segmentize(
    refs: Sequence[Event],
    duration: float,
    num_classes: int,
    segment: float = SEGMENT_SECONDS,
) -> np.ndarray:
    """Soft segment labels [S, C]: max event value overlapping each segment.

    The value of a hard event (confidence None) is 1.0.  Harden against a
    threshold downstream for mPAUC.
    """
    if duration < segment:
        raise ValueError(f"duration {duration} shorter than one segment {segment}")
    n_segments = _segment_count(duration, segment)
    labels = np.zeros((n_segments, num_classes))
    for ev in refs:
        if not 0 <= ev.class_idx < num_classes:
            raise ValueError(f"class index {ev.class_idx} out of range")
        value = 1.0 if ev.confidence is None else ev.confidence
        first = max(0, int(math.floor(ev.onset / segment + 1e-9)))
        last = min(n_segments - 1, int(math.ceil(ev.offset / segment - 1e-9)) - 1)
        for s in range(first, last + 1):
            labels[s, ev.class_idx] = max(labels[s, ev.class_idx], value)
    return labels


def _segment_count(duration: float, segment: float) -> int:
    return max(1, int(math.ceil(duration / segment - 1e-9)))


def segment_scores(post: Posteriorgram, segment: float = SEGMENT_SECONDS) -> np.ndarray:
    """Max-pool frame scores into segments: [S, C] with S = ceil(T*fp / segment).

    When the segment is an integer number of frames the assignment is exact
    integer arithmetic; otherwise frames are binned by their center time.
    """
    t, fp = post.num_frames, post.frame_period
    n_segments = _segment_count(t * fp, segment)
    ratio = segment / fp
    if abs(ratio - round(ratio)) < 1e-9 and round(ratio) >= 1:
        per = int(round(ratio))
        seg_idx = np.arange(t) // per
    else:
        seg_idx = np.floor((np.arange(t) + 0.5) * fp / segment).astype(np.int64)
    seg_idx = np.minimum(seg_idx, n_segments - 1)
    scores = np.zeros((n_segments, post.num_classes))
    np.maximum.at(scores, seg_idx, post.scores)
    return scores


def binary_roc(labels: np.ndarray, scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """ROC points from a descending threshold sweep, tie groups collapsed,
    starting at (0, 0).  Returns (fpr, tpr)."""
    labels = np.asarray(labels, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one positive and one negative")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    tps = np.cumsum(labels[order])
    fps = np.cumsum(~labels[order])
    keep = np.flatnonzero(np.diff(np.append(sorted_scores, -np.inf)) != 0)
    fpr = np.concatenate([[0.0], fps[keep] / n_neg])
    tpr = np.concatenate([[0.0], tps[keep] / n_pos])
    return fpr, tpr


def partial_auc_standardized(fpr: np.ndarray, tpr: np.ndarray, max_fpr: float = MAX_FPR) -> float:
    """Partial ROC area up to max_fpr (linear boundary interpolation),
    McClish-standardized so chance = 0.5 and perfect = 1.0."""
    if not 0.0 < max_fpr <= 1.0:
        raise ValueError(f"max_fpr must be in (0, 1], got {max_fpr}")
    if max_fpr < fpr[-1]:
        stop = int(np.searchsorted(fpr, max_fpr, side="right"))
        boundary_tpr = np.interp(max_fpr, fpr[stop - 1 : stop + 1], tpr[stop - 1 : stop + 1])
        fpr = np.concatenate([fpr[:stop], [max_fpr]])
        tpr = np.concatenate([tpr[:stop], [boundary_tpr]])
    area = float(np.trapezoid(tpr, fpr))
    min_area = 0.5 * max_fpr**2
    max_area = max_fpr
    return 0.5 * (1.0 + (area - min_area) / (max_area - min_area))


def mpauc_per_class(
    scores: np.ndarray, hard_labels: np.ndarray, max_fpr: float = MAX_FPR
) -> np.ndarray:
    """Standardized partial AUC per class; NaN where a class lacks positives
    or negatives (those classes are excluded with a warning)."""
    scores = np.asarray(scores, dtype=np.float64)
    hard_labels = np.asarray(hard_labels).astype(bool)
    if scores.shape != hard_labels.shape or scores.ndim != 2:
        raise ValueError(f"scores and labels must share [S, C] shape, got {scores.shape} / {hard_labels.shape}")
    out = np.full(scores.shape[1], np.nan)
    excluded = []
    for c in range(scores.shape[1]):
        pos = int(hard_labels[:, c].sum())
        if pos == 0 or pos == scores.shape[0]:
            excluded.append(c)
            continue
        fpr, tpr = binary_roc(hard_labels[:, c], scores[:, c])
        out[c] = partial_auc_standardized(fpr, tpr, max_fpr)
    if excluded:
        warnings.warn(f"classes without both label polarities excluded from mPAUC: {excluded}", stacklevel=2)
    return out


def mpauc(scores: np.ndarray, hard_labels: np.ndarray, max_fpr: float = MAX_FPR) -> float:
    """Macro-averaged standardized partial AUC over the included classes."""
    per_class = mpauc_per_class(scores, hard_labels, max_fpr)
    if np.all(np.isnan(per_class)):
        raise ValueError("every class lacks a positive or a negative segment")
    return float(np.nanmean(per_class))


def joint_score(psds_value: float, mpauc_value: float) -> float:
    """Ranking score: PSDS + mPAUC."""
    for name, v in (("psds", psds_value), ("mpauc", mpauc_value)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {v}")
    return psds_value + mpauc_value
