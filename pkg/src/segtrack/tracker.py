"""Per-frame tracking loop: prediction, segment-to-track association, mask
merging, lost-track re-identification, and track lifecycle.

Each class is tracked in its own state space; one ``Tracker`` fans a
frame's segments out to per-class sub-trackers and merges the emissions.
The per-frame order is fixed: predict live tracks, associate segments,
create births from leftovers, demote unmatched live tracks to lost, merge
overlapping masks, re-identify lost tracks against recently born live
tracks, retire stale lost tracks, then emit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kcf
from .affinity import fuse, minmax_normalize, pm_affinity
from .assignment import FORBIDDEN_COST, solve
from .gmphd import (
    DegenerateUpdateError,
    GaussianComponent,
    ModelParams,
    init_component,
    likelihood,
    predict,
    reweight,
    update,
)
from .io_formats import CLASS_CAR, CLASS_PEDESTRIAN, load_config
from .masks import BBox, BinaryMask, box_iou, mask_bbox, mask_iou, mask_union

# appearance affinity to use for a pair whose model could not be trained
# (box smaller than the KCF minimum); neutral mid-scale evidence
_NEUTRAL_APPEARANCE = 0.5


@dataclass(frozen=True)
class Segment:
    """One instance-segmentation observation."""

    frame: int
    cls: int
    confidence: float
    mask: BinaryMask
    box: BBox
    center: tuple[float, float]

    @classmethod
    def from_mask(cls, frame: int, cls_id: int, confidence: float, mask: BinaryMask) -> "Segment":
        box = mask_bbox(mask)
        return cls(
            frame=frame, cls=cls_id, confidence=confidence, mask=mask, box=box, center=box.center
        )


class TrackStatus(Enum):
    LIVE = "live"
    LOST = "lost"
    DEAD = "dead"


@dataclass
class Track:
    """One tracked identity and its bookkeeping."""

    id: int
    cls: int
    component: GaussianComponent
    box: BBox
    t_b: int
    birth_center: tuple[float, float]
    last_update_frame: int
    last_conf: float
    hits: int = 1
    status: TrackStatus = TrackStatus.LIVE
    t_l: int | None = None
    appearance: kcf.KcfModel | None = None
    mask_history: dict[int, BinaryMask] = field(default_factory=dict)
    emit_suppressed: bool = False

    def age(self, frame: int) -> int:
        return frame - self.t_b


@dataclass(frozen=True)
class FrameResult:
    """Masks emitted for one frame as (track id, class, mask) entries."""

    frame: int
    entries: tuple[tuple[int, int, BinaryMask], ...]


@dataclass(frozen=True)
class PipelineFlags:
    """Which optional stages run: appearance fusion in the segment
    association, the duplicate-mask merge (by box or mask overlap), and
    lost-track re-identification."""

    fuse_appearance: bool
    merge_metric: str | None  # None, "box", or "mask"
    reassociate: bool

    @classmethod
    def from_name(cls, name: str) -> "PipelineFlags":
        table = {
            "p1": cls(False, None, False),
            "p2": cls(True, None, False),
            "p3": cls(True, "box", False),
            "p4": cls(True, "mask", False),
            "p5": cls(True, "mask", True),
        }
        if name not in table:
            raise ValueError(f"unknown pipeline variant {name!r}; expected p1..p5")
        return table[name]

    @property
    def needs_appearance(self) -> bool:
        return self.fuse_appearance or self.reassociate


@dataclass
class TrackerConfig:
    """Tunable thresholds; defaults are the stock values."""

    t_m: float = 0.4
    alpha: float = 100.0
    max_lost_age: int = 30
    t2ta_window: int = 10
    min_hits: int = 1
    conf_car: float = 0.6
    conf_ped: float = 0.7
    model: ModelParams = field(default_factory=ModelParams)

    @property
    def thresholds(self) -> dict[int, float]:
        return {CLASS_CAR: self.conf_car, CLASS_PEDESTRIAN: self.conf_ped}

    @classmethod
    def from_file(cls, path) -> "TrackerConfig":
        raw = load_config(path)
        cfg = cls()
        scalar_casts = {
            "t_m": float,
            "alpha": float,
            "max_lost_age": int,
            "t2ta_window": int,
            "min_hits": int,
            "conf_car": float,
            "conf_ped": float,
        }
        matrices = {}
        for key, value in raw.items():
            if key in scalar_casts:
                setattr(cfg, key, scalar_casts[key](value))
            elif key in ("f", "q", "p0", "r", "h"):
                matrices[key] = [float(v) for v in value.replace(",", " ").split()]
            else:
                raise ValueError(f"unknown config key {key!r}")
        if matrices:
            cfg.model = ModelParams.from_flat(**matrices)
        return cfg


class ClassTracker:
    """Single-class tracking state, advanced one frame per ``step`` call."""

    def __init__(self, cls_id: int, config: TrackerConfig, flags: PipelineFlags):
        self.cls = cls_id
        self.config = config
        self.flags = flags
        self.live: list[Track] = []
        self.lost: list[Track] = []
        self._next_id = 1

    # -- affinity helpers -------------------------------------------------

    def _appearance_row(self, model, image, boxes) -> list[float]:
        if model is None or image is None:
            return [_NEUTRAL_APPEARANCE] * len(boxes)
        return [kcf.appearance_affinity(model, image, box) for box in boxes]

    def _train_appearance(self, image, box: BBox, frame: int):
        if not self.flags.needs_appearance or image is None:
            return None
        if box.area < kcf.MIN_BOX_AREA:
            return None
        return kcf.train(image, box, trained_at=frame)

    # -- lifecycle steps ---------------------------------------------------

    def _segment_association(self, predicted, segments, image):
        """Fused-cost assignment between predicted tracks and segments.

        Returns (pairs, q) where q holds the plain observation likelihoods
        used again for the weight renormalisation.
        """
        n, m = len(predicted), len(segments)
        q = np.zeros((n, m))
        for i, comp in enumerate(predicted):
            for j, seg in enumerate(segments):
                q[i, j] = likelihood(comp, seg.center, self.config.model)
        a_pm = np.array([c.weight for c in predicted])[:, None] * q
        if self.flags.fuse_appearance:
            a_appr = np.array(
                [
                    self._appearance_row(track.appearance, image, [s.box for s in segments])
                    for track in self.live
                ]
            )
            appr_norm = minmax_normalize(a_appr)
        else:
            appr_norm = np.ones_like(a_pm)
        costs = fuse(minmax_normalize(a_pm), appr_norm, self.config.alpha)
        return solve(costs), q

    def _commit_update(self, track, posterior_weight, component, segment, frame, image):
        track.component = GaussianComponent(
            weight=posterior_weight, mean=component.mean, cov=component.cov
        )
        track.box = segment.box
        track.mask_history[frame] = segment.mask
        track.last_update_frame = frame
        track.last_conf = segment.confidence
        track.hits += 1
        model = self._train_appearance(image, segment.box, frame)
        if model is not None:
            track.appearance = model

    def _birth(self, segment: Segment, frame: int, image) -> Track:
        track = Track(
            id=self._next_id,
            cls=self.cls,
            component=init_component(segment.center, segment.confidence),
            box=segment.box,
            t_b=frame,
            birth_center=segment.center,
            last_update_frame=frame,
            last_conf=segment.confidence,
            appearance=self._train_appearance(image, segment.box, frame),
            mask_history={frame: segment.mask},
        )
        self._next_id += 1
        return track

    def _merge_masks(self, frame: int):
        """Union same-frame masks whose overlap passes t_m into the more
        confident track; the loser emits nothing this frame.

        Repeats until no pair overlaps above threshold, so the emitted
        masks are pairwise below t_m.
        """
        metric = self.flags.merge_metric
        if metric is None:
            return
        candidates = [t for t in self.live if frame in t.mask_history and not t.emit_suppressed]
        while len(candidates) > 1:
            best = None
            for i in range(len(candidates)):
                for j in range(i + 1, len(candidates)):
                    a, b = candidates[i], candidates[j]
                    if metric == "mask":
                        overlap = mask_iou(a.mask_history[frame], b.mask_history[frame])
                    else:
                        overlap = box_iou(
                            mask_bbox(a.mask_history[frame]), mask_bbox(b.mask_history[frame])
                        )
                    if overlap > self.config.t_m and (best is None or overlap > best[0]):
                        best = (overlap, i, j)
            if best is None:
                return
            a, b = candidates[best[1]], candidates[best[2]]
            survivor, loser = self._merge_order(a, b)
            survivor.mask_history[frame] = mask_union(
                survivor.mask_history[frame], loser.mask_history[frame]
            )
            del loser.mask_history[frame]
            loser.emit_suppressed = True
            candidates.remove(loser)

    @staticmethod
    def _merge_order(a: Track, b: Track) -> tuple[Track, Track]:
        # higher current confidence survives, ties go to the older identity
        key = lambda t: (-t.last_conf, t.t_b, t.id)
        return (a, b) if key(a) <= key(b) else (b, a)

    def _reassociate(self, frame: int, image):
        """Match lost tracks to recently born live tracks; on a match the
        live track continues under the lost track's identity."""
        if not self.flags.reassociate:
            return
        lost = [
            t for t in self.lost if t.t_l is not None and frame - t.t_l <= self.config.max_lost_age
        ]
        born = [t for t in self.live if t.age(frame) <= self.config.t2ta_window]
        if not lost or not born:
            return
        a_pm = np.zeros((len(lost), len(born)))
        blocked = np.zeros_like(a_pm, dtype=bool)
        for li, lt in enumerate(lost):
            # roll the frozen posterior forward across the gap, one noise
            # step per missing frame
            gaps = sorted({bt.t_b - lt.t_l for bt in born if bt.t_b - lt.t_l >= 1})
            rolled = {}
            comp = lt.component
            step_count = 0
            for gap in gaps:
                while step_count < gap:
                    comp = predict(comp, self.config.model)
                    step_count += 1
                rolled[gap] = comp
            for ci, bt in enumerate(born):
                gap = bt.t_b - lt.t_l
                if gap < 1:
                    blocked[li, ci] = True  # lifetimes overlapped: different objects
                    continue
                a_pm[li, ci] = pm_affinity(rolled[gap], bt.birth_center, self.config.model)
        a_appr = np.array(
            [self._appearance_row(lt.appearance, image, [bt.box for bt in born]) for lt in lost]
        )
        costs = fuse(minmax_normalize(a_pm), minmax_normalize(a_appr), self.config.alpha)
        costs[blocked] = FORBIDDEN_COST
        assignment = solve(costs)
        for li, ci in assignment.pairs:
            old, young = lost[li], born[ci]
            young.id = old.id
            young.t_b = old.t_b
            young.birth_center = old.birth_center
            merged_history = dict(old.mask_history)
            merged_history.update(young.mask_history)
            young.mask_history = merged_history
            old.status = TrackStatus.DEAD
            self.lost.remove(old)

    def step(self, frame: int, segments: list[Segment], image) -> list:
        for track in self.live:
            track.emit_suppressed = False

        predicted = [predict(t.component, self.config.model) for t in self.live]

        if predicted and segments:
            assignment, q = self._segment_association(predicted, segments, image)
            matched_rows = set()
            matched_cols = set()
            for i, j in assignment.pairs:
                try:
                    weights = reweight(predicted, list(q[:, j]))
                except DegenerateUpdateError:
                    continue  # nothing can claim this observation
                posterior = update(predicted[i], segments[j].center, self.config.model)
                self._commit_update(self.live[i], weights[i], posterior, segments[j], frame, image)
                matched_rows.add(i)
                matched_cols.add(j)
            unmatched_tracks = [t for i, t in enumerate(self.live) if i not in matched_rows]
            unmatched_segments = [s for j, s in enumerate(segments) if j not in matched_cols]
        else:
            unmatched_tracks = list(self.live)
            unmatched_segments = list(segments)

        births = [self._birth(seg, frame, image) for seg in unmatched_segments]

        for track in unmatched_tracks:
            track.status = TrackStatus.LOST
            track.t_l = track.last_update_frame
            self.live.remove(track)
            self.lost.append(track)
        self.live.extend(births)

        self._merge_masks(frame)
        self._reassociate(frame, image)

        survivors = []
        for track in self.lost:
            if track.t_l is not None and frame - track.t_l > self.config.max_lost_age:
                track.status = TrackStatus.DEAD
            else:
                survivors.append(track)
        self.lost = survivors

        emissions = []
        for track in self.live:
            if track.emit_suppressed or frame not in track.mask_history:
                continue
            if track.hits < self.config.min_hits:
                continue
            emissions.append((track.id, track.cls, track.mask_history[frame]))
        return sorted(emissions, key=lambda e: e[0])


class Tracker:
    """Multi-class tracker; call ``step`` once per frame in order."""

    def __init__(
        self,
        config: TrackerConfig | None = None,
        flags: PipelineFlags | str = "p5",
        classes=(CLASS_CAR, CLASS_PEDESTRIAN),
    ):
        self.config = config or TrackerConfig()
        self.flags = PipelineFlags.from_name(flags) if isinstance(flags, str) else flags
        self._trackers = {c: ClassTracker(c, self.config, self.flags) for c in classes}
        self._last_frame: int | None = None

    def step(self, frame: int, segments: list[Segment], image) -> FrameResult:
        if self._last_frame is not None and frame != self._last_frame + 1:
            raise ValueError(
                f"frame {frame} is out of order; expected {self._last_frame + 1}"
            )
        entries = []
        for cls_id, sub in self._trackers.items():
            class_segments = [s for s in segments if s.cls == cls_id]
            entries.extend(sub.step(frame, class_segments, image))
        self._last_frame = frame
        return FrameResult(frame=frame, entries=tuple(sorted(entries, key=lambda e: (e[1], e[0]))))
