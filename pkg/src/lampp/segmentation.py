"""Scene-level relabeling of segmentation output with a room/object prior.

Generative story: a room ``r`` produces true object labels ``y_i``, each true
label produces a perceptually similar label ``d_i``, and ``d_i`` produces the
observed segment ``x_i``. The base segmenter supplies ``p_seg(d | x_i)`` for
every segment; the prior tables supply ``p(y | r)`` and ``p(d | y)``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import OracleTooLarge, SegmentMismatch, ValidationError
from .lm import TEMPLATES, LMScorer, as_completion
from .priors import LabelVocab, PriorTable, floor_log

ORACLE_LIMIT = 10_000_000


@dataclass(frozen=True)
class SegmentObservation:
    segment_id: str
    dist: np.ndarray
    pixel_count: int = 0

    def __post_init__(self):
        dist = np.array(self.dist, dtype=float)
        dist.setflags(write=False)
        object.__setattr__(self, "dist", dist)
        if dist.ndim != 1 or dist.size == 0:
            raise ValidationError(f"segment {self.segment_id}: distribution must be a nonempty vector")
        if np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-6:
            raise ValidationError(f"segment {self.segment_id}: distribution must be nonnegative and sum to 1")
        if self.pixel_count < 0:
            raise ValidationError(f"segment {self.segment_id}: negative pixel count")

    @property
    def dstar(self) -> int:
        """Index of the base model's prediction (first maximum wins ties)."""
        return int(np.argmax(self.dist))

    @classmethod
    def from_mapping(cls, segment_id, dist: Mapping[str, float], vocab: LabelVocab, pixel_count=0):
        vec = np.zeros(len(vocab))
        for label, p in dist.items():
            vec[vocab.index(label)] = p
        return cls(str(segment_id), vec, int(pixel_count))


@dataclass(frozen=True)
class SceneModel:
    """Prior side of the model.

    ``object_given_room`` has rooms as contexts and objects as rows;
    ``confusion`` has true objects as contexts and noisy objects as rows.
    """

    object_given_room: PriorTable
    confusion: PriorTable
    room_prior: np.ndarray | None = None

    def __post_init__(self):
        objects = self.object_given_room.row_vocab.names
        if self.confusion.ctx_vocab.names != objects or self.confusion.row_vocab.names != objects:
            raise ValidationError("confusion table must use the object vocabulary on both axes")
        n_rooms = len(self.rooms)
        prior = np.full(n_rooms, 1.0 / n_rooms) if self.room_prior is None else np.array(self.room_prior, dtype=float)
        if prior.shape != (n_rooms,) or np.any(prior < 0) or abs(prior.sum() - 1) > 1e-9:
            raise ValidationError("room prior must be a distribution over the room vocabulary")
        prior.setflags(write=False)
        object.__setattr__(self, "room_prior", prior)

    @property
    def rooms(self) -> LabelVocab:
        return self.object_given_room.ctx_vocab

    @property
    def objects(self) -> LabelVocab:
        return self.object_given_room.row_vocab


@dataclass
class RelabelResult:
    segment_ids: list[str]
    posteriors: np.ndarray  # (segments, objects)
    labels: list[str]
    room_posterior: np.ndarray | None = None

    def to_dict(self, objects: LabelVocab, rooms: LabelVocab | None = None) -> dict:
        out = {
            "labels": dict(zip(self.segment_ids, self.labels)),
            "posteriors": {
                sid: dict(zip(objects.names, row.tolist())) for sid, row in zip(self.segment_ids, self.posteriors)
            },
        }
        if self.room_posterior is not None and rooms is not None:
            out["room_posterior"] = dict(zip(rooms.names, self.room_posterior.tolist()))
        return out


def _normalize_columns(m: np.ndarray) -> np.ndarray:
    # zero columns become uniform
    sums = m.sum(axis=0, keepdims=True)
    out = np.where(sums > 0, m / np.where(sums > 0, sums, 1.0), 1.0 / m.shape[0])
    return out


def _check_segments(scene: SceneModel, segments: Sequence[SegmentObservation]) -> np.ndarray:
    if not segments:
        raise ValidationError("at least one segment is required")
    n_obj = len(scene.objects)
    for s in segments:
        if s.dist.shape != (n_obj,):
            raise ValidationError(f"segment {s.segment_id}: distribution length {s.dist.size} != {n_obj} objects")
    return np.stack([s.dist for s in segments])


def room_given_object(scene: SceneModel) -> np.ndarray:
    """``p(r | y)`` by inverting ``p(y | r)`` with uniform marginals. Shape (rooms, objects)."""
    return _normalize_columns(scene.object_given_room.probs)


def object_given_noisy(scene: SceneModel) -> np.ndarray:
    """``p(y | d)`` by inverting ``p(d | y)`` with uniform marginals. Shape (true, noisy)."""
    return _normalize_columns(scene.confusion.probs)


def relabel_scene(scene: SceneModel, segments: Sequence[SegmentObservation]) -> RelabelResult:
    """Relabel every segment with its approximate max-marginal label.

    The unnormalized log score of label ``y`` for segment ``i`` is::

        log p(y | d*_i) + log p_seg(d*_i | x_i)
          + logsumexp_r [ log p(r) + log p(y | r)
                          + sum_j logsumexp_{y_j} (log p(r | y_j) + log p_seg(y_j | x_j) - log p(r)) ]

    where the product over ``j`` runs over all segments of the scene.
    """
    S = _check_segments(scene, segments)
    log_S = floor_log(S)
    log_pr = floor_log(scene.room_prior)
    log_y_given_r = floor_log(scene.object_given_room.probs)  # (R, O)
    log_r_given_y = floor_log(room_given_object(scene))  # (R, O)
    log_y_given_d = floor_log(object_given_noisy(scene))  # (O_y, O_d)

    # evidence each segment lends to each room: (n, R)
    per_segment = logsumexp(log_r_given_y[None, :, :] + log_S[:, None, :], axis=2) - log_pr[None, :]
    context = per_segment.sum(axis=0)  # (R,)
    room_term = logsumexp(log_pr[:, None] + log_y_given_r + context[:, None], axis=0)  # (O,)

    dstar = np.array([s.dstar for s in segments])
    local = log_y_given_d[:, dstar].T + log_S[np.arange(len(segments)), dstar][:, None]  # (n, O)
    post = posterior_from_scores(local + room_term[None, :])
    room_post = posterior_from_scores(log_pr + context)
    names = scene.objects.names
    labels = [names[int(np.argmax(row))] for row in post]
    return RelabelResult([s.segment_id for s in segments], post, labels, room_post)


def posterior_from_scores(log_scores: np.ndarray) -> np.ndarray:
    """Normalize unnormalized log scores along the last axis."""
    log_scores = np.asarray(log_scores, dtype=float)
    return np.exp(log_scores - logsumexp(log_scores, axis=-1, keepdims=True))


def oracle_size(scene: SceneModel, n_segments: int) -> int:
    n_obj = len(scene.objects)
    return len(scene.rooms) * n_obj**n_segments * n_obj**n_segments


def brute_force_posterior(scene: SceneModel, segments: Sequence[SegmentObservation]) -> RelabelResult:
    """Exact marginals ``p(y_i | x)`` by enumerating every ``(r, y, d)`` configuration.

    Segment likelihoods are ``p(x_i | d) ∝ p_seg(d | x_i)`` (uniform ``p(d)``).
    """
    S = _check_segments(scene, segments)
    n, n_obj = S.shape
    size = oracle_size(scene, n)
    if size > ORACLE_LIMIT:
        raise OracleTooLarge(f"{size} configurations exceeds the limit of {ORACLE_LIMIT}")
    configs = np.array(list(itertools.product(range(n_obj), repeat=n)), dtype=int)  # (A, n), reused for y and d
    G = scene.object_given_room.probs
    C = scene.confusion.probs
    seg = np.arange(n)

    p_y = np.prod(G[:, configs], axis=2)  # (R, A): prod_i p(y_i | r)
    p_d_given_y = np.prod(C[configs[:, None, :], configs[None, :, :]], axis=2)  # (A_y, A_d)
    p_x = np.prod(S[seg[None, :], configs], axis=1)  # (A_d,)
    joint = scene.room_prior[:, None, None] * p_y[:, :, None] * p_d_given_y[None] * p_x[None, None, :]

    over_y = joint.sum(axis=(0, 2))  # (A_y,)
    total = over_y.sum()
    if total <= 0:
        raise ValidationError("scene has zero probability under the model")
    post = np.zeros((n, n_obj))
    for i in range(n):
        np.add.at(post[i], configs[:, i], over_y)
    post /= total
    room_post = joint.sum(axis=(1, 2)) / total
    names = scene.objects.names
    labels = [names[int(np.argmax(row))] for row in post]
    return RelabelResult([s.segment_id for s in segments], post, labels, room_post)


@dataclass
class ChainedRelabel:
    room: str
    replacements: dict[str, str]  # detected label -> chosen label
    labels: dict[str, str]  # segment id -> chosen label


def mc_relabel(
    segments: Sequence[SegmentObservation],
    objects: LabelVocab,
    rooms: LabelVocab,
    scorer: LMScorer,
) -> ChainedRelabel:
    """Model-chaining baseline: let the LM name the room, then rename each detected label.

    Both choices are argmaxes of the LM's distribution over the known
    vocabulary rather than free generation.
    """
    if not segments:
        raise ValidationError("at least one segment is required")
    detected = sorted({s.dstar for s in segments})
    detected_names = [objects.names[i] for i in detected]
    template = TEMPLATES["mc_segment"]
    slots = {"detections": detected_names}

    room_probs = scorer.next_token_distribution(
        template, slots, [as_completion(r) for r in rooms], stop_at="r"
    )
    room = rooms.names[int(np.argmax(room_probs))]

    replacements = {}
    candidates = [as_completion(o) for o in objects]
    for name in detected_names:
        probs = scorer.next_token_distribution(template, {**slots, "r": room, "d": name}, candidates)
        replacements[name] = objects.names[int(np.argmax(probs))]
    labels = {s.segment_id: replacements[objects.names[s.dstar]] for s in segments}
    return ChainedRelabel(room, replacements, labels)


@dataclass
class IoUResult:
    per_class: dict[str, float]
    mean: float


def miou(predicted: Mapping[str, str], gold: Mapping[str, str], pixel_counts: Mapping[str, int]) -> IoUResult:
    """Pixel-weighted IoU per class and its unweighted mean.

    Classes count if they appear in either the prediction or the gold labels.
    """
    if set(predicted) != set(gold):
        missing = sorted(set(predicted) ^ set(gold))
        raise SegmentMismatch(f"segment ids differ between prediction and gold: {missing[:5]}")
    if not set(gold) <= set(pixel_counts):
        raise SegmentMismatch("pixel counts missing for some segments")
    inter: dict[str, int] = {}
    union: dict[str, int] = {}
    for sid, g in gold.items():
        p = predicted[sid]
        w = pixel_counts[sid]
        union[g] = union.get(g, 0) + w
        if p == g:
            inter[g] = inter.get(g, 0) + w
        else:
            union[p] = union.get(p, 0) + w
    per_class = {c: inter.get(c, 0) / u for c, u in sorted(union.items()) if u > 0}
    mean = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return IoUResult(per_class, mean)


def load_scene(path, objects: LabelVocab):
    """Read a scene file; returns ``(segments, gold)`` where gold may be empty."""
    with open(path) as fh:
        d = json.load(fh)
    segments = [
        SegmentObservation.from_mapping(s["id"], s["dist"], objects, s.get("pixel_count", 0)) for s in d["segments"]
    ]
    gold = {str(k): v for k, v in d.get("gold", {}).items()}
    for label in gold.values():
        objects.index(label)
    return segments, gold
