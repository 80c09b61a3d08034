"""HMM action segmentation with Dirichlet transition priors.

Transitions get a Dirichlet prior whose pseudo-counts come from an LM and are
fit in closed form (MAP); emissions and initial states use add-one smoothed
frequencies. Observations are discrete symbols.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DegeneratePosterior,
    EmptySequence,
    NothingToHoldOut,
    PriorTooWeak,
    ValidationError,
    VideoMismatch,
)
from .priors import EPS, DirichletPrior, LabelVocab, floor_log

log = logging.getLogger(__name__)

# log scores this close count as tied
TIE_TOL = 1e-12


class BoundaryWarning(UserWarning):
    """A MAP numerator fell below zero and was floored."""


@dataclass(frozen=True)
class Video:
    video_id: str
    obs: tuple[str, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "obs", tuple(self.obs))
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.obs:
            raise ValidationError(f"video {self.video_id}: empty observation sequence")
        if self.labels and len(self.labels) != len(self.obs):
            raise ValidationError(f"video {self.video_id}: {len(self.labels)} labels for {len(self.obs)} frames")

    def transitions(self):
        return zip(self.labels[:-1], self.labels[1:])


@dataclass(frozen=True)
class TaskDataset:
    task: str
    actions: LabelVocab
    background: str | None
    obs_vocab: tuple[str, ...]
    videos: tuple[Video, ...]
    split: str = "train"

    def __post_init__(self):
        object.__setattr__(self, "videos", tuple(self.videos))
        object.__setattr__(self, "obs_vocab", tuple(self.obs_vocab))
        if self.split not in ("train", "eval"):
            raise ValidationError(f"unknown split {self.split!r}")
        if self.background is not None:
            self.actions.index(self.background)
        obs = set(self.obs_vocab)
        if len(obs) != len(self.obs_vocab):
            raise ValidationError("duplicate observation symbols")
        for v in self.videos:
            for a in v.labels:
                self.actions.index(a)
            bad = set(v.obs) - obs
            if bad:
                raise ValidationError(f"video {v.video_id}: unknown observation symbols {sorted(bad)[:3]}")

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "actions": list(self.actions.names),
            "background": self.background,
            "obs_vocab": list(self.obs_vocab),
            "split": self.split,
            "videos": [{"id": v.video_id, "obs": list(v.obs), "labels": list(v.labels)} for v in self.videos],
        }

    @classmethod
    def from_dict(cls, d) -> "TaskDataset":
        return cls(
            d["task"],
            LabelVocab("action", tuple(d["actions"])),
            d.get("background"),
            tuple(d["obs_vocab"]),
            tuple(Video(str(v["id"]), tuple(v["obs"]), tuple(v.get("labels", ()))) for v in d["videos"]),
            d.get("split", "train"),
        )

    @classmethod
    def load(cls, path) -> "TaskDataset":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class HmmParams:
    task: str
    actions: LabelVocab
    obs_vocab: tuple[str, ...]
    theta: np.ndarray  # (Y, Y) transitions, row = source
    eta: np.ndarray  # (Y, V) emissions
    initial: np.ndarray  # (Y,)
    transition_counts: np.ndarray = field(default=None)
    source_counts: np.ndarray = field(default=None)

    def __post_init__(self):
        n, v = len(self.actions), len(self.obs_vocab)
        for name, arr, shape in (("theta", self.theta, (n, n)), ("eta", self.eta, (n, v)), ("initial", self.initial, (n,))):
            arr = np.asarray(arr, dtype=float)
            if arr.shape != shape:
                raise ValidationError(f"{name} has shape {arr.shape}, expected {shape}")
            if np.any(arr < 0) or np.any(np.abs(arr.sum(axis=-1) - 1) > 1e-9):
                raise ValidationError(f"{name} rows must be distributions")
            object.__setattr__(self, name, arr)

    def to_dict(self) -> dict:
        d = {
            "task": self.task,
            "actions": list(self.actions.names),
            "obs_vocab": list(self.obs_vocab),
            "theta": self.theta.tolist(),
            "eta": self.eta.tolist(),
            "initial": self.initial.tolist(),
        }
        if self.transition_counts is not None:
            d["transition_counts"] = np.asarray(self.transition_counts).tolist()
            d["source_counts"] = np.asarray(self.source_counts).tolist()
        return d

    @classmethod
    def from_dict(cls, d) -> "HmmParams":
        tc = d.get("transition_counts")
        sc = d.get("source_counts")
        return cls(
            d["task"],
            LabelVocab("action", tuple(d["actions"])),
            tuple(d["obs_vocab"]),
            np.array(d["theta"]),
            np.array(d["eta"]),
            np.array(d["initial"]),
            None if tc is None else np.array(tc),
            None if sc is None else np.array(sc),
        )


def transition_counts(dataset: TaskDataset) -> np.ndarray:
    """``counts[y, y']`` = number of consecutive frame pairs labeled ``y`` then ``y'``."""
    n = len(dataset.actions)
    counts = np.zeros((n, n))
    idx = dataset.actions.index
    for v in dataset.videos:
        for a, b in v.transitions():
            counts[idx(a), idx(b)] += 1
    return counts


def _emission_counts(pairs, actions: LabelVocab, obs_vocab) -> np.ndarray:
    obs_index = {o: i for i, o in enumerate(obs_vocab)}
    counts = np.zeros((len(actions), len(obs_vocab)))
    for o, y in pairs:
        counts[actions.index(y), obs_index[o]] += 1
    return counts


def _add_one(counts: np.ndarray) -> np.ndarray:
    c = counts + 1.0
    return c / c.sum(axis=-1, keepdims=True)


def _dirichlet_rows(alpha: np.ndarray, counts: np.ndarray, actions: LabelVocab, weak_error) -> np.ndarray:
    """Row-wise mode of Dirichlet(alpha + counts).

    Rows whose numerators are all exactly zero (flat prior, no data) are
    uniform. Negative numerators are floored at ``EPS`` with a warning.
    """
    n = alpha.shape[0]
    numer = alpha + counts - 1.0
    denom = alpha.sum(axis=1) + counts.sum(axis=1) - n
    theta = np.empty_like(numer)
    for i in range(n):
        if np.all(numer[i] == 0.0):
            theta[i] = 1.0 / n
            continue
        if denom[i] <= 0:
            raise weak_error(
                f"transition row for {actions.names[i]!r} has nonpositive normalizer {denom[i]:.6g}",
                actions.names[i],
            )
        row = numer[i]
        if np.any(row < 0):
            warnings.warn(
                f"negative MAP numerator for transitions out of {actions.names[i]!r}; floored at {EPS}",
                BoundaryWarning,
                stacklevel=3,
            )
            row = np.maximum(row, EPS)
        theta[i] = row / row.sum()
    return theta


def _check_prior(prior: DirichletPrior, actions: LabelVocab):
    if prior.vocab.names != actions.names:
        raise ValidationError("prior and dataset use different action inventories")


def fit_map(dataset: TaskDataset, prior: DirichletPrior) -> HmmParams:
    """MAP transitions ``(alpha + #(y->y') - 1) / (sum alpha + #(y) - |Y|)``.

    ``#(y)`` counts occurrences of ``y`` as a transition source.
    """
    _check_prior(prior, dataset.actions)
    if not dataset.videos:
        log.warning("empty training set for task %r; transitions come from the prior alone", dataset.task)
    counts = transition_counts(dataset)
    theta = _dirichlet_rows(prior.alpha, counts, dataset.actions, DegeneratePosterior)
    pairs = [(o, y) for v in dataset.videos for o, y in zip(v.obs, v.labels)]
    eta = _add_one(_emission_counts(pairs, dataset.actions, dataset.obs_vocab))
    first = np.zeros(len(dataset.actions))
    for v in dataset.videos:
        first[dataset.actions.index(v.labels[0])] += 1
    return HmmParams(
        dataset.task, dataset.actions, dataset.obs_vocab, theta, eta, _add_one(first), counts, counts.sum(axis=1)
    )


def fit_zero_shot(
    actions: LabelVocab,
    obs_vocab: Sequence[str],
    prior: DirichletPrior,
    frames: Sequence[tuple[str, str]],
    task: str | None = None,
) -> HmmParams:
    """Transitions from the prior alone, ``(alpha - 1) / (sum alpha - |Y|)``.

    ``frames`` is an unordered collection of ``(observation, action)`` pairs
    used only for the emission model.
    """
    _check_prior(prior, actions)
    if not frames:
        raise ValidationError("zero-shot fit needs labeled frames for the emission model")
    n = len(actions)

    def too_weak(msg, action):
        return PriorTooWeak(msg + "; raise lambda so every alpha row sums to more than |Y|")

    theta = _dirichlet_rows(prior.alpha, np.zeros((n, n)), actions, too_weak)
    eta = _add_one(_emission_counts(frames, actions, obs_vocab))
    return HmmParams(task or prior.task, actions, tuple(obs_vocab), theta, eta, np.full(n, 1.0 / n))


def _first_max(v: np.ndarray) -> int:
    return int(np.flatnonzero(v >= v.max() - TIE_TOL)[0])


def viterbi_decode(params: HmmParams, observations: Sequence[str]) -> list[str]:
    """Most probable label sequence.

    Best suffix scores are computed backwards, then the path is read off
    forwards, so among equally probable sequences the one that is first in
    canonical action order wins.
    """
    if len(observations) == 0:
        raise EmptySequence("cannot decode an empty observation sequence")
    obs_index = {o: i for i, o in enumerate(params.obs_vocab)}
    try:
        obs = [obs_index[o] for o in observations]
    except KeyError as exc:
        raise ValidationError(f"unknown observation symbol {exc.args[0]!r}") from None
    log_theta = floor_log(params.theta)
    log_eta = floor_log(params.eta)
    n_frames = len(obs)
    suffix = np.zeros((n_frames, len(params.actions)))  # best score of frames after t, given the state at t
    for t in range(n_frames - 2, -1, -1):
        suffix[t] = np.max(log_theta + (log_eta[:, obs[t + 1]] + suffix[t + 1])[None, :], axis=1)
    state = _first_max(floor_log(params.initial) + log_eta[:, obs[0]] + suffix[0])
    path = [state]
    for t in range(1, n_frames):
        state = _first_max(log_theta[state] + log_eta[:, obs[t]] + suffix[t])
        path.append(state)
    names = params.actions.names
    return [names[s] for s in path]


@dataclass
class DecodeResult:
    predictions: dict[str, list[str]]
    recall: "StepRecall | None" = None


def decode_dataset(params: HmmParams, dataset: TaskDataset) -> DecodeResult:
    preds = {v.video_id: viterbi_decode(params, v.obs) for v in dataset.videos}
    gold = {v.video_id: list(v.labels) for v in dataset.videos if v.labels}
    recall = None
    if len(gold) == len(preds):
        recall = step_recall(preds, gold, dataset.background, {k: dataset.task for k in preds})
    return DecodeResult(preds, recall)


@dataclass
class StepRecall:
    per_video: dict[str, float]
    per_task: dict[str, float]
    freq_avg: float
    class_avg: float
    per_action: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "freq_avg_recall": self.freq_avg,
            "class_avg_recall": self.class_avg,
            "per_task_recall": self.per_task,
            "per_action_recall": self.per_action,
            "per_video_recall": self.per_video,
        }


def step_recall(
    predicted: Mapping[str, Sequence[str]],
    gold: Mapping[str, Sequence[str]],
    background: str | None = None,
    tasks: Mapping[str, str] | None = None,
) -> StepRecall:
    """Share of distinct non-background gold actions that appear anywhere in the prediction.

    Videos whose gold labels are all background are skipped. ``freq_avg``
    averages over videos, ``class_avg`` over tasks.
    """
    if set(predicted) != set(gold):
        raise VideoMismatch(f"video ids differ: {sorted(set(predicted) ^ set(gold))[:5]}")
    per_video = {}
    hits: dict[str, list[int]] = {}
    for vid in sorted(gold):
        want = set(gold[vid]) - {background}
        if not want:
            continue
        got = set(predicted[vid])
        per_video[vid] = len(want & got) / len(want)
        for a in want:
            hits.setdefault(a, []).append(int(a in got))
    if not per_video:
        raise VideoMismatch("no video has non-background gold actions")
    tasks = tasks or {}
    by_task: dict[str, list[float]] = {}
    for vid, r in per_video.items():
        by_task.setdefault(tasks.get(vid, ""), []).append(r)
    per_task = {t: float(np.mean(v)) for t, v in sorted(by_task.items())}
    return StepRecall(
        per_video,
        per_task,
        float(np.mean(list(per_video.values()))),
        float(np.mean(list(per_task.values()))),
        {a: float(np.mean(v)) for a, v in sorted(hits.items())},
    )


def contains_transition(labels: Sequence[str], transition: tuple[str, str]) -> bool:
    a, b = transition
    return any(x == a and y == b for x, y in zip(labels[:-1], labels[1:]))


def transition_recall(
    predicted: Mapping[str, Sequence[str]],
    gold: Mapping[str, Sequence[str]],
    transition: tuple[str, str],
) -> float | None:
    """Among videos whose gold labels contain ``transition``, the share whose prediction does too.

    Returns None when no gold video contains the transition.
    """
    if set(predicted) != set(gold):
        raise VideoMismatch(f"video ids differ: {sorted(set(predicted) ^ set(gold))[:5]}")
    relevant = [vid for vid in sorted(gold) if contains_transition(gold[vid], transition)]
    if not relevant:
        return None
    return sum(contains_transition(predicted[v], transition) for v in relevant) / len(relevant)


def bias_transition_holdout(dataset: TaskDataset, transition: tuple[str, str]) -> TaskDataset:
    """Drop every training video containing ``transition`` (consecutive frames ``y`` then ``y'``)."""
    if dataset.split != "train":
        raise ValidationError("holdout applies to the training split only")
    for a in transition:
        dataset.actions.index(a)
    kept = tuple(v for v in dataset.videos if not contains_transition(v.labels, transition))
    if len(kept) == len(dataset.videos):
        raise NothingToHoldOut(f"no training video contains {transition[0]!r} -> {transition[1]!r}")
    if not kept:
        log.warning("holding out %s -> %s removes every training video", *transition)
    return replace(dataset, videos=kept)


def parse_transition(text: str) -> tuple[str, str]:
    """Parse ``"y>y'"``."""
    parts = text.split(">")
    if len(parts) != 2 or not all(p.strip() for p in parts):
        raise ValidationError(f"transition must look like 'a>b', got {text!r}")
    return parts[0].strip(), parts[1].strip()
