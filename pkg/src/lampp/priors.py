"""Probability tables derived from language-model plausibility scores.

Tables are stored in linear space so they can be inspected and written to
JSON; inference code converts them with :func:`floor_log`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    BadLambda,
    DegenerateRow,
    DegenerateScore,
    EmptyEnvironment,
    EmptyVocab,
    IncompleteGrid,
    UnknownLabel,
    ValidationError,
)

EPS = 1e-12
ROW_SUM_TOL = 1e-9
VOCAB_KINDS = ("room", "object", "action", "task", "goal")


def floor_log(p):
    """Elementwise log with zeros floored at ``EPS``."""
    return np.log(np.maximum(np.asarray(p, dtype=float), EPS))


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LabelVocab:
    """Ordered label set. The order fixes table indexing and tie-breaking."""

    kind: str
    names: tuple[str, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in VOCAB_KINDS:
            raise ValidationError(f"unknown vocabulary kind {self.kind!r}")
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if any(not isinstance(n, str) or not n for n in names):
            raise ValidationError("vocabulary names must be non-empty strings")
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate names in {self.kind} vocabulary")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    def __len__(self):
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def __contains__(self, name):
        return name in self._index

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownLabel(f"{name!r} is not in the {self.kind} vocabulary") from None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "names": list(self.names)}

    @classmethod
    def from_dict(cls, d) -> "LabelVocab":
        return cls(d["kind"], tuple(d["names"]))


@dataclass(frozen=True)
class PriorTable:
    """Conditional table ``P(row label | context label)``.

    ``probs[c, r]`` is the probability of row label ``r`` in context ``c``.
    """

    row_vocab: LabelVocab
    ctx_vocab: LabelVocab
    probs: np.ndarray
    normalized_over_rows: bool = True

    def __post_init__(self):
        probs = _readonly(self.probs)
        object.__setattr__(self, "probs", probs)
        if probs.shape != (len(self.ctx_vocab), len(self.row_vocab)):
            raise ValidationError(
                f"table shape {probs.shape} does not match vocabularies "
                f"({len(self.ctx_vocab)}, {len(self.row_vocab)})"
            )
        if not np.all(np.isfinite(probs)):
            raise ValidationError("table contains NaN or Inf")
        if np.any(probs < 0) or np.any(probs > 1):
            raise ValidationError("table entries must lie in [0, 1]")
        if self.normalized_over_rows:
            sums = probs.sum(axis=1)
            bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
            if bad.size:
                ctx = self.ctx_vocab.names[bad[0]]
                raise ValidationError(f"row for context {ctx!r} sums to {sums[bad[0]]!r}")

    def prob(self, ctx: str, row: str) -> float:
        return float(self.probs[self.ctx_vocab.index(ctx), self.row_vocab.index(row)])

    def row(self, ctx: str) -> np.ndarray:
        return self.probs[self.ctx_vocab.index(ctx)]

    def renormalized(self) -> "PriorTable":
        sums = self.probs.sum(axis=1, keepdims=True)
        if np.any(sums <= 0):
            raise DegenerateRow("cannot renormalize a table with an all-zero row")
        return PriorTable(self.row_vocab, self.ctx_vocab, self.probs / sums, True)

    def to_dict(self) -> dict:
        return {
            "kind": "prior_table",
            "row_vocab": self.row_vocab.to_dict(),
            "ctx_vocab": self.ctx_vocab.to_dict(),
            "normalized_over_rows": self.normalized_over_rows,
            "probs": self.probs.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "PriorTable":
        if d.get("kind") != "prior_table":
            raise ValidationError(f"expected a prior_table document, got kind={d.get('kind')!r}")
        return cls(
            LabelVocab.from_dict(d["row_vocab"]),
            LabelVocab.from_dict(d["ctx_vocab"]),
            np.array(d["probs"], dtype=float),
            bool(d["normalized_over_rows"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PriorTable":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class DirichletPrior:
    """Dirichlet hyperparameters over successor actions for one task.

    Row ``y`` of ``alpha`` holds the pseudo-counts for transitions out of
    action ``y``; every row sums to ``lam``.
    """

    task: str
    vocab: LabelVocab
    alpha: np.ndarray
    lam: float

    def __post_init__(self):
        alpha = _readonly(self.alpha)
        object.__setattr__(self, "alpha", alpha)
        n = len(self.vocab)
        if n == 0:
            raise EmptyVocab("empty action inventory")
        if alpha.shape != (n, n):
            raise ValidationError(f"alpha shape {alpha.shape} does not match |Y|={n}")
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise BadLambda(f"lambda must be positive, got {self.lam!r}")
        if not np.all(np.isfinite(alpha)) or np.any(alpha < 0):
            raise ValidationError("alpha entries must be finite and nonnegative")
        sums = alpha.sum(axis=1)
        if np.any(np.abs(sums - self.lam) > 1e-6 * max(1.0, self.lam)):
            raise ValidationError("each alpha row must sum to lambda")

    @property
    def base(self) -> np.ndarray:
        """Row-stochastic table that ``alpha`` scales."""
        return self.alpha / self.lam

    @classmethod
    def flat(cls, task: str, vocab: LabelVocab) -> "DirichletPrior":
        """All pseudo-counts equal to one (the maximum-likelihood case)."""
        n = len(vocab)
        if n == 0:
            raise EmptyVocab("empty action inventory")
        return cls(task, vocab, np.ones((n, n)), float(n))

    def with_lambda(self, lam: float) -> "DirichletPrior":
        if not (np.isfinite(lam) and lam > 0):
            raise BadLambda(f"lambda must be positive, got {lam!r}")
        return DirichletPrior(self.task, self.vocab, lam * self.base, float(lam))

    def to_dict(self) -> dict:
        return {
            "kind": "dirichlet",
            "task": self.task,
            "row_vocab": self.vocab.to_dict(),
            "ctx_vocab": self.vocab.to_dict(),
            "normalized_over_rows": True,
            "probs": self.base.tolist(),
            "lambda": self.lam,
            "alpha": self.alpha.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "DirichletPrior":
        if d.get("kind") != "dirichlet":
            raise ValidationError(f"expected a dirichlet document, got kind={d.get('kind')!r}")
        vocab = LabelVocab.from_dict(d["row_vocab"])
        lam = float(d["lambda"])
        alpha = d.get("alpha")
        alpha = np.array(alpha, dtype=float) if alpha is not None else lam * np.array(d["probs"], dtype=float)
        return cls(d["task"], vocab, alpha, lam)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "DirichletPrior":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class PlausibilityScore:
    """Probabilities of the ``plausible`` and ``implausible`` completions."""

    p_plausible: float
    p_implausible: float

    def __post_init__(self):
        for v in (self.p_plausible, self.p_implausible):
            if not np.isfinite(v) or v < 0:
                raise DegenerateScore(f"score components must be finite and >= 0, got {v!r}")

    @classmethod
    def from_logprobs(cls, plausible: float, implausible: float) -> "PlausibilityScore":
        return cls(float(np.exp(plausible)), float(np.exp(implausible)))


def relative_plausibility(score: PlausibilityScore) -> float:
    total = score.p_plausible + score.p_implausible
    if total <= 0:
        raise DegenerateScore("both plausibility components are zero")
    return score.p_plausible / total


def build_conditional_table(
    raw: Mapping[tuple[str, str], PlausibilityScore],
    row_vocab: LabelVocab,
    ctx_vocab: LabelVocab,
    normalize_rows: bool = True,
) -> PriorTable:
    """Turn a ``(ctx, row) -> score`` grid into a :class:`PriorTable`.

    With ``normalize_rows`` each context row is divided by its sum, giving
    ``P(row | ctx)``. Without it, cells keep their relative plausibility
    (the binary goal-presence case used for navigation).
    """
    probs = np.empty((len(ctx_vocab), len(row_vocab)))
    for i, ctx in enumerate(ctx_vocab):
        for j, row in enumerate(row_vocab):
            try:
                score = raw[(ctx, row)]
            except KeyError:
                raise IncompleteGrid(f"no score for context {ctx!r}, label {row!r}") from None
            probs[i, j] = relative_plausibility(score)
    if normalize_rows:
        sums = probs.sum(axis=1, keepdims=True)
        zero = np.flatnonzero(sums[:, 0] <= 0)
        if zero.size:
            raise DegenerateRow(f"context {ctx_vocab.names[zero[0]]!r} has zero total plausibility")
        probs = probs / sums
    return PriorTable(row_vocab, ctx_vocab, probs, normalize_rows)


def uniform_goal_prior(n_room_types: int) -> float:
    """Goal-presence probability when nothing is known: one over the number of room types."""
    if n_room_types < 1:
        raise EmptyEnvironment("environment has no room types")
    return 1.0 / n_room_types


def build_dirichlet(
    task: str,
    vocab: LabelVocab,
    lm_rows: Mapping[str, Sequence[float] | Mapping[str, float]],
    lam: float,
) -> DirichletPrior:
    """Scale LM successor distributions by ``lam`` into Dirichlet pseudo-counts.

    ``lm_rows`` maps each source action to its successor distribution, given
    either as a sequence in vocabulary order or as a name-to-probability map.
    Rows are renormalized before scaling.
    """
    if len(vocab) == 0:
        raise EmptyVocab("empty action inventory")
    if not (np.isfinite(lam) and lam > 0):
        raise BadLambda(f"lambda must be positive, got {lam!r}")
    n = len(vocab)
    base = np.empty((n, n))
    for i, src in enumerate(vocab):
        try:
            row = lm_rows[src]
        except KeyError:
            raise IncompleteGrid(f"no successor distribution for action {src!r}") from None
        if isinstance(row, Mapping):
            vec = np.array([float(row.get(dst, 0.0)) for dst in vocab])
            unknown = set(row) - set(vocab.names)
            if unknown:
                raise UnknownLabel(f"unknown successor actions {sorted(unknown)}")
        else:
            vec = np.asarray(row, dtype=float)
            if vec.shape != (n,):
                raise ValidationError(f"row for {src!r} has length {vec.size}, expected {n}")
        if np.any(vec < 0) or not np.all(np.isfinite(vec)):
            raise ValidationError(f"row for {src!r} has negative or non-finite entries")
        total = vec.sum()
        if total <= 0:
            raise DegenerateRow(f"row for {src!r} sums to zero")
        base[i] = vec / total
    return DirichletPrior(task, vocab, lam * base, float(lam))


def load_table(path) -> PriorTable | DirichletPrior:
    """Read either table kind from a JSON file."""
    with open(path) as fh:
        d = json.load(fh)
    kind = d.get("kind")
    if kind == "prior_table":
        return PriorTable.from_dict(d)
    if kind == "dirichlet":
        return DirichletPrior.from_dict(d)
    raise ValidationError(f"{path}: unknown table kind {kind!r}")
