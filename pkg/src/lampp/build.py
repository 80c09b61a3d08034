"""Query grids that turn LM scores into prior tables."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .lm import PLAUSIBILITY_COMPLETIONS, TEMPLATES, LMScorer, as_completion
from .priors import (
    DirichletPrior,
    LabelVocab,
    PlausibilityScore,
    PriorTable,
    build_conditional_table,
    build_dirichlet,
)

DOMAINS = ("room_object", "confusion", "nav", "action")


def plausibility_grid(
    scorer: LMScorer,
    template_id: str,
    ctx_vocab: LabelVocab,
    row_vocab: LabelVocab,
    ctx_slot: str,
    row_slot: str,
) -> dict[tuple[str, str], PlausibilityScore]:
    """One ``plausible``/``implausible`` query per ``(ctx, row)`` cell."""
    template = TEMPLATES[template_id]
    cells = [(c, r) for c in ctx_vocab for r in row_vocab]
    queries = [(template.render({ctx_slot: c, row_slot: r}), PLAUSIBILITY_COMPLETIONS) for c, r in cells]
    results = scorer.score_many(queries)
    return {cell: PlausibilityScore.from_logprobs(*lps) for cell, lps in zip(cells, results)}


def room_object_prior(scorer: LMScorer, rooms: LabelVocab, objects: LabelVocab) -> PriorTable:
    """``p(object | room)``."""
    grid = plausibility_grid(scorer, "room_object", rooms, objects, "r", "y")
    return build_conditional_table(grid, objects, rooms, normalize_rows=True)


def confusion_prior(scorer: LMScorer, objects: LabelVocab) -> PriorTable:
    """``p(noisy label d | true label y)``; contexts are true labels, rows normalized over ``d``."""
    grid = plausibility_grid(scorer, "object_confusion", objects, objects, "y", "d")
    return build_conditional_table(grid, objects, objects, normalize_rows=True)


def goal_prior_table(scorer: LMScorer, rooms: LabelVocab, goals: LabelVocab) -> PriorTable:
    """Per-cell probability that a goal object is in a room type; not normalized."""
    grid = plausibility_grid(scorer, "room_object", rooms, goals, "r", "y")
    return build_conditional_table(grid, goals, rooms, normalize_rows=False)


def action_successor_rows(scorer: LMScorer, task: str, actions: LabelVocab) -> dict[str, np.ndarray]:
    """LM distribution over the next action after each action, renormalized over the inventory."""
    template = TEMPLATES["action_order"]
    candidates = [as_completion(a) for a in actions]
    queries = [(template.render({"t": task, "Y": list(actions.names), "y": y}), candidates) for y in actions]
    results = scorer.score_many(queries)
    out = {}
    for y, lps in zip(actions, results):
        lps = np.asarray(lps)
        w = np.exp(lps - lps.max())
        out[y] = w / w.sum()
    return out


def action_prior(scorer: LMScorer, task: str, actions: LabelVocab, lam: float = 10.0) -> DirichletPrior:
    return build_dirichlet(task, actions, action_successor_rows(scorer, task, actions), lam)


def query_budget(domain: str, ctx: Sequence[str], rows: Sequence[str]) -> int:
    """Upper bound on completions scored when building a domain's prior."""
    if domain == "action":
        return len(rows) * len(rows)
    return len(ctx) * len(rows) * len(PLAUSIBILITY_COMPLETIONS)
