"""Room-graph object-navigation simulator and high-level policies.

The low-level controller is abstracted away: navigating to a room teleports
the agent to the room centroid, after which it receives ``k`` detector
scores. A score is drawn from the true-positive Beta distribution if the
goal is in the room and from the false-positive one otherwise, and is read
directly as ``p(goal present | observation)``.

Policies:

``lampp``     navigate by the LM prior, select on the fused posterior
``uniform``   same rules with the prior replaced by ``1 / #room types``
``ablation``  navigate by the LM prior, select on the detector score alone
``mc``        LM-chosen room-type order, select on the detector score alone
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import Exhausted, NoEpisodes, UnknownLabel, ValidationError
from .lm import TEMPLATES, LMScorer, as_completion
from .priors import PriorTable, uniform_goal_prior

POLICY_KINDS = ("lampp", "uniform", "mc", "ablation")
TIE_TOL = 1e-12  # posteriors within this of tau count as ties and do not stop


@dataclass(frozen=True)
class Room:
    room_id: str
    room_type: str
    centroid: tuple[float, float]
    adjacent: tuple[str, ...] = ()


@dataclass(frozen=True)
class EnvironmentSpec:
    rooms: tuple[Room, ...]
    placements: Mapping[str, frozenset]
    name: str = "env"

    def __post_init__(self):
        ids = [r.room_id for r in self.rooms]
        if not ids:
            raise ValidationError("environment has no rooms")
        if len(set(ids)) != len(ids):
            raise ValidationError("room ids must be unique")
        for r in self.rooms:
            if len(r.centroid) != 2 or not all(math.isfinite(c) for c in r.centroid):
                raise ValidationError(f"room {r.room_id}: centroid must be two finite coordinates")
            for a in r.adjacent:
                if a not in ids:
                    raise ValidationError(f"room {r.room_id}: unknown adjacent room {a!r}")
        unknown = set(self.placements) - set(ids)
        if unknown:
            raise ValidationError(f"placements reference unknown rooms {sorted(unknown)}")
        object.__setattr__(self, "placements", {k: frozenset(v) for k, v in self.placements.items()})

    def room(self, room_id: str) -> Room:
        for r in self.rooms:
            if r.room_id == room_id:
                return r
        raise UnknownLabel(f"no room {room_id!r}")

    @property
    def room_types(self) -> list[str]:
        """Distinct room types in order of first appearance."""
        return list(dict.fromkeys(r.room_type for r in self.rooms))

    def contains(self, room_id: str, goal: str) -> bool:
        return goal in self.placements.get(room_id, ())

    def distance(self, a: Sequence[float], b: Sequence[float]) -> float:
        return math.hypot(a[0] - b[0], a[1] - b[1])

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "rooms": [
                {"id": r.room_id, "type": r.room_type, "centroid": list(r.centroid), "adjacent": list(r.adjacent)}
                for r in self.rooms
            ],
            "placements": {k: sorted(v) for k, v in self.placements.items()},
        }

    @classmethod
    def from_dict(cls, d) -> "EnvironmentSpec":
        rooms = tuple(
            Room(str(r["id"]), r["type"], tuple(float(c) for c in r["centroid"]), tuple(r.get("adjacent", ())))
            for r in d["rooms"]
        )
        return cls(rooms, {k: frozenset(v) for k, v in d.get("placements", {}).items()}, d.get("name", "env"))


@dataclass(frozen=True)
class DetectorModel:
    """Beta-distributed detector scores, optionally overridden per goal."""

    tp: tuple[float, float] = (8.0, 2.0)
    fp: tuple[float, float] = (2.0, 8.0)
    per_goal: Mapping[str, Mapping[str, tuple[float, float]]] = field(default_factory=dict)

    def __post_init__(self):
        for name, (a, b) in [("tp", self.tp), ("fp", self.fp)] + [
            (f"{g}.{k}", v) for g, o in self.per_goal.items() for k, v in o.items()
        ]:
            if not (a > 0 and b > 0):
                raise ValidationError(f"detector {name}: Beta parameters must be positive")

    def params(self, goal: str, present: bool) -> tuple[float, float]:
        key = "tp" if present else "fp"
        return tuple(self.per_goal.get(goal, {}).get(key, getattr(self, key)))

    def draw(self, rng: np.random.Generator, goal: str, present: bool) -> float:
        a, b = self.params(goal, present)
        return float(rng.beta(a, b))

    def to_dict(self) -> dict:
        return {"tp": list(self.tp), "fp": list(self.fp), "per_goal": {g: {k: list(v) for k, v in o.items()} for g, o in self.per_goal.items()}}

    @classmethod
    def from_dict(cls, d) -> "DetectorModel":
        return cls(
            tuple(d.get("tp", (8.0, 2.0))),
            tuple(d.get("fp", (2.0, 8.0))),
            {g: {k: tuple(v) for k, v in o.items()} for g, o in d.get("per_goal", {}).items()},
        )


@dataclass(frozen=True)
class PolicyConfig:
    kind: str
    tau: float = 0.5
    k: int = 5
    priors: PriorTable | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValidationError(f"unknown policy {self.kind!r}")
        if not 0 < self.tau < 1:
            raise ValidationError("tau must lie in (0, 1)")
        if self.k < 1:
            raise ValidationError("k must be at least 1")
        if self.kind in ("lampp", "ablation") and self.priors is None:
            raise ValidationError(f"policy {self.kind!r} needs a goal prior table")
        if self.priors is not None and self.priors.normalized_over_rows:
            raise ValidationError("goal priors hold per-cell presence probabilities; expected an unnormalized table")


@dataclass
class TraceStep:
    action: str  # "navigate" or "select"
    room_id: str
    score: float | None = None
    posterior: float | None = None
    stop: bool | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass
class Episode:
    goal: str
    start_room: str
    trace: list[TraceStep]
    success: bool
    steps: int
    lm_queries: int = 0

    @property
    def visited(self) -> list[str]:
        return [t.room_id for t in self.trace if t.action == "navigate"]

    def to_dict(self) -> dict:
        return {
            "goal": self.goal,
            "start_room": self.start_room,
            "success": self.success,
            "steps": self.steps,
            "lm_queries": self.lm_queries,
            "trace": [t.to_dict() for t in self.trace],
        }


def goal_prior(policy: PolicyConfig, env: EnvironmentSpec, room_type: str, goal: str) -> float:
    """``p(goal present | room type, goal)`` as the policy sees it."""
    if policy.kind == "uniform" or policy.priors is None:
        return uniform_goal_prior(len(env.room_types))
    return policy.priors.prob(room_type, goal)


def fused_posterior(score: float, prior: float) -> float:
    """Combine detector belief and room prior over the binary presence variable."""
    num = score * prior
    den = num + (1.0 - score) * (1.0 - prior)
    return num / den if den > 0 else 0.0


def navigate_choice(
    policy: PolicyConfig,
    env: EnvironmentSpec,
    visited: Sequence[str],
    goal: str,
    position: Sequence[float],
) -> str:
    """Unvisited room with the highest prior; ties go to the nearest, then the first listed."""
    if policy.kind == "mc":
        raise ValidationError("the mc policy navigates by LM room ordering; use ChainedRoomPlanner")
    seen = set(visited)
    best = None
    best_key = None
    for order, room in enumerate(env.rooms):
        if room.room_id in seen:
            continue
        key = (-goal_prior(policy, env, room.room_type, goal), env.distance(position, room.centroid), order)
        if best_key is None or key < best_key:
            best, best_key = room, key
    if best is None:
        raise Exhausted("every room has been visited")
    return best.room_id


def select_decision(policy: PolicyConfig, env: EnvironmentSpec, score: float, room_id: str, goal: str) -> bool:
    """True to stop (declare the goal found). Strict ``> tau``, ties within ``TIE_TOL`` continue."""
    if not 0.0 <= score <= 1.0:
        raise ValidationError(f"detector score {score!r} outside [0, 1]")
    if policy.kind in ("mc", "ablation"):
        return score > policy.tau + TIE_TOL
    prior = goal_prior(policy, env, env.room(room_id).room_type, goal)
    return fused_posterior(score, prior) > policy.tau + TIE_TOL


def room_inventory(env: EnvironmentSpec, types: Sequence[str] | None = None) -> str:
    """E.g. ``"3 bathrooms, 1 living room"`` in order of first appearance."""
    counts = Counter(r.room_type for r in env.rooms)
    parts = []
    for t in types if types is not None else env.room_types:
        n = counts[t]
        parts.append(f"{n} {t}{'s' if n > 1 else ''}")
    return ", ".join(parts)


class ChainedRoomPlanner:
    """Asks the LM for the next room type to search, one query per type consumed."""

    def __init__(self, env: EnvironmentSpec, goal: str, scorer: LMScorer):
        self.env = env
        self.goal = goal
        self.scorer = scorer
        self.consumed: list[str] = []
        self.queries = 0

    def next_type(self) -> str:
        remaining = [t for t in self.env.room_types if t not in self.consumed]
        if not remaining:
            raise Exhausted("every room type has been searched")
        history = "".join(f" {t}. If not found, go to each" for t in self.consumed)
        slots = {"rooms": room_inventory(self.env), "g": self.goal, "history": history}
        probs = self.scorer.next_token_distribution(
            TEMPLATES["mc_navigation"], slots, [as_completion(t) for t in remaining]
        )
        self.queries += 1
        choice = remaining[int(np.argmax(probs))]
        self.consumed.append(choice)
        return choice


def mc_room_ordering(env: EnvironmentSpec, goal: str, scorer: LMScorer) -> list[str]:
    """Full LM-chosen order of room types."""
    planner = ChainedRoomPlanner(env, goal, scorer)
    return [planner.next_type() for _ in env.room_types]


def _nearest(env: EnvironmentSpec, candidates: Sequence[Room], position) -> Room:
    return min(enumerate(candidates), key=lambda p: (env.distance(position, p[1].centroid), p[0]))[1]


def run_episode(
    policy: PolicyConfig,
    env: EnvironmentSpec,
    goal: str,
    detector: DetectorModel,
    seed,
    start_room: str | None = None,
    scorer: LMScorer | None = None,
) -> Episode:
    """Roll out one episode. Identical arguments give an identical trace."""
    if policy.priors is not None:
        if goal not in policy.priors.row_vocab:
            raise UnknownLabel(f"goal {goal!r} is not in the prior's goal vocabulary")
        for t in env.room_types:
            policy.priors.ctx_vocab.index(t)
    if policy.kind == "mc" and scorer is None:
        raise ValidationError("the mc policy needs an LM scorer")
    rng = np.random.default_rng(seed)
    start = start_room if start_room is not None else env.rooms[0].room_id
    position = env.room(start).centroid
    planner = ChainedRoomPlanner(env, goal, scorer) if policy.kind == "mc" else None

    visited: list[str] = []
    trace: list[TraceStep] = []
    current_type_rooms: list[Room] = []
    while len(visited) < len(env.rooms):
        if planner is not None:
            while not current_type_rooms:
                t = planner.next_type()
                current_type_rooms = [r for r in env.rooms if r.room_type == t and r.room_id not in visited]
            room = _nearest(env, current_type_rooms, position)
            current_type_rooms.remove(room)
            room_id = room.room_id
        else:
            room_id = navigate_choice(policy, env, visited, goal, position)
        visited.append(room_id)
        trace.append(TraceStep("navigate", room_id))
        position = env.room(room_id).centroid
        present = env.contains(room_id, goal)
        for _ in range(policy.k):
            score = detector.draw(rng, goal, present)
            stop = select_decision(policy, env, score, room_id, goal)
            posterior = None
            if policy.kind in ("lampp", "uniform"):
                posterior = fused_posterior(score, goal_prior(policy, env, env.room(room_id).room_type, goal))
            trace.append(TraceStep("select", room_id, score, posterior, stop))
            if stop:
                return Episode(goal, start, trace, present, len(visited), planner.queries if planner else 0)
    return Episode(goal, start, trace, False, len(visited), planner.queries if planner else 0)


def episode_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    return [np.random.SeedSequence([seed, i]) for i in range(n)]


def run_batch(
    policy: PolicyConfig,
    env: EnvironmentSpec,
    goals: Sequence[str],
    n_episodes: int,
    seed: int,
    detector: DetectorModel,
    scorer: LMScorer | None = None,
) -> list[Episode]:
    """Episodes cycle through ``goals``; each gets its own seed and a random start room.

    Start rooms and detector draws depend only on ``(seed, episode index)``,
    so different policies see the same episode set.
    """
    if not goals:
        raise ValidationError("no goals given")
    episodes = []
    for i, ss in enumerate(episode_seeds(seed, n_episodes)):
        start_rng, draw_seed = [np.random.default_rng(s) for s in ss.spawn(2)]
        start = env.rooms[int(start_rng.integers(len(env.rooms)))].room_id
        episodes.append(run_episode(policy, env, goals[i % len(goals)], detector, draw_seed, start, scorer))
    return episodes


@dataclass
class SuccessMetrics:
    class_avg: float
    freq_avg: float
    per_goal: dict[str, float]
    delta: dict[str, float] | None = None

    def to_dict(self) -> dict:
        out = {"class_avg_sr": self.class_avg, "freq_avg_sr": self.freq_avg, "per_goal_sr": self.per_goal}
        if self.delta is not None:
            out["delta_sr"] = self.delta
        return out


def success_metrics(episodes: Sequence[Episode], baseline: Sequence[Episode] | None = None) -> SuccessMetrics:
    """Class-averaged (over goals) and frequency-averaged (over episodes) success rates."""
    if not episodes:
        raise NoEpisodes("no episodes to score")
    per_goal = _per_goal(episodes)
    freq = sum(e.success for e in episodes) / len(episodes)
    delta = None
    if baseline is not None:
        base = _per_goal(baseline)
        delta = {g: per_goal[g] - base[g] for g in per_goal if g in base}
    return SuccessMetrics(float(np.mean(list(per_goal.values()))), freq, per_goal, delta)


def _per_goal(episodes) -> dict[str, float]:
    if not episodes:
        raise NoEpisodes("no episodes to score")
    tally: dict[str, list[int]] = {}
    for e in episodes:
        tally.setdefault(e.goal, []).append(int(e.success))
    return {g: sum(v) / len(v) for g, v in sorted(tally.items())}


def load_environment(path) -> tuple[EnvironmentSpec, DetectorModel]:
    with open(path) as fh:
        d = json.load(fh)
    return EnvironmentSpec.from_dict(d), DetectorModel.from_dict(d.get("detector", {}))
