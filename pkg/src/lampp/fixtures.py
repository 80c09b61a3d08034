"""Deterministic synthetic worlds for tests, demos and the ``fixtures gen`` command.

Each generator is a pure function of its seed. The hand-written plausibility
tables below stand in for what a language model would report; the mock LM
fixtures are derived from them so that building priors through the scoring
client reproduces these values.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .lm import PLAUSIBILITY_COMPLETIONS, TEMPLATES, as_completion
from .navigation import DetectorModel, EnvironmentSpec, Room, room_inventory
from .priors import DirichletPrior, LabelVocab, PriorTable, build_dirichlet
from .segmentation import SceneModel, SegmentObservation
from .video import TaskDataset, Video

DEFAULT_PLAUSIBILITY = 0.05

# ---------------------------------------------------------------- scenes

SCENE_ROOMS = ("bathroom", "bedroom", "kitchen", "living room", "office")
SCENE_OBJECTS = (
    "bathtub", "toilet", "sink", "shower curtain", "curtain", "mirror", "picture", "bed",
    "nightstand", "table", "cabinet", "lamp", "sofa", "tv", "refrigerator", "counter", "desk", "chair",
)  # fmt: skip

ROOM_OBJECT_PLAUSIBILITY = {
    "bathroom": {"bathtub": 0.95, "toilet": 0.95, "sink": 0.9, "shower curtain": 0.9, "mirror": 0.85,
                 "cabinet": 0.5, "curtain": 0.1, "picture": 0.2, "lamp": 0.2},
    "bedroom": {"bed": 0.95, "nightstand": 0.9, "lamp": 0.8, "curtain": 0.7, "mirror": 0.5, "picture": 0.6,
                "cabinet": 0.5, "tv": 0.4, "desk": 0.3, "chair": 0.4},
    "kitchen": {"refrigerator": 0.95, "counter": 0.9, "sink": 0.9, "cabinet": 0.9, "table": 0.7, "chair": 0.7,
                "curtain": 0.3, "picture": 0.2},
    "living room": {"sofa": 0.95, "tv": 0.9, "table": 0.8, "lamp": 0.8, "curtain": 0.8, "picture": 0.8,
                    "chair": 0.7, "cabinet": 0.4, "mirror": 0.3},
    "office": {"desk": 0.95, "chair": 0.9, "lamp": 0.7, "cabinet": 0.6, "picture": 0.5, "table": 0.4,
               "curtain": 0.4},
}  # fmt: skip

CONFUSABLE = {
    ("curtain", "shower curtain"): 0.8,
    ("mirror", "picture"): 0.7,
    ("nightstand", "table"): 0.6,
    ("nightstand", "cabinet"): 0.6,
    ("desk", "table"): 0.7,
    ("counter", "table"): 0.5,
    ("sink", "bathtub"): 0.3,
    ("tv", "picture"): 0.4,
}
SELF_CONFUSION = 0.95
TYPICAL_PLAUSIBILITY = 0.5


def room_object_plausibility(room: str, obj: str) -> float:
    return ROOM_OBJECT_PLAUSIBILITY.get(room, {}).get(obj, DEFAULT_PLAUSIBILITY)


def confusion_plausibility(d: str, y: str) -> float:
    """Plausibility that ``d`` looks like ``y`` (symmetric)."""
    if d == y:
        return SELF_CONFUSION
    return CONFUSABLE.get((d, y), CONFUSABLE.get((y, d), DEFAULT_PLAUSIBILITY))


def scene_vocabs() -> tuple[LabelVocab, LabelVocab]:
    return LabelVocab("room", SCENE_ROOMS), LabelVocab("object", SCENE_OBJECTS)


def scene_model(uniform: bool = False) -> SceneModel:
    """Scene model built directly from the plausibility tables."""
    rooms, objects = scene_vocabs()
    g = np.array([[room_object_plausibility(r, o) for o in objects] for r in rooms])
    if uniform:
        g = np.ones_like(g)
    c = np.array([[confusion_plausibility(d, y) for d in objects] for y in objects])
    return SceneModel(
        PriorTable(objects, rooms, g / g.sum(axis=1, keepdims=True)),
        PriorTable(objects, objects, c / c.sum(axis=1, keepdims=True)),
    )


def bathroom_scene(uniform: bool = False) -> tuple[list[str], list[str], SceneModel, list[SegmentObservation]]:
    """A small bathroom: a clear bathtub and a segment the base model calls ``curtain``.

    Returns ``(rooms, objects, model, segments)`` where segment ``B`` has
    ``curtain`` 0.55 / ``shower curtain`` 0.45.
    """
    rooms = ["bathroom", "bedroom", "living room"]
    objects = ["bathtub", "toilet", "curtain", "shower curtain", "bed", "sofa"]
    rv, ov = LabelVocab("room", tuple(rooms)), LabelVocab("object", tuple(objects))
    g = np.array([[room_object_plausibility(r, o) for o in objects] for r in rooms])
    if uniform:
        g = np.ones_like(g)
    c = np.array([[confusion_plausibility(d, y) for d in objects] for y in objects])
    model = SceneModel(PriorTable(ov, rv, g / g.sum(axis=1, keepdims=True)), PriorTable(ov, ov, c / c.sum(axis=1, keepdims=True)))

    def seg(sid, probs, px):
        v = np.array([probs.get(o, 0.0) for o in objects])
        return SegmentObservation(sid, v / v.sum(), px)

    segments = [
        seg("A", {"bathtub": 0.9, "toilet": 0.04, "curtain": 0.02, "shower curtain": 0.02, "bed": 0.01, "sofa": 0.01}, 4000),
        seg("B", {"curtain": 0.55, "shower curtain": 0.45}, 1500),
    ]
    return rooms, objects, model, segments


def balance_columns(m: np.ndarray, col_sum: float, iters: int = 500) -> np.ndarray:
    """Sinkhorn scaling to unit row sums and equal column sums ``col_sum``."""
    m = np.array(m, dtype=float)
    for _ in range(iters):
        m /= m.sum(axis=1, keepdims=True)
        m *= col_sum / m.sum(axis=0, keepdims=True)
    return m / m.sum(axis=1, keepdims=True)


def random_scene_problem(
    seed: int,
    n_rooms: int = 2,
    n_objects: int = 3,
    n_segments: int = 2,
    self_confusion: float = 0.8,
    confidence: float = 20.0,
):
    """Random tables and segments small enough for exhaustive enumeration.

    Both tables are balanced so every label has the same marginal, which is
    the regime the relabeling rule's Bayes inversions assume. Confusions are
    diagonal-dominant and each segment's distribution is a Dirichlet draw
    with ``confidence`` extra pseudo-counts on one random label.
    """
    rng = np.random.default_rng(seed)
    rooms = LabelVocab("room", tuple(f"room{i}" for i in range(n_rooms)))
    objects = LabelVocab("object", tuple(f"obj{i}" for i in range(n_objects)))
    g = rng.dirichlet(np.ones(n_objects), size=n_rooms)
    c = rng.dirichlet(np.ones(n_objects), size=n_objects) * (1 - self_confusion) + np.eye(n_objects) * self_confusion
    g = balance_columns(g, n_rooms / n_objects)
    c = balance_columns(c, 1.0)
    segments = []
    for i in range(n_segments):
        alpha = np.ones(n_objects)
        alpha[rng.integers(n_objects)] += confidence
        segments.append(SegmentObservation(f"s{i}", rng.dirichlet(alpha), int(rng.integers(50, 500))))
    return SceneModel(PriorTable(objects, rooms, g), PriorTable(objects, objects, c)), segments


def generate_scenes(seed: int, n_scenes: int = 4):
    """Scenes drawn from the plausibility tables with a confusable base model.

    True objects come from the room's typical objects (plausibility at least
    ``TYPICAL_PLAUSIBILITY``), weighted by the prior row.
    """
    rng = np.random.default_rng(seed)
    rooms, objects = scene_vocabs()
    model = scene_model()
    scenes = []
    for s in range(n_scenes):
        r = rooms.names[int(rng.integers(len(rooms)))]
        typical = np.array([room_object_plausibility(r, o) >= TYPICAL_PLAUSIBILITY for o in objects])
        p = np.where(typical, model.object_given_room.row(r), 0.0)
        p = p / p.sum()
        n = min(int(rng.integers(3, 6)), int(typical.sum()))
        true = rng.choice(len(objects), size=n, replace=False, p=p)
        segments, gold = [], {}
        for j, y in enumerate(true):
            sid = f"{s}-{j}"
            conf = model.confusion.probs[y].copy()
            conf[y] = 0.0
            shown = y
            if rng.random() < 0.35 and conf.sum() > 0:
                shown = int(np.argmax(conf))
            alpha = np.full(len(objects), 0.05)
            alpha[shown] += 6.0
            alpha[y] += 4.0
            dist = rng.dirichlet(alpha)
            dist = np.round(dist, 6)
            dist = dist / dist.sum()
            segments.append(
                {"id": sid, "pixel_count": int(rng.integers(200, 5000)),
                 "dist": {objects.names[k]: float(v) for k, v in enumerate(dist) if v > 0}}
            )
            gold[sid] = objects.names[y]
        scenes.append({"room": r, "segments": segments, "gold": gold})
    return scenes


def plausibility_entries(template_id: str, ctx_slot: str, row_slot: str, cells):
    """Mock-LM entries giving ``plausible`` log p and ``implausible`` log(1 - p) per cell."""
    t = TEMPLATES[template_id]
    out = []
    for ctx, row, p in cells:
        prompt = t.render({ctx_slot: ctx, row_slot: row})
        out.append((prompt, PLAUSIBILITY_COMPLETIONS[0], math.log(p)))
        out.append((prompt, PLAUSIBILITY_COMPLETIONS[1], math.log1p(-p)))
    return out


def scene_lm_entries(scenes) -> list[tuple[str, str, float]]:
    rooms, objects = scene_vocabs()
    entries = plausibility_entries(
        "room_object", "r", "y", [(r, o, room_object_plausibility(r, o)) for r in rooms for o in objects]
    )
    entries += plausibility_entries(
        "object_confusion", "y", "d", [(y, d, confusion_plausibility(d, y)) for y in objects for d in objects]
    )
    t = TEMPLATES["mc_segment"]
    for scene in scenes:
        detected = sorted(
            {max(s["dist"], key=lambda k: (s["dist"][k], -objects.index(k))) for s in scene["segments"]},
            key=objects.index,
        )
        slots = {"detections": detected}
        room_prompt = t.render(slots, stop_at="r")
        room_scores = {r: sum(math.log(room_object_plausibility(r, d)) for d in detected) for r in rooms}
        for r, lp in room_scores.items():
            entries.append((room_prompt, as_completion(r), lp))
        best = max(rooms, key=lambda r: room_scores[r])
        for d in detected:
            prompt = t.render({**slots, "r": best, "d": d})
            for y in objects:
                lp = math.log(room_object_plausibility(best, y)) + math.log(confusion_plausibility(d, y))
                entries.append((prompt, as_completion(y), lp))
    return entries


# ---------------------------------------------------------------- navigation

NAV_ROOM_TYPES = (
    "bedroom", "bathroom", "kitchen", "living room", "dining room",
    "office", "laundry room", "garage", "hallway", "closet",
)  # fmt: skip

NAV_GOALS = ("bed", "toilet", "refrigerator", "sofa", "tv monitor", "plant", "book", "laundry basket")

GOAL_PLAUSIBILITY = {
    "bed": {"bedroom": 0.95, "living room": 0.1},
    "toilet": {"bathroom": 0.95},
    "refrigerator": {"kitchen": 0.95, "garage": 0.2},
    "sofa": {"living room": 0.9, "office": 0.2},
    "tv monitor": {"living room": 0.45, "bedroom": 0.4, "office": 0.35},
    "plant": {"living room": 0.45, "office": 0.4, "dining room": 0.35, "bedroom": 0.3, "kitchen": 0.3},
    "book": {"living room": 0.45, "bedroom": 0.4, "office": 0.4},
    "laundry basket": {"laundry room": 0.45, "bedroom": 0.4, "bathroom": 0.35},
}

# which rooms hold each goal in the standard house
HOUSE_PLACEMENTS = {
    "bed": ("bedroom-1", "bedroom-2", "bedroom-3"),
    "toilet": ("bathroom-1", "bathroom-2"),
    "refrigerator": ("kitchen",),
    "sofa": ("living-room",),
    "tv monitor": ("office",),
    "plant": ("dining-room",),
    "book": ("office",),
    "laundry basket": ("bathroom-2",),
}


def goal_plausibility(room_type: str, goal: str) -> float:
    return GOAL_PLAUSIBILITY.get(goal, {}).get(room_type, DEFAULT_PLAUSIBILITY)


def nav_vocabs() -> tuple[LabelVocab, LabelVocab]:
    return LabelVocab("room", NAV_ROOM_TYPES), LabelVocab("goal", NAV_GOALS)


def nav_prior_table() -> PriorTable:
    rooms, goals = nav_vocabs()
    probs = np.array([[goal_plausibility(r, g) for g in goals] for r in rooms])
    return PriorTable(goals, rooms, probs, normalized_over_rows=False)


def standard_house() -> EnvironmentSpec:
    """Thirteen rooms of ten types on one floor."""
    layout = [
        ("bedroom-1", "bedroom", (0.0, 0.0)),
        ("bedroom-2", "bedroom", (4.0, 0.0)),
        ("bedroom-3", "bedroom", (8.0, 0.0)),
        ("bathroom-1", "bathroom", (2.0, 3.0)),
        ("bathroom-2", "bathroom", (10.0, 3.0)),
        ("hallway", "hallway", (6.0, 3.0)),
        ("closet", "closet", (12.0, 0.0)),
        ("living-room", "living room", (2.0, 7.0)),
        ("dining-room", "dining room", (7.0, 7.0)),
        ("kitchen", "kitchen", (11.0, 7.0)),
        ("office", "office", (0.0, 11.0)),
        ("laundry-room", "laundry room", (13.0, 10.0)),
        ("garage", "garage", (16.0, 6.0)),
    ]
    rooms = tuple(Room(i, t, c) for i, t, c in layout)
    placements: dict[str, set] = {}
    for goal, where in HOUSE_PLACEMENTS.items():
        for rid in where:
            placements.setdefault(rid, set()).add(goal)
    return EnvironmentSpec(rooms, {k: frozenset(v) for k, v in placements.items()}, "standard-house")


def random_house(seed: int) -> EnvironmentSpec:
    """Standard room set with shuffled centroids. Goal placements are kept."""
    rng = np.random.default_rng(seed)
    base = standard_house()
    coords = rng.uniform(0, 20, size=(len(base.rooms), 2)).round(3)
    rooms = tuple(Room(r.room_id, r.room_type, (float(x), float(y))) for r, (x, y) in zip(base.rooms, coords))
    return EnvironmentSpec(rooms, base.placements, f"house-{seed}")


def nav_lm_entries(env: EnvironmentSpec, goals=NAV_GOALS) -> list[tuple[str, str, float]]:
    """Mock-LM entries for the goal prior grid and for the chained room-ordering prompts."""
    rooms, _ = nav_vocabs()
    entries = plausibility_entries("room_object", "r", "y", [(r, g, goal_plausibility(r, g)) for r in rooms for g in goals])
    t = TEMPLATES["mc_navigation"]
    inventory = room_inventory(env)
    for g in goals:
        consumed: list[str] = []
        remaining = list(env.room_types)
        while remaining:
            history = "".join(f" {c}. If not found, go to each" for c in consumed)
            prompt = t.render({"rooms": inventory, "g": g, "history": history})
            for r in remaining:
                entries.append((prompt, as_completion(r), math.log(goal_plausibility(r, g))))
            best = max(remaining, key=lambda r: (goal_plausibility(r, g), -remaining.index(r)))
            consumed.append(best)
            remaining.remove(best)
    return entries


# ---------------------------------------------------------------- video

TASK_STEPS = {
    "make pancakes": ("add flour", "crack egg", "whisk batter", "pour batter", "flip pancake"),
    "make coffee": ("grind beans", "boil water", "add grounds", "pour water", "stir coffee"),
    "change tire": ("loosen nuts", "jack up car", "remove tire", "mount spare", "tighten nuts"),
}
BACKGROUND = "background"


@dataclass
class SyntheticTask:
    """A known HMM, datasets drawn from it, and an LM-style successor table."""

    task: str
    actions: LabelVocab
    obs_vocab: tuple[str, ...]
    theta: np.ndarray
    eta: np.ndarray
    initial: np.ndarray
    lm_rows: np.ndarray
    train: TaskDataset
    eval: TaskDataset

    def prior(self, lam: float = 10.0) -> DirichletPrior:
        return build_dirichlet(self.task, self.actions, {a: self.lm_rows[i] for i, a in enumerate(self.actions)}, lam)


def synthetic_task(
    seed: int,
    task: str = "make pancakes",
    n_train: int = 60,
    n_eval: int = 20,
    n_ambiguous: int = 3,
    clean_emission: float = 0.4,
) -> SyntheticTask:
    """Frame-level HMM over background plus ordered steps.

    Each step mostly repeats, then advances to the next step, occasionally
    skipping one. Each action emits its own symbol with probability
    ``clean_emission`` and otherwise a shared ambiguous symbol. The LM table
    puts most mass on the true next step.
    """
    rng = np.random.default_rng(seed)
    steps = list(TASK_STEPS[task])
    order = steps
    actions = LabelVocab("action", (BACKGROUND, *steps))
    n = len(actions)
    idx = {a: i for i, a in enumerate(actions)}
    theta = np.zeros((n, n))
    theta[0, 0] = 0.6
    theta[0, idx[order[0]]] = 0.4
    for k, a in enumerate(order):
        i = idx[a]
        if k == len(order) - 1:
            theta[i, i], theta[i, 0] = 0.7, 0.3
            continue
        theta[i, i] = 0.65
        theta[i, idx[order[k + 1]]] = 0.25
        theta[i, idx[order[k + 2]] if k + 2 < len(order) else 0] += 0.05
        theta[i, 0] += 0.05
    initial = np.zeros(n)
    initial[0] = 0.8
    initial[idx[order[0]]] = 0.2

    obs_vocab = tuple(f"clip-{a.replace(' ', '-')}" for a in actions) + tuple(f"blur-{j}" for j in range(n_ambiguous))
    eta = np.zeros((n, len(obs_vocab)))
    for i in range(n):
        eta[i, i] = clean_emission
        eta[i, n:] = (1 - clean_emission) / n_ambiguous
        eta[i] = 0.97 * eta[i] + 0.03 / len(obs_vocab)

    # successor beliefs: mass on the true next step, little on repeats
    lm_rows = np.full((n, n), 0.3 / n)
    for i in range(n):
        off = theta[i].copy()
        off[i] = 0.0
        lm_rows[i] += 0.7 * off / off.sum()

    def sample(prefix, count, split):
        videos = []
        for v in range(count):
            length = int(rng.integers(18, 36))
            states = [int(rng.choice(n, p=initial))]
            for _ in range(length - 1):
                states.append(int(rng.choice(n, p=theta[states[-1]])))
            obs = [obs_vocab[int(rng.choice(len(obs_vocab), p=eta[s]))] for s in states]
            videos.append(Video(f"{prefix}{v:03d}", tuple(obs), tuple(actions.names[s] for s in states)))
        return TaskDataset(task, actions, BACKGROUND, obs_vocab, tuple(videos), split)

    train = sample("train-", n_train, "train")
    evald = sample("eval-", n_eval, "eval")
    return SyntheticTask(task, actions, obs_vocab, theta, eta, initial, lm_rows, train, evald)


def holdout_transition(st: SyntheticTask, max_share: float = 0.75) -> tuple[str, str]:
    """Most widespread step-to-step transition found in at most ``max_share`` of training videos.

    Holding out something present in nearly every video would leave no
    training data at all, so the cap keeps a usable training split.
    """
    videos: dict[tuple[str, str], int] = {}
    for v in st.train.videos:
        for a, b in set(v.transitions()):
            if a != b and BACKGROUND not in (a, b):
                videos[(a, b)] = videos.get((a, b), 0) + 1
    cap = max_share * len(st.train.videos)
    eligible = sorted(t for t, n in videos.items() if n <= cap) or sorted(videos)
    return max(eligible, key=lambda t: (videos[t] if videos[t] <= cap else -videos[t]))


def video_lm_entries(st: SyntheticTask) -> list[tuple[str, str, float]]:
    t = TEMPLATES["action_order"]
    entries = []
    for i, y in enumerate(st.actions):
        prompt = t.render({"t": st.task, "Y": list(st.actions.names), "y": y})
        for j, y2 in enumerate(st.actions):
            entries.append((prompt, as_completion(y2), math.log(st.lm_rows[i, j])))
    return entries


# ---------------------------------------------------------------- files

FIXTURE_KINDS = ("scene", "nav", "video")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _write_lines(path, lines):
    with open(path, "w") as fh:
        fh.write("".join(f"{line}\n" for line in lines))


def _mock_doc(entries):
    return {
        "default_logprob": -10.0,
        "entries": [{"prompt": p, "completion": c, "logprob": lp} for p, c, lp in entries],
    }


def gen_fixtures(kind: str, seed: int, out_dir) -> list[str]:
    """Write one family of fixture files into ``out_dir``; returns the paths written."""
    if kind not in FIXTURE_KINDS:
        raise ValidationError(f"unknown fixture kind {kind!r}")
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def out(name):
        p = os.path.join(out_dir, name)
        written.append(p)
        return p

    if kind == "scene":
        rooms, objects = scene_vocabs()
        scenes = generate_scenes(seed)
        _write_lines(out("rooms.txt"), rooms)
        _write_lines(out("objects.txt"), objects)
        for i, sc in enumerate(scenes):
            _write_json(out(f"scene-{i}.json"), {"segments": sc["segments"], "gold": sc["gold"]})
        _write_json(out("lm_mock.json"), _mock_doc(scene_lm_entries(scenes)))
    elif kind == "nav":
        env = random_house(seed)
        rooms, goals = nav_vocabs()
        doc = env.to_dict()
        doc["detector"] = DetectorModel().to_dict()
        _write_json(out("env.json"), doc)
        _write_lines(out("rooms.txt"), rooms)
        _write_lines(out("goals.txt"), goals)
        _write_json(out("lm_mock.json"), _mock_doc(nav_lm_entries(env)))
    else:
        st = synthetic_task(seed)
        _write_json(out("train.json"), st.train.to_dict())
        _write_json(out("eval.json"), st.eval.to_dict())
        _write_lines(out("actions.txt"), st.actions)
        _write_json(
            out("truth.json"),
            {"task": st.task, "actions": list(st.actions.names), "theta": st.theta.tolist(),
             "eta": st.eta.tolist(), "initial": st.initial.tolist(), "holdout": list(holdout_transition(st))},
        )
        _write_json(out("lm_mock.json"), _mock_doc(video_lm_entries(st)))
    return written
