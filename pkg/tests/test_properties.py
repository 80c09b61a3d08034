"""Property-based checks of the invariants each module promises."""

import warnings

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from oracles import exhaustive_viterbi

from lampp.fixtures import NAV_GOALS, bathroom_scene, nav_prior_table, random_house, random_scene_problem, standard_house
from lampp.navigation import DetectorModel, PolicyConfig, run_episode
from lampp.priors import (
    DirichletPrior,
    LabelVocab,
    PlausibilityScore,
    PriorTable,
    build_conditional_table,
    build_dirichlet,
    relative_plausibility,
)
from lampp.segmentation import SceneModel, posterior_from_scores, relabel_scene
from lampp.video import HmmParams, TaskDataset, Video, fit_map, step_recall, viterbi_decode

SETTINGS = settings(max_examples=60, deadline=None)
finite = st.floats(1e-6, 1e3, allow_nan=False, allow_infinity=False)
# exact zero or far enough from the subnormal range that 2**-40 cannot underflow
components = st.one_of(st.just(0.0), st.floats(1e-250, 1e3))


def vocab(kind, n, prefix):
    return LabelVocab(kind, tuple(f"{prefix}{i}" for i in range(n)))


@st.composite
def positive_matrix(draw, max_rows=5, max_cols=5):
    r = draw(st.integers(1, max_rows))
    c = draw(st.integers(1, max_cols))
    return draw(arrays(float, (r, c), elements=st.floats(1e-3, 1.0)))


# prior-core


@SETTINGS
@given(components, components, st.integers(-40, 40))
def test_relative_plausibility_scale_invariant(p, q, k):
    if p + q == 0:
        return
    c = 2.0**k
    a = relative_plausibility(PlausibilityScore(p, q))
    b = relative_plausibility(PlausibilityScore(p * c, q * c))
    assert a == b


@SETTINGS
@given(positive_matrix())
def test_row_normalized_tables_sum_to_one_and_renormalize_idempotently(m):
    ctx, rows = vocab("room", m.shape[0], "r"), vocab("object", m.shape[1], "o")
    raw = {(c, r): PlausibilityScore(m[i, j], 1 - m[i, j] + 1e-3) for i, c in enumerate(ctx) for j, r in enumerate(rows)}
    table = build_conditional_table(raw, rows, ctx)
    assert np.all(np.abs(table.probs.sum(axis=1) - 1) <= 1e-9)
    again = table.renormalized()
    np.testing.assert_allclose(again.probs, table.probs, rtol=0, atol=1e-15)
    np.testing.assert_allclose(again.renormalized().probs, again.probs, rtol=0, atol=1e-15)


@SETTINGS
@given(st.integers(1, 6), finite, st.data())
def test_equal_scores_give_uniform_rows(n, v, data):
    ctx, rows = vocab("room", 2, "r"), vocab("object", n, "o")
    score = PlausibilityScore(v, data.draw(finite))
    table = build_conditional_table({(c, r): score for c in ctx for r in rows}, rows, ctx)
    np.testing.assert_allclose(table.probs, 1.0 / n, rtol=0, atol=1e-15)


@SETTINGS
@given(positive_matrix(max_rows=1, max_cols=6).filter(lambda m: m.shape[1] >= 1), st.floats(0.01, 1e4))
def test_dirichlet_rows_sum_to_lambda(m, lam):
    n = m.shape[1]
    actions = vocab("action", n, "a")
    rng = np.random.default_rng(int(m.sum() * 1e6) % 2**32)
    rows = {a: rng.dirichlet(np.ones(n)) for a in actions}
    prior = build_dirichlet("t", actions, rows, lam)
    assert np.all(np.abs(prior.alpha.sum(axis=1) - lam) <= 1e-6 * max(1.0, lam))


# seg-relabel


@SETTINGS
@given(arrays(float, (3, 4), elements=st.floats(-50, 50)), st.floats(-500, 500))
def test_posterior_invariant_to_score_shift(scores, shift):
    a = posterior_from_scores(scores)
    b = posterior_from_scores(scores + shift)
    assert np.max(np.abs(a - b)) <= 1e-12
    np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)


@SETTINGS
@given(st.integers(0, 10_000), st.integers(2, 3), st.integers(2, 4), st.integers(1, 3))
def test_relabel_posteriors_are_distributions(seed, n_rooms, n_objects, n_segments):
    model, segs = random_scene_problem(seed, n_rooms, n_objects, n_segments)
    res = relabel_scene(model, segs)
    assert np.all(np.abs(res.posteriors.sum(axis=1) - 1) <= 1e-6)
    assert np.all(res.posteriors >= 0)


@SETTINGS
@given(st.integers(0, 10_000), st.integers(2, 5), st.integers(1, 4))
def test_uniform_priors_identity_confusion_keep_base_argmax(seed, n_objects, n_segments):
    _, segs = random_scene_problem(seed, 2, n_objects, n_segments)
    rooms, objects = vocab("room", 2, "r"), vocab("object", n_objects, "o")
    model = SceneModel(
        PriorTable(objects, rooms, np.full((2, n_objects), 1.0 / n_objects)),
        PriorTable(objects, objects, np.eye(n_objects)),
    )
    res = relabel_scene(model, segs)
    assert res.labels == [objects.names[s.dstar] for s in segs]


def bump(table, r, y, delta):
    probs = table.probs.copy()
    probs[r, y] += delta
    return PriorTable(table.row_vocab, table.ctx_vocab, probs / probs.sum(axis=1, keepdims=True))


@SETTINGS
@given(st.floats(0.001, 0.5))
def test_monotonic_context_effect_on_bathroom(delta):
    rooms, objects, model, segs = bathroom_scene()
    ystar = objects.index("shower curtain")
    ambiguous = [s.segment_id for s in segs].index("B")
    base = relabel_scene(model, segs)
    favored = int(np.argmax(base.room_posterior))
    bumped = SceneModel(bump(model.object_given_room, favored, ystar, delta), model.confusion)
    after = relabel_scene(bumped, segs)
    assert after.posteriors[ambiguous, ystar] >= base.posteriors[ambiguous, ystar] - 1e-12


def test_context_effect_is_not_universal():
    # raising p(y*|r) also reshapes the inverted p(r|y) column, which can
    # shift the other segments' room evidence enough to lower y*
    model, segs = random_scene_problem(76, 2, 3, 3)
    base = relabel_scene(model, segs)
    favored, ambiguous, ystar = int(np.argmax(base.room_posterior)), 1, 0
    assert ambiguous == int(np.argmin([s.dist.max() for s in segs]))
    after = relabel_scene(SceneModel(bump(model.object_given_room, favored, ystar, 0.1), model.confusion), segs)
    assert after.posteriors[ambiguous, ystar] < base.posteriors[ambiguous, ystar]


# nav-sim


@SETTINGS
@given(
    st.sampled_from(["lampp", "uniform", "ablation"]),
    st.integers(0, 50),
    st.integers(0, 2**32 - 1),
    st.sampled_from(NAV_GOALS),
)
def test_navigation_never_revisits(kind, house_seed, seed, goal):
    env = standard_house() if house_seed == 0 else random_house(house_seed)
    policy = PolicyConfig(kind, priors=nav_prior_table() if kind != "uniform" else None)
    ep = run_episode(policy, env, goal, DetectorModel(), seed)
    assert len(ep.visited) == len(set(ep.visited))
    assert ep.steps == len(ep.visited) <= len(env.rooms)
    last = ep.trace[-1]
    assert last.stop or len(ep.visited) == len(env.rooms)


# action-hmm


@st.composite
def hmm_instance(draw):
    n_states = draw(st.integers(1, 4))
    n_obs = draw(st.integers(1, 3))
    length = draw(st.integers(1, 6))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    # sparse rows exercise the epsilon floor and tie-breaking
    theta = rng.dirichlet(np.full(n_states, 0.5), size=n_states)
    eta = rng.dirichlet(np.full(n_obs, 0.5), size=n_states)
    initial = rng.dirichlet(np.ones(n_states))
    obs = [int(o) for o in rng.integers(0, n_obs, size=length)]
    actions = vocab("action", n_states, "s")
    return HmmParams("t", actions, tuple(f"o{i}" for i in range(n_obs)), theta, eta, initial), obs


@SETTINGS
@given(hmm_instance())
def test_viterbi_equals_exhaustive_search(inst):
    params, obs = inst
    want = exhaustive_viterbi(params.initial, params.theta, params.eta, obs)
    got = viterbi_decode(params, [params.obs_vocab[o] for o in obs])
    assert len(got) == len(obs)
    assert got == [params.actions.names[s] for s in want]


label_seqs = st.lists(st.lists(st.sampled_from("abc"), min_size=1, max_size=8), min_size=0, max_size=6)


def labels_dataset(seqs):
    actions = LabelVocab("action", ("a", "b", "c"))
    videos = [Video(f"v{i}", tuple(f"o{x}" for x in s), tuple(s)) for i, s in enumerate(seqs)]
    return TaskDataset("t", actions, None, ("oa", "ob", "oc"), videos, "train")


@SETTINGS
@given(label_seqs)
def test_flat_map_equals_mle_bitwise(seqs):
    data = labels_dataset(seqs)
    params = fit_map(data, DirichletPrior.flat("t", data.actions))
    counts = params.transition_counts
    for i in range(3):
        if counts[i].sum() > 0:
            assert np.array_equal(params.theta[i], counts[i] / counts[i].sum())
        else:
            assert np.array_equal(params.theta[i], np.full(3, 1 / 3))


@SETTINGS
@given(label_seqs, st.floats(0.5, 1e4), st.integers(0, 2**32 - 1))
def test_map_rows_are_distributions(seqs, lam, seed):
    data = labels_dataset(seqs)
    rng = np.random.default_rng(seed)
    prior = build_dirichlet("t", data.actions, {a: rng.dirichlet(np.ones(3)) + 0.05 for a in "abc"}, lam)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            params = fit_map(data, prior)
        except ValueError:
            return  # too weak a prior with no data is reported, not fit
    for arr in (params.theta, params.eta, params.initial):
        assert np.all(arr >= 0)
        assert np.all(np.abs(arr.sum(axis=-1) - 1) <= 1e-9)


@SETTINGS
@given(st.lists(st.tuples(st.lists(st.sampled_from("xabc"), min_size=1, max_size=6),
                          st.lists(st.sampled_from("xabc"), min_size=1, max_size=6)), min_size=1, max_size=5))  # fmt: skip
def test_step_recall_bounds(pairs):
    gold = {f"v{i}": g for i, (g, _) in enumerate(pairs)}
    pred = {f"v{i}": p for i, (_, p) in enumerate(pairs)}
    if all(set(g) <= {"x"} for g in gold.values()):
        return
    res = step_recall(pred, gold, background="x")
    assert 0 <= res.freq_avg <= 1 and 0 <= res.class_avg <= 1
    assert all(0 <= v <= 1 for v in res.per_video.values())
    perfect = step_recall(gold, gold, background="x")
    assert perfect.freq_avg == 1.0
