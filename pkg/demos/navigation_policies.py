"""Object navigation in a room graph under four policies.

The agent teleports between rooms and takes a few detector readings in
each. ``lampp`` fuses the readings with a prior on where the goal lives;
``uniform`` uses a flat prior; ``ablation`` trusts the prior for ordering
but thresholds raw detector scores; ``mc`` asks the language model which
room type to try next, one query per step.
"""

# %%
from lampp.fixtures import NAV_GOALS, nav_lm_entries, nav_prior_table, standard_house
from lampp.lm import LMScorer, MockProvider
from lampp.navigation import DetectorModel, PolicyConfig, fused_posterior, run_batch, success_metrics

env = standard_house()
priors = nav_prior_table()
print([(r.room_id, r.room_type) for r in env.rooms])

# %% a 0.7 detector reading means different things in different rooms
for room in ("bedroom", "garage"):
    p = priors.prob(room, "bed")
    print(f"bed in {room}: prior {p:.2f}, posterior after 0.7 reading {fused_posterior(0.7, p):.3f}")

# %%
scorer = LMScorer(MockProvider.from_entries(nav_lm_entries(env)))
for kind in ("lampp", "mc", "uniform", "ablation"):
    policy = PolicyConfig(kind, priors=priors if kind in ("lampp", "ablation") else None)
    eps = run_batch(policy, env, NAV_GOALS, 200, 0, DetectorModel(), scorer if kind == "mc" else None)
    m = success_metrics(eps)
    queries = sum(e.lm_queries for e in eps)
    print(f"{kind:>9s}  SR {100 * m.freq_avg:5.1f}  class SR {100 * m.class_avg:5.1f}  LM queries {queries}")
