"""Building prior tables by scoring prompts against a language model.

A mock provider stands in for the model here, so the numbers are fixed and
the run needs no network. Point ``LAMPP_LM_URL`` at a real scoring endpoint
and swap the provider for ``provider_from_env()`` to do the same thing live.
"""

# %%
import numpy as np

from lampp.build import action_prior, confusion_prior, room_object_prior
from lampp.fixtures import scene_lm_entries, scene_vocabs, synthetic_task, video_lm_entries
from lampp.lm import TEMPLATES, LMScorer, MockProvider

rooms, objects = scene_vocabs()
scorer = LMScorer(MockProvider.from_entries(scene_lm_entries([])))
print(TEMPLATES["room_object"].render({"r": "bathroom", "y": "shower curtain"}))

# %% one yes/no style query per (room, object) cell, then rows renormalized
ogr = room_object_prior(scorer, rooms, objects)
np.set_printoptions(precision=3, suppress=True)
print(objects.names)
for r in rooms:
    print(f"{r:>12s}", ogr.row(r))
print("provider requests:", scorer.requests)

# %% the confusion table reuses the same scorer; cached cells cost nothing
conf = confusion_prior(scorer, objects)
print("p(d | y='shower curtain'):", dict(zip(objects.names, conf.row("shower curtain").round(3).tolist())))
print("provider requests so far:", scorer.requests)

# %% successor beliefs for an instructional task become Dirichlet pseudo-counts
st = synthetic_task(0)
video_scorer = LMScorer(MockProvider.from_entries(video_lm_entries(st)))
prior = action_prior(video_scorer, st.task, st.actions, lam=10.0)
print(st.actions.names)
print(prior.alpha.round(2))
print("row sums:", prior.alpha.sum(axis=1))
