"""Language-model priors inside structured probabilistic models.

Modules:

- :mod:`lampp.priors`: probability tables and Dirichlet priors built from plausibility scores
- :mod:`lampp.lm`: prompt templates, scoring client, mock provider and cache
- :mod:`lampp.segmentation`: scene relabeling, exact oracle, model-chaining baseline, mIoU
- :mod:`lampp.navigation`: room-graph simulator and navigation policies
- :mod:`lampp.video`: HMM action segmentation with Dirichlet MAP transitions
"""

__version__ = "0.1.0"
