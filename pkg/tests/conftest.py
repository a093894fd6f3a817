import os

import numpy as np
from hypothesis import HealthCheck, settings

from trimsketch.pipeline import SketchConfig, sketch_sizes

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def sketch_dense(x, cfg: SketchConfig, seed: int, m: int, eps=None):
    """Level-set sizes of a dense integer vector, one update per nonzero coordinate."""
    x = np.asarray(x, dtype=np.int64)
    idx = np.nonzero(x)[0]
    return sketch_sizes(idx, x[idx], len(x), m, cfg, seed, eps)
