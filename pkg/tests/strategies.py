"""Hypothesis strategies shared across test modules."""
import numpy as np
from hypothesis import strategies as st

from chaincodes import ProbabilityMeasure, euclidean, normalize_diameter


@st.composite
def spaces(draw, min_n=1, max_n=12, dim=2, normalized=True):
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    pts = np.random.default_rng(seed).uniform(0, 1, size=(n, dim))
    # occasional duplicated point exercises zero distances
    if n > 2 and draw(st.booleans()):
        pts[-1] = pts[0]
    space = euclidean(pts)
    if normalized and space.dist.max() > 0:
        space = normalize_diameter(space)
    return space


@st.composite
def positive_measures(draw, n):
    seed = draw(st.integers(0, 2**32 - 1))
    w = np.random.default_rng(seed).dirichlet(np.ones(n)) + 1e-3
    return ProbabilityMeasure.normalized(w)


@st.composite
def space_and_measure(draw, **kw):
    space = draw(spaces(**kw))
    return space, draw(positive_measures(space.n))
