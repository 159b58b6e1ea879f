import numpy as np
import pytest
from hypothesis import settings

from saddlescope.fixed_points import find_saddle
from saddlescope.manifold import Branch, grow_to_length, seed_branch
from saddlescope.maps import MapSpec

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def arcs_mu15():
    """All four branches of p at mu = 1.5, each grown to length 8."""
    spec = MapSpec.standard(1.5)
    p = find_saddle(spec)
    return spec, p, {b: grow_to_length(seed_branch(spec, p, b), 8.0) for b in Branch}
