import numpy as np
import pytest

from hmfront import PortfolioMop, compute_moments, synthetic_returns

# The shared well-behaved 3-asset instance: distinct anchors, an anchor hull
# whose rays mostly intersect the attainable image set, and enough skewness
# for the third objective to matter.
CONVEX_SEED = 28
CONVEX_LEVEL = 0.4
CONVEX_T = 400


@pytest.fixture(scope="session")
def convex_returns():
    return synthetic_returns(3, CONVEX_T, CONVEX_SEED, CONVEX_LEVEL)


@pytest.fixture(scope="session")
def convex_mop(convex_returns):
    return PortfolioMop(moments=compute_moments(convex_returns))


@pytest.fixture(scope="session")
def mv_mop(convex_returns):
    return PortfolioMop(
        moments=compute_moments(convex_returns), objectives=("mean", "variance")
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
