import numpy as np

from ivmlab import OpinionSpace, Pmf, make_pmf


def random_pmf(rng: np.random.Generator, space: OpinionSpace) -> Pmf:
    return make_pmf(space, rng.dirichlet(np.ones(space.n_states)))


def symmetric_pmf(rng: np.random.Generator, space: OpinionSpace) -> Pmf:
    w = rng.dirichlet(np.ones(space.n_states))
    w = 0.5 * (w + w[::-1])
    return make_pmf(space, w)
