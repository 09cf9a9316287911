"""Canonical small joints used by the frontier checkers and the test suite.

Three regimes matter for the trade-off theory:
  * independence: the group carries nothing, so maximal utility is free;
  * degenerate label: target and group coincide, which lets a predictor copy
    the group at zero measured violation (the shortcut the non-degeneracy
    assumptions exist to exclude);
  * necessity: group and input are conditionally independent given the
    target, yet the group carries unique predictive information, so any
    utility beyond the input-only optimum forces positive violation.
"""

from __future__ import annotations

import numpy as np

from .dist import JointPMF3


def _bsc(flip: float) -> np.ndarray:
    """Row-stochastic binary symmetric channel, rows indexed by the source bit."""
    return np.array([[1.0 - flip, flip], [flip, 1.0 - flip]])


def independence_fixture() -> JointPMF3:
    """X uniform bit, Y = X, Z an independent uniform bit."""
    probs = np.zeros((2, 2, 2))
    for x in range(2):
        for z in range(2):
            probs[x, x, z] = 0.25
    return JointPMF3(probs)


def degenerate_fixture(x_flip: float = 0.25) -> JointPMF3:
    """Y uniform bit, Z = Y exactly, X a noisy copy of Y."""
    ch = _bsc(x_flip)
    probs = np.zeros((2, 2, 2))
    for y in range(2):
        for x in range(2):
            probs[x, y, y] += 0.5 * ch[y, x]
    return JointPMF3(probs)


def necessity_fixture(x_flip: float = 0.25, z_flip: float = 0.25) -> JointPMF3:
    """Y uniform bit; X and Z independent noisy copies of Y.

    Satisfies X indep Z given Y by construction while Z remains informative
    about Y beyond X, the regime with a strict separation-utility trade-off.
    """
    chx = _bsc(x_flip)
    chz = _bsc(z_flip)
    probs = np.zeros((2, 2, 2))
    for y in range(2):
        probs[:, y, :] = 0.5 * np.outer(chx[y], chz[y])
    return JointPMF3(probs)


def random_joint(cards: tuple[int, int, int], rng: np.random.Generator, alpha: float = 1.0) -> JointPMF3:
    """Dirichlet-random dense joint, handy for randomized identity checks."""
    flat = rng.dirichlet(np.full(int(np.prod(cards)), alpha))
    return JointPMF3(flat.reshape(cards))
