"""Posterior-averaging ensembles over fitted segmenters.

The soft vote is the arithmetic mean of the members' cloud-probability maps;
the decision threshold (virtual prior) is re-tuned on the combined map
because averaging changes the posterior scale.  A hard-majority mode is
available behind a flag.  Member order must not matter bit-for-bit, so the
per-pixel reduction sorts the member values before summing (a canonical
summation order).
"""

from __future__ import annotations

import itertools
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from .errors import DataError, UsageError
from .evaluation import TunedLambda, tune_lambda

#: Exhaustive subset search guard.
MAX_CANDIDATES = 10


def vote(posterior_maps, *, hard: bool = False) -> np.ndarray:
    """Combine member cloud-probability maps.

    Soft mode averages the probabilities; hard mode averages the members'
    0.5-thresholded votes (the value is then the fraction of members voting
    cloud).  The result is permutation-invariant bit-for-bit.
    """
    maps = [np.asarray(p, dtype=np.float64) for p in posterior_maps]
    if not maps:
        raise DataError("vote needs at least one posterior map")
    shape = maps[0].shape
    if any(m.shape != shape for m in maps):
        raise DataError("posterior maps must share one shape")
    stack = np.stack(maps)
    if hard:
        stack = (stack > 0.5).astype(np.float64)
    stack = np.sort(stack, axis=0)
    return stack.sum(axis=0) / len(maps)


@dataclass(frozen=True)
class SubsetChoice:
    indices: tuple[int, ...]
    names: tuple[str, ...]
    tuned: TunedLambda
    hard: bool

    @property
    def j(self) -> float:
        return self.tuned.j


def select_subset(named_posteriors, truth, *, hard: bool = False,
                  min_size: int = 2, lambda_grid=None) -> SubsetChoice:
    """Pick the best-J member subset by exhaustive search.

    ``named_posteriors`` is a mapping ``name -> posterior_map`` (or a
    sequence of such pairs) evaluated on one validation set; every subset of
    size >= ``min_size`` is voted, its virtual prior re-tuned on ``truth``,
    and the best J wins.  Ties keep the smaller subset (then the earlier one
    in enumeration order).  More than 10 candidates is refused — the search
    is exponential.
    """
    if isinstance(named_posteriors, Mapping):
        named = list(named_posteriors.items())
    else:
        named = list(named_posteriors)
    if len(named) < max(min_size, 2):
        raise DataError("subset selection needs at least two candidates")
    if len(named) > MAX_CANDIDATES:
        raise UsageError(f"{len(named)} candidates exceed the exhaustive-search "
                         f"limit of {MAX_CANDIDATES}")
    best: SubsetChoice | None = None
    for size in range(min_size, len(named) + 1):
        for idx in itertools.combinations(range(len(named)), size):
            combined = vote([named[i][1] for i in idx], hard=hard)
            tuned = tune_lambda(combined, truth, lambda_grid)
            if best is None or tuned.j > best.j:
                best = SubsetChoice(idx, tuple(named[i][0] for i in idx),
                                    tuned, hard)
    assert best is not None
    return best
