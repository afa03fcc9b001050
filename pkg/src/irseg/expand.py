"""Explicit polynomial feature maps.

``poly_expand`` maps each row ``x`` of a feature matrix to the monomial
vector ``phi(x)`` whose inner product reproduces the inhomogeneous polynomial
kernel exactly::

    phi(x) . phi(x') == (a0 + x . x') ** n

Each monomial ``x^alpha`` with total degree ``|alpha| <= n`` appears once,
scaled by the square root of its multinomial weight
``n! / ((n - |alpha|)! * prod(alpha_j!)) * a0 ** (n - |alpha|)``.  The output
dimension is therefore ``C(d + n, n)`` for ``d`` input features.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import UsageError

#: Refuse expansions beyond this many output columns.
DEFAULT_MAX_DIM = 20000


def expansion_dim(n_features: int, order: int) -> int:
    """Number of monomials of total degree <= ``order`` in ``n_features`` vars."""
    return math.comb(n_features + order, order)


def monomial_exponents(n_features: int, order: int) -> list[tuple[int, ...]]:
    """Variable-index tuples of all monomials, by ascending degree.

    Within one degree the tuples follow lexicographic order, e.g. for
    ``n_features=2, order=2``: ``(), (0,), (1,), (0,0), (0,1), (1,1)``.
    """
    out: list[tuple[int, ...]] = []
    for degree in range(order + 1):
        out.extend(itertools.combinations_with_replacement(range(n_features), degree))
    return out


def poly_expand(X: np.ndarray, order: int, bias: float = 1.0,
                max_dim: int = DEFAULT_MAX_DIM) -> np.ndarray:
    """Expand rows of ``X`` (N x d) into the polynomial feature map.

    Parameters
    ----------
    order : polynomial order ``n >= 1``.
    bias : the kernel offset ``a0 >= 0``.
    max_dim : guard against combinatorial blow-up; exceeding it raises
        :class:`UsageError`.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise UsageError(f"feature matrix must be 2-D, got shape {X.shape}")
    if order < 1:
        raise UsageError(f"expansion order must be >= 1, got {order}")
    if bias < 0:
        raise UsageError(f"expansion bias must be >= 0, got {bias}")
    n, d = X.shape
    dim = expansion_dim(d, order)
    if dim > max_dim:
        raise UsageError(
            f"expansion dimension C({d}+{order},{order}) = {dim} exceeds cap {max_dim}")
    out = np.empty((n, dim), dtype=np.float64)
    for col, variables in enumerate(monomial_exponents(d, order)):
        degree = len(variables)
        weight = math.factorial(order) // math.factorial(order - degree)
        for _, group in itertools.groupby(variables):
            weight //= math.factorial(len(tuple(group)))
        coeff = math.sqrt(weight * bias ** (order - degree))
        if degree == 0:
            out[:, col] = coeff
        else:
            out[:, col] = coeff * np.prod(X[:, variables], axis=1)
    return out


def monomial_names(columns: list[str], order: int) -> list[str]:
    """Human-readable names for the expanded columns ("1", "T", "T*H", ...)."""
    names = []
    for variables in monomial_exponents(len(columns), order):
        if not variables:
            names.append("1")
        else:
            names.append("*".join(columns[v] for v in variables))
    return names
