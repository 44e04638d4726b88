"""Local WPP constraint ``f_check``, its look-up table and global checks.

The four arguments of ``f_check`` are the labels of two nodes ``i, j`` in two
layers ``l, l'``, in the order ``(t_i(l), t_j(l), t_i(l'), t_j(l'))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import EMPTY, Labeling

EXACT_WEIGHTS = (0.0, 1.0)
RELAXED_WEIGHTS = (0.2, 0.8)


def f_check(alpha: int, beta: int, gamma: int, delta: int, q: int | None = None) -> bool:
    """True when the two-node, two-layer label pattern satisfies WPP locally.

    If ``alpha == beta`` the other layer must either keep both nodes on
    ``alpha`` or move both off it; otherwise node ``i`` may not take ``beta``
    and node ``j`` may not take ``alpha`` in the other layer.
    """
    for lab in (alpha, beta, gamma, delta):
        if lab < 1 or (q is not None and lab > q):
            raise ValueError(f"label {lab} outside 1..{q if q is not None else 'q'}")
    if alpha == beta:
        return (gamma == alpha and delta == alpha) or (gamma != alpha and delta != alpha)
    return gamma != beta and delta != alpha


@dataclass(frozen=True)
class CheckTable:
    """Weighted ``f_check`` over all ``q**4`` label tuples.

    ``valid[a, b, c, d]`` uses 0-based labels; ``table`` holds ``w_pass`` on
    valid tuples and ``w_fail`` elsewhere.
    """

    q: int
    valid: np.ndarray
    weights: tuple[float, float] = EXACT_WEIGHTS

    @property
    def w_fail(self) -> float:
        return self.weights[0]

    @property
    def w_pass(self) -> float:
        return self.weights[1]

    @property
    def table(self) -> np.ndarray:
        return np.where(self.valid, self.w_pass, self.w_fail)

    @property
    def n_pass(self) -> int:
        return int(self.valid.sum())

    def __call__(self, alpha: int, beta: int, gamma: int, delta: int) -> float:
        return self.w_pass if self.valid[alpha - 1, beta - 1, gamma - 1, delta - 1] else self.w_fail


@lru_cache(maxsize=None)
def _valid_mask(q: int) -> np.ndarray:
    a, b, c, d = np.meshgrid(*(np.arange(q),) * 4, indexing="ij")
    same = (a == b) & (((c == a) & (d == a)) | ((c != a) & (d != a)))
    diff = (a != b) & (c != b) & (d != a)
    mask = same | diff
    mask.setflags(write=False)
    return mask


def build_check_table(q: int, weights: tuple[float, float] = EXACT_WEIGHTS) -> CheckTable:
    if q < 1:
        raise ValueError("q must be >= 1")
    w_fail, w_pass = (float(w) for w in weights)
    if w_fail < 0 or w_pass < 0:
        raise ValueError("constraint weights must be non-negative")
    return CheckTable(q=q, valid=_valid_mask(q), weights=(w_fail, w_pass))


def f_check_extended(t_i, t_j) -> bool:
    """All-layers constraint: ``f_check`` on every ordered layer pair."""
    t_i = np.asarray(t_i)
    t_j = np.asarray(t_j)
    if t_i.shape != t_j.shape:
        raise ValueError("label vectors must have equal length")
    if np.any(t_i == EMPTY) or np.any(t_j == EMPTY):
        raise ValueError("empty labels are not allowed in f_check")
    L = len(t_i)
    return all(
        f_check(t_i[l], t_j[l], t_i[m], t_j[m]) for l in range(L) for m in range(L) if l != m
    )


def _violations(t: np.ndarray) -> np.ndarray:
    # V[i, j, l, k]: t_i(l) == t_j(k) != EMPTY and t_i(k) != t_j(k)
    lhs = (t[:, None, :, None] == t[None, :, None, :]) & (t[:, None, :, None] != EMPTY)
    rhs = t[:, None, None, :] == t[None, :, None, :]
    return lhs & ~rhs


def wpp_check_global(labeling: Labeling) -> tuple[int, int, int, int] | None:
    """``None`` if the labeling corresponds to a WPP community structure,
    otherwise the lexicographically smallest ``(i, j, l, k)`` witness."""
    bad = np.argwhere(_violations(labeling.t))
    if len(bad) == 0:
        return None
    return tuple(int(x) for x in bad[0])


def satisfies_wpp(labeling: Labeling) -> bool:
    return not _violations(labeling.t).any()


def pair_pass_matrix(labeling: Labeling, l: int, m: int) -> np.ndarray:
    """``P[i, j]`` = f_check on ``(t_i(l), t_j(l), t_i(m), t_j(m))``."""
    t = labeling.t
    if np.any(t[:, [l, m]] == EMPTY):
        raise ValueError("empty labels are not allowed in f_check")
    mask = _valid_mask(labeling.q)
    a, c = t[:, l] - 1, t[:, m] - 1
    return mask[a[:, None], a[None, :], c[:, None], c[None, :]]


def all_pairs_pass(labeling: Labeling) -> bool:
    """f_check holds on every node pair and every layer pair."""
    L = labeling.L
    return all(pair_pass_matrix(labeling, l, m).all() for l in range(L) for m in range(L) if l != m)
