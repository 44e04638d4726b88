"""Agreement scores, WPP trial checks and the local-constraint ranking score."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .constraints import _valid_mask, wpp_check_global
from .model import EMPTY, Labeling

MAX_PERMUTATION_Q = 8


@dataclass(frozen=True)
class ScoreReport:
    agreement: float
    q_norm: float
    best_permutation: tuple[int, ...]
    wpp_majority_pass: bool | None = None
    local_pass_count: int | None = None
    per_layer: tuple[float, ...] | None = None


def _confusion(truth: np.ndarray, pred: np.ndarray, q: int) -> np.ndarray:
    # M[a, b] = number of copies with truth a and prediction b (0-based)
    mask = truth != EMPTY
    if np.any(pred[mask] == EMPTY):
        raise ValueError("predicted labels must be non-empty where truth is")
    M = np.zeros((q, q), dtype=np.int64)
    np.add.at(M, (truth[mask] - 1, pred[mask] - 1), 1)
    return M


def _best_match(M: np.ndarray) -> tuple[int, tuple[int, ...]]:
    """Max over permutations ``pi`` of ``sum_b M[pi(b), b]``."""
    q = M.shape[0]
    best, best_pi = -1, tuple(range(q))
    cols = np.arange(q)
    for pi in permutations(range(q)):
        s = int(M[list(pi), cols].sum())
        if s > best:
            best, best_pi = s, pi
    return best, best_pi


def _q_from_agreement(agreement: float, n_max: float) -> float:
    if n_max >= 1.0:
        return 1.0 if agreement >= 1.0 else 0.0
    return max(0.0, (agreement - n_max) / (1.0 - n_max))


def normalized_agreement(truth: Labeling, predicted: Labeling, n=None, per_layer: bool = False) -> ScoreReport:
    """Permutation-maximised agreement and its rescaled version ``Q``.

    One permutation ``pi`` (predicted label ``b`` read as ``pi[b-1] + 1``) is
    shared by all layers.  Copies whose true label is empty are skipped.
    ``n`` defaults to the empirical label fractions of ``truth``.  With
    ``per_layer=True`` each layer also gets its own best-permutation ``Q``,
    reported in ``per_layer``.
    """
    if truth.t.shape != predicted.t.shape:
        raise ValueError(f"shape mismatch {truth.t.shape} vs {predicted.t.shape}")
    q = max(truth.q, predicted.q)
    if q > MAX_PERMUTATION_Q:
        raise ValueError(f"q={q} exceeds the permutation search bound {MAX_PERMUTATION_Q}; use an assignment solver")
    M = _confusion(truth.t, predicted.t, q)
    total = int(M.sum())
    if total == 0:
        raise ValueError("truth has no labelled copies")
    if n is None:
        n = M.sum(axis=1) / total
    n_max = float(np.max(n))
    hits, pi = _best_match(M)
    agreement = hits / total
    layers = None
    if per_layer:
        vals = []
        for l in range(truth.L):
            Ml = _confusion(truth.t[:, l : l + 1], predicted.t[:, l : l + 1], q)
            if Ml.sum() == 0:
                continue
            h, _ = _best_match(Ml)
            vals.append(_q_from_agreement(h / Ml.sum(), n_max))
        layers = tuple(vals)
    return ScoreReport(
        agreement=agreement,
        q_norm=_q_from_agreement(agreement, n_max),
        best_permutation=pi,
        per_layer=layers,
    )


def majority_labels(predicted: Labeling, planted_clusters) -> list[int] | None:
    """Majority predicted label per ``(layer, nodes)`` cluster; ``None`` on a tie."""
    out = []
    for l, nodes in planted_clusters:
        idx = np.fromiter(nodes, dtype=np.int64)
        if idx.size == 0:
            raise ValueError(f"empty planted cluster in layer {l}")
        counts = np.bincount(predicted.t[idx, l], minlength=predicted.q + 1)
        counts[EMPTY] = 0
        top = counts.max()
        if np.count_nonzero(counts == top) > 1:
            return None
        out.append(int(np.argmax(counts)))
    return out


def wpp_majority_trial_check(predicted: Labeling, planted_clusters) -> bool:
    """Label every planted cluster by majority vote and test WPP on the result.

    Distinct clusters of one layer must also get distinct labels, otherwise
    two planted communities would be reported as one.
    """
    labels = majority_labels(predicted, planted_clusters)
    if labels is None:
        return False
    t = np.full(predicted.t.shape, EMPTY, dtype=np.int64)
    seen: dict[int, set[int]] = {}
    for (l, nodes), a in zip(planted_clusters, labels):
        if a in seen.setdefault(l, set()):
            return False
        seen[l].add(a)
        t[np.fromiter(nodes, dtype=np.int64), l] = a
    return wpp_check_global(Labeling(t, predicted.q)) is None


def local_constraint_score(predicted: Labeling) -> int:
    """Number of unordered node pairs times unordered layer pairs passing
    ``f_check`` in both layer orders."""
    t = predicted.t
    if np.any(t == EMPTY):
        raise ValueError("local_constraint_score needs a labeling without empty labels")
    mask = _valid_mask(predicted.q)
    N, L = t.shape
    iu = np.triu_indices(N, k=1)
    total = 0
    for l in range(L):
        a = t[:, l] - 1
        for m in range(l + 1, L):
            c = t[:, m] - 1
            fwd = mask[a[:, None], a[None, :], c[:, None], c[None, :]]
            bwd = mask[c[:, None], c[None, :], a[:, None], a[None, :]]
            total += int((fwd & bwd)[iu].sum())
    return total


def score(truth: Labeling, predicted: Labeling, n=None, planted_clusters=None, per_layer: bool = False) -> ScoreReport:
    """``normalized_agreement`` plus the WPP checks in one report."""
    rep = normalized_agreement(truth, predicted, n=n, per_layer=per_layer)
    wpp = wpp_majority_trial_check(predicted, planted_clusters) if planted_clusters is not None else None
    local = local_constraint_score(predicted) if not np.any(predicted.t == EMPTY) else None
    return ScoreReport(
        agreement=rep.agreement,
        q_norm=rep.q_norm,
        best_permutation=rep.best_permutation,
        wpp_majority_pass=wpp,
        local_pass_count=local,
        per_layer=rep.per_layer,
    )
