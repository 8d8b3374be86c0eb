"""Contrastive losses with exact analytic gradients.

Similarity is the plain dot product of embeddings divided by a shared
temperature ``tau``. Row ``i`` of the query matrix is paired with row ``i``
of the reference matrix unless a ``positives`` permutation says otherwise.

The IOU-weighted loss mixes, per query, the usual InfoNCE term with a
"uniform" term that spreads the target over every in-batch reference::

    L_q = alpha_q * (-log p_q[pos]) + (1 - alpha_q) * (1/N) * sum_i (-log p_q[i])

which is a cross-entropy against the soft target
``alpha_q * onehot(pos) + (1 - alpha_q) / N``. ``alpha_q`` is a sigmoid of
the pair IOU with sharpness ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_softmax, softmax

from .errors import DomainError, ShapeError

TAU_MIN = 1e-3

AS_PRINTED = "as-printed"
INCREASING = "increasing"


@dataclass(frozen=True)
class LossConfig:
    k: float = 5.0
    tau: float = 1.0
    symmetric: bool = True
    alpha_convention: str = INCREASING
    margin: float = 1.0

    def __post_init__(self):
        if not self.k > 0:
            raise DomainError(f"k must be positive, got {self.k}")
        if not self.tau > 0:
            raise DomainError(f"tau must be positive, got {self.tau}")
        if self.alpha_convention not in (AS_PRINTED, INCREASING):
            raise ValueError(f"unknown alpha convention {self.alpha_convention!r}")

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "tau": self.tau,
            "symmetric": self.symmetric,
            "alpha_convention": self.alpha_convention,
            "margin": self.margin,
        }

    @classmethod
    def from_dict(cls, d: dict) -> LossConfig:
        return cls(
            k=float(d.get("k", 5.0)),
            tau=float(d.get("tau", 1.0)),
            symmetric=bool(d.get("symmetric", True)),
            alpha_convention=d.get("alpha_convention", INCREASING),
            margin=float(d.get("margin", 1.0)),
        )


@dataclass
class LossResult:
    loss: float
    grad_queries: np.ndarray
    grad_refs: np.ndarray
    grad_tau: float = 0.0
    # Only the triplet loss has a third operand.
    grad_negatives: np.ndarray | None = None


def weight_alpha(k: float, iou_value, convention: str = INCREASING):
    """IOU-to-weight sigmoid. Both conventions give 0.5 at zero IOU.

    ``increasing`` tends to 1 as ``k`` grows, ``as-printed`` tends to 0.
    """
    if not k > 0:
        raise DomainError(f"k must be positive, got {k}")
    x = np.asarray(iou_value, dtype=np.float64)
    if np.any((x < 0) | (x > 1)) or not np.all(np.isfinite(x)):
        raise DomainError("iou values must lie in [0, 1]")
    if convention == INCREASING:
        out = expit(k * x)
    elif convention == AS_PRINTED:
        out = 1.0 - expit(k * x)
    else:
        raise ValueError(f"unknown alpha convention {convention!r}")
    return float(out) if out.ndim == 0 else out


def _as_pair(queries, refs) -> tuple[np.ndarray, np.ndarray]:
    q = np.asarray(queries, dtype=np.float64)
    r = np.asarray(refs, dtype=np.float64)
    if q.ndim != 2 or r.ndim != 2 or q.shape != r.shape:
        raise ShapeError(f"queries {q.shape} and refs {r.shape} must both be (N, d)")
    return q, r


def _positives(positives, n: int) -> np.ndarray:
    if positives is None:
        return np.arange(n)
    pos = np.asarray(positives, dtype=np.int64)
    if pos.shape != (n,) or np.any((pos < 0) | (pos >= n)):
        raise ShapeError(f"positives must be {n} indices in [0, {n})")
    return pos


def _soft_ce(q, r, targets, tau):
    """Mean cross-entropy of softmax(q r^T / tau) rows against ``targets``.

    Returns the loss and its gradients with respect to q, r and tau.
    """
    n = q.shape[0]
    logits = q @ r.T / tau
    logp = log_softmax(logits, axis=1)
    loss = -float(np.sum(targets * logp)) / n
    g = (softmax(logits, axis=1) - targets) / n
    return loss, g @ r / tau, g.T @ q / tau, -float(np.sum(g * logits)) / tau


def _targets(pos: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    n = pos.shape[0]
    t = np.repeat(((1.0 - alpha) / n)[:, None], n, axis=1)
    t[np.arange(n), pos] += alpha
    return t


def _contrastive(q, r, pos, alpha, tau, symmetric) -> LossResult:
    tau_eff = max(float(tau), TAU_MIN)
    loss, gq, gr, gt = _soft_ce(q, r, _targets(pos, alpha), tau_eff)
    if symmetric:
        if len(np.unique(pos)) != len(pos):
            raise ShapeError("symmetric loss needs positives to be a permutation")
        inv = np.empty_like(pos)
        inv[pos] = np.arange(len(pos))
        loss2, gr2, gq2, gt2 = _soft_ce(r, q, _targets(inv, alpha[inv]), tau_eff)
        loss, gq, gr, gt = (loss + loss2) / 2, (gq + gq2) / 2, (gr + gr2) / 2, (gt + gt2) / 2
    if tau < TAU_MIN:
        gt = 0.0
    return LossResult(loss=loss, grad_queries=gq, grad_refs=gr, grad_tau=gt)


def infonce(queries, refs, positives=None, tau: float = 1.0, symmetric: bool = False) -> LossResult:
    """Mean InfoNCE over queries; ``symmetric`` averages in the ref->query direction."""
    q, r = _as_pair(queries, refs)
    pos = _positives(positives, q.shape[0])
    return _contrastive(q, r, pos, np.ones(q.shape[0]), tau, symmetric)


def weighted_infonce(
    queries, refs, ious, cfg: LossConfig = LossConfig(), tau: float | None = None, positives=None
) -> LossResult:
    """IOU-weighted InfoNCE. ``ious[i]`` belongs to the pair (query i, its positive)."""
    q, r = _as_pair(queries, refs)
    n = q.shape[0]
    ious = np.asarray(ious, dtype=np.float64)
    if ious.shape != (n,):
        raise ShapeError(f"expected {n} ious, got shape {ious.shape}")
    alpha = np.atleast_1d(weight_alpha(cfg.k, ious, cfg.alpha_convention))
    pos = _positives(positives, n)
    return _contrastive(q, r, pos, alpha, cfg.tau if tau is None else tau, cfg.symmetric)


def uniform_infonce(queries, refs, tau: float = 1.0) -> float:
    """Un-normalized uniform term: mean over queries of sum_i -log p_q[i]."""
    q, r = _as_pair(queries, refs)
    logp = log_softmax(q @ r.T / max(tau, TAU_MIN), axis=1)
    return -float(np.sum(logp)) / q.shape[0]


def triplet(anchor, positive, negative, margin: float = 1.0) -> LossResult:
    """Mean hinge ``max(0, margin + |a - p| - |a - n|)`` over rows.

    Accepts single vectors or (M, d) arrays. The subgradient is zero at the
    hinge and wherever a distance vanishes.
    """
    a = np.asarray(anchor, dtype=np.float64)
    p = np.asarray(positive, dtype=np.float64)
    n = np.asarray(negative, dtype=np.float64)
    if not (a.shape == p.shape == n.shape) or a.ndim not in (1, 2):
        raise ShapeError(f"triplet operands must share shape, got {a.shape}, {p.shape}, {n.shape}")
    single = a.ndim == 1
    a, p, n = np.atleast_2d(a), np.atleast_2d(p), np.atleast_2d(n)
    m = a.shape[0]
    dap_v, dan_v = a - p, a - n
    dap = np.linalg.norm(dap_v, axis=1)
    dan = np.linalg.norm(dan_v, axis=1)
    hinge = margin + dap - dan
    active = (hinge > 0)[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        up = np.where(dap[:, None] > 0, dap_v / dap[:, None], 0.0)
        un = np.where(dan[:, None] > 0, dan_v / dan[:, None], 0.0)
    ga = np.where(active, up - un, 0.0) / m
    gp = np.where(active, -up, 0.0) / m
    gn = np.where(active, un, 0.0) / m
    if single:
        ga, gp, gn = ga[0], gp[0], gn[0]
    return LossResult(
        loss=float(np.sum(np.maximum(hinge, 0.0))) / m,
        grad_queries=ga,
        grad_refs=gp,
        grad_tau=0.0,
        grad_negatives=gn,
    )
