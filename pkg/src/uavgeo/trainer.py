"""Toy embedding trainer: an affine map per view plus L2 normalization,
optimized with Adam under a cosine learning-rate schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import NonFiniteError, ShapeError
from .losses import TAU_MIN, LossConfig, infonce, triplet, weighted_infonce
from .pairing import PairRecord
from .sampling import Batch, PairGraph, epoch_seed, sample_epoch

POSITIVE_ONLY = "positive-only"
POSITIVE_SEMI = "positive-semi"

LOSS_KINDS = ("weighted-infonce", "infonce", "triplet")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss: LossConfig = LossConfig()
    loss_kind: str = "weighted-infonce"
    data_mode: str = POSITIVE_SEMI
    d_emb: int = 32
    shared_weights: bool = True
    strict_sampling: bool = False
    learn_tau: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch size must be >= 2")
        if self.lr < 0:
            raise ValueError("learning rate must be >= 0")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")
        if self.data_mode not in (POSITIVE_ONLY, POSITIVE_SEMI):
            raise ValueError(f"unknown data mode {self.data_mode!r}")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "loss"}
        d["loss"] = self.loss.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        d = dict(d)
        loss = LossConfig.from_dict(d.pop("loss", {}))
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train config keys {sorted(unknown)}")
        return cls(loss=loss, **d)


@dataclass
class EmbedModel:
    w_q: np.ndarray
    b_q: np.ndarray
    w_r: np.ndarray
    b_r: np.ndarray
    tau: float
    shared: bool = True

    @classmethod
    def init(cls, d_in: int, d_emb: int, seed: int, shared: bool = True, tau: float = 1.0) -> EmbedModel:
        rng = np.random.default_rng(seed)
        w_q = rng.standard_normal((d_in, d_emb)) / math.sqrt(d_in)
        b_q = np.zeros(d_emb)
        if shared:
            w_r, b_r = w_q, b_q
        else:
            w_r = rng.standard_normal((d_in, d_emb)) / math.sqrt(d_in)
            b_r = np.zeros(d_emb)
        return cls(w_q, b_q, w_r, b_r, float(tau), shared)

    @property
    def d_in(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_emb(self) -> int:
        return self.w_q.shape[1]

    def params(self) -> list[np.ndarray]:
        if self.shared:
            return [self.w_q, self.b_q]
        return [self.w_q, self.b_q, self.w_r, self.b_r]

    def _forward(self, x, w, b):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.d_in:
            raise ShapeError(f"expected (n, {self.d_in}) features, got {x.shape}")
        z = x @ w + b
        norm = np.linalg.norm(z, axis=1, keepdims=True)
        return z / norm, norm

    def embed_queries(self, x) -> np.ndarray:
        return self._forward(x, self.w_q, self.b_q)[0]

    def embed_refs(self, x) -> np.ndarray:
        return self._forward(x, self.w_r, self.b_r)[0]

    def copy(self) -> EmbedModel:
        w_q, b_q = self.w_q.copy(), self.b_q.copy()
        if self.shared:
            return EmbedModel(w_q, b_q, w_q, b_q, self.tau, True)
        return EmbedModel(w_q, b_q, self.w_r.copy(), self.b_r.copy(), self.tau, False)


def _normalize_backward(e: np.ndarray, norm: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Gradient through ``e = z / |z|`` given dL/de."""
    return (g - e * np.sum(e * g, axis=1, keepdims=True)) / norm


def cosine_lr(base: float, step: int, total: int) -> float:
    """Half-cosine decay from ``base`` at step 0 to zero at the last step."""
    if total <= 1:
        return base
    return base * 0.5 * (1.0 + math.cos(math.pi * step / (total - 1)))


@dataclass
class _Adam:
    beta1: float
    beta2: float
    eps: float
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainResult:
    model: EmbedModel
    epoch_loss: list[float]
    batches_per_epoch: list[int]
    tau_trace: list[float]


def batch_loss(model: EmbedModel, cfg: TrainConfig, xq, xr, ious):
    """Loss value and parameter gradients for one batch.

    Returns (loss, grads aligned with model.params(), dL/dtau).
    """
    eq, nq = model._forward(xq, model.w_q, model.b_q)
    er, nr = model._forward(xr, model.w_r, model.b_r)
    if cfg.loss_kind == "weighted-infonce":
        res = weighted_infonce(eq, er, ious, cfg.loss, tau=model.tau)
        geq, ger = res.grad_queries, res.grad_refs
    elif cfg.loss_kind == "infonce":
        res = infonce(eq, er, tau=model.tau, symmetric=cfg.loss.symmetric)
        geq, ger = res.grad_queries, res.grad_refs
    else:
        n = eq.shape[0]
        ii, jj = np.nonzero(~np.eye(n, dtype=bool))
        res = triplet(eq[ii], er[ii], er[jj], cfg.loss.margin)
        geq = np.zeros_like(eq)
        ger = np.zeros_like(er)
        np.add.at(geq, ii, res.grad_queries)
        np.add.at(ger, ii, res.grad_refs)
        np.add.at(ger, jj, res.grad_negatives)
    gzq = _normalize_backward(eq, nq, geq)
    gzr = _normalize_backward(er, nr, ger)
    xq = np.asarray(xq, dtype=np.float64)
    xr = np.asarray(xr, dtype=np.float64)
    if model.shared:
        grads = [xq.T @ gzq + xr.T @ gzr, gzq.sum(0) + gzr.sum(0)]
    else:
        grads = [xq.T @ gzq, gzq.sum(0), xr.T @ gzr, gzr.sum(0)]
    return res.loss, grads, res.grad_tau


def select_pairs(pairs: Sequence[PairRecord], data_mode: str) -> list[PairRecord]:
    if data_mode == POSITIVE_ONLY:
        return [p for p in pairs if p.is_positive]
    return list(pairs)


def plan_epochs(graph: PairGraph, cfg: TrainConfig) -> list[list[Batch]]:
    return [
        sample_epoch(graph, cfg.batch_size, epoch_seed(cfg.seed, e), strict=cfg.strict_sampling)
        for e in range(cfg.epochs)
    ]


def train(
    cfg: TrainConfig,
    pairs: Sequence[PairRecord],
    query_features: Mapping[str, np.ndarray],
    tile_features: Mapping,
    model: EmbedModel | None = None,
) -> TrainResult:
    """Train an embedding model on sampled batches of paired features.

    Every epoch is sampled up front so the cosine schedule knows the total
    number of steps.

    Raises:
        InsufficientEdgesError: an epoch cannot fill one batch.
        NonFiniteError: a loss or gradient stops being finite.
    """
    graph = PairGraph.from_pairs(select_pairs(pairs, cfg.data_mode))
    epochs = plan_epochs(graph, cfg)
    if model is None:
        d_in = len(next(iter(query_features.values())))
        model = EmbedModel.init(d_in, cfg.d_emb, cfg.seed, cfg.shared_weights, cfg.loss.tau)
    else:
        model = model.copy()
    total = sum(len(e) for e in epochs)
    opt = _Adam(cfg.beta1, cfg.beta2, cfg.eps)
    tau_param = np.array([model.tau])
    step = 0
    epoch_loss, tau_trace = [], []
    for batches in epochs:
        acc = 0.0
        for batch in batches:
            xq = np.stack([query_features[q] for q, _, _ in batch.pairs])
            xr = np.stack([tile_features[r] for _, r, _ in batch.pairs])
            ious = np.array([v for _, _, v in batch.pairs])
            loss, grads, gtau = batch_loss(model, cfg, xq, xr, ious)
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads) or not math.isfinite(gtau):
                raise NonFiniteError(f"non-finite loss or gradient at step {step}")
            params = model.params()
            if cfg.learn_tau:
                params = params + [tau_param]
                grads = grads + [np.array([gtau])]
            opt.step(params, grads, cosine_lr(cfg.lr, step, total))
            tau_param[0] = max(tau_param[0], TAU_MIN)
            model.tau = float(tau_param[0])
            acc += loss
            step += 1
        epoch_loss.append(acc / len(batches))
        tau_trace.append(model.tau)
    return TrainResult(model, epoch_loss, [len(e) for e in epochs], tau_trace)
