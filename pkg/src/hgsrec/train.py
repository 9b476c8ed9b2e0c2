"""Parameter initialisation, the ranking objective, Adam, the training loop.

Training walks users in seeded shuffled batches. For each user the profile
embeddings come from their precomputed sessions; one of their positive
videos and a handful of sampled negatives become score pairs, and the
batch minimises the mean pairwise ranking loss plus a smoothness penalty
tying consecutive relation matrices together and a plain L2 term. Every
random draw comes from a named substream of the root seed, so a rerun with
the same seed reproduces checkpoints and reports bit for bit.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import Dataset
from .graph import (
    GraphConfig,
    HeteroGraph,
    InsufficientHistoryError,
    RELATIONS,
    SessionSubgraph,
    build_global,
    build_local,
    split_sessions,
)
from .model import (
    FeatureMap,
    ModelConfig,
    ModelParams,
    param_shapes,
    sample_embed,
    save_checkpoint,
    score,
    user_embeddings,
)
from .seeds import substream


class TrainError(RuntimeError):
    """Training could not run or complete as configured."""


class TrainingDivergedError(TrainError):
    """A non-finite value appeared; the offending tensor is named."""


@dataclass
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 64
    relation_reg: float = 0.0
    l2_reg: float = 0.0
    epochs: int = 5
    negatives_per_positive: int = 1
    seed: int = 7

    def validate(self) -> None:
        if self.lr < 0:
            raise TrainError(f"lr must be non-negative, got {self.lr}")
        if self.batch_size < 1:
            raise TrainError(f"batch_size must be positive, got {self.batch_size}")
        if self.relation_reg < 0 or self.l2_reg < 0:
            raise TrainError("regularisation coefficients must be non-negative")
        if self.epochs < 1:
            raise TrainError(f"epochs must be positive, got {self.epochs}")
        if self.negatives_per_positive < 1:
            raise TrainError("negatives_per_positive must be positive")
        if self.seed < 0:
            raise TrainError(f"seed must be non-negative, got {self.seed}")


@dataclass
class TrainReport:
    epochs: list[dict] = field(default_factory=list)
    users_trained: int = 0
    users_skipped: int = 0
    parameter_count: int = 0
    config: dict | None = None
    wall_seconds: float = 0.0  # kept out of the serialised report

    def to_jsonl(self) -> str:
        import json

        header = {
            "users_trained": self.users_trained,
            "users_skipped": self.users_skipped,
            "parameter_count": self.parameter_count,
        }
        if self.config is not None:
            header["config"] = self.config
        lines = [json.dumps(header, sort_keys=True)]
        lines += [json.dumps(e, sort_keys=True) for e in self.epochs]
        return "\n".join(lines) + "\n"


def write_train_report(report: TrainReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.to_jsonl())


# ------------------------------------------------------------ initialisation


def xavier_matrix(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def init_params(feats: FeatureMap, cfg: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """Fresh registry with uniform Xavier draws, in registration order."""
    tensors = {
        name: Tensor(xavier_matrix(rng, r, c), requires_grad=True)
        for name, (r, c) in param_shapes(feats, cfg).items()
    }
    return ModelParams(cfg, tensors)


# -------------------------------------------------------------------- losses


def pairwise_ranking_loss(pos: Tensor, neg: Tensor) -> Tensor:
    """Negative log-sigmoid of the score gap, in the stable softplus form."""
    return ad.softplus(ad.sub(neg, pos))


def smoothness_penalty(params: ModelParams) -> Tensor:
    """Squared drift between consecutive per-hop relation matrices."""
    cfg = params.cfg
    total: Tensor | None = None
    if not cfg.no_relation:
        for rel in RELATIONS:
            for hop in range(1, cfg.num_layers):
                diff = ad.sub(
                    params.relation_weight(rel, hop + 1),
                    params.relation_weight(rel, hop),
                )
                term = ad.sum_all(ad.mul(diff, diff))
                total = term if total is None else ad.add(total, term)
    return total if total is not None else Tensor([[0.0]])


def l2_penalty(params: ModelParams) -> Tensor:
    total: Tensor | None = None
    for _, t in params.items():
        term = ad.sum_all(ad.mul(t, t))
        total = term if total is None else ad.add(total, term)
    return total if total is not None else Tensor([[0.0]])


def batch_objective(
    pair_losses: list[Tensor], params: ModelParams, cfg: TrainConfig
) -> tuple[Tensor, dict[str, float]]:
    """Mean ranking loss plus weighted penalties, with per-part readouts."""
    if not pair_losses:
        raise TrainError("a batch needs at least one score pair")
    ranking = pair_losses[0]
    for p in pair_losses[1:]:
        ranking = ad.add(ranking, p)
    ranking = ad.scale(ranking, 1.0 / len(pair_losses))
    smooth = (
        ad.scale(smoothness_penalty(params), cfg.relation_reg)
        if cfg.relation_reg > 0
        else Tensor([[0.0]])
    )
    decay = (
        ad.scale(l2_penalty(params), cfg.l2_reg) if cfg.l2_reg > 0 else Tensor([[0.0]])
    )
    total = ad.add(ad.add(ranking, smooth), decay)
    parts = {
        "ranking_loss": ad.scalar(ranking),
        "smoothness_penalty": ad.scalar(smooth),
        "l2_penalty": ad.scalar(decay),
    }
    return total, parts


# ---------------------------------------------------------- negative sampling


def sample_negatives(
    dataset: Dataset, user_id: str, k: int, rng: np.random.Generator
) -> list[str]:
    """Uniform draw without replacement from the user's negative pool.

    The pool is the user's explicit noninteraction videos when any exist,
    otherwise every video the user has no record with at all.
    """
    pool = dataset.explicit_negatives.get(user_id)
    if not pool:
        seen = dataset.seen_videos.get(user_id, set())
        pool = [v for v in dataset.videos if v not in seen]
    if k > len(pool):
        raise TrainError(
            f"user {user_id!r} has only {len(pool)} candidate negatives, need {k}"
        )
    picks = rng.choice(len(pool), size=k, replace=False)
    return [pool[i] for i in picks]


# ----------------------------------------------------------------- optimiser


class Adam:
    """Standard Adam with bias correction, updating tensors in place."""

    def __init__(self, params: ModelParams, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self._m = {name: np.zeros(t.shape) for name, t in params.items()}
        self._v = {name: np.zeros(t.shape) for name, t in params.items()}

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        for name, tensor in self.params.items():
            g = tensor.grad
            if g is None:
                continue
            m = self._m[name] = self.beta1 * self._m[name] + (1 - self.beta1) * g
            v = self._v[name] = self.beta2 * self._v[name] + (1 - self.beta2) * (g * g)
            m_hat = m / (1 - self.beta1**t)
            v_hat = v / (1 - self.beta2**t)
            tensor.values = tensor.values - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for _, tensor in self.params.items():
            tensor.grad = None


# -------------------------------------------------------------- training loop


@dataclass
class UserPlan:
    sessions: list[SessionSubgraph]
    positives: list[str]  # chronological distinct positive videos


def build_plans(
    dataset: Dataset,
    g: HeteroGraph,
    users: list[str],
    gcfg: GraphConfig,
) -> tuple[dict[str, UserPlan], int]:
    """Sessions for every trainable user; returns plans and the skip count."""
    plans: dict[str, UserPlan] = {}
    skipped = 0
    for u in users:
        try:
            local = build_local(g, dataset, u, gcfg)
            sessions = split_sessions(local, gcfg)
        except InsufficientHistoryError:
            skipped += 1
            continue
        plans[u] = UserPlan(
            sessions=sessions,
            positives=[e.video_id for e in dataset.history[u]],
        )
    return plans, skipped


def _first_bad_tensor(params: ModelParams) -> str | None:
    for name, t in params.items():
        if not np.isfinite(t.values).all():
            return name
    return None


def train(
    dataset: Dataset,
    users: list[str],
    gcfg: GraphConfig,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    checkpoint_paths: tuple[str, str] | None = None,
) -> tuple[ModelParams, FeatureMap, TrainReport]:
    """Run the full loop; optionally overwrite a checkpoint after each epoch."""
    gcfg.validate()
    mcfg.validate()
    tcfg.validate()
    started = time.monotonic()

    feats = FeatureMap.from_dataset(dataset)
    g = build_global(dataset)
    plans, skipped = build_plans(dataset, g, users, gcfg)
    if not plans:
        raise TrainError("no user has enough history to train on")
    roster = sorted(plans)

    params = init_params(feats, mcfg, substream(tcfg.seed, "init"))
    optim = Adam(params, tcfg.lr)
    rng_pos = substream(tcfg.seed, "positives")
    rng_neg = substream(tcfg.seed, "negatives")

    report = TrainReport(
        users_trained=len(roster),
        users_skipped=skipped,
        parameter_count=sum(t.values.size for _, t in params.items()),
    )

    for epoch in range(1, tcfg.epochs + 1):
        order = [roster[i] for i in substream(tcfg.seed, "shuffle", epoch).permutation(len(roster))]
        sums = {"loss": 0.0, "ranking_loss": 0.0, "smoothness_penalty": 0.0, "l2_penalty": 0.0}
        batches = 0
        pair_count = 0
        for start in range(0, len(order), tcfg.batch_size):
            batch = order[start : start + tcfg.batch_size]
            cache: dict = {}
            with ad.Tape():
                pair_losses: list[Tensor] = []
                for u in batch:
                    plan = plans[u]
                    profile = user_embeddings(plan.sessions, params, mcfg, feats, cache)
                    pos_video = plan.positives[int(rng_pos.integers(len(plan.positives)))]
                    pos_score = score(
                        profile, sample_embed(g, pos_video, u, params, feats, cache)
                    )
                    for neg_video in sample_negatives(
                        dataset, u, tcfg.negatives_per_positive, rng_neg
                    ):
                        neg_score = score(
                            profile, sample_embed(g, neg_video, u, params, feats, cache)
                        )
                        pair_losses.append(pairwise_ranking_loss(pos_score, neg_score))
                loss, parts = batch_objective(pair_losses, params, tcfg)
            value = ad.scalar(loss)
            if not np.isfinite(value):
                culprit = _first_bad_tensor(params) or "the batch loss"
                raise TrainingDivergedError(
                    f"non-finite loss in epoch {epoch}: first bad tensor is {culprit}"
                )
            ad.backward(loss)
            optim.step()
            optim.zero_grad()
            sums["loss"] += value
            for key, part in parts.items():
                sums[key] += part
            batches += 1
            pair_count += len(pair_losses)
        record = {
            "epoch": epoch,
            "batches": batches,
            "pairs": pair_count,
            "loss": sums["loss"] / batches,
            "ranking_loss": sums["ranking_loss"] / batches,
            "smoothness_penalty": sums["smoothness_penalty"] / batches,
            "l2_penalty": sums["l2_penalty"] / batches,
        }
        report.epochs.append(record)
        if checkpoint_paths is not None:
            save_checkpoint(
                params,
                checkpoint_paths[0],
                checkpoint_paths[1],
                extra={"epoch": epoch, "seed": tcfg.seed},
            )

    report.wall_seconds = time.monotonic() - started
    return params, feats, report
