"""Offline ranking evaluation: Precision@K, NDCG@K, and recency of hits.

The protocol holds out the tail of each test user's record stream, builds
labelled candidates from the held-out slice, ranks them with the trained
model, and averages rank metrics over users.  Random and popularity
rankers over the same candidates give the two reference points.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

from . import seeds
from .data import (
    KIND_NONINTERACTION,
    KIND_PRODUCE,
    POSITIVE_KINDS,
    Dataset,
    InteractionRecord,
)
from .graph import (
    USER,
    VIDEO,
    GraphConfig,
    GraphError,
    HeteroGraph,
    InsufficientHistoryError,
    NodeRef,
    build_global,
    build_local,
    split_sessions,
)
from .model import (
    FeatureMap,
    IsolatedVideoError,
    ModelConfig,
    ModelParams,
    sample_embed,
    score,
    user_embeddings,
)

BASELINES = ("random", "popularity")


class EvalError(ValueError):
    """Raised when the protocol cannot be applied to the given data."""


@dataclass(frozen=True)
class EvalConfig:
    holdout_fraction: float = 0.5
    candidates_per_user: int = 100
    ks: tuple[int, ...] = (5, 10)
    t0: int = 0
    seed: int = 7

    def validate(self) -> None:
        if not 0.0 < self.holdout_fraction < 1.0:
            raise EvalError("holdout_fraction must lie strictly between 0 and 1")
        if self.candidates_per_user < 1:
            raise EvalError("candidates_per_user must be at least 1")
        if not self.ks or any(k < 1 for k in self.ks):
            raise EvalError("ks must be a non-empty tuple of positive cutoffs")
        if self.seed < 0:
            raise EvalError("seed must be non-negative")


@dataclass(frozen=True)
class RankedList:
    """Candidates for one user in descending score order with binary labels.

    scores, when present, align with videos; None marks a candidate that
    could not be scored and was pushed to the bottom.
    """

    user_id: str
    videos: tuple[str, ...]
    labels: tuple[int, ...]
    scores: tuple[float | None, ...] | None = None

    def __post_init__(self) -> None:
        if len(self.videos) != len(self.labels):
            raise EvalError("videos and labels must have equal length")
        if self.scores is not None and len(self.scores) != len(self.videos):
            raise EvalError("scores must align with videos")
        if len(set(self.videos)) != len(self.videos):
            raise EvalError("ranked candidates must be distinct")
        if not self.videos:
            raise EvalError("a ranked list cannot be empty")


# ----------------------------------------------------------------- metrics


def precision_at_k(ranked: RankedList, k: int) -> float:
    """Fraction of hits in the top k, with the divisor capped at list length."""
    if k < 1:
        raise EvalError("k must be at least 1")
    m = min(k, len(ranked.labels))
    return sum(ranked.labels[:m]) / m


def ndcg_at_k(ranked: RankedList, k: int) -> float:
    """Binary-gain NDCG; 0.0 when nothing in the list is relevant."""
    if k < 1:
        raise EvalError("k must be at least 1")
    m = min(k, len(ranked.labels))
    dcg = sum(rel / math.log2(i + 2) for i, rel in enumerate(ranked.labels[:m]))
    ideal = sorted(ranked.labels, reverse=True)
    idcg = sum(rel / math.log2(i + 2) for i, rel in enumerate(ideal[:m]))
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


def video_timeliness(g: HeteroGraph, video_id: str, t0: int) -> float:
    """Mean offset from t0 of each connected user's latest edge timestamp."""
    node = NodeRef(VIDEO, video_id)
    latest: dict[str, int] = {}
    for dst, _, ts in g.neighbors(node):
        if dst.node_type != USER or ts is None:
            continue
        prev = latest.get(dst.node_id)
        if prev is None or ts > prev:
            latest[dst.node_id] = ts
    if not latest:
        raise EvalError(f"video {video_id!r} has no timestamped user edges")
    return sum(ts - t0 for ts in latest.values()) / len(latest)


def c_timeliness_at_k(
    ranked_lists: list[RankedList], g: HeteroGraph, k: int, t0: int
) -> float | None:
    """Mean timeliness over the union of correctly recommended videos.

    Returns None when no list has a hit in its top k, since the average
    would be over an empty set.
    """
    if k < 1:
        raise EvalError("k must be at least 1")
    correct: set[str] = set()
    for ranked in ranked_lists:
        m = min(k, len(ranked.videos))
        for vid, rel in zip(ranked.videos[:m], ranked.labels[:m]):
            if rel:
                correct.add(vid)
    if not correct:
        return None
    return sum(video_timeliness(g, v, t0) for v in sorted(correct)) / len(correct)


# ---------------------------------------------------------------- protocol


def split_records(
    dataset: Dataset, user_id: str, holdout_fraction: float
) -> tuple[list[InteractionRecord], list[InteractionRecord]]:
    """Chronologically split one user's records into kept and held-out parts."""
    records = dataset.records.get(user_id, [])
    if len(records) < 2:
        raise EvalError(f"user {user_id!r} has too few records to split")
    cut = math.floor(len(records) * (1.0 - holdout_fraction))
    if cut < 1 or cut >= len(records):
        raise EvalError(
            f"holdout_fraction={holdout_fraction} leaves an empty side "
            f"for user {user_id!r}"
        )
    return list(records[:cut]), list(records[cut:])


def visible_dataset(
    dataset: Dataset, user_id: str, kept: list[InteractionRecord]
) -> Dataset:
    """Dataset with the target user's held-out records hidden.

    Everyone else keeps their full history: other users may appear as
    sampled neighbours at full strength, only the scored user's own
    future is withheld.
    """
    keep = set(kept)
    rows = [
        r for r in dataset.interactions if r.user_id != user_id or r in keep
    ]
    return Dataset(rows, dataset.attributes)


def build_candidates(
    kept: list[InteractionRecord],
    held: list[InteractionRecord],
    n: int,
    rng,
) -> list[tuple[str, int]]:
    """Labelled candidates from the held-out slice.

    A video held out with any positive interaction is labelled 1, one seen
    only as non-interaction is labelled 0.  Videos the user had already
    interacted with positively before the split are not latent and are
    dropped.  At most n candidates survive, sampled without replacement.
    """
    already = {r.video_id for r in kept if r.kind in POSITIVE_KINDS}
    labels: dict[str, int] = {}
    for r in held:
        if r.kind == KIND_PRODUCE or r.video_id in already:
            continue
        if r.kind in POSITIVE_KINDS:
            labels[r.video_id] = 1
        elif r.kind == KIND_NONINTERACTION:
            labels.setdefault(r.video_id, 0)
    pool = sorted(labels)
    if not pool:
        raise EvalError("no held-out candidates survive filtering")
    if len(pool) > n:
        picked = rng.choice(len(pool), size=n, replace=False)
        pool = [pool[i] for i in sorted(picked)]
    return [(v, labels[v]) for v in pool]


def rank_for_user(
    visible: Dataset,
    user_id: str,
    candidates: list[tuple[str, int]],
    params: ModelParams,
    feats: FeatureMap,
    gcfg: GraphConfig,
    mcfg: ModelConfig,
    visible_graph: HeteroGraph | None = None,
) -> RankedList:
    """Score candidates for one user and sort them into a RankedList.

    Candidates whose embedding cannot be formed (no neighbours besides the
    scored user) sort below every scored candidate.  Ties break on video
    id ascending so equal scores rank deterministically.
    """
    g = visible_graph if visible_graph is not None else build_global(visible)
    local = build_local(g, visible, user_id, gcfg)
    sessions = split_sessions(local, gcfg)
    cache: dict[NodeRef, object] = {}
    profile = user_embeddings(sessions, params, mcfg, feats, cache)
    scored: list[tuple[float, int, str, int]] = []
    for vid, label in candidates:
        try:
            emb = sample_embed(g, vid, user_id, params, feats, cache)
        except (IsolatedVideoError, GraphError):
            scored.append((0.0, 1, vid, label))
            continue
        s = float(score(profile, emb).values[0, 0])
        scored.append((s, 0, vid, label))
    scored.sort(key=lambda t: (t[1], -t[0], t[2]))
    return RankedList(
        user_id=user_id,
        videos=tuple(t[2] for t in scored),
        labels=tuple(t[3] for t in scored),
        scores=tuple(None if t[1] else t[0] for t in scored),
    )


def baseline_rank(
    user_id: str,
    candidates: list[tuple[str, int]],
    strategy: str,
    positive_count=None,
    rng=None,
) -> RankedList:
    """Reference rankers over the same candidates: seeded shuffle or
    global positive-interaction popularity (ties by video id)."""
    if strategy == "random":
        if rng is None:
            raise EvalError("random baseline needs an rng")
        order = list(rng.permutation(len(candidates)))
        picked = [candidates[i] for i in order]
    elif strategy == "popularity":
        if positive_count is None:
            raise EvalError("popularity baseline needs positive counts")
        picked = sorted(candidates, key=lambda c: (-positive_count[c[0]], c[0]))
    else:
        raise EvalError(f"unknown baseline strategy {strategy!r}")
    return RankedList(
        user_id=user_id,
        videos=tuple(c[0] for c in picked),
        labels=tuple(c[1] for c in picked),
    )


# ------------------------------------------------------------------ report


@dataclass
class EvalReport:
    metrics: dict[str, dict[str, float | None]]
    users_evaluated: int
    users_skipped: int
    candidate_counts: dict[str, float]
    ks: tuple[int, ...]
    t0: int
    seed: int
    holdout_fraction: float
    skipped_users: list[str] = field(default_factory=list)
    config: dict | None = None

    def to_json(self) -> str:
        payload = {
            "metrics": self.metrics,
            "users_evaluated": self.users_evaluated,
            "users_skipped": self.users_skipped,
            "skipped_users": self.skipped_users,
            "candidate_counts": self.candidate_counts,
            "ks": list(self.ks),
            "t0": self.t0,
            "seed": self.seed,
            "holdout_fraction": self.holdout_fraction,
        }
        if self.config is not None:
            payload["config"] = self.config
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_eval_report(report: EvalReport, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_json())


def write_metrics_csv(report: EvalReport, path: str) -> None:
    """Flat strategy/metric/k/value table for side-by-side comparison."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["strategy", "metric", "k", "value"])
        for strategy in sorted(report.metrics):
            table = report.metrics[strategy]
            for key in sorted(table):
                metric, _, k = key.rpartition("@")
                value = table[key]
                writer.writerow(
                    [strategy, metric, k, "" if value is None else repr(value)]
                )


def evaluate(
    dataset: Dataset,
    test_users: list[str],
    params: ModelParams,
    feats: FeatureMap,
    gcfg: GraphConfig,
    mcfg: ModelConfig,
    ecfg: EvalConfig,
    threads: int = 1,
) -> EvalReport:
    """Run the holdout protocol over test_users and average the metrics.

    Users whose kept half cannot support a session graph, or whose
    held-out half yields no candidates, are skipped and counted.  The
    recency metric uses the full dataset's graph: the timestamps a hit is
    judged by include the very interactions that were hidden from the
    model while scoring.  Per-user work is independent, so with
    threads > 1 users are scored concurrently; results are reduced in
    roster order either way and the report does not depend on the thread
    count.
    """
    ecfg.validate()
    if threads < 1:
        raise EvalError("threads must be at least 1")
    full_graph = build_global(dataset)
    roster = sorted(test_users)

    def one_user(job: tuple[int, str]):
        idx, user_id = job
        try:
            kept, held = split_records(dataset, user_id, ecfg.holdout_fraction)
            rng_c = seeds.substream(ecfg.seed, "candidates", idx)
            cands = build_candidates(kept, held, ecfg.candidates_per_user, rng_c)
            visible = visible_dataset(dataset, user_id, kept)
            rl = rank_for_user(visible, user_id, cands, params, feats, gcfg, mcfg)
        except (EvalError, InsufficientHistoryError):
            return None
        rng_b = seeds.substream(ecfg.seed, "baseline", idx)
        return (
            rl,
            baseline_rank(user_id, cands, "random", rng=rng_b),
            baseline_rank(
                user_id, cands, "popularity", positive_count=dataset.positive_count
            ),
            len(cands),
        )

    jobs = list(enumerate(roster))
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one_user, jobs))
    else:
        results = [one_user(j) for j in jobs]

    ranked: dict[str, list[RankedList]] = {s: [] for s in ("model",) + BASELINES}
    counts: list[int] = []
    skipped: list[str] = []
    for (idx, user_id), res in zip(jobs, results):
        if res is None:
            skipped.append(user_id)
            continue
        rl, rl_random, rl_pop, n_cands = res
        ranked["model"].append(rl)
        ranked["random"].append(rl_random)
        ranked["popularity"].append(rl_pop)
        counts.append(n_cands)
    if not ranked["model"]:
        raise EvalError("no test user survived the holdout protocol")
    metrics: dict[str, dict[str, float | None]] = {}
    for strategy, lists in ranked.items():
        table: dict[str, float | None] = {}
        for k in ecfg.ks:
            table[f"precision@{k}"] = sum(
                precision_at_k(r, k) for r in lists
            ) / len(lists)
            table[f"ndcg@{k}"] = sum(ndcg_at_k(r, k) for r in lists) / len(lists)
            table[f"c_timeliness@{k}"] = c_timeliness_at_k(
                lists, full_graph, k, ecfg.t0
            )
        metrics[strategy] = table
    return EvalReport(
        metrics=metrics,
        users_evaluated=len(ranked["model"]),
        users_skipped=len(skipped),
        candidate_counts={
            "min": float(min(counts)),
            "max": float(max(counts)),
            "mean": sum(counts) / len(counts),
        },
        ks=ecfg.ks,
        t0=ecfg.t0,
        seed=ecfg.seed,
        holdout_fraction=ecfg.holdout_fraction,
        skipped_users=skipped,
    )
