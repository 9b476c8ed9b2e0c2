"""Embeddings, message passing, session fusion, sampling and scoring.

Every node starts from a primitive embedding: a bias-free two-layer
feed-forward map applied to the node's one-hot feature (ids outside the
training vocabulary fall back to a signed hash). Two aggregators then pull
a session subgraph into its root, hop by hop from the deepest layer
inward:

* the relational pass multiplies each neighbor through a matrix chosen by
  the edge's relation,
* the attention pass weighs neighbors by a learned compatibility score
  and adds them unchanged.

A node being updated always applies its own per-hop self transform; the
root re-applies its self transform on every hop, so after ``depth`` hops
it has absorbed the whole subgraph. The two root vectors are concatenated
into the session embedding of width ``2 * embed_dim``. Re-rooting the
session at one of its videos and re-running the same passes produces that
video's embedding.

Historical sessions are summarised by an LSTM over their video embeddings
(mean of the hidden states), and a similarity-weighted average over those
summaries turns the latest session's vectors into the user profile.
Candidate videos are embedded without any graph walk, by averaging the
primitive embeddings of their direct neighbors per type. Scores are plain
inner products.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import Dataset
from .graph import (
    GraphError,
    HeteroGraph,
    LayeredGraph,
    NodeRef,
    RELATIONS,
    SessionSubgraph,
    USER,
    VIDEO,
)

LSTM_GATES = ("input", "forget", "output", "cell")


class ModelError(ValueError):
    """A model request the inputs cannot satisfy."""


class ParamError(KeyError):
    """Lookup of a parameter the registry does not hold."""


class IsolatedVideoError(ModelError):
    """A candidate video with no usable neighbors cannot be embedded."""


class ConfigError(ValueError):
    """An invalid model configuration value."""


@dataclass
class ModelConfig:
    embed_dim: int = 16
    num_layers: int = 2
    leaky_slope: float = 0.01
    sim_eps: float = 1e-8
    no_historical: bool = False
    no_relation: bool = False
    no_attention: bool = False
    single_attention: bool = False
    mean_instead_of_lstm: bool = False

    def validate(self) -> None:
        if self.embed_dim < 1:
            raise ConfigError(f"embed_dim must be positive, got {self.embed_dim}")
        if self.num_layers < 1:
            raise ConfigError(f"num_layers must be positive, got {self.num_layers}")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ConfigError(f"leaky_slope must be in (0, 1), got {self.leaky_slope}")
        if self.sim_eps <= 0.0:
            raise ConfigError(f"sim_eps must be positive, got {self.sim_eps}")

    @property
    def fused_dim(self) -> int:
        return 2 * self.embed_dim


VARIANTS = (
    "full",
    "no_historical",
    "no_relation",
    "no_attention",
    "single_attention",
    "mean_instead_of_lstm",
)


def variant_config(base: ModelConfig, name: str) -> ModelConfig:
    """A copy of ``base`` with exactly one ablation switch set."""
    if name not in VARIANTS:
        raise ConfigError(f"unknown variant {name!r}, expected one of {', '.join(VARIANTS)}")
    cfg = ModelConfig(**{**base.__dict__})
    for flag in VARIANTS[1:]:
        setattr(cfg, flag, False)
    if name != "full":
        setattr(cfg, name, True)
    return cfg


class FeatureMap:
    """Per-type vocabularies mapping node ids to one-hot feature rows.

    Ids seen at build time get their own row; anything else lands on a
    deterministic signed hash bucket so unseen nodes still embed.
    """

    def __init__(self, vocab: dict[str, list[str]]) -> None:
        if not vocab:
            raise ModelError("a feature map needs at least one node type")
        self.vocab = {t: list(ids) for t, ids in sorted(vocab.items())}
        self._index = {
            t: {vid: i for i, vid in enumerate(ids)} for t, ids in self.vocab.items()
        }
        for t, ids in self.vocab.items():
            if not ids:
                raise ModelError(f"node type {t!r} has an empty vocabulary")

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "FeatureMap":
        vocab: dict[str, list[str]] = {USER: dataset.users, VIDEO: dataset.videos}
        per_type: dict[str, set[str]] = {}
        for a in dataset.attributes:
            per_type.setdefault(a.attr_type, set()).add(a.attr_id)
        for t, ids in per_type.items():
            vocab[t] = sorted(ids)
        return cls(vocab)

    @property
    def types(self) -> list[str]:
        return list(self.vocab)

    def width(self, node_type: str) -> int:
        if node_type not in self.vocab:
            raise ModelError(f"no vocabulary for node type {node_type!r}")
        return len(self.vocab[node_type])

    def feature(self, node: NodeRef) -> tuple[int, float]:
        """Feature row index and sign for a node; hashed when unknown."""
        idx = self._index.get(node.node_type)
        if idx is None:
            raise ModelError(f"no vocabulary for node type {node.node_type!r}")
        hit = idx.get(node.node_id)
        if hit is not None:
            return hit, 1.0
        digest = hashlib.blake2b(
            f"{node.node_type}\x1f{node.node_id}".encode(), digest_size=8
        ).digest()
        h = int.from_bytes(digest, "little")
        width = len(idx)
        return (h >> 1) % width, 1.0 if h & 1 else -1.0


# ----------------------------------------------------------------- parameters


class ModelParams:
    """Named tensors in a fixed registration order."""

    def __init__(self, cfg: ModelConfig, tensors: dict[str, Tensor]) -> None:
        self.cfg = cfg
        self._tensors = dict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._tensors[name]
        except KeyError:
            raise ParamError(f"no parameter named {name!r} in this registry") from None

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def self_weight(self, pass_name: str, hop: int) -> Tensor:
        return self[f"{pass_name}.self.{hop}"]

    def relation_weight(self, relation: str, hop: int) -> Tensor:
        return self[f"rhmp.rel.{relation}.{hop}"]

    def attention_vector(self, hop: int) -> Tensor:
        if self.cfg.single_attention:
            return self["ahmp.attn.shared"]
        return self[f"ahmp.attn.{hop}"]


def param_shapes(feats: FeatureMap, cfg: ModelConfig) -> dict[str, tuple[int, int]]:
    """The full registry layout for one configuration, in canonical order."""
    cfg.validate()
    d, w2 = cfg.embed_dim, cfg.fused_dim
    shapes: dict[str, tuple[int, int]] = {}
    for t in feats.types:
        shapes[f"ffn.{t}.hidden"] = (feats.width(t), d)
        shapes[f"ffn.{t}.out"] = (d, d)
    if not cfg.no_relation:
        for hop in range(1, cfg.num_layers + 1):
            shapes[f"rhmp.self.{hop}"] = (d, d)
        for rel in RELATIONS:
            for hop in range(1, cfg.num_layers + 1):
                shapes[f"rhmp.rel.{rel}.{hop}"] = (d, d)
    if not cfg.no_attention:
        for hop in range(1, cfg.num_layers + 1):
            shapes[f"ahmp.self.{hop}"] = (d, d)
        if cfg.single_attention:
            shapes["ahmp.attn.shared"] = (1, w2)
        else:
            for hop in range(1, cfg.num_layers + 1):
                shapes[f"ahmp.attn.{hop}"] = (1, w2)
    if not (cfg.no_historical or cfg.mean_instead_of_lstm):
        for gate in LSTM_GATES:
            shapes[f"lstm.{gate}.input"] = (w2, w2)
            shapes[f"lstm.{gate}.hidden"] = (w2, w2)
            shapes[f"lstm.{gate}.bias"] = (1, w2)
    shapes["session.wprime"] = (w2, w2)
    return shapes


# ---------------------------------------------------------------- embeddings


def init_embedding(node_type: str, raw: Tensor, params: ModelParams) -> Tensor:
    """Push a raw feature row through the type's feed-forward map."""
    hidden = params[f"ffn.{node_type}.hidden"]
    if raw.cols != hidden.rows:
        raise ModelError(
            f"raw feature width {raw.cols} does not match the "
            f"{node_type!r} vocabulary size {hidden.rows}"
        )
    return ad.matmul(ad.relu(ad.matmul(raw, hidden)), params[f"ffn.{node_type}.out"])


def embed_node(
    node: NodeRef,
    params: ModelParams,
    feats: FeatureMap,
    cache: dict[NodeRef, Tensor] | None = None,
) -> Tensor:
    """Primitive embedding of one node, via the one-hot shortcut."""
    if cache is not None:
        hit = cache.get(node)
        if hit is not None:
            return hit
    index, sign = feats.feature(node)
    picked = ad.row(params[f"ffn.{node.node_type}.hidden"], index, sign)
    out = ad.matmul(ad.relu(picked), params[f"ffn.{node.node_type}.out"])
    if cache is not None:
        cache[node] = out
    return out


def _primitive_embeddings(
    sub: LayeredGraph,
    params: ModelParams,
    feats: FeatureMap,
    cache: dict[NodeRef, Tensor] | None,
) -> dict[NodeRef, Tensor]:
    return {n: embed_node(n, params, feats, cache) for n in sub.nodes()}


# ---------------------------------------------------------------- aggregators


def rhmp(
    sub: LayeredGraph,
    params: ModelParams,
    cfg: ModelConfig,
    feats: FeatureMap,
    cache: dict[NodeRef, Tensor] | None = None,
) -> Tensor:
    """Relation-transformed inward pass; returns the root vector (1 x d).

    Hop ``t`` rewrites every node one level above the current deepest
    unconsumed layer: its own vector through the hop's self matrix, plus
    each child's vector through the matrix of the connecting relation.
    Children of the same relation are summed before the multiply, which is
    the same linear map applied once.
    """
    emb = _primitive_embeddings(sub, params, feats, cache)
    depth = sub.depth
    for hop in range(1, depth + 1):
        boundary = depth - hop + 1
        w_self = params.self_weight("rhmp", hop)
        updates: dict[NodeRef, Tensor] = {}
        for node in sub.layers[boundary - 1]:
            acc = ad.matmul(emb[node], w_self)
            grouped: dict[str, Tensor] = {}
            for child, rel, _ in sub.children.get(node, ()):
                vec = emb[child]
                grouped[rel] = vec if rel not in grouped else ad.add(grouped[rel], vec)
            for rel, total in grouped.items():
                acc = ad.add(acc, ad.matmul(total, params.relation_weight(rel, hop)))
            updates[node] = acc
        if boundary - 1 != 0:  # root keeps absorbing on every hop
            updates[sub.root] = ad.matmul(emb[sub.root], w_self)
        emb.update(updates)
    return emb[sub.root]


def ahmp(
    sub: LayeredGraph,
    params: ModelParams,
    cfg: ModelConfig,
    feats: FeatureMap,
    cache: dict[NodeRef, Tensor] | None = None,
) -> Tensor:
    """Attention-weighted inward pass; returns the root vector (1 x d).

    Mirrors the relational pass but neighbors arrive untransformed,
    weighted by a softmax over leaky-relu compatibility scores between the
    updating node and each child.
    """
    emb = _primitive_embeddings(sub, params, feats, cache)
    depth = sub.depth
    for hop in range(1, depth + 1):
        boundary = depth - hop + 1
        w_self = params.self_weight("ahmp", hop)
        attn = params.attention_vector(hop)
        updates: dict[NodeRef, Tensor] = {}
        for node in sub.layers[boundary - 1]:
            acc = ad.matmul(emb[node], w_self)
            children = sub.children.get(node, ())
            if children:
                logits = [
                    ad.leaky_relu(
                        ad.dot(ad.concat(emb[node], emb[child]), attn), cfg.leaky_slope
                    )
                    for child, _, _ in children
                ]
                weights = ad.softmax(ad.stack_scalars(logits))
                for j, (child, _, _) in enumerate(children):
                    acc = ad.add(acc, ad.scale_by(emb[child], ad.element(weights, j)))
            updates[node] = acc
        if boundary - 1 != 0:
            updates[sub.root] = ad.matmul(emb[sub.root], w_self)
        emb.update(updates)
    return emb[sub.root]


def fuse(x: Tensor | None, y: Tensor | None, cfg: ModelConfig) -> Tensor:
    """Concatenate the two aggregator outputs; a disabled side contributes zeros."""
    d = cfg.embed_dim
    if cfg.no_relation or x is None:
        x = Tensor(np.zeros((1, d)))
    if cfg.no_attention or y is None:
        y = Tensor(np.zeros((1, d)))
    if x.shape != (1, d) or y.shape != (1, d):
        raise ModelError(
            f"fuse expects two 1x{d} vectors, got {x.shape} and {y.shape}"
        )
    return ad.concat(x, y)


def encode_center(
    sub: LayeredGraph,
    params: ModelParams,
    cfg: ModelConfig,
    feats: FeatureMap,
    cache: dict[NodeRef, Tensor] | None = None,
) -> Tensor:
    """Both passes over one subgraph, fused to width 2 * embed_dim."""
    x = None if cfg.no_relation else rhmp(sub, params, cfg, feats, cache)
    y = None if cfg.no_attention else ahmp(sub, params, cfg, feats, cache)
    return fuse(x, y, cfg)


# ------------------------------------------------------------------- sessions


@dataclass
class SessionEmbeddings:
    """User-rooted and video-rooted vectors of one session, width 2d each."""

    user: Tensor
    videos: list[Tensor] = field(default_factory=list)


def session_embeddings(
    sub: SessionSubgraph,
    params: ModelParams,
    cfg: ModelConfig,
    feats: FeatureMap,
    cache: dict[NodeRef, Tensor] | None = None,
) -> SessionEmbeddings:
    """Encode a session from the user root and from every video root."""
    user_vec = encode_center(sub, params, cfg, feats, cache)
    video_vecs = [
        encode_center(sub.rerooted(vid), params, cfg, feats, cache)
        for vid in sub.contained_videos
    ]
    return SessionEmbeddings(user=user_vec, videos=video_vecs)


def aggregate_session(
    video_vecs: list[Tensor], params: ModelParams, cfg: ModelConfig
) -> Tensor:
    """Collapse one session's video vectors to a single 2d summary."""
    if not video_vecs:
        raise ModelError("cannot aggregate an empty session")
    if cfg.mean_instead_of_lstm:
        total = video_vecs[0]
        for vec in video_vecs[1:]:
            total = ad.add(total, vec)
        return ad.scale(total, 1.0 / len(video_vecs))

    width = cfg.fused_dim
    hidden = Tensor(np.zeros((1, width)))
    cell = Tensor(np.zeros((1, width)))
    outputs: list[Tensor] = []
    for x in video_vecs:
        gates = {}
        for gate in LSTM_GATES:
            pre = ad.add(
                ad.add(
                    ad.matmul(x, params[f"lstm.{gate}.input"]),
                    ad.matmul(hidden, params[f"lstm.{gate}.hidden"]),
                ),
                params[f"lstm.{gate}.bias"],
            )
            gates[gate] = ad.tanh(pre) if gate == "cell" else ad.sigmoid(pre)
        cell = ad.add(
            ad.mul(gates["forget"], cell), ad.mul(gates["input"], gates["cell"])
        )
        hidden = ad.mul(gates["output"], ad.tanh(cell))
        outputs.append(hidden)
    total = outputs[0]
    for h in outputs[1:]:
        total = ad.add(total, h)
    return ad.scale(total, 1.0 / len(outputs))


@dataclass
class UserEmbeddings:
    """Final profile: one user vector plus the latest session's video vectors."""

    user: Tensor
    videos: list[Tensor] = field(default_factory=list)


def session_attention(
    latest: SessionEmbeddings,
    history: list[tuple[Tensor, Tensor]],
    params: ModelParams,
    cfg: ModelConfig,
) -> UserEmbeddings:
    """Similarity-weighted average of projected history summaries.

    ``history`` holds ``(user_vector, session_summary)`` pairs, oldest
    first. The latest session's user vector queries the historical user
    vectors; each latest video queries the historical summaries. With no
    history the latest vectors pass through the shared projection alone.
    """
    w_prime = params["session.wprime"]
    if cfg.no_historical or not history:
        return UserEmbeddings(
            user=ad.matmul(latest.user, w_prime),
            videos=[ad.matmul(v, w_prime) for v in latest.videos],
        )

    user_keys = [u for u, _ in history]
    summary_keys = [s for _, s in history]
    user_values = [ad.matmul(u, w_prime) for u in user_keys]
    summary_values = [ad.matmul(s, w_prime) for s in summary_keys]

    def mix(query: Tensor, keys: list[Tensor], values: list[Tensor]) -> Tensor:
        sims = [ad.dot(query, k) for k in keys]
        total = sims[0]
        for s in sims[1:]:
            total = ad.add(total, s)
        weighted = ad.scale_by(values[0], sims[0])
        for v, s in zip(values[1:], sims[1:]):
            weighted = ad.add(weighted, ad.scale_by(v, s))
        return ad.div(weighted, ad.sign_guard(total, cfg.sim_eps))

    return UserEmbeddings(
        user=mix(latest.user, user_keys, user_values),
        videos=[mix(v, summary_keys, summary_values) for v in latest.videos],
    )


def user_embeddings(
    sessions: list[SessionSubgraph],
    params: ModelParams,
    cfg: ModelConfig,
    feats: FeatureMap,
    cache: dict[NodeRef, Tensor] | None = None,
) -> UserEmbeddings:
    """The full profile pipeline over a user's sessions, newest last."""
    if not sessions:
        raise ModelError("a user needs at least one session")
    latest = session_embeddings(sessions[-1], params, cfg, feats, cache)
    history: list[tuple[Tensor, Tensor]] = []
    if not cfg.no_historical:
        for sub in sessions[:-1]:
            se = session_embeddings(sub, params, cfg, feats, cache)
            history.append((se.user, aggregate_session(se.videos, params, cfg)))
    return session_attention(latest, history, params, cfg)


# ------------------------------------------------------------------ sampling


def sample_embed(
    g: HeteroGraph,
    video_id: str,
    exclude_user_id: str,
    params: ModelParams,
    feats: FeatureMap,
    cache: dict[NodeRef, Tensor] | None = None,
) -> Tensor:
    """Graph-free candidate embedding: typed neighbor means, duplicated to 2d.

    Neighbors of the video are grouped by node type, each group averaged in
    primitive-embedding space, the group means averaged again, and the
    result concatenated with itself to match the session width. The user
    being scored never contributes to their own candidate.
    """
    node = NodeRef(VIDEO, video_id)
    if node not in g:
        raise GraphError(f"video {video_id!r} is not in the graph")
    groups: dict[str, dict[NodeRef, None]] = {}
    for dst, _, _ in g.neighbors(node):
        if dst.node_type == USER and dst.node_id == exclude_user_id:
            continue
        groups.setdefault(dst.node_type, {})[dst] = None
    if not groups:
        raise IsolatedVideoError(
            f"video {video_id!r} has no neighbors besides the scored user"
        )
    type_means: list[Tensor] = []
    for t in sorted(groups):
        members = sorted(groups[t])
        total = embed_node(members[0], params, feats, cache)
        for m in members[1:]:
            total = ad.add(total, embed_node(m, params, feats, cache))
        type_means.append(ad.scale(total, 1.0 / len(members)))
    overall = type_means[0]
    for tm in type_means[1:]:
        overall = ad.add(overall, tm)
    overall = ad.scale(overall, 1.0 / len(type_means))
    return ad.concat(overall, overall)


def score(profile: UserEmbeddings, candidate: Tensor) -> Tensor:
    """Preference score: candidate against the user and every latest video."""
    total = ad.dot(profile.user, candidate)
    for v in profile.videos:
        total = ad.add(total, ad.dot(v, candidate))
    return total


# --------------------------------------------------------------- checkpoints


def save_checkpoint(
    params: ModelParams,
    manifest_path: str,
    weights_path: str,
    extra: dict | None = None,
) -> None:
    """Write the registry as a JSON manifest plus flat little-endian floats."""
    entries = [
        {"name": name, "rows": t.rows, "cols": t.cols} for name, t in params.items()
    ]
    manifest = {"format": 1, "tensors": entries, "extra": extra or {}}
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(weights_path, "wb") as fh:
        for _, t in params.items():
            flat = np.ascontiguousarray(t.values, dtype="<f8")
            fh.write(flat.tobytes())


def load_checkpoint(
    manifest_path: str, weights_path: str
) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a checkpoint back; every declared shape is enforced."""
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != 1:
        raise ModelError(f"unsupported checkpoint format {manifest.get('format')!r}")
    blob = open(weights_path, "rb").read()
    expected = sum(e["rows"] * e["cols"] for e in manifest["tensors"]) * 8
    if len(blob) != expected:
        raise ModelError(
            f"weight file holds {len(blob)} bytes, manifest declares {expected}"
        )
    values: dict[str, np.ndarray] = {}
    offset = 0
    for e in manifest["tensors"]:
        n = e["rows"] * e["cols"]
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(
            e["rows"], e["cols"]
        )
        values[e["name"]] = arr.astype(np.float64)
        offset += n * 8
    return manifest, values


def restore(params: ModelParams, values: dict[str, np.ndarray]) -> None:
    """Copy loaded arrays into a live registry, shapes checked both ways."""
    missing = [n for n in params.names() if n not in values]
    surplus = [n for n in values if n not in params]
    if missing or surplus:
        raise ModelError(
            f"checkpoint does not match the registry: missing {missing}, surplus {surplus}"
        )
    for name, tensor in params.items():
        arr = values[name]
        if arr.shape != tensor.shape:
            raise ModelError(
                f"parameter {name!r} has shape {tensor.shape}, checkpoint holds {arr.shape}"
            )
    for name, tensor in params.items():
        tensor.values = np.array(values[name], dtype=np.float64)
