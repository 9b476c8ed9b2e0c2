"""Global multi-relational graph and per-user layered local graphs.

The global graph holds every user, video and attribute node with eight
directed relations (each interaction kind in both directions, plus the
video/attribute pair). A user's local graph is a breadth-first unrolling
around that user: layer 1 is their recent positive videos, deeper layers
add each frontier node's attributes and a capped number of its most
recently interacting counterparts. Consecutive layer-1 windows form
sessions, and each session subgraph can be re-rooted at one of its videos
by reversing the root edge, which is how video-side embeddings reuse the
same aggregation code.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .data import (
    Dataset,
    HistoryEvent,
    KIND_FINISH,
    KIND_LIKE,
    KIND_PRODUCE,
)

USER = "user"
VIDEO = "video"

REL_LIKE_U2V = "like_u2v"
REL_LIKE_V2U = "like_v2u"
REL_FINISH_U2V = "finish_u2v"
REL_FINISH_V2U = "finish_v2u"
REL_PRODUCE_U2V = "produce_u2v"
REL_PRODUCE_V2U = "produce_v2u"
REL_ATTR_V2A = "attr_v2a"
REL_ATTR_A2V = "attr_a2v"

RELATIONS = (
    REL_LIKE_U2V,
    REL_LIKE_V2U,
    REL_FINISH_U2V,
    REL_FINISH_V2U,
    REL_PRODUCE_U2V,
    REL_PRODUCE_V2U,
    REL_ATTR_V2A,
    REL_ATTR_A2V,
)

REVERSE = {
    REL_LIKE_U2V: REL_LIKE_V2U,
    REL_LIKE_V2U: REL_LIKE_U2V,
    REL_FINISH_U2V: REL_FINISH_V2U,
    REL_FINISH_V2U: REL_FINISH_U2V,
    REL_PRODUCE_U2V: REL_PRODUCE_V2U,
    REL_PRODUCE_V2U: REL_PRODUCE_U2V,
    REL_ATTR_V2A: REL_ATTR_A2V,
    REL_ATTR_A2V: REL_ATTR_V2A,
}

# outgoing relation for a user-side interaction record of each kind
U2V_RELATION = {
    KIND_LIKE: REL_LIKE_U2V,
    KIND_FINISH: REL_FINISH_U2V,
    KIND_PRODUCE: REL_PRODUCE_U2V,
}


class GraphError(ValueError):
    """A graph request that the data cannot satisfy."""


class InsufficientHistoryError(GraphError):
    """The user has too few positive interactions to form one session."""


@dataclass(frozen=True, order=True)
class NodeRef:
    """A typed node handle; attribute nodes use their type name directly."""

    node_type: str
    node_id: str


Edge = tuple[NodeRef, str, int | None]  # (destination, relation, timestamp)


@dataclass
class GraphConfig:
    """Shape of the local graphs: history cap, session geometry, fanout."""

    max_history: int = 8
    session_len: int = 2
    sample_neighbors: int = 2
    num_layers: int = 2
    max_sessions: int = 3

    def validate(self) -> None:
        if self.session_len < 1:
            raise GraphError(f"session_len must be at least 1, got {self.session_len}")
        if self.max_sessions < 1:
            raise GraphError(f"max_sessions must be at least 1, got {self.max_sessions}")
        if self.sample_neighbors < 1:
            raise GraphError(
                f"sample_neighbors must be at least 1, got {self.sample_neighbors}"
            )
        if self.num_layers < 1:
            raise GraphError(f"num_layers must be at least 1, got {self.num_layers}")
        if self.max_history < self.session_len:
            raise GraphError(
                f"max_history={self.max_history} cannot hold one session of "
                f"length {self.session_len}"
            )


class HeteroGraph:
    """Directed multi-relational adjacency over typed nodes."""

    def __init__(self) -> None:
        self.adj: dict[NodeRef, list[Edge]] = {}

    def add_node(self, node: NodeRef) -> None:
        self.adj.setdefault(node, [])

    def add_edge(self, src: NodeRef, dst: NodeRef, relation: str, timestamp: int | None) -> None:
        if relation not in RELATIONS:
            raise GraphError(f"unknown relation {relation!r}")
        self.add_node(src)
        self.add_node(dst)
        self.adj[src].append((dst, relation, timestamp))

    def __contains__(self, node: NodeRef) -> bool:
        return node in self.adj

    def neighbors(self, node: NodeRef) -> list[Edge]:
        if node not in self.adj:
            raise GraphError(f"node {node.node_type}:{node.node_id} is not in the graph")
        return self.adj[node]

    @property
    def node_count(self) -> int:
        return len(self.adj)

    @property
    def edge_count(self) -> int:
        return sum(len(es) for es in self.adj.values())


def build_global(dataset: Dataset) -> HeteroGraph:
    """Materialise the full graph; noninteraction records add no edges."""
    g = HeteroGraph()
    for u in dataset.users:
        g.add_node(NodeRef(USER, u))
    for v in dataset.videos:
        g.add_node(NodeRef(VIDEO, v))
    for r in dataset.interactions:
        rel = U2V_RELATION.get(r.kind)
        if rel is None:
            continue
        u, v = NodeRef(USER, r.user_id), NodeRef(VIDEO, r.video_id)
        g.add_edge(u, v, rel, r.timestamp)
        g.add_edge(v, u, REVERSE[rel], r.timestamp)
    for a in dataset.attributes:
        v, node = NodeRef(VIDEO, a.video_id), NodeRef(a.attr_type, a.attr_id)
        g.add_edge(v, node, REL_ATTR_V2A, None)
        g.add_edge(node, v, REL_ATTR_A2V, None)
    return g


# -------------------------------------------------------------- local graphs


@dataclass
class LayeredGraph:
    """A rooted graph whose edges only run from one layer to the next."""

    root: NodeRef
    layers: list[list[NodeRef]]
    children: dict[NodeRef, list[Edge]]

    @property
    def depth(self) -> int:
        return len(self.layers) - 1

    def nodes(self) -> list[NodeRef]:
        return [n for layer in self.layers for n in layer]

    @property
    def edge_count(self) -> int:
        return sum(len(es) for es in self.children.values())


@dataclass
class SessionSubgraph(LayeredGraph):
    """One session window of a local graph, plus its re-rooted variants."""

    session_index: int = 0
    contained_videos: list[str] = field(default_factory=list)
    _reroots: dict[str, "SessionSubgraph"] = field(default_factory=dict, repr=False)

    def rerooted(self, video_id: str) -> "SessionSubgraph":
        """The video-rooted reversal of this session, memoised per video."""
        sub = self._reroots.get(video_id)
        if sub is None:
            sub = reroot(self, video_id)
            self._reroots[video_id] = sub
        return sub


def _latest_interactions(
    g: HeteroGraph, node: NodeRef, counterpart_type: str, exclude: set[NodeRef]
) -> list[Edge]:
    """Distinct interacting counterparts, newest first, one edge each."""
    best: dict[NodeRef, tuple[int, str]] = {}
    for dst, rel, ts in g.neighbors(node):
        if dst.node_type != counterpart_type or ts is None or dst in exclude:
            continue
        cur = best.get(dst)
        # newest event represents the pair; relation name breaks exact ties
        if cur is None or (ts, rel) > cur:
            best[dst] = (ts, rel)
    ranked = sorted(best.items(), key=lambda kv: (-kv[1][0], kv[0].node_id))
    return [(dst, rel, ts) for dst, (ts, rel) in ranked]


def _attribute_edges(g: HeteroGraph, node: NodeRef) -> list[Edge]:
    attrs = [(dst, rel, ts) for dst, rel, ts in g.neighbors(node) if rel == REL_ATTR_V2A]
    attrs.sort(key=lambda e: (e[0].node_type, e[0].node_id))
    return attrs


def build_local(
    g: HeteroGraph,
    dataset: Dataset,
    user_id: str,
    cfg: GraphConfig,
    history: list[HistoryEvent] | None = None,
) -> LayeredGraph:
    """Breadth-first local graph around one user.

    Layer 1 is the user's most recent positive videos (up to
    ``max_history``), oldest first. Each deeper layer expands every node of
    the previous one: all of a video's attributes, and up to
    ``sample_neighbors`` of the node's most recently interacting
    counterparts that no earlier layer already holds. Nodes joining the
    layer being built can still receive edges from later parents in that
    same layer, so shared attributes and users stay shared.
    """
    cfg.validate()
    if history is None:
        if user_id not in dataset.history:
            raise GraphError(f"unknown user {user_id!r}")
        history = dataset.history[user_id]
    if len(history) < cfg.session_len:
        raise InsufficientHistoryError(
            f"user {user_id!r} has {len(history)} positive interactions, "
            f"fewer than one session of {cfg.session_len}"
        )

    root = NodeRef(USER, user_id)
    if root not in g:
        raise GraphError(f"user {user_id!r} is not in the global graph")

    recent = history[-cfg.max_history :]
    layer1: list[NodeRef] = []
    children: dict[NodeRef, list[Edge]] = {root: []}
    for ev in recent:
        v = NodeRef(VIDEO, ev.video_id)
        layer1.append(v)
        children[root].append((v, U2V_RELATION[ev.kind], ev.timestamp))

    layers = [[root], layer1]
    visited = {root, *layer1}

    for _ in range(2, cfg.num_layers + 1):
        frontier: list[NodeRef] = []
        in_frontier: set[NodeRef] = set()
        for node in layers[-1]:
            edges: list[Edge] = []
            if node.node_type == VIDEO:
                edges.extend(
                    e for e in _attribute_edges(g, node) if e[0] not in visited
                )
            counterpart = VIDEO if node.node_type == USER else USER
            if node.node_type in (USER, VIDEO):
                eligible = _latest_interactions(g, node, counterpart, visited)
                edges.extend(eligible[: cfg.sample_neighbors])
            children[node] = edges
            for dst, _, _ in edges:
                if dst not in in_frontier:
                    in_frontier.add(dst)
                    frontier.append(dst)
        layers.append(frontier)
        visited |= in_frontier

    for node in layers[-1]:  # leaves
        children.setdefault(node, [])
    return LayeredGraph(root=root, layers=layers, children=children)


def split_sessions(local: LayeredGraph, cfg: GraphConfig) -> list[SessionSubgraph]:
    """Cut layer 1 into consecutive session windows, newest kept.

    With ``M`` layer-1 videos and sessions of ``m``, the ``min(M // m,
    max_sessions)`` windows covering the most recent videos survive; any
    remainder falls off the oldest end. The last returned session is the
    newest one.
    """
    cfg.validate()
    m = cfg.session_len
    layer1 = local.layers[1] if local.depth >= 1 else []
    count = min(len(layer1) // m, cfg.max_sessions)
    if count == 0:
        raise InsufficientHistoryError(
            f"{len(layer1)} layer-1 videos cannot fill a session of {m}"
        )
    offset = len(layer1) - count * m

    root_edges = {dst: (rel, ts) for dst, rel, ts in local.children[local.root]}
    sessions: list[SessionSubgraph] = []
    for i in range(count):
        window = layer1[offset + i * m : offset + (i + 1) * m]
        layers: list[list[NodeRef]] = [[local.root], list(window)]
        children: dict[NodeRef, list[Edge]] = {
            local.root: [(v, *root_edges[v]) for v in window]
        }
        for _ in range(2, len(local.layers)):
            frontier: list[NodeRef] = []
            in_frontier: set[NodeRef] = set()
            for node in layers[-1]:
                edges = list(local.children.get(node, ()))
                children[node] = edges
                for dst, _, _ in edges:
                    if dst not in in_frontier:
                        in_frontier.add(dst)
                        frontier.append(dst)
            layers.append(frontier)
        for node in layers[-1]:
            children.setdefault(node, [])
        sessions.append(
            SessionSubgraph(
                root=local.root,
                layers=layers,
                children=children,
                session_index=i,
                contained_videos=[v.node_id for v in window],
            )
        )
    return sessions


def reroot(sub: SessionSubgraph, video_id: str) -> SessionSubgraph:
    """Re-root a session at one of its videos by reversing the root edge.

    The chosen video's edge from the user flips direction (its relation
    flips with it), then layers are rebuilt breadth-first from the video
    over the modified edge set, truncated at the original depth. Edges that
    no longer connect consecutive layers are dropped. The input session is
    left untouched.
    """
    target = NodeRef(VIDEO, video_id)
    if video_id not in sub.contained_videos:
        raise GraphError(
            f"video {video_id!r} is not one of this session's videos "
            f"{sub.contained_videos}"
        )

    flipped: dict[NodeRef, list[Edge]] = {
        n: list(es) for n, es in sub.children.items()
    }
    kept: list[Edge] = []
    moved: Edge | None = None
    for dst, rel, ts in flipped[sub.root]:
        if dst == target and moved is None:
            moved = (sub.root, REVERSE[rel], ts)
        else:
            kept.append((dst, rel, ts))
    flipped[sub.root] = kept
    flipped.setdefault(target, [])
    flipped[target] = [moved] + flipped[target] if moved else flipped[target]

    layers: list[list[NodeRef]] = [[target]]
    children: dict[NodeRef, list[Edge]] = {}
    visited = {target}
    for _ in range(sub.depth):
        frontier: list[NodeRef] = []
        in_frontier: set[NodeRef] = set()
        for node in layers[-1]:
            edges = [e for e in flipped.get(node, ()) if e[0] not in visited]
            children[node] = edges
            for dst, _, _ in edges:
                if dst not in in_frontier:
                    in_frontier.add(dst)
                    frontier.append(dst)
        if not frontier:
            break
        layers.append(frontier)
        visited |= in_frontier
    for node in layers[-1]:
        children.setdefault(node, [])
    return SessionSubgraph(
        root=target,
        layers=layers,
        children=children,
        session_index=sub.session_index,
        contained_videos=list(sub.contained_videos),
    )


def dump_edges(g: HeteroGraph, path: str) -> int:
    """Write one JSON object per edge; returns the number written."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for src in sorted(g.adj):
            for dst, rel, ts in g.adj[src]:
                fh.write(
                    json.dumps(
                        {
                            "src_type": src.node_type,
                            "src": src.node_id,
                            "relation": rel,
                            "dst_type": dst.node_type,
                            "dst": dst.node_id,
                            "timestamp": ts,
                        },
                        sort_keys=True,
                    )
                )
                fh.write("\n")
                n += 1
    return n
