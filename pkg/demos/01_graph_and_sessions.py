"""
Build the interaction graph and slice it into session windows
=============================================================

Walks a tiny hand-written log through the whole graph pipeline: global
bipartite wiring, the layered neighborhood of one user, session windows
over that neighborhood, and re-rooting a window at one of its videos.
"""

from hgsrec.data import AttributeRecord, Dataset, InteractionRecord
from hgsrec.graph import GraphConfig, build_global, build_local, split_sessions

# A three-user log. Timestamps order each user's history; the noninteraction
# kind is recorded but produces no edges.
dataset = Dataset(
    interactions=[
        InteractionRecord("ana", "clip1", "like", 10),
        InteractionRecord("ana", "clip2", "finish", 20),
        InteractionRecord("ana", "clip3", "like", 30),
        InteractionRecord("ana", "clip4", "like", 40),
        InteractionRecord("bo", "clip1", "like", 15),
        InteractionRecord("bo", "clip3", "like", 25),
        InteractionRecord("cy", "clip2", "finish", 18),
        InteractionRecord("cy", "clip4", "like", 35),
        InteractionRecord("cy", "clip1", "noninteraction", 50),
    ],
    attributes=[
        AttributeRecord("clip1", "tag", "cooking"),
        AttributeRecord("clip2", "tag", "cooking"),
        AttributeRecord("clip2", "audio", "jazz"),
        AttributeRecord("clip3", "tag", "travel"),
        AttributeRecord("clip4", "tag", "travel"),
    ],
)

g = build_global(dataset)
print(f"global graph: {g.node_count} nodes, {g.edge_count} directed edges")

# Every local graph is rooted at one user. Layer 1 holds the most recent
# interacted videos, deeper layers alternate back toward users/attributes.
cfg = GraphConfig(
    max_history=4, session_len=2, sample_neighbors=1, num_layers=2, max_sessions=2
)
local = build_local(g, dataset, "ana", cfg)
for depth, layer in enumerate(local.layers):
    print(f"layer {depth}: " + ", ".join(f"{n.node_type}:{n.node_id}" for n in layer))

# Sessions are consecutive fixed-width windows over the recent history,
# newest last. Each carries its own induced subgraph.
sessions = split_sessions(local, cfg)
print(f"\n{len(sessions)} sessions of width {cfg.session_len}:")
for i, sub in enumerate(sessions):
    print(f"  session {i}: videos {sub.contained_videos}, {len(list(sub.nodes()))} nodes")

# Re-rooting flips one user->video edge so the same window can be read
# from the video's point of view. The original window is untouched.
flipped = sessions[-1].rerooted("clip3")
print(f"\nre-rooted at clip3: root is {flipped.root.node_type}:{flipped.root.node_id}")
print(f"original root still {sessions[-1].root.node_type}:{sessions[-1].root.node_id}")
