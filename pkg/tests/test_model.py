"""Model forwards against the literal oracles, plus contract edge cases."""

import numpy as np
import pytest

from hgsrec import autodiff as ad
from hgsrec import model
from hgsrec.autodiff import Tensor
from hgsrec.data import AttributeRecord, Dataset, InteractionRecord
from hgsrec.graph import LayeredGraph, NodeRef, build_global
from hgsrec.model import (
    FeatureMap,
    ModelConfig,
    ModelParams,
    SessionEmbeddings,
    param_shapes,
    variant_config,
)

from oracles import (
    ahmp_oracle,
    encode_oracle,
    lstm_oracle,
    profile_oracle,
    rhmp_oracle,
    sample_oracle,
    score_oracle,
    session_attention_oracle,
)
from worlds import build_world, random_params, some_user_sessions


# ------------------------------------------------------- oracle cross-checks


@pytest.mark.parametrize("seed", range(20))
def test_rhmp_matches_oracle(seed):
    ds, g, gcfg, mcfg, feats, params, values = build_world(seed)
    _, sessions = some_user_sessions(ds, g, gcfg)
    for sub in sessions:
        got = model.rhmp(sub, params, mcfg, feats).values[0]
        want = rhmp_oracle(sub, values, feats)
        assert np.allclose(got, want, atol=1e-10, rtol=0)


@pytest.mark.parametrize("seed", range(20))
def test_ahmp_matches_oracle(seed):
    ds, g, gcfg, mcfg, feats, params, values = build_world(seed)
    _, sessions = some_user_sessions(ds, g, gcfg)
    for sub in sessions:
        got = model.ahmp(sub, params, mcfg, feats).values[0]
        want = ahmp_oracle(sub, values, feats, mcfg.leaky_slope)
        assert np.allclose(got, want, atol=1e-10, rtol=0)


def test_ahmp_shared_attention_matches_oracle():
    mcfg = ModelConfig(embed_dim=5, num_layers=2, single_attention=True)
    ds, g, gcfg, _, feats, params, values = build_world(3, mcfg=mcfg)
    _, sessions = some_user_sessions(ds, g, gcfg)
    got = model.ahmp(sessions[-1], params, mcfg, feats).values[0]
    want = ahmp_oracle(sessions[-1], values, feats, mcfg.leaky_slope, single_attention=True)
    assert np.allclose(got, want, atol=1e-10, rtol=0)


@pytest.mark.parametrize("seed", range(10))
def test_video_roots_match_oracle(seed):
    ds, g, gcfg, mcfg, feats, params, values = build_world(seed)
    _, sessions = some_user_sessions(ds, g, gcfg)
    sub = sessions[-1]
    for vid in sub.contained_videos:
        rsub = sub.rerooted(vid)
        got = model.encode_center(rsub, params, mcfg, feats).values[0]
        want = encode_oracle(rsub, values, feats, mcfg)
        assert np.allclose(got, want, atol=1e-10, rtol=0)


@pytest.mark.parametrize("seed", range(10))
def test_lstm_aggregation_matches_oracle(seed):
    rng = np.random.default_rng(seed + 100)
    mcfg = ModelConfig(embed_dim=4, num_layers=2)
    feats = FeatureMap({"user": ["u"], "video": ["v"]})
    params, values = random_params(feats, mcfg, rng)
    vecs = [rng.normal(size=8) for _ in range(int(rng.integers(1, 5)))]
    got = model.aggregate_session([Tensor(v.reshape(1, -1)) for v in vecs], params, mcfg)
    want = lstm_oracle(vecs, values)
    assert np.allclose(got.values[0], want, atol=1e-10, rtol=0)


def test_mean_aggregation():
    mcfg = ModelConfig(embed_dim=2, num_layers=1, mean_instead_of_lstm=True)
    feats = FeatureMap({"user": ["u"], "video": ["v"]})
    params, _ = random_params(feats, mcfg, np.random.default_rng(0))
    vecs = [Tensor([[1.0, 2.0, 3.0, 4.0]]), Tensor([[3.0, 2.0, 1.0, 0.0]])]
    got = model.aggregate_session(vecs, params, mcfg)
    assert np.allclose(got.values, [[2.0, 2.0, 2.0, 2.0]])


def test_aggregate_empty_session_is_an_error():
    mcfg = ModelConfig(embed_dim=2, num_layers=1)
    feats = FeatureMap({"user": ["u"], "video": ["v"]})
    params, _ = random_params(feats, mcfg, np.random.default_rng(0))
    with pytest.raises(model.ModelError):
        model.aggregate_session([], params, mcfg)


@pytest.mark.parametrize("seed", range(10))
def test_session_attention_matches_oracle(seed):
    rng = np.random.default_rng(seed + 500)
    mcfg = ModelConfig(embed_dim=3, num_layers=1)
    feats = FeatureMap({"user": ["u"], "video": ["v"]})
    params, values = random_params(feats, mcfg, rng)
    width = mcfg.fused_dim
    latest_user = rng.normal(size=width)
    latest_videos = [rng.normal(size=width) for _ in range(2)]
    history = [(rng.normal(size=width), rng.normal(size=width)) for _ in range(int(rng.integers(1, 4)))]

    latest = SessionEmbeddings(
        user=Tensor(latest_user.reshape(1, -1)),
        videos=[Tensor(v.reshape(1, -1)) for v in latest_videos],
    )
    pairs = [(Tensor(u.reshape(1, -1)), Tensor(s.reshape(1, -1))) for u, s in history]
    got = model.session_attention(latest, pairs, params, mcfg)
    want_user, want_videos = session_attention_oracle(
        latest_user, latest_videos, history, values["session.wprime"], mcfg.sim_eps
    )
    assert np.allclose(got.user.values[0], want_user, atol=1e-10, rtol=0)
    for gv, wv in zip(got.videos, want_videos):
        assert np.allclose(gv.values[0], wv, atol=1e-10, rtol=0)


@pytest.mark.parametrize("seed", range(10))
def test_full_profile_matches_oracle(seed):
    ds, g, gcfg, mcfg, feats, params, values = build_world(seed)
    u, sessions = some_user_sessions(ds, g, gcfg, want_history=True)
    got = model.user_embeddings(sessions, params, mcfg, feats)
    want_user, want_videos = profile_oracle(sessions, values, feats, mcfg)
    assert np.allclose(got.user.values[0], want_user, atol=1e-10, rtol=0)
    assert len(got.videos) == len(want_videos)
    for gv, wv in zip(got.videos, want_videos):
        assert np.allclose(gv.values[0], wv, atol=1e-10, rtol=0)


@pytest.mark.parametrize("seed", range(10))
def test_sample_embed_matches_oracle(seed):
    ds, g, gcfg, mcfg, feats, params, values = build_world(seed)
    u = ds.users[0]
    for vid in ds.videos[:5]:
        got = model.sample_embed(g, vid, u, params, feats).values[0]
        want = sample_oracle(g, vid, u, values, feats)
        assert np.allclose(got, want, atol=1e-10, rtol=0)


def test_score_matches_oracle():
    rng = np.random.default_rng(42)
    user = rng.normal(size=6)
    videos = [rng.normal(size=6) for _ in range(3)]
    cand = rng.normal(size=6)
    profile = model.UserEmbeddings(
        user=Tensor(user.reshape(1, -1)),
        videos=[Tensor(v.reshape(1, -1)) for v in videos],
    )
    got = ad.scalar(model.score(profile, Tensor(cand.reshape(1, -1))))
    assert got == pytest.approx(score_oracle(user, videos, cand), abs=1e-12)


# --------------------------------------------------------- closed-form cases


def identity_world(d=3):
    """One user, one video, identity weights everywhere they exist."""
    ds = Dataset(
        [InteractionRecord("u", "v", "like", 1)],
        [AttributeRecord("v", "tag", "t")],
    )
    feats = FeatureMap.from_dataset(ds)
    mcfg = ModelConfig(embed_dim=1, num_layers=1)
    shapes = param_shapes(feats, mcfg)
    tensors = {}
    for name, (r, c) in shapes.items():
        if r == c:
            tensors[name] = Tensor(np.eye(r))
        else:
            tensors[name] = Tensor(np.ones((r, c)))
    return ds, feats, mcfg, ModelParams(mcfg, tensors)


def test_rhmp_identity_weights_sum_neighbors():
    sub = LayeredGraph(
        root=NodeRef("user", "u"),
        layers=[[NodeRef("user", "u")], [NodeRef("video", "v")]],
        children={
            NodeRef("user", "u"): [(NodeRef("video", "v"), "like_u2v", 1)],
            NodeRef("video", "v"): [],
        },
    )
    feats = FeatureMap({"user": ["u"], "video": ["v"]})
    mcfg = ModelConfig(embed_dim=2, num_layers=1)
    tensors = {
        name: Tensor(np.eye(2)) for name, shape in param_shapes(feats, mcfg).items()
        if shape == (2, 2)
    }
    tensors.update(
        {
            "ffn.user.hidden": Tensor([[2.0, 3.0]]),
            "ffn.video.hidden": Tensor([[5.0, 7.0]]),
            "ffn.user.out": Tensor(np.eye(2)),
            "ffn.video.out": Tensor(np.eye(2)),
            "ahmp.attn.1": Tensor(np.ones((1, 4))),
            "session.wprime": Tensor(np.eye(4)),
        }
    )
    params = ModelParams(mcfg, tensors)
    got = model.rhmp(sub, params, mcfg, feats)
    # x_u * I + x_v * I with primitive embeddings (2,3) and (5,7)
    assert np.allclose(got.values, [[7.0, 10.0]])


def test_ahmp_single_child_gets_weight_one():
    sub = LayeredGraph(
        root=NodeRef("user", "u"),
        layers=[[NodeRef("user", "u")], [NodeRef("video", "v")]],
        children={
            NodeRef("user", "u"): [(NodeRef("video", "v"), "like_u2v", 1)],
            NodeRef("video", "v"): [],
        },
    )
    feats = FeatureMap({"user": ["u"], "video": ["v"]})
    mcfg = ModelConfig(embed_dim=2, num_layers=1)
    params, values = random_params(feats, mcfg, np.random.default_rng(9))
    got = model.ahmp(sub, params, mcfg, feats).values[0]
    from oracles import primitive_oracle

    x_u = primitive_oracle(NodeRef("user", "u"), values, feats)
    x_v = primitive_oracle(NodeRef("video", "v"), values, feats)
    assert np.allclose(got, x_u @ values["ahmp.self.1"] + x_v, atol=1e-12)


def test_isolated_root_is_chained_self_transforms():
    # a root with empty deeper layers passes through every self matrix once
    root = NodeRef("user", "u")
    sub = LayeredGraph(root=root, layers=[[root], [], []], children={root: []})
    feats = FeatureMap({"user": ["u"], "video": ["v"]})
    mcfg = ModelConfig(embed_dim=3, num_layers=2)
    params, values = random_params(feats, mcfg, np.random.default_rng(4))
    got = model.rhmp(sub, params, mcfg, feats).values[0]
    from oracles import primitive_oracle

    want = primitive_oracle(root, values, feats) @ values["rhmp.self.1"] @ values["rhmp.self.2"]
    assert np.allclose(got, want, atol=1e-12)


def test_fuse_layout_and_flags():
    mcfg = ModelConfig(embed_dim=2, num_layers=1)
    x, y = Tensor([[1.0, 2.0]]), Tensor([[3.0, 4.0]])
    assert model.fuse(x, y, mcfg).values.tolist() == [[1.0, 2.0, 3.0, 4.0]]

    off_rel = ModelConfig(embed_dim=2, num_layers=1, no_relation=True)
    assert model.fuse(x, y, off_rel).values.tolist() == [[0.0, 0.0, 3.0, 4.0]]

    off_att = ModelConfig(embed_dim=2, num_layers=1, no_attention=True)
    assert model.fuse(x, y, off_att).values.tolist() == [[1.0, 2.0, 0.0, 0.0]]

    with pytest.raises(model.ModelError):
        model.fuse(Tensor([[1.0]]), y, mcfg)


@pytest.mark.parametrize("variant", model.VARIANTS)
def test_fused_width_is_2d_for_every_variant(variant):
    base = ModelConfig(embed_dim=4, num_layers=2)
    mcfg = variant_config(base, variant)
    ds, g, gcfg, _, feats, params, _ = build_world(7, mcfg=mcfg)
    _, sessions = some_user_sessions(ds, g, gcfg, want_history=True)
    profile = model.user_embeddings(sessions, params, mcfg, feats)
    assert profile.user.shape == (1, 8)
    for v in profile.videos:
        assert v.shape == (1, 8)


def test_variant_config_sets_exactly_one_flag():
    base = ModelConfig(embed_dim=4, num_layers=2, no_relation=True)
    for name in model.VARIANTS:
        cfg = variant_config(base, name)
        set_flags = [f for f in model.VARIANTS[1:] if getattr(cfg, f)]
        assert set_flags == ([] if name == "full" else [name])
    with pytest.raises(model.ConfigError):
        variant_config(base, "no_such_variant")


def test_session_attention_zero_denominator_is_guarded():
    mcfg = ModelConfig(embed_dim=1, num_layers=1, sim_eps=1e-8)
    feats = FeatureMap({"user": ["u"], "video": ["v"]})
    params, values = random_params(feats, mcfg, np.random.default_rng(1))
    latest = SessionEmbeddings(user=Tensor([[1.0, 0.0]]), videos=[Tensor([[1.0, 0.0]])])
    # two history entries whose similarities cancel exactly
    pairs = [
        (Tensor([[1.0, 1.0]]), Tensor([[1.0, 1.0]])),
        (Tensor([[-1.0, 1.0]]), Tensor([[-1.0, 1.0]])),
    ]
    got = model.session_attention(latest, pairs, params, mcfg)
    assert np.isfinite(got.user.values).all()
    w = values["session.wprime"]
    want = (1.0 * (np.array([1.0, 1.0]) @ w) + (-1.0) * (np.array([-1.0, 1.0]) @ w)) / 1e-8
    assert np.allclose(got.user.values[0], want)


# ------------------------------------------------------------------ sampling


def test_sample_embed_halves_are_identical():
    ds, g, gcfg, mcfg, feats, params, _ = build_world(2)
    got = model.sample_embed(g, ds.videos[0], ds.users[0], params, feats).values[0]
    d = mcfg.embed_dim
    assert np.array_equal(got[:d], got[d:])


def test_sample_embed_excludes_target_user():
    ds = Dataset(
        [
            InteractionRecord("alice", "v", "like", 1),
            InteractionRecord("bob", "v", "like", 2),
        ],
        [AttributeRecord("v", "tag", "t")],
    )
    g = build_global(ds)
    feats = FeatureMap.from_dataset(ds)
    mcfg = ModelConfig(embed_dim=3, num_layers=1)
    params, values = random_params(feats, mcfg, np.random.default_rng(5))
    from oracles import primitive_oracle

    x_bob = primitive_oracle(NodeRef("user", "bob"), values, feats)
    x_tag = primitive_oracle(NodeRef("tag", "t"), values, feats)
    got = model.sample_embed(g, "v", "alice", params, feats).values[0]
    want_half = (x_bob + x_tag) / 2.0
    assert np.allclose(got[:3], want_half, atol=1e-12)


def test_sample_embed_isolated_video_is_an_error():
    ds = Dataset([InteractionRecord("alice", "v", "like", 1)])
    g = build_global(ds)
    feats = FeatureMap.from_dataset(ds)
    mcfg = ModelConfig(embed_dim=2, num_layers=1)
    params, _ = random_params(feats, mcfg, np.random.default_rng(5))
    with pytest.raises(model.IsolatedVideoError):
        model.sample_embed(g, "v", "alice", params, feats)


def test_sample_embed_unknown_video_is_an_error():
    ds, g, gcfg, mcfg, feats, params, _ = build_world(2)
    from hgsrec.graph import GraphError

    with pytest.raises(GraphError):
        model.sample_embed(g, "ghost", ds.users[0], params, feats)


# ------------------------------------------------------- embeddings and maps


def test_primitive_embedding_of_zero_raw_is_zero():
    feats = FeatureMap({"user": ["u"], "video": ["a", "b"]})
    mcfg = ModelConfig(embed_dim=4, num_layers=1)
    params, _ = random_params(feats, mcfg, np.random.default_rng(0))
    z = model.init_embedding("video", Tensor(np.zeros((1, 2))), params)
    assert np.array_equal(z.values, np.zeros((1, 4)))


def test_init_embedding_checks_width():
    feats = FeatureMap({"user": ["u"], "video": ["a", "b"]})
    mcfg = ModelConfig(embed_dim=4, num_layers=1)
    params, _ = random_params(feats, mcfg, np.random.default_rng(0))
    with pytest.raises(model.ModelError):
        model.init_embedding("video", Tensor(np.zeros((1, 3))), params)


def test_unseen_id_hashes_deterministically():
    feats = FeatureMap({"user": ["u0", "u1", "u2"], "video": ["v"]})
    a = feats.feature(NodeRef("user", "stranger"))
    b = feats.feature(NodeRef("user", "stranger"))
    assert a == b
    assert 0 <= a[0] < 3 and a[1] in (1.0, -1.0)
    assert feats.feature(NodeRef("user", "u1")) == (1, 1.0)


def test_unknown_node_type_is_an_error():
    feats = FeatureMap({"user": ["u"], "video": ["v"]})
    with pytest.raises(model.ModelError):
        feats.feature(NodeRef("banner", "x"))


def test_embed_node_uses_cache():
    ds, g, gcfg, mcfg, feats, params, _ = build_world(1)
    cache = {}
    first = model.embed_node(NodeRef("user", ds.users[0]), params, feats, cache)
    second = model.embed_node(NodeRef("user", ds.users[0]), params, feats, cache)
    assert first is second


# ----------------------------------------------------------------- registry


def test_registry_holds_every_relation_hop_pair():
    ds, g, gcfg, mcfg, feats, params, _ = build_world(0)
    from hgsrec.graph import RELATIONS

    for rel in RELATIONS:
        for hop in (1, 2):
            assert params.relation_weight(rel, hop).shape == (5, 5)


def test_missing_parameter_lookup_raises():
    ds, g, gcfg, mcfg, feats, params, _ = build_world(0)
    with pytest.raises(model.ParamError):
        params.relation_weight("like_u2v", 99)
    with pytest.raises(model.ParamError):
        params["nope"]


def test_param_shapes_respect_flags():
    feats = FeatureMap({"user": ["u"], "video": ["v"]})
    lean = param_shapes(feats, ModelConfig(embed_dim=2, num_layers=2, no_relation=True))
    assert not any(n.startswith("rhmp.") for n in lean)
    shared = param_shapes(
        feats, ModelConfig(embed_dim=2, num_layers=2, single_attention=True)
    )
    assert "ahmp.attn.shared" in shared and "ahmp.attn.1" not in shared
    meaned = param_shapes(
        feats, ModelConfig(embed_dim=2, num_layers=2, mean_instead_of_lstm=True)
    )
    assert not any(n.startswith("lstm.") for n in meaned)


# --------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip_is_bitwise(tmp_path):
    ds, g, gcfg, mcfg, feats, params, _ = build_world(11)
    man, blob = str(tmp_path / "c.manifest.json"), str(tmp_path / "c.params.bin")
    model.save_checkpoint(params, man, blob, extra={"note": "test"})
    manifest, values = model.load_checkpoint(man, blob)
    assert [e["name"] for e in manifest["tensors"]] == params.names()
    for name, tensor in params.items():
        assert np.array_equal(values[name], tensor.values)

    fresh, _ = random_params(feats, mcfg, np.random.default_rng(999))
    model.restore(fresh, values)
    for name, tensor in fresh.items():
        assert np.array_equal(tensor.values, dict(params.items())[name].values)


def test_checkpoint_shape_mismatch_rejected(tmp_path):
    ds, g, gcfg, mcfg, feats, params, _ = build_world(11)
    man, blob = str(tmp_path / "c.manifest.json"), str(tmp_path / "c.params.bin")
    model.save_checkpoint(params, man, blob)
    _, values = model.load_checkpoint(man, blob)

    other = ModelConfig(embed_dim=4, num_layers=2)
    fresh, _ = random_params(feats, other, np.random.default_rng(1))
    with pytest.raises(model.ModelError):
        model.restore(fresh, values)


def test_checkpoint_truncated_blob_rejected(tmp_path):
    ds, g, gcfg, mcfg, feats, params, _ = build_world(11)
    man, blob = str(tmp_path / "c.manifest.json"), str(tmp_path / "c.params.bin")
    model.save_checkpoint(params, man, blob)
    raw = open(blob, "rb").read()
    open(blob, "wb").write(raw[:-8])
    with pytest.raises(model.ModelError):
        model.load_checkpoint(man, blob)
