"""End-to-end command behaviour through the argparse entry point."""

import csv
import json
import os

import pytest

from hgsrec import config as cfgmod
from hgsrec import seeds, synth
from hgsrec.cli import main, _ranked_lists_for
from hgsrec.data import export_attributes, export_interactions, ingest, split_users
from hgsrec.model import VARIANTS


@pytest.fixture()
def world(tmp_path):
    ds = synth.two_group_likes(4, users_per_group=4, videos_per_group=8, noninteractions=3)
    interactions = tmp_path / "interactions.csv"
    attributes = tmp_path / "attributes.csv"
    export_interactions(ds, str(interactions))
    export_attributes(ds, str(attributes))
    cfg_text = "\n".join(
        [
            f"interactions = {interactions}",
            f"attributes = {attributes}",
            "max_history = 5",
            "session_len = 2",
            "sample_neighbors = 2",
            "num_layers = 2",
            "max_sessions = 2",
            "embed_dim = 4",
            "lr = 0.02",
            "batch_size = 8",
            "epochs = 1",
            "relation_reg = 0.1",
            "l2_reg = 0.001",
            "train_rate = 0.75",
            "candidates_per_user = 50",
            "ks = 5,10",
            "t0 = 1000000",
            "seed = 11",
        ]
    )
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(cfg_text + "\n")
    return tmp_path, str(cfg_path), ds


def test_ingest_writes_canonical_files_and_report(world, capsys):
    tmp_path, cfg_path, ds = world
    out = tmp_path / "ingested"
    assert main(["ingest", "--config", cfg_path, "--out", str(out)]) == 0
    report = json.loads((out / "ingest_report.json").read_text())
    assert report["interactions"] == len(ds.interactions)
    assert report["config"]["seed"] == 11
    assert (out / "interactions.csv").exists()
    assert (out / "attributes.csv").exists()
    assert "ingested" in capsys.readouterr().out


def test_ingest_converts_ratings_first(tmp_path):
    world = synth.rating_groups(6, users=12, groups=4, videos_per_group=20,
                                fives_per_half=4, lows_per_half=6)
    ratings = tmp_path / "ratings.csv"
    attrs = tmp_path / "attributes.csv"
    world.write_csv(str(ratings), str(attrs))
    out = tmp_path / "out"
    code = main(
        ["ingest", "--ratings", str(ratings), "--attributes", str(attrs),
         "--out", str(out)]
    )
    assert code == 0
    report = json.loads((out / "ingest_report.json").read_text())
    assert report["interactions"] == len(world.dataset().interactions)


def test_train_then_evaluate_and_reports_echo_config(world, capsys):
    tmp_path, cfg_path, _ = world
    run = tmp_path / "run"
    assert main(["train", "--config", cfg_path, "--out", str(run)]) == 0
    header = json.loads((run / "train_report.jsonl").read_text().splitlines()[0])
    assert header["config"]["lr"] == 0.02
    assert (run / "checkpoint.manifest.json").exists()
    assert (run / "checkpoint.params.bin").exists()

    assert main(
        ["evaluate", "--config", cfg_path, "--checkpoint", str(run), "--out", str(run)]
    ) == 0
    report = json.loads((run / "eval_report.json").read_text())
    assert report["config"]["seed"] == 11
    assert set(report["metrics"]) == {"model", "random", "popularity"}
    lines = (run / "metrics.csv").read_text().strip().splitlines()
    assert lines[0] == "strategy,metric,k,value"


def test_train_is_reproducible_via_cli(world):
    tmp_path, cfg_path, _ = world
    blobs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["train", "--config", cfg_path, "--out", str(out)]) == 0
        blobs.append(
            (
                (out / "checkpoint.manifest.json").read_bytes(),
                (out / "checkpoint.params.bin").read_bytes(),
                (out / "train_report.jsonl").read_bytes(),
            )
        )
    assert blobs[0] == blobs[1]


def test_evaluate_k_flag_controls_cutoffs(world):
    tmp_path, cfg_path, _ = world
    run = tmp_path / "run"
    assert main(["train", "--config", cfg_path, "--out", str(run)]) == 0
    assert main(
        ["evaluate", "--config", cfg_path, "--checkpoint", str(run),
         "--out", str(run), "--k", "1,3"]
    ) == 0
    report = json.loads((run / "eval_report.json").read_text())
    assert report["ks"] == [1, 3]
    assert sorted(report["metrics"]["model"]) == [
        "c_timeliness@1", "c_timeliness@3",
        "ndcg@1", "ndcg@3",
        "precision@1", "precision@3",
    ]


def test_recommend_matches_evaluate_ranking(world):
    tmp_path, cfg_path, ds = world
    run = tmp_path / "run"
    assert main(["train", "--config", cfg_path, "--out", str(run)]) == 0
    assert main(
        ["recommend", "--config", cfg_path, "--checkpoint", str(run),
         "--out", str(run), "--top-k", "4"]
    ) == 0
    with open(run / "recommendations.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))

    # recompute the rankings evaluate would use, through the library
    cfg = cfgmod.resolve(cfg_path, {})
    full, _ = ingest(cfg.interactions, cfg.attributes)
    _, test_users = split_users(full, cfg.train_rate, seeds.substream(cfg.seed, "split"))
    from hgsrec.cli import _load_trained

    params, feats = _load_trained(full, cfg, str(run))
    expected = _ranked_lists_for(full, test_users, params, feats, cfg)
    want = [
        (r.user_id, str(rank), vid)
        for r in expected
        for rank, vid in enumerate(r.videos[:4], start=1)
    ]
    got = [(row["user_id"], row["rank"], row["video_id"]) for row in rows]
    assert got == [(u, r, v) for u, r, v in want]
    assert all(row["score"] != "" for row in rows)


def test_recommend_filters_and_rejects_unknown_users(world):
    tmp_path, cfg_path, _ = world
    run = tmp_path / "run"
    assert main(["train", "--config", cfg_path, "--out", str(run)]) == 0
    code = main(
        ["recommend", "--config", cfg_path, "--checkpoint", str(run),
         "--out", str(run), "--users", "u_nobody"]
    )
    assert code == 1

    # now a real test user
    cfg = cfgmod.resolve(cfg_path, {})
    full, _ = ingest(cfg.interactions, cfg.attributes)
    _, test_users = split_users(full, cfg.train_rate, seeds.substream(cfg.seed, "split"))
    assert main(
        ["recommend", "--config", cfg_path, "--checkpoint", str(run),
         "--out", str(run), "--users", test_users[0]]
    ) == 0
    with open(run / "recommendations.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert {row["user_id"] for row in rows} == {test_users[0]}


def test_ablate_emits_six_variant_rows(world):
    tmp_path, cfg_path, _ = world
    out = tmp_path / "ablation"
    assert main(["ablate", "--config", cfg_path, "--out", str(out)]) == 0
    lines = (out / "ablate.csv").read_text().strip().splitlines()
    assert lines[0].split(",") == [
        "variant", "precision@10", "ndcg@10", "c_timeliness@10"
    ]
    names = [line.split(",")[0] for line in lines[1:]]
    assert names == list(VARIANTS)
    report = json.loads((out / "ablate_report.json").read_text())
    assert set(report["variants"]) == set(VARIANTS)
    for table in report["variants"].values():
        assert 0.0 <= table["precision@10"] <= 1.0


def test_exit_codes(world, tmp_path, capsys):
    _, cfg_path, _ = world
    assert main(["train", "--config", cfg_path, "--seed", "-3",
                 "--out", str(tmp_path / "x")]) == 2
    assert "config:" in capsys.readouterr().err

    bad = tmp_path / "bad.cfg"
    bad.write_text("not_a_key = 1\n")
    assert main(["train", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "not_a_key" in capsys.readouterr().err

    assert main(["train", "--interactions", str(tmp_path / "missing.csv"),
                 "--out", str(tmp_path / "x")]) == 1
    assert "io:" in capsys.readouterr().err
