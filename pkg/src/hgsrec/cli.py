"""Command-line entry point: ingest, train, evaluate, recommend, ablate.

Every command resolves one RunConfig (defaults < config file < flags),
echoes it into the report it writes, and derives all randomness from the
single root seed.  Exit codes: 0 success, 1 runtime failure with a
module-tagged message, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import config as cfgmod
from . import seeds
from .data import (
    DataError,
    convert_engagement_csv,
    convert_ratings_csv,
    density,
    export_attributes,
    export_interactions,
    ingest,
    split_users,
    write_report,
)
from .evaluate import (
    EvalError,
    build_candidates,
    evaluate,
    rank_for_user,
    split_records,
    visible_dataset,
    write_eval_report,
    write_metrics_csv,
)
from .graph import GraphError
from .model import (
    ConfigError as ModelConfigError,
    FeatureMap,
    ModelError,
    ParamError,
    load_checkpoint,
    restore,
    variant_config,
    VARIANTS,
)
from .train import TrainError, init_params, train, write_train_report


def _overrides(args: argparse.Namespace) -> dict[str, str]:
    """Turn explicitly given flags into raw config overrides."""
    out: dict[str, str] = {}
    for flag, key in (
        ("seed", "seed"),
        ("threads", "threads"),
        ("interactions", "interactions"),
        ("attributes", "attributes"),
        ("k", "ks"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            out[key] = str(value)
    return out


def _resolved(args: argparse.Namespace) -> cfgmod.RunConfig:
    return cfgmod.resolve(args.config, _overrides(args))


def _load_dataset(cfg: cfgmod.RunConfig):
    if not cfg.interactions:
        raise cfgmod.ConfigError("an interactions path is required (key 'interactions')")
    ds, report = ingest(cfg.interactions, cfg.attributes or None)
    return ds, report


def _splits(ds, cfg):
    rng = seeds.substream(cfg.seed, "split")
    return split_users(ds, cfg.train_rate, rng)


def _checkpoint_paths(directory: str) -> tuple[str, str]:
    return (
        os.path.join(directory, "checkpoint.manifest.json"),
        os.path.join(directory, "checkpoint.params.bin"),
    )


def _load_trained(ds, cfg, checkpoint_dir: str):
    feats = FeatureMap.from_dataset(ds)
    params = init_params(feats, cfg.model_config(), seeds.substream(cfg.seed, "init"))
    manifest_path, weights_path = _checkpoint_paths(checkpoint_dir)
    _, values = load_checkpoint(manifest_path, weights_path)
    restore(params, values)
    return params, feats


# ---------------------------------------------------------------- commands


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _resolved(args)
    os.makedirs(args.out, exist_ok=True)
    interactions_path = cfg.interactions
    if args.ratings is not None:
        interactions_path = os.path.join(args.out, "interactions.csv")
        convert_ratings_csv(args.ratings, interactions_path, args.rating_threshold)
    elif args.engagement is not None:
        interactions_path = os.path.join(args.out, "interactions.csv")
        convert_engagement_csv(args.engagement, interactions_path)
    if not interactions_path:
        raise cfgmod.ConfigError(
            "ingest needs an interactions path, --ratings, or --engagement"
        )
    ds, report = ingest(interactions_path, cfg.attributes or None)
    export_interactions(ds, os.path.join(args.out, "interactions.csv"))
    if ds.attributes:
        export_attributes(ds, os.path.join(args.out, "attributes.csv"))
    payload = {
        "config": cfg.to_dict(),
        "ingest": report.to_dict(),
        "users": len(ds.users),
        "videos": len(ds.videos),
        "interactions": len(ds.interactions),
        "density": density(ds),
    }
    write_report(payload, os.path.join(args.out, "ingest_report.json"))
    print(
        f"ingested {len(ds.interactions)} interactions "
        f"({len(ds.users)} users, {len(ds.videos)} videos)"
    )
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolved(args)
    os.makedirs(args.out, exist_ok=True)
    ds, _ = _load_dataset(cfg)
    train_users, _ = _splits(ds, cfg)
    params, feats, report = train(
        ds,
        train_users,
        cfg.graph_config(),
        cfg.model_config(),
        cfg.train_config(),
        checkpoint_paths=_checkpoint_paths(args.out),
    )
    report.config = cfg.to_dict()
    write_train_report(report, os.path.join(args.out, "train_report.jsonl"))
    last = report.epochs[-1]["loss"] if report.epochs else float("nan")
    print(
        f"trained {report.users_trained} users for {len(report.epochs)} epochs "
        f"(final loss {last:.6f}); checkpoint in {args.out}"
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _resolved(args)
    os.makedirs(args.out, exist_ok=True)
    ds, _ = _load_dataset(cfg)
    _, test_users = _splits(ds, cfg)
    params, feats = _load_trained(ds, cfg, args.checkpoint)
    report = evaluate(
        ds,
        test_users,
        params,
        feats,
        cfg.graph_config(),
        cfg.model_config(),
        cfg.eval_config(),
        threads=cfg.threads,
    )
    report.config = cfg.to_dict()
    write_eval_report(report, os.path.join(args.out, "eval_report.json"))
    write_metrics_csv(report, os.path.join(args.out, "metrics.csv"))
    model_table = report.metrics["model"]
    shown = ", ".join(f"{k}={model_table[k]:.4f}" for k in sorted(model_table) if k.startswith("precision"))
    print(f"evaluated {report.users_evaluated} users ({shown})")
    return 0


def _ranked_lists_for(ds, users, params, feats, cfg):
    """The exact per-user rankings evaluate() computes, in roster order."""
    ecfg = cfg.eval_config()
    out = []
    for idx, user_id in enumerate(sorted(users)):
        try:
            kept, held = split_records(ds, user_id, ecfg.holdout_fraction)
            rng = seeds.substream(ecfg.seed, "candidates", idx)
            cands = build_candidates(kept, held, ecfg.candidates_per_user, rng)
            visible = visible_dataset(ds, user_id, kept)
            out.append(
                rank_for_user(
                    visible, user_id, cands, params, feats,
                    cfg.graph_config(), cfg.model_config(),
                )
            )
        except (EvalError, GraphError):
            continue
    return out


def cmd_recommend(args: argparse.Namespace) -> int:
    cfg = _resolved(args)
    os.makedirs(args.out, exist_ok=True)
    ds, _ = _load_dataset(cfg)
    _, test_users = _splits(ds, cfg)
    params, feats = _load_trained(ds, cfg, args.checkpoint)
    lists = _ranked_lists_for(ds, test_users, params, feats, cfg)
    if args.users is not None:
        wanted = [u.strip() for u in args.users.split(",") if u.strip()]
        have = {r.user_id for r in lists}
        missing = sorted(set(wanted) - have)
        if missing:
            raise EvalError(f"no rankings for requested users: {', '.join(missing)}")
        lists = [r for r in lists if r.user_id in wanted]
    top_k = args.top_k
    path = os.path.join(args.out, "recommendations.csv")
    rows = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "rank", "video_id", "score"])
        for ranked in lists:
            for rank, vid in enumerate(ranked.videos[:top_k], start=1):
                s = ranked.scores[rank - 1] if ranked.scores else None
                writer.writerow(
                    [ranked.user_id, rank, vid, "" if s is None else repr(s)]
                )
                rows += 1
    write_report(
        {
            "config": cfg.to_dict(),
            "users": [r.user_id for r in lists],
            "rows": rows,
            "top_k": top_k,
        },
        os.path.join(args.out, "recommend_report.json"),
    )
    print(f"wrote {rows} recommendation rows for {len(lists)} users")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _resolved(args)
    os.makedirs(args.out, exist_ok=True)
    ds, _ = _load_dataset(cfg)
    train_users, test_users = _splits(ds, cfg)
    table_k = 10 if 10 in cfg.ks else max(cfg.ks)
    variants: dict[str, dict] = {}
    base_mcfg = cfg.model_config()
    for name in VARIANTS:
        mcfg = variant_config(base_mcfg, name)
        params, feats, _ = train(
            ds, train_users, cfg.graph_config(), mcfg, cfg.train_config()
        )
        report = evaluate(
            ds, test_users, params, feats, cfg.graph_config(), mcfg,
            cfg.eval_config(), threads=cfg.threads,
        )
        variants[name] = report.metrics["model"]
        print(
            f"{name}: precision@{table_k}={report.metrics['model'][f'precision@{table_k}']:.4f}"
        )
    write_report(
        {"config": cfg.to_dict(), "table_k": table_k, "variants": variants},
        os.path.join(args.out, "ablate_report.json"),
    )
    csv_path = os.path.join(args.out, "ablate.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["variant", f"precision@{table_k}", f"ndcg@{table_k}", f"c_timeliness@{table_k}"]
        )
        for name in VARIANTS:
            row = variants[name]
            ct = row[f"c_timeliness@{table_k}"]
            writer.writerow(
                [
                    name,
                    repr(row[f"precision@{table_k}"]),
                    repr(row[f"ndcg@{table_k}"]),
                    "" if ct is None else repr(ct),
                ]
            )
    print(f"ablation table with {len(VARIANTS)} variants in {csv_path}")
    return 0


# ------------------------------------------------------------------ parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hgsrec",
        description="Session-graph micro-video recommendation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, help="root random seed")
        p.add_argument("--threads", type=int, help="worker threads for evaluation")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--interactions", help="interactions CSV path")
        p.add_argument("--attributes", help="attributes CSV path")

    p = sub.add_parser("ingest", help="validate and canonicalise raw CSV data")
    common(p)
    p.add_argument("--ratings", help="star-rating CSV to convert first")
    p.add_argument("--engagement", help="like/finish flag CSV to convert first")
    p.add_argument("--rating-threshold", type=int, default=4,
                   help="stars above this are likes, below are noninteractions")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    common(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("evaluate", help="rank held-out candidates for test users")
    common(p)
    p.add_argument("--checkpoint", required=True, help="directory holding checkpoint files")
    p.add_argument("--k", help="comma-separated metric cutoffs, e.g. 1,5,10")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("recommend", help="export ranked candidates as CSV")
    common(p)
    p.add_argument("--checkpoint", required=True, help="directory holding checkpoint files")
    p.add_argument("--users", help="comma-separated user ids (default: all test users)")
    p.add_argument("--top-k", type=int, default=10, help="rows per user")
    p.set_defaults(handler=cmd_recommend)

    p = sub.add_parser("ablate", help="train and evaluate every model variant")
    common(p)
    p.set_defaults(handler=cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (cfgmod.ConfigError, ModelConfigError) as exc:
        print(f"config: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data: {exc}", file=sys.stderr)
        return 1
    except GraphError as exc:
        print(f"graph: {exc}", file=sys.stderr)
        return 1
    except (ModelError, ParamError) as exc:
        print(f"model: {exc}", file=sys.stderr)
        return 1
    except TrainError as exc:
        print(f"train: {exc}", file=sys.stderr)
        return 1
    except EvalError as exc:
        print(f"evaluate: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io: {exc}", file=sys.stderr)
        return 1
