"""
The full command-line pipeline, end to end
==========================================

Drives every subcommand in order inside a scratch directory: ingest raw
star ratings, train, evaluate, produce per-user recommendations, and run
the ablation sweep. The same flow works from a shell with the installed
`hgsrec` executable; here the entry point is called in-process so the
script stays importable and quick.
"""

import json
import tempfile
from pathlib import Path

from hgsrec import synth
from hgsrec.cli import main

scratch = Path(tempfile.mkdtemp(prefix="hgsrec_demo_"))
print(f"working under {scratch}")

# A small rating world: five-star rows become likes, low stars become
# recorded non-interactions, and the single four-star rows are dropped
# by the default threshold.
world = synth.rating_groups(11, users=40, groups=2, videos_per_group=20,
                            fives_per_half=5, lows_per_half=8)
ratings = scratch / "ratings.csv"
attributes = scratch / "attributes.csv"
world.write_csv(str(ratings), str(attributes))

ingested = scratch / "ingested"
assert main(["ingest", "--ratings", str(ratings), "--attributes", str(attributes),
             "--out", str(ingested)]) == 0
report = json.loads((ingested / "ingest_report.json").read_text())
print(f"ingested {report['interactions']} records from {report['users']} users "
      f"(density {report['density']:.4%})")

# Everything downstream reads one flat key=value config. Flags override it.
cfg = scratch / "run.cfg"
cfg.write_text("\n".join([
    f"interactions = {ingested / 'interactions.csv'}",
    f"attributes = {ingested / 'attributes.csv'}",
    "embed_dim = 8",
    "lr = 0.01",
    "batch_size = 32",
    "epochs = 2",
    "relation_reg = 0.2",
    "l2_reg = 0.01",
    "sample_neighbors = 3",
    "candidates_per_user = 50",
    "ks = 5,10",
    "seed = 11",
]) + "\n")

run = scratch / "run"
assert main(["train", "--config", str(cfg), "--out", str(run)]) == 0
print(f"checkpoint written to {run}")

assert main(["evaluate", "--config", str(cfg), "--checkpoint", str(run),
             "--out", str(run)]) == 0
metrics = json.loads((run / "eval_report.json").read_text())["metrics"]
print("model    ", metrics["model"])
print("popularity", metrics["popularity"])

# recommend reuses the evaluation ranking, so the CSV ordering matches
# what the metrics above were computed from.
assert main(["recommend", "--config", str(cfg), "--checkpoint", str(run),
             "--out", str(run), "--top-k", "3"]) == 0
lines = (run / "recommendations.csv").read_text().splitlines()
print(f"\nrecommendations ({len(lines) - 1} rows):")
for line in lines[:7]:
    print("  " + line)

# One trained model per architecture variant, on a shared split.
ablate = scratch / "ablate"
assert main(["ablate", "--config", str(cfg), "--out", str(ablate)]) == 0
print("\nablation table:")
for line in (ablate / "ablate.csv").read_text().splitlines():
    print("  " + line)
