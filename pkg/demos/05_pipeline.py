"""End to end on a synthetic SBM: full model against the pooling-only ablation.

Runs are small so the script finishes in well under a minute.  Everything a
run produces (manifest, checkpoints, timings) lands in a temporary directory.
"""
import json
import tempfile
from pathlib import Path

from padel.pipeline import RunConfig, evaluate, export_embeddings, load_bundle, run_pipeline, timing_report
from padel.synthetic import make_synthetic

work = Path(tempfile.mkdtemp())

edges, subgraphs = make_synthetic("sbm", work / "data", num_nodes=100, num_subgraphs=40, subgraph_size=5)

base = RunConfig()
base.data.edge_file, base.data.subgraph_file = str(edges), str(subgraphs)
base.model.dim, base.model.pca_dim, base.model.pool_dim = 16, 32, 32
base.vsubgae.epochs, base.contrast.epochs = 20, 10
base.train.max_epochs, base.train.patience = 200, 50

for name in ("C0", "C7"):
    run_dir = work / name
    manifest = run_pipeline(base.with_ablation(name), run_dir, cache_dir=work / "cache")
    print(name, "stages:", sorted(manifest["stages"]), "metrics:", manifest["metrics"])

print(timing_report(json.loads((work / "C7" / "timings.json").read_text())))

bundle = load_bundle(base)
report = evaluate(work / "C7" / "model.ckpt", bundle, "test")
for row in report["per_class"]:
    print(row)
n = export_embeddings(work / "C7" / "model.ckpt", bundle, work / "embeddings.tsv")
print(f"{n} embedding rows written to {work / 'embeddings.tsv'}")
