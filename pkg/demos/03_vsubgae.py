"""Variational subgraph autoencoder pretraining on a toy SBM.

Subgraphs are randomly grown by one hop, encoded with a two-layer GCN into
Gaussian latents, and decoded with sigmoid(z z^T).  The loss is the
negated beta-ELBO.
"""
import tempfile

import numpy as np

from padel import tensor as T
from padel.graph import load_dataset
from padel.pipeline import RunConfig, build_model, stream, vsubgae_step_loss
from padel.position import PositionTable, preprocess
from padel.synthetic import make_synthetic
from padel.tensor import Tape
from padel.vsubgae import decode, normalize_adjacency, pooled_reconstruction_auc

with tempfile.TemporaryDirectory() as d:
    bundle = load_dataset(*make_synthetic("sbm", d, num_nodes=30, num_subgraphs=10, subgraph_size=6))

cfg = RunConfig()
cfg.model.dim, cfg.model.pca_dim = 8, 16
table = PositionTable(preprocess(bundle.graph, 16).reduced, 8, stream(0, "wp"))
model = build_model(cfg, bundle, table)
vs = model.vsubgae
opt = T.AdamW([vs.X] + vs.encoder_params(), lr=1e-2, weight_decay=1e-2)
rng = stream(0, "vsubgae")

for step in range(300):
    with Tape() as tape:
        loss = vsubgae_step_loss(model, bundle, bundle.subgraphs, 0.2, 0.5, 128, rng)
        grads = tape.backward(loss)
    opt.step(grads)
    if step % 50 == 0:
        print(f"step {step:3d}  loss {loss.item():.4f}")

# reconstruct the original subgraphs with the posterior mean
dense = bundle.graph.to_dense()
probs, adjs = [], []
for rec in bundle.subgraphs:
    ids = np.asarray(rec.node_ids)
    A = dense[np.ix_(ids, ids)]
    feats = T.concat_cols(T.gather_rows(vs.X, ids), table.rows_for(ids))
    z = vs.encode(feats, normalize_adjacency(A), np.zeros((ids.size, 16))).z
    probs.append(decode(z).data)
    adjs.append(A)
print("edge reconstruction AUC:", round(pooled_reconstruction_auc(probs, adjs), 3))
