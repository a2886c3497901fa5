"""
Gene knockouts on a regulatory network
======================================

A random network of activating and suppressing edges is integrated to a
steady state. Knocking out one or two genes and integrating further gives the
targets. Single knockouts train the model; double knockouts test it.
"""

from coed.datagen import grn_perturbation_ensemble, grn_random
from coed.nn import CoEDModel, TrainConfig, evaluate, train

system = grn_random(n_genes=30, edge_prob=0.15, seed=0)
print("genes %d, edges %d" % (system.n_genes, system.n_edges))

ds = grn_perturbation_ensemble(system, n_doubles=100, seed=0)
print("splits:", ds.split_sizes(), "steady-state residual %.1e" % ds.metadata["steady_state_residual"])

for frozen in (False, True):
    model = CoEDModel(ds.graph, [1, 32, 32, 32, 32, 1], layerwise_theta=True, seed=0)
    cfg = TrainConfig(max_epochs=400, batch_size=8, patience=50, lr=1e-3, lr_theta=1e-2,
                      layerwise_theta=True, freeze_theta=frozen, seed=0)
    res = train(model, ds, cfg)
    print("%-8s test MSE %.4f" % ("frozen" if frozen else "learned", evaluate(res.model, ds, "test")))
