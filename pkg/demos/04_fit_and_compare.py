"""
Training with covariates, predicting from text
==============================================

Fit the pseudo-outcome learner (TCA) and the two text-only baselines on a
training set that has covariates, then score them on notes alone.
"""
from textcate.config import ExperimentConfig
from textcate.evaluation import pehe
from textcate.experiment import cell_data
from textcate.learners import fit_method

cfg = ExperimentConfig()
cell = cfg.cells()[0]
train, test = cell_data(cfg, cell, seed=0)
print(f"{len(train)} training records, {len(test)} test notes ({cell.label()})")
print("a test note:", test.texts[0])

for method in cfg.methods:
    model = fit_method(method, train, cfg.learner(cell, 0))
    pred, _ = model.predict(test.texts)
    print(f"{method:>6}  PEHE {pehe(pred, test.tau):.4f}")
