"""Walk the variant ladder on age-shifted synthetic data and print CV AUCs.

Run: python demos/ladder.py   (about 20 seconds on one core)
"""

from asdscreen import (CVConfig, ForestParams, PipelineConfig, SelectionConfig, SyntheticSpec,
                       generate_synthetic, train_ladder)

data = generate_synthetic(SyntheticSpec(n_samples=1000, noise_rate=0.5, age_signal_shift=1.0, seed=1))
cfg = PipelineConfig(forest=ForestParams(n_trees=100), selection=SelectionConfig(n_bootstrap=20),
                     cv=CVConfig(n_folds=5, n_bootstrap_rounds=3))

results = train_ladder(data, cfg)
for name, res in results.items():
    print(f"{name:>12s}  AUC {res.mean_auc:.3f}")
