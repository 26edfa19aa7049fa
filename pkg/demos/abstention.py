"""Compare the score band with the misclassification-gate approach on held-out data.

Both abstain on a share of subjects; the question is how accurate the
remaining decisions are at a matched abstention rate.
"""

import numpy as np

from asdscreen import (CVConfig, EncodingSpec, ForestParams, SyntheticSpec, balance_weights,
                       bootstrapped_cv, calibrate_band, encode, generate_synthetic, meta_inconclusive,
                       train_forest)
from asdscreen.evaluation import forest_trainer
from asdscreen.pipeline import band_metrics
from asdscreen.pipeline.bands import INCONCLUSIVE, POSITIVE

data = generate_synthetic(SyntheticSpec(n_questions=40, n_informative=8, n_samples=3000, noise_rate=0.6,
                                        seed=1))
full = encode(data, EncodingSpec.for_instrument("adir_like").subset(data.question_ids), "severity")
idx = np.random.default_rng(1).permutation(len(data))


def part(rows):
    m = full.subset(np.sort(rows))
    return m.with_weights(balance_weights(m).weights)


train, held = part(idx[:1500]), part(idx[1500:])
params, cv = ForestParams(n_trees=100), CVConfig(5, 2)
oof = bootstrapped_cv(train, cv, forest_trainer(params)).mean_oof()
scores = train_forest(train, params).predict_score(held)
y, w = held.labels, held.weights

print("cap   rate   conclusive accuracy")
for cap in (0.0, 0.1, 0.2, 0.3, 0.4):
    m = band_metrics(calibrate_band(oof, train.labels, train.weights, cap), scores, y, w)
    print(f"{cap:.1f}  {m['inconclusive_rate']:.3f}  {m['conclusive_accuracy']:.3f}")

meta = meta_inconclusive(train, params, cv, 0.25)
d = meta.decide(held)
inc = d == INCONCLUSIVE
rate = w[inc].sum() / w.sum()
acc = w[~inc & ((d == POSITIVE) == (y == 1))].sum() / w[~inc].sum()
band = band_metrics(calibrate_band(oof, train.labels, train.weights, rate), scores, y, w)
print(f"\ngate   rate {rate:.3f}  accuracy {acc:.3f}")
print(f"band   rate {band['inconclusive_rate']:.3f}  accuracy {band['conclusive_accuracy']:.3f}")
