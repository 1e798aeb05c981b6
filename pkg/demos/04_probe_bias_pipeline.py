"""
Does data bias become model bias? The full pipeline
===================================================

Trains a bag-of-features logistic-regression probe on a planted-bias
corpus twice: once with uniform instance weights, once with weights
solved to balance the unigram features. The pooled permutation test on
a held-out split then quantifies how much of the data's lexical bias
each probe absorbed.
"""

import numpy as np

from lexbias import (
    OptimizerConfig,
    PlantedToken,
    SynthConfig,
    TrainConfig,
    build_feature_table,
    exact_log_p,
    generate,
    heldout_split_with_coverage,
    loss_multipliers,
    optimize,
    pool,
    predict,
    select_top_features,
    train,
)

cfg = SynthConfig(
    n_instances=10_000,
    n_labels=2,
    background_vocab_size=120,
    planted=tuple(PlantedToken("planted%02d" % i, i % 2, 0.9, 450) for i in range(30)),
    tokens_per_instance=9,
    seed=101,
)
full = generate(cfg)
train_set, heldout = heldout_split_with_coverage(
    full, 0.1, seed=3, required_tokens=[p.token for p in cfg.planted]
)
print("train %d / heldout %d instances" % (train_set.n, heldout.n))

# Features for the bias evaluation: top-k per label by z-score in the
# training data. With 15 per label the genuinely planted tokens
# saturate the list; a larger k would pad it with noise-level
# background tokens and dilute the pooled sets.
selection_table = build_feature_table(train_set, "unigram")
selected = select_top_features(selection_table, train_set.overall_dist, k=15)
n_planted = sum(1 for s in selected if s.feature.key[0].startswith("planted"))
print("selected %d features (%d planted)" % (len(selected), n_planted))

tcfg = TrainConfig(epochs=30, batch_size=256, step_size=0.5, seed=17)


def bias_test(model, tag):
    preds = predict(model, heldout)
    result = exact_log_p(pool(heldout, selected, preds))
    print("%-22s ACC(U)=%.3f ACC(N)=%.3f  log10 p=%8.2f" % (
        tag, result.acc_U, result.acc_N, result.log10_p))
    return result


# --- probe trained on the data as-is ---------------------------------
uniform_model = train(train_set, None, tcfg)
r_uniform = bias_test(uniform_model, "uniform weighting:")

# --- rebalance, then retrain with the solved loss multipliers ---------
table = build_feature_table(train_set, "unigram", min_count=100,
                            require_all_labels=True)
w, report = optimize(
    train_set, table, np.array([0.5, 0.5]),
    OptimizerConfig(max_steps=2500, tolerance=1e-12),
)
print("\nreweighting: Err %.4f -> %.2e" % (report.err_before, report.err_after))

adjusted_model = train(train_set, loss_multipliers(w), tcfg)
r_adjusted = bias_test(adjusted_model, "adjusted weighting:")

print("\nbias evidence weakened by %.1f orders of magnitude"
      % (r_adjusted.log10_p - r_uniform.log10_p))
if r_adjusted.log10_p <= -10:
    print("strong bias evidence persists even after rebalancing")
else:
    print("no strong bias evidence remains on this synthetic corpus "
          "(natural-language corpora behave differently: higher-order "
          "feature correlations survive unigram rebalancing)")
