"""
Rebalancing a dataset by reweighting its instances
==================================================

Finds a probability vector q over training instances that drives every
eligible feature's weighted conditional label distribution toward the
uniform target, by minimizing the sum of squared constraint residuals
under a softmax reparameterization (so no simplex constraints are
needed). Also measures the side effect the optimization does NOT
control: what happens to bigram balance when only unigrams are
rebalanced.
"""

import numpy as np

from lexbias import (
    OptimizerConfig,
    PlantedToken,
    SynthConfig,
    build_feature_table,
    generate,
    label_balance,
    loss_multipliers,
    objective,
    optimize,
    restrict_table,
    sample_eligible_bigrams,
)
from lexbias.corpus import Dataset, LabelVocab, make_instance

# --- the 4-instance toy with a known analytic solution ---------------
# Feature "f" appears in instances 0,1,2 with labels A,A,B; instance 3
# has no "f". Any q with q0+q1 = q2 balances the feature exactly.
vocab = LabelVocab(("A", "B"))
toy = Dataset(
    [
        make_instance(0, ("f",), 0),
        make_instance(1, ("f",), 0),
        make_instance(2, ("f",), 1),
        make_instance(3, ("g",), 1),
    ],
    vocab,
)
table = build_feature_table(toy, "unigram", min_count=2)
target = np.array([0.5, 0.5])
w, report = optimize(toy, table, target)
print("toy: Err %.4f -> %.2e in %d steps (converged=%s)" % (
    report.err_before, report.err_after, report.n_steps, report.converged))
print("  solved q = %s" % np.round(w.q, 4))
print("  loss multipliers q_i*n = %s" % np.round(loss_multipliers(w), 3))

# --- a planted-bias corpus at a more realistic size ------------------
cfg = SynthConfig(
    n_instances=8000,
    n_labels=2,
    background_vocab_size=100,
    planted=tuple(PlantedToken("planted%02d" % i, i % 2, 0.9, 400) for i in range(20)),
    tokens_per_instance=9,
    seed=31,
)
data = generate(cfg)
uni_table = build_feature_table(data, "unigram", min_count=100,
                                require_all_labels=True)
print("\nplanted corpus: %d instances, %d eligible unigram features"
      % (data.n, uni_table.n_features))

w, report = optimize(
    data, uni_table, target, OptimizerConfig(max_steps=2500, tolerance=1e-12)
)
print("unigram Err(uniform)  = %.4f" % report.err_before)
print("unigram Err(adjusted) = %.2e" % report.err_after)
print("objective %.3e -> %.3e over %d steps" % (
    report.objective_trace[0], min(report.objective_trace), report.n_steps))
print("weight range: %.3f to %.3f x uniform" % (
    loss_multipliers(w).min(), loss_multipliers(w).max()))

# sanity: the objective at the returned point never exceeds uniform
print("objective(returned) <= objective(uniform):",
      objective(w, uni_table, target) <= report.objective_trace[0])

# --- the side effect on bigrams --------------------------------------
# The solve above constrained unigrams only. Measure 200 randomly
# sampled eligible bigrams (those occurring with every label) under the
# same q: their balance is free to move, and often moves the wrong way.
big_table = build_feature_table(data, "bigram", min_count=2)
sampled = sample_eligible_bigrams(big_table, 200, seed=5)
scope = restrict_table(big_table, sampled)
before = label_balance(scope, reference=target).aggregate_err
after = label_balance(scope, weights=w.q, reference=target).aggregate_err
print("\nbigram Err over 200 sampled eligible bigrams:")
print("  uniform weights:  %.4f" % before)
print("  adjusted weights: %.4f  (%s)" % (
    after, "worsened" if after > before else "improved"))
