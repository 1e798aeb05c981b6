"""
Auditing a labeled corpus for lexical feature-label bias
========================================================

Builds a synthetic two-label corpus in which a handful of planted
tokens co-occur with one label 90% of the time, then walks the audit:
count tables, conditional label distributions, z-scores, top-feature
selection, and the aggregate label-balance error.
"""

import numpy as np

from lexbias import (
    PlantedToken,
    SynthConfig,
    build_feature_table,
    generate,
    label_balance,
    select_top_features,
    z_score_matrix,
)

# A corpus with 4000 instances: 60 background tokens that carry no label
# signal, plus 6 planted tokens skewed 90/10 toward a target label.
cfg = SynthConfig(
    n_instances=4000,
    n_labels=2,
    background_vocab_size=60,
    planted=tuple(PlantedToken("planted%d" % i, i % 2, 0.9, 400) for i in range(6)),
    tokens_per_instance=8,
    seed=7,
)
data = generate(cfg)
print("corpus: %d instances, labels %s, overall distribution %s" % (
    data.n, data.label_vocab.labels, np.round(data.overall_dist, 3)))

# Per-feature counts. min_count and the all-labels requirement mirror
# the eligibility rules used for reweighting.
table = build_feature_table(data, "unigram", min_count=100, require_all_labels=True)
print("\n%d eligible unigram features" % table.n_features)

# Conditional label distributions for a planted and a background token.
for name in ("planted0", "w0000"):
    j = [f.key[0] for f in table.features].index(name)
    print("  p(labels | %-8s) = %s   (doc count %d)" % (
        name, np.round(table.cond_dist(j), 3), table.doc_count[j]))

# z-scores rank how surprising each feature-label association is under
# the overall label distribution.
Z = z_score_matrix(table, data.overall_dist)
top = np.argsort(-Z.max(axis=1))[:8]
print("\nhighest-association features by z-score:")
for j in top:
    f = table.features[j]
    print("  %-10s z=%6.1f usual label=%s" % (
        f.text, Z[j].max(), data.label_vocab.labels[int(Z[j].argmax())]))

# Top-k-per-label selection deduplicates features chosen for more than
# one label; each keeps its argmax-z usual label.
selected = select_top_features(table, data.overall_dist, k=5)
print("\ntop-5-per-label selection (%d distinct features):" % len(selected))
print("  " + ", ".join(s.feature.text for s in selected))

# The aggregate balance error: mean absolute deviation of every
# feature's conditional label distribution from the uniform target.
report = label_balance(table)
print("\naggregate label-balance error (uniform reference): %.4f" %
      report.aggregate_err)
planted_err = np.mean([
    report.per_feature[f] for f in table.features if f.key[0].startswith("planted")
])
background_err = np.mean([
    report.per_feature[f] for f in table.features if f.key[0].startswith("w")
])
print("  planted features average:    %.4f" % planted_err)
print("  background features average: %.4f" % background_err)
