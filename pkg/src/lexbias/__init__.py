"""lexbias: audit, test, and mitigate lexical feature-label bias.

Library layout mirrors the pipeline:

- corpus: dataset loading, tokenization, label distributions
- featstats: feature count tables, z-scores, selection, label balance
- reweight: simplex instance weighting via softmax-reparameterized
  least squares
- permtest: pooled usual/unusual-labels sets and the exact permutation
  test (log-space hypergeometric tail)
- probe: weighted bag-of-features logistic-regression classifier
- synth: planted-bias synthetic corpora
- cli: the `lexbias` command
"""

__version__ = "0.1.0"

from .corpus import (
    Dataset,
    DatasetSchema,
    Instance,
    InputError,
    LabelVocab,
    load_dataset,
    load_stop_words,
    overall_label_distribution,
    save_dataset,
    split_dataset,
    tokenize,
    token_stream,
)
from .featstats import (
    BalanceReport,
    FeatureId,
    FeatureStats,
    FeatureTable,
    bigram,
    build_feature_table,
    label_balance,
    restrict_table,
    sample_eligible_bigrams,
    select_top_features,
    unigram,
    z_score,
    z_score_matrix,
)
from .permtest import (
    PooledEval,
    TestResult,
    brute_force_p,
    exact_log_p,
    log10_hypergeom_tail,
    monte_carlo_p,
    pool,
    result_from_counts,
)
from .probe import AccuracyReport, ProbeModel, TrainConfig, evaluate, predict, train
from .reweight import (
    OptimizerConfig,
    ReweightReport,
    WeightVector,
    gradient,
    loss_multipliers,
    objective,
    optimize,
    residual_matrix,
)
from .synth import PlantedToken, SynthConfig, generate, heldout_split_with_coverage
