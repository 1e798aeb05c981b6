"""Command-line surface for the lexical-bias audit pipeline.

Subcommands: synth, stats, select-features, reweight, permtest, probe.
Every command takes --out <dir>, --seed, and --config <file> (flat
key=value lines whose keys are the long flag names without the leading
dashes; explicit flags override config values). Exit codes: 0 success,
1 internal numerical failure, 2 input/config error.

Each run writes a manifest.json carrying the resolved options, input
digests, tool version, run id, and timestamps. Data outputs embed the
deterministic run id (never timestamps), so reruns with identical
inputs, flags, and seeds are byte-identical.
"""

import argparse
import csv
import datetime
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, corpus, featstats, permtest, probe, reweight, synth
from .corpus import DatasetSchema, InputError


def _bool(text):
    value = str(text).strip().lower()
    if value in ("true", "1", "yes"):
        return True
    if value in ("false", "0", "no"):
        return False
    raise InputError("expected true/false, got %r" % text)


def load_config_file(path):
    """Flat key=value lines; '#' starts a comment; keys use the long
    flag spelling without dashes (e.g. min-count=100)."""
    options = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InputError(
                    "%s line %d: expected key=value" % (path, lineno)
                )
            key, _, value = line.partition("=")
            options[key.strip()] = value.strip()
    return options


class Opt:
    def __init__(self, flag, type, default, help):
        self.flag = flag
        self.type = type
        self.default = default
        self.help = help

    @property
    def key(self):
        return self.flag.lstrip("-")

    @property
    def dest(self):
        return self.key.replace("-", "_")


DATA_OPTS = [
    Opt("--format", str, "jsonl", "dataset file format: jsonl or tsv"),
    Opt("--text-fields", str, "text", "comma-separated text field name(s), 1 or 2"),
    Opt("--label-field", str, "label", "label field name"),
    Opt("--labels", str, None, "comma-separated explicit label order"),
    Opt("--keep-punctuation", _bool, False, "keep punctuation characters when tokenizing"),
]

COMMON_OPTS = [
    Opt("--seed", int, 0, "random seed"),
]

COMMANDS = {
    "synth": [
        Opt("--n-instances", int, 1000, "number of instances"),
        Opt("--n-labels", int, 2, "number of labels"),
        Opt("--background-vocab-size", int, 100, "background vocabulary size"),
        Opt("--tokens-per-instance", int, 10, "background tokens per instance"),
        Opt("--planted-count", int, 0, "number of auto-named planted tokens"),
        Opt("--skew", float, 0.9, "target-label fraction for auto-planted tokens"),
        Opt("--occurrences", int, 100, "instance count per auto-planted token"),
        Opt("--planted-file", str, None,
            "CSV with header token,target_label,skew,occurrences"),
        Opt("--heldout-fraction", float, 0.0,
            "when > 0, write train.jsonl/heldout.jsonl instead of corpus.jsonl"),
        Opt("--min-heldout-occurrences", int, 5,
            "required held-out occurrences of each planted token"),
    ] + COMMON_OPTS,
    "stats": [
        Opt("--data", str, None, "input dataset file"),
        Opt("--kind", str, "unigram", "feature kind: unigram or bigram"),
        Opt("--min-count", int, 1, "minimum feature document count"),
        Opt("--require-all-labels", _bool, False,
            "keep only features occurring with every label"),
        Opt("--stop-words", str, "none", "builtin, none, or a stop-word file"),
        Opt("--reference", str, "uniform",
            "balance reference: uniform or empirical"),
        Opt("--sample", int, None,
            "sample this many eligible bigrams and report balance over them"),
    ] + DATA_OPTS + COMMON_OPTS,
    "select-features": [
        Opt("--data", str, None, "input dataset file"),
        Opt("--kind", str, "unigram", "feature kind: unigram or bigram"),
        Opt("--k", int, 50, "features per label"),
        Opt("--min-count", int, 1, "minimum feature document count"),
        Opt("--stop-words", str, "builtin", "builtin, none, or a stop-word file"),
        Opt("--null", str, "empirical", "z-score null: empirical or uniform"),
    ] + DATA_OPTS + COMMON_OPTS,
    "reweight": [
        Opt("--data", str, None, "input dataset file"),
        Opt("--kind", str, "unigram", "feature kind to balance"),
        Opt("--min-count", int, 100, "minimum feature document count"),
        Opt("--require-all-labels", _bool, True,
            "keep only features occurring with every label"),
        Opt("--stop-words", str, "none", "builtin, none, or a stop-word file"),
        Opt("--target", str, "uniform", "target distribution: uniform or empirical"),
        Opt("--max-steps", int, 5000, "optimizer step budget"),
        Opt("--step-size", float, 0.1, "optimizer base step size"),
        Opt("--tolerance", float, 0.0, "stop when objective falls below this"),
    ] + DATA_OPTS + COMMON_OPTS,
    "permtest": [
        Opt("--eval-data", str, None, "evaluation dataset file"),
        Opt("--features", str, None, "feature stats CSV (from select-features)"),
        Opt("--predictions", str, None, "predictions CSV or JSONL"),
        Opt("--k", int, None, "re-restrict to top-k features per label"),
    ] + DATA_OPTS + COMMON_OPTS,
    "probe": [
        Opt("--train-data", str, None, "training dataset file"),
        Opt("--eval-data", str, None, "evaluation dataset file"),
        Opt("--weights", str, None, "weights CSV from reweight (optional)"),
        Opt("--epochs", int, 30, "training epochs"),
        Opt("--batch-size", int, 256, "mini-batch size"),
        Opt("--step-size", float, 0.5, "base learning rate"),
        Opt("--l2", float, 1e-4, "L2 penalty strength"),
    ] + DATA_OPTS + COMMON_OPTS,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lexbias",
        description="Audit, test, and mitigate lexical feature-label bias.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", default=None, help="flat key=value config file")
        for opt in opts:
            p.add_argument(opt.flag, type=str, default=None, help=opt.help)
    return parser


def resolve_options(args, opts):
    """Flag > config file > default, with per-option type conversion."""
    config = load_config_file(args.config) if args.config else {}
    unknown = set(config) - {opt.key for opt in opts}
    if unknown:
        raise InputError("unknown config key(s): %s" % ", ".join(sorted(unknown)))
    resolved = {}
    for opt in opts:
        raw = getattr(args, opt.dest)
        if raw is None:
            raw = config.get(opt.key)
        if raw is None:
            resolved[opt.dest] = opt.default
        else:
            try:
                resolved[opt.dest] = opt.type(raw)
            except (TypeError, ValueError) as exc:
                raise InputError("bad value for --%s: %s" % (opt.key, exc))
    return resolved


class RunContext:
    """Paths, input digests, the deterministic run id, and the manifest."""

    def __init__(self, command, out_dir, options, input_paths):
        self.command = command
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.options = options
        self.started = _now()
        self.inputs = {}
        for role, path in input_paths.items():
            if path is None:
                continue
            self.inputs[role] = {"path": str(path), "sha256": _digest(path)}
        payload = {
            "command": command,
            "version": __version__,
            "options": {
                k: v for k, v in sorted(options.items())
                if not _is_path_option(k)
            },
            "inputs": {role: info["sha256"] for role, info in self.inputs.items()},
        }
        self.run_id = hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode()
        ).hexdigest()[:16]
        self.outputs = []

    def path(self, name):
        self.outputs.append(name)
        return self.out_dir / name

    def write_manifest(self):
        manifest = {
            "command": self.command,
            "options": self.options,
            "inputs": self.inputs,
            "outputs": {
                name: _digest(self.out_dir / name) for name in self.outputs
            },
            "tool_version": __version__,
            "run_id": self.run_id,
            "seed": self.options.get("seed"),
            "started_at": self.started,
            "finished_at": _now(),
        }
        with open(self.out_dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


def _is_path_option(key):
    return key in (
        "data", "train_data", "eval_data", "weights", "features",
        "predictions", "planted_file",
    )


def _schema_from(options):
    fields = tuple(f.strip() for f in options["text_fields"].split(",") if f.strip())
    labels = None
    if options["labels"]:
        labels = tuple(s.strip() for s in options["labels"].split(","))
    return DatasetSchema(fields, options["label_field"], labels)


def _load_data(options, path_key="data"):
    path = options[path_key]
    if not path:
        raise InputError("--%s is required" % path_key.replace("_", "-"))
    return corpus.load_dataset(
        path,
        format=options["format"],
        schema=_schema_from(options),
        strip_punctuation=not options["keep_punctuation"],
    )


def _stop_words(options):
    choice = options["stop_words"]
    if choice == "none":
        return set()
    if choice == "builtin":
        return corpus.load_stop_words()
    return corpus.load_stop_words(choice)


def _reference(name, d):
    if name == "uniform":
        return np.full(len(d.label_vocab), 1.0 / len(d.label_vocab))
    if name == "empirical":
        return d.overall_dist
    raise InputError("unknown reference/target %r" % name)


def _write_balance_csv(report, features, path, run_id):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# run_id=%s\n" % run_id)
        writer = csv.writer(fh)
        writer.writerow(["kind", "key", "balance"])
        for fid in features:
            if fid in report.per_feature:
                writer.writerow([fid.kind, fid.text, repr(report.per_feature[fid])])


# ---------------------------------------------------------------------------
# Commands

def cmd_synth(options, ctx):
    if options["planted_file"]:
        planted = []
        with open(options["planted_file"], encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(
                row for row in fh if not row.startswith("#")
            )
            for row in reader:
                planted.append(synth.PlantedToken(
                    token=row["token"],
                    target_label=int(row["target_label"]),
                    skew=float(row["skew"]),
                    occurrences=int(row["occurrences"]),
                ))
    else:
        planted = [
            synth.PlantedToken(
                token="planted%03d" % i,
                target_label=i % options["n_labels"],
                skew=options["skew"],
                occurrences=options["occurrences"],
            )
            for i in range(options["planted_count"])
        ]
    cfg = synth.SynthConfig(
        n_instances=options["n_instances"],
        n_labels=options["n_labels"],
        background_vocab_size=options["background_vocab_size"],
        planted=tuple(planted),
        tokens_per_instance=options["tokens_per_instance"],
        seed=options["seed"],
    )
    d = synth.generate(cfg)
    if options["heldout_fraction"] > 0:
        train, held = synth.heldout_split_with_coverage(
            d, options["heldout_fraction"], options["seed"],
            required_tokens=[p.token for p in cfg.planted],
            min_occurrences=options["min_heldout_occurrences"],
        )
        corpus.save_dataset(train, ctx.path("train.jsonl"))
        corpus.save_dataset(held, ctx.path("heldout.jsonl"))
    else:
        corpus.save_dataset(d, ctx.path("corpus.jsonl"))
    synth.save_config_json(cfg, ctx.path("synth_config.json"), run_id=ctx.run_id)
    return 0


def cmd_stats(options, ctx):
    d = _load_data(options)
    table = featstats.build_feature_table(
        d, options["kind"],
        min_count=options["min_count"],
        require_all_labels=options["require_all_labels"],
        stop_words=_stop_words(options),
    )
    reference = _reference(options["reference"], d)
    featstats.write_feature_table_csv(
        table, ctx.path("feature_table.csv"), run_id=ctx.run_id
    )
    scope = table
    if options["sample"] is not None:
        sampled = featstats.sample_eligible_bigrams(
            table, options["sample"], options["seed"]
        )
        scope = featstats.restrict_table(table, sampled)
        with open(ctx.path("sampled_bigrams.csv"), "w", encoding="utf-8",
                  newline="") as fh:
            fh.write("# run_id=%s\n" % ctx.run_id)
            writer = csv.writer(fh)
            writer.writerow(["kind", "key"])
            for fid in sampled:
                writer.writerow([fid.kind, fid.text])
    report = featstats.label_balance(scope, reference=reference)
    _write_balance_csv(report, scope.features, ctx.path("balance.csv"), ctx.run_id)
    payload = {
        "aggregate_err": report.aggregate_err,
        "excluded_features": report.excluded,
        "n_features": scope.n_features,
        "reference": options["reference"],
        "reference_dist": [float(t) for t in report.target],
        "kind": options["kind"],
        "run_id": ctx.run_id,
    }
    with open(ctx.path("balance_report.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def cmd_select_features(options, ctx):
    d = _load_data(options)
    table = featstats.build_feature_table(
        d, options["kind"],
        min_count=options["min_count"],
        stop_words=_stop_words(options),
    )
    if options["null"] not in ("empirical", "uniform"):
        raise InputError("unknown --null %r" % options["null"])
    null = _reference(options["null"], d)
    selected = featstats.select_top_features(table, null, options["k"])
    featstats.write_feature_stats_csv(
        selected, d.label_vocab.labels, ctx.path("feature_stats.csv"),
        run_id=ctx.run_id,
    )
    return 0


def cmd_reweight(options, ctx):
    d = _load_data(options)
    table = featstats.build_feature_table(
        d, options["kind"],
        min_count=options["min_count"],
        require_all_labels=options["require_all_labels"],
        stop_words=_stop_words(options),
    )
    target = _reference(options["target"], d)
    cfg = reweight.OptimizerConfig(
        max_steps=options["max_steps"],
        step_size=options["step_size"],
        tolerance=options["tolerance"],
        seed=options["seed"],
    )
    w, report = reweight.optimize(d, table, target, cfg)
    obj = reweight.objective(w, table, target)
    reweight.write_weights_csv(
        w, ctx.path("weights.csv"), target, obj,
        report.err_before, report.err_after, run_id=ctx.run_id,
    )
    reweight.write_report_json(
        report, cfg, ctx.path("reweight_report.json"), run_id=ctx.run_id
    )
    with open(ctx.path("objective_trace.csv"), "w", encoding="utf-8",
              newline="") as fh:
        fh.write("# run_id=%s\n" % ctx.run_id)
        writer = csv.writer(fh)
        writer.writerow(["step", "objective"])
        for step, value in enumerate(report.objective_trace, start=1):
            writer.writerow([step, repr(value)])
    # per-feature balance before/after, the scatter-plot data series
    before = featstats.label_balance(table, reference=target)
    after = featstats.label_balance(table, weights=w.q, reference=target)
    with open(ctx.path("balance_scatter.csv"), "w", encoding="utf-8",
              newline="") as fh:
        fh.write("# run_id=%s\n" % ctx.run_id)
        writer = csv.writer(fh)
        writer.writerow(["kind", "key", "balance_uniform", "balance_weighted"])
        for fid in table.features:
            if fid in before.per_feature and fid in after.per_feature:
                writer.writerow([
                    fid.kind, fid.text,
                    repr(before.per_feature[fid]), repr(after.per_feature[fid]),
                ])
    return 0


def cmd_permtest(options, ctx):
    if not options["features"]:
        raise InputError("--features is required")
    if not options["predictions"]:
        raise InputError("--predictions is required")
    d = _load_data(options, "eval_data")
    selected, label_names = featstats.read_feature_stats_csv(options["features"])
    if set(label_names) != set(d.label_vocab.labels):
        raise InputError(
            "feature stats labels %r do not match evaluation labels %r"
            % (label_names, d.label_vocab.labels)
        )
    # align the evaluation data with the stats file's label order
    d = corpus.relabel(d, corpus.LabelVocab(label_names))
    if options["k"] is not None:
        chosen = set()
        for y in range(len(label_names)):
            order = sorted(
                selected, key=lambda s: (-s.z_scores[y], s.feature.key)
            )
            chosen.update(s.feature for s in order[: options["k"]])
        selected = [s for s in selected if s.feature in chosen]
    preds = permtest.read_predictions(options["predictions"], d.label_vocab)
    pooled = permtest.pool(d, selected, preds)
    result = permtest.exact_log_p(pooled)
    permtest.write_result_json(
        result, ctx.path("permtest_result.json"),
        selection_config={
            "features_file": str(options["features"]),
            "n_features": len(selected),
            "k": options["k"],
        },
        run_id=ctx.run_id,
    )
    return 0


def cmd_probe(options, ctx):
    train_data = _load_data(options, "train_data")
    eval_data = _load_data(options, "eval_data")
    if set(train_data.label_vocab.labels) != set(eval_data.label_vocab.labels):
        raise InputError("train/eval label vocabularies differ")
    eval_data = corpus.relabel(eval_data, train_data.label_vocab)
    multipliers = None
    if options["weights"]:
        ids, _, mult, _ = reweight.read_weights_csv(options["weights"])
        by_id = dict(zip(ids.tolist(), mult.tolist()))
        missing = [inst.id for inst in train_data.instances if inst.id not in by_id]
        if missing:
            raise InputError(
                "weights file lacks instance id(s) %s"
                % ", ".join(str(i) for i in missing[:5])
            )
        multipliers = np.array([by_id[inst.id] for inst in train_data.instances])
    cfg = probe.TrainConfig(
        epochs=options["epochs"],
        batch_size=options["batch_size"],
        step_size=options["step_size"],
        l2_strength=options["l2"],
        seed=options["seed"],
    )
    model = probe.train(train_data, multipliers, cfg)
    probe.save_model(model, ctx.path("model.json"), run_id=ctx.run_id)
    preds = probe.predict(model, eval_data)
    permtest.write_predictions(
        preds, eval_data.label_vocab.labels, ctx.path("predictions.csv"),
        run_id=ctx.run_id,
    )
    train_report = probe.evaluate(model, train_data)
    eval_report = probe.evaluate(model, eval_data)
    payload = {
        "train": {
            "accuracy": train_report.accuracy,
            "per_label": train_report.per_label,
            "n": train_report.n,
        },
        "eval": {
            "accuracy": eval_report.accuracy,
            "per_label": eval_report.per_label,
            "n": eval_report.n,
        },
        "run_id": ctx.run_id,
    }
    with open(ctx.path("accuracy_report.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


DISPATCH = {
    "synth": (cmd_synth, ()),
    "stats": (cmd_stats, ("data",)),
    "select-features": (cmd_select_features, ("data",)),
    "reweight": (cmd_reweight, ("data",)),
    "permtest": (cmd_permtest, ("eval_data", "features", "predictions")),
    "probe": (cmd_probe, ("train_data", "eval_data", "weights")),
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    command = args.command
    handler, input_roles = DISPATCH[command]
    try:
        options = resolve_options(args, COMMANDS[command])
        input_paths = {}
        for role in input_roles:
            path = options.get(role)
            if path:
                if not Path(path).exists():
                    raise InputError("input file not found: %s" % path)
                input_paths[role] = path
        if command == "synth" and options.get("planted_file"):
            input_paths["planted_file"] = options["planted_file"]
        stops = options.get("stop_words")
        if stops and stops not in ("builtin", "none"):
            if not Path(stops).exists():
                raise InputError("stop-word file not found: %s" % stops)
            input_paths["stop_words"] = stops
        ctx = RunContext(command, args.out, options, input_paths)
        code = handler(options, ctx)
        ctx.write_manifest()
        return code
    except FileNotFoundError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except InputError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except ValueError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except (FloatingPointError, OverflowError, ZeroDivisionError) as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return 1


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
