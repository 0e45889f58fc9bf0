"""Command-line pipeline driver.

Subcommands cover the whole workflow: ``ingest`` splits and caches a
corpus, ``train-embeddings`` and ``train-scorer`` fit the two stages,
``evaluate`` reports metrics, ``visualize`` renders token heatmaps,
``search`` runs seeded random hyperparameter search, and ``synth``
generates the synthetic fixtures. Every flag mirrors a config key;
``--config`` (or the ESSAYSCORE_CONFIG environment variable) names a
``key = value`` file applied underneath the flags.

Exit codes: 0 success, 1 usage or config error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import config as cfgmod
from . import corpus as corpusmod
from . import lstm as lstmmod
from . import metrics as metricsmod
from . import saliency as salmod
from . import sswe as sswemod
from . import synth as synthmod
from .errors import ConfigError, DataError, EssayScoreError, NumericalError

ENV_CONFIG = "ESSAYSCORE_CONFIG"

CACHE_NAME = "corpus.json"
MANIFEST_NAMES = {"train": "train.ids", "val": "val.ids", "test": "test.ids"}
EMBEDDINGS_NAME = "embeddings.sswe"
MODEL_NAME = "model.sats"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


class _Pending:
    """Collects finished temp files, then moves them into place together.

    A command that fails mid-way leaves only ``.tmp`` debris behind,
    never a partial primary artifact.
    """

    def __init__(self):
        self.moves: list[tuple[str, str]] = []

    def path_for(self, final) -> str:
        final = str(final)
        tmp = final + ".tmp"
        self.moves.append((tmp, final))
        return tmp

    def write_text(self, final, text: str):
        with open(self.path_for(final), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)

    def commit(self):
        for tmp, final in self.moves:
            os.replace(tmp, final)
        self.moves.clear()

    def discard(self):
        for tmp, _ in self.moves:
            if os.path.exists(tmp):
                os.remove(tmp)
        self.moves.clear()


def _resolve_config(args) -> cfgmod.Config:
    cfg = cfgmod.Config()
    path = args.config or os.environ.get(ENV_CONFIG)
    if path:
        cfg = cfgmod.load_config(path, base=cfg)
    for key in cfgmod._FIELDS:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, cfgmod._coerce(key, value))
    cfg.validate()
    return cfg


def _load_cache(cfg) -> tuple[corpusmod.Corpus, str]:
    path = os.path.join(cfg.splits_dir, CACHE_NAME)
    if not os.path.exists(path):
        raise DataError(f"no corpus cache at {path}; run `ingest` first")
    return corpusmod.load_corpus_cache(path)


def _load_split(cfg, corpus: corpusmod.Corpus, name: str):
    path = os.path.join(cfg.splits_dir, MANIFEST_NAMES[name])
    if not os.path.exists(path):
        raise DataError(f"no {name} manifest at {path}; run `ingest` first")
    return corpus.subset(corpusmod.read_manifest(path))


def _with_targets(essays, cfg):
    """In raw-score mode, train on the raw value instead of the scaled one."""
    if cfg.normalize_scores:
        return essays
    return [dataclasses.replace(e, scaled_score=e.raw_score) for e in essays]


def _pseudo_bounds(cfg, score_range):
    if cfg.normalize_scores:
        return 1.0, 0.0
    return score_range.hi, score_range.lo


# --- subcommands --------------------------------------------------------

def cmd_ingest(args) -> int:
    cfg = _resolve_config(args)
    chash = cfgmod.config_hash(cfg)
    ranges = corpusmod.read_range_table(cfg.range_table) if cfg.range_table \
        else None
    corpus, row_errors = corpusmod.load_corpus(
        cfg.data_path, min_count=cfg.min_count, ranges=ranges)
    for err in row_errors:
        print(f"warning: line {err.line}: {err.message}", file=sys.stderr)
    if not corpus.essays:
        raise DataError(f"no usable essays in {cfg.data_path}")

    os.makedirs(cfg.splits_dir, exist_ok=True)
    manifest_paths = {name: os.path.join(cfg.splits_dir, fname)
                      for name, fname in MANIFEST_NAMES.items()}
    pending = _Pending()
    try:
        if all(os.path.exists(p) for p in manifest_paths.values()):
            print("reusing existing split manifests")
            sizes = {name: len(corpusmod.read_manifest(p))
                     for name, p in manifest_paths.items()}
        else:
            spec = corpusmod.SplitSpec(ratios=cfg.split_ratios(), seed=cfg.seed)
            train, val, test = corpusmod.split_corpus(corpus.essays, spec)
            for name, essays in (("train", train), ("val", val), ("test", test)):
                corpusmod.write_manifest(pending.path_for(manifest_paths[name]),
                                         [e.essay_id for e in essays], chash)
            sizes = {"train": len(train), "val": len(val), "test": len(test)}
        corpusmod.save_corpus_cache(
            pending.path_for(os.path.join(cfg.splits_dir, CACHE_NAME)),
            corpus, chash)
        pending.commit()
    except BaseException:
        pending.discard()
        raise
    print(f"ingested {len(corpus.essays)} essays "
          f"({len(corpus.vocab)} vocabulary entries); splits: "
          f"{sizes['train']}/{sizes['val']}/{sizes['test']}")
    return 0


def cmd_train_embeddings(args) -> int:
    cfg = _resolve_config(args)
    chash = cfgmod.config_hash(cfg)
    corpus, _ = _load_cache(cfg)
    train = _with_targets(_load_split(cfg, corpus, "train"), cfg)
    windows = []
    for essay in train:
        windows.extend(corpusmod.extract_windows(essay, cfg.window_size))
    params, history = sswemod.train_sswe(windows, corpus.vocab,
                                         cfg.sswe_hyper())

    os.makedirs(cfg.models_dir, exist_ok=True)
    os.makedirs(cfg.reports_dir, exist_ok=True)
    pending = _Pending()
    try:
        sswemod.save_embeddings(
            pending.path_for(os.path.join(cfg.models_dir, EMBEDDINGS_NAME)),
            params, corpus.vocab, chash)
        rows = [f"# config {chash}", "epoch,loss_overall,loss_context,loss_score"]
        rows += [f"{h.epoch},{h.loss_overall!r},{h.loss_context!r},"
                 f"{h.loss_score!r}" for h in history]
        pending.write_text(os.path.join(cfg.reports_dir, "embed_history.csv"),
                           "\n".join(rows) + "\n")
        pending.commit()
    except BaseException:
        pending.discard()
        raise
    last = history[-1] if history else None
    tail = (f"; final loss {last.loss_overall:.6f}" if last else "")
    print(f"trained embeddings on {len(windows)} windows"
          f" over {len(train)} essays{tail}")
    return 0


def _init_scorer(cfg, corpus, embeddings_arg: str):
    """Model around pretrained embeddings, or fresh ones for "learned"."""
    rng = np.random.default_rng(cfg.seed)
    if embeddings_arg == "learned":
        M = rng.uniform(-lstmmod.INIT_SCALE, lstmmod.INIT_SCALE,
                        size=(cfg.embed_dim, len(corpus.vocab)))
    else:
        params, vocab, _ = sswemod.load_embeddings(embeddings_arg)
        if len(vocab) != len(corpus.vocab):
            raise DataError(
                f"embedding vocabulary has {len(vocab)} entries but the "
                f"corpus has {len(corpus.vocab)}; retrain embeddings on "
                f"this corpus")
        M = params.M
    return lstmmod.SeqModel.init(M, cfg.seq_hyper(), rng)


def cmd_train_scorer(args) -> int:
    cfg = _resolve_config(args)
    chash = cfgmod.config_hash(cfg)
    corpus, _ = _load_cache(cfg)
    embeddings_arg = args.embeddings or os.path.join(cfg.models_dir,
                                                     EMBEDDINGS_NAME)
    train = _with_targets(_load_split(cfg, corpus, "train"), cfg)
    val = _with_targets(_load_split(cfg, corpus, "val"), cfg)
    model = _init_scorer(cfg, corpus, embeddings_arg)
    best, history = lstmmod.train_scorer(model, train, val, corpus.ranges,
                                         cfg.seq_hyper(),
                                         normalized=cfg.normalize_scores)

    os.makedirs(cfg.models_dir, exist_ok=True)
    os.makedirs(cfg.reports_dir, exist_ok=True)
    pending = _Pending()
    try:
        lstmmod.save_model(
            pending.path_for(os.path.join(cfg.models_dir, MODEL_NAME)),
            best, chash)
        rows = [f"# config {chash}", "epoch,train_mse,val_rmse"]
        rows += [f"{h.epoch},{h.train_mse!r},{h.val_rmse!r}" for h in history]
        pending.write_text(os.path.join(cfg.reports_dir, "scorer_history.csv"),
                           "\n".join(rows) + "\n")
        pending.commit()
    except BaseException:
        pending.discard()
        raise
    if history:
        best_rmse = min(h.val_rmse for h in history)
        print(f"trained scorer for {len(history)} epochs; "
              f"best validation RMSE {best_rmse:.4f}")
    else:
        print("saved untrained scorer (epochs = 0)")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _resolve_config(args)
    chash = cfgmod.config_hash(cfg)
    corpus, _ = _load_cache(cfg)
    model_path = args.model or os.path.join(cfg.models_dir, MODEL_NAME)
    model, _ = lstmmod.load_model(model_path)
    if model.vocab_size != len(corpus.vocab):
        raise DataError(f"model vocabulary has {model.vocab_size} entries "
                        f"but the corpus has {len(corpus.vocab)}")
    splits = MANIFEST_NAMES if args.split == "all" else (args.split,)
    model_name = os.path.basename(model_path)

    os.makedirs(cfg.reports_dir, exist_ok=True)
    pending = _Pending()
    try:
        for name in splits:
            essays = _load_split(cfg, corpus, name)
            # A split over several essay sets still yields one report
            # row; kappa is computed on the union of their score grids.
            sets = {e.set_id for e in essays}
            score_range = corpusmod.ScoreRange(
                min(corpus.ranges[s].lo for s in sets),
                max(corpus.ranges[s].hi for s in sets))
            pred = lstmmod.predict(model, essays, corpus.ranges,
                                   normalized=cfg.normalize_scores)
            gold = [e.raw_score for e in essays]
            rep = metricsmod.report(pred, gold, score_range)
            pending.write_text(
                os.path.join(cfg.reports_dir, f"metrics_{name}.csv"),
                f"# config {chash}\n{metricsmod.CSV_HEADER}\n"
                f"{rep.csv_row(model_name)}\n")
            pending.write_text(
                os.path.join(cfg.reports_dir, f"metrics_{name}.txt"),
                f"# config {chash}\n{name} split, model {model_name}\n"
                f"{rep.pretty()}\n")
            print(f"[{name}]")
            print(rep.pretty())
        pending.commit()
    except BaseException:
        pending.discard()
        raise
    return 0


def cmd_visualize(args) -> int:
    cfg = _resolve_config(args)
    chash = cfgmod.config_hash(cfg)
    corpus, _ = _load_cache(cfg)
    model_path = args.model or os.path.join(cfg.models_dir, MODEL_NAME)
    model, _ = lstmmod.load_model(model_path)
    try:
        ids = [int(tok) for tok in args.ids.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"--ids expects comma-separated integers, "
                          f"got {args.ids!r}") from None
    if not ids:
        raise ConfigError("--ids named no essays")

    os.makedirs(cfg.heatmaps_dir, exist_ok=True)
    pending = _Pending()
    index_rows = [f"# config {chash}", "essay_id,predicted,mean_q"]
    try:
        for eid in ids:
            try:
                essay = corpus.by_id(eid)
            except KeyError:
                raise DataError(f"essay id {eid} not in corpus") from None
            score_range = corpus.ranges[essay.set_id]
            y_max, y_min = _pseudo_bounds(cfg, score_range)
            if args.mode == "span":
                qmap = salmod.quality_map_spans(
                    model, essay, corpus.vocab, args.span_len,
                    score_range=score_range, y_max=y_max, y_min=y_min)
            else:
                qmap = salmod.quality_map(
                    model, essay, corpus.vocab,
                    score_range=score_range, y_max=y_max, y_min=y_min)
            salmod.render_html(
                qmap,
                pending.path_for(os.path.join(cfg.heatmaps_dir,
                                              f"essay_{eid}.html")),
                config_hash=chash)
            print(salmod.render_ansi(qmap, monochrome=args.monochrome))
            index_rows.append(f"{eid},{qmap.predicted!r},{qmap.mean_quality!r}")
        pending.write_text(os.path.join(cfg.heatmaps_dir, "index.csv"),
                           "\n".join(index_rows) + "\n")
        pending.commit()
    except BaseException:
        pending.discard()
        raise
    return 0


def _run_trial(cfg, corpus, train, val) -> float:
    windows = []
    for essay in train:
        windows.extend(corpusmod.extract_windows(essay, cfg.window_size))
    params, _ = sswemod.train_sswe(windows, corpus.vocab, cfg.sswe_hyper())
    rng = np.random.default_rng(cfg.seed)
    model = lstmmod.SeqModel.init(params.M, cfg.seq_hyper(), rng)
    _, history = lstmmod.train_scorer(model, train, val, corpus.ranges,
                                      cfg.seq_hyper(),
                                      normalized=cfg.normalize_scores)
    if not history:
        raise ConfigError("search needs a nonzero epoch budget")
    return min(h.val_rmse for h in history)


def cmd_search(args) -> int:
    cfg = _resolve_config(args)
    chash = cfgmod.config_hash(cfg)
    choices = tuple(float(a) for a in args.alpha_choices.split(",")) \
        if args.alpha_choices else ()
    space = cfgmod.SearchSpace(trials=args.trials, seed=args.search_seed,
                               alpha_choices=choices)
    space.validate()
    corpus, _ = _load_cache(cfg)
    train = _with_targets(_load_split(cfg, corpus, "train"), cfg)
    val = _with_targets(_load_split(cfg, corpus, "val"), cfg)

    rng = np.random.default_rng(space.seed)
    rows = [f"# config {chash}",
            "trial,alpha,learning_rate,embed_dim,hidden_dim,window_size,"
            "n_corruptions,lstm_dim,dropout,seed,val_rmse"]
    best_cfg = None
    best_rmse = np.inf
    for trial in range(space.trials):
        tcfg = space.draw(rng, cfg)
        val_rmse = _run_trial(tcfg, corpus, train, val)
        rows.append(f"{trial},{tcfg.alpha!r},{tcfg.learning_rate!r},"
                    f"{tcfg.embed_dim},{tcfg.hidden_dim},{tcfg.window_size},"
                    f"{tcfg.n_corruptions},{tcfg.lstm_dim},{tcfg.dropout!r},"
                    f"{tcfg.seed},{val_rmse!r}")
        print(f"trial {trial}: alpha={tcfg.alpha:.3f} "
              f"eta={tcfg.learning_rate:.2e} -> val RMSE {val_rmse:.4f}")
        if val_rmse < best_rmse:
            best_rmse = val_rmse
            best_cfg = tcfg

    os.makedirs(cfg.reports_dir, exist_ok=True)
    pending = _Pending()
    try:
        pending.write_text(os.path.join(cfg.reports_dir, "search_trials.csv"),
                           "\n".join(rows) + "\n")
        cfgmod.write_config(
            pending.path_for(os.path.join(cfg.reports_dir, "best_config.cfg")),
            best_cfg, header=f"config {chash}")
        pending.commit()
    except BaseException:
        pending.discard()
        raise
    print(f"best validation RMSE {best_rmse:.4f}")
    return 0


def cmd_synth(args) -> int:
    seed = int(args.seed) if args.seed is not None else 0
    pending = _Pending()
    try:
        pending.write_text(args.out, synthmod.generate(args.profile, seed))
        pending.commit()
    except BaseException:
        pending.discard()
        raise
    print(f"wrote {args.profile} corpus to {args.out}")
    return 0


# --- parser -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="essayscore",
                     description="Essay scoring pipeline with score-specific "
                                 "word embeddings and LSTM regression.")
    parser.add_argument("--config", default=None,
                        help=f"config file path (default: ${ENV_CONFIG})")
    for key in sorted(cfgmod._FIELDS):
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key,
                            default=None, metavar="V",
                            help=f"override config key {key}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="split a TSV corpus and cache it")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train-embeddings",
                       help="fit score-specific word embeddings")
    p.set_defaults(func=cmd_train_embeddings)

    p = sub.add_parser("train-scorer", help="fit the LSTM scorer")
    p.add_argument("--embeddings", default=None,
                   help="embedding file, or 'learned' to train from scratch")
    p.set_defaults(func=cmd_train_scorer)

    p = sub.add_parser("evaluate", help="score a split and report metrics")
    p.add_argument("--model", default=None, help="model file")
    p.add_argument("--split", default="test",
                   choices=("train", "val", "test", "all"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("visualize", help="render token-quality heatmaps")
    p.add_argument("--model", default=None, help="model file")
    p.add_argument("--ids", required=True,
                   help="comma-separated essay ids")
    p.add_argument("--mode", default="essay", choices=("essay", "span"))
    p.add_argument("--span-len", type=int, default=8,
                   help="span length for span mode")
    p.add_argument("--monochrome", action="store_true",
                   help="plain text with [bin] suffixes instead of color")
    p.set_defaults(func=cmd_visualize)

    p = sub.add_parser("search", help="random hyperparameter search")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--search-seed", type=int, default=0)
    p.add_argument("--alpha-choices", default=None,
                   help="comma-separated alpha values to restrict the draw")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("synth", help="generate a synthetic fixture corpus")
    p.add_argument("--profile", required=True,
                   choices=sorted(synthmod.PROFILES))
    p.add_argument("--seed", default=None, help="generator seed (default 0)")
    p.add_argument("--out", required=True, help="output TSV path")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
