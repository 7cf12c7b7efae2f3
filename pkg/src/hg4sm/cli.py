"""Command-line entry point: ``hg4sm <command> [options]``.

Every command takes the same run configuration: a flat ``key = value`` file
passed with ``--config``, overridden by ``--set key=value`` and the dedicated
flags (``--seed``, ``--alpha``, ``--beta``, ``--components``,
``--threshold``). The resolved configuration is validated before any input is
read. Commands that write an artifact also write ``<out>.manifest.json`` with
the input hashes, the resolved configuration and the seed.

Errors go to stderr as a single JSON line ``{"error": ..., "type": ...}``
with exit status 1 (2 for usage errors).
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .embed import SkipgramConfig, load_embeddings, save_embeddings, train_skipgram
from .evaluation import ablation_run, confusion_metrics
from .graph import (BipartiteGraph, CachedTeacher, LexicalTeacher, build_behavior_graph, read_log,
                    refine_with_teacher)
from .model import Featurizer, ModelConfig, init_params, load_checkpoint, predict, save_checkpoint
from .pipeline import id_corpus, text_corpus
from .synth import SynthConfig, generate, read_truth
from .textproc import DEFAULT_CJK_RANGES, Tokenizer, Vocab, build_vocab
from .train import (TrainConfig, TrainExample, make_training_set, read_examples, read_labeled_examples,
                    split_by_query, train, write_examples, write_history)

log = logging.getLogger("hg4sm")


class CliError(Exception):
    pass


class UsageError(CliError):
    pass


def _format_ranges(ranges) -> str:
    return ",".join(f"{lo:x}-{hi:x}" for lo, hi in ranges)


def _parse_ranges(text: str) -> tuple[tuple[int, int], ...]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        if not sep:
            raise ValueError(f"bad CJK range {part!r}; expected hex LO-HI")
        out.append((int(lo, 16), int(hi, 16)))
    return tuple(out)


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of the pipeline in one flat record."""

    seed: int = 0
    # tokenizer / vocab
    cjk_ranges: str = _format_ranges(DEFAULT_CJK_RANGES)
    min_count: int = 1
    max_vocab: int = 50_000
    corpus: str = "both"
    # word embeddings
    d: int = 32
    emb_window: int = 2
    emb_negatives: int = 5
    emb_epochs: int = 5
    emb_lr: float = 0.025
    emb_batch_size: int = 128
    # graph refinement
    alpha: float = 0.35
    beta: float = 0.8
    max_candidates_per_query: int = 50
    # model
    len_q: int = 8
    len_i: int = 20
    h1: int = 256
    h2: int = 64
    components: str = "rep,int,hin"
    activation: str = "tanh"
    finetune_embeddings: bool = False
    # training
    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    neg_ratio: int = 1
    sampling: str = "uniform"
    holdout_fraction: float = 0.2
    exclude_focus_edge: bool = True
    # evaluation
    threshold: float = 0.5
    seeds: str = "0,1,2,3,4"
    # synthetic data
    synth_categories: int = 20
    synth_queries_per_category: int = 50
    synth_items_per_category: int = 50
    synth_vocab_per_category: int = 12
    synth_noise_rate: float = 0.0
    synth_purchase_rate: float = 0.4
    synth_impression_rate: float = 0.5
    synth_gap_fraction: float = 0.0
    synth_clicks_per_query: int = 10

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, types[key], str(raw).strip())
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        self.tokenizer()
        self.skipgram()
        self.model()
        self.trainer()
        self.synth()
        self.seed_list()
        if self.sampling not in ("uniform", "popularity"):
            raise ValueError("sampling must be 'uniform' or 'popularity'")
        if self.corpus not in ("both", "queries", "titles"):
            raise ValueError("corpus must be 'both', 'queries' or 'titles'")
        if not 0.0 <= self.alpha <= 1.0 or not 0.0 <= self.beta <= 1.0:
            raise ValueError("alpha and beta must lie in [0, 1]")
        if self.min_count < 1 or self.max_vocab < 1 or self.max_candidates_per_query < 0:
            raise ValueError("min_count and max_vocab must be >= 1, max_candidates_per_query >= 0")

    def tokenizer(self) -> Tokenizer:
        return Tokenizer(_parse_ranges(self.cjk_ranges))

    def skipgram(self) -> SkipgramConfig:
        return SkipgramConfig(dim=self.d, window=self.emb_window, negatives=self.emb_negatives,
                              epochs=self.emb_epochs, lr=self.emb_lr, seed=self.seed,
                              batch_size=self.emb_batch_size)

    def model(self) -> ModelConfig:
        return ModelConfig(d=self.d, len_q=self.len_q, len_i=self.len_i, h1=self.h1, h2=self.h2,
                           components=self.components, activation=self.activation,
                           finetune_embeddings=self.finetune_embeddings)

    def trainer(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr, beta1=self.beta1,
                           beta2=self.beta2, eps=self.adam_eps, neg_ratio=self.neg_ratio, seed=self.seed,
                           exclude_focus_edge=self.exclude_focus_edge,
                           holdout_fraction=self.holdout_fraction)

    def synth(self) -> SynthConfig:
        return SynthConfig(n_categories=self.synth_categories,
                           queries_per_category=self.synth_queries_per_category,
                           items_per_category=self.synth_items_per_category,
                           vocab_per_category=self.synth_vocab_per_category,
                           noise_rate=self.synth_noise_rate, purchase_rate=self.synth_purchase_rate,
                           impression_rate=self.synth_impression_rate,
                           gap_fraction=self.synth_gap_fraction,
                           clicks_per_query=self.synth_clicks_per_query, seed=self.seed)

    def seed_list(self) -> tuple[int, ...]:
        seeds = tuple(int(s) for s in self.seeds.split(",") if s.strip())
        if not seeds:
            raise ValueError("seeds must list at least one integer")
        return seeds

    def max_candidates(self) -> int | None:
        return self.max_candidates_per_query or None


def _coerce(key: str, typ, raw: str):
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
    except ValueError:
        raise ValueError(f"config key {key!r}: cannot parse {raw!r} as {typ}") from None
    return raw


def read_config_file(path) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=", ":"),
                                       comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + Path(path).read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as exc:
        raise ValueError(f"{path}: {str(exc).splitlines()[0]}") from None
    return dict(parser["run"])


# helpers -----------------------------------------------------------------------

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{what} not found: {path}")
    return p


def _out_path(args, default: str | None = None) -> Path:
    if args.out is None:
        if default is None:
            raise CliError("--out is required for this command")
        return Path(default)
    return Path(args.out)


def write_manifest(out: Path, args, cfg: RunConfig, inputs: dict[str, Path], outputs: list[Path],
                   manifest: Path | None = None) -> Path:
    manifest = manifest or out.with_name(out.name + ".manifest.json")
    doc = {
        "tool": "hg4sm",
        "version": __version__,
        "command": args.command,
        "seed": cfg.seed,
        "inputs": {name: {"path": str(p), "sha256": _sha256(p)} for name, p in sorted(inputs.items())},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "config": dataclasses.asdict(cfg),
    }
    manifest.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def _load_vocab(path) -> Vocab:
    return Vocab.load(_require(path, "vocab"))


def _load_graph(path) -> BipartiteGraph:
    return BipartiteGraph.load(_require(path, "graph"))


def _read_any_examples(path, graph: BipartiteGraph | None, fmt: str) -> list[TrainExample]:
    p = _require(path, "examples")
    if fmt == "auto":
        first = p.read_text(encoding="utf-8").split("\n", 1)[0]
        fmt = "dataset" if first.startswith("query\titem_id\t") else "labeled"
    if fmt == "dataset":
        return read_examples(p)
    if fmt == "labeled":
        return read_labeled_examples(p)
    if graph is None:
        raise CliError("--format truth needs --graph to look up item titles")
    titles = {item_id: title for item_id, title in graph.items}
    out = []
    for q, item_id, label in read_truth(p):
        if item_id not in titles:
            raise CliError(f"{path}: item {item_id!r} is not in the graph")
        out.append(TrainExample(q, titles[item_id], label, item_id=item_id))
    return out


def _model_scores(args, cfg: RunConfig, examples) -> np.ndarray:
    vocab = _load_vocab(args.vocab)
    params, mcfg = load_checkpoint(_require(args.model, "model"), vocab_size=len(vocab))
    graph = _load_graph(args.graph) if args.graph else None
    feat = Featurizer(vocab, mcfg, graph, cfg.tokenizer())
    return predict(feat.batch(examples, cfg.exclude_focus_edge), params, mcfg)


# commands ----------------------------------------------------------------------

def cmd_synth_gen(args, cfg: RunConfig) -> None:
    out = _out_path(args)
    out.mkdir(parents=True, exist_ok=True)
    data = generate(cfg.synth())
    log_path, truth_path = out / "log.jsonl", out / "truth.tsv"
    data.write(log_path, truth_path)
    gap_path = out / "gap_items.txt"
    gap_path.write_text("".join(f"{i}\n" for i in sorted(data.gap_items)), encoding="utf-8")
    write_manifest(out, args, cfg, {}, [log_path, truth_path, gap_path], manifest=out / "manifest.json")


def _log_graph(path) -> BipartiteGraph:
    return build_behavior_graph(read_log(_require(path, "log")))


def cmd_build_vocab(args, cfg: RunConfig) -> None:
    out = _out_path(args)
    graph = _log_graph(args.log)
    vocab = build_vocab(text_corpus(graph, cfg.corpus), cfg.min_count, cfg.max_vocab, cfg.tokenizer())
    vocab.save(out)
    write_manifest(out, args, cfg, {"log": Path(args.log)}, [out])


def cmd_train_embeddings(args, cfg: RunConfig) -> None:
    out = _out_path(args)
    graph = _log_graph(args.log)
    vocab = _load_vocab(args.vocab)
    corpus = id_corpus(text_corpus(graph, cfg.corpus), vocab, cfg.tokenizer())
    table = train_skipgram(corpus, vocab, cfg.skipgram())
    save_embeddings(table, out)
    write_manifest(out, args, cfg, {"log": Path(args.log), "vocab": Path(args.vocab)}, [out])


def cmd_build_graph(args, cfg: RunConfig) -> None:
    out = _out_path(args)
    _log_graph(args.log).save(out)
    write_manifest(out, args, cfg, {"log": Path(args.log)}, [out])


def cmd_refine_graph(args, cfg: RunConfig) -> None:
    out = _out_path(args)
    graph = _load_graph(args.graph)
    inputs = {"graph": Path(args.graph)}
    teacher = LexicalTeacher()
    if args.teacher_scores:
        teacher = CachedTeacher.load(_require(args.teacher_scores, "teacher score file"), fallback=teacher)
        inputs["teacher_scores"] = Path(args.teacher_scores)
    refined = refine_with_teacher(graph, teacher, cfg.alpha, cfg.beta, cfg.max_candidates())
    refined.save(out)
    write_manifest(out, args, cfg, inputs, [out])


def cmd_make_dataset(args, cfg: RunConfig) -> None:
    out = _out_path(args)
    graph = _load_graph(args.graph)
    inputs = {"graph": Path(args.graph)}
    explicit = []
    if args.labeled:
        explicit = read_labeled_examples(_require(args.labeled, "labeled file"))
        inputs["labeled"] = Path(args.labeled)
    ds = make_training_set(graph, cfg.neg_ratio, cfg.seed, sampling=cfg.sampling, explicit=explicit)
    write_examples(ds, out)
    write_manifest(out, args, cfg, inputs, [out])


def _training_inputs(args, cfg: RunConfig):
    vocab = _load_vocab(args.vocab)
    graph = _load_graph(args.graph)
    table = load_embeddings(_require(args.embeddings, "embeddings"), vocab)
    if table.dim != cfg.d:
        raise CliError(f"embedding dimension {table.dim} does not match config d={cfg.d}")
    dataset = _read_any_examples(args.dataset, graph, "auto")
    holdout = _read_any_examples(args.holdout, graph, args.holdout_format) if args.holdout else None
    inputs = {"dataset": Path(args.dataset), "graph": Path(args.graph), "vocab": Path(args.vocab),
              "embeddings": Path(args.embeddings)}
    if args.holdout:
        inputs["holdout"] = Path(args.holdout)
    return vocab, graph, table, dataset, holdout, inputs


def cmd_train(args, cfg: RunConfig) -> None:
    out = _out_path(args)
    vocab, graph, table, dataset, holdout, inputs = _training_inputs(args, cfg)
    mcfg = cfg.model()
    feat = Featurizer(vocab, mcfg, graph, cfg.tokenizer())
    params = init_params(mcfg, table.matrix, seed=cfg.seed)
    params, history = train(params, mcfg, dataset, graph, vocab, cfg.trainer(), holdout=holdout, featurizer=feat)
    save_checkpoint(params, mcfg, out)
    hist_path = out.with_name(out.name + ".history.jsonl")
    write_history(history, hist_path)
    write_manifest(out, args, cfg, inputs, [out, hist_path])


def cmd_ablate(args, cfg: RunConfig) -> None:
    out = _out_path(args)
    vocab, graph, table, dataset, holdout, inputs = _training_inputs(args, cfg)
    tcfg = cfg.trainer()
    if holdout is None:
        dataset, holdout = split_by_query(dataset, tcfg.holdout_fraction, cfg.seed)
        if not holdout:
            raise CliError("held-out split is empty; raise holdout_fraction or pass --holdout")
    slices = None
    if args.slice_items:
        wanted = {ln.strip() for ln in _require(args.slice_items, "slice file").read_text(encoding="utf-8").splitlines()}
        slices = {"slice": np.array([ex.item_id in wanted for ex in holdout])}
        inputs["slice_items"] = Path(args.slice_items)
    subsets = [s for s in args.subsets.split(";")] if args.subsets else None
    kwargs = {} if subsets is None else {"subsets": [s.replace("+", ",").split(",") for s in subsets]}
    res = ablation_run(graph, dataset, holdout, vocab, table.matrix, cfg.model(), tcfg,
                       seeds=cfg.seed_list(), threshold=cfg.threshold, slices=slices, **kwargs)
    out.write_text(res.to_json() + "\n", encoding="utf-8")
    tsv = out.with_suffix(".tsv")
    tsv.write_text(res.to_tsv(), encoding="utf-8")
    write_manifest(out, args, cfg, inputs, [out, tsv])


def cmd_eval(args, cfg: RunConfig) -> None:
    if args.scored:
        rows = []
        for lineno, line in enumerate(_require(args.scored, "scored file").read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CliError(f"{args.scored}:{lineno}: expected score<TAB>label")
            rows.append((float(parts[0]), int(parts[1])))
        if not rows:
            raise CliError(f"{args.scored}: no scored examples")
        scores = np.array([r[0] for r in rows])
        labels = np.array([r[1] for r in rows])
    else:
        if not (args.examples and args.model and args.vocab):
            raise CliError("eval needs either --scored FILE or EXAMPLES with --model and --vocab")
        graph = _load_graph(args.graph) if args.graph else None
        examples = _read_any_examples(args.examples, graph, args.format)
        scores = _model_scores(args, cfg, examples)
        labels = np.array([ex.label for ex in examples])
    report = confusion_metrics(scores, labels, cfg.threshold).to_dict()
    report["n"] = int(len(labels))
    text = json.dumps(report, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def cmd_predict(args, cfg: RunConfig) -> None:
    pairs = []
    for lineno, line in enumerate(sys.stdin.read().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            raise CliError(f"stdin:{lineno}: expected query<TAB>title[<TAB>item_id]")
        item_id = parts[2] if len(parts) == 3 and parts[2] else None
        pairs.append(TrainExample(parts[0], parts[1], 0, item_id=item_id))
    if not pairs:
        return
    scores = _model_scores(args, cfg, pairs)
    out = sys.stdout if args.out is None else open(args.out, "w", encoding="utf-8")
    try:
        for s in scores:
            out.write(f"{s:.6f}\n")
    finally:
        if out is not sys.stdout:
            out.close()


# argument parsing --------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


COMMANDS = {
    "synth-gen": (cmd_synth_gen, "generate a synthetic log and ground-truth pairs into --out DIR"),
    "build-vocab": (cmd_build_vocab, "build the vocabulary from a log"),
    "train-embeddings": (cmd_train_embeddings, "train skip-gram word vectors"),
    "build-graph": (cmd_build_graph, "aggregate a log into a behavior graph snapshot"),
    "refine-graph": (cmd_refine_graph, "prune and augment graph edges with teacher scores"),
    "make-dataset": (cmd_make_dataset, "emit positives and sampled negatives from a graph"),
    "train": (cmd_train, "train the matching model"),
    "eval": (cmd_eval, "compute AUC and threshold metrics"),
    "predict": (cmd_predict, "score query<TAB>title pairs read from stdin"),
    "ablate": (cmd_ablate, "train and evaluate each component subset over several seeds"),
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("--seed", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--components", help="comma list from rep,int,hin")
    common.add_argument("--threshold", type=float)
    common.add_argument("--out", help="output path")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="hg4sm", description="Query-item semantic matching on a behavior graph.")
    parser.add_argument("--version", action="version", version=f"hg4sm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = {name: sub.add_parser(name, parents=[common], help=help_) for name, (_, help_) in COMMANDS.items()}

    for name in ("build-vocab", "train-embeddings", "build-graph"):
        p[name].add_argument("log", help="JSON-lines behavior log")
    p["train-embeddings"].add_argument("--vocab", required=True)
    p["refine-graph"].add_argument("graph", help="graph snapshot from build-graph")
    p["refine-graph"].add_argument("--teacher-scores", help="TSV query<TAB>item_id<TAB>score cache")
    p["make-dataset"].add_argument("graph", help="refined graph snapshot")
    p["make-dataset"].add_argument("--labeled", help="extra query<TAB>title<TAB>label examples")
    for name in ("train", "ablate"):
        p[name].add_argument("dataset", help="dataset file from make-dataset")
        p[name].add_argument("--graph", required=True)
        p[name].add_argument("--vocab", required=True)
        p[name].add_argument("--embeddings", required=True)
        p[name].add_argument("--holdout", help="held-out examples (default: by-query split of the dataset)")
        p[name].add_argument("--holdout-format", choices=("auto", "dataset", "labeled", "truth"), default="auto")
    p["ablate"].add_argument("--subsets", help="semicolon list such as 'rep,int;rep,int,hin' (default: all seven)")
    p["ablate"].add_argument("--slice-items", help="file of item ids; AUC on held-out pairs with these items is reported")
    p["eval"].add_argument("examples", nargs="?", help="labeled examples to score with --model")
    p["eval"].add_argument("--scored", help="TSV score<TAB>label; skips the model")
    p["eval"].add_argument("--format", choices=("auto", "dataset", "labeled", "truth"), default="auto")
    for name in ("eval", "predict"):
        p[name].add_argument("--model", required=name == "predict")
        p[name].add_argument("--vocab", required=name == "predict")
        p[name].add_argument("--graph", help="graph snapshot for metapath context")
    return parser


def resolve_config(args) -> RunConfig:
    values: dict[str, str] = {}
    if args.config:
        values.update(read_config_file(_require(args.config, "config file")))
    for item in args.set:
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        values[key.strip()] = val
    for key in ("seed", "alpha", "beta", "components", "threshold"):
        val = getattr(args, key)
        if val is not None:
            values[key] = str(val)
    return RunConfig.from_mapping(values)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(name)s: %(message)s", stream=sys.stderr)
        cfg = resolve_config(args)
        COMMANDS[args.command][0](args, cfg)
    except CliError as exc:
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
        return 2 if isinstance(exc, UsageError) else 1
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
