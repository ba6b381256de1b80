"""Pipeline configuration and the stages behind each CLI command.

One root seed drives everything; each stage gets ``seed + SEED_OFFSETS[stage]``
so a stage can be re-run alone and still reproduce the full run.

Output directory layout::

    store.bin, store.json           frozen-model vector store (ingest)
    triples*.jsonl, mining_report.json  (augment)
    <mode>/head.json, <mode>/training_history.json  (train)
    <mode>/metrics.json, <mode>/metrics.md  (eval)
    comparison.md                   (run-all)
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import corpus as C
from .augment import NegativeMiningConfig, build_dataset
from .encoder import Encoder, FrozenFeaturizer, TrainableHead, load_head, save_head
from .evaluator import DEFAULT_KS, MetricsReport, evaluate, markdown_table
from .querygen import GenConfig
from .trainer import MODES, TrainConfig, history_to_dict, train
from .vectorstore import ingest as ingest_store

log = logging.getLogger(__name__)

SEED_OFFSETS = {"featurizer": 1, "querygen": 2, "split": 3, "trainer": 4}


class ConfigError(ValueError):
    pass


@dataclass
class FeaturizerConfig:
    dimension: int = 256
    ngram_range: tuple[int, int] = (3, 5)


@dataclass
class PipelineConfig:
    documents: str = "documents.jsonl"
    queries: str | None = "queries.jsonl"
    output_dir: str = "runs/default"
    seed: int = 0
    ks: list[int] = field(default_factory=lambda: list(DEFAULT_KS))
    validation_fraction: float = 0.15
    threads: int = 1
    featurizer: FeaturizerConfig = field(default_factory=FeaturizerConfig)
    gen: GenConfig = field(default_factory=GenConfig)
    mining: NegativeMiningConfig = field(default_factory=NegativeMiningConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    # --- derived objects ------------------------------------------------

    def stage_seed(self, stage: str) -> int:
        return self.seed + SEED_OFFSETS[stage]

    def make_featurizer(self) -> FrozenFeaturizer:
        return FrozenFeaturizer(
            self.featurizer.dimension, self.stage_seed("featurizer"), tuple(self.featurizer.ngram_range)
        )

    def gen_config(self) -> GenConfig:
        return dataclasses.replace(self.gen, seed=self.stage_seed("querygen"))

    def split_spec(self) -> C.SplitSpec:
        return C.SplitSpec(self.validation_fraction, self.stage_seed("split"))

    def train_config(self, mode: str | None = None) -> TrainConfig:
        return dataclasses.replace(
            self.train, seed=self.stage_seed("trainer"), mode=mode or self.train.mode
        )

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    # --- (de)serialisation ------------------------------------------------

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))

    @classmethod
    def from_dict(cls, rec: dict) -> "PipelineConfig":
        rec = dict(rec)
        sections = {
            "featurizer": FeaturizerConfig,
            "gen": GenConfig,
            "mining": NegativeMiningConfig,
            "train": TrainConfig,
        }
        kwargs = {}
        top = {f.name for f in dataclasses.fields(cls)}
        for key, value in rec.items():
            if key not in top:
                raise ConfigError(f"unknown config key {key!r}")
            if key in sections:
                kwargs[key] = _build_section(sections[key], key, value)
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path, overrides: list[str] = ()) -> "PipelineConfig":
        rec = {}
        if path:
            with open(path, encoding="utf-8") as fh:
                rec = json.load(fh)
        rec = _deep_merge(cls().to_dict(), rec)
        for item in overrides:
            apply_override(rec, item)
        return cls.from_dict(rec)

    def config_hash(self) -> str:
        """Identity of the data and shared settings; excludes the mode and output paths."""
        rec = self.to_dict()
        for key in ("documents", "queries", "output_dir", "threads"):
            rec.pop(key)
        rec["train"].pop("mode")
        rec["documents_sha256"] = _file_sha(self.documents)
        rec["queries_sha256"] = (
            _file_sha(self.queries) if self.queries and Path(self.queries).is_file() else None
        )
        blob = json.dumps(rec, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        out[k] = _deep_merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _build_section(kind, name: str, value):
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    known = {f.name for f in dataclasses.fields(kind) if f.init}
    unknown = set(value) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    value = {k: tuple(v) if isinstance(v, list) and k.endswith(("range", "window")) else v
             for k, v in value.items()}
    try:
        return kind(**value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def apply_override(rec: dict, item: str) -> None:
    """Apply ``a.b.c=value`` in place; ``value`` is parsed as JSON when possible."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    path, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = path.strip().split(".")
    node = rec
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise ConfigError(f"override {item!r}: {k!r} is not a config section")
        node = node[k]
    if keys[-1] not in node:
        raise ConfigError(f"override {item!r}: unknown key {path!r}")
    node[keys[-1]] = value


def _file_sha(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path, obj) -> None:
    C.atomic_write_text(path, json.dumps(obj, indent=2) + "\n")


# --- stages -------------------------------------------------------------


def load_inputs(cfg: PipelineConfig, need_queries: bool = False):
    if not Path(cfg.documents).is_file():
        raise ConfigError(f"documents file not found: {cfg.documents}")
    docs = C.load_corpus(cfg.documents)
    queries = None
    if cfg.queries and Path(cfg.queries).is_file():
        queries = C.load_queries(cfg.queries)
        C.check_queries(queries, (d.id for d in docs))
    elif need_queries:
        raise ConfigError(f"labelled queries file not found: {cfg.queries}")
    return docs, queries


def run_ingest(cfg: PipelineConfig):
    docs, _ = load_inputs(cfg)
    if not docs:
        raise ConfigError("corpus is empty")
    store = ingest_store(docs, cfg.make_featurizer())
    store.save(cfg.out / "store.bin")
    return store


def run_augment(cfg: PipelineConfig, client=None) -> dict:
    docs, _ = load_inputs(cfg)
    if not docs:
        raise ConfigError("corpus is empty")
    triples, report = build_dataset(
        docs, cfg.gen_config(), cfg.mining, cfg.make_featurizer(), client=client, threads=cfg.threads
    )
    out = cfg.out
    C.write_triples(out / "triples.jsonl", triples)
    rec = report.to_dict()
    if triples:
        train, val = C.split_triples(triples, cfg.split_spec())
        C.write_triples(out / "triples_train.jsonl", train)
        C.write_triples(out / "triples_val.jsonl", val)
        rec["train_triples"], rec["validation_triples"] = len(train), len(val)
    else:
        rec["train_triples"] = rec["validation_triples"] = 0
    _write_json(out / "mining_report.json", rec)
    return rec


def run_train(cfg: PipelineConfig, mode: str | None = None) -> TrainableHead:
    tcfg = cfg.train_config(mode)
    f = cfg.make_featurizer()
    mode_dir = cfg.out / tcfg.mode
    if tcfg.mode == "vanilla":
        head, history = train([], {}, tcfg, f)
    else:
        docs, _ = load_inputs(cfg)
        path = cfg.out / "triples_train.jsonl"
        if not path.is_file():
            raise ConfigError(f"{path} not found; run augment first")
        triples = C.load_triples(path)
        val_path = cfg.out / "triples_val.jsonl"
        val = C.load_triples(val_path) if val_path.is_file() else []
        C.check_triples(triples + val, (d.id for d in docs))
        if not triples:
            raise ConfigError(f"{path} holds no triples")
        head, history = train(triples, docs, tcfg, f, validation=val)
    save_head(
        mode_dir / "head.json", head,
        mode=tcfg.mode,
        lam=tcfg.inference_lambda,
        config_hash=cfg.config_hash(),
        featurizer={"dimension": f.dimension, "hash_seed": f.hash_seed,
                    "ngram_range": list(f.ngram_range)},
    )
    _write_json(mode_dir / "training_history.json", history_to_dict(history, tcfg))
    return head


def load_encoder(cfg: PipelineConfig, mode: str, checkpoint=None) -> Encoder:
    """Encoder for ``mode`` from its checkpoint, refusing any fusion-weight mismatch."""
    tcfg = cfg.train_config(mode)
    path = Path(checkpoint) if checkpoint else cfg.out / mode / "head.json"
    if not path.is_file():
        raise ConfigError(f"checkpoint {path} not found; run train first")
    head, meta = load_head(path)
    f = cfg.make_featurizer()
    if meta.get("mode") != mode:
        raise ConfigError(f"checkpoint {path} was trained for mode {meta.get('mode')!r}, not {mode!r}")
    if float(meta["lam"]) != tcfg.inference_lambda:
        raise ConfigError(
            f"fusion weight mismatch: checkpoint {path} has lam={meta['lam']}, "
            f"config gives {tcfg.inference_lambda} for mode {mode!r}"
        )
    fz = meta.get("featurizer", {})
    if fz and (fz["dimension"], fz["hash_seed"], tuple(fz["ngram_range"])) != (
        f.dimension, f.hash_seed, f.ngram_range
    ):
        raise ConfigError(f"checkpoint {path} was trained with a different featurizer")
    return Encoder(f, head, tcfg.inference_lambda)


def evaluate_encoder(encoder: Encoder, docs, queries, ks, mode="", config_hash="") -> MetricsReport:
    store = ingest_store(docs, encoder)
    return evaluate(queries, store, encoder, ks, mode=mode, config_hash=config_hash)


def run_eval(cfg: PipelineConfig, mode: str | None = None, checkpoint=None) -> MetricsReport:
    mode = mode or cfg.train.mode
    encoder = load_encoder(cfg, mode, checkpoint)
    docs, queries = load_inputs(cfg, need_queries=True)
    report = evaluate_encoder(encoder, docs, queries, cfg.ks, mode, cfg.config_hash())
    mode_dir = cfg.out / mode
    report.save(mode_dir / "metrics.json")
    C.atomic_write_text(mode_dir / "metrics.md", markdown_table({mode: report}))
    return report


def run_all(cfg: PipelineConfig, modes=MODES, client=None) -> dict[str, MetricsReport]:
    run_ingest(cfg)
    rep = run_augment(cfg, client)
    if rep["triples_emitted"] == 0 and any(m != "vanilla" for m in modes):
        raise ConfigError("augmentation produced no triples; nothing to train on")
    reports = {}
    for mode in modes:
        run_train(cfg, mode)
        reports[mode] = run_eval(cfg, mode)
    C.atomic_write_text(cfg.out / "comparison.md", markdown_table(reports))
    return reports


def compare(paths, out=None, ks=None) -> str:
    reports = {}
    for p in paths:
        rep = MetricsReport.load(p)
        name = rep.mode or Path(p).parent.name
        if name in reports:
            name = f"{name} ({p})"
        reports[name] = rep
    hashes = {r.config_hash for r in reports.values()}
    table = markdown_table(reports, ks)
    if len(hashes) > 1:
        table += "\nNote: reports come from different configurations (config hashes differ).\n"
    if out:
        C.atomic_write_text(out, table)
    return table


# --- out-of-domain experiment -------------------------------------------

OOD_MODES = ("vanilla", "finetune", "cocktail", "refine")


def run_ood(cfg: PipelineConfig, ood_documents, ood_queries, seeds=None, k: int = 3,
            client=None) -> dict:
    """Train on the configured corpus, evaluate every mode in-domain and on the OOD corpus.

    With several ``seeds`` each run lives in ``seed_<s>/``; seeds where
    refine's OOD recall@k falls below finetune's are flagged, not failed.
    """
    seeds = list(seeds) if seeds else [cfg.seed]
    ood_docs = C.load_corpus(ood_documents)
    ood_q = C.load_queries(ood_queries)
    C.check_queries(ood_q, (d.id for d in ood_docs))
    ks = sorted(set(cfg.ks) | {k})
    runs = []
    for s in seeds:
        scfg = dataclasses.replace(
            cfg, seed=s, ks=ks,
            output_dir=str(cfg.out / f"seed_{s}") if len(seeds) > 1 else cfg.output_dir,
        )
        docs, queries = load_inputs(scfg, need_queries=True)
        run_augment(scfg, client)
        in_dom, ood = {}, {}
        for mode in OOD_MODES:
            run_train(scfg, mode)
            in_dom[mode] = run_eval(scfg, mode)
            ood[mode] = evaluate_encoder(load_encoder(scfg, mode), ood_docs, ood_q, ks, mode, scfg.config_hash())
            ood[mode].save(scfg.out / mode / "ood_metrics.json")
        ok = ood["refine"].per_k[k]["recall"] >= ood["finetune"].per_k[k]["recall"]
        if not ok:
            log.warning("seed %s: refine OOD recall@%d below finetune", s, k)
        C.atomic_write_text(scfg.out / "ood.md", ood_grid(in_dom, ood, k))
        runs.append({
            "seed": s,
            "in_domain": {m: r.per_k[k] for m, r in in_dom.items()},
            "ood": {m: r.per_k[k] for m, r in ood.items()},
            "refine_ood_recall_ge_finetune": ok,
        })
    summary = {
        "k": k,
        "seeds": seeds,
        "runs": runs,
        "flagged_seeds": [r["seed"] for r in runs if not r["refine_ood_recall_ge_finetune"]],
        "mean": {
            part: {m: {name: sum(r[part][m][name] for r in runs) / len(runs)
                       for name in runs[0][part][m]} for m in OOD_MODES}
            for part in ("in_domain", "ood")
        },
    }
    _write_json(cfg.out / "ood_report.json", summary)
    C.atomic_write_text(cfg.out / "ood_summary.md", _ood_summary_md(summary))
    return summary


def ood_grid(in_dom: dict, ood: dict, k: int) -> str:
    cols = [f"{part} {m.upper()}@{k}" for part in ("in-domain", "OOD") for m in ("map", "ndcg", "mrr", "recall")]
    lines = ["| model | " + " | ".join(cols) + " |", "|" + "---|" * (len(cols) + 1)]
    for mode in in_dom:
        cells = [f"{src[mode].per_k[k][m]:.4f}" for src in (in_dom, ood)
                 for m in ("map", "ndcg", "mrr", "recall")]
        lines.append(f"| {mode} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def _ood_summary_md(summary: dict) -> str:
    k = summary["k"]
    lines = [f"| seed | " + " | ".join(f"OOD Recall@{k} {m}" for m in OOD_MODES) + " | refine >= finetune |",
             "|" + "---|" * (len(OOD_MODES) + 2)]
    for r in summary["runs"]:
        cells = [f"{r['ood'][m]['recall']:.4f}" for m in OOD_MODES]
        flag = "yes" if r["refine_ood_recall_ge_finetune"] else "NO (flagged)"
        lines.append(f"| {r['seed']} | " + " | ".join(cells) + f" | {flag} |")
    mean = summary["mean"]["ood"]
    lines.append("| mean | " + " | ".join(f"{mean[m]['recall']:.4f}" for m in OOD_MODES) + " | |")
    return "\n".join(lines) + "\n"
