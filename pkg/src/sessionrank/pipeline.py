"""Batch pipeline: generate -> train encoders -> featurize -> train rankers
-> evaluate -> report.

Every stage writes its artifacts under one output directory and stamps them
with the config hash and seed. Stages re-read prerequisites from disk and
refuse to mix artifacts from different configs (hash chaining), and
featurization refuses encoder weights whose recorded training epochs reach
into the ranker side of the time split (leakage guard). Re-running a stage
with unchanged inputs rewrites byte-identical outputs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace

from sessionrank.datagen import Catalog, GeneratorConfig, generate_catalog, generate_sessions
from sessionrank.embed import HashEmbedder, load_embedding_table
from sessionrank.evaluation import (
    COMPARISONS,
    VARIANTS,
    LiftReport,
    evaluate_models,
    render_report,
    report_from_tsv,
    report_to_tsv,
    train_ladder,
)
from sessionrank.featurize import SEQ_COLUMNS, featurize_sessions, read_features, write_features
from sessionrank.ltr import RankerTrainParams, load_ranker_model, save_ranker_model
from sessionrank.seqmodels import (
    PERCEIVER,
    TRANSFORMER,
    EncoderTrainParams,
    load_encoder_weights,
    save_encoder_weights,
    train_sequence_encoder,
)
from sessionrank.sessionlog import read_session_log, serialize_sessions, split_by_epoch

log = logging.getLogger("sessionrank")

SESSIONS_FILE = "sessions.log"
FEATURES_FILE = "features.tsv"
REPORT_TSV = "report.tsv"
REPORT_TXT = "report.txt"
ENCODER_FILES = {TRANSFORMER: "encoder_trans.txt", PERCEIVER: "encoder_perc.txt"}
MODELS_DIR = "models"


class PrerequisiteError(RuntimeError):
    """A stage's input artifact is missing; run the earlier stage first."""


class ConfigHashError(ValueError):
    """An artifact on disk was produced by a different config."""


class LeakageError(ValueError):
    """Encoder weights were trained on epochs inside the ranker split."""


@dataclass
class RunConfig:
    seed: int = 7
    out_dir: str | None = None
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    epoch_boundary: int = 4
    embed_dim: int = 64
    embedding_table: str | None = None
    encoder: EncoderTrainParams = field(default_factory=EncoderTrainParams)
    ranker: RankerTrainParams = field(default_factory=RankerTrainParams)
    ladder: tuple[str, ...] = ("all",)

    def __post_init__(self) -> None:
        # The generator and both trainers follow the single run seed.
        self.generator = replace(self.generator, seed=self.seed)
        self.encoder = replace(self.encoder, seed=self.seed, dim=self.embed_dim)
        self.ranker = replace(self.ranker, seed=self.seed)

    def variants(self) -> tuple[str, ...]:
        if self.ladder == ("all",):
            return tuple(VARIANTS)
        unknown = [v for v in self.ladder if v not in VARIANTS]
        if unknown:
            raise ValueError(f"unknown ladder variants: {unknown}")
        return tuple(self.ladder)

    def needs_seq_features(self) -> bool:
        return any(
            col in SEQ_COLUMNS for v in self.variants() for col in VARIANTS[v]
        )

    def config_hash(self) -> str:
        payload = asdict(self)
        payload.pop("out_dir")  # paths are not semantic
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def config_from_dict(raw: dict) -> RunConfig:
    """Build a RunConfig from parsed JSON, rejecting unknown keys."""
    raw = dict(raw)
    known = {
        "seed", "out_dir", "generator", "epoch_boundary", "embed_dim",
        "embedding_table", "encoder", "ranker", "ladder",
    }
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "seed" not in raw:
        raise ValueError("config must pin a seed; wall-clock defaults are not allowed")
    kwargs: dict = {"seed": int(raw["seed"])}
    if "out_dir" in raw:
        kwargs["out_dir"] = raw["out_dir"]
    if "generator" in raw:
        gen = dict(raw["generator"])
        if "list_len" in gen:
            gen["list_len"] = tuple(gen["list_len"])
        kwargs["generator"] = GeneratorConfig(**gen)
    if "epoch_boundary" in raw:
        kwargs["epoch_boundary"] = int(raw["epoch_boundary"])
    if "embed_dim" in raw:
        kwargs["embed_dim"] = int(raw["embed_dim"])
    if "embedding_table" in raw:
        kwargs["embedding_table"] = raw["embedding_table"]
    if "encoder" in raw:
        kwargs["encoder"] = EncoderTrainParams(**raw["encoder"])
    if "ranker" in raw:
        kwargs["ranker"] = RankerTrainParams(**raw["ranker"])
    if "ladder" in raw:
        kwargs["ladder"] = tuple(raw["ladder"])
    return RunConfig(**kwargs)


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def _make_embedder(config: RunConfig):
    if config.embedding_table:
        table = load_embedding_table(config.embedding_table)
        if table.dim != config.embed_dim:
            raise ValueError(
                f"embedding table dim {table.dim} != configured embed_dim {config.embed_dim}"
            )
        return table
    return HashEmbedder(config.embed_dim)


def _check_meta(meta: dict[str, str], config: RunConfig, artifact: str) -> None:
    found = meta.get("config_hash")
    expected = config.config_hash()
    if found != expected:
        raise ConfigHashError(
            f"{artifact}: config_hash {found!r} does not match current config {expected!r}; "
            "regenerate the earlier stages"
        )


def _require(path: str, stage: str) -> str:
    if not os.path.exists(path):
        raise PrerequisiteError(f"missing artifact {path!r}: run '{stage}' first")
    return path


def _read_log_meta(path: str) -> dict[str, str]:
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if "=" in body:
                key, _, value = body.partition("=")
                meta[key] = value
    return meta


def stage_gen_data(config: RunConfig, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    catalog = generate_catalog(config.generator)
    sessions = generate_sessions(config.generator, catalog)
    path = os.path.join(out_dir, SESSIONS_FILE)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config.config_hash()}\n")
        fh.write(f"# seed={config.seed}\n")
        fh.write(serialize_sessions(sessions))
    log.info("gen-data: %d sessions -> %s", len(sessions), path)
    return path


def _load_sessions(config: RunConfig, out_dir: str):
    path = _require(os.path.join(out_dir, SESSIONS_FILE), "gen-data")
    _check_meta(_read_log_meta(path), config, path)
    return read_session_log(path)


def stage_train_seq(config: RunConfig, out_dir: str) -> dict[str, str]:
    sessions = _load_sessions(config, out_dir)
    encoder_side, _ = split_by_epoch(sessions, config.epoch_boundary)
    if not encoder_side:
        raise ValueError(
            f"no sessions below epoch boundary {config.epoch_boundary}; cannot train encoders"
        )
    epochs = [s.epoch for s in encoder_side]
    paths = {}
    for mode in (TRANSFORMER, PERCEIVER):
        weights, _ = train_sequence_encoder(mode, encoder_side, config.encoder)
        path = os.path.join(out_dir, ENCODER_FILES[mode])
        save_encoder_weights(
            weights,
            path,
            extra={
                "config_hash": config.config_hash(),
                "epoch_lo": str(min(epochs)),
                "epoch_hi": str(max(epochs)),
                "epoch_boundary": str(config.epoch_boundary),
            },
        )
        paths[mode] = path
        log.info("train-seq: %s encoder -> %s", mode, path)
    return paths


def _load_encoders(config: RunConfig, out_dir: str):
    encoders = {}
    for mode, fname in ENCODER_FILES.items():
        path = _require(os.path.join(out_dir, fname), "train-seq")
        weights, meta = load_encoder_weights(path)
        _check_meta(meta, config, path)
        epoch_hi = int(meta.get("epoch_hi", -1))
        if epoch_hi >= config.epoch_boundary:
            raise LeakageError(
                f"{path}: encoder trained through epoch {epoch_hi}, which is inside the "
                f"ranker split (boundary {config.epoch_boundary}); retrain on the "
                "pre-boundary sessions"
            )
        encoders[mode] = weights
    return encoders


def stage_featurize(config: RunConfig, out_dir: str) -> str:
    sessions = _load_sessions(config, out_dir)
    _, ranker_side = split_by_epoch(sessions, config.epoch_boundary)
    if not ranker_side:
        raise ValueError(
            f"no sessions at or above epoch boundary {config.epoch_boundary}; nothing to featurize"
        )
    encoders = _load_encoders(config, out_dir) if config.needs_seq_features() else None
    embedder = _make_embedder(config)
    featurized = featurize_sessions(ranker_side, embedder, encoders)
    path = os.path.join(out_dir, FEATURES_FILE)
    write_features(
        featurized,
        path,
        meta={"config_hash": config.config_hash(), "seed": str(config.seed)},
    )
    log.info("featurize: %d impressions -> %s", len(featurized), path)
    return path


def _load_features(config: RunConfig, out_dir: str):
    path = _require(os.path.join(out_dir, FEATURES_FILE), "featurize")
    featurized, meta = read_features(path)
    _check_meta(meta, config, path)
    return featurized


def stage_train_ranker(config: RunConfig, out_dir: str) -> dict[str, str]:
    featurized = _load_features(config, out_dir)
    models = train_ladder(featurized, config.ranker, config.seed, config.variants())
    models_dir = os.path.join(out_dir, MODELS_DIR)
    os.makedirs(models_dir, exist_ok=True)
    paths = {}
    for variant, model in models.items():
        path = os.path.join(models_dir, f"{variant}.txt")
        save_ranker_model(
            model, path, extra={"config_hash": config.config_hash()}
        )
        paths[variant] = path
        log.info("train-ranker: %s -> %s", variant, path)
    return paths


def stage_evaluate(config: RunConfig, out_dir: str) -> str:
    featurized = _load_features(config, out_dir)
    models = {}
    for variant in config.variants():
        path = _require(
            os.path.join(out_dir, MODELS_DIR, f"{variant}.txt"), "train-ranker"
        )
        model, meta = load_ranker_model(path)
        _check_meta(meta, config, path)
        models[variant] = model
    report = evaluate_models(
        featurized,
        models,
        config.seed,
        meta={"config_hash": config.config_hash(), "seed": str(config.seed)},
    )
    path = os.path.join(out_dir, REPORT_TSV)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report_to_tsv(report))
    log.info("evaluate: %d rows -> %s", len(report.rows), path)
    return path


def stage_report(config: RunConfig, out_dir: str) -> str:
    tsv_path = _require(os.path.join(out_dir, REPORT_TSV), "evaluate")
    with open(tsv_path, encoding="utf-8") as fh:
        report = report_from_tsv(fh.read())
    _check_meta(report.meta, config, tsv_path)
    path = os.path.join(out_dir, REPORT_TXT)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_report(report))
    log.info("report: -> %s", path)
    return path


STAGES = {
    "gen-data": stage_gen_data,
    "train-seq": stage_train_seq,
    "featurize": stage_featurize,
    "train-ranker": stage_train_ranker,
    "evaluate": stage_evaluate,
    "report": stage_report,
}


def run_full_pipeline(config: RunConfig, out_dir: str) -> LiftReport:
    """Convenience for tests and scripts: all stages in order."""
    stage_gen_data(config, out_dir)
    stage_train_seq(config, out_dir)
    stage_featurize(config, out_dir)
    stage_train_ranker(config, out_dir)
    stage_evaluate(config, out_dir)
    stage_report(config, out_dir)
    with open(os.path.join(out_dir, REPORT_TSV), encoding="utf-8") as fh:
        return report_from_tsv(fh.read())
