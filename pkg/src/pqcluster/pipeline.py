"""End-to-end run: preprocess -> autoencoder -> PCA -> K-means -> labels -> t-SNE."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from pqcluster import kernels, kmeans, labeling, pca, tables, tsne
from pqcluster.autoencoder import ArchConfig, TrainConfig, encode_dataset, save_model, train
from pqcluster.errors import ConfigError, StageError
from pqcluster.synth_gen import GenConfig, gen_dataset
from pqcluster.waveform_data import (
    MIN_CYCLES, TARGET_CYCLES, Dataset, EventLabel, WaveformRecord, iter_jsonl, preprocess, read_jsonl, split,
)

logger = logging.getLogger(__name__)

TSNE_NOTE = ("t-SNE keeps neighbourhoods, not distances or densities: cluster sizes, "
             "shapes and gaps in the embedding carry no meaning.")


@dataclass
class PipelineConfig:
    out_dir: str = "run"
    data: Optional[str] = None        # dataset JSONL; synthetic data when unset
    exemplars: Optional[str] = None   # exemplar JSONL; synthetic exemplars when data is synthetic
    seed: int = 7
    count_per_class: int = 100
    noise_std: float = 0.01
    short_fraction: float = 0.0
    exemplars_per_class: int = 10
    min_cycles: int = MIN_CYCLES
    target_cycles: int = TARGET_CYCLES
    split_ratios: tuple = (0.70, 0.15, 0.15)
    train: TrainConfig = field(default_factory=TrainConfig)
    arch: ArchConfig = field(default_factory=ArchConfig)
    pca_variance: float = 0.95
    k: Optional[int] = 8
    k_min: int = 2
    k_max: int = 15
    n_init: int = 10
    label_strategy: str = "greedy-matching"
    label_threshold: float = 0.0
    tsne: tsne.TsneConfig = field(default_factory=tsne.TsneConfig)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        seed = int(d.get("seed", cls.seed))
        try:
            nested = {
                "train": TrainConfig(**{"seed": seed, **d.pop("train", {})}),
                "arch": ArchConfig(**d.pop("arch", {})),
                "tsne": tsne.TsneConfig(**{"seed": seed, **d.pop("tsne", {})}),
            }
            if "split_ratios" in d:
                d["split_ratios"] = tuple(d["split_ratios"])
            cfg = cls(**d, **nested)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["arch"] = self.arch.to_dict()
        d["split_ratios"] = list(self.split_ratios)
        return d

    def validate(self):
        if self.data is not None and not Path(self.data).is_file():
            raise ConfigError(f"data file {self.data} does not exist")
        if self.k is not None and self.k < 1:
            raise ConfigError("k must be >= 1")
        if not 2 <= self.k_min <= self.k_max:
            raise ConfigError("need 2 <= k_min <= k_max")
        if self.label_strategy not in labeling.STRATEGIES:
            raise ConfigError(f"label_strategy must be one of {labeling.STRATEGIES}")
        if not 0 < self.pca_variance <= 1:
            raise ConfigError("pca_variance must lie in (0, 1]")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def read_exemplars(path) -> Dataset:
    """Exemplar JSONL: ``{"label": ..., "record": {...}}`` lines or labeled records."""
    records = []
    for d in iter_jsonl(path):
        if "record" in d:
            rec = dict(d["record"])
            rec["label"] = d.get("label", rec.get("label"))
        else:
            rec = d
        r = WaveformRecord.from_dict(rec)
        if r.label is None:
            raise ValueError(f"{path}: exemplar {r.id} has no label")
        records.append(r)
    return Dataset(records)


def write_exemplars(path, dataset: Dataset):
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for r in dataset:
            fh.write(json.dumps({"label": r.label.value, "record": r.to_dict()}, separators=(",", ":")))
            fh.write("\n")


def report_pca3(features, assignments):
    """Three leading principal components of ``features``, rows aligned with ``assignments``."""
    features = np.asarray(features, dtype=np.float64)
    if len(assignments) != features.shape[0]:
        raise ValueError("features and assignments must align")
    model = pca.fit(features, fixed_m=3)
    return pca.transform(model, features)


def label_exemplars(exemplars: Dataset, model, pca_model, cfg):
    ex = preprocess(exemplars, cfg.min_cycles, cfg.target_cycles)
    feats = pca.transform(pca_model, encode_dataset(ex, model))
    return [labeling.LabeledExemplar(f, r.label) for f, r in zip(feats, ex)]


class Run:
    """Mutable bookkeeping for one pipeline execution."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.timings = {}
        self.artifacts = []
        self.report = {}

    def stage(self, name, fn, *args):
        logger.info("stage %s", name)
        t0 = time.perf_counter()
        try:
            result = fn(*args)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        self.timings[name] = time.perf_counter() - t0
        return result

    def path(self, name):
        p = self.out / name
        self.artifacts.append(name)
        return p

    def hashes(self):
        return {name: sha256_file(self.out / name) for name in sorted(set(self.artifacts))}


def _load_data(cfg):
    if cfg.data is not None:
        return read_jsonl(cfg.data)
    gen = GenConfig.balanced(cfg.count_per_class, seed=cfg.seed, noise_std=cfg.noise_std,
                             short_fraction=cfg.short_fraction)
    return gen_dataset(gen)


def _load_exemplars(cfg):
    if cfg.exemplars is not None:
        if not Path(cfg.exemplars).is_file():
            logger.warning("exemplar file %s not found; labeling skipped", cfg.exemplars)
            return None
        return read_exemplars(cfg.exemplars)
    if cfg.data is None and cfg.exemplars_per_class > 0:
        # disjoint seed so exemplars never duplicate dataset records
        gen = GenConfig.balanced(cfg.exemplars_per_class, seed=cfg.seed + 1_000_003,
                                 noise_std=cfg.noise_std, short_fraction=cfg.short_fraction)
        return gen_dataset(gen)
    logger.warning("no exemplars configured; labeling skipped")
    return None


def choose_k(Z, cfg, report):
    ks = range(cfg.k_min, min(cfg.k_max, Z.shape[0]) + 1)
    scan = kmeans.elbow_scan(Z, ks, seed=cfg.seed, n_init=cfg.n_init)
    report["elbow"] = {"k": scan.k_values, "wss": scan.wss, "knee": scan.knee,
                       "knee_strength": scan.knee_strength, "weak": scan.weak}
    k = cfg.k if cfg.k is not None else (scan.knee or cfg.k_min)
    return scan, k


def run_all(cfg: PipelineConfig) -> dict:
    """Execute every stage in order, writing artifacts under ``cfg.out_dir``."""
    run = Run(cfg)
    rep = run.report
    rep["config"] = cfg.to_dict()
    rep["kernel_backend"] = kernels.BACKEND

    raw = run.stage("load", _load_data, cfg)
    ds = run.stage("preprocess", lambda: preprocess(raw, cfg.min_cycles, cfg.target_cycles))
    rep["n_records"] = len(ds)
    rep["n_removed_short"] = len(raw) - len(ds)
    ds = run.stage("split", lambda: split(ds, cfg.split_ratios, cfg.seed))

    result = run.stage("train", lambda: train(ds, cfg.train, cfg.arch))
    model = result.model
    save_model(run.path("model.bin"), model, {"seed": cfg.train.seed})
    rep["autoencoder"] = {"loss_history": result.history, "arch": cfg.arch.to_dict()}

    feats = run.stage("encode", encode_dataset, ds, model)
    tables.write_matrix(run.path("features.csv"), ds.ids, feats)

    pca_model = run.stage("pca", lambda: pca.fit(feats, cfg.pca_variance))
    Z = pca.transform(pca_model, feats)
    pca.save(run.path("pca.bin"), pca_model)
    tables.write_matrix(run.path("pca_features.csv"), ds.ids, Z, prefix="p")
    rep["pca"] = {"n_components": pca_model.n_components,
                  "explained_fraction": pca_model.explained_fraction,
                  "eigenvalues": pca_model.eigenvalues.tolist()}

    scan, k = run.stage("elbow", choose_k, Z, cfg, rep)
    tables.write_curve(run.path("elbow.csv"), scan.k_values, scan.wss)
    cm = run.stage("cluster", lambda: kmeans.fit(Z, k, seed=cfg.seed, n_init=cfg.n_init))
    tables.write_assignments(run.path("assignments.csv"), ds.ids, cm.assignments)
    tables.write_centers(run.path("centers.csv"), cm.centers)
    hist = np.asarray(cm.wss_history)
    rep["kmeans"] = {"k": k, "objective": cm.objective, "wss_history": cm.wss_history,
                     "wss_history_monotone": bool(np.all(np.diff(hist) <= 1e-9 * hist[:-1])),
                     "sizes": cm.sizes.tolist(), "n_iter": cm.n_iter}
    if k >= 2:
        sil = run.stage("silhouette", kmeans.silhouette_report, Z, cm.assignments)
        rep["silhouette"] = sil
        Path(run.path("silhouette.json")).write_text(json.dumps(sil, indent=2, sort_keys=True))

    exemplars = run.stage("exemplars", _load_exemplars, cfg)
    assignment = labeling.LabelAssignment({c: c for c in range(k)}, cfg.label_strategy, cfg.label_threshold)
    if exemplars is not None:
        def _label():
            exs = label_exemplars(exemplars, model, pca_model, cfg)
            table = labeling.similarity_table(cm.centers, exs)
            return table, labeling.assign_labels(table, cfg.label_strategy, cfg.label_threshold)
        table, assignment = run.stage("label", _label)
        rep["similarity_table"] = table.to_dict()
        labels_doc = {"similarity_table": table.to_dict(), **assignment.to_dict()}
        Path(run.path("labels.json")).write_text(json.dumps(labels_doc, indent=2, sort_keys=True))
    rep["label_assignment"] = assignment.to_dict()
    names = [assignment.name(c) for c in cm.assignments]

    emb = run.stage("tsne", tsne.fit, Z, cfg.tsne)
    tables.write_rows(run.path("tsne.csv"), ["id", "x", "y", "cluster", "label"],
                      [(rid, float(p[0]), float(p[1]), int(c), nm)
                       for rid, p, c, nm in zip(ds.ids, emb.points, cm.assignments, names)])
    rep["tsne"] = {"kl_final": emb.kl_history[-1], "kl_history": emb.kl_history[::10],
                   "note": TSNE_NOTE, "points": emb.points.tolist()}

    p3 = run.stage("pca3", report_pca3, feats, cm.assignments)
    tables.write_rows(run.path("pca3.csv"), ["id", "pc1", "pc2", "pc3", "cluster"],
                      [(rid, float(r[0]), float(r[1]), float(r[2]), int(c))
                       for rid, r, c in zip(ds.ids, p3, cm.assignments)])
    rep["pca3"] = {"points": p3.tolist(), "cluster": cm.assignments.tolist()}
    rep["ids"] = ds.ids

    rep["timings"] = run.timings
    rep["artifact_hashes"] = run.hashes()
    (run.out / "report.json").write_text(json.dumps(rep, indent=2, sort_keys=True, default=_json_default))
    return rep


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, EventLabel):
        return o.value
    raise TypeError(f"not JSON serializable: {type(o)}")


def sweep_bottleneck(cfg: PipelineConfig, dims, out=None):
    """Train one autoencoder per bottleneck size; tabulate val MSE and silhouette."""
    dims = [int(d) for d in dims]
    if not dims:
        raise ConfigError("sweep needs at least one bottleneck size")
    ds = split(preprocess(_load_data(cfg), cfg.min_cycles, cfg.target_cycles), cfg.split_ratios, cfg.seed)
    rows = []
    for dim in dims:
        arch = dataclasses.replace(cfg.arch, latent=dim)
        result = train(ds, cfg.train, arch)
        feats = encode_dataset(ds, result.model)
        Z = pca.transform(pca.fit(feats, cfg.pca_variance), feats)
        k = cfg.k
        if k is None:
            _, k = choose_k(Z, cfg, {})
        cm = kmeans.fit(Z, k, seed=cfg.seed, n_init=cfg.n_init)
        _, sil = kmeans.silhouette(Z, cm.assignments)
        rows.append({"dim": dim, "val_mse": result.history["val"][-1], "silhouette": sil})
        logger.info("sweep dim %d: val %.6g silhouette %.4f", dim, rows[-1]["val_mse"], sil)
    best = max(rows, key=lambda r: r["silhouette"])["dim"]
    if out is not None:
        tables.write_rows(out, ["dim", "val_mse", "silhouette"],
                          [(r["dim"], float(r["val_mse"]), float(r["silhouette"])) for r in rows])
    return rows, best
