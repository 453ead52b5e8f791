"""Command-line entry point: ``pqcluster <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from pqcluster import kmeans, labeling, pca, pipeline, tables, tsne
from pqcluster.autoencoder import ArchConfig, TrainConfig, encode_dataset, load_model, save_model, train
from pqcluster.errors import ConfigError, NumericalError, PQClusterError, StageError
from pqcluster.synth_gen import GenConfig, gen_dataset
from pqcluster.waveform_data import EventLabel, preprocess, read_jsonl, split, write_jsonl

logger = logging.getLogger("pqcluster")

EXIT_OK, EXIT_CONFIG, EXIT_STAGE, EXIT_NUMERICAL = 0, 2, 3, 4


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=pipeline._json_default) + "\n",
                          encoding="utf-8")


def _read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def cmd_gen(a):
    cfg = GenConfig.balanced(a.count_per_class, seed=a.seed, noise_std=a.noise, short_fraction=a.short_fraction)
    ds = gen_dataset(cfg)
    write_jsonl(ds, a.out)
    if a.out_exemplars:
        ex = gen_dataset(GenConfig.balanced(a.exemplars_per_class, seed=a.seed + 1_000_003,
                                            noise_std=a.noise, short_fraction=a.short_fraction))
        pipeline.write_exemplars(a.out_exemplars, ex)
    logger.info("wrote %d records to %s", len(ds), a.out)


def cmd_preprocess(a):
    raw = read_jsonl(a.data)
    ds = preprocess(raw, a.min_cycles, a.target_cycles)
    write_jsonl(ds, a.out)
    logger.info("kept %d of %d records", len(ds), len(raw))


def cmd_train(a):
    ds = split(preprocess(read_jsonl(a.data)), seed=a.seed)
    try:
        cfg = TrainConfig(epochs=a.epochs, batch_size=a.batch, learning_rate=a.lr, seed=a.seed, dtype=a.dtype)
        arch = ArchConfig(latent=a.latent)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    progress = (lambda ep, tr, va: logger.info("epoch %d train %.6g val %.6g", ep, tr, va))
    result = train(ds, cfg, arch, progress=progress)
    save_model(a.out_model, result.model, {"seed": a.seed})
    if a.out_history:
        _write_json(a.out_history, result.history)


def cmd_encode(a):
    model = load_model(a.model)
    ds = preprocess(read_jsonl(a.data))
    tables.write_matrix(a.out_features, ds.ids, encode_dataset(ds, model))


def cmd_pca(a):
    ids, X = tables.read_features(a.features)
    model = pca.fit(X, a.variance, a.components)
    pca.save(a.out_model, model)
    if a.out_features:
        tables.write_matrix(a.out_features, ids, pca.transform(model, X), prefix="p")
    logger.info("kept %d components (%.4f of variance)", model.n_components, model.explained_fraction)


def cmd_cluster(a):
    ids, X = tables.read_features(a.features)
    model = kmeans.fit(X, a.k, seed=a.seed, n_init=a.n_init)
    tables.write_assignments(a.out_assignments, ids, model.assignments)
    if a.out_centers:
        tables.write_centers(a.out_centers, model.centers)
    logger.info("objective %.6g after %d iterations", model.objective, model.n_iter)


def cmd_elbow(a):
    _, X = tables.read_features(a.features)
    scan = kmeans.elbow_scan(X, range(a.kmin, a.kmax + 1), seed=a.seed, n_init=a.n_init)
    tables.write_curve(a.out_curve, scan.k_values, scan.wss)
    print(f"knee {scan.knee} (strength {scan.knee_strength:.4f}{', weak' if scan.weak else ''})")


def cmd_silhouette(a):
    ids, X = tables.read_features(a.features)
    aids, assignments = tables.read_assignments(a.assignments)
    if aids != ids:
        raise ConfigError("features and assignments list different ids")
    rep = kmeans.silhouette_report(X, assignments)
    _write_json(a.out_report, rep)
    print(f"mean silhouette {rep['overall_mean']:.4f}")


def cmd_label(a):
    model = load_model(a.model)
    pca_model = pca.load(a.pca)
    centers = tables.read_centers(a.centers)
    exemplars = pipeline.read_exemplars(a.exemplars)
    cfg = pipeline.PipelineConfig()
    exs = pipeline.label_exemplars(exemplars, model, pca_model, cfg)
    table = labeling.similarity_table(centers, exs)
    la = labeling.assign_labels(table, a.strategy, a.threshold)
    _write_json(a.out, {"similarity_table": table.to_dict(), **la.to_dict()})
    for c in sorted(la.mapping):
        print(f"cluster {c}: {la.name(c)}")


def _cluster_names(path, assignments):
    if path is None:
        return [f"cluster {c}" for c in assignments]
    doc = _read_json(path)
    mapping = {}
    for k, v in doc["assignment"].items():
        mapping[int(k)] = EventLabel.parse(v) if isinstance(v, str) else int(v)
    la = labeling.LabelAssignment(mapping)
    return [la.name(c) for c in assignments]


def cmd_tsne(a):
    ids, X = tables.read_features(a.features)
    try:
        cfg = tsne.TsneConfig(perplexity=a.perplexity, iterations=a.iters, seed=a.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    emb = tsne.fit(X, cfg)
    if a.assignments:
        aids, assignments = tables.read_assignments(a.assignments)
        if aids != ids:
            raise ConfigError("features and assignments list different ids")
    else:
        assignments = np.full(len(ids), -1)
    names = _cluster_names(a.labels, assignments) if a.assignments else [""] * len(ids)
    tables.write_rows(a.out, ["id", "x", "y", "cluster", "label"],
                      [(i, float(p[0]), float(p[1]), int(c), n)
                       for i, p, c, n in zip(ids, emb.points, assignments, names)])
    print(f"final KL {emb.kl_history[-1]:.6g}")
    print(pipeline.TSNE_NOTE)


def cmd_report(a):
    if a.features:
        if not (a.assignments and a.out_pca3):
            raise ConfigError("--features needs --assignments and --out-pca3")
        ids, X = tables.read_features(a.features)
        aids, assignments = tables.read_assignments(a.assignments)
        if aids != ids:
            raise ConfigError("features and assignments list different ids")
        p3 = pipeline.report_pca3(X, assignments)
        tables.write_rows(a.out_pca3, ["id", "pc1", "pc2", "pc3", "cluster"],
                          [(i, float(r[0]), float(r[1]), float(r[2]), int(c))
                           for i, r, c in zip(ids, p3, assignments)])
    if a.run_dir:
        print(summarize(_read_json(Path(a.run_dir) / "report.json")))
    if not (a.features or a.run_dir):
        raise ConfigError("report needs --run-dir or --features/--assignments/--out-pca3")


def summarize(rep):
    lines = [f"records: {rep['n_records']} (removed short: {rep['n_removed_short']})"]
    hist = rep["autoencoder"]["loss_history"]
    lines.append(f"autoencoder val MSE: {hist['val'][0]:.6g} -> {hist['val'][-1]:.6g} over {len(hist['val'])} epochs")
    p = rep["pca"]
    lines.append(f"PCA: {p['n_components']} components, {p['explained_fraction']:.4f} of variance")
    e = rep["elbow"]
    lines.append(f"elbow knee: {e['knee']}{' (weak)' if e['weak'] else ''}; k used: {rep['kmeans']['k']}")
    if "silhouette" in rep:
        lines.append(f"mean silhouette: {rep['silhouette']['overall_mean']:.4f}")
    for c, name in sorted(rep["label_assignment"]["assignment"].items(), key=lambda kv: int(kv[0])):
        size = rep["kmeans"]["sizes"][int(c)]
        lines.append(f"  cluster {c} ({size} records): {name}")
    lines.append(f"t-SNE final KL: {rep['tsne']['kl_final']:.6g}")
    lines.append(rep["tsne"]["note"])
    return "\n".join(lines)


def _pipeline_config(a):
    base = pipeline.PipelineConfig.load(a.config).to_dict() if a.config else {}
    overrides = {
        "data": a.data, "exemplars": a.exemplars, "out_dir": a.out_dir, "seed": a.seed,
        "count_per_class": a.count_per_class, "k": a.k, "label_strategy": a.strategy,
        "label_threshold": a.threshold,
    }
    base.update({key: v for key, v in overrides.items() if v is not None})
    if a.seed is not None:
        # explicit global seed reaches every stage
        base.setdefault("train", {})["seed"] = a.seed
        base.setdefault("tsne", {})["seed"] = a.seed
    if a.epochs is not None:
        base.setdefault("train", {})["epochs"] = a.epochs
    if a.elbow:
        base["k"] = None
    return pipeline.PipelineConfig.from_dict(base)


def cmd_run_all(a):
    rep = pipeline.run_all(_pipeline_config(a))
    print(summarize(rep))


def cmd_sweep(a):
    cfg = _pipeline_config(a)
    try:
        dims = [int(d) for d in a.dims.split(",") if d.strip()]
    except ValueError:
        raise ConfigError(f"bad --dims {a.dims!r}") from None
    rows, best = pipeline.sweep_bottleneck(cfg, dims, out=a.out)
    for r in rows:
        print(f"dim {r['dim']}: val MSE {r['val_mse']:.6g}, mean silhouette {r['silhouette']:.4f}")
    print(f"recommended bottleneck: {best}")


def _pipeline_args(p):
    p.add_argument("--config", help="JSON pipeline config; flags below override it")
    p.add_argument("--data")
    p.add_argument("--exemplars")
    p.add_argument("--out-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--count-per-class", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--elbow", action="store_true", help="take k from the elbow knee")
    p.add_argument("--strategy", choices=labeling.STRATEGIES)
    p.add_argument("--threshold", type=float)


def build_parser():
    ap = argparse.ArgumentParser(prog="pqcluster", description=__doc__)
    ap.add_argument("--threads", type=int, help="cap BLAS/OpenMP threads")
    ap.add_argument("--log-level", default="INFO")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic dataset")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--count-per-class", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--short-fraction", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.add_argument("--out-exemplars", help="also write a labeled exemplar file")
    p.add_argument("--exemplars-per-class", type=int, default=10)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("preprocess", help="filter, per-unit scale and pad records")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-cycles", type=int, default=8)
    p.add_argument("--target-cycles", type=int, default=16)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train the autoencoder")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--latent", type=int, default=60)
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-history", help="JSON file for the loss curves")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="encode records to features.csv")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-features", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("pca", help="fit PCA on a feature CSV")
    p.add_argument("--features", required=True)
    p.add_argument("--variance", type=float, default=0.95)
    p.add_argument("--components", type=int, help="fixed component count")
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-features", help="CSV of reduced features")
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("cluster", help="K-means on a feature CSV")
    p.add_argument("--features", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--n-init", type=int, default=10)
    p.add_argument("--out-assignments", required=True)
    p.add_argument("--out-centers")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("elbow", help="WSS curve over a k range")
    p.add_argument("--features", required=True)
    p.add_argument("--kmin", type=int, default=2)
    p.add_argument("--kmax", type=int, default=15)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--n-init", type=int, default=10)
    p.add_argument("--out-curve", required=True)
    p.set_defaults(func=cmd_elbow)

    p = sub.add_parser("silhouette", help="silhouette report for assignments")
    p.add_argument("--features", required=True)
    p.add_argument("--assignments", required=True)
    p.add_argument("--out-report", required=True)
    p.set_defaults(func=cmd_silhouette)

    p = sub.add_parser("label", help="name clusters from labeled exemplars")
    p.add_argument("--model", required=True)
    p.add_argument("--pca", required=True)
    p.add_argument("--centers", required=True)
    p.add_argument("--exemplars", required=True)
    p.add_argument("--strategy", choices=labeling.STRATEGIES, default="greedy-matching")
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("tsne", help="2-D t-SNE embedding")
    p.add_argument("--features", required=True)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--assignments", help="cluster column source")
    p.add_argument("--labels", help="label JSON from the label subcommand")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tsne)

    p = sub.add_parser("report", help="summarize a run or export the 3-component scatter")
    p.add_argument("--run-dir")
    p.add_argument("--features")
    p.add_argument("--assignments")
    p.add_argument("--out-pca3")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run-all", help="run every stage")
    _pipeline_args(p)
    p.set_defaults(func=cmd_run_all)

    p = sub.add_parser("sweep", help="grid over bottleneck sizes")
    _pipeline_args(p)
    p.add_argument("--dims", default="15,60,240")
    p.add_argument("--out", help="CSV of dim, val_mse, silhouette")
    p.set_defaults(func=cmd_sweep)
    return ap


def _dispatch(a):
    if a.threads is None:
        return a.func(a)
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=a.threads):
        return a.func(a)


def main(argv=None):
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(a.log_level).upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    if a.threads is not None and a.threads < 1:
        logger.error("--threads must be >= 1")
        return EXIT_CONFIG
    try:
        _dispatch(a)
    except (ConfigError, FileNotFoundError) as exc:
        logger.error("config error: %s", exc)
        return EXIT_CONFIG
    except StageError as exc:
        logger.error("%s", exc)
        if isinstance(exc.cause, ConfigError):
            return EXIT_CONFIG
        return EXIT_NUMERICAL if isinstance(exc.cause, NumericalError) else EXIT_STAGE
    except NumericalError as exc:
        logger.error("numerical abort: %s", exc)
        return EXIT_NUMERICAL
    except (PQClusterError, ValueError, OSError, KeyError) as exc:
        logger.error("%s failed: %s", a.command, exc)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
