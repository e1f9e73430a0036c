"""Command-line entry points.

Data directory layout:

    DIR/compositions/{id}.json   scene description
    DIR/compositions/{id}.png    rendered raster
    DIR/ratings.jsonl            one rating record per line

All commands take --seed and an optional --config JSON file whose keys
override the defaults below.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import autoenc, bovw, features, harness, pipeline, scene, targets

DEFAULT_CONFIG: dict = {
    "generation": {
        "resolution": 512,
        "gray_level": 128,
        "counts": {
            "circle": {"black": [0, 2], "white": [0, 2]},
            "rectangle": {"black": [0, 2], "white": [0, 2]},
            "triangle": {"black": [0, 2], "white": [0, 2]},
        },
        "size_range": {
            "circle": [0.04, 0.12],
            "rectangle": [0.08, 0.25],
            "triangle": [0.06, 0.16],
        },
    },
    "grid": {
        "setups": ["BN", "BG", "NG", "BNG"],
        "variants": ["d3"],
        "models": ["tree", "forest", "gb", "xgboost", "logreg", "ridge", "svm", "mlp"],
        "n_folds": 10,
        "ks": list(bovw.BOVW_KS),
        "kmeans_iters": 100,
        "tune": False,
        "model_hp": {},
    },
    "autoencoder": {
        "hidden": 8,
        "epochs": 20,
        "lr": 0.01,
        "momentum": 0.9,
        "batch_size": 32,
        "train_frac": 0.7,
    },
    "service": {"subset_size": 300, "rounds_target": 3},
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: str | None) -> dict:
    if path is None:
        return json.loads(json.dumps(DEFAULT_CONFIG))
    with open(path) as fh:
        return _merge(DEFAULT_CONFIG, json.load(fh))


def _resolve_comp_dir(data_dir: Path) -> Path:
    """Accept either the dataset root (with a compositions/ subdir) or a
    directory holding the composition files directly."""
    root = Path(data_dir)
    sub = root / "compositions"
    return sub if sub.exists() else root


def load_compositions(data_dir: Path) -> list[scene.Composition]:
    comp_dir = _resolve_comp_dir(data_dir)
    comps = [scene.load_composition(p) for p in sorted(comp_dir.glob("*.json"))]
    ids = [c.id for c in comps]
    if len(set(ids)) != len(ids):
        raise scene.FormatError("duplicate composition ids in dataset")
    return comps


# ---------------------------------------------------------------------------
# commands

def cmd_generate(args) -> int:
    cfg = load_config(args.config)["generation"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    children = np.random.SeedSequence(args.seed).spawn(args.count)
    for i in range(args.count):
        rng = np.random.Generator(np.random.PCG64(children[i]))
        gen_cfg = scene.sample_gen_config(cfg, rng)
        comp_seed = int(rng.integers(0, 2 ** 63))
        comp = scene.generate(gen_cfg, comp_seed, comp_id=f"comp-{args.seed:04d}-{i:05d}")
        scene.save_composition(out / f"{comp.id}.json", comp)
        scene.save_raster(out / f"{comp.id}.png", scene.rasterize(comp), comp.gray_level)
    print(f"wrote {args.count} compositions to {out}")
    return 0


def cmd_rasterize(args) -> int:
    comps = load_compositions(Path(args.data))
    out = _resolve_comp_dir(Path(args.out or args.data))
    out.mkdir(parents=True, exist_ok=True)
    for comp in comps:
        scene.save_raster(out / f"{comp.id}.png", scene.rasterize(comp), comp.gray_level)
    print(f"rasterized {len(comps)} compositions")
    return 0


def _extract_blocks(comps, dataset: str, ae_params_path=None, codebooks_path=None):
    rasters = [scene.rasterize(c) for c in comps]
    hc = features.extract_many(comps, rasters)
    blocks = [(hc, list(features.HANDCRAFTED_LAYOUT.names))]
    if dataset in ("d1", "d2"):
        if ae_params_path is None:
            raise SystemExit("dataset d1/d2 needs --ae-params (run train-ae first)")
        spec, params = autoenc.load_params(ae_params_path)
        gray = comps[0].gray_level if comps else 128
        codes, names = autoenc.encode_all(spec, params, rasters, gray)
        blocks.append((codes, names))
    if dataset == "d1":
        if codebooks_path is None:
            raise SystemExit("dataset d1 needs --codebooks (run fit-bovw first)")
        codebooks = bovw.load_codebooks(codebooks_path)
        gray = comps[0].gray_level if comps else 128
        descriptors = [bovw.detect_describe(r, gray) for r in rasters]
        block, names = bovw.bovw_block(descriptors, codebooks)
        blocks.append((block, names))
    matrix = np.hstack([b for b, _ in blocks])
    names = [n for _, ns in blocks for n in ns]
    return matrix, names


def cmd_extract(args) -> int:
    comps = load_compositions(Path(args.data))
    matrix, names = _extract_blocks(comps, args.dataset, args.ae_params, args.codebooks)
    version = f"{features.HANDCRAFTED_LAYOUT.version}+{args.dataset}"
    if args.polish:
        # exploratory single-fit polish; grid evaluation refits per fold
        plan = pipeline.fit_transform_plan(matrix, names)
        matrix = pipeline.apply_transform_plan(plan, matrix)
        n_hc = len(features.HANDCRAFTED_LAYOUT)
        projection = pipeline.fit_projections(matrix[:, :n_hc])
        proj_block, proj_names = projection.apply(matrix[:, :n_hc])
        matrix = np.hstack([matrix, proj_block])
        names = list(names) + proj_names
        out = Path(args.out)
        with open(out.with_suffix(".plan.json"), "w") as fh:
            json.dump(plan.to_dict(), fh, indent=2, sort_keys=True)
        with open(out.with_suffix(".projection.json"), "w") as fh:
            json.dump({"mean": projection.mean.tolist(),
                       "pca_basis": projection.pca_basis.tolist(),
                       "explained": projection.explained.tolist(),
                       "svd_basis": projection.svd_basis.tolist()},
                      fh, indent=2, sort_keys=True)
        version += "+polished"
    features.write_feature_csv(args.out, [c.id for c in comps], matrix, names, version)
    print(f"wrote {matrix.shape[0]} x {matrix.shape[1]} features to {args.out}")
    return 0


def cmd_train_ae(args) -> int:
    cfg = load_config(args.config)["autoencoder"]
    comps = load_compositions(Path(args.data))
    if not comps:
        raise SystemExit("no compositions found")
    rasters = [scene.rasterize(c) for c in comps]
    gray = comps[0].gray_level
    images = np.stack([autoenc.resize_raster(r, gray) for r in rasters])
    rng = np.random.Generator(np.random.PCG64(args.seed))
    order = rng.permutation(len(images))
    n_train = max(1, int(round(cfg["train_frac"] * len(images))))
    train_images = images[order[:n_train]]
    val_images = images[order[n_train:]] if n_train < len(images) else None
    spec = autoenc.default_spec(hidden=cfg["hidden"])
    epochs = args.epochs if args.epochs is not None else cfg["epochs"]
    params, report = autoenc.train(
        spec, train_images, epochs=epochs, seed=args.seed, lr=cfg["lr"],
        momentum=cfg["momentum"], batch_size=cfg["batch_size"], val_images=val_images)
    autoenc.save_params(args.out, spec, params)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write("epoch,train_loss,val_loss\n")
            for e, (tr, vl) in enumerate(zip(report.train_loss, report.val_loss)):
                fh.write(f"{e},{tr!r},{vl!r}\n")
    print(f"trained autoencoder for {epochs} epochs; "
          f"final val loss {report.val_loss[-1]:.6f}")
    return 0


def cmd_fit_bovw(args) -> int:
    cfg = load_config(args.config)["grid"]
    comps = load_compositions(Path(args.data))
    rasters = [scene.rasterize(c) for c in comps]
    gray = comps[0].gray_level if comps else 128
    descriptors = [bovw.detect_describe(r, gray) for r in rasters]
    ks = [int(k) for k in (args.ks.split(",") if args.ks else cfg["ks"])]
    codebooks = {k: bovw.fit_codebook(descriptors, k, seed=args.seed + k,
                                      max_iter=cfg["kmeans_iters"]) for k in ks}
    bovw.save_codebooks(args.out, codebooks)
    print(f"fit {len(ks)} codebooks on {sum(d.shape[0] for d in descriptors)} descriptors")
    return 0


def _load_labels(comps, ratings_path, rater=None):
    records = targets.load_ratings(ratings_path)
    initial = targets.initial_ratings(records, rater)
    labeled = [c for c in comps if c.id in initial]
    labels = np.array([targets.CLASS_LABELS.index(targets.merge_classes(initial[c.id]))
                       for c in labeled], dtype=int)
    return labeled, labels


def cmd_train(args) -> int:
    from .learn import make_model, model_to_dict
    from .service import ModelBundle
    comps = load_compositions(Path(args.data))
    labeled, labels = _load_labels(comps, args.ratings, args.rater)
    if not labeled:
        raise SystemExit("no rated compositions")
    rasters = [scene.rasterize(c) for c in labeled]
    hc = features.extract_many(labeled, rasters)
    plan = pipeline.fit_transform_plan(hc, features.HANDCRAFTED_LAYOUT.names)
    polished = pipeline.apply_transform_plan(plan, hc)
    projection = pipeline.fit_projections(polished)
    proj_block, _ = projection.apply(polished)
    X = np.hstack([polished, proj_block])
    model = make_model(args.model, seed=args.seed)
    model.fit(X, labels, len(targets.CLASS_LABELS))
    bundle = ModelBundle.to_dict(model_to_dict(model), plan, projection,
                                 targets.CLASS_LABELS)
    with open(args.out, "w") as fh:
        json.dump(bundle, fh)
    acc = float((model.predict(X) == labels).mean())
    print(f"trained {args.model} on {len(labeled)} compositions "
          f"(train accuracy {acc:.3f}); bundle at {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    if not args.grid:
        raise SystemExit("only --grid evaluation is implemented")
    cfg = load_config(args.config)
    grid_cfg = cfg["grid"]
    comps = load_compositions(Path(args.data))
    labeled, labels = _load_labels(comps, args.ratings, args.rater)
    if not labeled:
        raise SystemExit("no rated compositions")
    rasters = [scene.rasterize(c) for c in labeled]
    hc = features.extract_many(labeled, rasters)
    gray = labeled[0].gray_level
    variants = tuple(grid_cfg["variants"])
    ae_block = None
    descriptors = None
    if any(v in ("d1", "d2") for v in variants):
        ae_cfg = cfg["autoencoder"]
        images = np.stack([autoenc.resize_raster(r, gray) for r in rasters])
        rng = np.random.Generator(np.random.PCG64(harness._derive_seed(args.seed, "ae")))
        order = rng.permutation(len(images))
        n_train = max(1, int(round(ae_cfg["train_frac"] * len(images))))
        spec = autoenc.default_spec(hidden=ae_cfg["hidden"])
        params, _ = autoenc.train(
            spec, images[order[:n_train]], epochs=ae_cfg["epochs"], seed=args.seed,
            lr=ae_cfg["lr"], momentum=ae_cfg["momentum"], batch_size=ae_cfg["batch_size"])
        ae_block, _ = autoenc.encode_all(spec, params, rasters, gray)
    if "d1" in variants:
        descriptors = [bovw.detect_describe(r, gray) for r in rasters]
    bundle = harness.FeatureBundle(
        ids=[c.id for c in labeled], handcrafted=hc,
        hc_names=list(features.HANDCRAFTED_LAYOUT.names),
        ae=ae_block, descriptors=descriptors)
    grid = harness.GridConfig(
        setups=tuple(grid_cfg["setups"]), variants=variants,
        models=tuple(grid_cfg["models"]), n_folds=grid_cfg["n_folds"], seed=args.seed,
        ks=tuple(grid_cfg["ks"]), kmeans_iters=grid_cfg["kmeans_iters"],
        tune=grid_cfg["tune"], model_hp=grid_cfg.get("model_hp", {}))
    report = harness.run_grid(bundle, labels, grid)
    out = Path(args.out)
    out.write_text(report.to_json())
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    print(harness.render_report(report))
    print(f"report written to {out}")
    return 0


def cmd_simulate_convergence(args) -> int:
    records = targets.load_ratings(args.reratings)
    dist = targets.deviation_distributions(records, args.rater)
    if dist.flagged:
        print(f"note: classes {sorted(dist.flagged)} have no re-ratings "
              f"(degenerate at 0)")
    out = targets.simulate_convergence(dist, rounds=args.rounds, trials=args.trials,
                                       seed=args.seed)
    print(out.as_table())
    return 0


def cmd_serve(args) -> int:
    from .service import serve
    cfg = load_config(args.config)["service"]
    serve(args.port, args.data, subset_size=cfg["subset_size"],
          rounds_target=cfg["rounds_target"], model_path=args.model, ui_dir=args.ui,
          host=args.host)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="harmonylab")
    parser.add_argument("--config", default=None, help="JSON config overriding defaults")
    parser.add_argument("--seed", type=int, default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate compositions (JSON + PNG)")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("rasterize", help="re-render PNGs from composition JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_rasterize)

    p = sub.add_parser("extract", help="write the raw feature CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dataset", choices=pipeline.VARIANTS, default="d3")
    p.add_argument("--ae-params", default=None)
    p.add_argument("--codebooks", default=None)
    p.add_argument("--polish", action="store_true",
                   help="fit transforms/projections on the whole set and write "
                        "plan/projection JSON sidecars next to the CSV")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train-ae", help="train the convolutional autoencoder")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--report", default=None, help="per-epoch loss CSV")
    p.set_defaults(func=cmd_train_ae)

    p = sub.add_parser("fit-bovw", help="fit k-means codebooks")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ks", default=None, help="comma-separated codebook sizes")
    p.set_defaults(func=cmd_fit_bovw)

    p = sub.add_parser("train", help="train one model into a serving bundle (d3)")
    p.add_argument("--data", required=True)
    p.add_argument("--ratings", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rater", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run the experiment grid")
    p.add_argument("--grid", action="store_true")
    p.add_argument("--data", required=True)
    p.add_argument("--ratings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None)
    p.add_argument("--rater", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate-convergence", help="converged ratings from re-ratings")
    p.add_argument("--reratings", required=True)
    p.add_argument("--rounds", type=int, default=200)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--rater", default=None)
    p.set_defaults(func=cmd_simulate_convergence)

    p = sub.add_parser("serve", help="run the rating HTTP service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--ui", default=None)
    p.set_defaults(func=cmd_serve)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
