"""Command-line pipeline: synth, fit, train, eval, predict, embed.

All commands work inside one directory (``--out``): synth writes the point
clouds, fit turns them into box sequences, train fits the autoencoder,
eval compares methods, predict and embed consume the checkpoint.  Every
piece of randomness flows from the config seeds, so identical invocations
produce byte-identical output files; ``--threads`` only parallelizes
fitting across (simulation, component) pairs without changing results.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import io as iomod
from .autoenc import TrainConfig, forward, train
from .baselines import METHOD_ORDER, run_comparison
from .dataset import (
    ComponentSequence,
    SimulationRecord,
    denormalize_frames,
    normalize_apply,
    split,
)
from .embed import extract_hidden, kmeans2, mode_purity, tsne
from .geometry import GeometryOpts, fit_obb_sequence, obb_corners
from .synthgen import SynthConfig, generate

__all__ = ["PipelineConfig", "load_config", "main"]


@dataclass(frozen=True)
class EmbedConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    seed: int = 0
    components: tuple[str, ...] | None = None
    rigid_removed: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    out_dir: Path
    threads: int = 1
    synth: SynthConfig = SynthConfig()
    geometry: GeometryOpts = GeometryOpts()
    train: TrainConfig = TrainConfig()
    cell_type: str = "lstm"
    n_train: int = 128
    split_seed: int = 0
    eval_seeds: int = 5
    embed: EmbedConfig = EmbedConfig()


def _apply_overrides(base, overrides: dict, section: str):
    valid = {f.name for f in fields(base)}
    unknown = set(overrides) - valid
    if unknown:
        raise ValueError(f"unknown keys in '{section}' config section: {sorted(unknown)}")
    return replace(base, **overrides)


def load_config(
    config_path: Path | None, seed: int | None, out_dir: Path, threads: int
) -> PipelineConfig:
    """Assemble the pipeline config: JSON file < --seed < section overrides.

    The master seed fills every section seed that the file does not set
    explicitly; --seed replaces the master seed."""
    raw: dict = {}
    if config_path is not None:
        with open(config_path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ValueError(f"{config_path}: config root must be a JSON object")
    known_top = {
        "seed",
        "cell_type",
        "n_train",
        "split_seed",
        "eval_seeds",
        "synth",
        "geometry",
        "train",
        "embed",
    }
    unknown = set(raw) - known_top
    if unknown:
        raise ValueError(f"unknown top-level config keys: {sorted(unknown)}")

    master = seed if seed is not None else int(raw.get("seed", 0))
    embed_raw = dict(raw.get("embed", {}))
    if "components" in embed_raw and embed_raw["components"] is not None:
        embed_raw["components"] = tuple(embed_raw["components"])
    config = PipelineConfig(
        out_dir=out_dir,
        threads=threads,
        synth=_apply_overrides(SynthConfig(seed=master), dict(raw.get("synth", {})), "synth"),
        geometry=_apply_overrides(
            GeometryOpts(seed=master), dict(raw.get("geometry", {})), "geometry"
        ),
        train=_apply_overrides(TrainConfig(seed=master), dict(raw.get("train", {})), "train"),
        cell_type=str(raw.get("cell_type", "lstm")),
        n_train=int(raw.get("n_train", 128)),
        split_seed=int(raw.get("split_seed", master)),
        eval_seeds=int(raw.get("eval_seeds", 5)),
        embed=_apply_overrides(EmbedConfig(seed=master), embed_raw, "embed"),
    )
    if threads < 1:
        raise ValueError(f"--threads must be >= 1, got {threads}")
    return config


def _load_records(config: PipelineConfig) -> list[SimulationRecord]:
    boxes = iomod.read_boxes(config.out_dir / "boxes.csv")
    params = iomod.read_params(config.out_dir / "params.csv")
    return iomod.boxes_to_records(boxes, params)


def _make_split(config: PipelineConfig, records, n_train=None, seed=None):
    return split(
        records,
        n_train=config.n_train if n_train is None else n_train,
        seed=config.split_seed if seed is None else seed,
        t_in=config.train.t_in,
    )


def cmd_synth(config: PipelineConfig) -> None:
    sims, labels = generate(config.synth)
    out = config.out_dir
    iomod.write_clouds(out / "clouds.jsonl", sims)
    iomod.write_params(out / "params.csv", sims)
    iomod.write_labels(out / "labels.csv", labels)
    n_rows = sum(len(s.components) for s in sims) * config.synth.t_fin
    print(f"wrote {out / 'clouds.jsonl'} ({n_rows} records), params.csv, labels.csv")


def _fit_one(args) -> list[np.ndarray]:
    clouds, opts = args
    seq = fit_obb_sequence(clouds, opts)
    return [obb_corners(box) for box in seq.boxes]


def cmd_fit(config: PipelineConfig) -> None:
    clouds = iomod.read_clouds(config.out_dir / "clouds.jsonl")
    keys = sorted(clouds)
    lengths = {clouds[k].shape[0] for k in keys}
    if len(lengths) > 1:
        raise ValueError(f"cloud series have inconsistent lengths: {sorted(lengths)}")

    jobs = []
    for idx, key in enumerate(keys):
        pair_seed = int(np.random.SeedSequence([config.geometry.seed, idx]).generate_state(1)[0])
        jobs.append((clouds[key], replace(config.geometry, seed=pair_seed)))
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            fitted = list(pool.map(_fit_one, jobs))
    else:
        fitted = [_fit_one(job) for job in jobs]

    rows = []
    for key, frames in zip(keys, fitted):
        for t_idx, frame in enumerate(frames, start=1):
            rows.append((key[0], key[1], t_idx, frame))
    iomod.write_frame_rows(config.out_dir / "boxes.csv", rows)
    print(f"wrote {config.out_dir / 'boxes.csv'} ({len(rows)} rows, {len(keys)} series)")


def cmd_train(config: PipelineConfig) -> None:
    records = _load_records(config)
    ds = _make_split(config, records)
    model, history = train(ds, config.train, config.cell_type)
    iomod.save_checkpoint(
        config.out_dir / "checkpoint.json",
        model,
        ds.stats,
        config.train,
        {"n_train": config.n_train, "seed": config.split_seed},
    )
    iomod.write_history(config.out_dir / "history.csv", history.train_loss, history.test_loss)
    print(
        f"trained {config.cell_type} for {config.train.epochs} epochs: "
        f"final train loss {history.train_loss[-1]:.6f}, test loss {history.test_loss[-1]:.6f}"
    )
    print(f"wrote {config.out_dir / 'checkpoint.json'}, history.csv")


def cmd_eval(config: PipelineConfig) -> None:
    records = _load_records(config)
    ds = _make_split(config, records)
    report = run_comparison(ds, config.train, n_seeds=config.eval_seeds)
    iomod.write_report(config.out_dir / "report.csv", report)
    print(f"{'method':<16} {'test_mse':>12} {'std':>12}")
    for method in METHOD_ORDER:
        row = report.rows[method]
        std = "-" if row.std_over_seeds is None else f"{row.std_over_seeds:.6f}"
        print(f"{method:<16} {row.test_mse:>12.6f} {std:>12}")
    print(f"wrote {config.out_dir / 'report.csv'}")


def cmd_predict(config: PipelineConfig, sim_id: str) -> None:
    model, stats, train_config, _ = iomod.load_checkpoint(config.out_dir / "checkpoint.json")
    records = _load_records(config)
    matches = [r for r in records if r.sim_id == sim_id]
    if not matches:
        raise ValueError(f"simulation {sim_id} not found in boxes.csv")
    record = matches[0]
    t_in, t_fin = train_config.t_in, train_config.t_fin

    rows = []
    for seq in sorted(record.components, key=lambda s: s.component_id):
        if seq.frames.shape[0] < t_in:
            raise ValueError(
                f"sequence ({sim_id}, {seq.component_id}) has fewer than t_in={t_in} steps"
            )
        normalized = normalize_apply(seq, stats)
        _, pred, _ = forward(model, normalized.frames[:t_in], pred_steps=t_fin - t_in)
        frames = denormalize_frames(pred, stats)
        for offset, frame in enumerate(frames):
            rows.append((sim_id, seq.component_id, t_in + 1 + offset, frame))
    iomod.write_frame_rows(config.out_dir / "predictions.csv", rows)
    print(
        f"wrote {config.out_dir / 'predictions.csv'} "
        f"({len(rows)} rows, steps {t_in + 1}..{t_fin})"
    )


def cmd_embed(
    config: PipelineConfig,
    components: tuple[str, ...] | None,
    rigid_removed: bool | None,
) -> None:
    model, _, train_config, split_info = iomod.load_checkpoint(
        config.out_dir / "checkpoint.json"
    )
    records = _load_records(config)
    ds = _make_split(config, records, n_train=split_info["n_train"], seed=split_info["seed"])
    if ds.t_in != train_config.t_in:
        raise ValueError(
            f"split t_in={ds.t_in} does not match checkpoint t_in={train_config.t_in}"
        )
    comps = components if components is not None else config.embed.components
    rigid = config.embed.rigid_removed if rigid_removed is None else rigid_removed

    reps = extract_hidden(model, ds, None if comps is None else list(comps), rigid)
    embedding = tsne(
        reps.rows,
        perplexity=config.embed.perplexity,
        iterations=config.embed.iterations,
        learning_rate=config.embed.learning_rate,
        seed=config.embed.seed,
    )
    clusters = kmeans2(reps.rows, seed=config.embed.seed)
    iomod.write_embedding(
        config.out_dir / "embedding.csv", reps.ids, embedding.coords, clusters.labels
    )

    entries: list[tuple[str, object]] = [
        ("n_rows", len(reps.ids)),
        ("rigid_removed", str(rigid).lower()),
        ("kl_initial", float(embedding.kl_initial)),
        ("kl_final", float(embedding.kl_final)),
    ]
    labels_path = config.out_dir / "labels.csv"
    if labels_path.exists():
        label_map = iomod.read_labels(labels_path)
        missing = [key for key in reps.ids if key not in label_map]
        if not missing:
            labels = np.array([label_map[key] for key in reps.ids])
            entries.append(("purity", mode_purity(clusters.labels, labels)))
    iomod.write_summary(config.out_dir / "summary.csv", entries)
    print(
        f"embedded {len(reps.ids)} rows: kl {embedding.kl_initial:.4f} -> "
        f"{embedding.kl_final:.4f}; wrote embedding.csv, summary.csv"
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="obbseq",
        description="Box-sequence pipeline: synthesize clouds, fit boxes, "
        "train the autoencoder, compare methods, predict, embed.",
    )
    parser.add_argument("--config", type=Path, help="JSON config file")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--out", type=Path, default=Path("."), help="working directory")
    parser.add_argument("--threads", type=int, default=1, help="threads for fit")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", help="generate the synthetic benchmark clouds")
    sub.add_parser("fit", help="fit box sequences to clouds.jsonl")
    sub.add_parser("train", help="train the autoencoder on boxes.csv")
    sub.add_parser("eval", help="compare baselines and both cell types")
    predict_parser = sub.add_parser("predict", help="predict future boxes for one simulation")
    predict_parser.add_argument("--sim", required=True, help="simulation id")
    embed_parser = sub.add_parser("embed", help="embed hidden representations")
    embed_parser.add_argument(
        "--components", help="comma-separated component ids (default: all)"
    )
    embed_parser.add_argument(
        "--rigid-removed",
        choices=("true", "false"),
        help="override the rigid-removal flag from the config",
    )
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config, args.seed, args.out, args.threads)
        config.out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "synth":
            cmd_synth(config)
        elif args.command == "fit":
            cmd_fit(config)
        elif args.command == "train":
            cmd_train(config)
        elif args.command == "eval":
            cmd_eval(config)
        elif args.command == "predict":
            cmd_predict(config, args.sim)
        elif args.command == "embed":
            comps = None
            if args.components is not None:
                comps = tuple(c.strip() for c in args.components.split(",") if c.strip())
            rigid = None if args.rigid_removed is None else args.rigid_removed == "true"
            cmd_embed(config, comps, rigid)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
