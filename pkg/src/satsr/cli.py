"""Command-line front end.

Subcommands: synth, train, infer, eval, cropmap, plot, selftest.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import tempfile
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .config import ExperimentConfig
from .container import CONTAINER_EXT, read_sample, write_sample
from .cropmap import BoostConfig, resolution_comparison
from .evaluate import evaluate, write_eval_outputs
from .manifest import (DatasetManifest, ManifestEntry, split_dataset)
from .model import SuperResolver, bicubic_baseline
from .plots import plot_loss_curves
from .synth import SynthConfig, synth_crop_series, synth_scene
from .train import load_checkpoint, train


def _load_manifest(data_dir: Path) -> tuple[DatasetManifest, Path]:
    path = data_dir / "manifest.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"no manifest at {path}")
    return DatasetManifest.load(path), data_dir


def _read_entries(entries, base: Path):
    samples = []
    for entry in entries:
        p = Path(entry.path)
        samples.append(read_sample(p if p.is_absolute() else base / p))
    return samples


def _train_samples(data_dir: Path):
    manifest, base = _load_manifest(data_dir)
    entries = [e for e in manifest.entries if e.split != "test"]
    if not entries:
        raise ValueError(f"{data_dir}: no training samples in manifest")
    return _read_entries(entries, base)


def _test_samples(data_dir: Path):
    manifest, base = _load_manifest(data_dir)
    entries = manifest.subset("test") or manifest.entries
    return _read_entries(entries, base)


# -- subcommands ---------------------------------------------------------


def _cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = SynthConfig(lr_size=args.lr_size)
    entries = []
    for i in range(args.count):
        seed = args.seed + i
        pairs = (synth_crop_series(seed, config) if args.crop
                 else [synth_scene(seed, config)])
        for pair in pairs:
            path = out / f"{pair.sample_id}{CONTAINER_EXT}"
            write_sample(path, pair)
            entries.append(ManifestEntry(sample_id=pair.sample_id,
                                         path=path.name, split=""))
    manifest = DatasetManifest(entries)
    if args.split_seed is not None:
        manifest = split_dataset(manifest, args.split_seed)
    manifest.save(out / "manifest.jsonl")
    print(f"wrote {len(entries)} samples to {out}")
    return 0


def _load_config(args) -> ExperimentConfig:
    if args.config:
        config = ExperimentConfig.from_json(
            Path(args.config).read_text(encoding="utf-8"))
    else:
        config = ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        config = dataclasses.replace(config, seed=args.seed)
    config.validate()
    return config


def _cmd_train(args) -> int:
    config = _load_config(args)
    samples = _train_samples(Path(args.data))
    result = train(config, samples, args.out, steps=args.steps,
                   resume=args.resume)
    print(f"trained {result.steps_run} steps; final total "
          f"{result.final_total:.6f}")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"loss log:   {result.loss_csv_path}")
    return 0


def _cmd_infer(args) -> int:
    state = load_checkpoint(args.checkpoint)
    sample = read_sample(args.sample)
    rgb, ir, merged = state.model.infer(sample)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savez(out, rgb=rgb, ir=ir, merged=merged,
             bicubic=bicubic_baseline(sample), target=sample.hr)
    print(f"wrote {out}")
    return 0


def _cmd_eval(args) -> int:
    state = load_checkpoint(args.checkpoint)
    samples = _test_samples(Path(args.data))
    result = evaluate(state.model, samples, runs=args.runs)
    report_path, csv_path = write_eval_outputs(result, args.out)
    for name in ("model", "bicubic"):
        r = result.reports[name]
        print(f"{name:8s} psnr_rgb {r.psnr_rgb:7.3f}  ssim_rgb "
              f"{r.ssim_rgb:.4f}  psnr_ir {r.psnr_ir:7.3f}  sam "
              f"{r.sam_deg:6.3f}")
    print(f"report: {report_path}")
    print(f"per-sample: {csv_path}")
    return 0


def _stack_for(pairs, imagery: str, model: SuperResolver | None):
    if imagery == "hr":
        return [p.hr for p in pairs]
    if imagery == "bicubic":
        return [bicubic_baseline(p) for p in pairs]
    if imagery == "restored":
        if model is None:
            raise ValueError("'restored' imagery needs --checkpoint")
        return [model.infer(p)[2] for p in pairs]
    raise ValueError(f"unknown imagery kind {imagery!r}")


def _cmd_cropmap(args) -> int:
    spec = json.loads(Path(args.runs).read_text(encoding="utf-8"))
    if not isinstance(spec, dict) or "sources" not in spec:
        raise ValueError(f"{args.runs}: expected an object with 'sources'")
    model = None
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint).model
    runs = []
    for name, entry in spec["sources"].items():
        pairs = [read_sample(p) for p in entry["samples"]]
        pairs.sort(key=lambda p: p.month)
        stacks = _stack_for(pairs, entry.get("imagery", "hr"), model)
        runs.append((name, stacks, pairs[0].landcover.astype(np.int64)))
    table = resolution_comparison(
        runs, BoostConfig(seed=args.seed), n_train=args.train_pixels,
        n_test=args.test_pixels, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.csv").write_text(table.to_csv() + "\n",
                                        encoding="utf-8")
    print(table.to_text())
    print(f"table: {out / 'comparison.csv'}")
    return 0


def _cmd_plot(args) -> int:
    written = plot_loss_curves(args.log, args.out)
    print(f"wrote {len(written)} figures to {args.out}")
    return 0


def _cmd_selftest(args) -> int:
    failures = 0

    def check(name, fn):
        nonlocal failures
        try:
            fn()
        except Exception as exc:  # report every failure, keep going
            failures += 1
            print(f"FAIL {name}: {exc}")
        else:
            print(f"PASS {name}")

    def schedule_consistency():
        from .schedule import make_schedule
        s = make_schedule()
        drift = max(abs(s.alpha_bars[t] - s.alpha_bars[t - 1] * s.alphas[t])
                    for t in range(1, s.T))
        assert drift < 1e-12, f"cumulative-product drift {drift}"

    def container_round_trip():
        pair = synth_scene(123, SynthConfig(lr_size=16))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / f"x{CONTAINER_EXT}"
            write_sample(path, pair)
            back = read_sample(path)
        assert np.array_equal(back.hr, pair.hr), "hr payload changed"

    def identity_at_init():
        torch.set_num_threads(1)
        model = SuperResolver(ExperimentConfig())
        # LR tile must be a multiple of 32 for the full latent pipeline
        pair = synth_scene(7, SynthConfig(lr_size=32))
        adapted = model.infer(pair)[2]
        frozen = model.frozen_infer(pair)[2]
        assert np.array_equal(adapted, frozen), "fresh model is not identity"

    def adapter_count():
        model = SuperResolver(ExperimentConfig())
        n = model.parameter_counts()["adapters.semantic"]
        assert n == 2048, f"semantic adapter params {n}, expected 2048"

    check("schedule-consistency", schedule_consistency)
    check("container-round-trip", container_round_trip)
    check("identity-at-init", identity_at_init)
    check("adapter-count", adapter_count)
    if failures:
        print(f"{failures} check(s) failed")
        return 1
    print("all checks passed")
    return 0


# -- parser --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satsr",
        description="Sentinel-style super-resolution toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic sample pairs")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--lr-size", type=int, default=64)
    p.add_argument("--crop", action="store_true",
                   help="monthly crop series instead of single scenes")
    p.add_argument("--split-seed", type=int, default=None,
                   help="also assign train/test splits with this seed")
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("train", help="fit the adapter stack")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint to continue")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("infer", help="restore one sample")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sample", required=True)
    p.add_argument("--out", required=True, help="output .npz path")
    p.set_defaults(fn=_cmd_infer)

    p = sub.add_parser("eval", help="score the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--runs", type=int, default=20,
                   help="timing repetitions")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("cropmap", help="crop-type mapping comparison")
    p.add_argument("--runs", required=True,
                   help="JSON file mapping source names to sample trios")
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--train-pixels", type=int, default=2000)
    p.add_argument("--test-pixels", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_cropmap)

    p = sub.add_parser("plot", help="render loss curves")
    p.add_argument("--log", required=True, help="training CSV log")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_plot)

    p = sub.add_parser("selftest", help="quick internal consistency checks")
    p.set_defaults(fn=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))
