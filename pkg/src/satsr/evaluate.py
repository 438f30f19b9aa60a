"""Test-split evaluation: restored output vs. the bicubic comparison.

Both systems run over the same held-out samples, metric by metric, and
land in one report keyed by system name so the gap is read off directly.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

import numpy as np

from .bands import band_split
from .container import SamplePair
from .losses import FeatureExtractor
from .metrics import (MetricReport, fcl, lpips_metric, ndvi_mse_metric, psnr,
                      sam, ssim, timing_and_params)
from .model import SuperResolver, bicubic_baseline, to_chw

SAMPLE_METRICS = ("psnr_rgb", "ssim_rgb", "lpips_rgb", "fcl_rgb",
                  "psnr_ir", "ssim_ir", "lpips_ir", "fcl_ir",
                  "sam_deg", "ndvi_mse")


def evaluate_sample(pred6: np.ndarray, target6: np.ndarray,
                    extractor: FeatureExtractor) -> dict[str, float]:
    """All ten image metrics for one (H, W, 6) prediction."""
    pred_rgb, pred_ir = band_split(pred6)
    tgt_rgb, tgt_ir = band_split(target6)
    return {
        "psnr_rgb": psnr(pred_rgb, tgt_rgb),
        "ssim_rgb": ssim(pred_rgb, tgt_rgb),
        "lpips_rgb": lpips_metric(to_chw(pred_rgb), to_chw(tgt_rgb), extractor),
        "fcl_rgb": fcl(to_chw(pred_rgb), to_chw(tgt_rgb), extractor),
        "psnr_ir": psnr(pred_ir, tgt_ir),
        "ssim_ir": ssim(pred_ir, tgt_ir),
        "lpips_ir": lpips_metric(to_chw(pred_ir), to_chw(tgt_ir), extractor),
        "fcl_ir": fcl(to_chw(pred_ir), to_chw(tgt_ir), extractor),
        "sam_deg": sam(pred6, target6),
        "ndvi_mse": ndvi_mse_metric(pred6, target6),
    }


def _evaluate_system(predict_fn, samples: list[SamplePair],
                     extractor: FeatureExtractor, trainable: int,
                     runs: int) -> tuple[MetricReport, list[dict]]:
    rows = []
    for sample in samples:
        metrics = evaluate_sample(predict_fn(sample), sample.hr, extractor)
        metrics["sample_id"] = sample.sample_id
        rows.append(metrics)
    means = {key: float(np.mean([row[key] for row in rows]))
             for key in SAMPLE_METRICS}
    seconds, count = timing_and_params(predict_fn, samples[0], trainable,
                                       runs=runs)
    report = MetricReport(infer_seconds_per_image=seconds,
                          trainable_param_count=count, **means)
    return report, rows


@dataclasses.dataclass
class EvalResult:
    reports: dict[str, MetricReport]
    per_sample: list[dict]  # each row carries a "system" column

    def to_json(self) -> str:
        payload = {name: dataclasses.asdict(report)
                   for name, report in self.reports.items()}
        return json.dumps(payload, indent=2, sort_keys=True)


def evaluate(model: SuperResolver, samples: list[SamplePair],
             runs: int = 20) -> EvalResult:
    if not samples:
        raise ValueError("evaluation needs at least one sample")
    trainable = model.parameter_counts()["total"]
    systems = {
        "model": (lambda s: model.infer(s)[2], trainable),
        "bicubic": (bicubic_baseline, 0),
    }
    reports = {}
    per_sample = []
    for name, (fn, count) in systems.items():
        report, rows = _evaluate_system(fn, samples, model.extractor,
                                        count, runs)
        reports[name] = report
        for row in rows:
            row["system"] = name
            per_sample.append(row)
    return EvalResult(reports=reports, per_sample=per_sample)


def write_eval_outputs(result: EvalResult, out_dir) -> tuple[str, str]:
    """Write report.json and per_sample.csv; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    report_path.write_text(result.to_json() + "\n", encoding="utf-8")
    csv_path = out_dir / "per_sample.csv"
    fields = ["system", "sample_id", *SAMPLE_METRICS]
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in result.per_sample:
            writer.writerow({key: row[key] for key in fields})
    return str(report_path), str(csv_path)
