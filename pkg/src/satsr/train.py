"""Single-writer training loop with bit-reproducible checkpointing.

Every stochastic choice (null-conditioning draw, distillation timestep)
comes from one serialized torch generator, and the loop pins torch to a
single thread, so a fixed seed fixes the whole loss trajectory byte for
byte, and resuming from a checkpoint continues it exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import ExperimentConfig
from .container import SamplePair
from .losses import CSD_T_RANGE, LossBreakdown, compute_breakdown
from .model import SuperResolver
from .serialization import read_payload, write_payload

LOSS_CSV_HEADER = "step,branch,l2,lpips,csd,fft,ndvi,total"
CHECKPOINT_EVERY = 500

_TERM_ORDER = ("l2", "lpips", "csd", "fft", "ndvi")


class TrainingDivergence(RuntimeError):
    """A loss term went non-finite; training must not continue."""


class ArchitectureMismatchError(ValueError):
    """Checkpoint was produced by a differently shaped model."""


@dataclass
class TrainState:
    config: ExperimentConfig
    model: SuperResolver
    optimizer: torch.optim.AdamW
    gen: torch.Generator
    step: int = 0
    loss_rows: list[str] = field(default_factory=list)


def init_train_state(config: ExperimentConfig) -> TrainState:
    torch.set_num_threads(1)  # mandated: deterministic reduction order
    model = SuperResolver(config)
    optimizer = torch.optim.AdamW(model.trainable_parameters(),
                                  lr=config.optimizer.lr,
                                  weight_decay=config.optimizer.weight_decay)
    gen = torch.Generator().manual_seed(config.seed * 7919 + 1)
    return TrainState(config=config, model=model, optimizer=optimizer, gen=gen)


def _check_finite(breakdown: LossBreakdown, step: int) -> None:
    for branch_name in ("rgb", "ir"):
        branch = getattr(breakdown, branch_name)
        for term in _TERM_ORDER:
            if not torch.isfinite(getattr(branch, term)):
                raise TrainingDivergence(
                    f"non-finite {term} term in {branch_name} branch "
                    f"at step {step + 1}"
                )


def _format_rows(step: int, breakdown: LossBreakdown) -> list[str]:
    rows = []
    for branch_name in ("rgb", "ir"):
        branch = getattr(breakdown, branch_name)
        values = [repr(float(getattr(branch, term).detach()))
                  for term in _TERM_ORDER]
        values.append(repr(float(branch.weighted_total.detach())))
        rows.append(f"{step},{branch_name}," + ",".join(values))
    return rows


def train_step(state: TrainState, sample: SamplePair) -> LossBreakdown:
    """One optimizer update; appends the step's loss rows to the state."""
    config = state.config
    model = state.model
    tensors = model.prepare(sample)
    e_pos = model.backbone.embedding("positive")
    e_null = model.backbone.embedding("null")

    # draw order is part of the determinism contract: cond first, then t
    u = float(torch.rand((), generator=state.gen))
    cond = e_null if u < config.p_null else e_pos
    t_csd = int(torch.randint(CSD_T_RANGE[0], CSD_T_RANGE[1] + 1, (1,),
                              generator=state.gen))
    w_t = 1.0 - model.schedule.alpha_bar(t_csd)

    outs = model.forward_all(tensors, cond)
    breakdown = compute_breakdown(
        pix_rgb=outs["rgb"].pix_decode, sem_rgb=outs["rgb"].refined,
        z_sem_rgb=outs["rgb"].z_sem,
        pix_ir=outs["ir"].pix_decode, sem_ir=outs["ir"].refined,
        z_sem_ir=outs["ir"].z_sem,
        target_rgb=tensors.targets["rgb"], target_ir=tensors.targets["ir"],
        backbone=model.backbone, e_pos=e_pos, e_null=e_null,
        t_csd=t_csd, w_t=w_t, extractor=model.extractor,
        weights=config.effective_weights(), use_fft=config.flags.fft,
        fft_mode=config.fft_mode)
    _check_finite(breakdown, state.step)

    # an exactly-zero objective carries no gradient signal; skipping the
    # update also keeps decoupled weight decay from drifting parameters
    # when every term is switched off
    if float(breakdown.grand_total.detach()) != 0.0:
        state.optimizer.zero_grad(set_to_none=True)
        breakdown.grand_total.backward()
        torch.nn.utils.clip_grad_norm_(model.trainable_parameters(),
                                       config.optimizer.clip_norm)
        state.optimizer.step()
    state.step += 1
    state.loss_rows.extend(_format_rows(state.step, breakdown))
    return breakdown


# -- checkpoints ---------------------------------------------------------


def save_checkpoint(path, state: TrainState) -> None:
    arrays: list[tuple[str, np.ndarray]] = []
    opt_steps: dict[str, float] = {}
    for name, param in state.model.named_trainable_parameters():
        arrays.append((f"param.{name}",
                       param.detach().cpu().numpy().astype("<f4")))
        opt_state = state.optimizer.state.get(param)
        if opt_state:
            opt_steps[name] = float(opt_state["step"])
            for key in ("exp_avg", "exp_avg_sq"):
                arrays.append((f"opt.{name}.{key}",
                               opt_state[key].detach().cpu().numpy()
                               .astype("<f4")))
    arrays.append(("rng.torch", state.gen.get_state().numpy().astype("<u1")))
    meta = {
        "kind": "train-checkpoint",
        "step": state.step,
        "config": state.config.to_json(),
        "fingerprint": state.config.architecture_fingerprint(),
        "opt_steps": opt_steps,
    }
    write_payload(path, meta, arrays)


def _normalize(fingerprint: dict) -> dict:
    # JSON round trip: tuples become lists, matching what read_payload gives
    return json.loads(json.dumps(fingerprint, sort_keys=True))


def load_checkpoint(path, config: ExperimentConfig | None = None) -> TrainState:
    """Rebuild a TrainState that continues bit-identically.

    When `config` is given it must match the checkpoint's architecture
    fingerprint; omitted, the stored config is used.
    """
    meta, arrays = read_payload(path)
    if meta.get("kind") != "train-checkpoint":
        raise ValueError(f"{path}: not a training checkpoint")
    stored = ExperimentConfig.from_json(meta["config"])
    if config is None:
        config = stored
    elif _normalize(config.architecture_fingerprint()) != _normalize(
            meta["fingerprint"]):
        raise ArchitectureMismatchError(
            f"{path}: checkpoint architecture differs from the requested "
            f"config"
        )
    state = init_train_state(config)
    state.step = int(meta["step"])
    for name, param in state.model.named_trainable_parameters():
        key = f"param.{name}"
        if key not in arrays:
            raise ArchitectureMismatchError(f"{path}: missing tensor {key}")
        stored_arr = arrays[key]
        if tuple(stored_arr.shape) != tuple(param.shape):
            raise ArchitectureMismatchError(
                f"{path}: tensor {key} has shape {stored_arr.shape}, "
                f"model expects {tuple(param.shape)}"
            )
        with torch.no_grad():
            param.copy_(torch.from_numpy(stored_arr.astype(np.float32)))
        if name in meta["opt_steps"]:
            state.optimizer.state[param] = {
                "step": torch.tensor(float(meta["opt_steps"][name])),
                "exp_avg": torch.from_numpy(
                    arrays[f"opt.{name}.exp_avg"].astype(np.float32)),
                "exp_avg_sq": torch.from_numpy(
                    arrays[f"opt.{name}.exp_avg_sq"].astype(np.float32)),
            }
    state.gen.set_state(torch.from_numpy(arrays["rng.torch"]))
    return state


# -- the loop ------------------------------------------------------------


@dataclass
class TrainResult:
    checkpoint_path: str
    loss_csv_path: str
    steps_run: int
    final_total: float


def train(config: ExperimentConfig, samples: list[SamplePair], out_dir,
          steps: int | None = None, resume=None,
          checkpoint_every: int = CHECKPOINT_EVERY) -> TrainResult:
    """Run the loop to `steps` total optimizer updates.

    Samples are visited cyclically in list order.  The loss log gains two
    rows per step (rgb, ir) and is flushed immediately; checkpoints land
    every `checkpoint_every` steps plus a final one.
    """
    if not samples:
        raise ValueError("no training samples")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)

    if resume is not None:
        state = load_checkpoint(resume, config)
    else:
        state = init_train_state(config)
    total = config.steps if steps is None else steps

    csv_path = out_dir / "loss_log.csv"
    fresh = state.step == 0 or not csv_path.exists()
    breakdown = None
    with open(csv_path, "w" if fresh else "a", encoding="utf-8",
              newline="\n") as log:
        if fresh:
            log.write(LOSS_CSV_HEADER + "\n")
        written = 0
        while state.step < total:
            sample = samples[state.step % len(samples)]
            breakdown = train_step(state, sample)
            for row in state.loss_rows[written:]:
                log.write(row + "\n")
            written = len(state.loss_rows)
            log.flush()
            os.fsync(log.fileno())
            if state.step % checkpoint_every == 0 and state.step < total:
                save_checkpoint(ckpt_dir / f"step_{state.step:06d}.ckpt", state)

    final_path = ckpt_dir / "final.ckpt"
    save_checkpoint(final_path, state)
    final_total = (float(breakdown.grand_total.detach())
                   if breakdown is not None else 0.0)
    return TrainResult(checkpoint_path=str(final_path),
                       loss_csv_path=str(csv_path),
                       steps_run=state.step, final_total=final_total)
