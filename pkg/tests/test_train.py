"""Training loop: log format, byte-level reproducibility, exact resume,
checkpoint guards, and the zero-objective freeze."""

import numpy as np
import pytest
import torch

from satsr.config import AblationFlags, ExperimentConfig
from satsr.losses import LossWeights
from satsr.train import (ArchitectureMismatchError, CHECKPOINT_EVERY,
                         LOSS_CSV_HEADER, TrainingDivergence, _check_finite,
                         init_train_state, load_checkpoint, save_checkpoint,
                         train, train_step)


def _config(steps=3, **kwargs):
    return ExperimentConfig(steps=steps, **kwargs)


def test_loop_constants():
    assert LOSS_CSV_HEADER == "step,branch,l2,lpips,csd,fft,ndvi,total"
    assert CHECKPOINT_EVERY == 500


def test_csv_structure_and_result(tmp_path, small_pairs):
    result = train(_config(), list(small_pairs), tmp_path / "run")
    assert result.steps_run == 3
    assert np.isfinite(result.final_total)
    lines = (tmp_path / "run" / "loss_log.csv").read_text().strip().split("\n")
    assert lines[0] == LOSS_CSV_HEADER
    assert len(lines) == 1 + 2 * 3
    for i, line in enumerate(lines[1:]):
        fields = line.split(",")
        assert len(fields) == 8
        assert int(fields[0]) == i // 2 + 1
        assert fields[1] == ("rgb", "ir")[i % 2]
        values = [float(v) for v in fields[2:]]
        assert all(np.isfinite(values))
    assert (tmp_path / "run" / "checkpoints" / "final.ckpt").exists()


def test_rerun_is_byte_identical(tmp_path, small_pairs):
    samples = list(small_pairs)
    r1 = train(_config(), samples, tmp_path / "a")
    r2 = train(_config(), samples, tmp_path / "b")
    csv_a = (tmp_path / "a" / "loss_log.csv").read_bytes()
    csv_b = (tmp_path / "b" / "loss_log.csv").read_bytes()
    assert csv_a == csv_b
    from pathlib import Path
    assert Path(r1.checkpoint_path).read_bytes() \
        == Path(r2.checkpoint_path).read_bytes()


def test_resume_continues_exactly(tmp_path, small_pairs):
    samples = list(small_pairs)
    straight = train(_config(steps=4), samples, tmp_path / "straight")
    first = train(_config(steps=2), samples, tmp_path / "resumed")
    second = train(_config(steps=4), samples, tmp_path / "resumed",
                   resume=first.checkpoint_path)
    assert second.steps_run == 4
    from pathlib import Path
    assert (tmp_path / "straight" / "loss_log.csv").read_bytes() \
        == (tmp_path / "resumed" / "loss_log.csv").read_bytes()
    assert Path(straight.checkpoint_path).read_bytes() \
        == Path(second.checkpoint_path).read_bytes()


def test_mid_checkpoints(tmp_path, small_pairs):
    train(_config(steps=4), list(small_pairs), tmp_path / "run",
          checkpoint_every=2)
    ckpts = tmp_path / "run" / "checkpoints"
    assert (ckpts / "step_000002.ckpt").exists()
    # the final boundary is covered by final.ckpt, not a step file
    assert not (ckpts / "step_000004.ckpt").exists()
    assert (ckpts / "final.ckpt").exists()


def test_zero_step_run(tmp_path, small_pairs):
    result = train(_config(steps=0), list(small_pairs), tmp_path / "run")
    assert result.steps_run == 0
    assert result.final_total == 0.0
    lines = (tmp_path / "run" / "loss_log.csv").read_text().strip().split("\n")
    assert lines == [LOSS_CSV_HEADER]
    state = load_checkpoint(result.checkpoint_path)
    assert state.step == 0


def test_no_samples_rejected(tmp_path):
    with pytest.raises(ValueError, match="samples"):
        train(_config(), [], tmp_path / "run")


def test_checkpoint_restores_trained_state(tmp_path, small_pairs):
    result = train(_config(steps=2), list(small_pairs), tmp_path / "run")
    state = load_checkpoint(result.checkpoint_path)
    assert state.step == 2
    fresh = init_train_state(_config(steps=2))
    moved = False
    for (name, p), (fname, fp) in zip(state.model.named_trainable_parameters(),
                                      fresh.model.named_trainable_parameters()):
        assert name == fname
        if not torch.equal(p.detach(), fp.detach()):
            moved = True
    assert moved


def test_checkpoint_architecture_guard(tmp_path, small_pairs):
    result = train(_config(steps=1), list(small_pairs), tmp_path / "run")
    with pytest.raises(ArchitectureMismatchError):
        load_checkpoint(result.checkpoint_path, _config(adapter_rank=8))
    with pytest.raises(ArchitectureMismatchError):
        load_checkpoint(result.checkpoint_path,
                        _config(flags=AblationFlags(sar_fusion=False)))
    # same architecture, different training length: loads fine
    state = load_checkpoint(result.checkpoint_path, _config(steps=99))
    assert state.step == 1


def test_wrong_payload_kind_rejected(tmp_path):
    from satsr.serialization import write_payload

    path = tmp_path / "other.ckpt"
    write_payload(path, {"kind": "adapter-set"}, [])
    with pytest.raises(ValueError, match="checkpoint"):
        load_checkpoint(path)


def test_finite_guard_names_the_term():
    from satsr.losses import BranchLosses, LossBreakdown

    def branch(csd):
        t = torch.tensor
        return BranchLosses(l2=t(0.1), lpips=t(0.1), csd=t(csd), fft=t(0.1),
                            ndvi=t(0.1), weighted_total=t(0.5))

    bad = LossBreakdown(rgb=branch(0.1), ir=branch(float("nan")))
    with pytest.raises(TrainingDivergence,
                       match="non-finite csd term in ir branch at step 3"):
        _check_finite(bad, 2)
    _check_finite(LossBreakdown(rgb=branch(0.1), ir=branch(0.2)), 2)


def test_divergence_aborts_training(tmp_path, small_pairs, monkeypatch):
    import satsr.train as train_mod

    real = train_mod.compute_breakdown

    def poisoned(*args, **kwargs):
        breakdown = real(*args, **kwargs)
        breakdown.rgb.l2 = torch.tensor(float("inf"))
        return breakdown

    monkeypatch.setattr(train_mod, "compute_breakdown", poisoned)
    with pytest.raises(TrainingDivergence, match="l2 term in rgb"):
        train(_config(steps=1), list(small_pairs), tmp_path / "run")


def test_frozen_stacks_survive_training(small_pairs):
    state = init_train_state(_config())
    backbone_before = state.model.backbone.checksum()
    extractor_before = state.model.extractor.checksum()
    for i in range(2):
        train_step(state, small_pairs[i % len(small_pairs)])
    assert state.model.backbone.checksum() == backbone_before
    assert state.model.extractor.checksum() == extractor_before
    assert state.step == 2
    assert len(state.loss_rows) == 4


def test_zero_objective_leaves_parameters_untouched(small_pairs):
    config = ExperimentConfig(
        steps=3,
        loss_weights=LossWeights(lam_pix=0, lam_lpips=0, lam_csd=0,
                                 lam_fft=0, lam_ndvi=0),
        flags=AblationFlags(fft=False, ndvi_scale=0))
    state = init_train_state(config)
    before = [p.detach().clone()
              for p in state.model.trainable_parameters()]
    for i in range(3):
        breakdown = train_step(state, small_pairs[i % len(small_pairs)])
        assert float(breakdown.grand_total.detach()) == 0.0
    after = state.model.trainable_parameters()
    assert all(torch.equal(a, b.detach()) for a, b in zip(before, after))


def test_save_load_checkpoint_round_trip(tmp_path, small_pairs):
    state = init_train_state(_config(steps=2))
    for i in range(2):
        train_step(state, small_pairs[i % len(small_pairs)])
    path = tmp_path / "manual.ckpt"
    save_checkpoint(path, state)
    back = load_checkpoint(path)
    assert back.step == state.step
    for (name, p), (bname, bp) in zip(state.model.named_trainable_parameters(),
                                      back.model.named_trainable_parameters()):
        assert name == bname
        assert torch.equal(p.detach(), bp.detach())
    assert torch.equal(back.gen.get_state(), state.gen.get_state())
