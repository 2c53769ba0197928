"""Shared fixtures: synthetic datasets and the session-scoped training runs.

The expensive desk-scale runs (stage-1 smoke, full three-stage run, parser
training, a saved untrained checkpoint) are session fixtures so the
acceptance gate and the module tests share one execution.
"""

from __future__ import annotations

import time

import pytest

import facefill as ff
from facefill.training import (
    CurriculumSchedule,
    ParserTrainConfig,
    desk_train_config,
    masked_region_mse,
    save_checkpoint,
    train_parser,
)

SMOKE_MAX_STEPS = 2000
SMOKE_PROBE_EVERY = 100


@pytest.fixture(scope="session")
def desk_faces64():
    return ff.make_face_dataset(8, size=64, seed=0)


@pytest.fixture(scope="session")
def desk_dataset64(desk_faces64):
    return ff.dataset_from_arrays(desk_faces64)


@pytest.fixture(scope="session")
def tiny_dataset32():
    return ff.dataset_from_arrays(ff.make_face_dataset(8, size=32, seed=1))


def tiny_config32(out_dir, **overrides):
    """Fast 32px config for loop-mechanics tests."""
    base = dict(
        image_size=32,
        base_channels=8,
        bottleneck_dim=128,
        batch_size=2,
        mask_size=16,
        schedule=CurriculumSchedule(4, 3, 3),
        checkpoint_every=10**9,
        seed=3,
    )
    base.update(overrides)
    return desk_train_config(str(out_dir), **base)


@pytest.fixture(scope="session")
def smoke_run(desk_dataset64, tmp_path_factory):
    """Stage-1 overfit run on 8 faces at 64px with 32px masks.

    Probes masked-region MSE every 100 steps against the untrained model's
    value and stops early once the drop comfortably clears 50%.
    """
    out = tmp_path_factory.mktemp("smoke_run")
    config = desk_train_config(str(out), schedule=CurriculumSchedule(SMOKE_MAX_STEPS, 0, 0), seed=0, checkpoint_every=10**9)
    baseline_model = ff.build_model(*config.specs(), weights=config.weights, seed=config.seed)
    baseline = masked_region_mse(baseline_model, desk_dataset64, config.mask_size, seed=123)
    trace = []
    start = time.monotonic()

    def probe(state, report):
        if state.step % SMOKE_PROBE_EVERY:
            return False
        mse = masked_region_mse(state.model, desk_dataset64, config.mask_size, seed=123)
        trace.append((state.step, mse))
        return mse <= 0.4 * baseline

    result = ff.train(config, desk_dataset64, on_step=probe)
    return {
        "config": config,
        "result": result,
        "baseline_mse": baseline,
        "trace": trace,
        "final_mse": trace[-1][1] if trace else baseline,
        "elapsed_s": time.monotonic() - start,
    }


@pytest.fixture(scope="session")
def three_stage_run(desk_dataset64, tmp_path_factory):
    """Short full-curriculum run on the same 8-face set."""
    out = tmp_path_factory.mktemp("three_stage")
    config = desk_train_config(str(out), schedule=CurriculumSchedule(60, 60, 80), seed=0, checkpoint_every=10**9)
    start = time.monotonic()
    result = ff.train(config, desk_dataset64)
    return {"config": config, "result": result, "elapsed_s": time.monotonic() - start}


@pytest.fixture(scope="session")
def parser_run():
    """Desk-scale parser training on 50 synthetic faces."""
    pairs = ff.make_parsing_dataset(50, size=64, seed=5)
    start = time.monotonic()
    result = train_parser(pairs, ParserTrainConfig(seed=0, max_steps=400))
    return {"pairs": pairs, "result": result, "elapsed_s": time.monotonic() - start}


@pytest.fixture(scope="session")
def untrained_checkpoint(tmp_path_factory):
    """A freshly built (untrained) desk model saved to disk.

    Inference-path tests (CLI/service parity, wire formats) need a loadable
    checkpoint but not a trained one.
    """
    out = tmp_path_factory.mktemp("ckpt") / "ckpt_untrained"
    config = desk_train_config("unused")
    model = ff.build_model(*config.specs(), weights=config.weights, seed=9, model_tag="desk")
    return save_checkpoint(model, out)
