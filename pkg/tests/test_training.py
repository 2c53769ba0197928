import json

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

import facefill as ff
from facefill.networks import Parser, ParserSpec, build_model
from facefill.training import (
    CHECKPOINT_FORMAT,
    D_ACCURACY_THRESHOLD,
    PARSER_CHECKPOINT_FORMAT,
    CheckpointError,
    ConfigurationError,
    CurriculumSchedule,
    ParserTrainConfig,
    TrainConfig,
    cache_parsing_targets,
    desk_train_config,
    load_checkpoint,
    load_parser_checkpoint,
    manifest_digest,
    masked_region_mse,
    parser_digest,
    read_manifest,
    save_checkpoint,
    save_parser_checkpoint,
    should_update_discriminator,
    train,
    train_config_from_dict,
    train_parser,
)

from conftest import tiny_config32


@pytest.fixture(scope="module")
def tiny_run(tiny_dataset32, tmp_path_factory):
    """One shared 10-step three-stage run at 32px for loop-mechanics checks."""
    out = tmp_path_factory.mktemp("tiny_run")
    config = tiny_config32(out)
    result = train(config, tiny_dataset32)
    return {"config": config, "result": result, "out": out}


class TestCurriculumSchedule:
    def test_from_total_split(self):
        s = CurriculumSchedule.from_total(1000)
        assert (s.stage1_steps, s.stage2_steps, s.stage3_steps) == (200, 300, 500)
        assert s.total_steps == 1000

    def test_stage_at_boundaries(self):
        s = CurriculumSchedule(4, 3, 3)
        assert [s.stage_at(i) for i in range(1, 11)] == [1, 1, 1, 1, 2, 2, 2, 3, 3, 3]

    def test_stage_at_out_of_range(self):
        s = CurriculumSchedule(2, 2, 2)
        with pytest.raises(ValueError):
            s.stage_at(0)
        with pytest.raises(ValueError):
            s.stage_at(7)

    def test_zero_stages_allowed(self):
        s = CurriculumSchedule(0, 5, 0)
        assert s.total_steps == 5
        assert s.stage_at(1) == 2
        assert s.stage_at(5) == 2

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            CurriculumSchedule(-1, 5, 5)

    @settings(max_examples=50, deadline=None)
    @given(total=st.integers(1, 100_000))
    def test_from_total_conserves_steps(self, total):
        assert CurriculumSchedule.from_total(total).total_steps == total


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.image_size == 128
        assert cfg.mask_size == 64
        assert cfg.local_crop == 64
        assert cfg.learning_rate == 2e-4
        assert (cfg.beta1, cfg.beta2) == (0.5, 0.999)
        assert cfg.d_accuracy_threshold == 0.8

    def test_specs_scopes(self):
        gen, local, glob, parser = TrainConfig().specs()
        assert local.scope == "local" and local.input_size == 64
        assert glob.scope == "global" and glob.input_size == 128
        assert parser.image_size == gen.image_size == 128

    def test_non_power_of_two_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(image_size=96)

    def test_mask_size_bounds(self):
        with pytest.raises(ValueError):
            TrainConfig(image_size=64, mask_size=65)
        with pytest.raises(ValueError):
            TrainConfig(mask_size=0)

    def test_desk_defaults(self):
        cfg = desk_train_config("out")
        assert cfg.image_size == 64
        assert cfg.mask_size == 32
        assert cfg.base_channels == 12
        assert cfg.schedule.total_steps == 300


class TestConfigFromDict:
    def test_schedule_via_total(self):
        cfg = train_config_from_dict({"image_size": 32, "mask_size": 16, "schedule": {"total_steps": 100}})
        assert cfg.schedule == CurriculumSchedule.from_total(100)

    def test_schedule_explicit(self):
        cfg = train_config_from_dict(
            {"image_size": 32, "mask_size": 16, "schedule": {"stage1_steps": 1, "stage2_steps": 2, "stage3_steps": 3}}
        )
        assert cfg.schedule == CurriculumSchedule(1, 2, 3)

    def test_weights_and_augment(self):
        cfg = train_config_from_dict(
            {
                "image_size": 32,
                "mask_size": 16,
                "weights": {"local_adv": 10, "global_adv": 20, "parsing": 0.5},
                "augment": {"flip": True, "max_shift": 2},
            }
        )
        assert cfg.weights.local_adv == 10.0
        assert cfg.augment.max_shift == 2

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigurationError):
            train_config_from_dict({"image_size": 32, "mask_size": 16, "warmup": 5})


class TestDiscriminatorGate:
    def test_threshold_is_strict(self):
        assert should_update_discriminator(0.8) is True  # exactly at threshold: update
        assert should_update_discriminator(0.8000001) is False
        assert should_update_discriminator(1.0) is False
        assert should_update_discriminator(0.5) is True
        assert should_update_discriminator(0.0) is True

    def test_domain(self):
        with pytest.raises(ValueError):
            should_update_discriminator(1.5)
        with pytest.raises(ValueError):
            should_update_discriminator(-0.1)

    def test_default_threshold(self):
        assert D_ACCURACY_THRESHOLD == 0.8


class TestParserDigest:
    def test_stable_across_calls(self):
        torch.manual_seed(0)
        parser = Parser(ParserSpec(image_size=32, base_channels=4, bottleneck_dim=32))
        assert parser_digest(parser) == parser_digest(parser)

    def test_changes_with_parameters(self):
        torch.manual_seed(0)
        parser = Parser(ParserSpec(image_size=32, base_channels=4, bottleneck_dim=32))
        before = parser_digest(parser)
        with torch.no_grad():
            next(parser.parameters()).add_(1.0)
        assert parser_digest(parser) != before

    def test_identical_parsers_share_digest(self):
        torch.manual_seed(1)
        a = Parser(ParserSpec(image_size=32, base_channels=4, bottleneck_dim=32))
        torch.manual_seed(1)
        b = Parser(ParserSpec(image_size=32, base_channels=4, bottleneck_dim=32))
        assert parser_digest(a) == parser_digest(b)


class TestParsingTargetCache:
    @pytest.fixture()
    def frozen_parser(self):
        torch.manual_seed(2)
        return Parser(ParserSpec(image_size=32, base_channels=4, bottleneck_dim=32)).freeze()

    def test_requires_frozen(self, tiny_dataset32):
        torch.manual_seed(3)
        thawed = Parser(ParserSpec(image_size=32, base_channels=4, bottleneck_dim=32))
        with pytest.raises(ValueError):
            cache_parsing_targets(thawed, tiny_dataset32)

    def test_cache_hit_recomputes_nothing(self, frozen_parser, tiny_dataset32, tmp_path):
        first = cache_parsing_targets(frozen_parser, tiny_dataset32, cache_dir=tmp_path)
        assert first.recomputed == len(tiny_dataset32)
        second = cache_parsing_targets(frozen_parser, tiny_dataset32, cache_dir=tmp_path)
        assert second.recomputed == 0
        for key in first.labels:
            assert np.array_equal(first.labels[key], second.labels[key])

    def test_changed_parser_invalidates(self, frozen_parser, tiny_dataset32, tmp_path):
        cache_parsing_targets(frozen_parser, tiny_dataset32, cache_dir=tmp_path)
        torch.manual_seed(99)
        other = Parser(ParserSpec(image_size=32, base_channels=4, bottleneck_dim=32)).freeze()
        again = cache_parsing_targets(other, tiny_dataset32, cache_dir=tmp_path)
        assert again.recomputed == len(tiny_dataset32)
        assert again.digest != parser_digest(frozen_parser)

    def test_targets_use_original_images(self, frozen_parser, tiny_dataset32):
        from facefill.networks import parse_labels, parser_forward

        store = cache_parsing_targets(frozen_parser, tiny_dataset32)
        img_id = tiny_dataset32.ids[0]
        expected = parse_labels(parser_forward(frozen_parser, tiny_dataset32.images[0]))
        assert np.array_equal(store.labels[img_id], expected)

    def test_missing_image_skipped_with_warning(self, frozen_parser):
        rng = np.random.default_rng(0)
        pairs = [("a", rng.random((32, 32, 3))), ("b", None)]
        with pytest.warns(UserWarning, match="missing"):
            store = cache_parsing_targets(frozen_parser, pairs)
        assert set(store.labels) == {"a"}


class TestTrainLoop:
    def test_log_has_exact_keys_and_stage_column(self, tiny_run):
        lines = tiny_run["result"].log_path.read_text().splitlines()
        assert len(lines) == 10
        records = [json.loads(line) for line in lines]
        for i, rec in enumerate(records):
            assert list(rec.keys()) == ["step", "stage", "l_r", "l_a1", "l_a2", "l_p", "total"]
            assert rec["step"] == i + 1
        stages = [r["stage"] for r in records]
        assert stages == [1, 1, 1, 1, 2, 2, 2, 3, 3, 3]
        # the stage column changes exactly twice over a three-stage run
        changes = sum(a != b for a, b in zip(stages, stages[1:]))
        assert changes == 2

    def test_disabled_terms_logged_as_zero(self, tiny_run):
        records = [json.loads(line) for line in tiny_run["result"].log_path.read_text().splitlines()]
        for rec in records:
            if rec["stage"] == 1:
                assert rec["l_a1"] == 0.0 and rec["l_a2"] == 0.0 and rec["l_p"] == 0.0
                assert rec["total"] == rec["l_r"]
            if rec["stage"] == 2:
                assert rec["l_a2"] == 0.0 and rec["l_p"] == 0.0

    def test_total_column_obeys_weights(self, tiny_run):
        w = tiny_run["config"].weights
        records = [json.loads(line) for line in tiny_run["result"].log_path.read_text().splitlines()]
        for rec in records:
            expected = rec["l_r"]
            if rec["stage"] >= 2:
                expected += w.local_adv * rec["l_a1"]
            if rec["stage"] >= 3:
                expected += w.global_adv * rec["l_a2"] + w.parsing * rec["l_p"]
            assert rec["total"] == pytest.approx(expected, rel=1e-6)

    def test_audit_log_tracks_gate(self, tiny_run):
        records = [json.loads(line) for line in tiny_run["result"].audit_path.read_text().splitlines()]
        assert len(records) == 10
        for rec in records[:4]:  # stage 1: no discriminator activity
            assert rec["d_local_accuracy"] is None and not rec["d_local_updated"]
            assert rec["d_global_accuracy"] is None and not rec["d_global_updated"]
        for rec in records[4:7]:  # stage 2: local discriminator live
            assert rec["d_local_accuracy"] is not None
            assert rec["d_global_accuracy"] is None
        for rec in records[7:]:  # stage 3: both live
            assert rec["d_local_accuracy"] is not None
            assert rec["d_global_accuracy"] is not None

    def test_boundary_and_final_checkpoints(self, tiny_run):
        names = sorted(p.name for p in tiny_run["result"].checkpoints)
        assert names == ["ckpt_final", "ckpt_step000004", "ckpt_step000007"]
        for path in tiny_run["result"].checkpoints:
            assert (path / "manifest.json").exists()

    def test_parser_digest_constant_through_training(self, tiny_run):
        manifests = [read_manifest(p) for p in tiny_run["result"].checkpoints]
        digests = {m["parser_digest"] for m in manifests}
        assert len(digests) == 1
        assert digests.pop() == parser_digest(tiny_run["result"].model.parser)

    def test_parser_excluded_from_trainable_set(self, tiny_run):
        model = tiny_run["result"].model
        assert all(not p.requires_grad for p in model.parser.parameters())

    def test_dataset_size_mismatch_rejected(self, tiny_dataset32, tmp_path):
        config = tiny_config32(tmp_path, image_size=64, mask_size=32)
        with pytest.raises(ConfigurationError):
            train(config, tiny_dataset32)

    def test_missing_parser_checkpoint_rejected(self, tiny_dataset32, tmp_path):
        config = tiny_config32(tmp_path, parser_path=str(tmp_path / "nope"))
        with pytest.raises(ConfigurationError):
            train(config, tiny_dataset32)

    def test_stage1_never_touches_discriminators(self, tiny_dataset32, tmp_path):
        config = tiny_config32(tmp_path / "s1", schedule=CurriculumSchedule(5, 0, 0))
        result = train(config, tiny_dataset32)
        fresh = build_model(*config.specs(), weights=config.weights, seed=config.seed)
        for a, b in zip(result.model.local_disc.state_dict().values(), fresh.local_disc.state_dict().values()):
            assert torch.equal(a, b)
        for a, b in zip(result.model.global_disc.state_dict().values(), fresh.global_disc.state_dict().values()):
            assert torch.equal(a, b)
        # while the generator did move
        moved = any(
            not torch.equal(a, b)
            for a, b in zip(result.model.generator.state_dict().values(), fresh.generator.state_dict().values())
        )
        assert moved

    def test_on_step_early_stop_still_writes_final(self, tiny_dataset32, tmp_path):
        config = tiny_config32(tmp_path / "stop")
        result = train(config, tiny_dataset32, on_step=lambda state, report: state.step >= 2)
        assert len(result.history) == 2
        assert result.checkpoints[-1].name == "ckpt_final"
        assert load_checkpoint(result.checkpoints[-1]).step == 2

    def test_non_finite_loss_aborts_with_diagnostic(self, tiny_dataset32, tmp_path):
        config = tiny_config32(tmp_path / "nan")

        def poison(state, report):
            if state.step == 2:
                with torch.no_grad():
                    next(state.model.generator.parameters()).fill_(float("nan"))
            return False

        with pytest.raises(FloatingPointError):
            train(config, tiny_dataset32, on_step=poison)
        assert (tmp_path / "nan" / "ckpt_diagnostic" / "manifest.json").exists()

    def test_byte_identical_logs_same_seed(self, tiny_dataset32, tmp_path):
        a = train(tiny_config32(tmp_path / "a", seed=7), tiny_dataset32)
        b = train(tiny_config32(tmp_path / "b", seed=7), tiny_dataset32)
        assert a.log_path.read_bytes() == b.log_path.read_bytes()
        assert a.audit_path.read_bytes() == b.audit_path.read_bytes()

    def test_different_seed_changes_log(self, tiny_dataset32, tmp_path):
        a = train(tiny_config32(tmp_path / "a", seed=7), tiny_dataset32)
        b = train(tiny_config32(tmp_path / "b", seed=8), tiny_dataset32)
        assert a.log_path.read_bytes() != b.log_path.read_bytes()

    def test_augmented_run_executes(self, tiny_dataset32, tmp_path):
        from facefill.imaging import AugmentConfig

        config = tiny_config32(tmp_path / "aug", augment=AugmentConfig(max_shift=2, max_rotation_deg=5.0))
        result = train(config, tiny_dataset32)
        assert len(result.history) == 10
        assert all(np.isfinite(r.total) for r in result.history)


class TestMaskedRegionMse:
    def test_deterministic(self, tiny_dataset32):
        model = build_model(*tiny_config32("unused").specs(), seed=0)
        a = masked_region_mse(model, tiny_dataset32, 16, seed=5)
        b = masked_region_mse(model, tiny_dataset32, 16, seed=5)
        assert a == b and a > 0


class TestCheckpointRoundTrip:
    def test_save_load_identical_parameters(self, tmp_path):
        config = tiny_config32("unused")
        model = build_model(*config.specs(), weights=config.weights, seed=4, model_tag="rt")
        model.stage, model.step = 2, 17
        path = save_checkpoint(model, tmp_path / "ckpt")
        loaded = load_checkpoint(path)
        assert loaded.model_tag == "rt"
        assert (loaded.stage, loaded.step) == (2, 17)
        for net in ("generator", "local_disc", "global_disc", "parser"):
            for a, b in zip(getattr(model, net).state_dict().values(), getattr(loaded, net).state_dict().values()):
                assert torch.equal(a, b)
        assert all(not p.requires_grad for p in loaded.parser.parameters())

    def test_identical_completions_after_reload(self, tmp_path, tiny_dataset32):
        from facefill.completion import CompletionRequest, complete
        from facefill.masking import rect_mask

        config = tiny_config32("unused")
        model = build_model(*config.specs(), weights=config.weights, seed=4)
        path = save_checkpoint(model, tmp_path / "ckpt")
        loaded = load_checkpoint(path)
        img = tiny_dataset32.images[0]
        mask = rect_mask(32, 8, 8, 12, 12)
        a = complete(CompletionRequest(image=img, mask=mask, seed=3), model)
        b = complete(CompletionRequest(image=img, mask=mask, seed=3), loaded)
        assert np.array_equal(a, b)

    def test_atomic_overwrite(self, tmp_path):
        config = tiny_config32("unused")
        model = build_model(*config.specs(), seed=4)
        path = save_checkpoint(model, tmp_path / "ckpt")
        model.step = 99
        save_checkpoint(model, tmp_path / "ckpt")
        assert read_manifest(path)["step"] == 99

    def test_manifest_digest_tracks_content(self, tmp_path):
        config = tiny_config32("unused")
        model = build_model(*config.specs(), seed=4)
        path = save_checkpoint(model, tmp_path / "ckpt")
        d1 = manifest_digest(path)
        assert d1 == manifest_digest(path)
        model.step = 1
        save_checkpoint(model, tmp_path / "ckpt")
        assert manifest_digest(path) != d1

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "nothing")

    def test_corrupt_manifest(self, tmp_path):
        folder = tmp_path / "bad"
        folder.mkdir()
        (folder / "manifest.json").write_text("{not json")
        with pytest.raises(CheckpointError):
            load_checkpoint(folder)

    def test_wrong_format_tag(self, tmp_path):
        folder = tmp_path / "fmt"
        folder.mkdir()
        (folder / "manifest.json").write_text(json.dumps({"format": "something-else"}))
        with pytest.raises(CheckpointError):
            load_checkpoint(folder)

    def test_missing_weight_file(self, tmp_path):
        config = tiny_config32("unused")
        model = build_model(*config.specs(), seed=4)
        path = save_checkpoint(model, tmp_path / "ckpt")
        (path / "generator.pt").unlink()
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_checkpoint_format_constant(self, tmp_path):
        config = tiny_config32("unused")
        model = build_model(*config.specs(), seed=4)
        path = save_checkpoint(model, tmp_path / "ckpt")
        assert read_manifest(path)["format"] == CHECKPOINT_FORMAT


class TestParserCheckpoint:
    def test_round_trip_digest(self, tmp_path):
        torch.manual_seed(5)
        parser = Parser(ParserSpec(image_size=32, base_channels=4, bottleneck_dim=32)).freeze()
        path = save_parser_checkpoint(parser, tmp_path / "parser")
        loaded = load_parser_checkpoint(path)
        assert parser_digest(loaded) == parser_digest(parser)
        assert read_manifest(path)["format"] == PARSER_CHECKPOINT_FORMAT
        assert all(not p.requires_grad for p in loaded.parameters())

    def test_completion_checkpoint_rejected(self, tmp_path):
        config = tiny_config32("unused")
        model = build_model(*config.specs(), seed=4)
        path = save_checkpoint(model, tmp_path / "ckpt")
        with pytest.raises(CheckpointError):
            load_parser_checkpoint(path)

    def test_train_uses_configured_parser(self, tiny_dataset32, tmp_path):
        torch.manual_seed(6)
        parser = Parser(ParserSpec(image_size=32, base_channels=4, bottleneck_dim=32)).freeze()
        ppath = save_parser_checkpoint(parser, tmp_path / "parser")
        config = tiny_config32(tmp_path / "run", parser_path=str(ppath))
        result = train(config, tiny_dataset32)
        assert parser_digest(result.model.parser) == parser_digest(parser)


class TestParserTraining:
    def test_validation_errors(self):
        with pytest.raises(ValueError):
            train_parser([])
        rng = np.random.default_rng(0)
        img = rng.random((32, 32, 3))
        with pytest.raises(ValueError):
            train_parser([(img, np.zeros((16, 16), dtype=int))])
        with pytest.raises(ValueError):
            train_parser([(img, np.full((32, 32), 11))])

    def test_short_run_improves_over_chance(self):
        pairs = ff.make_parsing_dataset(12, size=32, seed=2)
        config = ParserTrainConfig(seed=0, max_steps=60, eval_every=20, image_size=32, base_channels=8, bottleneck_dim=64)
        result = train_parser(pairs, config)
        assert result.steps_run <= 60
        assert 0.0 <= result.overall_f <= 1.0
        assert result.history
        assert all(not p.requires_grad for p in result.parser.parameters())
