import numpy as np
import pytest
import torch
import yaml

from conftest import toy_example
from promptsep.core.errors import CheckpointError, ConfigError, SignalError, TrainingError
from promptsep.model import FixedOutputSeparator, PromptSeparator, load_checkpoint, save_checkpoint
from promptsep.model.config import ModelConfig
from promptsep.train import (
    FineTuneConfig,
    FixedBatches,
    TrainConfig,
    Trainer,
    fine_tune_with_dropout,
    load_experiment_config,
    run_experiment,
)
from promptsep.util.logs import read_json_lines


def small_config(**overrides) -> TrainConfig:
    values = dict(epochs=2, steps_per_epoch=10, batch_size=2, warmup_steps=5, progress=False)
    values.update(overrides)
    return TrainConfig(**values)


@pytest.fixture
def examples(rng):
    return [toy_example(p, rng) for p in ("speech,sfx-mix", "speech,speech", "vocals,drums,bass", "music-mix")]


@pytest.fixture
def validation(rng):
    return [toy_example(p, rng) for p in ("speech,sfx-mix", "sfx,sfx")]


def parameters(model):
    return {name: p.detach().clone() for name, p in model.named_parameters()}


class TestTrainStep:
    def test_first_step_has_zero_lr(self, micro_model, examples):
        config = small_config()
        trainer = Trainer(micro_model, config, FixedBatches(examples, config))
        before = parameters(micro_model)
        result = trainer.train_step(examples[:2])
        assert result.lr == 0.0
        for name, value in micro_model.named_parameters():
            assert torch.equal(value.detach(), before[name]), name
        assert trainer.schedule.global_step == 1
        assert trainer.schedule.current_lr == pytest.approx(config.peak_lr / config.warmup_steps)

    def test_gradients_are_clipped(self, micro_model, examples):
        config = small_config(grad_clip_norm=1e-3)
        trainer = Trainer(micro_model, config, FixedBatches(examples, config))
        result = trainer.train_step(examples[:2])
        grads = [p.grad for p in micro_model.parameters() if p.grad is not None]
        total = torch.linalg.vector_norm(torch.stack([torch.linalg.vector_norm(g) for g in grads]))
        assert result.grad_norm > config.grad_clip_norm
        assert float(total) <= config.grad_clip_norm + 1e-6

    def test_per_category_losses(self, micro_model, examples):
        config = small_config()
        result = Trainer(micro_model, config, FixedBatches(examples, config)).train_step(examples[:2])
        assert set(result.per_category()) == {"speech", "sfx-mix"}
        assert np.isfinite(result.loss)

    def test_mixed_lengths(self, micro_model, rng):
        config = small_config()
        batch = [toy_example("speech", rng, 800), toy_example("speech", rng, 400)]
        with pytest.raises(TrainingError, match="segment lengths") as info:
            Trainer(micro_model, config, FixedBatches(batch, config)).train_step(batch)
        assert info.value.step == 0

    def test_fixed_output_model(self, micro_config, examples):
        torch.manual_seed(0)
        config = small_config(model_kind="fixed-output")
        trainer = Trainer(FixedOutputSeparator(micro_config), config, FixedBatches(examples, config))
        result = trainer.train_step(examples[2:3])
        assert set(result.per_category()) == {"head0", "head1", "head2", "head3"}

    def test_batch_order_does_not_matter(self, micro_config, examples):
        config = small_config()
        batch = examples[:3]
        results = []
        for order in ([0, 1, 2], [2, 0, 1]):
            torch.manual_seed(0)
            model = PromptSeparator(micro_config)
            trainer = Trainer(model, config, FixedBatches(examples, config))
            # past warmup so the step moves the parameters
            trainer.schedule.global_step = config.warmup_steps
            trainer.schedule.refresh(config)
            step = trainer.train_step([batch[i] for i in order])
            assert step.lr == config.peak_lr
            results.append((step.loss, parameters(model)))
        (loss, first), (other_loss, second) = results
        assert loss == pytest.approx(other_loss, rel=1e-6)
        for name, value in second.items():
            torch.testing.assert_close(value, first[name], rtol=1e-5, atol=1e-6)


class TestFit:
    def test_checkpoints_and_log(self, tmp_path, micro_model, examples, validation):
        config = small_config()
        trainer = Trainer(micro_model, config, FixedBatches(examples, config), validation, tmp_path)
        written = trainer.fit()
        assert [p.name for p in written] == ["epoch001.pt", "epoch002.pt"]
        assert (tmp_path / "best.pt").is_file()

        records = read_json_lines(tmp_path / "train_log.jsonl")
        steps = [r for r in records if r["event"] == "step"]
        epochs = [r for r in records if r["event"] == "epoch"]
        assert len(steps) == 20 and len(epochs) == 2
        assert steps[-1]["step"] == 20
        best = [r["best_validation_loss"] for r in epochs]
        assert best == sorted(best, reverse=True)

        state = load_checkpoint(written[-1]).training_state
        assert state["schedule"]["epoch"] == 2
        assert state["schedule"]["global_step"] == 20

    def test_fit_needs_run_dir(self, micro_model, examples):
        config = small_config()
        with pytest.raises(TrainingError, match="run directory"):
            Trainer(micro_model, config, FixedBatches(examples, config)).fit()

    def test_resume_matches_uninterrupted_run(self, tmp_path, micro_config, examples, validation):
        config = small_config()

        torch.manual_seed(0)
        straight = Trainer(PromptSeparator(micro_config), config, FixedBatches(examples, config),
                           validation, tmp_path / "straight")
        straight.fit()

        torch.manual_seed(0)
        first_half = small_config(epochs=1)
        Trainer(PromptSeparator(micro_config), first_half, FixedBatches(examples, first_half),
                validation, tmp_path / "split").fit()
        resumed = Trainer.resume(tmp_path / "split" / "epoch001.pt", config,
                                 FixedBatches(examples, config), validation, tmp_path / "split")
        assert resumed.schedule.epoch == 1
        resumed.fit()

        assert resumed.schedule.global_step == straight.schedule.global_step
        assert resumed.schedule.current_lr == straight.schedule.current_lr
        expected = parameters(straight.model)
        for name, value in parameters(resumed.model).items():
            torch.testing.assert_close(value, expected[name], rtol=1e-5, atol=1e-6)

    def test_log_closed_when_fit_fails(self, tmp_path, micro_model):
        class BrokenBatches:
            def epoch_batches(self, epoch):
                raise SignalError("unreadable source")
                yield

        trainer = Trainer(micro_model, small_config(), BrokenBatches(), run_dir=tmp_path)
        with pytest.raises(TrainingError, match="data error"):
            trainer.fit()
        assert trainer.log is None
        assert (tmp_path / "train_log.jsonl").is_file()

    def test_resume_without_training_state(self, tmp_path, micro_model, examples):
        save_checkpoint(tmp_path / "bare.pt", micro_model)
        config = small_config()
        with pytest.raises(CheckpointError, match="no training state"):
            Trainer.resume(tmp_path / "bare.pt", config, FixedBatches(examples, config))


class TestFineTune:
    def test_heterogeneous_prompts_with_full_dropout(self, tmp_path, micro_model, rng):
        save_checkpoint(tmp_path / "base.pt", micro_model)
        examples = [toy_example(p, rng) for p in ("speech,speech,sfx-mix", "vocals,drums,bass", "music-mix")]
        config = small_config(batch_size=1, steps_per_epoch=3)
        fine_tune = FineTuneConfig(epochs=1, peak_lr=1e-4, prompt_dropout_prob=1.0)
        written = fine_tune_with_dropout(
            tmp_path / "base.pt", config, fine_tune, FixedBatches(examples, config),
            run_dir=tmp_path / "tuned", expected_model=micro_model.config,
        )
        assert [p.name for p in written] == ["epoch001.pt"]
        steps = [r for r in read_json_lines(tmp_path / "tuned" / "train_log.jsonl") if r["event"] == "step"]
        assert len(steps) == 3
        assert all(np.isfinite(r["loss"]) for r in steps)
        # dropout always removes the lone sfx-mix prompt of the first example
        assert "sfx-mix" not in steps[0]["per_category"]

    def test_model_mismatch(self, tmp_path, micro_model, examples):
        save_checkpoint(tmp_path / "base.pt", micro_model)
        config = small_config()
        other = ModelConfig.preset("micro", positional_encoding=False)
        with pytest.raises(CheckpointError, match="does not match"):
            fine_tune_with_dropout(tmp_path / "base.pt", config, FineTuneConfig(epochs=1),
                                   FixedBatches(examples, config), expected_model=other)

    def test_apply(self):
        tuned = FineTuneConfig(epochs=26, peak_lr=1.25e-4).apply(TrainConfig())
        assert tuned.prompt_dropout and tuned.prompt_dropout_prob == 0.25
        assert tuned.epochs == 26 and tuned.peak_lr == 1.25e-4
        assert tuned.warmup_steps == TrainConfig().warmup_steps
        assert tuned.constant_epochs == 0


class TestExperimentConfig:
    def write(self, tmp_path, data):
        path = tmp_path / "exp.yaml"
        path.write_text(yaml.safe_dump(data))
        return path

    def test_defaults(self, tmp_path):
        experiment = load_experiment_config(self.write(tmp_path, {"data": {"manifest": "m.jsonl"}}))
        assert experiment.model == ModelConfig.preset("medium")
        assert experiment.train == TrainConfig()
        assert experiment.data.manifest == tmp_path / "m.jsonl"
        assert experiment.fine_tune is None

    def test_large_preset_peak_lr(self, tmp_path):
        path = self.write(tmp_path, {"model": {"preset": "large"}, "data": {"manifest": "m.jsonl"}})
        assert load_experiment_config(path).train.peak_lr == 5e-4
        assert load_experiment_config(path, {"peak_lr": 2e-4}).train.peak_lr == 2e-4

    def test_dropout_prob_out_of_range(self, tmp_path):
        path = self.write(tmp_path, {"data": {"manifest": "m.jsonl"}, "train": {"prompt_dropout_prob": 1.5}})
        with pytest.raises(ConfigError, match="train.prompt_dropout_prob"):
            load_experiment_config(path)

    def test_problems_are_collected(self, tmp_path):
        path = self.write(tmp_path, {
            "model": {"preset": "micro", "embed_dim": 7},
            "train": {"epochs": 0, "learning_rate": 1.0},
            "evaluation": {},
        })
        with pytest.raises(ConfigError) as info:
            load_experiment_config(path)
        text = "\n".join(info.value.problems)
        for fragment in ("'evaluation' is not a known section", "model.embed_dim", "train.epochs",
                         "train.learning_rate is not a known field", "data.manifest is required"):
            assert fragment in text

    def test_fine_tune_section(self, tmp_path):
        path = self.write(tmp_path, {
            "data": {"manifest": "m.jsonl"},
            "fine_tune": {"base_checkpoint": "base.pt", "epochs": 4},
        })
        fine_tune = load_experiment_config(path).fine_tune
        assert fine_tune.base_checkpoint == tmp_path / "base.pt"
        assert fine_tune.epochs == 4


def test_run_experiment(tmp_path, corpus):
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump({
        "model": {"preset": "micro"},
        "data": {"manifest": str(corpus)},
        "train": {"epochs": 1, "steps_per_epoch": 2, "batch_size": 2, "segment_seconds": 0.1,
                  "warmup_steps": 2, "validation_size": 2, "progress": False},
        "run_dir": str(tmp_path / "run"),
    }))
    written = run_experiment(load_experiment_config(path))
    assert [p.name for p in written] == ["epoch001.pt"]
    assert (tmp_path / "run" / "validation_recipes.jsonl").is_file()
    assert load_checkpoint(written[0]).model_config == ModelConfig.preset("micro")


def test_run_experiment_resumes_fine_tune(tmp_path, corpus, micro_model):
    save_checkpoint(tmp_path / "base.pt", micro_model)
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump({
        "model": {"preset": "micro"},
        "data": {"manifest": str(corpus)},
        "train": {"epochs": 1, "steps_per_epoch": 2, "batch_size": 2, "segment_seconds": 0.1,
                  "warmup_steps": 2, "validation_size": 2, "progress": False},
        "fine_tune": {"base_checkpoint": str(tmp_path / "base.pt"), "epochs": 2},
        "run_dir": str(tmp_path / "run"),
    }))
    experiment = load_experiment_config(path)
    written = run_experiment(experiment)
    assert [p.name for p in written] == ["epoch001.pt", "epoch002.pt"]

    resumed = run_experiment(experiment, resume=tmp_path / "run" / "epoch001.pt")
    assert [p.name for p in resumed] == ["epoch002.pt"]
    state = load_checkpoint(resumed[0]).training_state
    assert state["schedule"]["epoch"] == 2
    assert state["schedule"]["global_step"] == 4
    assert state["train_config"]["prompt_dropout"] is True
