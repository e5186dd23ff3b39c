import math

import pytest

from promptsep.train import FineTuneConfig, ScheduleState, TrainConfig, lr_at


@pytest.fixture
def config():
    return TrainConfig()


def test_warmup(config):
    assert lr_at(0, 0, 0, config) == 0.0
    assert lr_at(5000, 0, 0, config) == pytest.approx(5e-4)
    assert lr_at(10_000, 4, 0, config) == pytest.approx(1e-3)


def test_decays_halve(config):
    assert lr_at(400_000, 120, 3, config) == pytest.approx(1.25e-4)


def test_negative_step(config):
    with pytest.raises(ValueError):
        lr_at(-1, 0, 0, config)


def run_trace(losses, config):
    state = ScheduleState()
    decays = []
    for loss in losses:
        before = state.decay_applied_count
        state.end_epoch(loss, config)
        if state.decay_applied_count > before:
            decays.append(state.epoch)
    return state, decays


def test_plateau_after_improvement(config):
    losses = [-float(e) for e in range(1, 81)] + [-80.0] * 70
    state, decays = run_trace(losses, config)
    assert decays[:3] == [85, 90, 95]
    assert all(epoch % 5 == 0 for epoch in decays)
    assert state.best_validation_loss == -80.0


def test_no_decay_during_constant_phase(config):
    _, decays = run_trace([1.0] * 150, config)
    assert decays[0] == 75
    assert all(epoch >= 75 for epoch in decays)


def test_constant_epochs_zero():
    config = TrainConfig(constant_epochs=0)
    _, decays = run_trace([1.0] * 12, config)
    assert decays == [6, 11]


def test_improvement_resets_patience(config):
    state = ScheduleState(epoch=90, best_validation_loss=1.0, epochs_since_improvement=4)
    assert state.end_epoch(0.5, config)
    assert state.epochs_since_improvement == 0
    assert state.decay_applied_count == 0


def test_lr_follows_decays(config):
    state = ScheduleState(global_step=20_000, epoch=80, best_validation_loss=0.0, epochs_since_improvement=4)
    state.end_epoch(1.0, config)
    assert state.current_lr == pytest.approx(5e-4)


def test_round_trip():
    state = ScheduleState(global_step=12, epoch=3, current_lr=1e-4, best_validation_loss=-3.5,
                          epochs_since_improvement=2, decay_applied_count=1)
    assert ScheduleState.from_dict(state.to_dict()) == state
    assert math.isinf(ScheduleState().best_validation_loss)


def test_fine_tune_decays_after_plateau():
    config = FineTuneConfig().apply(TrainConfig())
    state = ScheduleState(global_step=config.warmup_steps)
    state.refresh(config)
    trace = []
    for _ in range(6):
        state.end_epoch(1.0, config)
        trace.append(state.current_lr)
    assert trace[:5] == [pytest.approx(1.25e-4)] * 5
    assert trace[5] == pytest.approx(6.25e-5)
