import numpy as np
import pytest

from thermotwin.dataset import WindowSample
from thermotwin.microclimate import UtciStack
from thermotwin.stvit import (StVitConfig, TrainReport, persistence_baseline,
                              train)


def make_window(seed=0, H=8, W=8, t=4):
    rng = np.random.default_rng(seed)
    mask = np.ones((H, W), bool)
    base = np.sin(np.arange(2 * t) / (2 * t) * 2 * np.pi)
    amp = 1 + rng.random((H, W))
    series = base[:, None, None] * amp[None] + 0.05 * rng.normal(size=(2 * t, H, W))
    series = (series - series.mean()) / series.std()
    return WindowSample(
        spatial=rng.normal(size=(4, H, W)),
        utci_in=series[:t], meteo_in=rng.normal(size=(t, 7)),
        target=series[t:], mask=mask, origin=(0, 0, 0))


CFG = StVitConfig(hidden_dim=4, num_heads=2, t_in=4, t_out=4, seed=0,
                  max_epochs=8, batch_size=2)


def test_training_is_deterministic():
    windows = [make_window(s) for s in range(4)]
    p1, r1 = train(CFG, windows[:3], windows[3:])
    p2, r2 = train(CFG, windows[:3], windows[3:])
    assert [e.val_loss for e in r1.epochs] == [e.val_loss for e in r2.epochs]
    assert r1.best_epoch == r2.best_epoch
    for k in p1:
        assert np.array_equal(p1[k], p2[k]), k


def test_loss_decreases_on_toy_problem():
    windows = [make_window(s) for s in range(4)]
    _, report = train(CFG, windows[:3], windows[3:])
    assert report.epochs[-1].train_loss < report.epochs[0].train_loss


def test_patience_zero_stops_at_first_non_improvement():
    windows = [make_window(s) for s in range(4)]
    cfg = StVitConfig(hidden_dim=4, num_heads=2, t_in=4, t_out=4, seed=0,
                      max_epochs=50, batch_size=2, patience=0,
                      min_delta=10.0)  # nothing can improve by 10
    _, report = train(cfg, windows[:3], windows[3:])
    # first epoch sets best (inf -> value), second is "non-improving" -> stop
    assert len(report.epochs) == 2
    assert report.stopped_reason == "early_stopping"


def test_best_params_returned():
    windows = [make_window(s) for s in range(4)]
    _, report = train(CFG, windows[:3], windows[3:])
    later = [e.val_loss for e in report.epochs if e.epoch > report.best_epoch]
    for v in later:
        assert report.best_val_loss <= v + CFG.min_delta


def test_time_budget_stops():
    windows = [make_window(s) for s in range(4)]
    cfg = StVitConfig(hidden_dim=4, num_heads=2, t_in=4, t_out=4, seed=0,
                      max_epochs=500, batch_size=2)
    _, report = train(cfg, windows[:3], windows[3:], max_seconds=0.5)
    assert report.stopped_reason in ("time_budget", "early_stopping")
    assert report.wall_seconds < 30


def test_empty_split_rejected():
    with pytest.raises(ValueError):
        train(CFG, [], [make_window(0)])


class TestPersistence:
    def make_stack(self, frames):
        from datetime import datetime, timedelta, timezone
        t0 = datetime(2022, 7, 1, tzinfo=timezone.utc)
        times = tuple(t0 + timedelta(hours=i) for i in range(len(frames)))
        return UtciStack(times, np.asarray(frames, np.float32),
                         np.ones(frames[0].shape, bool))

    def test_periodic_input_zero_error(self):
        rng = np.random.default_rng(0)
        day = rng.normal(30, 5, (24, 8, 8)).astype(np.float32)
        stack = self.make_stack(np.concatenate([day, day]))
        pred = persistence_baseline(stack, 48)
        assert np.array_equal(pred, day)

    def test_constant_stack(self):
        stack = self.make_stack(np.full((30, 4, 4), 31.0, np.float32))
        pred = persistence_baseline(stack, 30)
        assert (pred == 31.0).all()

    def test_warming_trend_has_error(self):
        frames = np.array([np.full((4, 4), 25.0 + 0.5 * h) for h in range(48)],
                          dtype=np.float32)
        stack = self.make_stack(frames)
        pred = persistence_baseline(stack, 48)
        truth = frames[24:48] + 12.0  # would-be continuation
        mae = np.abs(pred - truth).mean()
        assert mae > 0

    def test_short_tail_rejected(self):
        stack = self.make_stack(np.zeros((10, 4, 4), np.float32))
        with pytest.raises(ValueError):
            persistence_baseline(stack, 10)
