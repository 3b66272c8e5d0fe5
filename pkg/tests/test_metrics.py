import math

import numpy as np
import pytest

from thermotwin.metrics import compute_metrics, per_hour_metrics


def loop_oracle(truth, pred, mask, mape_floor=1.0):
    """Independent element-wise implementation."""
    se = ae = 0.0
    n = 0
    pe = 0.0
    n_pe = 0
    flat_t = truth.reshape(-1)
    flat_p = pred.reshape(-1)
    flat_m = np.broadcast_to(mask, truth.shape).reshape(-1)
    for i in range(flat_t.size):
        if not flat_m[i] or not math.isfinite(flat_t[i]) or not math.isfinite(flat_p[i]):
            continue
        d = flat_t[i] - flat_p[i]
        se += d * d
        ae += abs(d)
        n += 1
        if abs(flat_t[i]) >= mape_floor:
            pe += abs(d / flat_t[i])
            n_pe += 1
    mse = se / n
    return mse, math.sqrt(mse), ae / n, (100 * pe / n_pe if n_pe else None), n


def test_identical_stacks_zero():
    a = np.random.default_rng(0).normal(30, 5, (4, 8, 8))
    r = compute_metrics(a, a.copy())
    assert r.mse == r.rmse == r.mae == 0.0
    assert r.mape == 0.0


def test_hand_example():
    r = compute_metrics(np.array([1.0, 3.0]), np.array([2.0, 2.0]))
    assert r.mse == pytest.approx(1.0)
    assert r.rmse == pytest.approx(1.0)
    assert r.mae == pytest.approx(1.0)
    assert r.mape == pytest.approx((100 + 100 / 3) / 2)


def test_matches_loop_oracle_random_pairs():
    rng = np.random.default_rng(5)
    for _ in range(50):
        truth = rng.normal(30, 10, (10, 10))
        pred = truth + rng.normal(0, 2, (10, 10))
        mask = rng.random((10, 10)) > 0.2
        r = compute_metrics(truth, pred, mask)
        mse, rmse, mae, mape, n = loop_oracle(truth, pred, mask)
        assert abs(r.mse - mse) <= 1e-12 * abs(mse)
        assert abs(r.rmse - rmse) <= 1e-12 * abs(rmse)
        assert abs(r.mae - mae) <= 1e-12 * abs(mae)
        assert abs(r.mape - mape) <= 1e-12 * abs(mape)
        assert r.n_cells == n


def test_rmse_squared_is_mse_and_mae_below_rmse():
    rng = np.random.default_rng(6)
    for _ in range(30):
        truth = rng.normal(0, 5, 200)
        pred = truth + rng.normal(0, 3, 200)
        r = compute_metrics(truth, pred, mape_floor=0.0)
        assert r.rmse ** 2 == pytest.approx(r.mse, rel=1e-14)
        assert r.mae <= r.rmse + 1e-12


def test_permutation_invariance():
    rng = np.random.default_rng(7)
    truth = rng.normal(30, 5, 100)
    pred = truth + rng.normal(0, 1, 100)
    perm = rng.permutation(100)
    a = compute_metrics(truth, pred)
    b = compute_metrics(truth[perm], pred[perm])
    assert a.mse == pytest.approx(b.mse, rel=1e-14)
    assert a.mae == pytest.approx(b.mae, rel=1e-14)
    assert a.mape == pytest.approx(b.mape, rel=1e-12)


def test_mape_floor_and_undefined():
    truth = np.array([0.1, -0.5, 0.2])
    pred = truth + 1.0
    r = compute_metrics(truth, pred)
    assert r.mape is None  # all below the 1 degC floor
    assert r.mae == pytest.approx(1.0)


def test_zero_evaluable_cells_raises():
    with pytest.raises(ValueError, match="no evaluable"):
        compute_metrics(np.full((3, 3), np.nan), np.zeros((3, 3)))


def test_mask_broadcasts_over_stack():
    rng = np.random.default_rng(8)
    truth = rng.normal(30, 5, (6, 4, 4))
    pred = truth + 1
    mask = np.zeros((4, 4), bool)
    mask[1, 1] = True
    r = compute_metrics(truth, pred, mask)
    assert r.n_cells == 6
    hourly = per_hour_metrics(truth, pred, mask)
    assert len(hourly) == 6
    assert all(h.n_cells == 1 for h in hourly)
