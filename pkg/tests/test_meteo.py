import math
from datetime import date, timedelta

import numpy as np
import pytest

from thermotwin.meteo import (DEFAULT_THRESHOLD_C, HeatwaveSpec, HeatWavePeriod,
                              MeteoError, MeteoSeries, daily_maxima,
                              detect_heatwaves, generate_synthetic_meteo,
                              load_meteo_csv, percentile_threshold,
                              save_meteo_csv, study_window)


def brute_force_runs(maxima, threshold, min_consecutive):
    """Oracle: scan every [i, j] day range and keep maximal qualifying runs."""
    n = len(maxima)
    hot = [m >= threshold for m in maxima]
    runs = []
    i = 0
    while i < n:
        if hot[i]:
            j = i
            while j + 1 < n and hot[j + 1]:
                j += 1
            if j - i + 1 >= min_consecutive:
                runs.append((i, j))
            i = j + 1
        else:
            i += 1
    return runs


def series_from_daily_maxima(maxima):
    """Synthesize an hourly series whose local-day maxima equal ``maxima``."""
    recs = generate_synthetic_meteo(0, len(maxima), level_sigma=0.0,
                                    hourly_sigma=0.0, diurnal_amplitude=2.0,
                                    base_ta=0.0)
    out = []
    for i, r in enumerate(recs.records):
        day = i // 24
        # diurnal in [-2, 2] peaking at 15h; shift so the daily max matches
        out.append(type(r)(r.timestamp, r.ta + maxima[day] - 2.0, r.rh,
                           r.wind_speed, r.wind_dir, r.ghi, r.dni, r.dhi))
    return MeteoSeries(tuple(out))


def test_csv_round_trip(tmp_path):
    series = generate_synthetic_meteo(1, 2)
    path = tmp_path / "m.csv"
    save_meteo_csv(series, path)
    back = load_meteo_csv(path)
    assert len(back) == 48
    assert back.records[0].timestamp == series.records[0].timestamp
    assert abs(back.records[10].ta - series.records[10].ta) < 1e-3


def test_gap_detection(tmp_path):
    series = generate_synthetic_meteo(1, 2)
    path = tmp_path / "m.csv"
    save_meteo_csv(series, path)
    lines = path.read_text().splitlines()
    skipped = lines[:14] + lines[15:]  # drop hour 13
    path.write_text("\n".join(skipped) + "\n")
    with pytest.raises(MeteoError, match="gap at"):
        load_meteo_csv(path)


def test_out_of_range_value(tmp_path):
    series = generate_synthetic_meteo(1, 1)
    path = tmp_path / "m.csv"
    save_meteo_csv(series, path)
    lines = path.read_text().splitlines()
    parts = lines[3].split(",")
    parts[2] = "120.0"  # rh
    lines[3] = ",".join(parts)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(MeteoError, match="row 4.*rh"):
        load_meteo_csv(path)


def test_missing_column(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("timestamp,ta,rh\n2022-07-01T00:00:00+00:00,30,50\n")
    with pytest.raises(MeteoError, match="header"):
        load_meteo_csv(path)


def test_heatwave_days_dominate_daily_maxima():
    series = generate_synthetic_meteo(5, 14, HeatwaveSpec(4, 8, 4.0))
    maxima = [m for _, m in daily_maxima(series)]
    wave = maxima[3:11]
    others = maxima[:3] + maxima[11:]
    assert min(wave) > max(others)


def test_zero_amplitude_heatwave_is_inert():
    a = generate_synthetic_meteo(5, 14, HeatwaveSpec(4, 8, 0.0))
    b = generate_synthetic_meteo(5, 14, None)
    assert np.allclose(a.values(), b.values())


def test_midnight_has_no_direct_radiation():
    series = generate_synthetic_meteo(2, 3)
    for rec in series.records[::24]:  # local midnights
        assert rec.dni == 0.0 and rec.ghi == 0.0


def test_detect_three_hot_days():
    series = series_from_daily_maxima([39.0, 39.0, 39.0])
    events = detect_heatwaves(series, DEFAULT_THRESHOLD_C, 3)
    assert len(events) == 1
    assert events[0].n_days == 3


def test_detect_none_below_threshold():
    series = series_from_daily_maxima([35.0] * 6)
    assert detect_heatwaves(series, DEFAULT_THRESHOLD_C, 3) == []


def test_detect_eight_day_event():
    maxima = [39, 37, 39, 39, 39, 39, 39, 39, 39, 39, 37]
    series = series_from_daily_maxima(maxima)
    events = detect_heatwaves(series, DEFAULT_THRESHOLD_C, 3)
    oracle = brute_force_runs(maxima, DEFAULT_THRESHOLD_C, 3)
    assert oracle == [(2, 9)]  # days 3..10, the 8-day event
    assert len(events) == 1
    assert events[0].n_days == 8
    win = study_window(events[0], 3)
    assert win.window_days == 14


def test_detect_matches_brute_force_on_random_series():
    rng = np.random.default_rng(12)
    for _ in range(40):
        n_days = int(rng.integers(3, 25))
        maxima = list(36 + 4 * rng.random(n_days))
        series = series_from_daily_maxima(maxima)
        got = detect_heatwaves(series, 38.0, 3)
        want = brute_force_runs(maxima, 38.0, 3)
        first_day = daily_maxima(series)[0][0]
        got_idx = [((e.start_day - first_day).days, (e.end_day - first_day).days)
                   for e in got]
        assert got_idx == want


def test_percentile_nearest_rank():
    assert percentile_threshold(range(1, 101), 98) == 98
    assert percentile_threshold([40.0], 98) == 40.0
    rng = np.random.default_rng(7)
    vals = list(rng.normal(35, 3, 30))
    # sort-and-index oracle
    want = sorted(vals)[math.ceil(0.98 * 30) - 1]
    assert percentile_threshold(vals, 98) == want


def test_percentile_monotone_and_permutation_invariant():
    rng = np.random.default_rng(8)
    vals = list(rng.normal(30, 5, 50))
    perm = list(rng.permutation(vals))
    prev = -math.inf
    for p in (10, 25, 50, 75, 90, 98, 100):
        t = percentile_threshold(vals, p)
        assert t >= prev
        assert percentile_threshold(perm, p) == t
        prev = t


def test_percentile_empty_raises():
    with pytest.raises(MeteoError):
        percentile_threshold([], 98)


def test_study_window_arithmetic():
    ev = HeatWavePeriod(date(2022, 7, 6), date(2022, 7, 13), 38.33)
    assert study_window(ev, 3).window_days == 14
    assert study_window(ev, 0).window_days == ev.n_days
    ev3 = HeatWavePeriod(date(2022, 7, 6), date(2022, 7, 8), 38.33)
    assert study_window(ev3, 3).window_days == 9


def test_study_window_series_bounds():
    series = generate_synthetic_meteo(1, 5)
    first = daily_maxima(series)[0][0]
    ev = HeatWavePeriod(first + timedelta(days=1), first + timedelta(days=3), 38.0)
    with pytest.raises(MeteoError, match="exceeds"):
        study_window(ev, 3, series)


def test_series_requires_hourly_continuity():
    series = generate_synthetic_meteo(1, 1)
    records = series.records[:5] + series.records[6:]
    with pytest.raises(MeteoError, match="gap"):
        MeteoSeries(records)
