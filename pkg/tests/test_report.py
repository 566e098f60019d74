import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from peginhole.agent import EpisodeLog, write_episode_csv
from peginhole.report import Z90, moving_window, summarize, trend, write_report


def test_constant_rewards_have_zero_width():
    rows = moving_window(range(30), [0.4] * 30, [12] * 30, window=20)
    assert len(rows) == 11
    for r in rows:
        assert r.reward_mean == pytest.approx(0.4)
        assert r.reward_lo == pytest.approx(0.4) and r.reward_hi == pytest.approx(0.4)
        assert r.steps_lo == r.steps_hi == 12
    assert math.isnan(trend(range(30), [0.4] * 30))


def test_window_longer_than_run():
    rows = moving_window([0, 1, 2], [0.1, 0.2, 0.6], [5, 6, 7], window=20)
    assert len(rows) == 1 and rows[0].n == 3 and rows[0].episode == 2
    s = np.std([0.1, 0.2, 0.6], ddof=1)
    assert rows[0].reward_hi - rows[0].reward_mean == pytest.approx(Z90 * s / math.sqrt(3))


def test_single_episode():
    rows = moving_window([7], [0.5], [3])
    assert rows[0].reward_lo == rows[0].reward_hi == 0.5
    assert moving_window([], [], []) == []
    with pytest.raises(ValueError):
        moving_window([1], [1], [1], window=0)


def test_bounds_match_direct_computation():
    rng = np.random.default_rng(0)
    r = rng.uniform(-1, 1, 50)
    k = rng.integers(1, 100, 50)
    rows = moving_window(range(50), r, k, window=20)
    last = r[-20:]
    half = 1.645 * last.std(ddof=1) / math.sqrt(20)
    assert rows[-1].reward_lo == pytest.approx(last.mean() - half)
    assert rows[-1].steps_mean == pytest.approx(k[-20:].mean())


@given(st.lists(st.floats(-1, 0.99), min_size=3, max_size=40))
def test_spearman_matches_scipy(values):
    rho = trend(range(len(values)), values)
    if np.ptp(values) == 0:
        assert math.isnan(rho)
    else:
        assert rho == pytest.approx(stats.spearmanr(range(len(values)), values).statistic, nan_ok=True)


def test_spearman_examples():
    assert trend(range(5), [1, 2, 3, 4, 5]) == pytest.approx(1.0)
    assert trend(range(5), [5, 4, 3, 2, 1]) == pytest.approx(-1.0)


def _logs():
    out = [EpisodeLog(i, 50 - i, -0.5 + i / 50, 0.1, "success" if i % 2 else "timeout", "search_stage1")
           for i in range(40)]
    out += [EpisodeLog(40 + i, 10, 0.5, 0.1, "success", "insertion") for i in range(5)]
    return out


def test_write_report(tmp_path):
    write_episode_csv(tmp_path / "episodes.csv", _logs())
    slim = write_report(tmp_path, window=20, plot=False)
    assert set(slim) == {"search_stage1", "insertion"}
    s1 = slim["search_stage1"]
    assert s1["episodes"] == 40 and s1["success_rate"] == 0.5
    assert s1["reward_spearman"] == pytest.approx(1.0)
    assert slim["insertion"]["reward_spearman"] is None
    assert json.loads((tmp_path / "report.json").read_text()) == slim
    curve = (tmp_path / "curve_search_stage1.csv").read_text().splitlines()
    assert len(curve) == 1 + 21 and curve[0].startswith("episode,n,reward_mean")


def test_summarize_reads_only_the_log(tmp_path):
    write_episode_csv(tmp_path / "episodes.csv", _logs())
    s = summarize(tmp_path / "episodes.csv", window=5)
    assert s["insertion"]["window"] == 5 and len(s["insertion"]["rows"]) == 1
