import json

import numpy as np
import pytest

from covplan import io as cio
from covplan.config import ExperimentConfig
from covplan.learner import QLearningCoverage

from conftest import tiny_env

HASH = ExperimentConfig().hash


def test_qtable_roundtrip(tmp_path):
    q = np.random.default_rng(0).normal(size=(3, 4, 5, 6))
    cio.save_qtable(tmp_path / "q.bin", q, HASH)
    back, digest = cio.load_qtable(tmp_path / "q.bin")
    np.testing.assert_array_equal(back, q)
    assert digest == HASH


def test_qtable_layout(tmp_path):
    q = np.arange(6, dtype=float).reshape(2, 3)
    cio.save_qtable(tmp_path / "q.bin", q, HASH)
    raw = (tmp_path / "q.bin").read_bytes()
    assert raw[:4] == b"CVQT"
    assert len(raw) == 4 + 4 + 2 * 8 + 32 + 6 * 8
    np.testing.assert_array_equal(np.frombuffer(raw[-48:], "<f8"), np.arange(6))


@pytest.mark.parametrize("mangle", [lambda b: b"XXXX" + b[4:], lambda b: b[:-3]])
def test_qtable_corrupt(tmp_path, mangle):
    cio.save_qtable(tmp_path / "q.bin", np.zeros((2, 2)), HASH)
    (tmp_path / "q.bin").write_bytes(mangle((tmp_path / "q.bin").read_bytes()))
    with pytest.raises(ValueError):
        cio.load_qtable(tmp_path / "q.bin")


def test_shape_check():
    cio.check_qtable_shape(np.zeros((1, 2, 3, 4)), (1, 2, 3, 4))
    with pytest.raises(cio.DimensionMismatchError):
        cio.check_qtable_shape(np.zeros((1, 2, 3, 4)), (1, 2, 3, 5))


def test_csv_dump(tmp_path):
    q = np.zeros((2, 2, 2, 3))
    q[1, 0, 1, 2] = -1.5
    cio.dump_qtable_csv(tmp_path / "q.csv", q)
    lines = (tmp_path / "q.csv").read_text().splitlines()
    assert lines == ["cell,coverage,distance,action,value", "1,0,1,2,-1.5"]


def test_curve_csv(tmp_path):
    est = QLearningCoverage(env=tiny_env(), n_episodes=12).fit()
    cio.write_curve_csv(tmp_path / "c.csv", est.curve_)
    rows = cio.read_curve_csv(tmp_path / "c.csv")
    assert len(rows) == 12
    assert list(rows[0]) == ["episode", "discounted_return", "return", "coverage_time", "epsilon"]
    assert float(rows[3]["discounted_return"]) == est.curve_.discounted_return[3]


def _logs(n=3):
    logs = []
    QLearningCoverage(env=tiny_env(), n_episodes=n).fit(
        episode_callback=lambda k, ep: logs.append(ep))
    return logs


def test_episode_log_roundtrip(tmp_path):
    logs = _logs()
    cio.write_episode_logs(tmp_path / "e.jsonl", logs, tiny_env().get_params())
    eps = list(cio.read_episode_logs(tmp_path / "e.jsonl"))
    assert len(eps) == 3
    for ep, log in zip(eps, logs):
        assert [s["r"] for s in ep["steps"]] == [s.reward for s in log.steps]
        assert ep["header"]["x0"] == list(log.start)


def test_truncated_log_reports_line(tmp_path):
    cio.write_episode_logs(tmp_path / "e.jsonl", _logs(2), tiny_env().get_params())
    lines = (tmp_path / "e.jsonl").read_text().splitlines()
    lines[4] = lines[4][: len(lines[4]) // 2]
    (tmp_path / "e.jsonl").write_text("\n".join(lines) + "\n")
    with pytest.raises(cio.LogFormatError) as exc:
        list(cio.read_episode_logs(tmp_path / "e.jsonl"))
    assert exc.value.lineno == 5


@pytest.mark.parametrize("body,lineno", [
    ('{"t": 1, "x": [0, 0], "s": [0, 0, 0], "a": [0, 0, 0], "r": -1, "new_cover": [], "collision": false}\n', 1),
    ('{"episode": 0, "x0": [1, 1]}\n', 1),
    ("[1, 2]\n", 1),
])
def test_structural_errors(tmp_path, body, lineno):
    (tmp_path / "e.jsonl").write_text(body)
    with pytest.raises(cio.LogFormatError) as exc:
        list(cio.read_episode_logs(tmp_path / "e.jsonl"))
    assert exc.value.lineno == lineno


def test_manifest(tmp_path):
    (tmp_path / "a.txt").write_text("hello")
    doc = cio.write_manifest(tmp_path / "m.json", HASH, "0.1.0", 1.5, {"a": tmp_path / "a.txt"})
    assert doc["files"]["a"]["sha256"] == cio.sha256_file(tmp_path / "a.txt")
    assert cio.verify_manifest(tmp_path / "m.json") == []
    (tmp_path / "a.txt").write_text("changed")
    assert cio.verify_manifest(tmp_path / "m.json") == ["a"]
    assert json.loads((tmp_path / "m.json").read_text())["config_hash"] == HASH
