import numpy as np
import pytest

from qlrb import storage
from qlrb.online import certify, rb_solve
from qlrb.truth import truth_solve


def test_trajectory_csv_roundtrip(tmp_path, small_setup):
    problem, _, _ = small_setup
    traj = truth_solve(problem, 2.0)
    path = tmp_path / "t.csv"
    storage.save_trajectory_csv(path, traj.states, {"mu": 2.0, "seed": 0})
    states, meta = storage.load_trajectory_csv(path)
    assert np.array_equal(states, traj.states)  # %.17e is lossless
    assert meta == {"mu": "2.0", "seed": "0"}


def test_eim_roundtrip_is_bit_exact(tmp_path, small_setup):
    _, eim, _ = small_setup
    path = tmp_path / "eim.npz"
    storage.save_eim(path, eim, {"note": 1})
    back = storage.load_eim(path)
    assert back.digest() == eim.digest()
    assert back.training_log == eim.training_log
    assert storage.archive_meta(path) == {"note": 1}


def test_rb_roundtrip_reproduces_online_results(tmp_path, small_setup):
    problem, eim, model = small_setup
    path = tmp_path / "rb.npz"
    storage.save_rb(path, model)
    back = storage.load_rb(path, storage.load_eim(_save(tmp_path, eim)), problem)
    assert back.greedy_log == model.greedy_log
    a, b = rb_solve(model, 3.3), rb_solve(back, 3.3)
    assert np.array_equal(a.states, b.states)
    assert certify(model, a, 3.3).delta_total == certify(back, b, 3.3).delta_total


def _save(tmp_path, eim):
    path = tmp_path / "eim2.npz"
    storage.save_eim(path, eim)
    return path


def test_rb_rejects_wrong_eim(tmp_path, small_setup):
    problem, eim, model = small_setup
    path = tmp_path / "rb.npz"
    storage.save_rb(path, model)
    with pytest.raises(storage.FormatError):
        storage.load_rb(path, eim.truncate(3), problem)
    with pytest.raises(storage.FormatError):
        storage.load_eim(path)


def test_write_rows(tmp_path):
    path = tmp_path / "rows.csv"
    rows = [{"N": 2, "x": 1.0 / 3.0, "y": None, "s": "a"}]
    storage.write_rows(path, rows, ["N", "x", "y", "s"], {"config_hash": "abc", "seed": 3})
    text = path.read_text().splitlines()
    assert text[:2] == ["# config_hash=abc", "# seed=3"]
    assert text[3] == "2,3.3333333333e-01,,a"
    assert storage.read_rows(path) == [{"N": "2", "x": "3.3333333333e-01", "y": "", "s": "a"}]
