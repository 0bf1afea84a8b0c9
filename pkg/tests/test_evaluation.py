import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from osaas_probe import evaluation as E
from osaas_probe.sim import InterferenceKind, Label


def brute_counts(true, pred):
    """Independent loop-based confusion counter used as the oracle."""
    out = [[0] * 4 for _ in range(4)]
    for t, p in zip(true, pred):
        out[t][p] += 1
    return out


def brute_f1(counts, c):
    tp = counts[c][c]
    fp = sum(counts[r][c] for r in range(4)) - tp
    fn = sum(counts[c]) - tp
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def test_perfect_predictions():
    y = [0, 0, 1, 2, 3, 3]
    rep = E.report(y, y)
    assert rep.accuracy == 1.0
    assert np.array_equal(rep.matrix.counts, np.diag([2, 1, 1, 2]))
    assert all(rep.per_class[n]["f1"] == 1.0 for n in E.CLASS_NAMES)


def test_small_confusion_example():
    cm = E.confusion([Label.USER1, Label.USER1], [Label.USER1, Label.USER2])
    assert cm.counts[1, 1] == 1 and cm.counts[1, 2] == 1 and cm.total == 2
    assert E.one_vs_all_f1(cm, 1)["f1"] == pytest.approx(2 / 3)
    assert E.one_vs_all_f1(cm, 2)["f1"] == 0.0
    assert E.one_vs_all_f1(cm, 3) == {"precision": 0.0, "recall": 0.0, "f1": 0.0}


def test_errors():
    with pytest.raises(ValueError, match="empty"):
        E.report([], [])
    with pytest.raises(ValueError):
        E.confusion([0, 1], [0])
    with pytest.raises(ValueError):
        E.confusion([4], [0])
    with pytest.raises(ValueError):
        E.report([0, 1], [0, 1], kinds=["None"])


def test_majority_baseline_accuracy():
    # 1550 NoInterference out of 1820 test samples
    true = [0] * 1550 + [1] * 90 + [2] * 90 + [3] * 90
    rep = E.report(true, [0] * len(true))
    assert rep.accuracy == pytest.approx(0.8516, abs=5e-5)
    assert all(rep.per_class[n]["f1"] == 0.0 for n in ("User1", "User2", "User3"))


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=200))
def test_matches_brute_force(pairs):
    true, pred = zip(*pairs)
    rep = E.report(true, pred)
    ref = brute_counts(true, pred)
    assert rep.matrix.counts.tolist() == ref
    for c, name in enumerate(E.CLASS_NAMES):
        assert rep.per_class[name]["f1"] == pytest.approx(brute_f1(ref, c), abs=1e-12)
    assert rep.matrix.total == len(pairs)
    assert E.micro_recall(rep.matrix) == pytest.approx(rep.accuracy, abs=1e-12)
    norm = rep.normalized_matrix
    for r in range(4):
        assert norm[r].sum() == pytest.approx(1.0 if sum(ref[r]) else 0.0)


def test_per_kind_groups():
    kinds = ["None", "None", "PowerIncrease", "PowerIncrease", "Ook", "AddDrop"]
    true = [0, 0, 1, 2, 1, 3]
    pred = [0, 1, 1, 2, 0, 3]
    rep = E.report(true, pred, kinds)
    assert rep.per_kind_sizes == {"None": 2, "PowerIncrease": 2, "AddDrop": 1, "Ook": 1}
    assert sum(rep.per_kind_sizes.values()) == len(true)
    # PowerIncrease group: None samples + the two PI samples
    assert rep.per_kind_f1["PowerIncrease"]["User1"] == pytest.approx(2 / 3)  # tp 1, fp 1 (false alarm)
    assert rep.per_kind_f1["PowerIncrease"]["User2"] == 1.0
    assert rep.per_kind_f1["Ook"]["User1"] == 0.0
    assert rep.per_kind_f1["AddDrop"]["User3"] == 1.0
    assert set(rep.per_kind_f1["Ook"]) == {"User1", "User2", "User3"}


def test_report_files(tmp_path):
    rep = E.report([0, 1, 2, 3, 0], [0, 1, 2, 0, 0], [k.value for k in InterferenceKind][:4] + ["None"])
    paths = E.write_report(rep, tmp_path / "out")
    back = E.read_report(paths["report.csv"])
    assert back[("accuracy", "all")] == pytest.approx(0.8)
    assert sum(1 for k in back if k[0] == "f1") == 4
    assert ("f1[Ook]", "User3") in back
    counts = paths["confusion_counts.csv"].read_text().splitlines()
    assert counts[0] == "true\\predicted,NoInterference,User1,User2,User3"
    assert counts[4] == "User3,1,0,0,0"


def test_moving_average():
    assert E.moving_average([1, 2, 3, 4], 2).tolist() == [1.0, 1.5, 2.5, 3.5]
    assert E.moving_average([5.0], 25).tolist() == [5.0]
    v = np.arange(100.0)
    assert E.moving_average(v, 25)[-1] == pytest.approx(v[-25:].mean())
    with pytest.raises(ValueError):
        E.moving_average(v, 0)
