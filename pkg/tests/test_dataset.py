import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osaas_probe import dataset as D
from osaas_probe.sim import (
    InterferenceKind,
    Label,
    ScenarioError,
    SimParams,
    power_increase_state,
    propagate,
    steady_state,
    window_condition,
)
from osaas_probe.spectrum import User


@pytest.fixture(scope="module")
def smoke(plan, params):
    return D.generate(plan, params, D.ClassCounts(40, 12, 12, 12), seed=3)


# -- enumeration -----------------------------------------------------------------


def test_smoke_counts_and_ids(smoke):
    assert D.histogram(smoke) == {"None": 40, "PowerIncrease": 12, "AddDrop": 12, "Ook": 12}
    ids = [m.scenario_id for m in smoke]
    assert len(set(ids)) == len(ids) and ids == sorted(ids)
    # balanced over users within each interference family
    for kind in ("PowerIncrease", "AddDrop", "Ook"):
        users = [m.label for m in smoke if m.interference_kind.value == kind]
        assert sorted(users.count(l) for l in set(users)) == [4, 4, 4]


def test_kind_and_label_agree(smoke):
    for m in smoke:
        assert (m.interference_kind is InterferenceKind.NONE) == (m.label is Label.NONE)


def test_steady_only(plan, params):
    data = D.generate(plan, params, D.ClassCounts(4, 0, 0, 0))
    assert len(data) == 4
    assert all(m.label is Label.NONE and "steady" in m.scenario_id for m in data)


def test_type2_configuration_count(plan):
    bodies = {b for b, u, o, _ in D._candidates(plan, InterferenceKind.ADD_DROP, (34.0,)) if u is User.USER1}
    masks = {b.split("_")[0] for b in bodies}
    assert len(masks) == 2 ** 8 - 2


def test_type_conditions_exclusive(plan, smoke):
    for m in smoke:
        state, family, user = D.state_from_id(plan, m.scenario_id)
        if m.interference_kind is InterferenceKind.NONE:
            continue
        assert family is m.interference_kind
        assert window_condition(state, user) is m.interference_kind
        for other in plan.users:
            if other is not user:
                assert window_condition(state, other) is InterferenceKind.NONE


def test_label_consistency(plan, params, smoke):
    for m in smoke:
        assert D.relabel(plan, params, m.scenario_id) is m.label


def test_stored_features_reproducible(plan, params, smoke):
    for m in smoke[::9]:
        state, _, _ = D.state_from_id(plan, m.scenario_id)
        seed = D._noise_seed(3, m.scenario_id)
        again = D.build_matrix(propagate(state.replace(noise_seed=seed), params))
        assert np.array_equal(again, m.features)


def test_reuse_when_pool_exhausted(plan, params):
    scen = D.enumerate_scenarios(plan, params, D.ClassCounts(0, 500, 0, 0), osnr_points=(34.0,))
    assert len(scen) == 500
    reps = {s.scenario_id.rsplit("-r", 1)[1] for s in scen}
    assert {"000", "001"} <= reps
    seeds = [s.state.noise_seed for s in scen]
    assert len(set(seeds)) == len(seeds)


def test_empty_pool_is_explicit(plan):
    with pytest.raises(ScenarioError, match="PowerIncrease"):
        D.enumerate_scenarios(plan, SimParams(), D.ClassCounts(4, 3, 0, 0), osnr_points=(34.0,))


def test_enumeration_deterministic(plan, params):
    a = D.enumerate_scenarios(plan, params, D.ClassCounts(8, 3, 0, 3), seed=1, osnr_points=(30.0, 40.0))
    b = D.enumerate_scenarios(plan, params, D.ClassCounts(8, 3, 0, 3), seed=1, osnr_points=(30.0, 40.0))
    assert [s.scenario_id for s in a] == [s.scenario_id for s in b]


def test_counts_parse():
    assert D.ClassCounts.parse("40,4,8,8").as_tuple() == (40, 4, 8, 8)
    assert D.ClassCounts().total == 7280
    with pytest.raises(ValueError):
        D.ClassCounts.parse("1,2,3")
    with pytest.raises(ValueError):
        D.ClassCounts.parse("1,2,3,-4")


# -- feature matrix -------------------------------------------------------------------


def test_build_matrix_layout(plan, params):
    tel = propagate(steady_state(plan), params, jitter=False)
    mat = D.build_matrix(tel)
    assert mat.shape == (4, 30) and len(D.COLUMNS) == 30
    assert D.COLUMNS[0] == "r1_add_dbm"
    assert mat[0, 0] == tel[0].port_powers_dbm[0][0]
    # aggregate port powers repeat in every row
    port_cols = [i for i, c in enumerate(D.COLUMNS) if c.startswith("r") and not c.endswith("ocm_dbm")]
    assert np.all(mat[:, port_cols] == mat[0, port_cols])
    assert D.COLUMNS[20:] == D.TRANSCEIVER_COLUMNS
    assert mat[1, D.COLUMNS.index("log10_prefec_ber")] == pytest.approx(math.log10(tel[1].prefec_ber))


def test_build_matrix_locality(plan, params):
    tel = propagate(steady_state(plan), params, jitter=False)
    base = D.build_matrix(tel)
    tel[2].osnr_db += 1.0
    diff = D.build_matrix(tel) != base
    assert diff.sum() == 1 and diff[2, D.COLUMNS.index("osnr_db")]


def test_build_matrix_user1_extreme(plan, params):
    base = D.build_matrix(propagate(steady_state(plan), params, jitter=False))
    hot = D.build_matrix(propagate(power_increase_state(plan, User.USER1, 12.0, 34.0), params, jitter=False))
    q = D.COLUMNS.index("q_factor_db")
    change = np.abs(hot[:, 20:] - base[:, 20:])
    # OP-1 and OP-2 border User 1: they move most
    order = np.argsort(-change[:, q - 20])
    assert set(order[:2]) == {0, 1}
    assert np.all(change[[0, 1], q - 20] > change[[2, 3], q - 20])


# -- split ------------------------------------------------------------------------------


def _fake(counts):
    out = []
    for label, n in zip(Label, counts):
        kind = InterferenceKind.NONE if label is Label.NONE else InterferenceKind.OOK
        for i in range(n):
            out.append(D.Measurement(np.full((4, 30), float(i)), label, kind, f"{label.value}-{i:04d}"))
    return out


def test_split_single_class():
    split = D.stratified_split(_fake((8, 0, 0, 0)), seed=0)
    assert (len(split.train), len(split.test)) == (6, 2)


def test_split_deterministic_and_seeded():
    data = _fake((20, 8, 8, 8))
    a, b = D.stratified_split(data, seed=4), D.stratified_split(data, seed=4)
    assert [m.scenario_id for m in a.test] == [m.scenario_id for m in b.test]
    assert a.split_hash == b.split_hash
    c = D.stratified_split(data, seed=5)
    assert c.split_hash != a.split_hash


def test_split_errors():
    with pytest.raises(ValueError, match="at least 4"):
        D.stratified_split(_fake((8, 3, 0, 0)))
    with pytest.raises(ValueError):
        D.stratified_split([])


@settings(max_examples=40, deadline=None)
@given(st.tuples(*[st.one_of(st.just(0), st.integers(4, 60))] * 4).filter(lambda c: sum(c) > 0),
       st.integers(0, 10 ** 6))
def test_split_is_stratified_partition(counts, seed):
    data = _fake(counts)
    split = D.stratified_split(data, seed=seed)
    tr = {m.scenario_id for m in split.train}
    te = {m.scenario_id for m in split.test}
    assert not tr & te and tr | te == {m.scenario_id for m in data}
    for label, n in zip(Label, counts):
        n_test = sum(m.label is label for m in split.test)
        assert abs(n_test - n / 4) <= 1
    n = len(data)
    assert abs(len(split.test) - n / 4) <= 1


def test_split_default_counts_exact():
    split = D.stratified_split(_fake((6200, 168, 556, 356)))
    assert (len(split.train), len(split.test)) == (5460, 1820)
    inter = lambda ms: sum(m.label is not Label.NONE for m in ms)
    assert (inter(split.train), inter(split.test)) == (810, 270)


# -- normalisation ------------------------------------------------------------------------


def test_normalize_rules():
    train = []
    for v in (3.0, 7.0):  # column 0: mean 5, std 2
        f = np.zeros((4, 30))
        f[:, 0] = v
        f[:, 1] = 9.0  # constant
        f[:, 2] = np.arange(4) * v
        train.append(D.Measurement(f, Label.NONE, InterferenceKind.NONE, f"t{v}"))
    probe = np.zeros((4, 30))
    probe[:, 0] = 9.0
    probe[:, 1] = 123.0
    test = [D.Measurement(probe, Label.NONE, InterferenceKind.NONE, "x")]
    split = D.normalize(D.DatasetSplit(train, test))
    assert np.all(split.test[0].features[:, 0] == 2.0)
    assert np.all(split.test[0].features[:, 1] == 0.0)
    X = np.stack([m.features for m in split.train]).reshape(-1, 30)
    assert np.allclose(X.mean(axis=0), 0, atol=1e-6)
    active = np.flatnonzero(split.normalizer.std > 0)
    assert np.allclose(X[:, active].std(axis=0), 1, atol=1e-6)
    with pytest.raises(ValueError):
        D.normalize(D.DatasetSplit([], test))


def test_normalized_features_finite(smoke):
    split = D.normalize(D.stratified_split(smoke))
    for m in split.train + split.test:
        assert np.all(np.isfinite(m.features))


def test_normalizer_round_trip(smoke):
    norm = D.fit_normalizer(smoke)
    again = D.Normalizer.from_dict(norm.to_dict())
    assert np.array_equal(again.mean, norm.mean) and np.array_equal(again.std, norm.std)


# -- persistence ---------------------------------------------------------------------------


def test_jsonl_round_trip(tmp_path, smoke):
    path = tmp_path / "d.jsonl"
    D.save_jsonl(path, smoke[::-1])
    back = D.load_jsonl(path)
    assert [m.scenario_id for m in back] == sorted(m.scenario_id for m in smoke)
    by_id = {m.scenario_id: m for m in smoke}
    for m in back:
        ref = by_id[m.scenario_id]
        assert np.array_equal(m.features, ref.features)
        assert m.label is ref.label and m.interference_kind is ref.interference_kind
    first = path.read_text().splitlines()[0]
    assert first.startswith('{"features":') and '"scenario_id"' in first


def test_csv_export(tmp_path, smoke):
    path = tmp_path / "d.csv"
    D.save_csv(path, smoke[:5])
    rows = list(csv.reader(path.open()))
    assert rows[0][:4] == ["scenario_id", "label", "kind", "operator_channel"]
    assert len(rows) == 1 + 5 * 4
    assert float(rows[1][4]) == smoke[0].features[0, 0]
