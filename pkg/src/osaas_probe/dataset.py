"""Scenario enumeration, feature matrices, stratified splits and persistence."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .sim import (
    LABELS,
    ChannelTelemetry,
    InterferenceKind,
    Label,
    NetworkState,
    ScenarioError,
    SimParams,
    add_drop_state,
    evaluate,
    label_state,
    ook_state,
    power_increase_state,
    propagate,
    steady_state,
    window_condition,
)
from .spectrum import Plan, User

PORTS = ("add", "drop", "line_in", "line_out")
TRANSCEIVER_COLUMNS = (
    "cfo_mhz",
    "log10_prefec_ber",
    "cdc_ps_per_nm",
    "dgd_ps",
    "rx_power_dbm",
    "osnr_db",
    "q_factor_db",
    "pdl_db",
    "sop_rate_krad_s",
    "esnr_db",
)
N_ROADM = 4
COLUMNS = tuple(
    [f"r{r + 1}_{p}_dbm" for r in range(N_ROADM) for p in (*PORTS, "ocm")] + list(TRANSCEIVER_COLUMNS)
)
N_COLUMNS = len(COLUMNS)

KIND_TAGS = {
    InterferenceKind.NONE: "ss",
    InterferenceKind.POWER_INCREASE: "pi",
    InterferenceKind.ADD_DROP: "ad",
    InterferenceKind.OOK: "ook",
}
KIND_ORDER = [InterferenceKind.NONE, InterferenceKind.POWER_INCREASE, InterferenceKind.ADD_DROP,
              InterferenceKind.OOK]

OSNR_POINTS_DB = (30.0, 32.0, 34.0, 36.0, 38.0, 40.0)
POWER_OFFSETS_DB = tuple(0.5 * i for i in range(1, 25))
OOK_POWERS_DBM = tuple(float(p) for p in range(0, 11))
ADD_DROP_MODES = ("constant", "equal_total", "pmax")


@dataclass(frozen=True)
class ClassCounts:
    none: int = 6200
    power_increase: int = 168
    add_drop: int = 556
    ook: int = 356

    @classmethod
    def parse(cls, text: str) -> "ClassCounts":
        parts = [int(x) for x in text.split(",")]
        if len(parts) != 4 or any(p < 0 for p in parts):
            raise ValueError(f"counts must be four non-negative integers, got {text!r}")
        return cls(*parts)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.none, self.power_increase, self.add_drop, self.ook)

    def of(self, kind: InterferenceKind) -> int:
        return self.as_tuple()[KIND_ORDER.index(kind)]

    @property
    def total(self) -> int:
        return sum(self.as_tuple())


@dataclass(frozen=True, eq=False)
class Scenario:
    scenario_id: str
    state: NetworkState
    kind: InterferenceKind
    label: Label


@dataclass(eq=False)
class Measurement:
    features: np.ndarray  # (4, 30)
    label: Label
    interference_kind: InterferenceKind
    scenario_id: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "scenario_id": self.scenario_id,
                "label": self.label.value,
                "kind": self.interference_kind.value,
                "features": self.features.tolist(),
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "Measurement":
        d = json.loads(line)
        feats = np.asarray(d["features"], dtype=np.float64)
        if feats.ndim != 2:
            raise ValueError(f"{d.get('scenario_id')}: features must be a 2-D array")
        return cls(feats, Label(d["label"]), InterferenceKind(d["kind"]), d["scenario_id"])


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, features: np.ndarray) -> np.ndarray:
        safe = np.where(self.std > 0, self.std, 1.0)
        return np.where(self.std > 0, (features - self.mean) / safe, 0.0)

    def to_dict(self) -> dict:
        return {"columns": list(COLUMNS), "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))


@dataclass
class DatasetSplit:
    train: list[Measurement]
    test: list[Measurement]
    normalizer: Optional[Normalizer] = None

    def arrays(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        items = self.train if which == "train" else self.test
        X = np.stack([m.features for m in items]) if items else np.zeros((0, 4, N_COLUMNS))
        y = np.array([m.label.index for m in items], dtype=np.intp)
        return X, y

    @property
    def split_hash(self) -> str:
        return split_hash(self.train)


def split_hash(train: Iterable[Measurement]) -> str:
    h = hashlib.sha256()
    for sid in sorted(m.scenario_id for m in train):
        h.update(sid.encode())
        h.update(b"\n")
    return h.hexdigest()


# ---------------------------------------------------------------------------
# feature matrix


def build_matrix(telemetry: Sequence[ChannelTelemetry]) -> np.ndarray:
    """(operator channels, 30) matrix ordered along the light path, then the receiver.

    For each ROADM: ADD, DROP, Line-In, Line-Out aggregate port power and the
    channel's OCM reading; then the ten transceiver readings.  Aggregate port
    powers are shared observations and repeat in every row.
    """
    rows = []
    for t in telemetry:
        row = []
        for r in range(N_ROADM):
            row.extend(t.port_powers_dbm[r])
            row.append(t.ocm_power_dbm[r])
        row.extend(
            [
                t.cfo_mhz,
                math.log10(t.prefec_ber),
                t.cdc_ps_per_nm,
                t.dgd_ps,
                t.rx_power_dbm,
                t.osnr_db,
                t.q_factor_db,
                t.pdl_db,
                t.sop_rate_krad_s,
                t.esnr_db,
            ]
        )
        rows.append(row)
    return np.asarray(rows, dtype=np.float64)


# ---------------------------------------------------------------------------
# scenario enumeration


def _fmt(x: float) -> str:
    return f"{x:04.1f}" if x < 10 else f"{x:.1f}"


def _sid(kind: InterferenceKind, user: Optional[User], body: str, osnr: float, rep: int) -> str:
    u = user.value if user is not None else "none"
    return f"{KIND_TAGS[kind]}-{u}-{body}-osnr{osnr:.0f}-r{rep:03d}"


def state_from_id(plan: Plan, scenario_id: str) -> tuple[NetworkState, InterferenceKind, Optional[User]]:
    """Rebuild the (jitter-free) network state a scenario id describes.

    The interference kind returned is the family the state was drawn from; a
    stored measurement's ``kind`` is ``None`` when the perturbation stayed
    below the labelling threshold.
    """
    parts = scenario_id.split("-")
    tag, user_s, osnr_s = parts[0], parts[1], parts[-2]
    body = parts[2:-2]
    osnr = float(osnr_s[len("osnr"):])
    user = None if user_s == "none" else User(user_s)
    kind = {v: k for k, v in KIND_TAGS.items()}[tag]
    if kind is InterferenceKind.NONE and not body[0].startswith("steady"):
        # sub-threshold perturbation: "<family>_<params>"
        kind = {v: k for k, v in KIND_TAGS.items()}[body[0].split("_")[0]]
        body = ["_".join(body[0].split("_")[1:])] + body[1:]
    if kind is InterferenceKind.NONE:
        return steady_state(plan, osnr), kind, None
    token = body[0]
    if kind is InterferenceKind.POWER_INCREASE:
        return power_increase_state(plan, user, float(token[len("off"):]), osnr), kind, user
    if kind is InterferenceKind.ADD_DROP:
        mask_s, mode = token.split("_", 1)
        return add_drop_state(plan, user, int(mask_s[len("m"):], 2), mode, osnr), kind, user
    slot_s, pw_s = token.split("_")
    center = plan.window(user).slot_centers()[int(slot_s[len("s"):])]
    return ook_state(plan, user, center, float(pw_s[len("p"):]), osnr), kind, user


def _candidates(plan: Plan, kind: InterferenceKind, osnr_points):
    """Yield (body, user, osnr, state) for one perturbation family."""
    for user in plan.users:
        for osnr in osnr_points:
            if kind is InterferenceKind.POWER_INCREASE:
                for off in POWER_OFFSETS_DB:
                    yield f"off{_fmt(off)}", user, osnr, power_increase_state(plan, user, off, osnr)
            elif kind is InterferenceKind.ADD_DROP:
                n_slots = len(plan.window(user).slot_centers())
                full = (1 << n_slots) - 1
                for mask in range(1, full):
                    for mode in ADD_DROP_MODES:
                        st = add_drop_state(plan, user, mask, mode, osnr)
                        # mask written most-significant slot first
                        yield f"m{mask:0{n_slots}b}_{mode}", user, osnr, st
            elif kind is InterferenceKind.OOK:
                for slot in range(len(plan.window(user).slot_centers())):
                    center = plan.window(user).slot_centers()[slot]
                    for pw in OOK_POWERS_DBM:
                        yield f"s{slot}_p{pw:02.0f}", user, osnr, ook_state(plan, user, center, pw, osnr)


def _label_fast(state: NetworkState, params: SimParams, base_q: np.ndarray) -> bool:
    drop = base_q - evaluate(state, params).q_db
    return bool(np.any(drop > params.q_interference_threshold))


def _noise_seed(seed: int, scenario_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{scenario_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def _take(pool: list, n: int) -> list[tuple[object, int]]:
    """Cycle through ``pool`` ``n`` times, returning (item, repetition)."""
    if n and not pool:
        raise ScenarioError("no candidate scenarios available for a requested class")
    return [(pool[i % len(pool)], i // len(pool)) for i in range(n)]


def enumerate_scenarios(
    plan: Plan,
    params: SimParams,
    counts: ClassCounts = ClassCounts(),
    seed: int = 0,
    osnr_points: Sequence[float] = OSNR_POINTS_DB,
    steady_fraction: float = 0.5,
) -> list[Scenario]:
    """Scenarios hitting ``counts`` exactly, sorted by scenario id.

    Interference families are swept over users, parameters and operating
    points; each candidate is labelled on jitter-free expectations.  Candidates
    crossing the Q-drop threshold fill the family's class (balanced round-robin
    over users); those that stay below it, plus steady states at each operating
    point, fill NoInterference.  Pools are reused with a new repetition index
    (hence a new jitter seed) when a target exceeds the distinct candidates.
    """
    rng = np.random.default_rng(seed)
    base_q = {osnr: evaluate(steady_state(plan, osnr), params).q_db for osnr in osnr_points}
    scenarios: list[Scenario] = []
    sub_threshold = []
    for kind in KIND_ORDER[1:]:
        target = counts.of(kind)
        if target == 0:
            continue
        by_user: dict[User, list] = {u: [] for u in plan.users}
        for body, user, osnr, st in _candidates(plan, kind, osnr_points):
            interferes = _label_fast(st, params, base_q[osnr])
            if interferes and window_condition(st, user) is kind:
                by_user[user].append((body, osnr, st))
            elif not interferes:
                sub_threshold.append((kind, body, user, osnr, st))
        share = [target // len(plan.users) + (i < target % len(plan.users)) for i in range(len(plan.users))]
        for user, n_user in zip(plan.users, share):
            pool = by_user[user]
            if n_user and not pool:
                raise ScenarioError(f"{kind.value}: no above-threshold scenarios for {user.value}")
            order = rng.permutation(len(pool))
            for idx, rep in _take([pool[i] for i in order], n_user):
                body, osnr, st = idx
                sid = _sid(kind, user, body, osnr, rep)
                scenarios.append(Scenario(sid, st.replace(noise_seed=_noise_seed(seed, sid)), kind,
                                          Label.of_user(user)))

    n_none = counts.none
    n_sub = 0 if not sub_threshold else int(round(n_none * (1.0 - steady_fraction)))
    steady = [(osnr,) for osnr in osnr_points]
    for (osnr,), rep in _take(steady, n_none - n_sub):
        sid = _sid(InterferenceKind.NONE, None, "steady", osnr, rep)
        st = steady_state(plan, osnr, _noise_seed(seed, sid))
        scenarios.append(Scenario(sid, st, InterferenceKind.NONE, Label.NONE))
    order = rng.permutation(len(sub_threshold))
    for item, rep in _take([sub_threshold[i] for i in order], n_sub):
        fam, body, user, osnr, st = item
        sid = _sid(InterferenceKind.NONE, user, f"{KIND_TAGS[fam]}_{body}", osnr, rep)
        scenarios.append(Scenario(sid, st.replace(noise_seed=_noise_seed(seed, sid)),
                                  InterferenceKind.NONE, Label.NONE))
    scenarios.sort(key=lambda s: s.scenario_id)
    return scenarios


def measure(scenario: Scenario, params: SimParams) -> Measurement:
    telemetry = propagate(scenario.state, params, jitter=True)
    return Measurement(build_matrix(telemetry), scenario.label, scenario.kind, scenario.scenario_id)


def generate(
    plan: Plan,
    params: SimParams,
    counts: ClassCounts = ClassCounts(),
    seed: int = 0,
    **kwargs,
) -> list[Measurement]:
    return [measure(s, params) for s in enumerate_scenarios(plan, params, counts, seed, **kwargs)]


def relabel(plan: Plan, params: SimParams, scenario_id: str) -> Label:
    """Label of a stored scenario recomputed from jitter-free expectations."""
    state, _, _ = state_from_id(plan, scenario_id)
    expected = propagate(state, params, jitter=False)
    baseline = propagate(steady_state(plan, state.added_ase_osnr_db), params, jitter=False)
    return label_state(expected, baseline, state, params)


# ---------------------------------------------------------------------------
# split and normalisation


def stratified_split(data: Sequence[Measurement], ratio: tuple[int, int] = (3, 1), seed: int = 0) -> DatasetSplit:
    """Per-class shuffled, systematic a:b partition.

    Classes are laid out in label order (each shuffled within its interference
    kinds), and every position whose index modulo ``a + b`` falls in the last
    ``b`` slots goes to test.  Each class and kind block therefore lands within
    one sample of the exact ratio, and a set whose size is a multiple of
    ``a + b`` splits exactly.
    """
    if not data:
        raise ValueError("cannot split an empty dataset")
    a, b = ratio
    period = a + b
    rng = np.random.default_rng(seed)
    ordered: list[Measurement] = []
    for label in LABELS:
        members = [m for m in data if m.label == label]
        if not members:
            continue
        if len(members) < period:
            raise ValueError(
                f"class {label.value} has {len(members)} samples; at least {period} needed to stratify"
            )
        for kind in KIND_ORDER:
            block = sorted((m for m in members if m.interference_kind == kind), key=lambda m: m.scenario_id)
            ordered.extend(block[i] for i in rng.permutation(len(block)))
    train = [m for i, m in enumerate(ordered) if i % period < a]
    test = [m for i, m in enumerate(ordered) if i % period >= a]
    return DatasetSplit(train, test)


def fit_normalizer(train: Sequence[Measurement]) -> Normalizer:
    X = np.stack([m.features for m in train]).reshape(-1, N_COLUMNS)
    return Normalizer(X.mean(axis=0), X.std(axis=0))


def normalize(split: DatasetSplit, normalizer: Optional[Normalizer] = None) -> DatasetSplit:
    """Per-column z-score with train statistics (pooled over operator rows)."""
    if not split.train:
        raise ValueError("normalisation needs a non-empty train set")
    norm = normalizer or fit_normalizer(split.train)

    def apply(items):
        return [replace(m, features=norm.apply(m.features)) for m in items]

    return DatasetSplit(apply(split.train), apply(split.test), norm)


# ---------------------------------------------------------------------------
# persistence


def save_jsonl(path, data: Sequence[Measurement]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for m in sorted(data, key=lambda m: m.scenario_id):
            fh.write(m.to_json())
            fh.write("\n")


def load_jsonl(path) -> list[Measurement]:
    with Path(path).open(encoding="utf-8") as fh:
        return [Measurement.from_json(line) for line in fh if line.strip()]


def save_csv(path, data: Sequence[Measurement]) -> None:
    """Flat inspection export: one row per (measurement, operator channel)."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario_id", "label", "kind", "operator_channel", *COLUMNS])
        for m in data:
            for j, row in enumerate(m.features):
                w.writerow([m.scenario_id, m.label.value, m.interference_kind.value, j, *(repr(float(v)) for v in row)])


def histogram(data: Sequence[Measurement]) -> dict[str, int]:
    out = {k.value: 0 for k in KIND_ORDER}
    for m in data:
        out[m.interference_kind.value] += 1
    return out


def label_histogram(data: Sequence[Measurement]) -> dict[str, int]:
    out = {l.value: 0 for l in LABELS}
    for m in data:
        out[m.label.value] += 1
    return out
