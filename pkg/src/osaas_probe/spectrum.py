"""Frequency grid, user windows, operator probe channels and the line topology.

Frequencies are integer GHz on a 25 GHz grid so identity data compares
exactly.  Powers are carried in dBm; the linear helpers below convert to mW.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

GRID_GHZ = 25
NO_SIGNAL_DBM = -math.inf


class ValidationError(ValueError):
    """Raised when plan or channel data violates a domain invariant."""


class User(str, enum.Enum):
    USER1 = "User1"
    USER2 = "User2"
    USER3 = "User3"

    @property
    def index(self) -> int:
        return int(self.value[-1]) - 1


class ChannelKind(str, enum.Enum):
    COHERENT = "CoherentLike"
    OOK = "Ook"


def dbm_to_mw(p_dbm):
    return np.power(10.0, np.asarray(p_dbm, dtype=float) / 10.0)


def mw_to_dbm(p_mw):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(p_mw, dtype=float))


def check_frequency(value: int, *, grid: bool = True) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise ValidationError(f"frequency must be an integer GHz, got {value!r}")
    if value <= 0:
        raise ValidationError(f"frequency must be positive, got {value}")
    if grid and value % GRID_GHZ:
        raise ValidationError(f"frequency {value} GHz is off the {GRID_GHZ} GHz grid")
    return int(value)


@dataclass(frozen=True)
class OsaasWindow:
    user: User
    start_ghz: int
    end_ghz: int
    max_power_dbm: float = 10.0
    max_psd_dbm_per_ghz: float = -15.0
    add_node: int = 0

    def __post_init__(self):
        check_frequency(self.start_ghz)
        check_frequency(self.end_ghz)
        if self.end_ghz <= self.start_ghz:
            raise ValidationError(f"{self.user.value}: window end must exceed start")

    @property
    def width_ghz(self) -> int:
        return self.end_ghz - self.start_ghz

    def contains(self, center_ghz: float, width_ghz: float) -> bool:
        half = width_ghz / 2.0
        return self.start_ghz <= center_ghz - half and center_ghz + half <= self.end_ghz

    def slot_centers(self, width_ghz: int = 50) -> list[int]:
        """Centers of the contiguous ``width_ghz`` slots that tile the window."""
        n = self.width_ghz // width_ghz
        return [self.start_ghz + width_ghz // 2 + i * width_ghz for i in range(n)]


@dataclass(frozen=True)
class UserChannel:
    center_ghz: int
    launch_power_dbm: float = 0.0
    width_ghz: int = 50
    kind: ChannelKind = ChannelKind.COHERENT

    def __post_init__(self):
        check_frequency(self.center_ghz)
        if self.width_ghz <= 0:
            raise ValidationError("channel width must be positive")
        if not math.isfinite(self.launch_power_dbm):
            raise ValidationError("launch power must be finite")


@dataclass(frozen=True)
class OperatorChannel:
    index: int
    center_ghz: int
    launch_power_dbm: float = 0.0
    width_ghz: int = 50
    modulation: str = "DP-64QAM"


@dataclass(frozen=True)
class Topology:
    roadm_count: int = 4
    span_lengths_km: tuple[float, ...] = (50.0, 45.0, 50.0, 45.0)
    edfa_gain_db: float = 18.0
    fiber_att_db_per_km: float = 0.2

    def __post_init__(self):
        if any(not 40.0 <= s <= 50.0 for s in self.span_lengths_km):
            raise ValidationError("span lengths must lie in [40, 50] km")

    @property
    def total_length_km(self) -> float:
        return float(sum(self.span_lengths_km))

    @property
    def span_loss_db(self) -> np.ndarray:
        return np.asarray(self.span_lengths_km, dtype=float) * self.fiber_att_db_per_km


@dataclass(frozen=True)
class Plan:
    topology: Topology
    windows: tuple[OsaasWindow, ...]
    operator_channels: tuple[OperatorChannel, ...]

    def __post_init__(self):
        users = [w.user for w in self.windows]
        if users != sorted(users, key=lambda u: u.index):
            raise ValidationError("windows must be ordered by user id")
        for a, b in zip(self.windows, self.windows[1:]):
            if a.end_ghz > b.start_ghz:
                raise ValidationError(f"windows {a.user.value} and {b.user.value} overlap")
        centers = [c.center_ghz for c in self.operator_channels]
        if centers != sorted(centers) or len(set(centers)) != len(centers):
            raise ValidationError("operator channel centers must strictly increase")
        for w in self.windows:
            if not 0 <= w.add_node < self.topology.roadm_count:
                raise ValidationError(f"{w.user.value}: add_node out of range")

    def window(self, user: User) -> OsaasWindow:
        for w in self.windows:
            if w.user == user:
                return w
        raise KeyError(user)

    @property
    def users(self) -> list[User]:
        return [w.user for w in self.windows]

    def to_dict(self) -> dict:
        topo = self.topology
        return {
            "topology": {
                "roadm_count": topo.roadm_count,
                "span_lengths_km": list(topo.span_lengths_km),
                "edfa_gain_db": topo.edfa_gain_db,
                "fiber_att_db_per_km": topo.fiber_att_db_per_km,
            },
            "windows": [
                {
                    "user": w.user.value,
                    "start_ghz": w.start_ghz,
                    "end_ghz": w.end_ghz,
                    "max_power_dbm": w.max_power_dbm,
                    "max_psd_dbm_per_ghz": w.max_psd_dbm_per_ghz,
                    "add_node": w.add_node,
                }
                for w in self.windows
            ],
            "operator_channels": [
                {
                    "index": c.index,
                    "center_ghz": c.center_ghz,
                    "width_ghz": c.width_ghz,
                    "launch_power_dbm": c.launch_power_dbm,
                    "modulation": c.modulation,
                }
                for c in self.operator_channels
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Plan":
        t = d["topology"]
        topo = Topology(
            roadm_count=t["roadm_count"],
            span_lengths_km=tuple(t["span_lengths_km"]),
            edfa_gain_db=t["edfa_gain_db"],
            fiber_att_db_per_km=t["fiber_att_db_per_km"],
        )
        windows = tuple(
            OsaasWindow(
                user=User(w["user"]),
                start_ghz=w["start_ghz"],
                end_ghz=w["end_ghz"],
                max_power_dbm=w["max_power_dbm"],
                max_psd_dbm_per_ghz=w["max_psd_dbm_per_ghz"],
                add_node=w["add_node"],
            )
            for w in d["windows"]
        )
        ops = tuple(
            OperatorChannel(
                index=c["index"],
                center_ghz=c["center_ghz"],
                width_ghz=c["width_ghz"],
                launch_power_dbm=c["launch_power_dbm"],
                modulation=c["modulation"],
            )
            for c in d["operator_channels"]
        )
        return cls(topo, windows, ops)


def default_plan() -> Plan:
    """Three 400 GHz user windows with four operator guard channels.

    User 3 enters the line at the second ROADM (node index 1); users 1 and 2
    enter at the first.
    """
    windows = (
        OsaasWindow(User.USER1, 192400, 192800, add_node=0),
        OsaasWindow(User.USER2, 192850, 193250, add_node=0),
        OsaasWindow(User.USER3, 193300, 193700, add_node=1),
    )
    ops = tuple(
        OperatorChannel(i, f) for i, f in enumerate((192375, 192825, 193275, 193725))
    )
    return Plan(Topology(), windows, ops)


def full_load(window: OsaasWindow, power_dbm: float = 0.0) -> tuple[UserChannel, ...]:
    """Eight 50 GHz coherent channels filling the window (the steady state)."""
    return tuple(UserChannel(c, power_dbm) for c in window.slot_centers())


def _check_members(window: OsaasWindow, channels: Iterable[UserChannel]) -> list[UserChannel]:
    channels = list(channels)
    for ch in channels:
        if not window.contains(ch.center_ghz, ch.width_ghz):
            raise ValidationError(
                f"channel at {ch.center_ghz} GHz (width {ch.width_ghz}) lies outside "
                f"{window.user.value} window [{window.start_ghz}, {window.end_ghz}]"
            )
    return channels


def window_psd(window: OsaasWindow, channels: Sequence[UserChannel]) -> float:
    """Peak per-channel PSD in dBm/GHz; ``-inf`` for an empty window."""
    channels = _check_members(window, channels)
    if not channels:
        return NO_SIGNAL_DBM
    psd = max(float(dbm_to_mw(ch.launch_power_dbm)) / ch.width_ghz for ch in channels)
    return float(mw_to_dbm(psd))


def total_window_power(window: OsaasWindow, channels: Sequence[UserChannel]) -> float:
    """Aggregate window power in dBm; ``-inf`` for an empty window."""
    channels = _check_members(window, channels)
    if not channels:
        return NO_SIGNAL_DBM
    total = math.fsum(float(dbm_to_mw(ch.launch_power_dbm)) for ch in channels)
    return float(mw_to_dbm(total))
