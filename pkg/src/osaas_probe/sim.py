"""Parameterised physics surrogate for the four-ROADM, 190 km open line system.

The model is a calibrated surrogate, not a waveform simulation.  For every
operator channel it accumulates

* amplifier ASE (constant-gain EDFAs, one per ROADM booster) plus the
  broadband ASE floor injected at the first ROADM,
* GN-style nonlinear interference per span,
* an AGC crosstalk penalty driven by the excess of each amplifier's total
  input power over its steady-state load,
* an XPM / cross-polarisation penalty from an intensity-modulated (OOK)
  channel,

then maps the effective SNR to Q factor and pre-FEC BER.  Gain errors from the
AGC loop move reported powers (OCM, port and receiver power); their cost on
signal quality is carried only by the explicit AGC penalty term so that every
degradation mechanism is monotone in the perturbation that drives it.

Path model: ROADM r boosts span r (r = 0..3).  Users enter at their window's
``add_node`` and are dropped at the last ROADM; operator channels run to the
egress receivers after the final span.
"""
from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.special import erfc

from .spectrum import (
    ChannelKind,
    OsaasWindow,
    Plan,
    User,
    UserChannel,
    ValidationError,
    dbm_to_mw,
    full_load,
    mw_to_dbm,
    total_window_power,
    window_psd,
)

BER_FLOOR = 1e-8
BER_CEIL = 0.5
OSNR_RANGE_DB = (5.0, 40.0)
REF_BW_GHZ = 12.5
# hc·ν·12.5 GHz expressed in dBm; the textbook 58 dB OSNR constant
OSNR_CONST_DB = 58.0


class SimulationError(RuntimeError):
    """A propagation stage produced a non-finite quantity."""


class ScenarioError(ValueError):
    """A network state does not describe a single-fault scenario."""


class CalibrationError(RuntimeError):
    """A calibration target could not be bracketed."""


class Label(str, enum.Enum):
    NONE = "NoInterference"
    USER1 = "User1"
    USER2 = "User2"
    USER3 = "User3"

    @property
    def index(self) -> int:
        return LABELS.index(self)

    @classmethod
    def of_user(cls, user: User) -> "Label":
        return cls(user.value)


LABELS = [Label.NONE, Label.USER1, Label.USER2, Label.USER3]


class InterferenceKind(str, enum.Enum):
    NONE = "None"
    POWER_INCREASE = "PowerIncrease"
    ADD_DROP = "AddDrop"
    OOK = "Ook"


@dataclass(frozen=True)
class OokConfig:
    user: User
    center_ghz: int
    launch_power_dbm: float


@dataclass(frozen=True, eq=False)
class NetworkState:
    plan: Plan
    user_channels: Mapping[User, tuple[UserChannel, ...]]
    power_offset_db: Mapping[User, float] = field(default_factory=dict)
    ook_config: Optional[OokConfig] = None
    noise_seed: int = 0
    added_ase_osnr_db: float = 34.0

    def offset(self, user: User) -> float:
        return float(self.power_offset_db.get(user, 0.0))

    def effective_channels(self, user: User) -> list[UserChannel]:
        """The user's channels as launched, offset applied and OOK included."""
        off = self.offset(user)
        chans = [
            dataclasses.replace(ch, launch_power_dbm=ch.launch_power_dbm + off)
            for ch in self.user_channels.get(user, ())
        ]
        ook = self.ook_config
        if ook is not None and ook.user == user:
            chans.append(
                UserChannel(ook.center_ghz, ook.launch_power_dbm + off, kind=ChannelKind.OOK)
            )
        return chans

    def replace(self, **changes) -> "NetworkState":
        return dataclasses.replace(self, **changes)


def steady_state(plan: Plan, added_ase_osnr_db: float = 34.0, noise_seed: int = 0) -> NetworkState:
    return NetworkState(
        plan=plan,
        user_channels={w.user: full_load(w) for w in plan.windows},
        power_offset_db={},
        ook_config=None,
        noise_seed=noise_seed,
        added_ase_osnr_db=added_ase_osnr_db,
    )


@dataclass(frozen=True)
class SimParams:
    nf_db: float = 5.0
    nli_coeff: float = 0.0
    agc_tilt_coeff: float = 0.0
    xpm_coeff: float = 0.0
    xpm_range_ghz: float = 400.0
    xpol_range_ghz: float = 1000.0
    xpm_far_weight: float = 0.15
    meas_noise_sigma_db: float = 0.1
    ber_noise_rel: float = 0.05
    tracking_noise_rel: float = 0.05
    q_interference_threshold: float = 0.5
    fec_ber_threshold: float = 2e-2
    node_loss_db: float = 8.0
    symbol_rate_gbd: float = 63.1
    q_snr_scale: float = 0.075
    trx_snr_db: float = 25.0
    sop_coeff_krad_s_per_mw: float = 6.0
    reference_osnr_db: float = 34.0
    agc_target_q_drop_db: float = 0.3
    dark_floor_dbm: float = -60.0

    def __post_init__(self):
        for name in ("nli_coeff", "agc_tilt_coeff", "xpm_coeff", "xpm_far_weight"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if not self.xpm_range_ghz < self.xpol_range_ghz:
            raise ValidationError("xpm_range_ghz must be below xpol_range_ghz")

    def replace(self, **changes) -> "SimParams":
        return dataclasses.replace(self, **changes)

    @property
    def calibrated(self) -> bool:
        return self.nli_coeff > 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimParams":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValidationError(f"unknown SimParams keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "SimParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ChannelTelemetry:
    """Operator-visible monitoring for one operator channel."""

    cfo_mhz: float
    prefec_ber: float
    cdc_ps_per_nm: float
    dgd_ps: float
    rx_power_dbm: float
    osnr_db: float
    q_factor_db: float
    pdl_db: float
    sop_rate_krad_s: float
    esnr_db: float
    ocm_power_dbm: list[float]
    # per ROADM: [ADD, DROP, Line-In, Line-Out]
    port_powers_dbm: list[list[float]]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# per-operator-channel constants for label-independent tracking features
_CFO_MHZ = (-110.0, 45.0, 160.0, -70.0)
_DGD_PS = (2.1, 3.4, 2.7, 1.8)
_PDL_DB = (0.6, 0.9, 0.7, 1.1)
_SOP_KRAD_S = (15.0, 18.0, 12.0, 20.0)
_CD_PS_NM_KM = 16.8


def q_to_ber(q_db):
    """Pre-FEC BER from Q factor in dB, clamped to [1e-8, 0.5]."""
    q_lin = np.power(10.0, np.asarray(q_db, dtype=float) / 20.0)
    ber = 0.5 * erfc(q_lin / math.sqrt(2.0))
    ber = np.clip(ber, BER_FLOOR, BER_CEIL)
    return float(ber) if np.ndim(ber) == 0 else ber


def ber_to_q(ber: float) -> float:
    """Inverse of :func:`q_to_ber` inside the clamp range."""
    from scipy.special import erfcinv

    return 20.0 * math.log10(math.sqrt(2.0) * float(erfcinv(2.0 * ber)))


def validate_state(state: NetworkState) -> None:
    plan = state.plan
    for w in plan.windows:
        chans = state.effective_channels(w.user)
        # raises on channels outside the window
        total_window_power(w, chans)
        centers = [c.center_ghz for c in chans]
        if len(set(centers)) != len(centers):
            raise ValidationError(f"{w.user.value}: duplicate channel centers")
        off = state.offset(w.user)
        if not 0.0 <= off <= 12.0:
            raise ValidationError(f"{w.user.value}: power offset {off} outside [0, 12] dB")
    ook = state.ook_config
    if ook is not None:
        if not 0.0 <= ook.launch_power_dbm <= 12.0:
            raise ValidationError("OOK launch power outside [0, 12] dBm")
        w = plan.window(ook.user)
        total = total_window_power(w, state.effective_channels(ook.user))
        if total > w.max_power_dbm + 1e-9:
            raise ValidationError(
                f"{ook.user.value}: OOK scenario exceeds P_max ({total:.3f} dBm)"
            )


def deviating_users(state: NetworkState) -> list[User]:
    """Users whose window differs from the fully loaded 0 dBm steady state."""
    out = []
    for w in state.plan.windows:
        u = w.user
        changed = (
            state.offset(u) != 0.0
            or tuple(state.user_channels.get(u, ())) != full_load(w)
            or (state.ook_config is not None and state.ook_config.user == u)
        )
        if changed:
            out.append(u)
    return out


def window_condition(state: NetworkState, user: User) -> InterferenceKind:
    """Which interference condition the user's window is in.

    PowerIncrease: total above P_max.  AddDrop: total within P_max, all
    coherent, PSD above the limit.  Ook: an OOK carrier with total within
    P_max.  The three are mutually exclusive by construction.
    """
    w = state.plan.window(user)
    chans = state.effective_channels(user)
    if not chans:
        return InterferenceKind.NONE
    over_power = total_window_power(w, chans) > w.max_power_dbm + 1e-9
    has_ook = any(c.kind is ChannelKind.OOK for c in chans)
    if has_ook:
        return InterferenceKind.POWER_INCREASE if over_power else InterferenceKind.OOK
    if over_power:
        return InterferenceKind.POWER_INCREASE
    if window_psd(w, chans) > w.max_psd_dbm_per_ghz + 1e-9:
        return InterferenceKind.ADD_DROP
    return InterferenceKind.NONE


# ---------------------------------------------------------------------------
# propagation


@dataclass
class _Line:
    freq: np.ndarray  # (N,) GHz
    launch_dbm: np.ndarray  # (N,) launch power at the add ROADM's Line-Out
    add_node: np.ndarray  # (N,)
    drop_node: np.ndarray  # (N,) ROADM index where dropped; n_roadm = egress
    is_op: np.ndarray  # (N,) bool
    ook: int  # index of the OOK carrier, -1 if absent


def _build_line(state: NetworkState) -> _Line:
    plan = state.plan
    n_roadm = plan.topology.roadm_count
    freq, launch, add, drop, is_op = [], [], [], [], []
    for op in plan.operator_channels:
        freq.append(op.center_ghz)
        launch.append(op.launch_power_dbm)
        add.append(0)
        drop.append(n_roadm)
        is_op.append(True)
    ook = -1
    for w in plan.windows:
        for ch in state.effective_channels(w.user):
            if ch.kind is ChannelKind.OOK:
                ook = len(freq)
            freq.append(ch.center_ghz)
            launch.append(ch.launch_power_dbm)
            add.append(w.add_node)
            drop.append(n_roadm - 1)
            is_op.append(False)
    return _Line(
        freq=np.asarray(freq, dtype=float),
        launch_dbm=np.asarray(launch, dtype=float),
        add_node=np.asarray(add, dtype=int),
        drop_node=np.asarray(drop, dtype=int),
        is_op=np.asarray(is_op, dtype=bool),
        ook=ook,
    )


@dataclass
class PowerLedger:
    """Per-channel, per-ROADM power bookkeeping (mW), gain errors included."""

    present: np.ndarray  # (N, S) channel is boosted by ROADM s onto span s
    add_port: np.ndarray  # (N, S)
    drop_port: np.ndarray  # (N, S)
    line_in: np.ndarray  # (N, S)
    line_out: np.ndarray  # (N, S)
    gain_db: np.ndarray  # (N, S) net node gain incl. AGC error for present channels
    gain_error_db: np.ndarray  # (N, S)
    is_op: np.ndarray

    def ports_dbm(self, floor_dbm: float) -> np.ndarray:
        """(S, 4) aggregate [ADD, DROP, Line-In, Line-Out] in dBm."""
        agg = np.stack(
            [
                self.add_port.sum(axis=0),
                self.drop_port.sum(axis=0),
                self.line_in.sum(axis=0),
                self.line_out.sum(axis=0),
            ],
            axis=1,
        )
        return np.maximum(mw_to_dbm(agg), floor_dbm)


@dataclass
class Expected:
    """Jitter-free per-operator-channel quantities from one propagation."""

    q_db: np.ndarray
    esnr_db: np.ndarray
    osnr_db: np.ndarray
    ber: np.ndarray
    sop_rate: np.ndarray
    rx_power_dbm: np.ndarray
    ocm_dbm: np.ndarray  # (4, S)
    ports_dbm: np.ndarray  # (S, 4)
    ledger: PowerLedger
    nsr: dict


def _nominal_line_out_dbm(line: _Line, topo, node_loss_db: float) -> tuple[np.ndarray, np.ndarray]:
    n_st = topo.roadm_count
    step = topo.edfa_gain_db - node_loss_db - topo.span_loss_db  # Line-Out s -> Line-Out s+1
    cum = np.concatenate([[0.0], np.cumsum(step)])[:n_st]
    stages = np.arange(n_st)
    present = (stages[None, :] >= line.add_node[:, None]) & (stages[None, :] < line.drop_node[:, None])
    lo = line.launch_dbm[:, None] + cum[None, :] - cum[line.add_node][:, None]
    return np.where(present, lo, -np.inf), present


@lru_cache(maxsize=8)
def _steady_stage_totals(plan: Plan, node_loss_db: float) -> np.ndarray:
    line = _build_line(steady_state(plan))
    lo, present = _nominal_line_out_dbm(line, plan.topology, node_loss_db)
    amp_in = np.where(present, dbm_to_mw(lo - plan.topology.edfa_gain_db), 0.0)
    return amp_in.sum(axis=0)


def _check(name: str, arr) -> None:
    if not np.all(np.isfinite(arr)):
        raise SimulationError(f"non-finite value in stage '{name}'")


def _tilt(plan: Plan, freq: np.ndarray) -> np.ndarray:
    ops = [c.center_ghz for c in plan.operator_channels]
    mid = 0.5 * (min(ops) + max(ops))
    half = 0.5 * (max(ops) - min(ops))
    return (freq - mid) / half


def amplifier_osnr_db(p_in_dbm, nf_db):
    """OSNR (0.1 nm) contributed by one amplifier for a channel entering at ``p_in_dbm``."""
    return np.asarray(p_in_dbm, dtype=float) + OSNR_CONST_DB - nf_db


def lorentz_weight(df_ghz) -> np.ndarray:
    return 1.0 / (1.0 + (np.asarray(df_ghz, dtype=float) / 50.0) ** 2)


def ook_weight(df_ghz, params: SimParams) -> np.ndarray:
    df = np.abs(np.asarray(df_ghz, dtype=float))
    return np.where(
        df <= params.xpm_range_ghz,
        1.0,
        np.where(df <= params.xpol_range_ghz, params.xpm_far_weight, 0.0),
    )


def evaluate(state: NetworkState, params: SimParams) -> Expected:
    """Jitter-free propagation of ``state``."""
    plan = state.plan
    topo = plan.topology
    line = _build_line(state)
    G = topo.edfa_gain_db
    L = params.node_loss_db
    n_st = topo.roadm_count
    lo_dbm, present = _nominal_line_out_dbm(line, topo, L)
    _check("launch", line.launch_dbm)
    lo_mw = np.where(present, dbm_to_mw(lo_dbm), 0.0)
    amp_in_mw = lo_mw * 10.0 ** (-G / 10.0)
    _check("line-out", lo_mw)

    # AGC: excess of each amplifier's total input over its steady-state load
    totals = amp_in_mw.sum(axis=0)
    ref = _steady_stage_totals(plan, L)
    with np.errstate(divide="ignore"):
        excess_db = np.maximum(0.0, 10.0 * np.log10(totals / ref))
    _check("agc", excess_db)
    tilt = _tilt(plan, line.freq)
    gain_err = params.agc_tilt_coeff * excess_db[None, :] * tilt[:, None]
    gain_err = np.where(present, gain_err, 0.0)

    ops = np.flatnonzero(line.is_op)
    f_ops = line.freq[ops]

    # ASE: per-amplifier OSNR in 12.5 GHz, plus the broadband source floor
    with np.errstate(divide="ignore"):
        amp_in_dbm = np.where(present, lo_dbm - G, -np.inf)
    inv_osnr_stage = np.where(
        present[ops], 10.0 ** (-amplifier_osnr_db(amp_in_dbm[ops], params.nf_db) / 10.0), 0.0
    )
    inv_osnr = inv_osnr_stage.sum(axis=1) + 10.0 ** (-state.added_ase_osnr_db / 10.0)
    osnr_db = -10.0 * np.log10(inv_osnr)
    nsr_ase = inv_osnr * params.symbol_rate_gbd / REF_BW_GHZ

    # NLI: incoherent sum over spans of sum_i P_i^2 w(df)
    w = lorentz_weight(line.freq[None, :] - f_ops[:, None])  # (ops, N)
    p2 = lo_mw ** 2  # (N, S)
    if line.ook >= 0:
        # the OOK carrier's crosstalk is carried entirely by the XPM term
        p2[line.ook] = 0.0
    nli_stage = params.nli_coeff * (w @ p2)  # (ops, S)
    nsr_nli = np.where(present[ops], nli_stage, 0.0).sum(axis=1)

    nsr_agc = 10.0 ** (np.abs(gain_err[ops]).sum(axis=1) / 10.0) - 1.0
    nsr_trx = np.full(len(ops), 10.0 ** (-params.trx_snr_db / 10.0))

    sop = np.asarray(_SOP_KRAD_S[: len(ops)], dtype=float).copy()
    nsr_ook = np.zeros(len(ops))
    if line.ook >= 0:
        p_ook = dbm_to_mw(line.launch_dbm[line.ook])
        df = line.freq[line.ook] - f_ops
        nsr_ook = params.xpm_coeff * p_ook * ook_weight(df, params)
        sop = sop + np.where(
            np.abs(df) <= params.xpol_range_ghz, params.sop_coeff_krad_s_per_mw * p_ook, 0.0
        )

    nsr_total = nsr_ase + nsr_nli + nsr_agc + nsr_trx + nsr_ook
    _check("snr", nsr_total)
    esnr_db = -10.0 * np.log10(nsr_total)
    q_db = 10.0 * np.log10(params.q_snr_scale) + esnr_db
    ber = q_to_ber(q_db)

    ledger = _ledger(line, topo, L, lo_mw, present, gain_err)
    line_out_dbm = mw_to_dbm(ledger.line_out[ops])
    ocm = np.maximum(line_out_dbm, params.dark_floor_dbm)
    rx = mw_to_dbm(ledger.line_out[ops, -1]) - topo.span_loss_db[-1]
    _check("receiver", rx)

    return Expected(
        q_db=q_db,
        esnr_db=esnr_db,
        osnr_db=np.clip(osnr_db, *OSNR_RANGE_DB),
        ber=np.atleast_1d(ber),
        sop_rate=sop,
        rx_power_dbm=rx,
        ocm_dbm=ocm,
        ports_dbm=ledger.ports_dbm(params.dark_floor_dbm),
        ledger=ledger,
        nsr={"ase": nsr_ase, "nli": nsr_nli, "agc": nsr_agc, "trx": nsr_trx, "ook": nsr_ook},
    )


def _ledger(line, topo, L, lo_nominal_mw, present, gain_err) -> PowerLedger:
    n, n_st = present.shape
    G = topo.edfa_gain_db
    span = topo.span_loss_db
    cum_err = np.cumsum(gain_err, axis=1)
    line_out = lo_nominal_mw * 10.0 ** (cum_err / 10.0)
    add_port = np.zeros((n, n_st))
    drop_port = np.zeros((n, n_st))
    line_in = np.zeros((n, n_st))
    rows = np.arange(n)
    # added channels enter the ADD port before node loss and the booster
    add_port[rows, line.add_node] = dbm_to_mw(line.launch_dbm - G + L)
    for s in range(1, n_st):
        arriving = present[:, s - 1]
        line_in[arriving, s] = line_out[arriving, s - 1] * 10.0 ** (-span[s - 1] / 10.0)
    dropped = line.drop_node < n_st
    dn = line.drop_node[dropped]
    drop_port[rows[dropped], dn] = line_in[rows[dropped], dn] * 10.0 ** (-L / 10.0)
    gain_db = np.where(present, G - L + gain_err, 0.0)
    return PowerLedger(
        present=present,
        add_port=add_port,
        drop_port=drop_port,
        line_in=line_in,
        line_out=line_out,
        gain_db=gain_db,
        gain_error_db=gain_err,
        is_op=line.is_op,
    )


def _telemetry_from(exp: Expected, state: NetworkState, rng: Optional[np.random.Generator],
                    params: SimParams) -> list[ChannelTelemetry]:
    topo = state.plan.topology
    out = []
    n_ops = len(exp.q_db)
    cdc_base = _CD_PS_NM_KM * topo.total_length_km
    sig = params.meas_noise_sigma_db
    rel = params.tracking_noise_rel
    ports = exp.ports_dbm
    for j in range(n_ops):
        f_off = state.plan.operator_channels[j].center_ghz - 193000
        cdc = cdc_base * (1.0 + 4e-5 * f_off)
        vals = {
            "cfo_mhz": _CFO_MHZ[j],
            "cdc_ps_per_nm": cdc,
            "dgd_ps": _DGD_PS[j],
            "pdl_db": _PDL_DB[j],
            "sop_rate_krad_s": float(exp.sop_rate[j]),
        }
        q = float(exp.q_db[j])
        esnr = float(exp.esnr_db[j])
        osnr = float(exp.osnr_db[j])
        rx = float(exp.rx_power_dbm[j])
        ber = float(exp.ber[j])
        ocm = exp.ocm_dbm[j].astype(float)
        pp = ports.astype(float)
        if rng is not None:
            for k in vals:
                vals[k] = vals[k] + rng.normal(0.0, rel * abs(vals[k]))
            q += rng.normal(0.0, sig)
            esnr += rng.normal(0.0, sig)
            osnr += rng.normal(0.0, sig)
            rx += rng.normal(0.0, sig)
            ber *= math.exp(rng.normal(0.0, params.ber_noise_rel))
            ocm = ocm + rng.normal(0.0, sig, size=ocm.shape)
            # shared aggregate readings are polled once per measurement
            if j == 0:
                shared_ports = pp + rng.normal(0.0, sig, size=pp.shape)
            pp = shared_ports
        out.append(
            ChannelTelemetry(
                cfo_mhz=float(vals["cfo_mhz"]),
                prefec_ber=float(min(max(ber, BER_FLOOR), BER_CEIL)),
                cdc_ps_per_nm=float(vals["cdc_ps_per_nm"]),
                dgd_ps=float(vals["dgd_ps"]),
                rx_power_dbm=rx,
                osnr_db=float(min(max(osnr, OSNR_RANGE_DB[0]), OSNR_RANGE_DB[1])),
                q_factor_db=q,
                pdl_db=float(vals["pdl_db"]),
                sop_rate_krad_s=float(vals["sop_rate_krad_s"]),
                esnr_db=esnr,
                ocm_power_dbm=[float(x) for x in ocm],
                port_powers_dbm=[[float(x) for x in row] for row in pp],
            )
        )
    return out


def propagate(state: NetworkState, params: SimParams, *, jitter: bool = True) -> list[ChannelTelemetry]:
    """Operator-channel telemetry for ``state``.

    With ``jitter`` the readings carry Gaussian measurement noise drawn from a
    generator seeded by ``state.noise_seed``; without it the call returns the
    expectations used for labelling.
    """
    validate_state(state)
    exp = evaluate(state, params)
    rng = np.random.default_rng(state.noise_seed) if jitter else None
    return _telemetry_from(exp, state, rng, params)


def label_state(
    telemetry: Sequence[ChannelTelemetry],
    baseline: Sequence[ChannelTelemetry],
    state: NetworkState,
    params: SimParams,
) -> Label:
    """Attribute interference when any operator Q drops by more than the threshold."""
    users = deviating_users(state)
    if len(users) > 1:
        raise ScenarioError(
            "multiple users deviate from steady state: " + ", ".join(u.value for u in users)
        )
    drop = np.array([b.q_factor_db - t.q_factor_db for t, b in zip(telemetry, baseline)])
    if not np.any(drop > params.q_interference_threshold):
        return Label.NONE
    if not users:
        # operating-point changes alone never count as a user fault
        return Label.NONE
    return Label.of_user(users[0])


def q_drop(state: NetworkState, params: SimParams) -> np.ndarray:
    """Expected Q drop of each operator channel versus steady state at the same operating point."""
    base = _baseline_q(state.plan, params, state.added_ase_osnr_db)
    return base - evaluate(state, params).q_db


def _baseline_q(plan: Plan, params: SimParams, osnr_db: float) -> np.ndarray:
    return evaluate(steady_state(plan, osnr_db), params).q_db


def baseline_telemetry(plan: Plan, params: SimParams, osnr_db: float) -> list[ChannelTelemetry]:
    return propagate(steady_state(plan, osnr_db), params, jitter=False)


def adjacent_operator_channels(plan: Plan, user: User) -> list[int]:
    """Indices of the two operator channels bordering the user's window."""
    w = plan.window(user)
    centers = np.array([c.center_ghz for c in plan.operator_channels])
    below = np.flatnonzero(centers < w.start_ghz)
    above = np.flatnonzero(centers > w.end_ghz)
    out = []
    if below.size:
        out.append(int(below[-1]))
    if above.size:
        out.append(int(above[0]))
    return out


# ---------------------------------------------------------------------------
# scenario builders shared by calibration and the dataset generator


def power_increase_state(plan: Plan, user: User, offset_db: float, osnr_db: float) -> NetworkState:
    base = steady_state(plan, osnr_db)
    return base.replace(power_offset_db={user: float(offset_db)})


def ook_cochannels(window: OsaasWindow, ook_center: int, ook_power_dbm: float,
                   keep: Optional[int] = None) -> tuple[UserChannel, ...]:
    """0 dBm coherent co-channels kept next to an OOK carrier.

    By default as many as fit under P_max, dropping slots farthest from the
    carrier first; ``keep`` fixes the count instead.
    """
    slots = [c for c in window.slot_centers() if c != ook_center]
    if keep is None:
        budget = float(dbm_to_mw(window.max_power_dbm)) - float(dbm_to_mw(ook_power_dbm))
        keep = int(math.floor(budget + 1e-9))
    keep = max(0, min(keep, len(slots)))
    order = sorted(slots, key=lambda c: (abs(c - ook_center), c))
    kept = sorted(order[:keep])
    return tuple(UserChannel(c, 0.0) for c in kept)


def ook_state(plan: Plan, user: User, center: int, power_dbm: float, osnr_db: float,
              keep: Optional[int] = None) -> NetworkState:
    base = steady_state(plan, osnr_db)
    chans = dict(base.user_channels)
    chans[user] = ook_cochannels(plan.window(user), center, power_dbm, keep)
    return base.replace(user_channels=chans, ook_config=OokConfig(user, center, float(power_dbm)))


def add_drop_state(plan: Plan, user: User, mask: int, mode: str, osnr_db: float) -> NetworkState:
    """Channel subset ``mask`` (bit i = slot i) with power set by ``mode``.

    ``constant`` keeps 0 dBm per channel, ``equal_total`` spreads the steady
    8 mW over the remaining channels, ``pmax`` spreads P_max.
    """
    w = plan.window(user)
    slots = w.slot_centers()
    chosen = [c for i, c in enumerate(slots) if mask >> i & 1]
    if not chosen:
        raise ValidationError("empty channel subset")
    k = len(chosen)
    if mode == "constant":
        p = 0.0
    elif mode == "equal_total":
        p = float(mw_to_dbm(len(slots) / k))
    elif mode == "pmax":
        p = float(mw_to_dbm(float(dbm_to_mw(w.max_power_dbm)) / k))
    else:
        raise ValueError(f"unknown add/drop mode {mode!r}")
    base = steady_state(plan, osnr_db)
    chans = dict(base.user_channels)
    chans[user] = tuple(UserChannel(c, p) for c in chosen)
    return base.replace(user_channels=chans)


# ---------------------------------------------------------------------------
# calibration


def _bisect(f, lo: float, hi: float, target: float, name: str, iters: int = 80) -> tuple[float, float]:
    """Bracket the root of increasing ``f(x) - target`` in log space."""
    flo, fhi = f(lo), f(hi)
    if not (flo < target <= fhi):
        raise CalibrationError(
            f"target '{name}' not bracketed: f({lo:g})={flo:.4g}, f({hi:g})={fhi:.4g}, "
            f"target={target:.4g}"
        )
    a, b = math.log(lo), math.log(hi)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        if f(math.exp(mid)) < target:
            a = mid
        else:
            b = mid
    return math.exp(a), math.exp(b)


def _worst_adjacent_ber(plan, params, offset_db):
    worst = math.inf
    for u in plan.users:
        st = power_increase_state(plan, u, offset_db, params.reference_osnr_db)
        ber = evaluate(st, params).ber
        worst = min(worst, max(ber[j] for j in adjacent_operator_channels(plan, u)))
    return worst


def _max_q_drop(plan, params, states):
    return max(float(np.max(q_drop(st, params))) for st in states)


def calibration_report(plan: Plan, params: SimParams) -> dict:
    """Values of the three calibration targets for ``params``."""
    ref = params.reference_osnr_db
    ber5 = _worst_adjacent_ber(plan, params, 5.0)
    drop05 = _max_q_drop(plan, params, [power_increase_state(plan, u, 0.5, ref) for u in plan.users])
    ook3 = _max_q_drop(plan, params, _edge_ook_states(plan, 3.0, ref))
    ook4 = _max_q_drop(plan, params, _edge_ook_states(plan, 4.0, ref))
    return {
        "worst_adjacent_ber_at_5db": ber5,
        "max_q_drop_at_0p5db": drop05,
        "max_q_drop_ook_3dbm": ook3,
        "max_q_drop_ook_4dbm": ook4,
    }


def _edge_ook_states(plan, power_dbm, osnr_db):
    out = []
    for u in plan.users:
        slots = plan.window(u).slot_centers()
        for c in (slots[0], slots[-1]):
            out.append(ook_state(plan, u, c, power_dbm, osnr_db))
    return out


def calibrate(plan: Plan, params: SimParams) -> SimParams:
    """Solve nli, AGC and XPM coefficients by bisection against the targets.

    1. ``nli_coeff``: smallest value for which a +5 dB window offset pushes an
       adjacent operator channel of every user to the SD-FEC BER threshold
       (AGC and XPM off).
    2. ``agc_tilt_coeff``: the +0.5 dB offset costs at most
       ``agc_target_q_drop_db`` of Q on the worst operator channel.
    3. ``xpm_coeff``: an OOK carrier in an edge slot at 3 dBm stays at or below
       the labelling threshold; above 3 dBm it exceeds it.
    """
    ref = params.reference_osnr_db
    p = params.replace(nli_coeff=0.0, agc_tilt_coeff=0.0, xpm_coeff=0.0)
    target_ber = params.fec_ber_threshold
    _, nli = _bisect(
        lambda x: _worst_adjacent_ber(plan, p.replace(nli_coeff=x), 5.0),
        1e-8, 1e2, target_ber, "nli: +5 dB reaches FEC threshold",
    )
    p = p.replace(nli_coeff=nli)

    half_db = [power_increase_state(plan, u, 0.5, ref) for u in plan.users]
    base_drop = _max_q_drop(plan, p, half_db)
    if base_drop >= params.agc_target_q_drop_db:
        agc = 0.0
    else:
        agc, _ = _bisect(
            lambda x: _max_q_drop(plan, p.replace(agc_tilt_coeff=x), half_db),
            1e-6, 1e3, params.agc_target_q_drop_db, "agc: +0.5 dB sub-threshold share",
        )
    p = p.replace(agc_tilt_coeff=agc)

    at3 = _edge_ook_states(plan, 3.0, ref)
    xpm, _ = _bisect(
        lambda x: _max_q_drop(plan, p.replace(xpm_coeff=x), at3),
        1e-8, 1e2, params.q_interference_threshold, "xpm: OOK visible above 3 dBm",
    )
    return p.replace(xpm_coeff=xpm)


@lru_cache(maxsize=4)
def default_calibrated_params() -> SimParams:
    from .spectrum import default_plan

    return calibrate(default_plan(), SimParams())
