"""Contention-based four-step random access over the NPRACH baseline receiver."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from nbiot.channel import ChannelSpec, impair
from nbiot.mac.coverage import CoverageClass, default_classes, select_coverage_level, validate_classes
from nbiot.numerology import NUMEROLOGY_15KHZ, SAMPLE_RATE_HZ
from nbiot.phy_ul import NPRACH_SPACING_HZ, NpuschAllocation, build_nprach
from nbiot.receiver.nprach import nprach_detect

RAR_WINDOW_MS = 10
MAX_ATTEMPTS = 10
RAR_DELAY_MS = 3      # end of preamble -> RAR, inside the window
MSG3_DELAY_MS = 8     # RAR -> msg3, the uplink grant minimum
MSG4_DELAY_MS = 4     # msg3 end -> contention resolution
MSG3_TBS = 88
MULTITONE_MSG3_TONES = 3


class RaStep(enum.Enum):
    IDLE = "idle"
    MSG1_SENT = "msg1_sent"
    RAR_RECEIVED = "rar_received"
    MSG3_SENT = "msg3_sent"
    RESOLVED = "resolved"
    FAILED = "failed"


_NEXT = {
    RaStep.IDLE: {RaStep.MSG1_SENT, RaStep.FAILED},
    RaStep.MSG1_SENT: {RaStep.RAR_RECEIVED, RaStep.IDLE, RaStep.FAILED},
    RaStep.RAR_RECEIVED: {RaStep.MSG3_SENT},
    RaStep.MSG3_SENT: {RaStep.RESOLVED, RaStep.IDLE, RaStep.FAILED},
    RaStep.RESOLVED: set(),
    RaStep.FAILED: set(),
}


@dataclass(frozen=True)
class UeContext:
    ue_id: int
    rsrp_dbm: float = -100.0
    multitone_capable: bool = False
    delay_s: float = 0.0
    gain_db: float = 0.0  # received preamble level relative to unit power
    first_subcarrier: Optional[int] = None  # forced choice for the first attempt


@dataclass
class RandomAccessState:
    ue_id: int
    step: RaStep = RaStep.IDLE
    coverage_level: Optional[int] = None
    chosen_subcarrier: Optional[int] = None
    multitone_capable: bool = False  # capability as signalled through the subcarrier choice
    attempt_count: int = 0
    timing_advance_s: Optional[float] = None
    msg3_grant: Optional[NpuschAllocation] = None
    failure_reason: Optional[str] = None
    trace: list = field(default_factory=list)

    def advance(self, step: RaStep, time_ms: float, detail: str = ""):
        if step not in _NEXT[self.step]:
            raise RuntimeError(f"illegal random-access transition {self.step.value} -> {step.value}")
        self.step = step
        self.trace.append((round(time_ms, 3), self.ue_id, step.value, detail))

    @property
    def done(self) -> bool:
        return self.step in (RaStep.RESOLVED, RaStep.FAILED)


def msg3_grant(multitone: bool) -> NpuschAllocation:
    tones = MULTITONE_MSG3_TONES if multitone else 1
    return NpuschAllocation(NUMEROLOGY_15KHZ, tone_count=tones)


def _receive_msg1(cls: CoverageClass, picks, channel: Optional[ChannelSpec], rng, nprach_seed):
    """Superpose the preambles of one occasion and run the detector."""
    cfg = cls.nprach_config
    n = int(round(cfg.total_duration_s * SAMPLE_RATE_HZ))
    y = np.zeros(n, complex)
    for ue, sc in picks:
        _, wave = build_nprach(cfg, sc, nprach_seed)
        spec = ChannelSpec(delay_samples=ue.delay_s * SAMPLE_RATE_HZ)
        y += 10 ** (ue.gain_db / 20) * impair(wave.samples, spec)[:n]
    if channel is not None and math.isfinite(channel.snr_db):
        spec = ChannelSpec(snr_db=channel.snr_db, noise_bandwidth_hz=NPRACH_SPACING_HZ,
                           seed=int(rng.integers(2 ** 31)))
        y = impair(y, spec)
    return {d.start_subcarrier: d for d in nprach_detect(y, cfg, nprach_seed)}


def random_access(ues, classes=None, channel: Optional[ChannelSpec] = None, seed=None,
                  max_attempts: int = MAX_ATTEMPTS, rar_window_ms: float = RAR_WINDOW_MS,
                  nprach_seed: int = 0):
    """Run the four-step procedure for one UE or a list of UEs sharing the cell.

    Every NPRACH occasion each unresolved UE picks a start subcarrier on the
    side of the capability partition matching its multi-tone support. All
    preambles of an occasion are superposed and detected together; UEs on
    the same subcarrier receive the same RAR, send msg3 on the same grant and
    at most one of them is named by msg4. Returns the final state(s).
    """
    single = isinstance(ues, UeContext)
    ues = [ues] if single else list(ues)
    classes = validate_classes(classes or default_classes())
    rng = np.random.default_rng(seed)
    states = {}
    for ue in ues:
        cls = select_coverage_level(ue.rsrp_dbm, classes)
        single_set, multi_set = cls.nprach_config.capability_sets()
        st = RandomAccessState(ue.ue_id, coverage_level=cls.level,
                               multitone_capable=ue.multitone_capable and len(multi_set) > 0)
        states[ue.ue_id] = st

    for attempt in range(max_attempts):
        for cls in classes:
            cfg = cls.nprach_config
            active = [ue for ue in ues if states[ue.ue_id].coverage_level == cls.level
                      and not states[ue.ue_id].done]
            if not active:
                continue
            t0 = cfg.start_time_ms + attempt * cfg.periodicity_ms
            picks = []
            for ue in active:
                st = states[ue.ue_id]
                side = cfg.capability_sets()[1 if st.multitone_capable else 0]
                if attempt == 0 and ue.first_subcarrier is not None:
                    if ue.first_subcarrier not in side:
                        raise ValueError("forced subcarrier is on the wrong capability side")
                    st.chosen_subcarrier = ue.first_subcarrier
                else:
                    st.chosen_subcarrier = int(side[rng.integers(len(side))])
                st.attempt_count += 1
                st.advance(RaStep.MSG1_SENT, t0, f"level={cls.level} subcarrier={st.chosen_subcarrier}")
                picks.append((ue, st.chosen_subcarrier))
            detected = _receive_msg1(cls, picks, channel, rng, nprach_seed)
            t_rar = t0 + cfg.total_duration_s * 1e3 + RAR_DELAY_MS
            by_sc = {}
            for ue, sc in picks:
                st = states[ue.ue_id]
                det = detected.get(sc)
                if det is None or RAR_DELAY_MS > rar_window_ms:
                    st.advance(RaStep.IDLE, t0 + cfg.total_duration_s * 1e3 + rar_window_ms,
                               "no RAR in window")
                    continue
                inferred = cfg.signals_multitone(sc)
                if inferred != st.multitone_capable:
                    raise AssertionError("network capability inference disagrees with the UE")
                st.timing_advance_s = det.timing_advance_s
                st.msg3_grant = msg3_grant(inferred)
                st.advance(RaStep.RAR_RECEIVED, t_rar,
                           f"ta_us={det.timing_advance_s * 1e6:.2f} tones={st.msg3_grant.tone_count}")
                by_sc.setdefault(sc, []).append(ue)
            for sc, group in by_sc.items():
                t3 = t_rar + MSG3_DELAY_MS
                for ue in group:
                    st = states[ue.ue_id]
                    st.advance(RaStep.MSG3_SENT, t3, f"identity={ue.ue_id}")
                # msg3 of colliding UEs overlap; the strongest is decoded, ties broken at random
                gains = np.array([ue.gain_db for ue in group])
                best = np.flatnonzero(gains == gains.max())
                winner = group[int(best[rng.integers(len(best))])]
                grant = states[winner.ue_id].msg3_grant
                t4 = t3 + grant.duration_s(MSG3_TBS) * 1e3 + MSG4_DELAY_MS
                for ue in group:
                    st = states[ue.ue_id]
                    if ue is winner:
                        st.advance(RaStep.RESOLVED, t4, f"contention resolved among {len(group)}")
                    else:
                        st.advance(RaStep.IDLE, t4, f"contention lost to ue {winner.ue_id}")
        for st in states.values():
            if not st.done and st.attempt_count >= max_attempts:
                st.advance(RaStep.FAILED, st.trace[-1][0], "maximum attempts reached")
                st.failure_reason = "maximum attempts reached"
    out = [states[ue.ue_id] for ue in ues]
    return out[0] if single else out


def trace_rows(states) -> list[tuple]:
    """Merged (time_ms, ue_id, event, detail) rows in time order."""
    if isinstance(states, RandomAccessState):
        states = [states]
    rows = [r for st in states for r in st.trace]
    return sorted(rows, key=lambda r: (r[0], r[1]))
