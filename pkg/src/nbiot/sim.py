"""Monte Carlo trial runners behind the ``simulate`` command and the acceptance suite.

Each procedure maps a sweep point and a list of trial seeds to per-trial
result rows (dicts). Trials are independent given their seed, so a
scenario can be split across worker processes and reassembled by key.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache

import numpy as np

from nbiot.channel import ChannelSpec, compose_cfo, impair
from nbiot.coding import Channel, TransportBlock
from nbiot.grid import CellConfig, ChannelKind, channel_elements
from nbiot.mac.random_access import RaStep, UeContext, random_access
from nbiot.mac.timeline import Interval, ScheduleError, ScheduleTimeline, place_dl, place_ul, violations
from nbiot.numerology import (DEFAULT_CARRIER_HZ, NUMEROLOGY_3P75KHZ, NUMEROLOGY_15KHZ,
                              SAMPLE_RATE_HZ, SAMPLES_PER_FRAME, raster_hypotheses, raster_offset)
from nbiot.phy_dl import Mib, NpdschConfig, build_npdsch, downlink_waveform, npdsch_symbols
from nbiot.phy_ul import NprachConfig, NpuschAllocation, build_nprach, npusch_f1_grid
from nbiot.receiver.data import decode_npdsch_grids, decode_npusch_slots
from nbiot.receiver.npbch import AcquisitionError, npbch_acquire
from nbiot.receiver.nprach import nprach_detect
from nbiot.receiver.sync import (SyncError, estimate_cfo, npss_search, nsss_detect)

TIMING_TOLERANCE = 4  # samples at 1.92 Msps counted as a correct NPSS detection


def trial_seed(base: int, point: int, trial: int) -> int:
    return int(np.random.SeedSequence([base, point, trial]).generate_state(1)[0])


def _noise_var(snr_db: float) -> float:
    return 0.0 if math.isinf(snr_db) else 10 ** (-snr_db / 10)


def _awgn(rng, shape, var):
    if var == 0:
        return 0
    return np.sqrt(var / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _wrap(err, period):
    return (err + period / 2) % period - period / 2


# -- downlink data ------------------------------------------------------------

@lru_cache(maxsize=32)
def _npdsch_template(tbs: int, repetitions: int, cell: CellConfig):
    cfg = NpdschConfig(tbs, repetitions)
    zero = TransportBlock(np.zeros(tbs, np.uint8), Channel.NPDSCH)
    grids = np.stack([g.values for g in build_npdsch(zero, cfg, cell)])
    el = channel_elements(ChannelKind.NPDSCH, cell)
    return cfg, grids, np.array([e[0] for e in el]), np.array([e[1] for e in el])


def npdsch_tx_grids(blocks, repetitions: int, cell: CellConfig) -> np.ndarray:
    """Transmitted NPDSCH subframes (B, R*N, 12, 14) for a list of equal-size blocks.

    Equal to stacking ``build_npdsch`` outputs, but only the data elements are
    regenerated per block.
    """
    cfg, template, k, l = _npdsch_template(blocks[0].tbs, repetitions, cell)
    n_sf = cfg.subframes(cell)
    out = np.repeat(template[None], len(blocks), axis=0)
    for b, tb in enumerate(blocks):
        sym = np.tile(npdsch_symbols(tb, cell, n_sf), (repetitions, 1))
        out[b][:, k, l] = sym
    return out


def npdsch_bler_trials(tbs: int, repetitions: int, snr_db: float, seeds, cell: CellConfig,
                       window=None) -> np.ndarray:
    """Block-error indicator per seed on the grid-domain AWGN path."""
    cfg = NpdschConfig(tbs, repetitions)
    blocks, noise = [], []
    for s in seeds:
        rng = np.random.default_rng(s)
        blocks.append(TransportBlock.random(tbs, Channel.NPDSCH, rng))
        noise.append(rng)
    tx = npdsch_tx_grids(blocks, repetitions, cell)
    nv = _noise_var(snr_db)
    rx = tx + np.stack([_awgn(r, tx.shape[1:], nv) for r in noise]) if nv else tx
    bits, ok = decode_npdsch_grids(rx, cfg, cell, max(nv, 1e-6), window)
    return np.array([not (o and np.array_equal(b, tb.payload_bits))
                     for b, o, tb in zip(bits, ok, blocks)])


def npusch_bler_trials(tbs: int, alloc: NpuschAllocation, snr_db: float, seeds, cell: CellConfig,
                       window=None) -> np.ndarray:
    blocks, noise = [], []
    for s in seeds:
        rng = np.random.default_rng(s)
        blocks.append(TransportBlock.random(tbs, Channel.NPUSCH_F1, rng))
        noise.append(rng)
    tx = np.stack([npusch_f1_grid(tb, alloc, cell) for tb in blocks])
    nv = _noise_var(snr_db)
    rx = tx + np.stack([_awgn(r, tx.shape[1:], nv) for r in noise]) if nv else tx
    bits, ok = decode_npusch_slots(rx, alloc, cell, tbs, max(nv, 1e-6), window)
    return np.array([not (o and np.array_equal(b, tb.payload_bits))
                     for b, o, tb in zip(bits, ok, blocks)])


def snr_at_bler(snrs, blers, target: float = 0.1) -> float:
    """Interpolate log10(BLER) linearly in SNR to find the target crossing."""
    snrs = np.asarray(snrs, float)
    blers = np.asarray(blers, float)
    for i in range(len(snrs) - 1):
        a, b = blers[i], blers[i + 1]
        if a >= target > b:
            la = np.log10(max(a, 1e-4))
            lb = np.log10(max(b, 1e-4))
            return float(snrs[i] + (np.log10(target) - la) / (lb - la) * (snrs[i + 1] - snrs[i]))
    return math.nan


# -- synchronization ----------------------------------------------------------

def sync_streams(seeds, snr_db: float, cell: CellConfig, frames: int, cfo_ppm: float = 20.0,
                 carrier_hz: float = DEFAULT_CARRIER_HZ, drift: bool = False):
    """Received carrier streams plus ground truth, one per seed.

    One extra frame is generated and cropped after the channel so every
    stream starts inside a continuous carrier.
    """
    xs, truth = [], []
    raster = raster_offset(cell.deployment)
    for s in seeds:
        rng = np.random.default_rng(s)
        f0 = int(rng.integers(0, 1024))
        ppm = rng.uniform(-cfo_ppm, cfo_ppm)
        cfo = compose_cfo(ppm, carrier_hz, raster)
        delay = int(rng.integers(0, SAMPLES_PER_FRAME))
        mib = Mib.for_cell(cell, f0)
        w = downlink_waveform(cell, mib, f0, frames + 1, rng).samples
        spec = ChannelSpec(snr_db=snr_db, cfo_hz=cfo, delay_samples=delay,
                           drift_ppm=ppm if drift else 0.0, noise_bandwidth_hz=180e3,
                           seed=int(rng.integers(2 ** 31)))
        xs.append(impair(w, spec)[SAMPLES_PER_FRAME:])
        truth.append(dict(timing=delay, cfo=cfo, frame=(f0 + 1) % 8, ppm=ppm))
    return np.stack(xs), truth


def run_sync(scn, snr_db, seeds, point=0):
    segs = scn.param("max_segments", 64, int)
    nsss = scn.param("nsss", 1, int)
    x, truth = sync_streams(seeds, snr_db, scn.cell, segs + 1 + (16 if nsss else 0),
                            scn.param("cfo_ppm", 20.0), drift=bool(scn.param("drift", 0, int)))
    _, results = npss_search(x[:, :segs * SAMPLES_PER_FRAME + 1920])
    rows = []
    for s, x1, r, t in zip(seeds, x, results, truth):
        row = dict(seed=s, snr_db=snr_db, detected=int(r.detected), correct=0,
                   segments=r.accumulation_count, timing_err=math.nan, cfo_err_hz=math.nan,
                   pcid_ok=0, metric=round(r.metric_peak, 4))
        if r.detected:
            err = int(_wrap(r.sample_timing - t["timing"], SAMPLES_PER_FRAME))
            row["timing_err"] = err
            row["correct"] = int(abs(err) <= TIMING_TOLERANCE)
            cfo = estimate_cfo(x1, r.sample_timing, r.cfo_hz_estimate)
            row["cfo_err_hz"] = round(cfo - t["cfo"], 2)
            if nsss and row["correct"]:
                try:
                    pcid, pos = nsss_detect(x1, r.sample_timing, cfo)
                    row["pcid_ok"] = int(pcid == scn.cell.nb_pcid and pos == t["frame"])
                except SyncError:
                    pass
        rows.append(row)
    return rows


def npbch_trial(seed: int, snr_db: float, cell: CellConfig, hypotheses=None,
                carrier_hz: float = DEFAULT_CARRIER_HZ, cfo_ppm: float = 20.0) -> dict:
    """Cell search then NPBCH acquisition one TTI later, with drift on both reads."""
    rng = np.random.default_rng(seed)
    tti = int(rng.integers(1, 15))
    f0 = 64 * tti
    ppm = rng.uniform(-cfo_ppm, cfo_ppm)
    raster = raster_offset(cell.deployment)
    cfo = compose_cfo(ppm, carrier_hz, raster)
    d0 = float(rng.uniform(0, SAMPLES_PER_FRAME))
    base = dict(snr_db=snr_db, cfo_hz=cfo, delay_samples=d0, drift_ppm=ppm,
                noise_bandwidth_hz=180e3)
    w = downlink_waveform(cell, Mib.for_cell(cell, f0), f0, 18, rng).samples
    y = impair(w, ChannelSpec(**base, seed=int(rng.integers(2 ** 31))))[SAMPLES_PER_FRAME:]
    from nbiot.receiver.sync import cell_search
    sync = cell_search(y)
    row = dict(seed=seed, snr_db=snr_db, raster_true=raster, raster_est=math.nan, correct=0,
               frame_ok=0, attempts=0, latency_s=math.nan, sync_ok=int(sync.detected))
    if not sync.detected:
        return row
    off = 64 * SAMPLES_PER_FRAME
    f1 = f0 + 64
    w2 = downlink_waveform(cell, Mib.for_cell(cell, f1), f1, 18, rng).samples
    spec2 = ChannelSpec(**dict(base, delay_samples=d0 + ppm * 1e-6 * off),
                        seed=int(rng.integers(2 ** 31)))
    y2 = impair(w2, spec2, start_sample=off)[SAMPLES_PER_FRAME:]
    hyps = raster_hypotheses() if hypotheses is None else hypotheses
    try:
        res = npbch_acquire(y2, sync, hyps, sample_offset=off, carrier_hz=carrier_hz)
    except AcquisitionError as exc:
        row.update(attempts=exc.attempts, latency_s=exc.latency_s)
        return row
    row.update(raster_est=res.raster_hypothesis_hz, correct=int(res.raster_hypothesis_hz == raster),
               frame_ok=int(res.mib.sfn_msbs == (f1 >> 6) % 16), attempts=res.attempts,
               latency_s=res.latency_s)
    return row


def run_npbch(scn, snr_db, seeds, point=0):
    return [npbch_trial(s, snr_db, scn.cell) for s in seeds]


# -- random access ------------------------------------------------------------

def run_nprach(scn, snr_db, seeds, point=0):
    cfg = NprachConfig(format=scn.param("format", 0, int),
                       repetitions=scn.param("repetitions", 1, int), num_subcarriers=48)
    max_delay = scn.param("max_delay_us", 66.0) * 1e-6
    rows = []
    for s in seeds:
        rng = np.random.default_rng(s)
        sc = int(rng.integers(48))
        delay = float(rng.uniform(0, max_delay))
        _, w = build_nprach(cfg, sc, seed=scn.seed)
        spec = ChannelSpec(snr_db=snr_db, delay_samples=delay * SAMPLE_RATE_HZ,
                           noise_bandwidth_hz=3750.0, seed=int(rng.integers(2 ** 31)))
        dets = nprach_detect(impair(w.samples, spec), cfg, seed=scn.seed)
        hit = [d for d in dets if d.start_subcarrier == sc]
        rows.append(dict(seed=s, snr_db=snr_db, detected=int(bool(hit)),
                         false_detections=len(dets) - len(hit),
                         ta_err_us=round((hit[0].timing_advance_s - delay) * 1e6, 3) if hit else math.nan))
    return rows


def run_random_access(scn, snr_db, seeds, point=0):
    n_ue = scn.param("ues", 2, int)
    frac = scn.param("multitone_fraction", 0.5)
    same = scn.param("same_subcarrier", 0, int)
    rows = []
    from nbiot.mac.coverage import default_classes
    classes = default_classes()
    for s in seeds:
        rng = np.random.default_rng(s)
        ues = []
        for u in range(n_ue):
            capable = bool(rng.random() < frac)
            first = (12 if capable else 0) if same else None
            ues.append(UeContext(u, rsrp_dbm=-100.0, multitone_capable=capable,
                                 delay_s=float(rng.uniform(0, 30e-6)),
                                 first_subcarrier=first if not same or capable == ues[0].multitone_capable
                                 or u == 0 else None))
        channel = None if math.isinf(snr_db) else ChannelSpec(snr_db=snr_db)
        states = random_access(ues, classes, channel, seed=int(rng.integers(2 ** 31)))
        first_round = [st for st in states if st.trace and st.trace[0][0] == classes[0].nprach_config.start_time_ms]
        winners_round1 = sum(1 for st in first_round if any(
            e[2] == "resolved" and e[0] < classes[0].nprach_config.periodicity_ms + 8 for e in st.trace))
        for ue, st in zip(ues, states):
            inferred = None if st.chosen_subcarrier is None else \
                classes[st.coverage_level].nprach_config.signals_multitone(st.chosen_subcarrier)
            rows.append(dict(seed=s, snr_db=snr_db, ue_id=ue.ue_id, level=st.coverage_level,
                             multitone_capable=int(ue.multitone_capable),
                             capability_ok=int(inferred == ue.multitone_capable),
                             grant_tones=st.msg3_grant.tone_count if st.msg3_grant else 0,
                             attempts=st.attempt_count, resolved=int(st.step is RaStep.RESOLVED),
                             first_round_winners=winners_round1))
    return rows


# -- timeline -----------------------------------------------------------------

def random_schedule_attempt(rng, now: int):
    """A random DL or UL placement request near ``now`` (may be illegal)."""
    start = now + int(rng.integers(0, 6))
    dci = Interval.of(start, int(rng.integers(1, 3)))
    if rng.random() < 0.5:
        data = Interval.of(dci.last + int(rng.integers(2, 7)), int(rng.integers(1, 6)))
        ack = Interval.of(data.last + int(rng.integers(9, 15)), 2)
        return ("dl", dci, data, ack)
    data = Interval.of(dci.last + int(rng.integers(6, 11)), int(rng.integers(1, 9)))
    return ("ul", dci, data, None)


def timeline_sequence(seed: int, length: int = 20):
    """Run ``length`` random placement attempts; returns (timeline, attempts, outcomes)."""
    rng = np.random.default_rng(seed)
    tl = ScheduleTimeline()
    now = 0
    attempts, outcomes = [], []
    for _ in range(length):
        att = random_schedule_attempt(rng, now)
        attempts.append(att)
        try:
            if att[0] == "dl":
                t = place_dl(tl, att[1], att[2], att[3])
            else:
                t = place_ul(tl, att[1], att[2])
            outcomes.append(None)
            if rng.random() < 0.7:
                now = t.release
        except ScheduleError as exc:
            outcomes.append(exc.constraint)
            if rng.random() < 0.5:
                now += int(rng.integers(1, 10))
    return tl, attempts, outcomes


def run_timeline(scn, snr_db, seeds, point=0):
    length = scn.param("length", 20, int)
    rows = []
    for s in seeds:
        tl, attempts, outcomes = timeline_sequence(s, length)
        rows.append(dict(seed=s, accepted=sum(o is None for o in outcomes),
                         rejected=sum(o is not None for o in outcomes),
                         violations=len(violations(tl))))
    return rows


# -- link sweeps --------------------------------------------------------------

def run_link_dl(scn, snr_db, seeds, point=0):
    tbs = scn.param("tbs", 680, int)
    rows = []
    for reps in scn.param_list("repetitions", [1], int):
        err = npdsch_bler_trials(tbs, reps, snr_db, seeds, scn.cell)
        rows += [dict(seed=s, snr_db=snr_db, repetitions=reps, block_error=int(e))
                 for s, e in zip(seeds, err)]
    return rows


def run_link_ul(scn, snr_db, seeds, point=0):
    tbs = scn.param("tbs", 16, int)
    tones = scn.param("tones", 1, int)
    num = NUMEROLOGY_3P75KHZ if scn.param("spacing_hz", 15e3) == 3750 else NUMEROLOGY_15KHZ
    rows = []
    for reps in scn.param_list("repetitions", [1], int):
        alloc = NpuschAllocation(num, tone_count=tones, repetitions=reps)
        err = npusch_bler_trials(tbs, alloc, snr_db, seeds, scn.cell)
        rows += [dict(seed=s, snr_db=snr_db, repetitions=reps, block_error=int(e))
                 for s, e in zip(seeds, err)]
    return rows


RUNNERS = {"sync": run_sync, "npbch": run_npbch, "nprach": run_nprach, "link_dl": run_link_dl,
           "link_ul": run_link_ul, "random_access": run_random_access, "timeline": run_timeline}

SUMMARY_METRICS = {
    "sync": ("correct", "pcid_ok", "timing_err", "cfo_err_hz"),
    "npbch": ("correct", "frame_ok", "attempts"),
    "nprach": ("detected", "false_detections", "ta_err_us"),
    "link_dl": ("block_error",),
    "link_ul": ("block_error",),
    "random_access": ("resolved", "capability_ok", "attempts"),
    "timeline": ("accepted", "rejected", "violations"),
}

CHUNK = 10


def _job(args):
    scn, point, snr, seeds = args
    return RUNNERS[scn.procedure](scn, snr, seeds, point)


def run_scenario(scn, jobs: int = 1) -> list[dict]:
    """All trial rows, ordered by sweep point then seed regardless of ``jobs``."""
    tasks = []
    for p, snr in enumerate(scn.snr_db):
        seeds = [trial_seed(scn.seed, p, t) for t in range(scn.trials)]
        for lo in range(0, len(seeds), CHUNK):
            tasks.append((scn, p, snr, seeds[lo:lo + CHUNK]))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            parts = list(ex.map(_job, tasks))
    else:
        parts = [_job(t) for t in tasks]
    return [row for part in parts for row in part]


def summarize(procedure: str, rows: list[dict]) -> list[dict]:
    """Mean of each headline metric per (snr_db[, repetitions]) group, NaNs ignored."""
    keys = ["snr_db"] + (["repetitions"] if rows and "repetitions" in rows[0] else [])
    groups = {}
    for r in rows:
        groups.setdefault(tuple(r.get(k, 0) for k in keys), []).append(r)
    out = []
    for key, grp in groups.items():
        row = dict(zip(keys, key), trials=len(grp))
        for m in SUMMARY_METRICS[procedure]:
            vals = np.array([g[m] for g in grp], float)
            vals = vals[~np.isnan(vals)]
            row[f"mean_{m}"] = round(float(vals.mean()), 6) if vals.size else math.nan
        out.append(row)
    return out
