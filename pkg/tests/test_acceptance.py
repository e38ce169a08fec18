"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
the terminal summary under "acceptance criteria".
"""
import math
import time

import numpy as np
import pytest

from nbiot.channel import drift_from_cfo
from nbiot.coding import (DL_TBS, UL_TBS, Channel, Scheme, TransportBlock, papr_db, rate_match,
                          repetition_decode, repetition_encode, tbcc_encode, turbo_decode,
                          turbo_encode, viterbi_decode)
from nbiot.coding import tbcc
from nbiot.grid import (N_RE, CellConfig, ChannelKind, SubframeRole, Usage, crs_elements,
                        data_capacity, demap_channel, insert_nrs, map_channel, new_subframe,
                        nrs_elements, subframe_role)
from nbiot.mac import (LINK_BUDGETS, NOT_REPRODUCED, RaStep, UeContext, default_classes,
                       link_budget, peak_rate, random_access)
from nbiot.numerology import (LTE_PRBS, NUMEROLOGY_15KHZ, SAMPLES_PER_FRAME, DeploymentConfig,
                              DeploymentMode, anchor_prb_candidates, prb_center_offset_hz,
                              distance_to_raster_hz)
from nbiot.phy_dl import (Dci, Mib, build_npbch_subframe, build_npbch_tti, build_npdcch, build_npss_subframe,
                          build_nsss_subframe, npbch_subblock_symbols)
from nbiot.phy_ul import (NPRACH_SPACING_HZ, NprachConfig, NpuschAllocation, build_npusch_f1,
                          data_symbol_mask)
from nbiot.receiver import npss_search
from nbiot.sequences import NPSS_CODE_COVER, NpuschFormat, generate_zc, nsss_codebook
from nbiot.sim import (TIMING_TOLERANCE, _wrap, npbch_trial, npdsch_bler_trials,
                       npusch_bler_trials, snr_at_bler, sync_streams, timeline_sequence)

pytestmark = pytest.mark.acceptance


def test_c01_anchor_raster(acceptance):
    ok = anchor_prb_candidates(10) == [4, 9, 14, 19, 30, 35, 40, 45]
    offsets = {}
    for bw in LTE_PRBS:
        offsets[bw] = {abs(distance_to_raster_hz(prb_center_offset_hz(p, bw)))
                       for p in anchor_prb_candidates(bw)}
    ok &= all(offsets[bw] == {7500.0} for bw in (3, 5, 15))
    ok &= all(offsets[bw] == {2500.0} for bw in (10, 20))
    acceptance(1, "anchor raster table", ok, f"10 MHz -> {anchor_prb_candidates(10)}")


def test_c02_peak_rates(acceptance):
    dl, ul = peak_rate("dl"), peak_rate("ul")
    ok = abs(dl - 226.7e3) <= 100 and ul == 250e3
    acceptance(2, "peak rates", ok, f"DL {dl / 1e3:.2f} kbps, UL {ul / 1e3:.2f} kbps")


def test_c03_timing_drift(acceptance):
    d = drift_from_cfo(7.5e3, 900e6, 0.64) * 1e6
    acceptance(3, "timing drift", abs(d - 5.33) <= 0.01, f"{d:.4f} us")


def test_c04_nprach_durations(acceptance):
    got = {}
    for fmt in (0, 1):
        cfg = NprachConfig(format=fmt)
        structural = 4 * (cfg.cp_length_s + 5 / NPRACH_SPACING_HZ)  # 266.67 us symbols
        got[fmt] = (cfg.basic_duration_s, structural)
    ok = (abs(got[0][0] - 5.6e-3) <= 1e-6 and abs(got[1][0] - 6.4e-3) <= 1e-6
          and all(abs(a - b) <= 1e-9 for a, b in got.values()))
    acceptance(4, "NPRACH durations", ok,
               f"format 0 {got[0][0] * 1e3:.4f} ms, format 1 {got[1][0] * 1e3:.4f} ms")


def test_c05_structure_invariants(acceptance):
    cell = CellConfig(nb_pcid=17)
    checks = {}
    # NPSS: 11 symbols, each +-1 times the root-5 length-11 ZC on subcarriers 0..10
    g = build_npss_subframe(cell, 0)
    zc = generate_zc(11, 5).values
    block = g.values[:11, 3:]
    scale = block[0, 0] / (NPSS_CODE_COVER[0] * zc[0])
    checks["npss"] = (np.allclose(block, scale * zc[:, None] * NPSS_CODE_COVER[None, :])
                      and np.all(g.values[11] == 0) and set(NPSS_CODE_COVER.tolist()) == {-1, 1})
    # NSSS: 132 unit-modulus elements
    book = nsss_codebook()
    gs = build_nsss_subframe(cell, 0)
    checks["nsss"] = (book.shape[-1] == 132 and np.allclose(np.abs(book), 1)
                      and gs.count(Usage.NB_DATA) == 132)
    # NPBCH: 8 sub-blocks x 8 repetitions over 640 ms, always subframe 0
    mib = Mib.for_cell(cell, 0)
    tti = build_npbch_tti(mib, cell)
    sfs = [t.subframe for t in tti]
    data = [demap_channel(t.values, ChannelKind.NPBCH, cell) for t in tti]
    checks["npbch"] = (len(tti) == 64 and all(s % 10 == 0 for s in sfs) and sfs[-1] - sfs[0] == 630
                       and all(np.allclose(data[8 * b + r], npbch_subblock_symbols(mib, 17, b))
                               for b in range(8) for r in range(8)))
    # NRS: 8 elements per subframe per port
    two = CellConfig(nb_pcid=17, nrs_ports=2)
    checks["nrs"] = (all(len(p) == 8 for p in nrs_elements(17, 2))
                     and insert_nrs(new_subframe(1, two), two).count(Usage.NRS) == 16)
    # NPUSCH format 2: DMRS on the middle three of seven symbols
    checks["f2_dmrs"] = np.flatnonzero(~data_symbol_mask(NpuschFormat.F2)).tolist() == [2, 3, 4]
    bad = [k for k, v in checks.items() if not v]
    acceptance(5, "structure invariants", not bad, "failed: " + ", ".join(bad) if bad else
               "NPSS, NSSS, NPBCH, NRS, F2 DMRS exact")


def _lte_oracle(cell):
    """Reserved LTE elements computed from first principles, not from the grid module."""
    out = set()
    ports = cell.lte_crs_ports
    v_shift = cell.lte_pcid % 6
    for ns in range(2):
        pairs = [(0, 0), (4, 3)]
        if ports >= 2:
            pairs += [(0, 3), (4, 0)]
        if ports == 4:
            pairs += [(1, 3 * ns), (1, 3 + 3 * ns)]
        for l, v in pairs:
            for m in range(2):
                out.add((6 * m + (v + v_shift) % 6, 7 * ns + l))
    out |= {(k, l) for k in range(12) for l in range(cell.lte_pdcch_symbols)}
    return out


def test_c06_coexistence(acceptance):
    t0 = time.time()
    rng = np.random.default_rng(6)
    leaks = bad_counts = 0
    n = 10_000
    for _ in range(n):
        bw = int(rng.choice([3, 5, 10, 15, 20]))
        prb = int(rng.choice(anchor_prb_candidates(bw)))
        cell = CellConfig(nb_pcid=int(rng.integers(504)),
                          deployment=DeploymentConfig(DeploymentMode.INBAND, bw, prb),
                          lte_crs_ports=int(rng.choice([1, 2, 4])),
                          lte_pdcch_symbols=int(rng.integers(1, 4)))
        frame = 2 * int(rng.integers(512))
        sf = int(rng.integers(10))
        role = subframe_role(10 * frame + sf)
        if role is SubframeRole.NPBCH:
            g = build_npbch_subframe(Mib.for_cell(cell, frame), cell, frame)
        elif role is SubframeRole.NPSS:
            g = build_npss_subframe(cell, frame)
        elif role is SubframeRole.NSSS:
            g = build_nsss_subframe(cell, frame)
        elif rng.random() < 0.3:
            g = build_npdcch(Dci(), 2, 1, cell, start_subframe=10 * frame + sf)[0]
        else:
            sym = np.exp(2j * np.pi * rng.random(data_capacity(cell)))
            g = insert_nrs(map_channel(new_subframe(10 * frame + sf, cell), sym,
                                       ChannelKind.NPDSCH, cell), cell)
        mask = np.zeros((12, 14), bool)
        for k, l in _lte_oracle(cell):
            mask[k, l] = True
        leaks += int(np.any(np.abs(g.values[mask]) > 0))
        bad_counts += int(sum(g.count(u) for u in Usage) != N_RE or g.values.size != N_RE)
    acceptance(6, "coexistence orthogonality", leaks == 0 and bad_counts == 0,
               f"{n} subframes, {leaks} with energy on CRS/PDCCH, {bad_counts} count errors, "
               f"{time.time() - t0:.1f} s")


def test_c07_papr(acceptance):
    rng = np.random.default_rng(7)
    cell = CellConfig(nb_pcid=1)
    tb = TransportBlock.random(256, Channel.NPUSCH_F1, rng)
    single = papr_db(build_npusch_f1(tb, NpuschAllocation(NUMEROLOGY_15KHZ, tone_count=1), cell).samples)
    multi = papr_db(build_npusch_f1(tb, NpuschAllocation(NUMEROLOGY_15KHZ, tone_count=12,
                                                         modulation=Scheme.QPSK), cell).samples)
    acceptance(7, "PAPR", single <= 0.1 and multi > single,
               f"single tone {single:.3f} dB, 12-tone QPSK {multi:.2f} dB")


def test_c08_codecs(acceptance):
    rng = np.random.default_rng(8)
    fails = []
    for tbs in DL_TBS:
        tb = TransportBlock.random(tbs, Channel.NPDSCH, rng)
        llr = 1.0 - 2.0 * rate_match(tbcc_encode(tb), 3 * (tbs + 24))
        dec, ok = viterbi_decode(llr, tbs)
        if not (ok and np.array_equal(dec.payload_bits, tb.payload_bits)):
            fails.append(f"tbcc {tbs}")
    for tbs in UL_TBS:
        tb = TransportBlock.random(tbs, Channel.NPUSCH_F1, rng)
        coded = turbo_encode(tb)
        dec, ok = turbo_decode(4.0 * (1.0 - 2.0 * rate_match(coded, coded.buffer_length)), tbs)
        if not (ok and np.array_equal(dec.payload_bits, tb.payload_bits)):
            fails.append(f"turbo {tbs}")
    for i in range(100):
        bits = rng.integers(0, 2, int(rng.integers(6, 700))).astype(np.uint8)
        _, start, end = tbcc.encode_streams(bits)
        if start != end:
            fails.append(f"tail-biting {i}")
    for bit in (0, 1):
        for factor in (1, 2, 3, 8, 16, 63):
            if repetition_decode(1.0 - 2.0 * repetition_encode(bit, factor).bits) != bit:
                fails.append(f"repetition {bit}x{factor}")
    acceptance(8, "codec correctness", not fails,
               f"{len(DL_TBS)} TBCC + {len(UL_TBS)} turbo TBS, 100 tail-biting inputs"
               + (f"; failed {fails[:5]}" if fails else ""))


def _release(att):
    return (att[3] or att[2]).stop


def _oracle_reasons(accepted, att):
    """Every rule the placement would break, given the accepted placements."""
    kind, dci, data, ack = att
    reasons = set()
    if data.start - dci.last < (4 if kind == "dl" else 8):
        reasons.add("dl_gap" if kind == "dl" else "ul_gap")
    if ack is not None and ack.start - data.last < 12:
        reasons.add("ack_gap")
    used = {sf for a in accepted for iv in a[1:] if iv is not None for sf in iv}
    new = [sf for iv in att[1:] if iv is not None for sf in iv]
    if used.intersection(new) or len(set(new)) != len(new):
        reasons.add("occupied")
    if accepted and dci.start < max(_release(a) for a in accepted):
        reasons.add("harq")
    return reasons


def test_c09_harq_timeline(acceptance):
    t0 = time.time()
    n_seq, n_acc, n_rej, wrong = 10_000, 0, 0, []
    for seed in range(n_seq):
        tl, attempts, outcomes = timeline_sequence(seed, 20)
        accepted = []
        for att, out in zip(attempts, outcomes):
            reasons = _oracle_reasons(accepted, att)
            if out is None:
                n_acc += 1
                if reasons:
                    wrong.append((seed, "accepted", sorted(reasons)))
                accepted.append(att)
            else:
                n_rej += 1
                if out not in reasons:
                    wrong.append((seed, out, sorted(reasons)))
        if len(tl.transactions) != len(accepted):
            wrong.append((seed, "ledger", len(tl.transactions)))
    acceptance(9, "HARQ timeline", not wrong,
               f"{n_seq} sequences, {n_acc} accepted, {n_rej} rejected, {len(wrong)} mismatches, "
               f"{time.time() - t0:.1f} s")


SYNC_SNRS = (-15, -12, -9, -6, -3, 0)
SYNC_TRIALS = 100


def _sync_rate(snr, cell, seeds):
    correct = 0
    for lo in range(0, len(seeds), 20):
        chunk = seeds[lo:lo + 20]
        x, truth = sync_streams(chunk, snr, cell, 65)
        _, results = npss_search(x[:, :64 * SAMPLES_PER_FRAME + 1920])
        for r, t in zip(results, truth):
            err = _wrap(r.sample_timing - t["timing"], SAMPLES_PER_FRAME) if r.detected else math.inf
            correct += abs(err) <= TIMING_TOLERANCE
    return correct / len(seeds)


def test_c10_sync_chain(acceptance):
    t0 = time.time()
    cell = CellConfig(nb_pcid=17)
    seeds = list(range(1000, 1000 + SYNC_TRIALS))
    rates = [_sync_rate(s, cell, seeds) for s in SYNC_SNRS]
    monotone = all(b >= a for a, b in zip(rates, rates[1:]))
    at_m12 = rates[SYNC_SNRS.index(-12)]
    cells = [CellConfig(nb_pcid=p, deployment=DeploymentConfig(DeploymentMode.INBAND, bw, prb),
                        lte_crs_ports=ports)
             for p, bw, prb, ports in [(17, 10, 30, 2), (100, 5, 7, 4), (250, 15, 32, 2),
                                       (400, 20, 55, 4)]]
    raster = [npbch_trial(s, math.inf, cells[s % 4])["correct"] for s in range(40)]
    raster_rate = float(np.mean(raster))
    ok = monotone and at_m12 >= 0.90 and raster_rate >= 0.95
    acceptance(10, "sync chain", ok,
               "correct detection " + ", ".join(f"{s} dB {r:.2f}" for s, r in zip(SYNC_SNRS, rates))
               + f"; raster {raster_rate:.3f} of {len(raster)}; {time.time() - t0:.0f} s")


BLER_TBS = 88
BLER_FIXED_SNR = -4.5
BLER_TRIALS = 500
BLER_REPS = (1, 2, 4, 8)


def test_c11_repetition_tradeoff(acceptance):
    t0 = time.time()
    cell = CellConfig(nb_pcid=3)
    seeds = list(range(BLER_TRIALS))
    fixed = [float(npdsch_bler_trials(BLER_TBS, r, BLER_FIXED_SNR, seeds, cell).mean())
             for r in BLER_REPS]
    decreasing = all(b < a for a, b in zip(fixed, fixed[1:]))
    required = []
    for r in BLER_REPS:
        snrs, blers = [], []
        for snr in np.arange(-13.0, 6.01, 0.5):
            b = float(npdsch_bler_trials(BLER_TBS, r, snr, seeds, cell).mean())
            snrs.append(snr)
            blers.append(b)
            if len(blers) >= 2 and blers[-1] == 0 and blers[-2] < 0.1:
                break
        required.append(snr_at_bler(snrs, blers, 0.1))
    gains = -np.diff(required)
    slope_ok = bool(np.all(np.isfinite(gains)) and np.all(np.abs(gains - 3) <= 1))
    acceptance(11, "repetition/coverage tradeoff", decreasing and slope_ok,
               f"BLER at {BLER_FIXED_SNR} dB {fixed}; 10% SNR {np.round(required, 2).tolist()} dB, "
               f"gain per doubling {np.round(gains, 2).tolist()} dB; {time.time() - t0:.0f} s")


def test_c12_random_access(acceptance):
    single = random_access(UeContext(0, rsrp_dbm=-100), seed=12)
    single_ok = single.step is RaStep.RESOLVED and single.attempt_count == 1
    a, b = random_access([UeContext(0, first_subcarrier=4), UeContext(1, first_subcarrier=4)], seed=12)
    first_round = [e for st in (a, b) for e in st.trace if e[0] < 80]
    contention = (sum(e[2] == "rar_received" for e in first_round) == 2
                  and sum(e[2] == "resolved" for e in first_round) <= 1)
    cfg = default_classes()[0].nprach_config
    rng = np.random.default_rng(12)
    correct = 0
    for trial in range(1000):
        capable = bool(rng.random() < 0.5)
        st = random_access(UeContext(0, multitone_capable=capable), seed=trial)
        inferred = cfg.signals_multitone(st.chosen_subcarrier)
        grant_ok = st.msg3_grant.tone_count == (3 if capable else 1)
        correct += int(inferred == capable and grant_ok)
    ok = single_ok and contention and correct == 1000
    acceptance(12, "random access", ok,
               f"single UE attempts {single.attempt_count}, collision winners "
               f"{sum(e[2] == 'resolved' for e in first_round)}, capability {correct}/1000")


def test_c13_out_of_scope_and_mcl(acceptance):
    cell = CellConfig(nb_pcid=3)
    alloc = NpuschAllocation(NUMEROLOGY_15KHZ, tone_count=1, repetitions=128)
    snrs = np.arange(-26.0, -19.9, 0.5)
    blers = [float(npusch_bler_trials(16, alloc, s, range(200), cell).mean()) for s in snrs]
    derived = snr_at_bler(snrs, blers, 0.1)
    entry = {e.name: e for e in LINK_BUDGETS}["ul_single_tone_128rep"]
    mcl = link_budget(entry.tx_power_dbm, entry.noise_figure_db, entry.bandwidth_hz, derived)
    ok = (abs(mcl - 170) <= 3 and abs(derived - entry.required_snr_db) <= 0.5
          and set(NOT_REPRODUCED) == {"cell_capacity_52500_ues", "battery_life_10_years"})
    acceptance(13, "out-of-scope declared, MCL identity", ok,
               f"required SNR {derived:.2f} dB -> MCL {mcl:.2f} dB; not reproduced: "
               + ", ".join(sorted(NOT_REPRODUCED)))
