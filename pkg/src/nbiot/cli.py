"""Command-line front end: ``nbiot <command> [options]``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from nbiot import ConfigurationError

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class RuntimeFailure(RuntimeError):
    pass


def _write_csv(path: Path, rows: list[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        if rows:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return path


def _print_table(rows: list[dict], out=None):
    if not rows:
        return
    out = out or sys.stdout
    cols = list(rows[0])
    text = [[str(r[c]) for c in cols] for r in rows]
    width = [max(len(c), *(len(t[i]) for t in text)) for i, c in enumerate(cols)]
    print("  ".join(c.rjust(w) for c, w in zip(cols, width)), file=out)
    for t in text:
        print("  ".join(v.rjust(w) for v, w in zip(t, width)), file=out)


def _emit(args, name: str, rows: list[dict]):
    _print_table(rows)
    if args.out:
        path = _write_csv(Path(args.out) / f"{name}.csv", rows)
        print(f"wrote {path}")


# -- commands -----------------------------------------------------------------

def cmd_anchor_scan(args) -> int:
    from nbiot.numerology import (anchor_prb_candidates, distance_to_raster_hz,
                                  guardband_anchor_candidates, prb_center_offset_hz, LTE_PRBS)
    if args.bw not in LTE_PRBS:
        raise ConfigurationError(f"unsupported LTE bandwidth {args.bw} MHz; "
                                 f"expected one of {sorted(LTE_PRBS)}")
    if args.mode == "guardband":
        anchors = set(guardband_anchor_candidates(args.bw))
        prbs = sorted(anchors)
    else:
        anchors = set(anchor_prb_candidates(args.bw))
        prbs = range(LTE_PRBS[args.bw]) if args.all else sorted(anchors)
    rows = []
    for p in prbs:
        center = prb_center_offset_hz(p, args.bw)
        rows.append(dict(prb_index=p, center_offset_hz=round(center, 1),
                         raster_offset_hz=round(distance_to_raster_hz(center), 1),
                         anchor_ok=int(p in anchors)))
    _emit(args, f"anchor_scan_{args.mode}_{args.bw}mhz", rows)
    return EXIT_OK


def rate_rows() -> list[dict]:
    from nbiot.mac.rates import peak_rate, sustained_rate
    from nbiot.mac.timeline import npusch_subframes
    from nbiot.numerology import NUMEROLOGY_15KHZ
    from nbiot.phy_ul import NpuschAllocation
    rows = []
    for direction, tbs, sf in (("DL", 680, 3),):
        peak = peak_rate("dl")
        for reps in (1, 2, 4, 8, 16):
            rows.append(dict(direction=direction, tbs=tbs, tones=12, subframes=sf, repetitions=reps,
                             peak_kbps=round(peak / 1e3, 1),
                             sustained_kbps=round(sustained_rate(tbs, sf, reps, "dl") / 1e3, 4)))
    for tones, tbs in ((12, 1000), (1, 16)):
        alloc = NpuschAllocation(NUMEROLOGY_15KHZ, tone_count=tones)
        sf = npusch_subframes(alloc, tbs)
        peak = peak_rate("ul")
        for reps in ((1, 2, 4, 8, 16) if tones == 12 else (1, 32, 128)):
            rows.append(dict(direction="UL", tbs=tbs, tones=tones, subframes=sf, repetitions=reps,
                             peak_kbps=round(peak / 1e3, 1),
                             sustained_kbps=round(sustained_rate(tbs, sf, reps, "ul") / 1e3, 4)))
    return rows


def cmd_rates(args) -> int:
    from nbiot.mac.rates import peak_rate
    print(f"peak layer-1 rate: DL {peak_rate('dl') / 1e3:.1f} kbps, UL {peak_rate('ul') / 1e3:.1f} kbps")
    _emit(args, "rates", rate_rows())
    return EXIT_OK


def cmd_linkbudget(args) -> int:
    from nbiot.mac.rates import LINK_BUDGETS, LinkBudgetEntry
    if args.snr is not None:
        entries = [LinkBudgetEntry("custom", args.tx, args.nf, args.bw, args.snr)]
    else:
        entries = list(LINK_BUDGETS)
    if any(e.bandwidth_hz <= 0 for e in entries):
        raise ConfigurationError("bandwidth must be positive")
    rows = [dict(name=e.name, tx_power_dbm=e.tx_power_dbm, noise_figure_db=e.noise_figure_db,
                 bandwidth_hz=e.bandwidth_hz, required_snr_db=e.required_snr_db,
                 mcl_db=round(e.mcl_db, 2)) for e in entries]
    _emit(args, "linkbudget", rows)
    return EXIT_OK


def cmd_nprach_info(args) -> int:
    from nbiot.phy_ul import NprachConfig, nprach_hopping
    try:
        cfg = NprachConfig(format=args.format, repetitions=args.repetitions,
                           num_subcarriers=args.subcarriers)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    print(f"format {cfg.format}: CP {cfg.cp_length_s * 1e6:.2f} us, "
          f"basic preamble {cfg.basic_duration_s * 1e3:.3f} ms, "
          f"{cfg.repetitions} repetitions = {cfg.total_duration_s * 1e3:.3f} ms")
    tones = nprach_hopping(cfg, args.start, args.seed)
    rows = [dict(group=g, repetition=g // 4, tone=int(t), frequency_hz=(int(t) - 24) * 3750.0)
            for g, t in enumerate(tones)]
    _emit(args, f"nprach_f{cfg.format}_r{cfg.repetitions}_sc{args.start}", rows)
    return EXIT_OK


def _cell_from_args(args):
    from nbiot.grid import CellConfig
    from nbiot.numerology import DeploymentConfig
    try:
        dep = DeploymentConfig(args.mode, args.bw, args.prb)
        return CellConfig(nb_pcid=args.pcid, deployment=dep)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None


def cmd_grid_dump(args) -> int:
    from nbiot.grid import write_grid_csv
    from nbiot.phy_dl import (Mib, build_npbch_subframe, build_npss_subframe,
                              build_nsss_subframe)
    cell = _cell_from_args(args)
    if args.channel == "npss":
        grid = build_npss_subframe(cell, args.frame)
    elif args.channel == "nsss":
        if args.frame % 2:
            raise ConfigurationError("NSSS is sent in even frames only")
        grid = build_nsss_subframe(cell, args.frame)
    else:
        grid = build_npbch_subframe(Mib.for_cell(cell, args.frame), cell, args.frame)
    name = f"grid_{args.channel}_pcid{cell.nb_pcid}_f{args.frame}"
    out = Path(args.out or ".")
    path = out / f"{name}.csv"
    out.mkdir(parents=True, exist_ok=True)
    write_grid_csv(path, [grid])
    print(f"wrote {path}")
    if not args.no_plot:
        from nbiot.plotting import plot_grid
        print(f"wrote {plot_grid(grid.values, grid.usage, out / f'{name}.png', name)}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from nbiot.scenario import load_scenario
    from nbiot.sim import run_scenario, summarize
    scn = load_scenario(args.scenario)
    out = Path(args.out or "results")
    try:
        rows = run_scenario(scn, jobs=args.jobs)
    except Exception as exc:
        raise RuntimeFailure(f"scenario {scn.name!r} ({scn.procedure}, seed base {scn.seed}) "
                             f"failed: {exc!r}\n{traceback.format_exc()}") from exc
    summary = summarize(scn.procedure, rows)
    print(f"{scn.name}: {len(rows)} rows")
    _print_table(summary)
    print(f"wrote {_write_csv(out / f'{scn.name}_trials.csv', rows)}")
    print(f"wrote {_write_csv(out / f'{scn.name}_summary.csv', summary)}")
    if not args.no_plot:
        from nbiot.plotting import plot_summary
        print(f"wrote {plot_summary(summary, out / f'{scn.name}.png', scn.name)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nbiot", description="NB-IoT link-level toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--out", help="directory for CSV (and plot) outputs")
        sp.set_defaults(func=fn)
        return sp

    sp = add("anchor-scan", cmd_anchor_scan, "anchor PRB candidates and raster offsets")
    sp.add_argument("--bw", type=int, required=True, help="LTE bandwidth in MHz")
    sp.add_argument("--mode", choices=("inband", "guardband"), default="inband")
    sp.add_argument("--all", action="store_true", help="list every PRB, not only anchors")

    add("rates", cmd_rates, "peak and sustained layer-1 rates")

    sp = add("linkbudget", cmd_linkbudget, "maximum coupling loss")
    sp.add_argument("--tx", type=float, default=23.0, help="transmit power, dBm")
    sp.add_argument("--nf", type=float, default=5.0, help="receiver noise figure, dB")
    sp.add_argument("--bw", type=float, default=15e3, help="noise bandwidth, Hz")
    sp.add_argument("--snr", type=float, help="required SNR, dB (omit for the built-in table)")

    sp = add("simulate", cmd_simulate, "run a Monte Carlo scenario file")
    sp.add_argument("scenario", help="scenario INI file")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes")
    sp.add_argument("--no-plot", action="store_true", help="skip the PNG figure")

    sp = add("nprach-info", cmd_nprach_info, "NPRACH durations and hopping pattern")
    sp.add_argument("--format", type=int, default=0)
    sp.add_argument("--repetitions", type=int, default=1)
    sp.add_argument("--subcarriers", type=int, default=48)
    sp.add_argument("--start", type=int, default=0, help="start subcarrier")
    sp.add_argument("--seed", type=int, default=int(os.environ.get("NBIOT_SEED", 0) or 0))

    sp = add("grid-dump", cmd_grid_dump, "dump a synchronization/broadcast subframe grid")
    sp.add_argument("--channel", choices=("npss", "nsss", "npbch"), default="npbch")
    sp.add_argument("--frame", type=int, default=0)
    sp.add_argument("--pcid", type=int, default=0)
    sp.add_argument("--mode", choices=("standalone", "inband", "guardband"), default="standalone")
    sp.add_argument("--bw", type=int, help="LTE bandwidth, MHz")
    sp.add_argument("--prb", type=int, help="PRB index")
    sp.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RuntimeFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # anything unexpected is a runtime failure
        print(f"error: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
