"""Scenario files: flat INI sections describing one Monte Carlo experiment.

Grammar (``configparser`` INI, ``#`` or ``;`` comments)::

    [scenario]
    name = sync_sweep          ; free text, used for output file names
    procedure = sync           ; sync | npbch | nprach | link_dl | link_ul | random_access | timeline
    trials = 100               ; trials per sweep point, >= 1
    seed = 1                   ; seed base, overridden by NBIOT_SEED
    snr_db = -15, -12, -9      ; comma separated sweep, finite values

    [cell]
    nb_pcid = 17
    deployment = inband        ; standalone | inband | guardband
    lte_bandwidth_mhz = 10
    prb_index = 30

    [params]                   ; procedure-specific keys, see README
    repetitions = 1, 2, 4, 8
"""
from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field

from nbiot import ConfigurationError
from nbiot.grid import CellConfig
from nbiot.numerology import DeploymentConfig, DeploymentMode

PROCEDURES = ("sync", "npbch", "nprach", "link_dl", "link_ul", "random_access", "timeline")


def parse_list(text: str, kind=float) -> list:
    items = [t.strip() for t in str(text).replace(";", ",").split(",") if t.strip()]
    try:
        return [kind(t) for t in items]
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse {text!r}: {exc}") from None


@dataclass
class Scenario:
    name: str
    procedure: str
    cell: CellConfig = field(default_factory=CellConfig)
    snr_db: list = field(default_factory=lambda: [math.inf])
    trials: int = 1
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.procedure not in PROCEDURES:
            raise ConfigurationError(f"unknown procedure {self.procedure!r}")
        if self.trials < 1:
            raise ConfigurationError("trials must be at least 1")
        if not self.snr_db or any(math.isnan(s) or s == -math.inf for s in self.snr_db):
            raise ConfigurationError("SNR sweep values must be finite (or inf for noiseless)")

    def param(self, key, default, kind=float):
        if key not in self.params:
            return default
        try:
            return kind(self.params[key])
        except ValueError:
            raise ConfigurationError(f"bad value for {key}: {self.params[key]!r}") from None

    def param_list(self, key, default, kind=float) -> list:
        return parse_list(self.params[key], kind) if key in self.params else list(default)


def _cell(section) -> CellConfig:
    if section is None:
        return CellConfig()
    try:
        mode = DeploymentMode(section.get("deployment", "standalone").strip().lower())
        bw = section.getint("lte_bandwidth_mhz", fallback=None)
        prb = section.getint("prb_index", fallback=None)
        dep = DeploymentConfig(mode, bw, prb)
        return CellConfig(nb_pcid=section.getint("nb_pcid", fallback=0), deployment=dep,
                          lte_crs_ports=section.getint("lte_crs_ports", fallback=2))
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None


def parse_scenario(text: str) -> Scenario:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"scenario parse error: {exc}") from None
    if "scenario" not in cp:
        raise ConfigurationError("missing [scenario] section")
    s = cp["scenario"]
    if "procedure" not in s:
        raise ConfigurationError("missing procedure key")
    try:
        trials = s.getint("trials", fallback=1)
        seed = s.getint("seed", fallback=0)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    env = os.environ.get("NBIOT_SEED")
    if env:
        try:
            seed = int(env)
        except ValueError:
            raise ConfigurationError(f"NBIOT_SEED must be an integer, got {env!r}") from None
    snr = parse_list(s.get("snr_db", "inf"))
    params = dict(cp["params"]) if "params" in cp else {}
    return Scenario(s.get("name", "scenario").strip(), s["procedure"].strip(),
                    _cell(cp["cell"] if "cell" in cp else None), snr, trials, seed, params)


def load_scenario(path) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario {path}: {exc}") from None
    return parse_scenario(text)
