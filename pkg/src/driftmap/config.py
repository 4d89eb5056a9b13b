"""Run configuration: one JSON file describing hardware and solver settings.

Unknown keys are rejected everywhere so a typo cannot silently fall back to
a default. Flag values on the command line override config values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .circuit import (DEFAULT_R_CELL_LEVELS, DEFAULT_V_DRIVE, TECH_TABLE,
                      CrossbarConfig, TechNodeParams)
from .disturb import (DEFAULT_ANCHORS, DEFAULT_PULSE_WIDTH, DisturbParams,
                      calibrate_hrs)
from .errors import ValidationError
from .simulate import (DEFAULT_INFERENCE_PERIOD, DEFAULT_WINDOW,
                       ReprogramCostModel)

DEFAULT_EXACT_CAP = 6
DEFAULT_EPSILON = 1e-6
DEFAULT_CRIT_THRESHOLD = 0.01
DEFAULT_READ_CURRENT = 5e-6  # amps, drive anchor for technology sweeps


@dataclass(frozen=True)
class EnergyConstants:
    """Per-event energy and bandwidth constants, carried but not reported."""
    energy_per_spike_pj: float = 23.6
    energy_per_routing_pj: float = 3.0
    switch_bandwidth_events_per_s: float = 3.44e9


@dataclass(frozen=True)
class RunConfig:
    tech: TechNodeParams = TECH_TABLE["65nm"]
    crossbar_n: int = 128
    v_drive: float = DEFAULT_V_DRIVE
    r_cell_levels: tuple = DEFAULT_R_CELL_LEVELS
    circuit_mode: str = "series"          # series | nodal
    read_current: float = DEFAULT_READ_CURRENT
    disturb: DisturbParams | None = None  # None -> calibrated from anchors
    anchors: tuple = DEFAULT_ANCHORS
    cost: ReprogramCostModel = ReprogramCostModel()
    energy: EnergyConstants = EnergyConstants()
    epsilon: float = DEFAULT_EPSILON
    criticality_threshold: float = DEFAULT_CRIT_THRESHOLD
    exact_cap: int = DEFAULT_EXACT_CAP
    move_budget: int | None = None        # None -> 50 * N^2
    inference_period: float = DEFAULT_INFERENCE_PERIOD
    accuracy_window: int = DEFAULT_WINDOW
    stress_accounting: str = "mean"
    seed: int = 0

    def crossbar(self, n: int | None = None) -> CrossbarConfig:
        return CrossbarConfig(n=n if n is not None else self.crossbar_n,
                              tech=self.tech,
                              r_cell_by_level=self.r_cell_levels,
                              v_drive=self.v_drive)

    def disturb_params(self) -> DisturbParams:
        if self.disturb is not None:
            return self.disturb
        return calibrate_hrs(*self.anchors)


def _require_keys(doc: dict, allowed, where: str):
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ValidationError(
            f"unknown key(s) {unknown} in {where}; allowed: "
            f"{sorted(allowed)}", field=unknown[0])


def _tech_from(doc) -> TechNodeParams:
    if isinstance(doc, str):
        if doc not in TECH_TABLE:
            raise ValidationError(
                f"unknown tech node {doc!r}; built-ins: "
                f"{sorted(TECH_TABLE)}", field="tech")
        return TECH_TABLE[doc]
    _require_keys(doc, {"name", "r_wl", "r_bl"}, "tech")
    name = doc.get("name", "custom")
    base = TECH_TABLE.get(name)
    r_wl = doc.get("r_wl", base.r_wordline_unit if base else None)
    r_bl = doc.get("r_bl", base.r_bitline_unit if base else None)
    if r_wl is None or r_bl is None:
        raise ValidationError("custom tech needs r_wl and r_bl", field="tech")
    return TechNodeParams(name=name, r_wordline_unit=float(r_wl),
                          r_bitline_unit=float(r_bl))


_DISTURB_KEYS = {
    "vartheta0", "gamma0", "beta", "e_a", "k_boltzmann", "temperature",
    "a0", "l_fil", "q", "g0", "g_close", "pulse_width", "hrs_jump_to_max",
    "calibration",
}


def _disturb_from(doc: dict):
    """Returns (params_or_None, anchors). Raw parameters beat calibration."""
    _require_keys(doc, _DISTURB_KEYS, "disturb")
    anchors = DEFAULT_ANCHORS
    if "calibration" in doc:
        cal = doc["calibration"]
        _require_keys(cal, {"anchors"}, "disturb.calibration")
        raw = cal.get("anchors", [])
        if len(raw) != 2:
            raise ValidationError("calibration needs exactly two anchors",
                                  field="disturb.calibration")
        anchors = tuple((float(v), float(t)) for v, t in raw)
    overrides = {k: doc[k] for k in doc if k != "calibration"}
    if {"vartheta0", "gamma0"} <= set(overrides):
        return DisturbParams(**overrides), anchors
    if overrides:
        base = calibrate_hrs(*anchors)
        return replace(base, **overrides), anchors
    return None, anchors


_TOP_KEYS = {
    "tech", "crossbar_n", "v_drive", "r_cell_levels", "circuit_mode",
    "read_current", "disturb", "cost_model", "energy", "epsilon",
    "criticality_threshold", "exact_cap", "move_budget", "inference_period",
    "accuracy_window", "stress_accounting", "seed",
}

_COST_KEYS = {"channel_bandwidth", "bits_per_cell", "pv_latency",
              "pv_parallelism"}
_ENERGY_KEYS = {"energy_per_spike_pj", "energy_per_routing_pj",
                "switch_bandwidth_events_per_s"}


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ValidationError("config must be a JSON object")
    _require_keys(doc, _TOP_KEYS, "config")
    cfg = RunConfig()
    updates = {}
    if "tech" in doc:
        updates["tech"] = _tech_from(doc["tech"])
    if "crossbar_n" in doc:
        updates["crossbar_n"] = int(doc["crossbar_n"])
    if "v_drive" in doc:
        updates["v_drive"] = float(doc["v_drive"])
    if "r_cell_levels" in doc:
        updates["r_cell_levels"] = tuple(float(r)
                                         for r in doc["r_cell_levels"])
    if "circuit_mode" in doc:
        if doc["circuit_mode"] not in ("series", "nodal"):
            raise ValidationError("circuit_mode must be 'series' or 'nodal'",
                                  field="circuit_mode")
        updates["circuit_mode"] = doc["circuit_mode"]
    if "read_current" in doc:
        updates["read_current"] = float(doc["read_current"])
    if "disturb" in doc:
        params, anchors = _disturb_from(doc["disturb"])
        updates["disturb"] = params
        updates["anchors"] = anchors
    if "cost_model" in doc:
        _require_keys(doc["cost_model"], _COST_KEYS, "cost_model")
        updates["cost"] = ReprogramCostModel(**doc["cost_model"])
    if "energy" in doc:
        _require_keys(doc["energy"], _ENERGY_KEYS, "energy")
        updates["energy"] = EnergyConstants(**doc["energy"])
    if "epsilon" in doc:
        updates["epsilon"] = float(doc["epsilon"])
    if "criticality_threshold" in doc:
        updates["criticality_threshold"] = float(doc["criticality_threshold"])
    if "exact_cap" in doc:
        updates["exact_cap"] = int(doc["exact_cap"])
    if "move_budget" in doc and doc["move_budget"] is not None:
        updates["move_budget"] = int(doc["move_budget"])
    if "inference_period" in doc:
        updates["inference_period"] = float(doc["inference_period"])
    if "accuracy_window" in doc:
        updates["accuracy_window"] = int(doc["accuracy_window"])
    if "stress_accounting" in doc:
        if doc["stress_accounting"] not in ("mean", "actual"):
            raise ValidationError(
                "stress_accounting must be 'mean' or 'actual'",
                field="stress_accounting")
        updates["stress_accounting"] = doc["stress_accounting"]
    if "seed" in doc:
        updates["seed"] = int(doc["seed"])
    cfg = replace(cfg, **updates)
    if cfg.epsilon <= 0:
        raise ValidationError("epsilon must be > 0", field="epsilon")
    if not 0 <= cfg.criticality_threshold:
        raise ValidationError("criticality_threshold must be >= 0",
                              field="criticality_threshold")
    if cfg.inference_period <= 0:
        raise ValidationError("inference_period must be > 0",
                              field="inference_period")
    return cfg


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config file: {exc}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config does not parse as JSON: {exc}")
    return config_from_dict(doc)
