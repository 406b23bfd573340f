"""Run configuration: defaults, JSON file overlay, validation.

The configuration is a nested tree with sections for the quantum-defect
table, EIT parameters, cloud geometry, the Monte Carlo experiment and
analysis options, plus a free-form metadata section carried through to
run manifests. Unknown keys anywhere outside metadata are rejected, and
section values are validated by constructing the owning dataclasses, so
errors carry a path like "experiment.eta_det: ...".
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from typing import Any, Optional

from .eit import CloudParams, EitParams
from .mc import ExperimentConfig
from .presets import histogram_config
from .rydberg import QuantumDefectTable


class ConfigError(ValueError):
    """Configuration file or option rejected; message carries the path."""


_DEFAULT_EIT = {
    # calibrated so the spectrum shows T(0) = 0.49 and a 1.9 MHz window at od 5
    "od": 5.0,
    "omega_c": 5.236761625644434,
    "gamma_r": 0.3968371585534542,
    "gamma_e": 5.75,
    "delta_c": 0.0,
}

_DEFAULT_CLOUD = {
    "atom_number": 1.5e5,
    "temperature_uk": 0.33,
    "trap_freqs_hz": [136.0, 37.0, 37.0],
    "wavelength_nm": 795.0,
    "beam_waist_um": 8.0,
    "cross_section_prefactor": 0.5,
}

_DEFAULT_ANALYSIS = {
    "n_cut": 9.5,
    "cut_scan": [7.5, 12.5],
    "fit_start_us": 0.0,
}

# setup numbers carried for provenance only, not consumed by the physics
_DEFAULT_METADATA = {
    "magnetic_field_g": 1.1,
    "control_powers_mw": [17.0, 10.0],
    "beam_waists_um": [8.0, 21.0, 12.0],
    "control_wavelength_nm": 474.0,
    "cycles_per_sample": 100,
}


def default_config_dict() -> dict:
    return {
        "seed": 20240901,
        "out_dir": ".",
        "defects_file": None,
        "eit": dict(_DEFAULT_EIT),
        "cloud": copy.deepcopy(_DEFAULT_CLOUD),
        "experiment": histogram_config().as_dict(),
        "analysis": copy.deepcopy(_DEFAULT_ANALYSIS),
        "metadata": copy.deepcopy(_DEFAULT_METADATA),
    }


def _merge(base: dict, overlay: Any, path: str) -> None:
    if not isinstance(overlay, dict):
        raise ConfigError(f"{path or 'top level'}: expected an object")
    for key, value in overlay.items():
        if key not in base:
            raise ConfigError(f"{path + key}: unknown key")
        if isinstance(base[key], dict) and key != "metadata":
            _merge(base[key], value, path + key + ".")
        else:
            base[key] = value


@dataclass
class RunConfig:
    """Validated configuration tree."""

    seed: int
    out_dir: str
    defects_file: Optional[str]
    eit: EitParams
    cloud: CloudParams
    experiment: ExperimentConfig
    analysis: dict
    metadata: dict
    raw: dict

    def defect_table(self) -> QuantumDefectTable:
        if self.defects_file:
            return QuantumDefectTable.from_file(self.defects_file)
        return QuantumDefectTable.default()

    def sha256(self) -> str:
        return hashlib.sha256(canonical_json(self.raw).encode()).hexdigest()


def canonical_json(tree: dict) -> str:
    return json.dumps(tree, sort_keys=True, separators=(",", ":"))


def _build_section(cls, values: dict, path: str):
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_config(path: Optional[str] = None,
                overrides: Optional[dict] = None) -> RunConfig:
    """Defaults, then the JSON file at path, then explicit overrides."""
    tree = default_config_dict()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        _merge(tree, data, "")
    if overrides:
        _merge(tree, overrides, "")
    return validate_config(tree)


def validate_config(tree: dict) -> RunConfig:
    tree = copy.deepcopy(tree)
    if not isinstance(tree.get("seed"), int):
        raise ConfigError("seed: expected an integer")
    if not isinstance(tree.get("out_dir"), str):
        raise ConfigError("out_dir: expected a string")
    defects = tree.get("defects_file")
    if defects is not None and not isinstance(defects, str):
        raise ConfigError("defects_file: expected a path or null")

    cloud_values = dict(tree["cloud"])
    freqs = cloud_values.get("trap_freqs_hz")
    if not (isinstance(freqs, (list, tuple)) and len(freqs) == 3):
        raise ConfigError("cloud.trap_freqs_hz: expected three frequencies")
    cloud_values["trap_freqs_hz"] = tuple(float(f) for f in freqs)

    eit = _build_section(EitParams, tree["eit"], "eit")
    cloud = _build_section(CloudParams, cloud_values, "cloud")
    experiment = _build_section(ExperimentConfig, tree["experiment"], "experiment")

    analysis = tree["analysis"]
    for key in ("n_cut",):
        if not isinstance(analysis.get(key), (int, float)):
            raise ConfigError(f"analysis.{key}: expected a number")
    scan = analysis.get("cut_scan")
    if not (isinstance(scan, (list, tuple)) and len(scan) == 2):
        raise ConfigError("analysis.cut_scan: expected [low, high]")

    return RunConfig(seed=tree["seed"], out_dir=tree["out_dir"],
                     defects_file=defects, eit=eit, cloud=cloud,
                     experiment=experiment, analysis=analysis,
                     metadata=tree.get("metadata", {}), raw=tree)
