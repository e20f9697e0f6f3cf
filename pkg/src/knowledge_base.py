"""
Reference knowledge base for PBGLab.
Contains the measured constants the simulations are compared against, the
crystal presets that were built and tested, and reference scenarios used by
calibration and the test suite.
"""
from typing import List, Dict, Any, Optional


# Acrylic in the 8-14 GHz band
ACRYLIC_INDEX = 1.61
# Index recovered from the acrylic-sheet phase slopes
MEASURED_ACRYLIC_INDEX = 1.58

# 1/2-inch outer diameter rods
ROD_OUTER_RADIUS = 0.5 * 12.7e-3

# VNA sweep: 8 to 14 GHz in 15 MHz increments
SWEEP_START_HZ = 8.0e9
SWEEP_STOP_HZ = 14.0e9
SWEEP_STEP_HZ = 15.0e6

MAX_LAYERS = 18
GAP_CENTER_HZ = 11.0e9
# Allowed offset of the simulated gap center given the rod-model uncertainty
GAP_CENTER_TOLERANCE_HZ = 1.5e9

# Calibration sheet thicknesses, doubling from 10 mm
CALIBRATION_THICKNESSES = [10e-3, 20e-3, 40e-3]
# Relative index error accepted in calibration (1.58 vs 1.61 is about 2%)
CALIBRATION_TOLERANCE = 0.02


# Crystal sets that were fabricated and measured
CRYSTAL_PRESETS = [
    {
        "preset_id": "aff060",
        "name": "Hollow acrylic rods, AFF 0.60",
        "aff": 0.60,
        "rod_model": "Tube",
        "outer_radius": ROD_OUTER_RADIUS,
        "rod_index": ACRYLIC_INDEX,
        "layers": list(range(1, MAX_LAYERS + 1)),
        "notes": "strong bandgap near 11 GHz for 18 layers",
    },
    {
        "preset_id": "aff032",
        "name": "Hollow acrylic rods, AFF 0.32",
        "aff": 0.32,
        "rod_model": "Tube",
        "outer_radius": ROD_OUTER_RADIUS,
        "rod_index": ACRYLIC_INDEX,
        "layers": list(range(1, MAX_LAYERS + 1)),
        "notes": "narrower and shallower gap, slightly shifted center",
    },
]


# Reference scenarios: each carries a run configuration and the expected outcome
REFERENCE_SCENARIOS = [
    {
        "scenario_id": "ref_001",
        "name": "Minimal crystal run",
        "config": {"aff": 0.60, "layers": 18, "pol": "TM"},
        "expectation": "fully defaulted run description, 401 sweep points",
    },
    {
        "scenario_id": "ref_002",
        "name": "Bandgap, AFF 0.60, 18 layers",
        "config": {"aff": 0.60, "layers": 18, "pol": ["TE", "TM"]},
        "expectation": "gap of at least 10 dB containing 11 GHz for both polarizations",
    },
    {
        "scenario_id": "ref_003",
        "name": "Layer campaign, AFF 0.60, TM",
        "config": {"aff": 0.60, "layers": "1..18", "pol": "TM"},
        "expectation": "18 normalized spectra sharing one reference; superluminal segment inside the gap",
    },
    {
        "scenario_id": "ref_004",
        "name": "AFF comparison",
        "config": {"aff": [0.60, 0.32], "layers": 18, "pol": ["TE", "TM"]},
        "expectation": "AFF 0.32 gap narrower and shallower than AFF 0.60",
    },
    {
        "scenario_id": "ref_005",
        "name": "Polarization asymmetry at small N",
        "config": {"aff": 0.60, "layers": 6, "pol": ["TE", "TM"]},
        "expectation": "TM gap deeper than TE gap",
    },
    {
        "scenario_id": "ref_006",
        "name": "Acrylic sheet calibration",
        "config": {"calibration": {"thicknesses": CALIBRATION_THICKNESSES}},
        "expectation": f"fitted index within {CALIBRATION_TOLERANCE:.0%} of {ACRYLIC_INDEX}",
    },
]


def get_preset(preset_id: str) -> Optional[Dict[str, Any]]:
    """Get a crystal preset by ID."""
    for preset in CRYSTAL_PRESETS:
        if preset["preset_id"] == preset_id:
            return preset
    return None


def get_scenario(scenario_id: str) -> Optional[Dict[str, Any]]:
    """Get a reference scenario by ID."""
    for scenario in REFERENCE_SCENARIOS:
        if scenario["scenario_id"] == scenario_id:
            return scenario
    return None


def get_all_scenarios() -> List[Dict[str, Any]]:
    return REFERENCE_SCENARIOS


__all__ = [
    "ACRYLIC_INDEX",
    "MEASURED_ACRYLIC_INDEX",
    "ROD_OUTER_RADIUS",
    "SWEEP_START_HZ",
    "SWEEP_STOP_HZ",
    "SWEEP_STEP_HZ",
    "MAX_LAYERS",
    "GAP_CENTER_HZ",
    "GAP_CENTER_TOLERANCE_HZ",
    "CALIBRATION_THICKNESSES",
    "CALIBRATION_TOLERANCE",
    "CRYSTAL_PRESETS",
    "REFERENCE_SCENARIOS",
    "get_preset",
    "get_scenario",
    "get_all_scenarios",
]
