"""Pilot-wave (de Broglie-Bohm) trajectory simulation of quantum measurements."""
from __future__ import annotations

from .grid import Axis, GridField, GridSpec, RegionSpec, SeparableField
from .propagator import CouplingSchedule, HamiltonianSpec, evolve
from .guidance import integrate_ensemble
from .equilibrium import EnsembleSpec, sample_initial
from .experiments import PRESETS, get_preset
from .scenario import parse_scenario

__version__ = "0.1.0"

__all__ = ["Axis", "GridField", "GridSpec", "RegionSpec", "SeparableField", "CouplingSchedule",
           "HamiltonianSpec", "evolve", "integrate_ensemble", "EnsembleSpec", "sample_initial",
           "PRESETS", "get_preset", "parse_scenario"]
