"""Run reports: quadrature values, empirical rates and check verdicts."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .equilibrium import RateEstimate, estimate_atypical_rate
from .grid import RegionSpec


@dataclass
class Check:
    name: str
    passed: bool
    value: Any
    threshold: Any
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "value": _plain(self.value),
                "threshold": _plain(self.threshold), "detail": self.detail}


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    expected: np.ndarray  # bin probabilities under |psi|^2
    axis: int = 0  # configuration coordinate the final samples are binned along


@dataclass
class RunReport:
    scenario: dict
    quadrature: dict = field(default_factory=dict)
    empirical: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    regions: dict = field(default_factory=dict)
    histograms: dict = field(default_factory=dict)
    ensemble: Any = None
    fields: dict = field(default_factory=dict)

    def add_check(self, name: str, passed: bool, value, threshold, detail: str = "") -> Check:
        if any(c.name == name for c in self.checks):
            raise ValueError(f"check {name!r} recorded twice")
        c = Check(name, bool(passed), value, threshold, detail)
        self.checks.append(c)
        return c

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add_rate(self, name: str, configs, event) -> RateEstimate:
        """Record the frequency of ``event`` (a region or a predicate) under ``name``."""
        est = estimate_atypical_rate(configs, event)
        if isinstance(event, RegionSpec):
            self.regions[event.label] = event.to_dict()
            self.empirical[name] = {"region": event.label, **est.to_dict()}
        else:
            self.empirical[name] = {"event": getattr(event, "label", name), **est.to_dict()}
        return est

    def rate(self, name: str) -> RateEstimate:
        e = self.empirical[name]
        return RateEstimate(e["count"], e["n"], e["rate"], e["wilson95"][0], e["wilson95"][1])

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "scenario": _plain(self.scenario),
            "quadrature": _plain(self.quadrature),
            "empirical": _plain(self.empirical),
            "checks": [c.to_dict() for c in self.checks],
            "regions": _plain(self.regions),
            "diagnostics": _plain(self.diagnostics),
        }
        if include_timing:
            d["timing"] = _plain(self.timing)
        return d


def _plain(v):
    """Convert numpy and complex values into JSON-compatible Python objects."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (complex, np.complexfloating)):
        return [_plain(v.real), _plain(v.imag)]
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v
