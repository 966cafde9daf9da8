"""Named scenarios; each regenerates one acceptance artifact."""
from dataclasses import dataclass, field, replace
from typing import Optional

from .regimes import BandwidthSchedule, DimensionSchedule, geometric_grid

SEED = 20240611


@dataclass(frozen=True)
class ScanPreset:
    name: str
    schedule: object
    target: str
    sigma_sq: float
    d: Optional[int] = None
    grid: Optional[tuple] = None
    tau: float = 1.0


@dataclass(frozen=True)
class SimulatePreset:
    name: str
    d: int
    ms: tuple
    schedule: BandwidthSchedule
    sigma_sq: float
    target: float  # constant value
    n_trials: int = 32
    n_test: int = 500
    seed: int = SEED


_M_GRID = tuple(geometric_grid(64, 7))  # 64 .. 4096

SCAN_PRESETS = {
    p.name: p for p in (
        ScanPreset("theorem1-case1", BandwidthSchedule("inverse_log"), "constant:1", 1.0, 6, _M_GRID),
        ScanPreset("theorem1-case2", BandwidthSchedule("fixed", 1.0), "constant:1", 1.0, 6, _M_GRID),
        ScanPreset("theorem1-case3", BandwidthSchedule("critical", 2.0), "constant:1", 1.0, 6, _M_GRID),
        ScanPreset("corollary1", DimensionSchedule("polynomial", (16, 64, 256, 1024), alpha=1.5),
                   "constant:1", 1.0),
        ScanPreset("corollary1-alpha1", DimensionSchedule("polynomial", (16, 64, 256, 1024), alpha=1.0),
                   "constant:1", 1.0),
        ScanPreset("corollary2", DimensionSchedule("logarithmic", tuple(range(10, 21))), "zero", 1.0),
        ScanPreset("corollary3", DimensionSchedule("subpolynomial", (1, 2)), "constant:1", 1.0),
    )
}

SIMULATE_PRESETS = {
    p.name: p for p in (
        SimulatePreset("appendixA-a", 6, (64, 256, 1024), BandwidthSchedule("inverse_log"), 1.0, 10.0),
        SimulatePreset("appendixA-b", 4, (64, 256, 1024), BandwidthSchedule("fixed", 1.0), 10.0, 10.0),
        SimulatePreset("appendixA-c", 6, (64, 256, 1024), BandwidthSchedule("critical", 2.0), 100.0, 10.0),
        SimulatePreset("agreement-d4", 4, (64, 128, 256), BandwidthSchedule("fixed", 1.0), 1.0, 1.0),
        SimulatePreset("agreement-d6", 6, (64, 128, 256), BandwidthSchedule("fixed", 1.0), 1.0, 1.0),
    )
}


def scan_preset(name: str, l_max: Optional[int] = None) -> ScanPreset:
    try:
        p = SCAN_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown scan preset {name!r}; choose from {sorted(SCAN_PRESETS)}") from None
    if l_max is not None:
        if not isinstance(p.schedule, DimensionSchedule) or p.schedule.kind != "subpolynomial":
            raise ValueError("--l-max applies to the corollary3 preset only")
        if l_max < 1:
            raise ValueError("l_max must be >= 1")
        p = replace(p, schedule=replace(p.schedule, values=tuple(range(1, l_max + 1))))
    return p


def simulate_preset(name: str) -> SimulatePreset:
    try:
        return SIMULATE_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown simulate preset {name!r}; choose from {sorted(SIMULATE_PRESETS)}") from None
