"""Item-size sweep: predicted versus simulated speed-up of a finer placement."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import yaml

from .lang import Program, parse_program
from .perfmodel import PerfParams, TlCurve
from .pipeline import Options, SynthesisSession, default_blocks, predicted_speedup, run
from .simulator import Workload, measure_tl_curve, profile, simulate

# item sizes in bytes, 32 B to 64 KiB
DEFAULT_SIZES = (32, 64, 128, 256, 512, 1024, 2048, 4096, 8192, 16384, 32768, 65536)


@dataclass
class SweepPoint:
    size: float
    copy_cost: float
    predicted: float      # PerfModel(coarse) / PerfModel(fine)
    measured: float       # simulated coarse time / simulated fine time

    @property
    def sign_agrees(self) -> bool:
        return (self.predicted > 1.0) == (self.measured > 1.0)

    @property
    def relative_error(self) -> float:
        return abs(self.predicted - self.measured) / self.measured


def load_workload(path) -> Workload:
    with open(path) as fh:
        return Workload.from_dict(yaml.safe_load(fh) or {})


def copy_cost(size: float, per_kib: float = 1.0, base: float = 0.05) -> float:
    """Time to copy an item of ``size`` bytes."""
    return base + per_kib * size / 1024.0


def with_costs(wl: Workload, locs: Iterable[str], cost: float) -> Workload:
    costs = dict(wl.costs)
    for loc in locs:
        costs[loc] = cost
    return dataclasses.replace(wl, costs=costs)


def mean_time(program: Program, wl: Workload, seed: int, runs: int) -> float:
    return sum(simulate(program, wl, seed + r).mean_thread_time for r in range(runs)) / runs


def sweep(program: Program, workload: Workload, scaled: Sequence[str],
          sizes: Sequence[float] = DEFAULT_SIZES, seed: int = 0, runs: int = 3,
          coarse: Optional[SynthesisSession] = None, fine: Optional[SynthesisSession] = None,
          tl: Optional[TlCurve] = None) -> List[SweepPoint]:
    """Compare the coarse placement with the finest single-lock placement
    while the cost of the ``scaled`` statements follows the item size."""
    coarse = coarse or run(program, Options(objective="coarse", locks=1))
    fine = fine or run(program, Options(objective="fine", locks=1))
    coarse_prog = parse_program(coarse.patched_text)
    fine_prog = parse_program(fine.patched_text)
    critical = sorted(coarse.placement.protected_locations)
    blocks = default_blocks(program)
    if tl is None:
        tl = measure_tl_curve(workload.copies * len(program.threads), seed, workload)
    out = []
    for size in sizes:
        c = copy_cost(size)
        wl = with_costs(workload, scaled, c)
        params: PerfParams = profile(coarse_prog, wl, critical, seed=seed, runs=runs,
                                     blocks=blocks, tl=tl)
        predicted = predicted_speedup(params, fine.placement, coarse.placement)
        measured = mean_time(coarse_prog, wl, seed + 1000, runs) / mean_time(fine_prog, wl, seed + 1000, runs)
        out.append(SweepPoint(size, c, predicted, measured))
    return out


def sweep_csv(points: Sequence[SweepPoint]) -> str:
    rows = ["size,copy_cost,predicted_speedup,measured_speedup"]
    rows += [f"{p.size:g},{p.copy_cost:.6g},{p.predicted:.6f},{p.measured:.6f}" for p in points]
    return "\n".join(rows) + "\n"


def corpus_path(name: str) -> Path:
    return Path(__file__).parent / "corpus" / name
