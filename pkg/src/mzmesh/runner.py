"""End-to-end experiment orchestration shared by the CLI and the test rig."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import calibration as cal
from . import compiler, metrology
from .compiler import CircuitSpec, Pair
from .emulator import EmuConfig, EmulatedChip, paper_detector_model
from .mesh import (
    DEFAULT_TAP_DB,
    MeshState,
    NoiseSpec,
    nominal_mesh,
    paper_noise_spec,
    perturb,
    uniform_loss_mesh,
)


def build_mesh(noise: NoiseSpec | None, seed: int, n_modes: int = 8) -> MeshState:
    """Sample a chip's optical state: the nominal chip when noise is None,
    otherwise the perturbed uniform-loss chip."""
    if noise is None:
        return nominal_mesh(n_modes)
    base_db = noise.loss_db_mean if noise.loss_db_mean is not None else DEFAULT_TAP_DB
    tap_db = noise.tap_db if noise.tap_db is not None else DEFAULT_TAP_DB
    base = uniform_loss_mesh(n_modes, loss_db_per_depth=max(base_db, tap_db), tap_db=tap_db)
    return perturb(base, noise, seed)


def paper_emu_config(seed: int, offset_scale: float = 1.0) -> EmuConfig:
    return EmuConfig(detector=paper_detector_model(), offset_scale=offset_scale, seed=seed)


@dataclass
class CircuitResult:
    name: str
    links: list[metrology.LinkReport]
    estimate: metrology.UnitaryEstimate
    fidelity: float

    def link_fidelities(self) -> list[float]:
        out = []
        for r in self.links:
            out.extend([r.f_plus, r.f_minus])
        return out


def run_circuit(
    chip: EmulatedChip,
    record: cal.CalibrationRecord,
    spec: CircuitSpec,
    sweep_seed: int | None = None,
) -> CircuitResult:
    """Calibrate a circuit's groups and Hadamards, program it, sweep every
    pair and reconstruct the unitary magnitudes."""
    missing = [n for n in spec.gates if n not in record.nodes]
    if missing:
        from .mesh import node_label

        raise cal.CalibrationError(
            f"uncalibrated nodes: {', '.join(node_label(n) for n in sorted(missing))}"
        )
    cal.calibrate_circuit(chip, record, spec)
    cal.program_circuit(chip, record, spec)
    traces: dict[Pair, metrology.PhaseSweepTrace] = {}
    for pair in spec.matching:
        traces[pair] = metrology.run_phase_sweep(chip, record, spec, pair, seed=sweep_seed)
    reports = [metrology.LinkReport.from_trace(traces[p]) for p in spec.matching]
    cal.program_circuit(chip, record, spec)
    estimate = metrology.reconstruct_unitary(chip, record, spec, traces)
    estimate.fidelity = metrology.unitary_fidelity(
        compiler.ideal_circuit_magnitudes(spec), estimate.magnitudes
    )
    return CircuitResult(
        name=spec.name, links=reports, estimate=estimate, fidelity=estimate.fidelity
    )


@dataclass
class ChipSummary:
    seed: int
    link_f: list[float] = field(default_factory=list)
    unitary_f: dict[str, float] = field(default_factory=dict)
    group_extinctions_db: list[float] = field(default_factory=list)
    failures: int = 0

    @property
    def min_link_f(self) -> float:
        return min(self.link_f) if self.link_f else math.nan

    @property
    def mean_link_f(self) -> float:
        return float(np.mean(self.link_f)) if self.link_f else math.nan


def run_chip(
    mesh_state: MeshState,
    emu: EmuConfig,
    circuit_names=("1", "2", "3", "4"),
    circuits: dict[str, CircuitSpec] | None = None,
) -> tuple[ChipSummary, cal.CalibrationRecord, list[CircuitResult]]:
    """Full bring-up and measurement of one chip across the given circuits."""
    chip = EmulatedChip(mesh_state, emu)
    record = cal.calibrate_full_mesh(chip)
    circuits = circuits or compiler.ohqe_circuits()
    summary = ChipSummary(seed=emu.seed, failures=len(record.failures))
    results = []
    for name in circuit_names:
        result = run_circuit(chip, record, circuits[name])
        results.append(result)
        summary.link_f.extend(result.link_fidelities())
        summary.unitary_f[name] = result.fidelity
    summary.group_extinctions_db = [g.extinction_db for g in record.groups.values()]
    return summary, record, results


def monte_carlo(
    trials: int,
    seed: int = 0,
    noise: NoiseSpec | None = None,
    circuit_names=("1", "2", "3", "4"),
    offset_scale: float = 1.0,
) -> dict:
    """Seeded ensemble of chips through calibration and the default circuits."""
    noise = noise if noise is not None else paper_noise_spec()
    circuits = compiler.ohqe_circuits()
    chips = []
    for t in range(trials):
        chip_seed = seed + t
        mesh_state = build_mesh(noise, seed=chip_seed)
        emu = paper_emu_config(seed=chip_seed, offset_scale=offset_scale)
        summary, _, _ = run_chip(mesh_state, emu, circuit_names, circuits)
        chips.append(summary)
    link_all = [f for c in chips for f in c.link_f]
    unitary_all = [f for c in chips for f in c.unitary_f.values()]
    ext_all = [e for c in chips for e in c.group_extinctions_db]
    return {
        "trials": trials,
        "seed": seed,
        "link_f_mean": float(np.mean(link_all)),
        "link_f_std": float(np.std(link_all)),
        "link_f_min": float(np.min(link_all)),
        "per_chip_min_f": [c.min_link_f for c in chips],
        "unitary_f_min": float(np.min(unitary_all)),
        "unitary_f_max": float(np.max(unitary_all)),
        "unitary_f": {
            name: [c.unitary_f[name] for c in chips] for name in circuit_names
        },
        "group_extinction_db": ext_all,
        "chips": [
            {
                "seed": c.seed,
                "link_f": c.link_f,
                "unitary_f": c.unitary_f,
                "failures": c.failures,
            }
            for c in chips
        ],
    }
