"""Physical model of MZIs and the rectangular Mach-Zehnder mesh.

Conventions used throughout the package
---------------------------------------

A single Mach-Zehnder interferometer (MZI) couples two adjacent waveguides
and is built from, in the order light traverses them:

    external phase shifters (phi1 top, phi2 bottom)
    input directional coupler  C(eta_in)
    internal phase shifters (theta1 top, theta2 bottom)
    per-arm amplitude factors  (arm_loss_top, arm_loss_bot)
    output directional coupler C(eta_out)
    pick-off tap (amplitude factor ``tap_loss`` on both ports; the removed
    power fraction ``1 - tap_loss**2`` feeds the per-node power monitors)

with the coupler matrix

    C(eta) = amp_loss * [[sqrt(eta),        1j*sqrt(1-eta)],
                         [1j*sqrt(1-eta),   sqrt(eta)]]

For ideal 50:50 couplers the magnitude response depends only on
``theta1 - theta2``: the MZI is in the *bar* state (|U| = I) at
``theta1 - theta2 = pi`` and in the *cross* state (|U| = X) at
``theta1 - theta2 = 0``.  A single MZI with coupler power fractions
``eta`` on both couplers has a cross-state bar-port leakage floor of
``(2*eta - 1)**2``.

Mesh layout (``U_col_row`` labelling): an ``N``-mode mesh has ``N``
columns indexed ``0 .. N-1``.  Light enters at column ``N-1`` and exits
at column ``0``.  Using 0-based ports, an MZI at ``(col, row)`` couples

    even col:  ports (2*row,     2*row + 1)      -> N/2 nodes
    odd  col:  ports (2*row + 1, 2*row + 2)      -> N/2 - 1 nodes

For ``N = 8`` this gives the 28-node brickwork of the 8x8 chip; column 0
hosts the four output-pair nodes used as Hadamard gates.  Ports that a
column does not couple pass through a dummy waveguide block with its own
amplitude factor, so that every route sees the same nominal per-depth
loss.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

logger = logging.getLogger(__name__)

MESH_SCHEMA = "mesh-v1"

# Default pick-off sampling: -0.5 dB of power removed per depth.
DEFAULT_TAP_DB = 0.5


def db_to_amplitude(loss_db: float) -> float:
    """Amplitude transmission factor for a power loss given in (positive) dB."""
    return 10.0 ** (-loss_db / 20.0)


def amplitude_to_db(amp: float) -> float:
    """Power loss in dB for an amplitude transmission factor."""
    return -20.0 * math.log10(amp)


@dataclass(frozen=True)
class CouplerParams:
    """Directional coupler: bar-path power fraction and amplitude transmission."""

    eta: float = 0.5
    amp_loss: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if not 0.0 < self.amp_loss <= 1.0:
            raise ValueError(f"amp_loss must lie in (0, 1], got {self.amp_loss}")

    def matrix(self) -> np.ndarray:
        s = math.sqrt(self.eta)
        t = math.sqrt(1.0 - self.eta)
        return self.amp_loss * np.array([[s, 1j * t], [1j * t, s]], dtype=complex)


@dataclass
class MziParams:
    """Per-node physical parameters: four phases, two couplers, losses, tap."""

    theta1: float = 0.0
    theta2: float = 0.0
    phi1: float = 0.0
    phi2: float = 0.0
    c_in: CouplerParams = field(default_factory=CouplerParams)
    c_out: CouplerParams = field(default_factory=CouplerParams)
    arm_loss_top: float = 1.0
    arm_loss_bot: float = 1.0
    tap_loss: float = 1.0

    def __post_init__(self):
        for name in ("arm_loss_top", "arm_loss_bot", "tap_loss"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        for name in ("theta1", "theta2", "phi1", "phi2"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def theta_diff(self) -> float:
        return self.theta1 - self.theta2

    @property
    def phi_diff(self) -> float:
        return self.phi1 - self.phi2

    @property
    def tap_fraction(self) -> float:
        """Power fraction removed by the pick-off tap (feeds the monitors)."""
        return 1.0 - self.tap_loss**2


Node = tuple[int, int]  # (col, row)


def node_label(node: Node) -> str:
    return f"U_{node[0]}_{node[1]}"


def parse_node_label(label: str) -> Node:
    parts = label.split("_")
    return (int(parts[1]), int(parts[2]))


@dataclass(frozen=True)
class MeshTopology:
    """Node layout of a rectangular mesh with inputs at the highest column."""

    n_modes: int = 8

    def __post_init__(self):
        if self.n_modes < 2 or self.n_modes % 2:
            raise ValueError("n_modes must be an even integer >= 2")

    @property
    def n_columns(self) -> int:
        return self.n_modes

    def column_rows(self, col: int) -> range:
        if col % 2 == 0:
            return range(self.n_modes // 2)
        return range(self.n_modes // 2 - 1)

    def nodes(self) -> list[Node]:
        """All nodes, ordered by (col, row) ascending."""
        return [(c, r) for c in range(self.n_columns) for r in self.column_rows(c)]

    def node_ports(self, node: Node) -> tuple[int, int]:
        """0-based (top, bottom) ports coupled by ``node``."""
        col, row = node
        if node not in set(self.nodes()):
            raise ValueError(f"no node {node_label(node)} in a {self.n_modes}-mode mesh")
        if col % 2 == 0:
            return (2 * row, 2 * row + 1)
        return (2 * row + 1, 2 * row + 2)

    def node_at(self, col: int, port: int) -> Node | None:
        """Node in ``col`` coupling 0-based ``port``, or None if it passes through."""
        if col % 2 == 0:
            row = port // 2
        else:
            if port == 0 or port == self.n_modes - 1:
                return None
            row = (port - 1) // 2
        if row in self.column_rows(col):
            return (col, row)
        return None

    def input_columns(self) -> tuple[int, int]:
        """The two input-side columns whose external shifters set input phases."""
        return (self.n_columns - 1, self.n_columns - 2)


@dataclass
class MeshState:
    """A fully parameterised chip: topology plus every node's physical state.

    ``passthrough_loss`` holds the dummy-block amplitude factor of each
    uncoupled (col, port) cell so that straight-through routes see the same
    per-depth loss as routes through MZIs.  ``monitor_gains`` are the two
    grating-monitor efficiencies per node; ``output_gains`` the per-channel
    collection efficiencies at the chip outputs.
    """

    topology: MeshTopology
    params: dict[Node, MziParams]
    monitor_gains: dict[Node, tuple[float, float]] = field(default_factory=dict)
    output_gains: np.ndarray | None = None
    passthrough_loss: dict[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        nodes = self.topology.nodes()
        if set(self.params) != set(nodes):
            raise ValueError("params must cover every topology node exactly once")
        for n in nodes:
            self.monitor_gains.setdefault(n, (1.0, 1.0))
        for n, (g1, g2) in self.monitor_gains.items():
            if g1 <= 0 or g2 <= 0:
                raise ValueError(f"monitor gains must be positive at {node_label(n)}")
        if self.output_gains is None:
            self.output_gains = np.ones(self.topology.n_modes)
        else:
            self.output_gains = np.asarray(self.output_gains, dtype=float)
            if self.output_gains.shape != (self.topology.n_modes,):
                raise ValueError("output_gains must have one entry per mode")
            if np.any(self.output_gains <= 0):
                raise ValueError("output_gains must be positive")

    def copy(self) -> "MeshState":
        return MeshState(
            topology=self.topology,
            params={n: replace(p) for n, p in self.params.items()},
            monitor_gains=dict(self.monitor_gains),
            output_gains=self.output_gains.copy(),
            passthrough_loss=dict(self.passthrough_loss),
        )


def ideal_mesh(n_modes: int = 8) -> MeshState:
    """Lossless mesh with perfect 50:50 couplers and all phases zero."""
    topo = MeshTopology(n_modes)
    return MeshState(topology=topo, params={n: MziParams() for n in topo.nodes()})


def nominal_mesh(n_modes: int = 8, tap_db: float = DEFAULT_TAP_DB) -> MeshState:
    """Zero-imperfection chip: perfect couplers, no excess loss, but the
    designed pick-off taps (so the power monitors see light)."""
    return uniform_loss_mesh(n_modes, loss_db_per_depth=tap_db, tap_db=tap_db)


def mzi_transfer(p: MziParams) -> np.ndarray:
    """2x2 transfer matrix of one MZI (external phases applied first)."""
    ext = np.diag([np.exp(1j * p.phi1), np.exp(1j * p.phi2)]).astype(complex)
    inner = np.diag([np.exp(1j * p.theta1), np.exp(1j * p.theta2)]).astype(complex)
    arms = np.diag([p.arm_loss_top, p.arm_loss_bot]).astype(complex)
    return p.tap_loss * (p.c_out.matrix() @ arms @ inner @ p.c_in.matrix() @ ext)


def ideal_block(theta_diff: float, phi_diff: float) -> np.ndarray:
    """Lossless MZI block with zero common phases, in differential form."""
    return mzi_transfer(
        MziParams(
            theta1=theta_diff / 2.0,
            theta2=-theta_diff / 2.0,
            phi1=phi_diff / 2.0,
            phi2=-phi_diff / 2.0,
        )
    )


class CompiledMesh:
    """Vectorised propagation engine for a fixed topology and loss set.

    Phases are supplied per call, so one compiled mesh serves arbitrarily
    many voltage frames; all per-sample work is numpy array arithmetic and
    supports a leading batch axis.
    """

    def __init__(self, state: MeshState):
        topo = state.topology
        self.topology = topo
        self.n = topo.n_modes
        self.nodes = topo.nodes()
        self.node_index = {n: i for i, n in enumerate(self.nodes)}
        self.output_gains = state.output_gains.copy()

        n_nodes = len(self.nodes)
        self.eta_in = np.empty(n_nodes)
        self.eta_out = np.empty(n_nodes)
        self.a_in = np.empty(n_nodes)
        self.a_out = np.empty(n_nodes)
        self.arm_top = np.empty(n_nodes)
        self.arm_bot = np.empty(n_nodes)
        self.tap_amp = np.empty(n_nodes)
        self.mon_gain = np.empty((n_nodes, 2))
        for i, node in enumerate(self.nodes):
            p = state.params[node]
            self.eta_in[i] = p.c_in.eta
            self.eta_out[i] = p.c_out.eta
            self.a_in[i] = p.c_in.amp_loss
            self.a_out[i] = p.c_out.amp_loss
            self.arm_top[i] = p.arm_loss_top
            self.arm_bot[i] = p.arm_loss_bot
            self.tap_amp[i] = p.tap_loss
            self.mon_gain[i] = state.monitor_gains[node]
        # coupler factors folded with their amplitude losses
        self.s_in = self.a_in * np.sqrt(self.eta_in)
        self.t_in = self.a_in * np.sqrt(1.0 - self.eta_in)
        self.s_out = self.a_out * np.sqrt(self.eta_out)
        self.t_out = self.a_out * np.sqrt(1.0 - self.eta_out)
        self.tap_frac = 1.0 - self.tap_amp**2

        self.columns = []
        for col in reversed(range(topo.n_columns)):  # input column first
            idx = np.array([self.node_index[(col, r)] for r in topo.column_rows(col)], dtype=int)
            top = np.array([topo.node_ports((col, r))[0] for r in topo.column_rows(col)], dtype=int)
            bot = top + 1
            coupled = set(top) | set(bot)
            pt_ports = np.array([p for p in range(self.n) if p not in coupled], dtype=int)
            pt_amp = np.array(
                [state.passthrough_loss.get((col, p), 1.0) for p in pt_ports], dtype=float
            )
            self.columns.append((col, idx, top, bot, pt_ports, pt_amp))

        self.base_theta1 = np.array([state.params[n].theta1 for n in self.nodes])
        self.base_theta2 = np.array([state.params[n].theta2 for n in self.nodes])
        self.base_phi1 = np.array([state.params[n].phi1 for n in self.nodes])
        self.base_phi2 = np.array([state.params[n].phi2 for n in self.nodes])

    def propagate(
        self,
        inputs: np.ndarray,
        theta1: np.ndarray | None = None,
        theta2: np.ndarray | None = None,
        phi1: np.ndarray | None = None,
        phi2: np.ndarray | None = None,
        want_taps: bool = False,
        want_audit: bool = False,
    ):
        """Propagate field amplitudes through the mesh, input column first.

        ``inputs`` has shape (n,) or (batch, n); phase arrays, when given,
        have shape (n_nodes,) or (batch, n_nodes).  Returns ``(fields, taps,
        dissipated)`` where ``taps`` holds the monitor-side tapped powers
        (gain *not* applied) of shape (batch, n_nodes, 2) and ``dissipated``
        the per-sample power lost to coupler/arm attenuation.
        """
        v = np.atleast_2d(np.asarray(inputs, dtype=complex)).copy()
        batch = v.shape[0]
        if v.shape[1] != self.n:
            raise ValueError(f"input vector length {v.shape[1]} != n_modes {self.n}")

        def norm(x, base):
            if x is None:
                x = base
            x = np.asarray(x, dtype=float)
            if x.ndim == 1:
                x = np.broadcast_to(x, (batch, x.shape[0]))
            return x

        th1 = norm(theta1, self.base_theta1)
        th2 = norm(theta2, self.base_theta2)
        ph1 = norm(phi1, self.base_phi1)
        ph2 = norm(phi2, self.base_phi2)

        taps = np.zeros((batch, len(self.nodes), 2)) if want_taps else None
        dissipated = np.zeros(batch) if want_audit else None

        for col, idx, top, bot, pt_ports, pt_amp in self.columns:
            if idx.size:
                wt = v[:, top] * np.exp(1j * ph1[:, idx])
                wb = v[:, bot] * np.exp(1j * ph2[:, idx])
                if want_audit:
                    p_in = np.abs(wt) ** 2 + np.abs(wb) ** 2

                s, t = self.s_in[idx], self.t_in[idx]
                xt = s * wt + 1j * t * wb
                xb = 1j * t * wt + s * wb

                xt = xt * (self.arm_top[idx] * np.exp(1j * th1[:, idx]))
                xb = xb * (self.arm_bot[idx] * np.exp(1j * th2[:, idx]))

                s, t = self.s_out[idx], self.t_out[idx]
                yt = s * xt + 1j * t * xb
                yb = 1j * t * xt + s * xb

                if want_taps or want_audit:
                    tp_top = np.abs(yt) ** 2 * self.tap_frac[idx]
                    tp_bot = np.abs(yb) ** 2 * self.tap_frac[idx]
                    if want_taps:
                        taps[:, idx, 0] = tp_top
                        taps[:, idx, 1] = tp_bot
                yt = yt * self.tap_amp[idx]
                yb = yb * self.tap_amp[idx]
                if want_audit:
                    p_out = np.abs(yt) ** 2 + np.abs(yb) ** 2
                    dissipated += np.sum(p_in - p_out - tp_top - tp_bot, axis=1)
                v[:, top] = yt
                v[:, bot] = yb
            if pt_ports.size:
                if want_audit:
                    dissipated += np.sum(
                        np.abs(v[:, pt_ports]) ** 2 * (1.0 - pt_amp**2), axis=1
                    )
                v[:, pt_ports] = v[:, pt_ports] * pt_amp
        return v, taps, dissipated

    def transfer(self, theta1=None, theta2=None, phi1=None, phi2=None) -> np.ndarray:
        out, _, _ = self.propagate(np.eye(self.n), theta1, theta2, phi1, phi2)
        return out.T.copy()

    def monitor_readings(self, inputs) -> np.ndarray:
        _, taps, _ = self.propagate(inputs, want_taps=True)
        return taps * self.mon_gain[None, :, :]


def mesh_transfer(state: MeshState) -> np.ndarray:
    """N x N transfer matrix of the full mesh (input column applied first)."""
    return CompiledMesh(state).transfer()


def output_powers(state: MeshState, inputs: np.ndarray) -> np.ndarray:
    """Physical output powers |U a|^2 (collection gains not applied)."""
    inputs = np.asarray(inputs, dtype=complex)
    if inputs.shape != (state.topology.n_modes,):
        raise ValueError(
            f"expected input vector of length {state.topology.n_modes}, got {inputs.shape}"
        )
    fields, _, _ = CompiledMesh(state).propagate(inputs)
    return np.abs(fields[0]) ** 2


def monitor_readings(state: MeshState, inputs: np.ndarray) -> dict[Node, tuple[float, float]]:
    """Per-node monitored tap powers, scaled by tap fraction and monitor gain."""
    inputs = np.asarray(inputs, dtype=complex)
    cm = CompiledMesh(state)
    readings = cm.monitor_readings(inputs)[0]
    return {n: (float(readings[i, 0]), float(readings[i, 1])) for i, n in enumerate(cm.nodes)}


def energy_audit(state: MeshState, inputs: np.ndarray) -> dict[str, float]:
    """Power bookkeeping: input = output + tapped + dissipated."""
    inputs = np.asarray(inputs, dtype=complex)
    fields, taps, dissipated = CompiledMesh(state).propagate(
        inputs, want_taps=True, want_audit=True
    )
    return {
        "input": float(np.sum(np.abs(inputs) ** 2)),
        "output": float(np.sum(np.abs(fields[0]) ** 2)),
        "tapped": float(np.sum(taps[0])),
        "dissipated": float(dissipated[0]),
    }


@dataclass
class NoiseSpec:
    """Fabrication/readout spread used by :func:`perturb`.

    ``loss_db_sigma`` is the standard deviation of the *total* loss along a
    full-depth route; individual (col, port) cells are sampled i.i.d. with
    sigma ``loss_db_sigma / sqrt(n_columns)`` so that straight-through path
    totals carry the quoted spread.  ``None`` means "keep the base value".
    """

    eta_mean: float | None = None
    eta_sigma: float = 0.0
    eta_bounds: tuple[float, float] = (0.4, 0.6)
    loss_db_mean: float | None = None
    loss_db_sigma: float = 0.0
    arm_imbalance_db_sigma: float = 0.0
    tap_db: float | None = None
    monitor_gain_db_sigma: float = 0.0
    output_gain_db_sigma: float = 0.0

    def __post_init__(self):
        for name in (
            "eta_sigma",
            "loss_db_sigma",
            "arm_imbalance_db_sigma",
            "monitor_gain_db_sigma",
            "output_gain_db_sigma",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.eta_bounds[0] >= self.eta_bounds[1]:
            raise ValueError("eta_bounds must be an increasing pair")


def paper_noise_spec() -> NoiseSpec:
    """Default spread tuned to reproduce the reported fidelity/loss bands."""
    return NoiseSpec(
        eta_mean=0.5,
        eta_sigma=0.042,
        eta_bounds=(0.4, 0.6),
        loss_db_mean=2.33,
        loss_db_sigma=0.9,
        arm_imbalance_db_sigma=0.3,
        tap_db=DEFAULT_TAP_DB,
        monitor_gain_db_sigma=1.75,
        output_gain_db_sigma=1.0,
    )


def perturb(state: MeshState, noise: NoiseSpec, seed: int) -> MeshState:
    """Monte Carlo sample of fabrication spread around ``state``.

    Deterministic in ``seed``; sampled values are clamped to physical
    ranges and clamps are logged.
    """
    rng = np.random.default_rng(seed)
    topo = state.topology
    new = state.copy()
    n_clamped = 0

    def clamp(x, lo, hi):
        nonlocal n_clamped
        y = min(max(x, lo), hi)
        if y != x:
            n_clamped += 1
        return y

    cell_sigma = noise.loss_db_sigma / math.sqrt(topo.n_columns)
    tap_db = noise.tap_db

    for node in topo.nodes():
        p = state.params[node]
        eta_base_in = p.c_in.eta if noise.eta_mean is None else noise.eta_mean
        eta_base_out = p.c_out.eta if noise.eta_mean is None else noise.eta_mean
        eta_in = clamp(eta_base_in + rng.normal(0.0, noise.eta_sigma), *noise.eta_bounds)
        eta_out = clamp(eta_base_out + rng.normal(0.0, noise.eta_sigma), *noise.eta_bounds)

        if noise.loss_db_mean is None:
            cell_db = amplitude_to_db(
                p.c_in.amp_loss
                * p.c_out.amp_loss
                * math.sqrt(p.arm_loss_top * p.arm_loss_bot)
                * p.tap_loss
            )
        else:
            cell_db = noise.loss_db_mean
        cell_db = clamp(cell_db + rng.normal(0.0, cell_sigma), 0.0, 60.0)
        node_tap_db = tap_db if tap_db is not None else amplitude_to_db(p.tap_loss)
        node_tap_db = clamp(node_tap_db, 0.0, cell_db)
        arm_db = max(cell_db - node_tap_db, 0.0)
        imb = rng.normal(0.0, noise.arm_imbalance_db_sigma)
        top_db = clamp(arm_db + imb / 2.0, 0.0, 60.0)
        bot_db = clamp(arm_db - imb / 2.0, 0.0, 60.0)

        g_top = db_to_amplitude(rng.normal(0.0, noise.monitor_gain_db_sigma)) ** 2
        g_bot = db_to_amplitude(rng.normal(0.0, noise.monitor_gain_db_sigma)) ** 2
        base_g = state.monitor_gains[node]

        new.params[node] = replace(
            p,
            c_in=CouplerParams(eta=eta_in, amp_loss=p.c_in.amp_loss),
            c_out=CouplerParams(eta=eta_out, amp_loss=p.c_out.amp_loss),
            arm_loss_top=db_to_amplitude(top_db),
            arm_loss_bot=db_to_amplitude(bot_db),
            tap_loss=db_to_amplitude(node_tap_db),
        )
        new.monitor_gains[node] = (base_g[0] * g_top, base_g[1] * g_bot)

    for col in range(topo.n_columns):
        coupled = set()
        for r in topo.column_rows(col):
            coupled.update(topo.node_ports((col, r)))
        for port in range(topo.n_modes):
            if port in coupled:
                continue
            if noise.loss_db_mean is None:
                base_db = amplitude_to_db(state.passthrough_loss.get((col, port), 1.0))
            else:
                base_db = noise.loss_db_mean
            cell_db = clamp(base_db + rng.normal(0.0, cell_sigma), 0.0, 60.0)
            new.passthrough_loss[(col, port)] = db_to_amplitude(cell_db)

    gains = state.output_gains * db_to_amplitude(
        rng.normal(0.0, noise.output_gain_db_sigma, size=topo.n_modes)
    ) ** 2
    new.output_gains = gains

    if n_clamped:
        logger.info("perturb: clamped %d sampled values to physical range", n_clamped)
    return new


# ---------------------------------------------------------------------------
# JSON serialisation (schema "mesh-v1")
# ---------------------------------------------------------------------------


def mesh_to_dict(state: MeshState) -> dict:
    return {
        "schema": MESH_SCHEMA,
        "n_modes": state.topology.n_modes,
        "nodes": {
            node_label(n): {
                "theta1": p.theta1,
                "theta2": p.theta2,
                "phi1": p.phi1,
                "phi2": p.phi2,
                "eta_in": p.c_in.eta,
                "amp_loss_in": p.c_in.amp_loss,
                "eta_out": p.c_out.eta,
                "amp_loss_out": p.c_out.amp_loss,
                "arm_loss_top": p.arm_loss_top,
                "arm_loss_bot": p.arm_loss_bot,
                "tap_loss": p.tap_loss,
                "monitor_gains": list(state.monitor_gains[n]),
            }
            for n, p in sorted(state.params.items())
        },
        "passthrough_loss": {
            f"{c}_{p}": amp for (c, p), amp in sorted(state.passthrough_loss.items())
        },
        "output_gains": state.output_gains.tolist(),
    }


def mesh_from_dict(data: dict) -> MeshState:
    if data.get("schema") != MESH_SCHEMA:
        raise ValueError(f"expected schema {MESH_SCHEMA!r}, got {data.get('schema')!r}")
    topo = MeshTopology(int(data["n_modes"]))
    params = {}
    gains = {}
    for label, d in data["nodes"].items():
        node = parse_node_label(label)
        params[node] = MziParams(
            theta1=d["theta1"],
            theta2=d["theta2"],
            phi1=d["phi1"],
            phi2=d["phi2"],
            c_in=CouplerParams(d["eta_in"], d["amp_loss_in"]),
            c_out=CouplerParams(d["eta_out"], d["amp_loss_out"]),
            arm_loss_top=d["arm_loss_top"],
            arm_loss_bot=d["arm_loss_bot"],
            tap_loss=d["tap_loss"],
        )
        gains[node] = tuple(d["monitor_gains"])
    passthrough = {}
    for key, amp in data.get("passthrough_loss", {}).items():
        c, p = key.split("_")
        passthrough[(int(c), int(p))] = float(amp)
    return MeshState(
        topology=topo,
        params=params,
        monitor_gains=gains,
        output_gains=np.array(data["output_gains"], dtype=float),
        passthrough_loss=passthrough,
    )


def noise_to_dict(noise: NoiseSpec) -> dict:
    return {
        "eta_mean": noise.eta_mean,
        "eta_sigma": noise.eta_sigma,
        "eta_bounds": list(noise.eta_bounds),
        "loss_db_mean": noise.loss_db_mean,
        "loss_db_sigma": noise.loss_db_sigma,
        "arm_imbalance_db_sigma": noise.arm_imbalance_db_sigma,
        "tap_db": noise.tap_db,
        "monitor_gain_db_sigma": noise.monitor_gain_db_sigma,
        "output_gain_db_sigma": noise.output_gain_db_sigma,
    }


def noise_from_dict(data: dict) -> NoiseSpec:
    d = dict(data)
    if "eta_bounds" in d:
        d["eta_bounds"] = tuple(d["eta_bounds"])
    return NoiseSpec(**d)


def save_mesh(state: MeshState, path) -> None:
    with open(path, "w") as fh:
        json.dump(mesh_to_dict(state), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_mesh(path) -> MeshState:
    with open(path) as fh:
        return mesh_from_dict(json.load(fh))


def uniform_loss_mesh(n_modes: int = 8, loss_db_per_depth: float = 2.33,
                      tap_db: float = DEFAULT_TAP_DB) -> MeshState:
    """Ideal-coupler mesh whose every (col, port) cell loses the same power."""
    state = ideal_mesh(n_modes)
    arm_db = loss_db_per_depth - tap_db
    if arm_db < 0:
        raise ValueError("per-depth loss smaller than the tap sampling")
    arm_amp = db_to_amplitude(arm_db)
    tap_amp = db_to_amplitude(tap_db)
    for node in state.topology.nodes():
        state.params[node] = replace(
            state.params[node],
            arm_loss_top=arm_amp,
            arm_loss_bot=arm_amp,
            tap_loss=tap_amp,
        )
    cell_amp = db_to_amplitude(loss_db_per_depth)
    for col in range(state.topology.n_columns):
        coupled = set()
        for r in state.topology.column_rows(col):
            coupled.update(state.topology.node_ports((col, r)))
        for port in range(n_modes):
            if port not in coupled:
                state.passthrough_loss[(col, port)] = cell_amp
    return state
