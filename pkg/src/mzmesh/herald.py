"""State-vector oracle for the single-photon heralding protocol.

Two identical emitters at input ports i and j each hold a spin; a single
photon entangled with the spins enters the mesh in an equal superposition
of the two input modes.  Propagating the photon through the measured
transfer matrix and projecting on a click at one output channel leaves the
spins in a superposition weighted by that channel's two matrix elements.
Computing the Bell-state overlap from this post-measurement state is an
independent route to the optical link fidelity and must agree with the
contrast-based formulas of the metrology module to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class TwoSpinPhotonState:
    """Single-photon sector amplitudes: ``a[k]`` carries spins up_i/down_j
    with the photon in output mode k, ``b[k]`` the flipped spin branch."""

    a: np.ndarray
    b: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.a) ** 2 + np.abs(self.b) ** 2))


@dataclass
class HeraldedSpinState:
    """Post-click spin superposition (amplitudes of up_i/down_j, down_i/up_j)."""

    up_down: complex
    down_up: complex

    @property
    def norm(self) -> float:
        return math.hypot(abs(self.up_down), abs(self.down_up))


@dataclass(frozen=True)
class BellTarget:
    """Bell state |up,down> + sign * e^{i phase} |down,up> (normalised).

    ``phase`` carries the measured fringe offset of the heralding channel;
    with it the target is aligned to the unitary's residual phase, so the
    fidelity depends on magnitudes only.
    """

    sign: int = +1
    phase: float = 0.0

    def __post_init__(self):
        if self.sign not in (-1, +1):
            raise ValueError("sign must be +1 or -1")


def emit_and_propagate(pair: tuple[int, int], u: np.ndarray) -> TwoSpinPhotonState:
    """Photon from emitters (i, j), equal amplitudes, through transfer u."""
    i, j = pair
    if i == j:
        raise ValueError("emitter ports must differ")
    u = np.asarray(u, dtype=complex)
    return TwoSpinPhotonState(a=u[:, i - 1] / math.sqrt(2.0), b=u[:, j - 1] / math.sqrt(2.0))


def herald(state: TwoSpinPhotonState, detector: int) -> tuple[HeraldedSpinState, float]:
    """Project on a click at 1-based output channel ``detector``.

    Returns the renormalised spin state and the herald probability
    ``(|a_k|^2 + |b_k|^2)`` relative to the pre-loss emission norm of 1.
    """
    k = detector - 1
    a_k, b_k = complex(state.a[k]), complex(state.b[k])
    p = abs(a_k) ** 2 + abs(b_k) ** 2
    if p < 1e-300:
        raise ValueError(f"detector {detector} has zero herald probability")
    scale = 1.0 / math.sqrt(p)
    return HeraldedSpinState(up_down=a_k * scale, down_up=b_k * scale), float(p)


def herald_probabilities(state: TwoSpinPhotonState) -> np.ndarray:
    return np.abs(state.a) ** 2 + np.abs(state.b) ** 2


def bell_fidelity(post: HeraldedSpinState, target: BellTarget) -> float:
    """Overlap magnitude of the post-herald spin state with a Bell target."""
    amp = post.up_down + target.sign * np.exp(-1j * target.phase) * post.down_up
    return float(abs(amp) / (math.sqrt(2.0) * post.norm))


def corrected_fidelity(post: HeraldedSpinState, sign: int = +1) -> float:
    """Fidelity against the phase-corrected target (aligned to the measured
    relative phase), which depends on the amplitude magnitudes only."""
    phase = float(np.angle(sign * post.down_up) - np.angle(post.up_down))
    return bell_fidelity(post, BellTarget(sign=sign, phase=phase))
