"""Independent brute-force oracles the production code is checked against."""

import itertools
import math

import numpy as np


from mzmesh.mesh import MeshState, MeshTopology, mzi_transfer


def dense_mesh_transfer(state: MeshState) -> np.ndarray:
    """Embed every 2x2 block into NxN and multiply dense matrices in order."""
    topo = state.topology
    n = topo.n_modes
    u = np.eye(n, dtype=complex)
    for col in reversed(range(topo.n_columns)):  # input column first
        m = np.eye(n, dtype=complex)
        coupled = set()
        for row in topo.column_rows(col):
            a, b = topo.node_ports((col, row))
            coupled.update((a, b))
            block = mzi_transfer(state.params[(col, row)])
            m[a, a], m[a, b] = block[0, 0], block[0, 1]
            m[b, a], m[b, b] = block[1, 0], block[1, 1]
        for port in range(n):
            if port not in coupled:
                m[port, port] = state.passthrough_loss.get((col, port), 1.0)
        u = m @ u
    return u


def fringe_curve(u: np.ndarray, pair, out_port, alpha) -> np.ndarray:
    """Closed-form two-input interference at one output for unit input power:
    I = |u_ni|^2 + |u_nj|^2 + 2|u_ni||u_nj| cos(alpha + phi_ni - phi_nj)."""
    i, j = pair
    uni = u[out_port - 1, i - 1]
    unj = u[out_port - 1, j - 1]
    return (
        abs(uni) ** 2
        + abs(unj) ** 2
        + 2.0 * abs(uni) * abs(unj) * np.cos(np.asarray(alpha) + np.angle(uni) - np.angle(unj))
    )


def bfs_min_crossings(matching, n_modes: int = 8) -> int:
    """Fewest adjacent swaps routing a matching to Hadamard pairs, by layered
    breadth-first search over the column-constrained swap network."""
    topo = MeshTopology(n_modes)
    pairs = [tuple(sorted(p)) for p in matching]
    paired = {p for pr in pairs for p in pr}

    def accepted(state) -> bool:
        # every pair occupies one output pair (2k+1, 2k+2), 1-based ports
        position = {tok: port for port, tok in enumerate(state)}
        for i, j in pairs:
            a, b = position[i], position[j]
            if a > b:
                a, b = b, a
            if b != a + 1 or a % 2 != 0:
                return False
        return True

    start = tuple(range(1, n_modes + 1))
    frontier = {start: 0}
    best = math.inf
    for col in reversed(range(1, topo.n_columns)):
        blocks = [topo.node_ports((col, r)) for r in topo.column_rows(col)]
        nxt = {}
        for state, cost in frontier.items():
            for k in range(len(blocks) + 1):
                for combo in itertools.combinations(range(len(blocks)), k):
                    s = list(state)
                    for b in combo:
                        a, bb = blocks[b]
                        s[a], s[bb] = s[bb], s[a]
                    key = tuple(s)
                    c = cost + k
                    if c < nxt.get(key, math.inf):
                        nxt[key] = c
        frontier = nxt
    for state, cost in frontier.items():
        if accepted(state):
            best = min(best, cost)
    return int(best)


def pair_min_crossings(pair, n_modes: int = 8) -> int:
    return bfs_min_crossings([pair], n_modes)


def solve_corrected_cross(eta_l_in, eta_l_out, eta_r_in, eta_r_out,
                          arm_top=1.0, arm_bot=1.0):
    """Exact double-MZI null: (theta_L, theta_R, phi_R) zeroing the bar-port
    amplitude of the four-matrix product (Miller construction).

    theta_L is pinned at the left member's exact 50:50 point (bisection);
    (theta_R, phi_R) then solve the complex null condition by root finding.
    The two structure arms carry amplitude factors ``arm_top``/``arm_bot``.
    Returns (params, residual bar amplitude).
    """
    from scipy.optimize import brentq, fsolve

    def coupler(eta):
        s, t = math.sqrt(eta), math.sqrt(1 - eta)
        return np.array([[s, 1j * t], [1j * t, s]])

    def member(eta_in, eta_out, theta):
        return coupler(eta_out) @ np.diag(
            [np.exp(1j * theta / 2), np.exp(-1j * theta / 2)]
        ) @ coupler(eta_in)

    def split_imbalance(theta):
        m = member(eta_l_in, eta_l_out, theta)
        return abs(m[0, 0]) ** 2 - abs(m[1, 0]) ** 2

    # 50:50 lies between the bar (pi) and cross (0) extremes
    th_l = brentq(split_imbalance, 1e-9, math.pi - 1e-9, xtol=1e-15)

    def bar_amp(th_r, ph_r):
        left = member(eta_l_in, eta_l_out, th_l)
        arms = np.diag([arm_top * np.exp(1j * ph_r / 2), arm_bot * np.exp(-1j * ph_r / 2)])
        right = member(eta_r_in, eta_r_out, th_r)
        return (right @ arms @ left)[0, 0]

    def residuals(x):
        a = bar_amp(*x)
        return [a.real, a.imag]

    best = None
    for th0 in np.linspace(0.3, math.pi - 0.3, 7):
        for ph0 in np.linspace(-math.pi, math.pi, 9):
            x, info, ier, _ = fsolve(residuals, [th0, ph0], full_output=True, xtol=1e-14)
            r = abs(bar_amp(*x))
            if best is None or r < best[1]:
                best = ((th_l, x[0], x[1]), r)
    return best


def haar_unitary(n: int, rng) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def exact_circuit_frame(spec) -> dict:
    """Convention voltages programming a circuit on a zero-offset chip with
    no calibration residual (bar 25 V, cross 0 V, 50:50 members 12.5 V)."""
    from mzmesh.compiler import Gate
    from mzmesh.emulator import THETA, channel_id

    frame = {}
    for node, gate in spec.gates.items():
        if gate in (Gate.BAR, Gate.UNUSED, Gate.CORR_INTERMEDIATE):
            v = 25.0
        elif gate is Gate.CROSS_SINGLE:
            v = 0.0
        else:
            v = 12.5
        frame[channel_id(node, THETA)] = v
    return frame
