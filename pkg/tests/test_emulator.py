import math

import numpy as np
import pytest

from mzmesh import mesh
from mzmesh.emulator import (
    PHI,
    THETA,
    V_MAX,
    ActuatorModel,
    DetectorModel,
    EmuConfig,
    EmulatedChip,
    VoltageFrame,
    channel_id,
    emu_from_dict,
    emu_to_dict,
    paper_detector_model,
    parse_channel_id,
    step_response,
)


def make_chip(offset_scale=0.0, seed=0, detector=None, actuator=None):
    cfg = EmuConfig(
        actuator=actuator or ActuatorModel(),
        detector=detector or DetectorModel(),
        offset_scale=offset_scale,
        seed=seed,
    )
    return EmulatedChip(mesh.nominal_mesh(8), cfg)


def input_vec(port):
    v = np.zeros(8, dtype=complex)
    v[port - 1] = 1.0
    return v


class TestChannels:
    def test_56_channels(self):
        chip = make_chip()
        assert len(chip.channels) == 56
        node, kind = parse_channel_id(chip.channels[0])
        assert node == (0, 0) and kind == THETA

    def test_bad_channel_ids(self):
        with pytest.raises(ValueError):
            channel_id((0, 0), "gamma")
        with pytest.raises(ValueError):
            VoltageFrame({"U_0_0:theta": 26.0})


class TestApplyFrame:
    def test_v_pi_gives_pi_shift(self):
        # 25 V on a theta channel moves the differential phase by pi:
        # cross (0 V) flips to bar through the first MZI on the path
        chip = make_chip()
        cid = channel_id((6, 0), THETA)
        out0, _ = chip.read_exact(input_vec(1))
        chip.apply_frame(VoltageFrame({cid: 25.0}))
        _, mons = chip.read_exact(input_vec(1))
        idx = chip._compiled.node_index[(6, 0)]
        assert mons[idx, 0] > 1e6 * mons[idx, 1]  # bar: all power stays on top

    def test_zero_frame_leaves_static_offsets(self):
        chip = make_chip(offset_scale=1.0, seed=4)
        th1, th2, ph1, ph2 = chip._phase_arrays(chip._volts)
        off = chip._offsets
        for k, node in enumerate(chip._compiled.nodes):
            assert th1[k] - th2[k] == pytest.approx(off.theta_diff[node], abs=1e-12)
            assert ph1[k] - ph2[k] == pytest.approx(off.phi_diff[node], abs=1e-12)

    def test_reversibility(self):
        chip = make_chip(offset_scale=1.0, seed=4)
        frame = VoltageFrame({channel_id((3, 1), THETA): 7.5, channel_id((2, 2), PHI): -4.0})
        before = chip._phase_arrays(chip._volts)
        chip.apply_frame(frame)
        chip.apply_frame(-frame)
        after = chip._phase_arrays(chip._volts)
        for b, a in zip(before, after):
            assert np.max(np.abs(b - a)) < 1e-12

    def test_full_span_is_2pi(self):
        act = ActuatorModel()
        assert act.phase(25.0) - act.phase(-25.0) == pytest.approx(2 * np.pi, abs=1e-12)

    def test_out_of_range_rejected_state_unchanged(self):
        chip = make_chip()
        cid = channel_id((6, 0), THETA)
        chip.apply_frame(VoltageFrame({cid: 20.0}))
        with pytest.raises(ValueError):
            chip.apply_frame(VoltageFrame({cid: 10.0}))  # accumulates past 25 V
        assert chip.current_voltages().values[cid] == 20.0

    def test_monotone_voltage_phase_map(self):
        act = ActuatorModel(nonlinearity=0.9 * ActuatorModel().monotone_nl_bound)
        v = np.linspace(-V_MAX, V_MAX, 1001)
        assert np.all(np.diff(act.phase(v)) > 0)

    def test_unknown_channel(self):
        chip = make_chip()
        with pytest.raises(KeyError):
            chip.apply_frame(VoltageFrame({"U_9_9:theta": 1.0}))


class TestDetectors:
    def test_zero_noise_matches_exact(self):
        chip = make_chip()
        outs, mons = chip.read_detectors(input_vec(1))
        exact_outs, exact_mons = chip.read_exact(input_vec(1))
        assert np.array_equal(outs, exact_outs)
        assert np.array_equal(mons, exact_mons)

    def test_statistical_mean(self):
        # sigma = 0.01, 1e4 reads: sample mean within 3 sigma/sqrt(N)
        chip = make_chip(detector=DetectorModel(relative_noise_sigma=0.01))
        true, _ = chip.read_exact(input_vec(1))
        port = int(np.argmax(true))
        n = 10_000
        acc = chip.read_detectors(input_vec(1), reads=n)[0][port]
        tol = 3 * 0.01 * true[port] / math.sqrt(n)
        assert abs(acc - true[port]) < tol

    def test_floor_dominates_dark_channels(self):
        floor = 1e-4
        chip = make_chip(detector=DetectorModel(additive_floor=floor))
        outs = chip.read_detectors(input_vec(1) * 1e-5, reads=4000)[0]
        dark = outs[np.argsort(outs)[:4]]
        assert np.all(np.abs(dark - floor) < 0.2 * floor)

    def test_determinism_bit_for_bit(self):
        a = make_chip(detector=paper_detector_model(), seed=5, offset_scale=1.0)
        b = make_chip(detector=paper_detector_model(), seed=5, offset_scale=1.0)
        frame = VoltageFrame({channel_id((4, 1), THETA): 3.0})
        a.apply_frame(frame)
        b.apply_frame(frame)
        for _ in range(5):
            ra = a.read_detectors(input_vec(2))
            rb = b.read_detectors(input_vec(2))
            assert np.array_equal(ra[0], rb[0]) and np.array_equal(ra[1], rb[1])

    def test_explicit_seed_reproducible(self):
        chip = make_chip(detector=paper_detector_model())
        r1 = chip.read_detectors(input_vec(1), seed=77)
        r2 = chip.read_detectors(input_vec(1), seed=77)
        assert np.array_equal(r1[0], r2[0])


class TestSawtoothSweep:
    def test_default_shape(self):
        chip = make_chip()
        raw = chip.sawtooth_sweep({channel_id((6, 0), PHI): 1}, input_vec(1))
        assert raw.outputs.shape == (5, 125, 8)
        assert raw.volts.shape == (125,)
        assert raw.volts[0] == -25.0 and raw.volts[-1] == 25.0

    def test_zero_vpp_constant(self):
        chip = make_chip()
        raw = chip.sawtooth_sweep({channel_id((6, 0), PHI): 1}, input_vec(1), vpp=0.0)
        assert np.all(np.ptp(raw.outputs, axis=1) == 0.0)  # flat trace per channel

    def test_fringe_matches_closed_form(self):
        # lone Hadamard under sweep follows the two-input fringe law
        from oracles import fringe_curve

        chip = make_chip(offset_scale=0.0, seed=2)
        frame = {channel_id(n, THETA): 25.0 for n in mesh.MeshTopology(8).nodes()}
        frame[channel_id((0, 0), THETA)] = 12.5
        chip.set_frame(VoltageFrame(frame))
        inputs = input_vec(1) + input_vec(2)
        raw = chip.sawtooth_sweep({channel_id((6, 0), PHI): 1}, inputs)
        u = chip._true_transfer()
        alpha = chip.config.actuator.phase(raw.volts)
        for port in (1, 2):
            avg = raw.outputs.mean(axis=0)[:, port - 1]
            # the sweep advances port 1 by +f/2 and port 2 by -f/2
            expect = fringe_curve(u, (1, 2), port, alpha)
            assert np.max(np.abs(avg - expect)) < 1e-10

    def test_restores_state(self):
        chip = make_chip()
        cid = channel_id((6, 0), PHI)
        chip.apply_frame(VoltageFrame({cid: 3.0}))
        chip.sawtooth_sweep({cid: 1}, input_vec(1))
        assert chip.current_voltages().values[cid] == 3.0

    def test_invalid_channel_and_vpp(self):
        chip = make_chip()
        with pytest.raises(KeyError):
            chip.sawtooth_sweep({"U_9_9:phi": 1}, input_vec(1))
        with pytest.raises(ValueError):
            chip.sawtooth_sweep({channel_id((6, 0), PHI): 1}, input_vec(1), vpp=60.0)


class TestStepResponse:
    def test_settles_below_a_microsecond(self):
        _, _, settle = step_response(ActuatorModel(), dt=1e-9, duration=3e-6)
        assert 0 < settle < 1e-6

    def test_ringing_period(self):
        model = ActuatorModel(damping_q=40.0)
        t, trace, _ = step_response(model, dt=2e-10, duration=1.5e-6, step_rad=1.0)
        # period from successive overshoot maxima
        x = trace - 1.0
        peaks = [
            k
            for k in range(1, len(x) - 1)
            if x[k] > x[k - 1] and x[k] > x[k + 1] and x[k] > 0.05
        ]
        periods = np.diff(t[peaks])
        assert abs(periods.mean() - 1e-7) / 1e-7 < 0.02

    def test_zero_step(self):
        _, trace, settle = step_response(ActuatorModel(), dt=1e-9, duration=1e-6, step_rad=0.0)
        assert np.all(trace == 0.0) and settle == 0.0

    def test_unstable_and_bad_dt_rejected(self):
        with pytest.raises(ValueError):
            step_response(ActuatorModel(damping_q=0.4), dt=1e-9, duration=1e-6)
        with pytest.raises(ValueError):
            step_response(ActuatorModel(), dt=1e-6, duration=1e-4)


class TestHiddenState:
    def test_public_surface_is_frozen(self):
        chip = make_chip(offset_scale=1.0, seed=9)
        public = {name for name in dir(chip) if not name.startswith("_")}
        assert public == set(EmulatedChip.PUBLIC_API)

    def test_offsets_not_in_repr(self):
        chip = make_chip(offset_scale=1.0, seed=9)
        assert "hidden" in repr(chip._offsets)
        some_value = next(iter(chip._offsets.theta_diff.values()))
        assert f"{some_value}" not in repr(chip._offsets)

    def test_readings_do_not_expose_offsets_directly(self):
        # two chips with different offsets but identical optics elsewhere
        # differ only through their optical readings
        a = make_chip(offset_scale=1.0, seed=1)
        b = make_chip(offset_scale=1.0, seed=2)
        assert a.channels == b.channels
        assert not np.array_equal(
            a.read_exact(input_vec(1))[0], b.read_exact(input_vec(1))[0]
        )


class TestFrameCsv:
    def test_single_frame(self, tmp_path):
        p = tmp_path / "frame.csv"
        p.write_text("channel_id,volts\nU_6_0:theta,12.5\nU_0_0:phi,-3.0\n")
        frames = VoltageFrame.from_csv(p)
        assert len(frames) == 1
        assert frames[0].values["U_6_0:theta"] == 12.5

    def test_sequence(self, tmp_path):
        p = tmp_path / "frames.csv"
        p.write_text(
            "frame,channel_id,volts\n0,U_6_0:theta,1.0\n1,U_6_0:theta,2.0\n1,U_0_0:phi,3.0\n"
        )
        frames = VoltageFrame.from_csv(p)
        assert len(frames) == 2
        assert frames[1].values == {"U_6_0:theta": 2.0, "U_0_0:phi": 3.0}

    def test_missing_columns(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("chan,v\nx,1\n")
        with pytest.raises(ValueError):
            VoltageFrame.from_csv(p)


class TestEmuSerialization:
    def test_chip_from_files(self, tmp_path):
        from mzmesh.emulator import load_chip, save_emu
        from mzmesh.mesh import save_mesh

        save_mesh(mesh.nominal_mesh(8), tmp_path / "mesh.json")
        save_emu(EmuConfig(offset_scale=0.0, seed=12), tmp_path / "emu.json")
        chip = load_chip(tmp_path / "mesh.json", tmp_path / "emu.json")
        assert chip.n_modes == 8
        assert chip.config.seed == 12

    def test_round_trip(self):
        cfg = EmuConfig(
            actuator=ActuatorModel(v_pi=24.0, nonlinearity=1e-4),
            detector=paper_detector_model(),
            offset_scale=0.7,
            seed=13,
        )
        assert emu_from_dict(emu_to_dict(cfg)) == cfg

    def test_schema_tag(self):
        d = emu_to_dict(EmuConfig())
        assert d["schema"] == "emu-v1"
        d["schema"] = "zzz"
        with pytest.raises(ValueError):
            emu_from_dict(d)
