import numpy as np
import pytest

from mzmesh import calibration as cal
from mzmesh import mesh, runner
from mzmesh.emulator import EmuConfig, EmulatedChip


class TestRunCircuit:
    def test_uncalibrated_nodes_rejected(self, default_circuits):
        chip = EmulatedChip(mesh.nominal_mesh(8), EmuConfig(offset_scale=0.0, seed=0))
        empty = cal.CalibrationRecord()
        with pytest.raises(cal.CalibrationError, match="uncalibrated"):
            runner.run_circuit(chip, empty, default_circuits["1"])

    def test_result_carries_32_values_over_four_circuits(self):
        summary, record, results = runner.run_chip(
            mesh.nominal_mesh(8), EmuConfig(offset_scale=1.0, seed=31)
        )
        assert len(summary.link_f) == 32
        assert set(summary.unitary_f) == {"1", "2", "3", "4"}
        for result in results:
            assert len(result.links) == 4
            assert result.estimate.magnitudes.shape == (8, 8)
            cols = np.sum(result.estimate.magnitudes**2, axis=0)
            assert np.allclose(cols, 1.0, atol=1e-9)


class TestMonteCarlo:
    def test_deterministic_summary(self):
        a = runner.monte_carlo(trials=2, seed=55)
        b = runner.monte_carlo(trials=2, seed=55)
        assert a == b

    def test_noise_override(self):
        quiet = mesh.NoiseSpec()  # no spread at all
        mc = runner.monte_carlo(trials=1, seed=9, noise=quiet, offset_scale=0.0)
        assert mc["link_f_min"] > 0.999
