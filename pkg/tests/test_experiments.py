import csv
import json

import numpy as np
import pytest

from ewcert.certify import check_ewc
from ewcert.experiments import (
    DNL_A,
    DNL_HEADER,
    ExperimentConfig,
    dnl_envelope,
    eigen_report,
    generate_dnl_matrix,
    run_experiment,
)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig("nonsense")
        with pytest.raises(ValueError):
            ExperimentConfig("dnl_ratio", trials=0)
        with pytest.raises(ValueError):
            ExperimentConfig("dnl_ratio", sizes=(1, 5))


class TestDnlGenerator:
    @pytest.mark.parametrize("c", [0.2, 0.6, 1.0, 1.25, 1.5, 1.75, 2.0])
    def test_generated_matrix_is_certified(self, c):
        for trial in range(5):
            rng = np.random.default_rng(trial)
            A, offset, b = generate_dnl_matrix(8, c, rng)
            cert = check_ewc(dnl_envelope(A), b, c, np.ones(8))
            assert cert.feasible, cert.residual
            assert offset.shape == (8,)

    def test_off_diagonals_untouched(self):
        A, _, _ = generate_dnl_matrix(6, 1.5, np.random.default_rng(3))
        M = np.random.default_rng(3).normal(0, 1 / np.sqrt(6), (6, 6))
        off = ~np.eye(6, dtype=bool)
        np.testing.assert_array_equal(A[off], M[off])
        assert np.all(np.diag(A) <= np.diag(M))

    def test_gaussian_scale(self):
        rng = np.random.default_rng(0)
        samples = np.concatenate([generate_dnl_matrix(50, 0.2, rng)[1] for _ in range(40)])
        assert np.var(samples) == pytest.approx(1 / 50, rel=0.15)


def test_eigen_report():
    rep = eigen_report(np.array([[1.0, 1.0], [0.0, 1.0]]))
    assert rep["spectral_radius"] == pytest.approx(1.0)
    assert not rep["boundary_semisimple"]
    assert eigen_report(np.eye(3))["boundary_semisimple"]


def test_small_ratio_sweep(tmp_path):
    cfg = ExperimentConfig("dnl_ratio", seed=7, sizes=(4, 6), trials=2, c_grid=(0.2, 1.5), output_dir=tmp_path)
    out = run_experiment(cfg)
    rows = list(csv.reader((tmp_path / "dnl_ratio.csv").open()))
    assert rows[0] == DNL_HEADER
    assert len(rows) - 1 == out["rows"] == 2 * 2 * 2 - out["skipped"]
    assert all(float(r[-1]) <= 1 + 1e-6 for r in rows[1:])
    again = run_experiment(ExperimentConfig("dnl_ratio", seed=7, sizes=(4, 6), trials=2, c_grid=(0.2, 1.5)))
    assert again["table"] == out["table"]


def test_dnl_single(tmp_path):
    out = run_experiment(ExperimentConfig("dnl_single", output_dir=tmp_path))
    assert out["certificate"]["feasible"]
    assert out["ratio"] <= 1 + 1e-6
    assert json.loads((tmp_path / "dnl_single.json").read_text())["certificate"]["b"] == 0.537
    assert DNL_A.shape == (5, 5)


def test_affine_runs(tmp_path):
    out = run_experiment(ExperimentConfig("affine", output_dir=tmp_path))
    assert out["runs"]["ewc"]["iterations"] < out["runs"]["monotone"]["iterations"]
    assert (tmp_path / "affine_ewc.csv").exists() and (tmp_path / "affine_monotone.csv").exists()


def test_consensus_demo(tmp_path):
    out = run_experiment(ExperimentConfig("consensus_demo", output_dir=tmp_path))
    for name in ("ring5", "star6", "random8", "random10"):
        assert out[name]["consensus"]
    assert not out["two_cycles"]["consensus"]
    assert not out["two_cycles"]["globally_reachable_node"]
