import json
import math

import numpy as np
import pytest

import beckerdoring as bd
from beckerdoring.config import config_from_dict, load_config, parse_config_text, template_text
from beckerdoring.errors import ConfigError, ParameterError, UnboundedGrowthConstantError
from beckerdoring.experiments import ExperimentConfig, emit_report, run_uniform_moment_experiment
from conftest import monodisperse

SMALL = dict(n=300, t_end=10.0, snapshots=51)


class TestShortTimeConstant:
    def test_linear_weight_formula(self, family_a):
        # eps = 1, A = sup i^(1/2)/i = 1, b_bar = 2: C = (rho + 2) * 1
        phi = np.arange(1, 1001, dtype=float)
        bound = bd.short_time_constant(family_a, phi, 1.0)
        assert bound.eps == pytest.approx(1.0, abs=0)
        assert bound.a_phi == pytest.approx(1.0, abs=0)
        assert bound.c_phi == pytest.approx(3.0, rel=1e-15)

    def test_quadratic_weight_scan_oracle(self, family_a):
        phi = np.arange(1, 1001, dtype=float) ** 2
        bound = bd.short_time_constant(family_a, phi, 1.0)
        i = np.arange(1, 1000, dtype=float)
        oracle = np.max(np.sqrt(i) * (2 * i + 1) / i**2)
        assert bound.a_phi == pytest.approx(float(oracle), rel=1e-14)

    def test_exponential_weight_rejected(self, family_a):
        phi = np.exp(np.arange(1, 400, dtype=float))
        with pytest.raises(UnboundedGrowthConstantError):
            bd.short_time_constant(family_a, phi, 1.0)

    def test_flat_weight_rejected(self, family_a):
        with pytest.raises(ParameterError):
            bd.short_time_constant(family_a, np.ones(100), 1.0)


@pytest.fixture(scope="module")
def setup(family_a):
    crit = bd.critical_values(family_a, 100_000)
    z_bar = bd.solve_monomer_activity(family_a, 1.0, critical=crit)
    eq = bd.equilibrium_profile(family_a, z_bar, 300, critical=crit)
    return crit, z_bar, eq


class TestDetectThreshold:

    def test_equilibrium_start_is_immediate(self, family_a, setup):
        crit, z_bar, eq = setup
        traj = bd.integrate(bd.ClusterState(eq.profile.copy()), family_a, 5.0, bd.IntegrateOptions(n_snapshots=11))
        omega = z_bar + 0.1 * (crit.z_s - z_bar)
        assert bd.detect_threshold(traj, omega) == 0.0

    def test_monodisperse_settles(self, family_a, setup):
        crit, z_bar, _ = setup
        z2 = bd.solve_monomer_activity(family_a, 2.0, critical=crit)
        traj = bd.integrate(monodisperse(800, 2.0), family_a, 60.0, bd.IntegrateOptions(n_snapshots=121))
        omega = z2 + 0.05 * (crit.z_s - z2)
        t0 = bd.detect_threshold(traj, omega)
        assert t0 is not None and 0.0 < t0 < 60.0

    def test_unreachable_cap_flags(self, family_a, setup):
        _, z_bar, _ = setup
        traj = bd.integrate(monodisperse(300, 1.0), family_a, 10.0, bd.IntegrateOptions(n_snapshots=21))
        assert bd.detect_threshold(traj, 0.5 * z_bar) is None


class TestPipeline:
    def test_equilibrium_start_trivially_passes(self):
        report = run_uniform_moment_experiment(ExperimentConfig(init="equilibrium", **SMALL))
        assert report.verdict
        assert report.t0 == 0.0
        for name in ("integrate", "threshold", "supersolution", "domination"):
            assert report.stage(name).ok

    def test_certified_dominates_observed(self):
        report = run_uniform_moment_experiment(ExperimentConfig(**SMALL))
        stage = report.stage("certified_moment[k=2]")
        assert stage.info["observed_sup"] <= stage.info["certified"]
        stage = report.stage("certified_stretched[alpha=1,mu=0.5]")
        assert stage.info["observed_sup"] <= stage.info["certified"]

    def test_supercritical_refused(self):
        with pytest.raises(bd.SupercriticalError):
            run_uniform_moment_experiment(ExperimentConfig(rho=8.0, **SMALL))

    def test_small_k_refused(self):
        with pytest.raises(ConfigError):
            run_uniform_moment_experiment(ExperimentConfig(k_moments=(1.0,), **SMALL))

    def test_stretched_outside_branch_refused(self):
        with pytest.raises(ConfigError):
            run_uniform_moment_experiment(
                ExperimentConfig(stretched=((1.0, 0.8),), **SMALL)  # mu > 1 - gamma
            )
        with pytest.raises(ConfigError):
            run_uniform_moment_experiment(
                ExperimentConfig(gamma=1.0, z_s=2.0, k_moments=(2.0,), stretched=((1.0, 0.2),), **SMALL)
            )

    def test_low_cap_fails_threshold_stage(self):
        report = run_uniform_moment_experiment(ExperimentConfig(omega=0.25, stretched=(), **SMALL))
        assert not report.verdict
        assert not report.stage("threshold").ok

    def test_family_b_passes(self):
        config = ExperimentConfig(
            family="exponential_tail", sigma=1.0, n=400, t_end=20.0, snapshots=81
        )
        report = run_uniform_moment_experiment(config)
        assert report.verdict

    def test_report_round_trips_to_json(self):
        report = run_uniform_moment_experiment(ExperimentConfig(**SMALL))
        blob = json.dumps(report.to_dict(), sort_keys=True)
        parsed = json.loads(blob)
        assert parsed["verdict"] is True
        assert any(s["name"] == "domination" for s in parsed["stages"])


@pytest.fixture(scope="module")
def report():
    return run_uniform_moment_experiment(ExperimentConfig(**SMALL))


class TestEmitReport:

    def test_all_outputs_written(self, report, tmp_path):
        paths = emit_report(report, tmp_path / "out")
        for key in ("summary", "timeseries", "supersolution", "witness", "bounds"):
            assert paths[key].exists()
        header = paths["timeseries"].read_text().splitlines()
        assert header[0].startswith("#family=")
        assert any(line.startswith("#z_bar=") for line in header[:10])
        assert "t,c1,rho,H,M_2,E_1_0.5" in header[8]

    def test_supersolution_columns(self, report, tmp_path):
        paths = emit_report(report, tmp_path / "out")
        lines = paths["supersolution"].read_text().splitlines()
        assert lines[0] == "j,r_j,s_j"
        first = lines[1].split(",")
        assert int(first[0]) == 1 and float(first[1]) > 0

    def test_missing_parent_raises_io(self, report, tmp_path):
        with pytest.raises(OSError):
            emit_report(report, tmp_path / "absent" / "out")

    def test_deterministic_bytes(self, report, tmp_path):
        p1 = emit_report(report, tmp_path / "a")
        p2 = emit_report(report, tmp_path / "b")
        for key in p1:
            assert p1[key].read_bytes() == p2[key].read_bytes()


class TestConfigFile:
    def test_template_matches_defaults(self):
        config = config_from_dict(parse_config_text(template_text()))
        assert config == ExperimentConfig()

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"not_a_key": 1})

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("gamma = oops\n")

    def test_comments_and_strings(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text('family = "power_law"  # inline comment\nn = 100\nstretched = []\n')
        config = load_config(path)
        assert config.family == "power_law" and config.n == 100 and config.stretched == ()

    def test_pair_shape_enforced(self):
        with pytest.raises(ConfigError):
            config_from_dict({"stretched": [[1.0, 0.5, 0.2]]})
