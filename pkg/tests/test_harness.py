"""Benchmark harness tests: config, geometry inversion, cache, reports, CLI."""

import csv
import json

import numpy as np
import pytest

from igalam.cli import main
from igalam.errors import ConfigError
from igalam.harness import (
    Benchmark,
    RunConfig,
    cache_reference,
    run,
    run_sweep,
    sample_grid,
)


def tiny_dict(out_dir, **overrides):
    base = dict(
        method="galerkin",
        s_ratio=5.0,
        layup=[[1.0, 0.0], [1.0, 90.0], [1.0, 0.0]],
        degrees=[2, 2, 2],
        control_counts=[5, 6, 4],
        stations=[[1 / 3, 1 / 3]],
        samples_per_ply=4,
        out_dir=str(out_dir),
        reference={"degrees": [2, 2, 1], "inplane": [6, 6]},
    )
    base.update(overrides)
    return base


def tiny_config(out_dir, **overrides):
    return RunConfig.from_dict(tiny_dict(out_dir, **overrides))


class TestRunConfig:
    def test_benchmark_defaults(self):
        cfg = RunConfig()
        assert cfg.method == "galerkin"
        assert len(cfg.layup) == 11
        assert [a for _, a in cfg.layup] == [0.0, 90.0] * 5 + [0.0]
        assert cfg.degrees == (4, 4, 3)
        assert cfg.control_counts == (22, 22, 4)
        assert cfg.load_mpa == -1.0
        assert cfg.reference["degrees"] == [4, 4, 2]
        assert cfg.reference["inplane"] == [24, 24]

    @pytest.mark.parametrize(
        "overrides",
        [
            {"method": "petrov"},
            {"s_ratio": 0.0},
            {"layup": []},
            {"layup": [[1.0]]},
            {"layup": [[-1.0, 0.0]]},
            {"degrees": [2, 2]},
            {"degrees": [2, 2, 0]},
            {"control_counts": [5, 6]},
            {"control_counts": [5, 6, 2]},
            {"stations": [[0.5, 1.2]]},
            {"stations": [[0.5]]},
            {"samples_per_ply": 1},
            {"reference": {"degrees": [2, 2], "inplane": [6, 6]}},
        ],
    )
    def test_rejects(self, tmp_path, overrides):
        with pytest.raises(ConfigError):
            tiny_config(tmp_path, **overrides)

    def test_layerwise_counts_may_drop_thickness(self, tmp_path):
        cfg = tiny_config(tmp_path, method="layerwise", control_counts=[5, 6])
        assert cfg.control_counts == (5, 6)
        cfg = tiny_config(tmp_path, method="layerwise", control_counts=[5, 6, 9])
        assert cfg.control_counts == (5, 6)

    def test_overkill_reference_defaults(self, tmp_path):
        cfg = tiny_config(tmp_path, reference={"overkill": True})
        assert cfg.reference["degrees"] == [6, 6, 4]
        assert cfg.reference["inplane"] == [36, 36]

    def test_round_trip(self, tmp_path):
        cfg = tiny_config(tmp_path)
        again = RunConfig.from_dict(cfg.to_dict())
        assert again.to_dict() == cfg.to_dict()

    def test_unknown_keys_rejected(self, tmp_path):
        data = tiny_dict(tmp_path)
        data["quadrature"] = "extra"
        with pytest.raises(ConfigError, match="quadrature"):
            RunConfig.from_dict(data)

    def test_load_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(tiny_dict(tmp_path)))
        cfg = RunConfig.load(path)
        assert cfg.s_ratio == 5.0

    def test_load_invalid_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            RunConfig.load(path)


def test_sample_grid():
    grid = sample_grid(5, 5)
    assert len(grid) == 25
    assert grid[0] == [0.0, 0.0]
    assert grid[-1] == [1.0, 1.0]
    assert sample_grid(2, 2) == [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]
    with pytest.raises(ConfigError):
        sample_grid(1, 5)


class TestBenchmark:
    def test_benchmark_dimensions(self):
        bench = Benchmark(RunConfig())
        assert bench.h == pytest.approx(11.0)
        assert bench.mean_radius == pytest.approx(220.0)
        assert bench.length == pytest.approx(220.0)
        assert bench.inner_radius == pytest.approx(214.5)
        assert bench.outer_radius == pytest.approx(225.5)
        assert bench.sigma0 == -1.0

    def test_angle_inversion(self, tmp_path):
        bench = Benchmark(tiny_config(tmp_path))
        assert bench.theta_of_xi2(0.0) == pytest.approx(np.pi / 2, abs=1e-12)
        assert bench.theta_of_xi2(1.0) == pytest.approx(0.0, abs=1e-12)
        assert bench.xi2_of_theta_fraction(0.0) == 1.0
        assert bench.xi2_of_theta_fraction(1.0) == 0.0
        # the rational arc parameter is not the angle
        xi2 = bench.xi2_of_theta_fraction(1 / 3)
        assert xi2 == pytest.approx(0.6589186226, abs=1e-9)
        assert abs(xi2 - 2 / 3) > 0.005
        assert bench.theta_of_xi2(xi2) == pytest.approx(np.pi / 6, abs=1e-12)

    def test_station_pressure(self, tmp_path):
        """cos(4 theta) sin(pi x1 / L) at (L/3, pi/6) with sigma0 = -1."""
        bench = Benchmark(tiny_config(tmp_path))
        xi = bench.station_xi([1 / 3, 1 / 3])
        from igalam.geometry import map_jet

        x = map_jet(bench.base_patch, (xi[0], xi[1], 0.0), 1).x
        assert bench.pressure(x) == pytest.approx(np.sqrt(3.0) / 4.0, abs=1e-12)

    def test_traction_is_radial(self, tmp_path):
        from igalam.geometry import frame_jet, map_jet

        bench = Benchmark(tiny_config(tmp_path))
        xi = (0.4, 0.3, 0.0)
        fr = frame_jet(bench.base_patch, xi, 0)
        x = map_jet(bench.base_patch, xi, 1).x
        t = bench.traction(x, fr)
        assert np.allclose(t, -bench.pressure(x) * fr.D[:, 2], atol=1e-15)

    def test_primal_patch_shapes(self, tmp_path):
        galer = Benchmark(tiny_config(tmp_path))
        assert galer.primal_patch().space.shape == (5, 6, 4)
        lw = Benchmark(
            tiny_config(tmp_path, method="layerwise", control_counts=[5, 6])
        )
        assert lw.primal_patch().space.shape == (5, 6, 3 * 2 + 1)


class TestReferenceCache:
    def test_round_trip_bit_exact(self, tmp_path):
        bench = Benchmark(tiny_config(tmp_path))
        cache = tmp_path / "cache"
        p1, f1, i1 = cache_reference(bench, cache)
        assert not i1["cache_hit"]
        assert "solve_seconds" in i1
        p2, f2, i2 = cache_reference(bench, cache)
        assert i2["cache_hit"]
        assert np.array_equal(f1.coeffs, f2.coeffs)

    def test_key_tracks_inputs(self, tmp_path):
        cache = tmp_path / "cache"
        a = Benchmark(tiny_config(tmp_path))
        b = Benchmark(tiny_config(tmp_path, layup=[[1.0, 0.0], [1.0, 90.0], [1.0, 45.0]]))
        _, _, ia = cache_reference(a, cache)
        _, _, ib = cache_reference(b, cache)
        assert ia["key"] != ib["key"]

    def test_corrupt_cache_recomputed(self, tmp_path):
        bench = Benchmark(tiny_config(tmp_path))
        cache = tmp_path / "cache"
        _, f1, info = cache_reference(bench, cache)
        np.savez(info["path"], coeffs=np.zeros(2), payload="junk")
        with pytest.warns(UserWarning, match="recomputing"):
            _, f2, i2 = cache_reference(bench, cache)
        assert not i2["cache_hit"]
        assert np.array_equal(f1.coeffs, f2.coeffs)
        # the rewrite leaves a loadable file behind
        _, _, i3 = cache_reference(bench, cache)
        assert i3["cache_hit"]

    def test_cache_disabled(self, tmp_path):
        bench = Benchmark(tiny_config(tmp_path))
        cache = tmp_path / "cache"
        _, _, info = cache_reference(bench, cache, use_cache=False)
        assert not cache.exists()


@pytest.fixture(scope="module")
def tiny_report(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = tiny_config(out)
    return cfg, run(cfg, compare=True)


class TestRun:
    def test_report_contents(self, tiny_report):
        cfg, rep = tiny_report
        assert rep["method"] == "galerkin"
        assert rep["ndof"] == 3 * 5 * 6 * 4
        assert rep["residual"] < 1e-9
        assert set(rep["timings"]) == {
            "solve_seconds", "reference_seconds", "recovery_seconds",
        }
        assert rep["metadata"]["normalization"] == 1.0
        assert rep["metadata"]["theta_span_rad"] == pytest.approx(np.pi / 2)
        (st,) = rep["stations"]
        assert st["fraction_axial"] == pytest.approx(1 / 3)
        assert st["xi"][1] == pytest.approx(0.6589186226, abs=1e-9)
        assert st["q_bottom"] == pytest.approx(np.sqrt(3.0) / 4.0, abs=1e-12)
        for key in ("errors_before", "errors_after", "absolute_error_flags"):
            assert set(st[key]) == {"s13", "s23", "s33"}
        assert st["csv"] == "station_00.csv"

    def test_written_files(self, tiny_report):
        cfg, rep = tiny_report
        from pathlib import Path

        out = Path(cfg.out_dir)
        with open(out / "report.json") as f:
            on_disk = json.load(f)
        assert "_stations" not in on_disk
        assert on_disk["ndof"] == rep["ndof"]

        with open(out / "station_00.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == [
            "x3_mm", "s11", "s22", "s12",
            "s13_constitutive", "s23_constitutive", "s33_constitutive",
            "s13_recovered", "s23_recovered", "s33_recovered", "ply_index",
        ]
        assert len(rows) == 1 + 3 * 4  # header + plies * samples_per_ply
        assert [r[-1] for r in rows[1:]] == ["0"] * 4 + ["1"] * 4 + ["2"] * 4
        x3 = np.array([float(r[0]) for r in rows[1:]])
        assert x3[0] == pytest.approx(-1.5)  # inner surface, mid-surface origin
        assert x3[-1] == pytest.approx(1.5)

        with open(out / "table2.csv", newline="") as f:
            table = list(csv.reader(f))
        assert table[0] == ["S", "method", "phase", "e13", "e23", "e33"]
        assert [r[2] for r in table[1:]] == ["before", "after"]

    def test_deterministic_with_cache(self, tiny_report):
        cfg, rep = tiny_report
        again = run(cfg, compare=True, write_outputs=False)
        assert again["reference"]["cache_hit"]
        assert again["stations"][0]["errors_after"] == rep["stations"][0]["errors_after"]
        assert again["stations"][0]["errors_before"] == rep["stations"][0]["errors_before"]

    def test_compare_off(self, tmp_path):
        cfg = tiny_config(tmp_path / "nr")
        rep = run(cfg, compare=False)
        assert "reference" not in rep
        assert "errors_after" not in rep["stations"][0]
        assert (tmp_path / "nr" / "station_00.csv").exists()
        assert not (tmp_path / "nr" / "table2.csv").exists()

    def test_sweep_accumulates(self, tmp_path):
        cfg = tiny_config(tmp_path / "sw", use_cache=True)
        reports = run_sweep(cfg, [4.0, 5.0])
        assert len(reports) == 2
        assert (tmp_path / "sw" / "S4" / "report.json").exists()
        assert (tmp_path / "sw" / "S5" / "report.json").exists()
        with open(tmp_path / "sw" / "table2.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert len(rows) == 1 + 4  # two runs, before/after each
        assert [r[0] for r in rows[1:]] == ["4", "4", "5", "5"]


class TestCli:
    def write_cfg(self, tmp_path, **overrides):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(tiny_dict(tmp_path / "out", **overrides)))
        return str(path)

    def test_solve(self, tmp_path, capsys):
        cfg = self.write_cfg(tmp_path)
        assert main(["solve", "--config", cfg]) == 0
        out = capsys.readouterr().out
        assert "ndof=360" in out
        data = np.load(tmp_path / "out" / "solution.npz")
        assert data["coeffs"].shape == (5, 6, 4, 3)

    def test_recover_and_compare(self, tmp_path, capsys):
        cfg = self.write_cfg(tmp_path)
        assert main(["recover", "--config", cfg]) == 0
        assert (tmp_path / "out" / "station_00.csv").exists()
        assert not (tmp_path / "out" / "table2.csv").exists()
        assert main(["compare", "--config", cfg]) == 0
        assert (tmp_path / "out" / "table2.csv").exists()
        assert "station (0.333, 0.333)" in capsys.readouterr().out

    def test_out_and_method_overrides(self, tmp_path, capsys):
        cfg = self.write_cfg(tmp_path, control_counts=[5, 6, 4])
        out2 = tmp_path / "elsewhere"
        code = main([
            "recover", "--config", cfg, "--out", str(out2),
            "--method", "layerwise",
        ])
        assert code == 0
        assert (out2 / "station_00.csv").exists()

    def test_sweep(self, tmp_path, capsys):
        cfg = self.write_cfg(tmp_path)
        assert main(["sweep", "--config", cfg, "--s-values", "4,5"]) == 0
        out = capsys.readouterr().out
        assert "S=4" in out and "S=5" in out
        assert (tmp_path / "out" / "table2.csv").exists()

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["solve", "--config", str(bad)]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"]["type"] == "ConfigError"

    def test_unknown_key_exit_code(self, tmp_path, capsys):
        data = tiny_dict(tmp_path / "out")
        data["mystery"] = 1
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(data))
        assert main(["solve", "--config", str(path)]) == 2

    def test_missing_file_exit_code(self, tmp_path, capsys):
        assert main(["solve", "--config", str(tmp_path / "nope.json")]) == 1
        err = json.loads(capsys.readouterr().err)
        assert "error" in err

    def test_bad_sweep_values(self, tmp_path, capsys):
        cfg = self.write_cfg(tmp_path)
        assert main(["sweep", "--config", cfg, "--s-values", "a,b"]) == 2
