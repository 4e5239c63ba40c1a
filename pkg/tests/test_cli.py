import math
import os

import numpy as np
import pytest

from raftsim import cli
from raftsim.config import parse_config_text, serialize_config
from raftsim.errors import ConfigError
from raftsim.output import read_vtk_points, write_diagnostics_csv, write_vtk
from raftsim.presets import preset_config, preset_names
from raftsim.surface_mesh import build_refined_sphere, load_mesh
from raftsim.time_stepper import DiagnosticsRecord

OCTA_OFF = """OFF
6 8 12
1 0 0
-1 0 0
0 1 0
0 -1 0
0 0 1
0 0 -1
3 0 2 4
3 2 1 4
3 1 3 4
3 3 0 4
3 2 0 5
3 1 2 5
3 3 1 5
3 0 3 5
"""

GOLDEN_OCTA_VTK = """# vtk DataFile Version 3.0
raftsim surface fields
ASCII
DATASET POLYDATA
POINTS 6 double
1 0 0
-1 0 0
0 1 0
0 -1 0
0 0 1
0 0 -1
POLYGONS 8 32
3 0 2 4
3 2 1 4
3 1 3 4
3 3 0 4
3 2 0 5
3 1 2 5
3 3 1 5
3 0 3 5
POINT_DATA 6
SCALARS phi double 1
LOOKUP_TABLE default
1
1
1
1
1
1
"""


class TestConfig:
    def test_empty_gives_paper_baseline(self):
        config = parse_config_text("")
        assert config.model.eps == 0.02
        assert config.model.delta == 0.02
        assert config.model.c1 == 500.0 and config.model.c2 == 500.0
        assert config.model.total_mass == pytest.approx(20.0 * math.pi / 3.0)
        assert config.model.vol_bulk == pytest.approx(4.0 * math.pi / 3.0)
        assert config.initial.phi_hat == -0.5
        assert config.initial.v0 == 0.25
        assert config.initial.amplitude == 0.001

    def test_pi_expressions(self):
        config = parse_config_text("[model]\ntotal_mass = 20*pi/3\n")
        assert config.model.total_mass == pytest.approx(20.0 * math.pi / 3.0)

    def test_negative_delta_names_key(self):
        with pytest.raises(ConfigError, match="delta"):
            parse_config_text("[model]\ndelta = -1\n")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="frobnicate"):
            parse_config_text("[model]\nfrobnicate = 1\n")

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="turbo"):
            parse_config_text("[turbo]\nx = 1\n")

    def test_type_mismatch_names_key(self):
        with pytest.raises(ConfigError, match="level"):
            parse_config_text("[geometry]\nlevel = smooth\n")

    def test_variant_exchange_cross_validation(self):
        with pytest.raises(ConfigError, match="variant"):
            parse_config_text("[stepper]\nvariant = energy_decreasing\n")

    def test_round_trip(self):
        text = ("[geometry]\nlevel = 3\n[model]\ndelta = 0.1\n"
                "[stepper]\ntau_max = 1e-3\nt_end = 2.5\n"
                "[output]\nsnapshot_times = 0.1 0.5\n[run]\nscenario = sweep\n")
        config = parse_config_text(text)
        assert parse_config_text(serialize_config(config)) == config

    def test_all_presets_parse_and_round_trip(self):
        assert "basic" in preset_names()
        assert "energy_decreasing" in preset_names()
        for name in preset_names():
            config = preset_config(name)
            assert parse_config_text(serialize_config(config)) == config


class TestVtkWriter:
    def test_golden_octahedron(self, tmp_path):
        path = tmp_path / "mesh.off"
        path.write_text(OCTA_OFF)
        mesh = load_mesh(str(path))
        out = tmp_path / "octa.vtk"
        write_vtk(mesh, {"phi": np.ones(6)}, str(out))
        assert out.read_text() == GOLDEN_OCTA_VTK

    def test_geometry_only(self, tmp_path):
        mesh = build_refined_sphere(0)
        out = tmp_path / "geom.vtk"
        write_vtk(mesh, {}, str(out))
        text = out.read_text()
        assert "POINT_DATA" not in text
        assert "POLYGONS 12 48" in text

    def test_point_round_trip(self, tmp_path):
        mesh = build_refined_sphere(2)
        out = tmp_path / "round.vtk"
        write_vtk(mesh, {"phi": mesh.vertices[:, 2]}, str(out))
        points = read_vtk_points(str(out))
        np.testing.assert_array_equal(points, mesh.vertices)

    def test_field_length_checked(self, tmp_path):
        mesh = build_refined_sphere(0)
        with pytest.raises(ValueError):
            write_vtk(mesh, {"phi": np.ones(3)}, str(tmp_path / "bad.vtk"))


class TestDiagnosticsCsv:
    RECORD = DiagnosticsRecord(t=0.1, tau=1e-3, int_phi=-6.0, int_v=3.0, u=4.0,
                               energy_surface=10.0, energy_bulk=2.0,
                               energy_total=12.0, max_rate=0.5,
                               solver_iterations=7, solver_residual=1e-10)

    def test_empty_series_header_only(self, tmp_path):
        path = tmp_path / "d.csv"
        write_diagnostics_csv([], str(path))
        assert path.read_text() == ",".join(DiagnosticsRecord.CSV_FIELDS) + "\n"

    def test_column_count_constant(self, tmp_path):
        path = tmp_path / "d.csv"
        write_diagnostics_csv([self.RECORD, self.RECORD], str(path))
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 3
        assert all(len(line.split(",")) == len(DiagnosticsRecord.CSV_FIELDS)
                   for line in lines)

    def test_values_finite_and_parse_back(self, tmp_path):
        path = tmp_path / "d.csv"
        write_diagnostics_csv([self.RECORD], str(path))
        header, row = path.read_text().strip().splitlines()
        values = dict(zip(header.split(","), row.split(",")))
        assert float(values["energy_total"]) == 12.0
        assert int(values["solver_iterations"]) == 7


@pytest.fixture()
def out_env(tmp_path, monkeypatch):
    monkeypatch.setenv("RAFTSIM_OUTPUT_DIR", str(tmp_path / "out"))
    return tmp_path / "out"


class TestCliCommands:
    def test_mesh_info_sphere(self, capsys):
        assert cli.main(["mesh-info", "sphere:2"]) == 0
        out = capsys.readouterr().out
        assert "vertices  98" in out
        assert "euler     2" in out

    def test_mesh_info_bad_spec(self, capsys):
        assert cli.main(["mesh-info", "dodecahedron:9"]) == 1

    def test_preset_listing(self, capsys):
        assert cli.main(["preset"]) == 0
        assert "basic" in capsys.readouterr().out

    def test_preset_output_parses(self, capsys):
        assert cli.main(["preset", "basic"]) == 0
        text = capsys.readouterr().out
        assert parse_config_text(text).scenario == "basic"

    def test_preset_unknown(self, capsys):
        assert cli.main(["preset", "nope"]) == 1

    def test_run_unknown_config(self, capsys):
        assert cli.main(["run", "/nonexistent/actually.cfg"]) == 1

    def test_usage_error_is_exit_1(self, capsys):
        assert cli.main(["benchmark", "nonsense"]) == 1

    def test_tiny_run_writes_outputs(self, out_env, tmp_path, capsys):
        cfg = tmp_path / "tiny.cfg"
        cfg.write_text(
            "[geometry]\nlevel = 2\n"
            "[stepper]\ntau_min = 1e-6\ntau_max = 1e-4\nadapt_const = 1e-2\n"
            "t_end = 1e-4\n"
            "[output]\nsnapshot_times = 5e-5\n")
        assert cli.main(["run", str(cfg)]) == 0
        assert (out_env / "diagnostics.csv").exists()
        assert (out_env / "final.vtk").exists()
        snaps = list(out_env.glob("snapshot_*.vtk"))
        assert len(snaps) == 1
        assert "components" in capsys.readouterr().out

    def test_run_bit_reproducible(self, out_env, tmp_path, capsys):
        cfg = tmp_path / "tiny.cfg"
        cfg.write_text(
            "[geometry]\nlevel = 2\n"
            "[stepper]\ntau_min = 1e-6\ntau_max = 1e-4\nadapt_const = 1e-2\n"
            "t_end = 1e-4\n")
        assert cli.main(["run", str(cfg)]) == 0
        first = (out_env / "diagnostics.csv").read_bytes()
        assert cli.main(["run", str(cfg)]) == 0
        second = (out_env / "diagnostics.csv").read_bytes()
        assert first == second
