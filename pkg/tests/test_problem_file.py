import json

import numpy as np
import pydantic
import pytest
from numpy.testing import assert_allclose

from mpccstat.data_models import CertificateModel, RunReport, Settings, load_settings
from mpccstat.errors import InvalidArgument
from mpccstat.grid import constant
from mpccstat.mpcc_lin import KktMultipliers
from mpccstat.operators import ScaledIdPlusAverage
from mpccstat.problem_file import load_problem, parse_problem
from mpccstat.stationarity import StationarityCertificate
from mpccstat.utils import grid_function_to_csv, read_grid_function

LINEAR = {
    "grid": {"a": 0.0, "b": 1.0, "n": 3},
    "operator": {"kind": "scaled_identity", "alpha": 2.0},
    "costs": {"f_u": [1.0, 2.0, 3.0]},
    "sets": {"omega_0p": [0], "omega_00": [1]},
}


class TestParseProblem:
    def test_linear_defaults(self):
        loaded = parse_problem(LINEAR)
        prob = loaded.mpcc
        assert loaded.kind == "mpcc_lin"
        assert prob.omega_p0.indices == (2,)
        assert prob.omega_w.count == 3
        assert_allclose(prob.f_w.values, 0.0)
        assert loaded.beta.is_empty()

    @pytest.mark.parametrize(
        "patch",
        [
            {"unknown": 1},
            {"ioc": {"alpha": 1.0, "f": {"kind": "linear_integral", "c": 1.0}}},
            {"operator": {"kind": "scaled_id_plus_average", "d1": 1.0, "d2": 0.0}},
            {"operator": {"kind": "rank_one_average", "scale": 1.0, "beta": 1.0}},
            {"grid": {"a": 0.0, "b": 1.0, "n": 0}},
        ],
    )
    def test_schema_errors(self, patch):
        with pytest.raises(pydantic.ValidationError):
            parse_problem({**LINEAR, **patch})

    def test_missing_sets(self):
        document = {key: value for key, value in LINEAR.items() if key != "sets"}
        with pytest.raises(pydantic.ValidationError):
            parse_problem(document)

    def test_broken_partition(self):
        with pytest.raises(InvalidArgument):
            parse_problem({**LINEAR, "sets": {"omega_0p": [0], "omega_00": [0, 1]}})

    def test_nested_operators(self):
        document = {
            **LINEAR,
            "operator": {
                "kind": "sum",
                "terms": [
                    {"kind": "scaled_identity", "alpha": 1.0},
                    {"kind": "gram", "inner": {"kind": "matrix", "entries": [[1, 0, 0], [0, 2, 0], [0, 0, 3]]}},
                ],
            },
        }
        prob = parse_problem(document).mpcc
        assert_allclose(np.diag(prob.a_op.matrix(prob.grid)), [2.0, 5.0, 10.0])


class TestLoadProblem:
    def test_biactive4(self, problems_dir):
        loaded = load_problem(problems_dir / "biactive4.toml")
        prob = loaded.mpcc
        assert prob.omega_00.indices == (1, 2, 3, 4)
        assert prob.omega_p0.indices == (5,)
        assert loaded.beta.indices == (1, 2)
        assert loaded.inputs == [problems_dir / "biactive4.toml"]

    def test_nostrong(self, problems_dir):
        loaded = load_problem(problems_dir / "nostrong.toml")
        assert loaded.kind == "ioc"
        assert_allclose(loaded.w_bar.values, 0.0)
        assert loaded.inputs[-1] == problems_dir / "zero.csv"
        a_op = loaded.ioc.a_op
        assert isinstance(a_op, ScaledIdPlusAverage)
        assert a_op.d1 == pytest.approx(0.25)
        assert a_op.d2 == pytest.approx(0.0625)

    def test_unreadable(self, tmp_path):
        with pytest.raises(InvalidArgument):
            load_problem(tmp_path / "missing.toml")
        bad = tmp_path / "bad.toml"
        bad.write_text("[grid\n", encoding="utf-8")
        with pytest.raises(InvalidArgument):
            load_problem(bad)


class TestGridFunctionCsv:
    def test_write_then_read(self, tmp_path, unit_grid):
        u = constant(unit_grid, 0.1) * 3.0
        path = tmp_path / "u.csv"
        path.write_text(grid_function_to_csv(u), encoding="utf-8")
        assert np.array_equal(read_grid_function(path, unit_grid).values, u.values)

    def test_midpoint_mismatch(self, tmp_path, unit_grid):
        path = tmp_path / "u.csv"
        path.write_text("midpoint,value\n" + "".join(f"{i},0\n" for i in range(unit_grid.n)), encoding="utf-8")
        with pytest.raises(InvalidArgument):
            read_grid_function(path, unit_grid)


class TestSettings:
    def test_defaults(self):
        settings = Settings()
        assert settings.tol == 1e-9
        assert settings.cap == 12
        assert len(settings.schedule.gammas) == 10
        assert settings.descent.kind == "bb"

    def test_load(self, tmp_path):
        path = tmp_path / "mpccstat.toml"
        path.write_text("[settings]\ntol = 1e-6\nsteps = 2\n", encoding="utf-8")
        settings = load_settings(path)
        assert settings.tol == 1e-6
        assert settings.steps == 2
        assert settings.cap == 12

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "mpccstat.toml"
        path.write_text("[settings]\ntolerance = 1e-6\n", encoding="utf-8")
        with pytest.raises(pydantic.ValidationError):
            load_settings(path)

    def test_missing_explicit_file(self, tmp_path):
        with pytest.raises(InvalidArgument):
            load_settings(tmp_path / "nope.toml")


class TestReportModels:
    def test_infinite_residual_and_lambda_key(self, unit_grid):
        cert = StationarityCertificate.from_residuals(
            "s",
            {"feasibility": float("inf")},
            1e-9,
            multipliers=KktMultipliers.zeros(unit_grid),
        )
        text = CertificateModel.from_certificate(cert).model_dump_json(by_alias=True)
        assert "Infinity" in text
        data = json.loads(text)
        assert data["verdict"] is False
        assert set(data["multipliers"]) == {"p", "mu", "nu", "lambda"}

    def test_run_report_json(self):
        report = RunReport(command={"command": "certify"}, input_hash="0" * 64, tool_version="0.1.0")
        data = json.loads(report.to_json())
        assert data["timestamp"] is None
        assert data["certificates"] == []
