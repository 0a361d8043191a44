"""Tests for the berry-svd command line."""
import json

import numpy as np
import pandas as pd
import pytest

from berry_svd.main import ExitCode, build_config, build_parser, join_signed_values, main
from berry_svd.utils.errors import ConfigError
from berry_svd.utils.model import Box, MatrixFamily, serialize_family


@pytest.fixture
def family_2x2_path(data_dir):
    return str(data_dir / "families" / "example_2x2.json")


@pytest.fixture
def constant_path(tmp_path):
    path = tmp_path / "constant.json"
    path.write_text(serialize_family(MatrixFamily.from_terms([(0, 0, np.diag([3.0, 2.0, 1.0]))])))
    return str(path)


@pytest.fixture
def write_family(tmp_path):
    def write(name, terms):
        path = tmp_path / name
        path.write_text(serialize_family(MatrixFamily.from_terms(terms)))
        return str(path)

    return write


def strict_json(path):
    def reject(constant):
        raise ValueError(f"non-finite value {constant} in {path}")

    return json.loads(path.read_text(), parse_constant=reject)


class TestConfig:
    def test_loop_samples(self, family_2x2_path):
        args = build_parser().parse_args(["loop", "--family", family_2x2_path, "--circle", "0,0,1", "--samples", "64"])
        config = build_config(args)
        assert config.loop.samples == 64 and config.loop.radius == 1.0

    def test_bad_circle(self, family_2x2_path):
        args = build_parser().parse_args(["loop", "--family", family_2x2_path, "--circle", "0,1"])
        with pytest.raises(ConfigError):
            build_config(args)

    def test_small_samples(self, family_2x2_path, tmp_path, capsys):
        argv = ["loop", "--family", family_2x2_path, "--circle", "0,0,1", "--samples", "4"]
        code = main(argv + ["--out", str(tmp_path)])
        assert code == ExitCode.CONFIG
        assert "--samples" in capsys.readouterr().err

    def test_missing_family(self, tmp_path, capsys):
        missing = tmp_path / "nope.json"
        code = main(["scan", "--family", str(missing), "--out", str(tmp_path)])
        assert code == ExitCode.CONFIG
        assert str(missing) in capsys.readouterr().err

    def test_join_signed_values(self):
        argv = ["detect", "--box", "-1,1,-1,1", "--loc-tol", "1e-2", "--point", "-.5,0"]
        assert join_signed_values(argv) == ["detect", "--box=-1,1,-1,1", "--loc-tol", "1e-2", "--point=-.5,0"]
        assert join_signed_values(["--samples", "-3"]) == ["--samples", "-3"]

    def test_negative_leading_values(self, family_2x2_path):
        argv = ["verify", "--family", family_2x2_path, "--point", "-0.5,0.2"]
        assert build_config(build_parser().parse_args(join_signed_values(argv))).points == ((-0.5, 0.2),)
        argv = ["loop", "--family", family_2x2_path, "--circle", "-1,0,1"]
        assert build_config(build_parser().parse_args(join_signed_values(argv))).loop.center == (-1.0, 0.0)

    def test_verify_needs_candidates(self, family_2x2_path, tmp_path, capsys):
        assert main(["verify", "--family", family_2x2_path, "--out", str(tmp_path)]) == ExitCode.CONFIG
        assert "--point" in capsys.readouterr().err


class TestScan:
    def test_surface_csv(self, family_2x2_path, tmp_path, capsys):
        code = main(["scan", "--family", family_2x2_path, "--resolution", "5", "--out", str(tmp_path)])
        assert code == ExitCode.OK
        frame = pd.read_csv(tmp_path / "surface.csv")
        assert list(frame.columns) == ["x", "y", "sigma_min", "gap", "absdet"]
        assert len(frame) == 25
        summary = json.loads((tmp_path / "scan_summary.json").read_text())
        assert np.allclose(summary["argmin"], [0.0, 0.0], atol=1e-12)
        assert "min sigma_2" in capsys.readouterr().out

    def test_example_4x4_grid(self, data_dir, tmp_path):
        family = str(data_dir / "families" / "example_4x4.json")
        assert main(["scan", "--family", family, "--box", "-1,1,-1,1", "--out", str(tmp_path)]) == ExitCode.OK
        assert len(pd.read_csv(tmp_path / "surface.csv")) == 1681
        summary = strict_json(tmp_path / "scan_summary.json")
        assert np.allclose(summary["argmin"], [0.05, 0.10], atol=1e-12)
        assert Box(*summary["argmin_cell"]).contains((0.05, 0.10))

    def test_plot(self, family_2x2_path, tmp_path):
        assert main(["scan", "--family", family_2x2_path, "--resolution", "6", "--plot", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "sigma_surface.png").stat().st_size > 0


class TestLoop:
    def test_circle_joint(self, family_2x2_path, tmp_path, capsys):
        argv = ["loop", "--family", family_2x2_path, "--circle", "0,0,1", "--samples", "2048"]
        code = main(argv + ["--out", str(tmp_path)])
        assert code == ExitCode.OK
        out = capsys.readouterr().out
        assert "+3.1416" in out and "RANK_LOSS_INSIDE" in out
        doc = json.loads((tmp_path / "phases.json").read_text())
        assert doc["classification"] == "RANK_LOSS_INSIDE"
        assert (tmp_path / "trace.csv").is_file()

    def test_circle_v_mvd(self, family_2x2_path, tmp_path, capsys):
        argv = ["loop", "--family", family_2x2_path, "--circle", "0,0,1", "--samples", "512", "--gauge", "vmvd"]
        assert main(argv + ["--out", str(tmp_path)]) == ExitCode.OK
        out = capsys.readouterr().out
        assert "+0.0000" in out and "+3.1416" not in out

    def test_scalar_family_writes_strict_json(self, write_family, tmp_path):
        family = write_family("scalar.json", [(0, 0, [[2.0]]), (1, 0, [[1.0]])])
        argv = ["loop", "--family", family, "--circle", "0,0,0.5", "--samples", "32", "--out", str(tmp_path)]
        assert main(argv) == ExitCode.OK
        assert strict_json(tmp_path / "phases.json")["diagnostics"]["min_gap"] == 0.0
        assert main(["scan", "--family", family, "--resolution", "3", "--out", str(tmp_path)]) == ExitCode.OK
        assert strict_json(tmp_path / "scan_summary.json")["min_gap"] == 0.0

    def test_loop_document_and_sidecar(self, family_2x2_path, data_dir, tmp_path):
        loop = str(data_dir / "loops" / "unit_square.json")
        code = main(["loop", "--family", family_2x2_path, "--loop", loop, "--sidecar", "--out", str(tmp_path)])
        assert code == ExitCode.OK
        assert (tmp_path / "trace_frames.bin").stat().st_size > 0

        checked = tmp_path / "checked"
        argv = ["verify", "--family", family_2x2_path, "--trace", str(tmp_path), "--checks", "0", "--out", str(checked)]
        assert main(argv) == ExitCode.OK
        trace = strict_json(checked / "verify.json")["trace"]
        assert trace["passed"] and trace["gauge"] == "joint"
        assert trace["max_reconstruction_error"] <= 1e-10 and trace["uv_mismatch"] <= 1e-8

    def test_truncated_sidecar(self, family_2x2_path, tmp_path, capsys):
        argv = ["loop", "--family", family_2x2_path, "--circle", "0,0,0.5", "--samples", "32", "--sidecar"]
        assert main(argv + ["--out", str(tmp_path)]) == ExitCode.OK
        sidecar = tmp_path / "trace_frames.bin"
        sidecar.write_bytes(sidecar.read_bytes()[:-16])
        argv = ["verify", "--family", family_2x2_path, "--trace", str(tmp_path), "--out", str(tmp_path / "v")]
        assert main(argv) == ExitCode.CONFIG
        assert "sidecar" in capsys.readouterr().err

    def test_through_rank_loss(self, family_2x2_path, tmp_path, capsys):
        argv = ["loop", "--family", family_2x2_path, "--circle", "1,0,1", "--samples", "64"]
        code = main(argv + ["--out", str(tmp_path)])
        assert code == ExitCode.CONTINUATION
        assert "continuation failed" in capsys.readouterr().err


class TestDetect:
    def test_constant_family(self, constant_path, tmp_path, capsys):
        argv = ["detect", "--family", constant_path, "--box", "-1,1,-1,1", "--out", str(tmp_path)]
        assert main(argv) == ExitCode.OK
        assert capsys.readouterr().out.startswith("0 points")
        assert json.loads((tmp_path / "detection.json").read_text())["points"] == []

    def test_example_2x2(self, family_2x2_path, tmp_path, capsys):
        argv = ["detect", "--family", family_2x2_path, "--box=-0.7,0.9,-0.6,0.8", "--loc-tol", "1e-2"]
        assert main(argv + ["--out", str(tmp_path)]) == ExitCode.OK
        assert capsys.readouterr().out.startswith("1 points")

    def test_budget(self, family_2x2_path, tmp_path):
        code = main(["detect", "--family", family_2x2_path, "--max-cells", "2", "--out", str(tmp_path)])
        assert code == ExitCode.BUDGET
        assert json.loads((tmp_path / "detection.json").read_text())["budget_exceeded"] is True


class TestVerify:
    def test_repeated_singular_values(self, write_family, tmp_path):
        family = write_family("identity.json", [(0, 0, np.eye(2))])
        argv = ["verify", "--family", family, "--point", "0,0", "--checks", "0", "--out", str(tmp_path)]
        assert main(argv) == ExitCode.OK
        doc = strict_json(tmp_path / "verify.json")
        assert doc["embedding_checks"]["spectrum_only"] == 1
        assert doc["points"][0]["berry"]["applicable"] is False
        assert doc["points"][0]["sigma_probe"]["min"] is None

    def test_generic_point(self, family_2x2_path, tmp_path, capsys):
        assert main(["verify", "--family", family_2x2_path, "--point", "0,0", "--out", str(tmp_path)]) == ExitCode.OK
        doc = json.loads((tmp_path / "verify.json").read_text())
        assert doc["passed"] and doc["points"][0]["regular"]
        assert doc["embedding_checks"]["count"] == 21
        berry = doc["points"][0]["berry"]
        assert berry["applicable"] and berry["agree"] and berry["max_difference"] <= 1e-2
        assert "(+0.00000000, +0.00000000): generic" in capsys.readouterr().out

    def test_non_generic_point(self, data_dir, tmp_path, capsys):
        family = str(data_dir / "families" / "non_generic.json")
        assert main(["verify", "--family", family, "--point", "0,0", "--out", str(tmp_path)]) == ExitCode.OK
        doc = json.loads((tmp_path / "verify.json").read_text())
        assert doc["points"][0]["regular"] is False and doc["points"][0]["agree"]
        assert "NOT generic" in capsys.readouterr().out

    def test_from_detection(self, family_2x2_path, tmp_path):
        detection = tmp_path / "detection.json"
        detection.write_text(json.dumps({"points": [{"xy": [0.0, 0.0]}]}))
        argv = ["verify", "--family", family_2x2_path, "--detection", str(detection), "--checks", "0"]
        assert main(argv + ["--out", str(tmp_path)]) == ExitCode.OK
        assert json.loads((tmp_path / "verify.json").read_text())["embedding_checks"]["count"] == 1


@pytest.mark.slow
def test_detect_example_4x4(data_dir, tmp_path, capsys):
    family = str(data_dir / "families" / "example_4x4.json")
    assert main(["detect", "--family", family, "--box", "-1,1,-1,1", "--out", str(tmp_path)]) == ExitCode.OK
    assert capsys.readouterr().out.startswith("1 points")
    (point,) = strict_json(tmp_path / "detection.json")["points"]
    assert abs(point["xy"][0] - 0.05) <= 0.05 and abs(point["xy"][1] - 0.10) <= 0.05
    assert point["generic"] is True
    argv = ["verify", "--family", family, "--detection", str(tmp_path / "detection.json"), "--out", str(tmp_path)]
    assert main(argv) == ExitCode.OK
