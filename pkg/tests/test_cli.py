import json

import numpy as np
import pytest

from fracvar import cli
from fracvar.core import Field, GridSpec
from fracvar.io import read_field_csv, write_field_csv


def _resolve(argv):
    return cli.resolve_config(cli.build_parser().parse_args(argv))


def _doc(out, command):
    return json.loads((out / f"{command.replace('-', '_')}.json").read_text(encoding="utf-8"))


class TestConfig:
    def test_layering(self, tmp_path):
        cfg = _resolve(["denoise"])
        assert cfg["n"] == 256 and cfg["dim"] == 2 and cfg["alpha"] == 0.5
        assert cfg["thresholds"] == cli.THRESHOLDS["denoise"]
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"n": 64, "alpha": 0.3, "max-iters": 7, "thresholds": {"gap": 1e-3}}))
        cfg = _resolve(["denoise", "--config", str(p)])
        assert (cfg["n"], cfg["alpha"], cfg["max_iters"], cfg["thresholds"]["gap"]) == (64, 0.3, 7, 1e-3)
        cfg = _resolve(["denoise", "--config", str(p), "--n", "32"])
        assert cfg["n"] == 32 and cfg["alpha"] == 0.3

    def test_list_flags(self):
        cfg = _resolve(["relax-demo", "--frequencies", "1,2,4", "--deltas", "1e-3 5e-4"])
        assert cfg["frequencies"] == [1, 2, 4] and cfg["deltas"] == [1e-3, 5e-4]

    def test_defaults_versioned(self):
        assert _resolve(["lift"])["defaults_version"] == cli.DEFAULTS_VERSION

    @pytest.mark.parametrize("argv", [
        ["verify-ops", "--alpha", "1.5"],
        ["verify-ops", "--n", "4"],
        ["poincare", "--trials", "0"],
        ["denoise", "--in", "/nonexistent/file.csv"],
        ["denoise", "--config", "/nonexistent/c.json"],
    ])
    def test_config_errors_exit_2(self, argv, tmp_path, capsys):
        assert cli.main(argv + ["--out", str(tmp_path)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("[1, 2]")
        assert cli.main(["lift", "--config", str(p), "--out", str(tmp_path)]) == 2
        p.write_text("{not json")
        assert cli.main(["lift", "--config", str(p), "--out", str(tmp_path)]) == 2

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            cli.build_parser().parse_args(["nope"])


class TestCommands:
    def test_verify_ops(self, tmp_path, capsys):
        code = cli.main(["verify-ops", "--n", "1024", "--box", "8", "--trials", "3", "--out", str(tmp_path)])
        doc = _doc(tmp_path, "verify-ops")
        assert set(doc) == {"command", "config", "results", "status", "metadata"}
        assert doc["results"]["transfer_riesz"] <= 1e-12
        assert doc["results"]["transfer_laplacian"] <= 1e-12
        assert doc["results"]["adjoint_spectral"] <= 1e-10
        assert (code == 0) == (doc["status"] == "PASS")
        assert capsys.readouterr().out.startswith(doc["status"] + " verify-ops:")

    def test_denoise_fidelity_limit(self, tmp_path):
        code = cli.main(["denoise", "--dim", "1", "--n", "128", "--lambda", "1e8", "--max-iters", "300",
                         "--out", str(tmp_path)])
        doc = _doc(tmp_path, "denoise")
        assert doc["results"]["interior_relative_deviation"] <= 1e-3
        assert doc["results"]["exterior_exact"]
        assert code == (0 if doc["status"] == "PASS" else 1)
        u = read_field_csv(tmp_path / "denoise_minimizer.csv")
        assert u.grid == GridSpec(1, 128, 1.0)

    def test_denoise_2d_writes_pgm(self, tmp_path):
        cli.main(["denoise", "--n", "32", "--max-iters", "50", "--out", str(tmp_path)])
        assert (tmp_path / "denoise_minimizer.pgm").exists()
        assert "final_gap" in _doc(tmp_path, "denoise")["results"]

    def test_denoise_from_file(self, tmp_path):
        g = GridSpec(1, 64, 1.0)
        src = tmp_path / "in.csv"
        write_field_csv(Field(g, np.sin(g.axis())), src)
        code = cli.main(["denoise", "--in", str(src), "--lambda", "1e8", "--max-iters", "300",
                         "--out", str(tmp_path / "o")])
        assert code in (0, 1)
        assert "interior_error_vs_clean" not in _doc(tmp_path / "o", "denoise")["results"]

    def test_plateau(self, tmp_path):
        code = cli.main(["plateau", "--n", "128", "--out", str(tmp_path)])
        doc = _doc(tmp_path, "plateau")
        assert code == 0 and doc["status"] == "PASS"
        assert doc["results"]["stationarity_relative"] <= 1e-4
        assert doc["results"]["energy_final"] <= doc["results"]["energy_initial"]

    def test_relax_demo_zero_profile(self, tmp_path):
        code = cli.main(["relax-demo", "--n", "4096", "--frequencies", "1,2,4", "--b-mass", "0",
                         "--out", str(tmp_path)])
        doc = _doc(tmp_path, "relax-demo")
        assert code == 0 and doc["results"]["gap"] == 0.0

    def test_relax_demo_unit_mass(self, tmp_path):
        cli.main(["relax-demo", "--n", "16384", "--frequencies", "1,2,4,8", "--out", str(tmp_path)])
        r = _doc(tmp_path, "relax-demo")["results"]
        assert r["F_limit"] == pytest.approx(1.0, abs=1e-3)
        assert r["min_energy"] < 0.5

    def test_poincare(self, tmp_path):
        cli.main(["poincare", "--n", "128", "--trials", "10", "--out", str(tmp_path)])
        r = _doc(tmp_path, "poincare")["results"]
        assert len(r["C_hat"]) == 3 and all(np.isfinite(r["C_hat"]))
        assert r["grids"] == [128, 256, 512]

    def test_area_strict(self, tmp_path):
        cli.main(["area-strict", "--n", "8192", "--deltas", "0.02,0.01,0.005", "--out", str(tmp_path)])
        r = _doc(tmp_path, "area-strict")["results"]
        assert r["relative_error_smallest_delta"] <= 0.05
        assert (tmp_path / "area_strict.csv").exists()

    def test_area_strict_delta_below_spacing(self, tmp_path):
        assert cli.main(["area-strict", "--n", "256", "--deltas", "1e-4", "--out", str(tmp_path)]) == 2

    def test_lift(self, tmp_path):
        cli.main(["lift", "--n", "2048", "--box", "8", "--out", str(tmp_path)])
        r = _doc(tmp_path, "lift")["results"]
        assert r["tv_exact"] == 2.0
        assert r["tv_relative_error"] <= 0.1


class TestReproducibility:
    def test_byte_identical_without_metadata(self, tmp_path):
        texts = []
        for k in range(2):
            out = tmp_path / str(k)
            cli.main(["poincare", "--n", "64", "--trials", "10", "--seed", "3", "--out", str(out)])
            doc = _doc(out, "poincare")
            doc["config"].pop("out")
            del doc["metadata"]
            texts.append(json.dumps(doc, sort_keys=True))
        assert texts[0] == texts[1]

    def test_json_keys_sorted(self, tmp_path):
        cli.main(["relax-demo", "--n", "4096", "--frequencies", "1,2", "--b-mass", "0", "--out", str(tmp_path)])
        text = (tmp_path / "relax_demo.json").read_text(encoding="utf-8")
        doc = json.loads(text)
        assert list(doc) == sorted(doc)
        assert set(doc["metadata"]) == {"runtime_s", "timestamp", "version"}

    @pytest.mark.parametrize("argv,name", [
        (["relax-demo", "--n", "4096", "--frequencies", "1,2", "--b-mass", "0"], "relax_demo.csv"),
        (["lift", "--n", "1024", "--box", "8"], "lift_u.csv"),
        (["plateau", "--n", "64", "--max-iters", "10"], "plateau_minimizer.csv"),
    ])
    def test_artifacts_embed_config(self, tmp_path, argv, name):
        cli.main(argv + ["--out", str(tmp_path)])
        lines = (tmp_path / name).read_text(encoding="utf-8").splitlines()
        tagged = [ln for ln in lines if ln.startswith("# config=")]
        assert len(tagged) == 1
        cfg = json.loads(tagged[0][len("# config="):])
        assert cfg["command"] == argv[0] and cfg["n"] == int(argv[2])
