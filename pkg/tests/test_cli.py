import json
import subprocess
import sys

import pytest

from hetgame.cli import EXIT_INPUT, EXIT_OK, EXIT_UNCONVERGED, main, parse_alphas
from hetgame.metrics import SWEEP_HEADER
from hetgame.path_enum import parse_path_dump


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def report_fields(text):
    return dict(line.split(" = ", 1) for line in text.strip().splitlines())


class TestTwoLink:
    def test_reference_compensating(self, capsys):
        code, out, _ = run(capsys, "two-link", "--a1", "0.3", "--b1", "1", "--a2", "0.7", "--b2", "0.8", "--alpha", "0.2")
        assert code == EXIT_OK
        rep = report_fields(out)
        assert rep["A"] == "0.5" and rep["f2opt"] == "0.4"
        assert rep["regime"] == "COMPENSATING"
        assert rep["flow"] == "(0.6, 0.4)"
        assert float(rep["total cost"]) == pytest.approx(1.14)

    def test_pigou_prices(self, capsys):
        code, out, _ = run(capsys, "two-link", "--preset", "pigou", "--alpha", "0.75")
        rep = report_fields(out)
        assert code == EXIT_OK
        assert float(rep["P_A"]) == pytest.approx(1.0833, abs=1e-4)
        assert float(rep["P_G"]) == pytest.approx(1.3333, abs=1e-4)

    def test_threshold_violation(self, capsys):
        code, out, err = run(capsys, "two-link", "--a1", "5", "--b1", "10", "--a2", "1", "--b2", "0")
        assert code == EXIT_INPUT
        assert "A = 2.5" in err
        assert out == ""

    def test_sweep_table(self, capsys, tmp_path):
        target = tmp_path / "two_link.csv"
        code, _, _ = run(capsys, "two-link", "--preset", "reference", "--sweep", "0:0.25:1", "--sweep-out", str(target))
        assert code == EXIT_OK
        lines = target.read_text().splitlines()
        assert lines[0] == "alpha,x2,y2,f2,total_cost,P_A,P_G"
        assert [float(r.split(",")[3]) for r in lines[1:]] == pytest.approx([0.4, 0.4, 0.5, 0.5, 0.5])


class TestPaths:
    def test_k1_one_path_per_pair(self, capsys):
        code, out, _ = run(capsys, "paths", "--k", "1")
        assert code == EXIT_OK
        rows = parse_path_dump(out)
        assert [r[0] for r in rows] == list(range(528))

    def test_k4_blocks(self, capsys, tmp_path):
        target = tmp_path / "paths.txt"
        assert main(["paths", "--k", "4", "--out", str(target)]) == EXIT_OK
        rows = parse_path_dump(target.read_text())
        counts = {}
        for pair, _, _ in rows:
            counts[pair] = counts.get(pair, 0) + 1
        assert len(counts) == 528 and max(counts.values()) <= 4

    def test_k0_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["paths", "--k", "0"])
        assert err.value.code == 2

    def test_unreachable_pair(self, capsys, tmp_path):
        net = tmp_path / "net.tntp"
        trips = tmp_path / "trips.tntp"
        net.write_text("<NUMBER OF NODES> 3\n<NUMBER OF LINKS> 1\n<END OF METADATA>\n1 2 10 1 1 0.15 4 ;\n")
        trips.write_text("<NUMBER OF ZONES> 3\n<END OF METADATA>\nOrigin 1\n 3 : 5.0;\n")
        code, _, err = run(capsys, "paths", "--net", str(net), "--trips", str(trips))
        assert code == EXIT_INPUT
        assert "1 -> 3" in err


class TestSolve:
    def test_preset_writes_files(self, capsys, tmp_path):
        code, out, _ = run(capsys, "solve", "--preset", "reference", "--alpha", "0.2", "--out", str(tmp_path))
        assert code == EXIT_OK
        eq_text = (tmp_path / "equilibrium_alpha0.2.csv").read_text()
        assert eq_text.startswith("edge_id,f_e,latency,f_e_latency\n") and eq_text.endswith("\n")
        rep = (tmp_path / "price_report_alpha0.2.csv").read_text().splitlines()
        assert rep[0] == SWEEP_HEADER and rep[1].startswith("0.2,1.14,1.14,1,")
        assert out.splitlines() == rep
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == "solve" and manifest["converged"] is True and manifest["k_paths"] == 4

    def test_alpha_zero_is_social_optimum(self, capsys, tmp_path):
        code, out, _ = run(capsys, "solve", "--preset", "reference", "--alpha", "0", "--out", str(tmp_path))
        assert code == EXIT_OK
        assert "0.6,1.18" in (tmp_path / "equilibrium_alpha0.csv").read_text()

    @pytest.mark.slow
    def test_sioux_falls(self, capsys, tmp_path):
        code, out, _ = run(capsys, "solve", "--alpha", "0.5", "--k-paths", "4", "--out", str(tmp_path))
        assert code == EXIT_OK
        assert out.splitlines()[1].endswith(",true")
        edge_rows = (tmp_path / "equilibrium_alpha0.5.csv").read_text().split("\n\n")[0].splitlines()
        assert len(edge_rows) == 77

    def test_missing_trips_file(self, capsys, tmp_path):
        net = tmp_path / "net.tntp"
        net.write_text("<NUMBER OF NODES> 2\n<END OF METADATA>\n1 2 10 1 1 0.15 4 ;\n")
        code, _, err = run(capsys, "solve", "--net", str(net), "--trips", str(tmp_path / "nope.tntp"), "--alpha", "0.5")
        assert code == EXIT_INPUT
        assert "nope.tntp" in err

    def test_parse_error_names_line(self, capsys, tmp_path):
        net = tmp_path / "net.tntp"
        trips = tmp_path / "trips.tntp"
        net.write_text("<NUMBER OF NODES> 2\n<END OF METADATA>\n1 2 -10 1 1 0.15 4 ;\n")
        trips.write_text("<END OF METADATA>\n")
        code, _, err = run(capsys, "solve", "--net", str(net), "--trips", str(trips), "--alpha", "0.5")
        assert code == EXIT_INPUT
        assert "line 3" in err

    def test_unconverged_exit_code(self, capsys, tmp_path):
        code, _, err = run(capsys, "solve", "--preset", "reference", "--alpha", "0.3",
                           "--max-iters", "1", "--outer-tol", "1e-15", "--out", str(tmp_path))
        assert code == EXIT_UNCONVERGED
        assert "did not converge" in err
        assert (tmp_path / "equilibrium_alpha0.3.csv").exists()

    def test_byte_identical_reruns(self, capsys, tmp_path):
        outputs = []
        for name in ("a", "b"):
            d = tmp_path / name
            assert main(["solve", "--preset", "pigou", "--alpha", "0.35", "--out", str(d)]) == EXIT_OK
            outputs.append([(d / f).read_bytes() for f in ("equilibrium_alpha0.35.csv", "price_report_alpha0.35.csv")])
        capsys.readouterr()
        assert outputs[0] == outputs[1]

    def test_preset_excludes_files(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["solve", "--preset", "pigou", "--net", "x", "--trips", "y", "--alpha", "0.5"])
        assert err.value.code == 2


class TestSweep:
    def test_default_grid_has_eleven_rows(self, capsys, tmp_path):
        code, _, _ = run(capsys, "sweep", "--preset", "reference", "--alphas", "0:0.1:1",
                         "--plot-data", "--out", str(tmp_path))
        assert code == EXIT_OK
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert lines[0] == SWEEP_HEADER and len(lines) == 12
        p_a = (tmp_path / "P_A.dat").read_text().splitlines()
        p_g = (tmp_path / "P_G.dat").read_text().splitlines()
        assert len(p_a) == 11 and len(p_g) == 9
        assert p_a[0] == "0 1"

    def test_single_alpha(self, capsys, tmp_path):
        code, _, _ = run(capsys, "sweep", "--preset", "pigou", "--alphas", "0.5", "--out", str(tmp_path))
        assert code == EXIT_OK
        assert len((tmp_path / "sweep.csv").read_text().splitlines()) == 2

    def test_seed_free_rejected(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["--seed-free", "sweep", "--preset", "pigou"])
        assert err.value.code == 2
        assert "reserved" in capsys.readouterr().err

    @pytest.mark.parametrize("text", ["0:-0.1:1", "a:b:c", "0.2,1.5", ""])
    def test_bad_alphas(self, text):
        import argparse

        with pytest.raises(argparse.ArgumentTypeError):
            parse_alphas(text)

    def test_alpha_grid_is_exact(self):
        assert parse_alphas("0:0.1:1")[3] == 0.3
        assert parse_alphas("0.1, 0.5") == [0.1, 0.5]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hetgame", "two-link", "--a1", "5", "--b1", "10", "--a2", "1", "--b2", "0"],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_INPUT
    assert proc.stderr.startswith("error:")
