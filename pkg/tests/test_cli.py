import math

import numpy as np
import pytest

from randrk.cli import main, write_csv
from randrk.harness import ConvergenceRow, ConvergenceTable


def run_cli(*args):
    return main(list(args))


def make_table(n_rows=3):
    rows = tuple(
        ConvergenceRow(step=2.0 ** -(3 + i), error=0.1 * 2.0 ** -(3 + i),
                       sample_std=0.01)
        for i in range(n_rows)
    )
    return ConvergenceTable(problem="jump", method="rand_euler", p=2.0,
                            samples=100, master_seed=7, rows=rows)


class TestWriteCsv:
    def test_header_and_row_count(self, tmp_path):
        path = tmp_path / "t.csv"
        write_csv(make_table(3), str(path))
        lines = path.read_bytes().split(b"\n")
        assert lines[0] == b"problem,method,p,h,samples,error,stderr,seed"
        assert len([ln for ln in lines if ln]) == 4

    def test_empty_table_is_header_only(self, tmp_path):
        table = ConvergenceTable(problem="jump", method="rand_euler", p=2.0,
                                 samples=100, master_seed=7, rows=())
        path = tmp_path / "e.csv"
        write_csv(table, str(path))
        assert path.read_text() == "problem,method,p,h,samples,error,stderr,seed\n"

    def test_lf_line_endings(self, tmp_path):
        path = tmp_path / "t.csv"
        write_csv(make_table(), str(path))
        assert b"\r" not in path.read_bytes()

    def test_full_precision_round_trip(self, tmp_path):
        value = 0.1234567890123456789
        table = ConvergenceTable(
            problem="x", method="rand_euler", p=2.0, samples=1, master_seed=0,
            rows=(ConvergenceRow(step=0.5, error=value, sample_std=value / 3), ),
        )
        path = tmp_path / "p.csv"
        write_csv(table, str(path))
        cell = path.read_text().splitlines()[1].split(",")[5]
        assert float(cell) == value

    def test_rewrite_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_csv(make_table(), str(a))
        write_csv(make_table(), str(b))
        assert a.read_bytes() == b.read_bytes()


class TestConverge:
    def test_jump_run_and_csv(self, tmp_path, capsys):
        out = tmp_path / "jump.csv"
        code = run_cli("converge", "--problem", "jump", "--method", "rand-rk2",
                       "--p", "2", "--samples", "60", "--n-min", "3",
                       "--n-max", "6", "--seed", "42", "--out", str(out))
        assert code == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 5  # header + 4 rows
        printed = capsys.readouterr().out
        assert "fitted slope" in printed

    def test_rerun_is_byte_identical(self, tmp_path):
        outs = []
        for name in ("a.csv", "b.csv"):
            out = tmp_path / name
            code = run_cli("converge", "--problem", "manufactured", "--gamma",
                           "0.5", "--method", "rand-euler", "--samples", "16",
                           "--n-min", "3", "--n-max", "5", "--seed", "9",
                           "--out", str(out))
            assert code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_thread_flag_does_not_change_bytes(self, tmp_path):
        outs = []
        for name, threads in (("a.csv", "1"), ("b.csv", "4")):
            out = tmp_path / name
            code = run_cli("converge", "--problem", "jump", "--method",
                           "rand-euler", "--samples", "32", "--n-min", "3",
                           "--n-max", "5", "--seed", "5", "--threads", threads,
                           "--out", str(out))
            assert code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_gamma_validation_exits_2(self, capsys):
        code = run_cli("converge", "--problem", "singular", "--gamma", "0.5",
                       "--method", "rand-euler", "--samples", "8",
                       "--n-min", "3", "--n-max", "5")
        assert code == 2
        assert "gamma must exceed 1" in capsys.readouterr().err

    def test_missing_required_parameter_exits_2(self, capsys):
        code = run_cli("converge", "--problem", "singular",
                       "--method", "rand-euler")
        assert code == 2
        assert "--gamma" in capsys.readouterr().err

    def test_unknown_flag_exits_2(self):
        assert run_cli("converge", "--problem", "jump", "--method",
                       "rand-euler", "--frobnicate", "1") == 2

    def test_unknown_method_exits_2(self):
        assert run_cli("converge", "--problem", "jump", "--method", "heun") == 2

    def test_numerical_abort_exits_3(self, capsys):
        # classical euler evaluates the singular-lip field at its T/2 node
        code = run_cli("converge", "--problem", "singular-lip", "--alpha",
                       "0.25", "--method", "euler", "--samples", "4",
                       "--n-min", "3", "--n-max", "5")
        assert code == 3
        assert "numerical abort" in capsys.readouterr().err

    def test_adversarial_with_randomized_prints_na_slope(self, capsys, tmp_path):
        out = tmp_path / "adv.csv"
        code = run_cli("converge", "--problem", "adversarial", "--method",
                       "rand-euler", "--samples", "8", "--n-min", "3",
                       "--n-max", "5", "--out", str(out))
        assert code == 0
        assert "n/a" in capsys.readouterr().out


class TestQuad:
    def test_singular_quad(self, tmp_path, capsys):
        out = tmp_path / "q.csv"
        code = run_cli("quad", "--problem", "singular", "--gamma", "2",
                       "--h", "0.0625", "--seed", "3", "--out", str(out))
        assert code == 0
        assert "true integral = 2" in capsys.readouterr().out
        assert len(out.read_text().splitlines()) == 17  # header + 16 rows

    def test_state_dependent_rejected(self, capsys):
        code = run_cli("quad", "--problem", "jump", "--h", "0.25")
        assert code == 2
        assert "state-independent" in capsys.readouterr().err


class TestSolve:
    def test_solve_writes_trajectory(self, tmp_path, capsys):
        out = tmp_path / "s.csv"
        code = run_cli("solve", "--problem", "jump", "--method", "rand-rk2",
                       "--h", "0.125", "--seed", "1", "--out", str(out))
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "j,t,u0,tau"
        assert len(lines) == 10  # header + 9 nodes
        assert "max node error" in capsys.readouterr().out

    def test_classical_has_empty_tau_column(self, tmp_path):
        out = tmp_path / "s.csv"
        run_cli("solve", "--problem", "jump", "--method", "euler",
                "--h", "0.25", "--out", str(out))
        rows = out.read_text().splitlines()[1:]
        assert all(r.endswith(",") for r in rows)


class TestAsCheck:
    def test_runs_and_reports(self, tmp_path, capsys):
        out = tmp_path / "as.csv"
        code = run_cli("as-check", "--problem", "singular-lip", "--alpha",
                       "0.25", "--method", "rand-euler", "--p", "4",
                       "--samples", "30", "--n-min", "3", "--n-max", "6",
                       "--seed", "2", "--out", str(out))
        assert code == 0
        printed = capsys.readouterr().out
        assert "violation fraction at finest level" in printed
        assert len(out.read_text().splitlines()) == 5  # header + 4 levels


class TestAdversarial:
    def test_prints_classical_one_randomized_zero(self, capsys):
        code = run_cli("adversarial", "--h", "0.0625", "--seed", "1",
                       "--samples", "200")
        assert code == 0
        printed = capsys.readouterr().out
        assert "classical euler error: 1" in printed
        assert "randomized euler error: 0" in printed
        assert "200/200" in printed


class TestConstants:
    def test_integrable_problem(self, capsys):
        code = run_cli("constants", "--problem", "singular-lip", "--alpha",
                       "0.25", "--cp", "10")
        assert code == 0
        assert "order 1/2" in capsys.readouterr().out

    def test_hoelder_problem_reports_three_constants(self, capsys):
        code = run_cli("constants", "--problem", "manufactured", "--gamma",
                       "0.5", "--cp", "1")
        assert code == 0
        printed = capsys.readouterr().out
        assert "C_U" in printed and "C_V" in printed

    def test_unknown_norms_rejected(self, capsys):
        # gamma = 2 integrand has no finite L^2 norm to work with
        code = run_cli("constants", "--problem", "singular", "--gamma", "2")
        assert code == 2
        assert "constants unavailable" in capsys.readouterr().err

    def test_adversarial_needs_grid_step(self, capsys):
        code = run_cli("constants", "--problem", "adversarial")
        assert code == 2
        assert "--h" in capsys.readouterr().err
        assert run_cli("constants", "--problem", "adversarial", "--h", "0.25") == 0


class TestPlot:
    def _write_converge_csv(self, tmp_path, methods=("rand_euler",), rows=4):
        path = tmp_path / "in.csv"
        lines = ["problem,method,p,h,samples,error,stderr,seed"]
        for method in methods:
            for n in range(3, 3 + rows):
                h = 2.0 ** -n
                lines.append(f"jump,{method},2,{h!r},100,{0.3 * h ** 1.5!r},0,1")
        path.write_text("\n".join(lines) + "\n")
        return path

    def test_single_series(self, tmp_path):
        csv_path = self._write_converge_csv(tmp_path)
        out = tmp_path / "plot.svg"
        assert run_cli("plot", str(csv_path), "--out", str(out)) == 0
        content = out.read_text()
        assert "<svg" in content
        assert "slope=1.50" in content

    def test_two_series_two_legends(self, tmp_path):
        csv_path = self._write_converge_csv(tmp_path, methods=("rand_euler", "rand_rk2"))
        out = tmp_path / "plot.svg"
        assert run_cli("plot", str(csv_path), "--out", str(out)) == 0
        content = out.read_text()
        assert "jump/rand_euler" in content and "jump/rand_rk2" in content

    def test_single_row_exits_2(self, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text("problem,method,p,h,samples,error,stderr,seed\n"
                        "jump,rand_euler,2,0.125,10,0.01,0,1\n")
        assert run_cli("plot", str(path), "--out", str(tmp_path / "o.svg")) == 2

    def test_malformed_csv_exits_2(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("not,a,converge,table\n1,2,3,4\n5,6,7,8\n")
        assert run_cli("plot", str(path), "--out", str(tmp_path / "o.svg")) == 2


class TestCliSlopeExample:
    @pytest.mark.slow
    def test_jump_rk2_seed42_slope_near_three_halves(self, tmp_path, capsys):
        out = tmp_path / "jump.csv"
        code = run_cli("converge", "--problem", "jump", "--method", "rand-rk2",
                       "--p", "2", "--samples", "1000", "--n-min", "3",
                       "--n-max", "10", "--seed", "42", "--out", str(out))
        assert code == 0
        assert len(out.read_text().splitlines()) == 9  # header + 8 rows
        printed = capsys.readouterr().out
        slope_line = [ln for ln in printed.splitlines() if "fitted slope" in ln][0]
        slope = float(slope_line.split(":")[1].split("(")[0])
        assert math.isclose(slope, 1.5, abs_tol=0.2)
