"""End-to-end tests of the ou-x command line interface.

All invocations go through oux.cli.main with an argv list; files land in
pytest tmp_path directories.  Repeat-run comparisons are made on raw bytes
(the joint tables first drop their wall-clock column, which is exempt from
reproducibility).
"""

import numpy as np
import pytest

from oux import cli


def run_to_file(tmp_path, args, name="out.csv"):
    out = tmp_path / name
    rc = cli.main(args + ["--out", str(out)])
    return rc, out


def data_rows(text):
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    return header, rows


class TestExitCodes:
    def test_success(self, tmp_path):
        rc, _ = run_to_file(tmp_path, ["fpt", "--t-max", "1.0", "--points", "4"])
        assert rc == 0

    def test_argparse_rejects_unknown_flag(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["fpt", "--no-such-flag", "1"])
        assert exc.value.code == 2

    def test_unknown_preset_name(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["presets", "fig99"])
        assert exc.value.code == 2

    def test_config_error_is_2(self, tmp_path):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[problem]\nno-such-key = 1\n")
        rc = cli.main(["fpt", "--config", str(cfg)])
        assert rc == 2

    def test_invalid_problem_is_2(self):
        assert cli.main(["transform", "--sigma", "-1.0"]) == 2
        assert cli.main(["joint", "--direction", "below",
                         "--method", "simplified"]) == 2

    def test_numerical_failure_is_3(self, tmp_path):
        """Starving the importance sampler on a deep chain degenerates the
        weights, which must surface as the numerical-failure exit code."""
        rc = cli.main(["joint", "--t-grid", "0,1,2,3", "--barriers", "3,3,3",
                       "--method", "mc-integration", "--paths", "5000",
                       "--out", str(tmp_path / "x.csv")])
        assert rc == 3


class TestFptCommand:
    def test_header_and_first_row(self, tmp_path):
        rc, out = run_to_file(tmp_path, ["fpt", "--t-max", "1.0",
                                         "--points", "4"])
        assert rc == 0
        text = out.read_text()
        assert text.startswith("# ou-x fpt\n# version = ")
        header, rows = data_rows(text)
        assert header == ["t", "value", "error_bound"]
        assert rows[0] == ["0.000000000e+00", "1.000000000e+00",
                           "0.000000000e+00"]
        assert len(rows) == 5

    def test_header_keys_sorted(self, tmp_path):
        _, out = run_to_file(tmp_path, ["fpt", "--points", "2"])
        keys = [ln.split(" = ")[0][2:] for ln in out.read_text().splitlines()
                if " = " in ln and ln.startswith("# ")]
        keys.remove("version")
        assert keys == sorted(keys)

    def test_survival_decreases(self, tmp_path):
        _, out = run_to_file(tmp_path, ["fpt", "--t-max", "3.0",
                                        "--points", "12"])
        _, rows = data_rows(out.read_text())
        vals = [float(r[1]) for r in rows]
        assert vals == sorted(vals, reverse=True)

    def test_density_skips_origin(self, tmp_path):
        _, out = run_to_file(tmp_path, ["fpt", "--quantity", "density",
                                        "--t-max", "2.0", "--points", "4"])
        _, rows = data_rows(out.read_text())
        assert float(rows[0][0]) > 0.0
        assert all(float(r[1]) >= 0.0 for r in rows)

    def test_reflected_lower_barrier(self, tmp_path):
        rc, out = run_to_file(tmp_path, ["fpt", "--a", "-1.0", "--t-max",
                                         "2.0", "--points", "4"])
        assert rc == 0
        _, rows = data_rows(out.read_text())
        vals = [float(r[1]) for r in rows]
        assert vals[0] == 1.0
        assert all(0.0 <= v <= 1.0 for v in vals)

    def test_byte_identical_reruns(self, tmp_path):
        args = ["fpt", "--t-max", "2.0", "--points", "6", "--quantity",
                "density"]
        _, out = run_to_file(tmp_path, args, "a.csv")
        first = out.read_bytes()
        rc, _ = run_to_file(tmp_path, args, "a.csv")
        assert rc == 0
        assert out.read_bytes() == first

    def test_stdout_matches_file(self, tmp_path, capsys):
        """Identical output either way, apart from the echoed out path."""
        args = ["fpt", "--t-max", "1.0", "--points", "3"]
        assert cli.main(args) == 0
        shown = capsys.readouterr().out
        _, out = run_to_file(tmp_path, args)

        def without_out_line(text):
            return [ln for ln in text.splitlines()
                    if not ln.startswith("# out = ")]

        assert without_out_line(shown) == without_out_line(out.read_text())


class TestJointCommand:
    def test_method_rows(self, tmp_path):
        rc, out = run_to_file(tmp_path, ["joint", "--method", "all",
                                         "--paths", "20000", "--steps", "100"])
        assert rc == 0
        header, rows = data_rows(out.read_text())
        assert header == ["method", "prob", "err", "wall_ms"]
        assert [r[0] for r in rows] == ["quadrature", "simplified",
                                        "mc-integration", "direct-mc"]

    def test_methods_agree(self, tmp_path):
        _, out = run_to_file(tmp_path, ["joint", "--method", "all",
                                        "--paths", "40000", "--steps", "100"])
        _, rows = data_rows(out.read_text())
        vals = {r[0]: (float(r[1]), float(r[2])) for r in rows}
        quad = vals["quadrature"][0]
        mc, mc_err = vals["mc-integration"]
        assert abs(mc - quad) <= 4.0 * mc_err
        assert vals["simplified"][0] == pytest.approx(quad, abs=1e-10)

    def test_identical_after_dropping_wall_clock(self, tmp_path):
        args = ["joint", "--method", "quadrature"]
        _, out = run_to_file(tmp_path, args, "a.csv")

        def stripped(text):
            return [ln.rsplit(",", 1)[0] if not ln.startswith("#") else ln
                    for ln in text.splitlines()]

        first = stripped(out.read_text())
        run_to_file(tmp_path, args, "a.csv")
        assert stripped(out.read_text()) == first

    def test_all_below_direction(self, tmp_path):
        rc, out = run_to_file(tmp_path, ["joint", "--direction", "below",
                                         "--method", "quadrature",
                                         "--barriers", "1.5,1.5"])
        assert rc == 0
        _, rows = data_rows(out.read_text())
        assert 0.8 < float(rows[0][1]) < 1.0

    def test_grid_flags_forwarded(self, tmp_path):
        rc = cli.main(["joint", "--method", "quadrature", "--grid-min", "-2",
                       "--grid-max", "2", "--grid-l", "401",
                       "--out", str(tmp_path / "x.csv")])
        assert rc == 3  # too narrow for the stationary mass guard


class TestTransformCommand:
    def test_constant_parameter_columns(self, tmp_path):
        _, out = run_to_file(tmp_path, ["transform", "--mu", "0.25", "--lam",
                                        "2.0", "--b", "1.0", "--horizon",
                                        "1.0", "--points", "4"])
        header, rows = data_rows(out.read_text())
        assert header == ["t", "alpha", "beta", "gamma", "barrier"]
        # cells carry 10 significant digits, so compare at that grain
        for r in rows:
            t, alpha, beta, gamma, barrier = map(float, r)
            assert gamma == pytest.approx(t / 2.0, abs=5e-10)
            assert alpha == pytest.approx(np.sqrt(2.0), abs=5e-10)
            assert barrier == pytest.approx(alpha * 1.0 - beta, abs=2e-9)

    def test_selector_verdict_in_header(self, tmp_path):
        _, out = run_to_file(tmp_path, ["transform", "--mu", "0.25",
                                        "--points", "2"])
        text = out.read_text()
        assert "# verdict = DirectApprox" in text
        assert "# selector_degenerate = True" in text
        assert "# max_residual = " in text

    def test_byte_identical_reruns(self, tmp_path):
        args = ["transform", "--mu", "0.3", "--horizon", "2.0",
                "--points", "5"]
        _, out = run_to_file(tmp_path, args, "a.csv")
        first = out.read_bytes()
        run_to_file(tmp_path, args, "a.csv")
        assert out.read_bytes() == first

    def test_selector_window_flags(self, tmp_path):
        _, out = run_to_file(tmp_path, ["transform", "--t1", "0.5", "--t2",
                                        "1.5", "--points", "2"])
        assert "# verdict = " in out.read_text()


class TestConfigFiles:
    def test_file_sets_values(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text("[problem]\nt-max = 1.0\npoints = 3\n")
        rc, out = run_to_file(tmp_path, ["fpt", "--config", str(cfg)])
        assert rc == 0
        text = out.read_text()
        assert "# t-max = 1.0" in text
        assert "# points = 3" in text
        _, rows = data_rows(text)
        assert len(rows) == 4

    def test_flag_overrides_file(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text("[problem]\nt-max = 1.0\npoints = 3\n")
        rc, out = run_to_file(tmp_path, ["fpt", "--config", str(cfg),
                                         "--points", "2"])
        assert rc == 0
        _, rows = data_rows(out.read_text())
        assert len(rows) == 3

    def test_unknown_section_rejected(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text("[misc]\nt-max = 1.0\n")
        assert cli.main(["fpt", "--config", str(cfg)]) == 2

    def test_wrong_section_rejected(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text("[numerics]\nt-max = 1.0\n")
        assert cli.main(["fpt", "--config", str(cfg)]) == 2

    def test_missing_file_rejected(self, tmp_path):
        assert cli.main(["fpt", "--config", str(tmp_path / "nope.ini")]) == 2

    def test_numerics_section(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text("[numerics]\nk-terms = 6\n[problem]\npoints = 2\n"
                       "t-max = 1.0\n")
        rc, out = run_to_file(tmp_path, ["fpt", "--config", str(cfg)])
        assert rc == 0
        assert "# k-terms = 6" in out.read_text()


class TestPresets:
    def test_eigenvalue_gap_table(self, tmp_path, capsys):
        rc = cli.main(["presets", "fig1", "--out", str(tmp_path)])
        assert rc == 0
        out = tmp_path / "fig1.csv"
        assert str(out) in capsys.readouterr().out
        text = out.read_text()
        assert text.startswith("# ou-x presets fig1\n")
        header, rows = data_rows(text)
        assert header == ["a", "k", "gap"]
        gaps = [float(r[2]) for r in rows]
        assert all(g > 0.0 for g in gaps)

    # early curve points clamp tiny negative series noise, with a warning
    @pytest.mark.filterwarnings("ignore:negative density value clamped")
    def test_density_curves_preset(self, tmp_path):
        rc = cli.main(["presets", "fig2", "--points", "40",
                       "--out", str(tmp_path)])
        assert rc == 0
        header, rows = data_rows((tmp_path / "fig2.csv").read_text())
        assert header == ["a", "t", "value", "error_bound"]
        levels = {r[0] for r in rows}
        assert len(levels) == 4

    def test_selector_preset_verdicts(self, tmp_path):
        assert cli.main(["presets", "fig6", "--points", "20",
                         "--out", str(tmp_path)]) == 0
        assert "# verdict = Transformation" in (tmp_path / "fig6.csv").read_text()
        assert cli.main(["presets", "fig7", "--points", "20",
                         "--out", str(tmp_path)]) == 0
        text7 = (tmp_path / "fig7.csv").read_text()
        assert "# verdict = DirectApprox" in text7
        assert "# selector_hypothesis_failed = True" in text7

    def test_truncation_preset_small(self, tmp_path):
        rc = cli.main(["presets", "fig4", "--k-terms", "12",
                       "--out", str(tmp_path)])
        assert rc == 0
        header, rows = data_rows((tmp_path / "fig4.csv").read_text())
        assert header == ["t", "k", "error", "bound"]
        for r in rows:
            assert float(r[3]) > 0.0
