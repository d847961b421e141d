import json
import re
from pathlib import Path

import pytest

from memcav import cli
from memcav.config import preset_text

README = Path(__file__).resolve().parents[1] / "README.md"


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = cli.main([*args, "--output-dir", str(out), "--threads", "2"])
    return code, out


def read_report(out):
    return json.loads((out / "report.json").read_text())


# -- config resolution ---------------------------------------------------------


def test_no_override_echo_is_preset_verbatim(tmp_path):
    code, out = run(tmp_path, "stopband", "--preset", "SB")
    assert code == 0
    assert (out / "config.yaml").read_text() == preset_text("SB")


def test_override_resolves_and_echoes(tmp_path):
    rc = cli.parse_config(["stopband", "--set", "membrane.thickness_nm=3000", "--output-dir", str(tmp_path)])
    assert rc.config["membrane"]["thickness_nm"] == 3000
    assert "thickness_nm: 3000" in rc.config_echo
    same = cli.parse_config(["stopband", "--set", "membrane.thickness_nm=2850.0", "--output-dir", str(tmp_path)])
    assert same.config_echo == preset_text("SB")


def test_precedence_flags_over_file_over_preset(tmp_path):
    f = tmp_path / "c.yaml"
    f.write_text("schema_version: 1\npurcell:\n  quality_factor: 5000.0\n  overlap: 0.5\n")
    rc = cli.parse_config(["purcell", "--config", str(f), "--q", "7.4e4", "--output-dir", str(tmp_path)])
    assert rc.config["purcell"]["quality_factor"] == 7.4e4
    assert rc.config["purcell"]["overlap"] == 0.5
    assert rc.config["purcell"]["waist_um"] == 1.66


def test_env_output_dir(tmp_path):
    rc = cli.parse_config(["stopband"], environ={cli.OUTPUT_DIR_ENV: str(tmp_path / "env")})
    assert rc.output_dir == tmp_path / "env"


def test_negative_exclusion_windows(tmp_path):
    rc = cli.parse_config(["fit-g2", "--synthetic", "--exclude", "12:22", "--exclude", "-22:-12"])
    assert rc.config["analysis"]["g2_exclude_ns"] == [[12.0, 22.0], [-22.0, -12.0]]
    rc = cli.parse_config(["fit-g2", "--synthetic", "--no-exclude"])
    assert rc.config["analysis"]["g2_exclude_ns"] == []


# -- exit codes ----------------------------------------------------------------


def test_exit_usage_unknown_key(tmp_path, capsys):
    code, _ = run(tmp_path, "stopband", "--set", "membrane.thickness=1")
    assert code == cli.EXIT_USAGE
    assert "membrane.thickness_nm" in capsys.readouterr().err


@pytest.mark.parametrize(
    "args",
    [
        ["nonsense"],
        ["fit-g2"],
        ["fit-g2", "missing.csv"],
        ["stopband", "--synthetic"],
        ["fit-g2", "--synthetic", "--exclude", "3"],
        ["stopband", "--preset", "SX"],
    ],
)
def test_exit_usage(tmp_path, args):
    assert run(tmp_path, *args)[0] == cli.EXIT_USAGE


def test_threads_must_be_positive(tmp_path):
    assert cli.main(["stopband", "--threads", "0", "--output-dir", str(tmp_path)]) == cli.EXIT_USAGE


def test_missing_output_parent_fails_before_compute(tmp_path):
    code = cli.main(["stopband", "--output-dir", str(tmp_path / "a" / "b")])
    assert code == cli.EXIT_USAGE
    assert not (tmp_path / "a").exists()


def test_output_dir_created(tmp_path):
    code, out = run(tmp_path, "stopband", name="new")
    assert code == 0 and out.is_dir()


def test_exit_data_unit_mismatch(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("delay_ghz,counts\n0,1\n1,2\n")
    code, out = run(tmp_path, "fit-g2", str(p))
    assert code == cli.EXIT_DATA
    rep = read_report(out)
    assert rep["status"] == "error" and "unit mismatch" in rep["error"]


def test_exit_numerical_nonconverged(tmp_path):
    p = tmp_path / "flat.csv"
    p.write_text("delay_ns,counts\n" + "".join(f"{i},5\n" for i in range(60)))
    code, out = run(tmp_path, "fit-lifetime", str(p))
    assert code == cli.EXIT_NUMERICAL
    assert (out / "fit_lifetime.json").exists()
    assert read_report(out)["status"] == "error"


def test_exit_data_missing_calibration(tmp_path):
    frames = tmp_path / "frames.csv"
    frames.write_text("frame_index,wavelength_nm,counts\n0,900,1\n")
    assert run(tmp_path, "fit-thickness", str(frames))[0] == cli.EXIT_USAGE


# -- outputs -------------------------------------------------------------------


def test_purcell_command(tmp_path):
    code, out = run(tmp_path, "purcell", "--preset", "SB", "--q", "7.4e4", "--v-lambda3", "12", "--n", "2.63")
    assert code == 0
    d = json.loads((out / "purcell.json").read_text())
    assert d["C0_predicted"] == pytest.approx(25.7, rel=0.02)
    assert d["C_eff_measured"] == pytest.approx(0.3036, rel=1e-3)


def test_purcell_from_cavity(tmp_path):
    code, out = run(tmp_path, "purcell", "--from-cavity")
    assert code == 0
    d = json.loads((out / "purcell.json").read_text())
    assert d["L_eff_um"] == pytest.approx(1.683, rel=0.01)
    assert (out / "contact_mode_profile.csv").exists()


def test_fit_g2_from_file(tmp_path):
    from memcav.synthetic import g2_histogram

    h = g2_histogram(seed=1)
    p = tmp_path / "data.csv"
    p.write_text("delay_ns,counts\n" + "".join(f"{float(t)!r},{float(c)!r}\n" for t, c in zip(h.tau_bins, h.coincidences)))
    code, out = run(tmp_path, "fit-g2", str(p), "--exclude", "12:22", "--exclude", "-22:-12")
    assert code == 0
    fit = json.loads((out / "fit_g2.json").read_text())
    assert fit["params"]["g2_zero"]["value"] == pytest.approx(0.024, abs=0.02)
    assert fit["exclusion_windows"] == [[12.0, 22.0], [-22.0, -12.0]]


def test_manifest_lists_every_file(tmp_path):
    code, out = run(tmp_path, "fit-lifetime", "--synthetic", "--seed", "2")
    assert code == 0
    rep = read_report(out)
    listed = {o["file"] for o in rep["outputs"]}
    on_disk = {p.name for p in out.iterdir()} - {"report.json"}
    assert listed == on_disk
    assert rep["config"]["emitter"]["tau_cavity_ns"] == 5.6
    assert rep["wall_time_s"] >= 0


def test_rerun_identical(tmp_path):
    a = run(tmp_path, "noise", "--synthetic", "--seed", "4", name="a")[1]
    b = run(tmp_path, "noise", "--synthetic", "--seed", "4", name="b")[1]
    ra, rb = read_report(a), read_report(b)
    assert ra["outputs"] == rb["outputs"]
    c = run(tmp_path, "noise", "--synthetic", "--seed", "5", name="c")[1]
    assert read_report(c)["outputs"] != ra["outputs"]


# -- documented interface ------------------------------------------------------


def _cli_section():
    text = README.read_text()
    m = re.search(r"<!-- cli-reference:start -->(.*?)<!-- cli-reference:end -->", text, re.S)
    assert m, "README lacks the CLI reference block"
    return m.group(1)


def test_help_matches_readme():
    doc = _cli_section()
    parser = cli.build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    documented_cmds = set(re.findall(r"^### `memcav ([a-z0-9-]+)", doc, re.M))
    assert documented_cmds == set(cli.COMMANDS)
    flags = set()
    for name, sp in sub.choices.items():
        help_text = sp.format_help()
        for action in sp._actions:
            for opt in action.option_strings:
                if opt in ("-h", "--help"):
                    continue
                assert opt in help_text
                flags.add(opt)
    documented_flags = set(re.findall(r"`(--[a-z0-9-]+)", doc))
    assert documented_flags == flags
    assert set(cli.COMMANDS) <= set(re.findall(r"[a-z]+(?:-[a-z0-9]+)*", parser.format_help()))
