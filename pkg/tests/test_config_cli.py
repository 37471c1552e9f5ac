import csv
import json

import pytest

from qsspi.cli import main
from qsspi.config import ConfigError, ConfigWarning, PRESET_NAMES, config_from_provenance, parse_config, preset
from qsspi.scenario import IMAGE_ARTIFACTS
from qsspi.scene import load_mask, save_mask, builtin_glyph
from qsspi.simulator import AttackKind, RunRecord


def _write(path, text):
    path.write_text(text)
    return str(path)


def test_defaults_from_empty_file(tmp_path):
    cfg = parse_config(_write(tmp_path / "c.cfg", ""), [("scene.true", "A")])
    assert cfg.n == 5 and cfg.kappa == 3 and cfg.repeats == 10
    assert cfg.source.coincidence_window == 650e-12
    assert cfg.source.true_coincidence_rate == 300
    assert cfg.source.acquisition_time_per_shot == 3.5
    assert cfg.attack.kind is AttackKind.NONE


def test_file_keys_and_flag_precedence(tmp_path):
    path = _write(
        tmp_path / "c.cfg",
        "# jamming setup\nscene.true = A\nscene.fake = D\nattack.kind = jamming\nattack.ratio = 2000\nrun.seed = 4\n",
    )
    cfg = parse_config(path, [("run.seed", "9"), ("source.tau", "1e-9")])
    assert cfg.attack.kind is AttackKind.JAMMING and cfg.attack.strength_ratio == 2000
    assert cfg.seed == 9
    assert cfg.source.coincidence_window == 1e-9


def test_duplicate_key_warns_last_wins(tmp_path):
    path = _write(tmp_path / "c.cfg", "scene.true = A\nrun.seed = 1\nrun.seed = 2\n")
    with pytest.warns(ConfigWarning):
        cfg = parse_config(path)
    assert cfg.seed == 2


@pytest.mark.parametrize(
    "text",
    ["scene.true = A\nbogus.key = 1\n", "scene.true = A\nrun.n = five\n", "run.n = 5\n", "scene.true = A\nrun.n = 9\n", "no equals\n"],
)
def test_config_errors(tmp_path, text):
    with pytest.raises(ConfigError):
        parse_config(_write(tmp_path / "c.cfg", text))


def test_missing_mask_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(_write(tmp_path / "c.cfg", "scene.true = missing.pgm\n"))


def test_presets():
    assert set(PRESET_NAMES) == {"fig3", "fig4a", "fig4b", "fig5a", "fig5b", "fig6"}
    f4 = preset("fig4b")
    assert (f4.scene_true, f4.scene_fake, f4.attack.strength_ratio) == ("A", "D", 2000)
    assert preset("fig6").attack.block_true
    assert preset("fig5a").attack.kind is AttackKind.INTERCEPT_RESEND
    assert preset("fig3", [("run.repeats", "2")]).repeats == 2
    with pytest.raises(ConfigError):
        preset("fig9")


def test_scenario_cli_writes_all_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    out.mkdir()
    assert main(["scenario", "fig3", "--out", str(out), "--run.repeats", "2"]) == 0
    for name in IMAGE_ARTIFACTS:
        mask = load_mask(out / f"{name}.pgm", resolution=(32, 32))
        assert mask.values.shape == (32, 32)
    doc = json.loads((out / "security.json").read_text())
    assert doc["report"]["verdict"] == "ReconstructionPossible"
    assert set(doc["artifacts"]) >= set(IMAGE_ARTIFACTS)
    assert "fidelity_true" in doc["quality"]
    rows = list(csv.DictReader((out / "quality.csv").open()))
    assert [r["seed"] for r in rows] == ["0", "1"]
    run = RunRecord.read(out / "run.txt")
    assert len(run) == 2048
    assert "verdicts=ReconstructionPossible" in capsys.readouterr().out


def test_roundtrip_from_provenance_is_bit_identical(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("scene.true = F\nscene.fake = 8-F\nattack.kind = jamming\nattack.ratio = 500\nrun.seed = 42\nrun.n = 4\n")
    first, second = tmp_path / "a.txt", tmp_path / "b.txt"
    assert main(["simulate", "--config", str(cfg), "--out", str(first)]) == 0
    assert main(["simulate", "--from-run", str(first), "--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()
    rebuilt = config_from_provenance(RunRecord.read(first).provenance)
    assert rebuilt.seed == 42 and rebuilt.scene_fake == "8-F"


def test_mask_files_in_config(tmp_path):
    save_mask(tmp_path / "t.pgm", builtin_glyph("A", 4))
    save_mask(tmp_path / "f.pgm", builtin_glyph("D", 4))
    cfg = tmp_path / "c.cfg"
    cfg.write_text("scene.true = t.pgm\nscene.fake = f.pgm\nattack.kind = jamming\nattack.ratio = 1000\nrun.n = 4\nrun.repeats = 1\n")
    assert main(["scenario", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "ours.pgm").exists()


def test_analyze_reconstruct_metrics_subcommands(tmp_path, capsys):
    run = tmp_path / "r.txt"
    assert main(["simulate", "--scene.true", "A", "--scene.fake", "D", "--attack.kind", "jamming",
                 "--attack.ratio", "1000", "--out", str(run)]) == 0
    assert main(["analyze", str(run), "--out", str(tmp_path / "an")]) == 0
    assert "verdict=ReconstructionPossible" in capsys.readouterr().out
    for name in ("d1", "d2", "M", "M_prime"):
        assert (tmp_path / "an" / f"{name}.pgm").exists()
    assert main(["reconstruct", str(run), "--out", str(tmp_path / "rc"), "--e-f-prime", "0.5"]) == 0
    assert (tmp_path / "rc" / "ours.pgm").exists() and (tmp_path / "rc" / "baseline.pgm").exists()
    capsys.readouterr()
    assert main(["metrics", str(run), "--true", "A", "--fake", "D"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert float(rows[0]["ratio_ours"]) > float(rows[0]["ratio_g_tot"])


def test_exit_codes(tmp_path):
    assert main(["scenario", "fig3", "--bogus.key", "1", "--out", str(tmp_path / "x")]) == 2
    assert main(["simulate", "--out", str(tmp_path / "r.txt")]) == 2  # no scene.true
    run = tmp_path / "r.txt"
    assert main(["simulate", "--scene.true", "A", "--run.n", "4", "--out", str(run)]) == 0
    assert main(["reconstruct", str(run), "--out", str(tmp_path / "rc"), "--e-f-prime", "0"]) == 3
    assert main(["analyze", str(tmp_path / "missing.txt"), "--out", str(tmp_path / "a")]) == 4


def test_scenario_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["scenario", "fig6", "--out", str(tmp_path / d), "--run.repeats", "2"]) == 0
    for name in ["run.txt", "security.json", "quality.csv"] + [f"{k}.pgm" for k in IMAGE_ARTIFACTS]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
