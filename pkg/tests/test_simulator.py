import dataclasses
import math

import numpy as np
import pytest

from qsspi.patterns import build_pattern_set
from qsspi.scene import Scene, TargetMask, builtin_glyph
from qsspi.simulator import (
    RNG_ALGORITHM,
    AttackKind,
    AttackModel,
    RunRecord,
    SourceModel,
    accidental_rate,
    expected_fake_rate,
    expected_shot_counts,
    expected_tallies,
    expected_true_rate,
    mismatch_probability,
    simulate_intercept_resend_mechanistic,
    simulate_run,
    substream,
)

SRC = SourceModel()
ONES = np.ones((4, 4))
ZEROS = np.zeros((4, 4))
HALF = np.repeat([[1, 0]], 8, axis=0).reshape(4, 4)


def test_source_defaults():
    assert (SRC.true_coincidence_rate, SRC.idler_singles_rate) == (300.0, 8e4)
    assert SRC.coincidence_window == 650e-12
    assert SRC.acquisition_time_per_shot == 3.5
    assert SRC.intrinsic_error_rate == 0.007
    with pytest.raises(ValueError):
        SourceModel(true_coincidence_rate=-1)
    with pytest.raises(ValueError):
        SourceModel(intrinsic_error_rate=1.5)
    with pytest.raises(ValueError):
        AttackModel(AttackKind.JAMMING, -5)


def test_expected_true_rate_examples():
    full = TargetMask(ONES)
    assert expected_true_rate(ONES, full, SRC) == pytest.approx(300.0)
    assert expected_true_rate(ZEROS, full, SRC) == 0.0
    assert HALF.mean() == 0.5
    assert expected_true_rate(HALF, full, SRC) == pytest.approx(150.0)
    assert expected_true_rate(ONES, full, SRC, block_true=True) == 0.0
    with pytest.raises(ValueError):
        expected_true_rate(np.ones((2, 2)), full, SRC)


def test_accidental_rate_examples():
    # 650e-12 * 8e4 * 5.8e6 = 301.6
    assert accidental_rate(5.8e6, SRC) == pytest.approx(301.6, rel=1e-12)
    assert accidental_rate(0.0, SRC) == 0.0
    assert accidental_rate(11.6e6, SRC) == pytest.approx(2 * accidental_rate(5.8e6, SRC))


def test_expected_fake_rate_calibration():
    full = TargetMask(ONES)
    r1000 = expected_fake_rate(ONES, full, AttackModel("jamming", 1000), SRC)
    assert r1000 == pytest.approx(300.0, rel=0.02)
    assert expected_fake_rate(ONES, full, AttackModel("jamming", 2000), SRC) == pytest.approx(2 * r1000)
    assert expected_fake_rate(ONES, TargetMask(ZEROS), AttackModel("jamming", 1000), SRC) == 0.0
    with pytest.raises(ValueError):
        expected_fake_rate(ONES, full, AttackModel(), SRC)


def test_mismatch_probability():
    assert mismatch_probability(AttackKind.JAMMING) == 0.5
    assert mismatch_probability("intercept_resend") == 0.25
    assert mismatch_probability("PatternedJammingRandomPolarization") == 0.5
    with pytest.raises(ValueError):
        mismatch_probability(AttackKind.NONE)


def test_expected_counts_linear_in_time(ps4):
    scene = Scene(builtin_glyph("A", 4), builtin_glyph("D", 4))
    attack = AttackModel("jamming", 700)
    t1, f1 = expected_shot_counts(ps4, scene, SRC, attack)
    src2 = dataclasses.replace(SRC, acquisition_time_per_shot=7.0)
    t2, f2 = expected_shot_counts(ps4, scene, src2, attack)
    assert np.allclose(t2, 2 * t1) and np.allclose(f2, 2 * f1)
    c1, m1 = expected_tallies(ps4, scene, SRC, attack)
    c2, m2 = expected_tallies(ps4, scene, src2, attack)
    assert np.allclose(c2, 2 * c1) and np.allclose(m2, 2 * m1)


def test_expected_counts_match_scalar_rates(ps4):
    scene = Scene(builtin_glyph("F", 4), builtin_glyph("D", 4))
    attack = AttackModel("intercept_resend", 1500)
    mu_t, mu_f = expected_shot_counts(ps4, scene, SRC, attack)
    for s in (0, 1, 100, 511):
        shot = ps4.shot(s)
        assert mu_t[s] == pytest.approx(expected_true_rate(shot, scene.true_target, SRC) * 3.5)
        assert mu_f[s] == pytest.approx(expected_fake_rate(shot, scene.fake_target, attack, SRC) * 3.5)


def test_no_attack_no_intrinsic_error_means_no_mismatch(ps4):
    scene = Scene(builtin_glyph("A", 4), TargetMask.zeros((16, 16)))
    run = simulate_run(ps4, scene, dataclasses.replace(SRC, intrinsic_error_rate=0.0), AttackModel(), seed=3)
    assert len(run) == 512
    assert (run.mismatch == 0).all()
    assert run.correct.sum() > 0


def test_determinism_and_seed_sensitivity(ps4):
    scene = Scene(builtin_glyph("A", 4), builtin_glyph("D", 4))
    attack = AttackModel("jamming", 1000)
    a = simulate_run(ps4, scene, SRC, attack, seed=11)
    b = simulate_run(ps4, scene, SRC, attack, seed=11)
    c = simulate_run(ps4, scene, SRC, attack, seed=12)
    assert a.to_text() == b.to_text()
    assert not np.array_equal(a.total, c.total)


def test_substreams_are_keyed():
    x = substream(5, 9).integers(0, 2**63, size=4)
    assert np.array_equal(x, substream(5, 9).integers(0, 2**63, size=4))
    assert not np.array_equal(x, substream(5, 10).integers(0, 2**63, size=4))
    assert not np.array_equal(x, substream(6, 9).integers(0, 2**63, size=4))
    with pytest.raises(ValueError):
        substream(-1, 0)


def _fake_only(kind, ratio=1000):
    scene = Scene(TargetMask(np.ones((16, 16))), TargetMask(np.ones((16, 16))))
    src = dataclasses.replace(SRC, intrinsic_error_rate=0.0)
    return scene, src, AttackModel(kind, ratio, block_true=True)


def test_fake_only_jamming_error_rate(ps4):
    scene, src, attack = _fake_only("jamming")
    run = simulate_run(ps4, scene, src, attack, seed=0)
    n = run.total.sum()
    assert n >= 1e5
    frac = run.mismatch.sum() / n
    assert abs(frac - 0.5) <= 3 * math.sqrt(0.25 / n)
    # block_true with an all-ones true target: counts carry only the fake mean
    _, mu_f = expected_shot_counts(ps4, scene, src, attack)
    assert abs(n - mu_f.sum()) <= 5 * math.sqrt(mu_f.sum())


def test_fake_only_intercept_resend_statistical(ps4):
    scene, src, attack = _fake_only("intercept_resend")
    run = simulate_run(ps4, scene, src, attack, seed=1)
    n = run.total.sum()
    assert abs(run.mismatch.sum() / n - 0.25) <= 3 * math.sqrt(0.25 * 0.75 / n)


def test_mechanistic_intercept_resend(ps4):
    scene, src, attack = _fake_only("intercept_resend")
    mech = simulate_intercept_resend_mechanistic(ps4, scene, src, attack, seed=2)
    stat = simulate_run(ps4, scene, src, attack, seed=3)
    n = mech.total.sum()
    assert n >= 1e5
    assert 0.24 <= mech.mismatch.sum() / n <= 0.26
    assert mech.provenance["attack.model"] == "mechanistic"
    # totals: compound Poisson with per-photon weights {1: 1/2, 2: 1/4, 0: 1/4} -> variance 1.5 mu
    mu = stat.total.sum()
    assert abs(n - mu) <= 5 * math.sqrt(2.5 * mu)
    # mismatches are Poisson(mu / 4) in both models
    assert abs(mech.mismatch.sum() - stat.mismatch.sum()) <= 5 * math.sqrt(2 * 0.25 * mu)


def test_mechanistic_zero_fake_equals_no_attack(ps4):
    scene = Scene(builtin_glyph("A", 4), builtin_glyph("D", 4))
    mech = simulate_intercept_resend_mechanistic(ps4, scene, SRC, AttackModel("intercept_resend", 0), seed=4)
    none = simulate_run(ps4, scene, SRC, AttackModel(), seed=4)
    assert np.array_equal(mech.correct, none.correct)
    assert np.array_equal(mech.mismatch, none.mismatch)
    with pytest.raises(ValueError):
        simulate_intercept_resend_mechanistic(ps4, scene, SRC, AttackModel("jamming", 1), seed=0)


def test_resolution_mismatch_rejected(ps4):
    scene = Scene(builtin_glyph("A", 5), builtin_glyph("D", 5))
    with pytest.raises(ValueError):
        simulate_run(ps4, scene, SRC, AttackModel(), seed=0)


def test_run_record_text_roundtrip(tmp_path, ps2):
    scene = Scene(TargetMask(np.eye(4)), TargetMask(np.ones((4, 4))))
    run = simulate_run(ps2, scene, SRC, AttackModel("jamming", 100), seed=7)
    assert run.provenance["rng"] == RNG_ALGORITHM
    assert run.provenance["run.seed"] == "7"
    text = run.to_text()
    lines = text.splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    assert len(body) == 32
    assert body[0].split()[:3] == ["0", "0", "+"] and body[1].split()[:3] == ["1", "0", "-"]
    back = RunRecord.from_text(text)
    assert back.to_text() == text
    run.write(tmp_path / "r.txt")
    assert (tmp_path / "r.txt").read_text() == text
    assert RunRecord.read(tmp_path / "r.txt").provenance == run.provenance
    shots = list(run.shots())
    assert shots[5].pattern_index == 2 and shots[5].sign == "-"


@pytest.mark.parametrize(
    "text",
    ["0 0 + 1 2\n2 1 + 0 0\n", "0 1 + 1 1\n", "0 0 - 1 1\n", "0 0 + 1\n", "#nokey\n0 0 + 1 1\n", "0 0 + -1 0\n"],
)
def test_run_record_rejects_bad_text(text):
    with pytest.raises(ValueError):
        RunRecord.from_text(text)


def test_run_record_immutable(ps2):
    scene = Scene(TargetMask.ones((4, 4)), TargetMask.zeros((4, 4)))
    run = simulate_run(ps2, scene, SRC, AttackModel(), seed=0)
    with pytest.raises(ValueError):
        run.correct[0] = 5


def test_expected_tallies_without_attack(ps2):
    scene = Scene(TargetMask.ones((4, 4)), TargetMask.zeros((4, 4)))
    c, m = expected_tallies(ps2, scene, SRC, AttackModel())
    lit = (c + m) > 0
    assert not lit[1]  # the minus half of the all-ones pattern is dark
    assert np.allclose(m[lit] / (c + m)[lit], 0.007)


def test_pattern_set_used_by_simulator_is_cached():
    assert build_pattern_set(3).hadamard.entries is build_pattern_set(3).hadamard.entries
