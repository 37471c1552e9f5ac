"""Per-shot photon-coincidence Monte Carlo for a true target under spoofing attacks.

Counts are drawn at coincidence-statistics level: a Poisson number of true
coincidences and a Poisson number of fake (accidental) coincidences per shot,
each split into polarization-correct and mismatched tallies by a binomial
draw. Every shot draws from its own counter-based substream: a Philox4x64
generator keyed by ``(seed, shot_index)`` with the counter starting at zero.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field, fields
from typing import Iterator, Mapping

import numpy as np

from qsspi.patterns import MINUS, PLUS, PatternSet
from qsspi.scene import Scene

RNG_ALGORITHM = "philox4x64-key(seed,shot)"
RUN_FORMAT = "qsspi-run/1"

# Mismatch probability of each fake coincidence, by attack type.
JAMMING_ERROR_RATE = 0.5
INTERCEPT_RESEND_ERROR_RATE = 0.25


class AttackKind(str, enum.Enum):
    NONE = "none"
    JAMMING = "jamming"
    INTERCEPT_RESEND = "intercept_resend"

    @classmethod
    def parse(cls, value) -> "AttackKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {
            "patterned_jamming": cls.JAMMING,
            "patternedjammingrandompolarization": cls.JAMMING,
            "ir": cls.INTERCEPT_RESEND,
            "interceptresend": cls.INTERCEPT_RESEND,
        }
        if key in aliases:
            return aliases[key]
        return cls(key)


@dataclass(frozen=True)
class SourceModel:
    """Photon-pair source and detection parameters.

    ``signal_photon_rate`` anchors the fake-light calibration: Eve's photon
    rate is ``strength_ratio * signal_photon_rate``, so a ratio of 1000 puts
    the accidental rate level with the true coincidence rate.
    """

    true_coincidence_rate: float = 300.0
    idler_singles_rate: float = 8e4
    coincidence_window: float = 650e-12
    acquisition_time_per_shot: float = 3.5
    intrinsic_error_rate: float = 0.007
    signal_photon_rate: float = 5.8e3

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{f.name} must be a non-negative finite number, got {v}")
        if self.intrinsic_error_rate > 1:
            raise ValueError("intrinsic_error_rate must lie in [0, 1]")


@dataclass(frozen=True)
class AttackModel:
    kind: AttackKind = AttackKind.NONE
    strength_ratio: float = 0.0
    block_true: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind.parse(self.kind))
        if not np.isfinite(self.strength_ratio) or self.strength_ratio < 0:
            raise ValueError("strength_ratio must be >= 0")

    @property
    def active(self) -> bool:
        return self.kind is not AttackKind.NONE


@dataclass(frozen=True)
class ShotRecord:
    shot_index: int
    pattern_index: int
    sign: str
    correct_count: int
    mismatch_count: int


@dataclass(frozen=True)
class RunRecord:
    """Tallies for a full shot budget plus provenance.

    ``correct`` and ``mismatch`` are int64 arrays indexed by shot (pattern
    ``p`` occupies shots ``2p`` (+) and ``2p + 1`` (-)).
    """

    correct: np.ndarray
    mismatch: np.ndarray
    provenance: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.correct, dtype=np.int64).copy()
        m = np.asarray(self.mismatch, dtype=np.int64).copy()
        if c.shape != m.shape or c.ndim != 1:
            raise ValueError("correct and mismatch must be 1-D arrays of equal length")
        if (c < 0).any() or (m < 0).any():
            raise ValueError("counts must be non-negative")
        c.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "correct", c)
        object.__setattr__(self, "mismatch", m)
        object.__setattr__(self, "provenance", dict(self.provenance))

    def __len__(self) -> int:
        return self.correct.shape[0]

    @property
    def total(self) -> np.ndarray:
        return self.correct + self.mismatch

    def shots(self) -> Iterator[ShotRecord]:
        for i in range(len(self)):
            yield ShotRecord(i, i // 2, PLUS if i % 2 == 0 else MINUS, int(self.correct[i]), int(self.mismatch[i]))

    def to_text(self) -> str:
        lines = [f"#{k}={v}" for k, v in self.provenance.items()]
        for s in self.shots():
            lines.append(f"{s.shot_index} {s.pattern_index} {s.sign} {s.correct_count} {s.mismatch_count}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunRecord":
        provenance: dict[str, str] = {}
        correct, mismatch = [], []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].partition("=")
                if not sep:
                    raise ValueError(f"line {lineno}: header line without '='")
                provenance[key.strip()] = value.strip()
                continue
            parts = line.split()
            if len(parts) != 5 or parts[2] not in (PLUS, MINUS):
                raise ValueError(f"line {lineno}: expected 'shot pattern sign correct mismatch'")
            shot, pattern = int(parts[0]), int(parts[1])
            if shot != len(correct) or pattern != shot // 2 or parts[2] != (PLUS if shot % 2 == 0 else MINUS):
                raise ValueError(f"line {lineno}: shot bookkeeping out of order")
            correct.append(int(parts[3]))
            mismatch.append(int(parts[4]))
        return cls(np.array(correct, dtype=np.int64), np.array(mismatch, dtype=np.int64), provenance)

    def write(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(self.to_text())

    @classmethod
    def read(cls, path) -> "RunRecord":
        with open(path, encoding="ascii") as fh:
            return cls.from_text(fh.read())


# ---------------------------------------------------------------- rate model


def _overlap(shot: np.ndarray, mask) -> float:
    shot = np.asarray(shot)
    values = getattr(mask, "values", mask)
    if shot.shape != np.shape(values):
        raise ValueError(f"shot shape {shot.shape} does not match target {np.shape(values)}")
    return float(np.mean(shot * values))


def expected_true_rate(shot, true_target, source: SourceModel, block_true: bool = False) -> float:
    """True coincidence rate (cps) for one displayed shot."""
    overlap = _overlap(shot, true_target)
    if block_true:
        return 0.0
    return source.true_coincidence_rate * overlap


def accidental_rate(fake_photon_rate: float, source: SourceModel) -> float:
    """Accidental coincidence rate ``tau * N_I * N_F``."""
    if fake_photon_rate < 0:
        raise ValueError("fake photon rate must be >= 0")
    return source.coincidence_window * source.idler_singles_rate * fake_photon_rate


def expected_fake_rate(shot, fake_target, attack: AttackModel, source: SourceModel) -> float:
    if not attack.active:
        raise ValueError("expected_fake_rate needs an active attack")
    overlap = _overlap(shot, fake_target)
    return accidental_rate(attack.strength_ratio * source.signal_photon_rate * overlap, source)


def mismatch_probability(kind) -> float:
    kind = AttackKind.parse(kind)
    if kind is AttackKind.JAMMING:
        return JAMMING_ERROR_RATE
    if kind is AttackKind.INTERCEPT_RESEND:
        return INTERCEPT_RESEND_ERROR_RATE
    raise ValueError("mismatch probability is undefined without an attack")


def expected_shot_counts(pattern_set: PatternSet, scene: Scene, source: SourceModel, attack: AttackModel):
    """Mean true and fake coincidence counts per shot, as float arrays.

    Vectorized form of ``expected_true_rate`` / ``expected_fake_rate`` times
    the acquisition time.
    """
    _check_resolution(pattern_set, scene)
    shots = pattern_set.shots.reshape(pattern_set.num_shots, -1).astype(np.float64)
    npix = shots.shape[1]
    t = source.acquisition_time_per_shot
    true_rate = np.zeros(pattern_set.num_shots)
    if not attack.block_true:
        true_rate = source.true_coincidence_rate * (shots @ scene.true_target.values.ravel()) / npix
    fake_rate = np.zeros(pattern_set.num_shots)
    if attack.active:
        overlap = (shots @ scene.fake_target.values.ravel()) / npix
        fake_rate = accidental_rate(1.0, source) * attack.strength_ratio * source.signal_photon_rate * overlap
    return true_rate * t, fake_rate * t


def expected_tallies(pattern_set: PatternSet, scene: Scene, source: SourceModel, attack: AttackModel):
    """Expectation-valued (correct, mismatch) tallies per shot."""
    mu_true, mu_fake = expected_shot_counts(pattern_set, scene, source, attack)
    e_i = source.intrinsic_error_rate
    e_f = mismatch_probability(attack.kind) if attack.active else 0.0
    correct = mu_true * (1 - e_i) + mu_fake * (1 - e_f)
    mismatch = mu_true * e_i + mu_fake * e_f
    return correct, mismatch


# ---------------------------------------------------------------- sampling


def substream(seed: int, shot_index: int) -> np.random.Generator:
    """Independent generator for one shot: Philox keyed by (seed, shot_index)."""
    if not 0 <= seed < 2**64:
        raise ValueError("seed must lie in [0, 2**64)")
    key = np.array([seed, shot_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _check_resolution(pattern_set: PatternSet, scene: Scene) -> None:
    if scene.resolution != pattern_set.resolution:
        raise ValueError(f"scene resolution {scene.resolution} != pattern resolution {pattern_set.resolution}")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, enum.Enum):
        return v.value
    return repr(v) if isinstance(v, float) else str(v)


def _provenance(pattern_set, scene, source, attack, seed, model) -> dict[str, str]:
    prov = {
        "format": RUN_FORMAT,
        "rng": RNG_ALGORITHM,
        "run.n": str(pattern_set.n),
        "run.seed": str(seed),
        "attack.model": model,
        "scene.hash": scene.digest(),
    }
    for k, v in asdict(source).items():
        prov[f"source.{k}"] = _fmt(v)
    prov["attack.kind"] = _fmt(attack.kind)
    prov["attack.strength_ratio"] = _fmt(float(attack.strength_ratio))
    prov["attack.block_true"] = _fmt(attack.block_true)
    return prov


def _sample(pattern_set, scene, source, attack, seed, fake_splitter):
    mu_true, mu_fake = expected_shot_counts(pattern_set, scene, source, attack)
    e_i = source.intrinsic_error_rate
    correct = np.empty(pattern_set.num_shots, dtype=np.int64)
    mismatch = np.empty(pattern_set.num_shots, dtype=np.int64)
    for s in range(pattern_set.num_shots):
        rng = substream(seed, s)
        n_true = rng.poisson(mu_true[s])
        m_true = rng.binomial(n_true, e_i)
        c_fake, m_fake = fake_splitter(rng, mu_fake[s])
        correct[s] = n_true - m_true + c_fake
        mismatch[s] = m_true + m_fake
    return correct, mismatch


def simulate_run(pattern_set: PatternSet, scene: Scene, source: SourceModel, attack: AttackModel, seed: int) -> RunRecord:
    """Statistical attack model: fake coincidences mismatch with a fixed probability."""
    _check_resolution(pattern_set, scene)
    e_f = mismatch_probability(attack.kind) if attack.active else 0.0

    def split(rng, mu):
        n = rng.poisson(mu)
        m = rng.binomial(n, e_f)
        return n - m, m

    correct, mismatch = _sample(pattern_set, scene, source, attack, seed, split)
    return RunRecord(correct, mismatch, _provenance(pattern_set, scene, source, attack, seed, "statistical"))


def simulate_intercept_resend_mechanistic(
    pattern_set: PatternSet, scene: Scene, source: SourceModel, attack: AttackModel, seed: int
) -> RunRecord:
    """Intercept-and-resend built from randomly polarized fake light.

    Each fake coincidence gets Eve's basis choice. When it differs from
    Alice's, the outcome is random (mismatch with probability 1/2) and kept.
    When the bases agree only the correct outcomes are kept and their counts
    doubled, replacing the discarded half. Net fake error rate is 1/4.
    """
    _check_resolution(pattern_set, scene)
    if AttackKind.parse(attack.kind) is not AttackKind.INTERCEPT_RESEND:
        raise ValueError("mechanistic model only applies to intercept_resend attacks")

    def split(rng, mu):
        n = rng.poisson(mu)
        same_basis = rng.binomial(n, 0.5)
        m_other = rng.binomial(n - same_basis, JAMMING_ERROR_RATE)
        c_same = rng.binomial(same_basis, 0.5)
        return (n - same_basis - m_other) + 2 * c_same, m_other

    correct, mismatch = _sample(pattern_set, scene, source, attack, seed, split)
    return RunRecord(correct, mismatch, _provenance(pattern_set, scene, source, attack, seed, "mechanistic"))
