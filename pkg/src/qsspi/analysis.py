"""Correlation images, attack discrimination, and true-image reconstruction."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np

from numpy.lib.stride_tricks import sliding_window_view

from qsspi.patterns import PatternSet, fwht

DEFAULT_KAPPA = 3.0
DEFAULT_SMOOTHING = 3
MIN_TOLERANCE = 0.02
OPTIMAL_ATTACK_ERROR_RATE = 0.25
MAD_TO_SIGMA = 1.4826


class AnalysisError(ValueError):
    """Tallies are inconsistent with the requested computation."""


class Verdict(str, enum.Enum):
    RECONSTRUCTION_POSSIBLE = "ReconstructionPossible"
    NO_TRUE_SIGNAL = "NoTrueSignal"


@dataclass(frozen=True)
class CorrelationTriple:
    g_tot: np.ndarray
    g_cor: np.ndarray
    g_mis: np.ndarray

    @classmethod
    def from_components(cls, g_true, g_fake, e_fake) -> "CorrelationTriple":
        """Noise-free triple built from true and fake correlation images."""
        g_true = np.asarray(g_true, dtype=np.float64)
        g_fake = np.asarray(g_fake, dtype=np.float64)
        return cls(g_true + g_fake, g_true + (1 - e_fake) * g_fake, e_fake * g_fake)


# ---------------------------------------------------------------- correlation


def differential_intensity(tally) -> np.ndarray:
    """Per-pattern ``I(p,+) - I(p,-)`` from a per-shot tally."""
    t = np.asarray(tally, dtype=np.float64)
    if t.ndim != 1 or t.shape[0] % 2:
        raise AnalysisError("tally must be 1-D with an even number of shots")
    return t[0::2] - t[1::2]


def correlation_from_tally(tally, pattern_set: PatternSet) -> np.ndarray:
    """Spatial correlation ``<P I> - <P><I>`` over all displayed binary shots.

    With Hadamard shot pairs this reduces to ``H.T @ I_diff / (4 N)``, which
    is evaluated with a fast Walsh-Hadamard transform.
    """
    t = np.asarray(tally)
    if t.shape != (pattern_set.num_shots,):
        raise AnalysisError(f"expected {pattern_set.num_shots} shot tallies, got shape {t.shape}")
    diff = differential_intensity(t)
    g = fwht(diff) / (4.0 * pattern_set.num_patterns)
    return g.reshape(pattern_set.resolution)


def _tally(run, selector: str):
    if isinstance(run, tuple):
        correct, mismatch = (np.asarray(a) for a in run)
    else:
        correct, mismatch = run.correct, run.mismatch
    if selector == "total":
        return correct + mismatch
    if selector == "correct":
        return correct
    if selector == "mismatch":
        return mismatch
    raise ValueError(f"selector must be total, correct or mismatch, got {selector!r}")


def correlation_image(run, selector: str, pattern_set: PatternSet) -> np.ndarray:
    """``run`` is a RunRecord or a ``(correct, mismatch)`` pair of per-shot arrays."""
    return correlation_from_tally(_tally(run, selector), pattern_set)


def correlation_triple(run, pattern_set: PatternSet) -> CorrelationTriple:
    return CorrelationTriple(
        correlation_image(run, "total", pattern_set),
        correlation_image(run, "correct", pattern_set),
        correlation_image(run, "mismatch", pattern_set),
    )


# ---------------------------------------------------------------- error rates


def state_error_rate(run) -> tuple[float, float]:
    """Mismatched over all coincidences, with its binomial standard deviation."""
    mismatch = float(np.sum(_tally(run, "mismatch")))
    total = float(np.sum(_tally(run, "total")))
    if total <= 0:
        raise AnalysisError("no coincidences recorded")
    e_s = mismatch / total
    return e_s, math.sqrt(e_s * (1 - e_s) / total)


def discriminant_maps(triple: CorrelationTriple, e_s: float) -> tuple[np.ndarray, np.ndarray]:
    """``d1 = g_mis / g_tot`` and ``d2 = g_mis**2 / (e_S g_tot**2)``; NaN where g_tot is 0."""
    g_tot, g_mis = triple.g_tot, triple.g_mis
    defined = g_tot != 0
    d1 = np.full(g_tot.shape, np.nan)
    d1[defined] = g_mis[defined] / g_tot[defined]
    if e_s == 0:
        if np.any(g_mis[defined] != 0):
            raise AnalysisError("state error rate is zero but the mismatch image is not")
        return d1, np.where(defined, 0.0, np.nan)
    return d1, d1**2 / e_s


def robust_sigma(x) -> float:
    """Standard deviation estimated from the median absolute deviation."""
    x = np.asarray(x, dtype=np.float64).ravel()
    return MAD_TO_SIGMA * float(np.median(np.abs(x - np.median(x))))


def poisson_sigma(tally, pattern_set: PatternSet) -> float:
    """Per-pixel standard deviation of a correlation image under Poisson counting.

    Every pixel sees each shot with weight ``+-1 / (4 N)``, so its variance is
    the summed count over ``(4 N)**2``, identical for all pixels.
    """
    return math.sqrt(float(np.sum(tally))) / (4.0 * pattern_set.num_patterns)


def smooth(image, width: int = DEFAULT_SMOOTHING) -> np.ndarray:
    """Box-filter ``image`` with an odd ``width`` (reflecting edges); width 1 is a copy."""
    image = np.asarray(image, dtype=np.float64)
    if width < 1 or width % 2 == 0:
        raise ValueError("smoothing width must be a positive odd integer")
    if width == 1:
        return image.copy()
    pad = width // 2
    padded = np.pad(image, pad, mode="reflect")
    return sliding_window_view(padded, (width, width)).mean(axis=(-1, -2))


def smooth_triple(triple: CorrelationTriple, width: int = DEFAULT_SMOOTHING) -> CorrelationTriple:
    return CorrelationTriple(smooth(triple.g_tot, width), smooth(triple.g_cor, width), smooth(triple.g_mis, width))


def erroneous_region(g_mis, kappa: float = DEFAULT_KAPPA, sigma: float | None = None) -> np.ndarray:
    """Pixels where ``g_mis`` rises above ``kappa * sigma``.

    Without an explicit ``sigma`` the noise level is taken from the median
    absolute deviation of ``g_mis`` itself.
    """
    g_mis = np.asarray(g_mis, dtype=np.float64)
    if sigma is None:
        sigma = robust_sigma(g_mis)
    return g_mis > kappa * sigma


def prime_region(d1, e_s: float, region_m=None) -> np.ndarray:
    """Fake-dominated sub-region: pixels of ``M`` with ``e_S < d1 <= 1``."""
    d1 = np.asarray(d1)
    with np.errstate(invalid="ignore"):
        mp = (d1 > e_s) & (d1 <= 1.0)
    if region_m is not None:
        mp &= region_m
    return mp


def estimate_fake_error(d1, region) -> tuple[float, float]:
    """Mean of ``d1`` over ``region`` and the sample standard deviation of those pixels."""
    values = np.asarray(d1)[region]
    values = values[np.isfinite(values)]
    if values.size == 0:
        raise AnalysisError("cannot estimate the fake error rate over an empty region")
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return float(np.mean(values)), std


def region_mean(image, region, weights=None) -> float:
    values = np.asarray(image, dtype=np.float64)[region]
    w = np.ones_like(values) if weights is None else np.asarray(weights, dtype=np.float64)[region]
    ok = np.isfinite(values)
    if not ok.any() or np.sum(w[ok]) == 0:
        return float("nan")
    return float(np.sum(w[ok] * values[ok]) / np.sum(w[ok]))


def region_discriminants(triple: CorrelationTriple, region, e_s: float, weighting: str = "signal") -> tuple[float, float]:
    """Region means of ``D1`` and ``D2``.

    ``weighting="uniform"`` is the plain pixel average. ``"signal"`` weights
    both by ``g_tot**2``, i.e. ``sum(g_mis * g_tot) / sum(g_tot**2)`` and
    ``sum(g_mis**2) / (e_S * sum(g_tot**2))``, which keeps pixels with a
    near-zero denominator from dominating under shot noise. A common weight
    keeps ``E[D2] >= E[D1]**2 / e_S`` (Cauchy-Schwarz) for any data.
    """
    region = np.asarray(region, dtype=bool)
    if not region.any():
        return float("nan"), float("nan")
    d1, d2 = discriminant_maps(triple, e_s)
    if weighting == "uniform":
        return region_mean(d1, region), region_mean(d2, region)
    if weighting == "signal":
        w = triple.g_tot**2
        return region_mean(d1, region, w), region_mean(d2, region, w)
    raise ValueError(f"weighting must be 'uniform' or 'signal', got {weighting!r}")


def default_tolerance(e_s_std: float) -> float:
    return max(MIN_TOLERANCE, 3.0 * e_s_std)


def classify(mean_d1_m: float, mean_d2_m: float, e_s: float, tolerance: float = MIN_TOLERANCE) -> Verdict:
    """Decide whether true signal survives in the erroneous region.

    No true signal only when both region means of the discriminants sit
    within ``tolerance`` of the state error rate. An empty region (NaN means)
    means no attack was seen, which leaves reconstruction possible.
    """
    if math.isnan(mean_d1_m):
        return Verdict.RECONSTRUCTION_POSSIBLE
    if abs(mean_d1_m - e_s) > tolerance:
        return Verdict.RECONSTRUCTION_POSSIBLE
    if mean_d2_m - e_s > tolerance:
        return Verdict.RECONSTRUCTION_POSSIBLE
    return Verdict.NO_TRUE_SIGNAL


# ---------------------------------------------------------------- reconstruction


def reconstruct_true_image(triple: CorrelationTriple, e_f_prime: float) -> np.ndarray:
    """``g_cor - (1 - e_F') / e_F' * g_mis``. Negative pixels are kept."""
    if not 0 < e_f_prime <= 1:
        raise AnalysisError(f"estimated fake error rate must lie in (0, 1], got {e_f_prime}")
    return triple.g_cor - (1 - e_f_prime) / e_f_prime * triple.g_mis


def previous_qsspi_reconstruction(triple: CorrelationTriple) -> np.ndarray:
    """Baseline that assumes an optimal intercept-and-resend attack."""
    return reconstruct_true_image(triple, OPTIMAL_ATTACK_ERROR_RATE)


def reconstruction_bias(e_fake: float, e_f_prime: float) -> float:
    """Residual fake fraction ``delta = e_F / e_F' - 1`` left in the reconstruction."""
    return e_fake / e_f_prime - 1


# ---------------------------------------------------------------- full pipeline


@dataclass(frozen=True)
class SecurityReport:
    e_s: float
    e_s_std: float
    mean_d1_over_m: float
    mean_d2_over_m: float
    e_f_prime: float | None
    e_f_prime_std: float | None
    e_f_prime_sem: float | None
    e_f_prime_source: str
    verdict: Verdict
    attack_detected: bool
    low_confidence: bool
    physically_inconsistent: bool
    region_m_size: int
    region_m_prime_size: int
    num_pixels: int
    kappa: float
    tolerance: float
    smoothing: int
    noise_sigma: float
    weighting: str
    delta: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict.value
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


@dataclass(frozen=True)
class Analysis:
    triple: CorrelationTriple
    smoothed: CorrelationTriple
    d1: np.ndarray
    d2: np.ndarray
    region_m: np.ndarray
    region_m_prime: np.ndarray
    ours: np.ndarray
    baseline: np.ndarray
    report: SecurityReport


def analyze(
    run,
    pattern_set: PatternSet,
    kappa: float = DEFAULT_KAPPA,
    tolerance: float | None = None,
    smoothing: int = DEFAULT_SMOOTHING,
    noise: str = "poisson",
    weighting: str = "signal",
    true_fake_error: float | None = None,
) -> Analysis:
    """Run the full security analysis on one set of tallies.

    Region finding and the discriminant statistics work on box-smoothed
    correlation images (``smoothing=1`` disables this); reconstructions use
    the raw images. ``noise`` picks the threshold scale for ``M``: the
    Poisson counting level of the smoothed mismatch image, or the MAD of the
    image itself.

    ``e_F'`` is the mean of ``d1`` over ``M'``. If ``M'`` is empty the mean
    over ``M`` is used and the report is flagged low-confidence. Under a
    NoTrueSignal verdict ``M'`` only selects the upper half of the noise, so
    ``E[D1]_M`` is reported as the fake error rate instead. Without any
    erroneous pixels no attack was seen and ``ours`` is simply ``g_tot``.
    """
    triple = correlation_triple(run, pattern_set)
    e_s, e_s_std = state_error_rate(run)
    sm = smooth_triple(triple, smoothing)
    d1, d2 = discriminant_maps(sm, e_s)

    if noise == "poisson":
        # box averaging of white noise divides the standard deviation by the width
        sigma = poisson_sigma(_tally(run, "mismatch"), pattern_set) / smoothing
    elif noise == "mad":
        sigma = robust_sigma(sm.g_mis)
    else:
        raise ValueError(f"noise must be 'poisson' or 'mad', got {noise!r}")
    region_m = erroneous_region(sm.g_mis, kappa, sigma)
    region_mp = prime_region(d1, e_s, region_m)
    tol = default_tolerance(e_s_std) if tolerance is None else float(tolerance)

    mean_d1, mean_d2 = region_discriminants(sm, region_m, e_s, weighting)
    verdict = classify(mean_d1, mean_d2, e_s, tol)
    attack_detected = bool(region_m.any())

    e_fp = e_fp_std = e_fp_sem = None
    source = "none"
    low_confidence = False
    if attack_detected:
        if verdict is Verdict.NO_TRUE_SIGNAL:
            e_fp = mean_d1
            _, e_fp_std = estimate_fake_error(d1, region_m)
            region, source = region_m, "M"
        elif region_mp.any():
            e_fp, e_fp_std = estimate_fake_error(d1, region_mp)
            region, source = region_mp, "M_prime"
        else:
            e_fp, e_fp_std = estimate_fake_error(d1, region_m)
            region, source = region_m, "M_fallback"
            low_confidence = True
        e_fp_sem = e_fp_std / math.sqrt(int(np.isfinite(d1[region]).sum()))
        if not 0 < e_fp <= 1:
            low_confidence = True

    inconsistent = e_fp is not None and e_fp < OPTIMAL_ATTACK_ERROR_RATE - 3 * e_fp_sem

    if e_fp is None:
        ours = triple.g_tot.copy()
    else:
        ours = reconstruct_true_image(triple, min(max(e_fp, 1e-9), 1.0))

    delta = None
    if true_fake_error is not None and e_fp:
        delta = reconstruction_bias(true_fake_error, e_fp)

    report = SecurityReport(
        e_s=e_s,
        e_s_std=e_s_std,
        mean_d1_over_m=mean_d1,
        mean_d2_over_m=mean_d2,
        e_f_prime=e_fp,
        e_f_prime_std=e_fp_std,
        e_f_prime_sem=e_fp_sem,
        e_f_prime_source=source,
        verdict=verdict,
        attack_detected=attack_detected,
        low_confidence=low_confidence,
        physically_inconsistent=bool(inconsistent),
        region_m_size=int(region_m.sum()),
        region_m_prime_size=int(region_mp.sum()),
        num_pixels=int(region_m.size),
        kappa=float(kappa),
        tolerance=tol,
        smoothing=int(smoothing),
        noise_sigma=float(sigma),
        weighting=weighting,
        delta=delta,
    )
    return Analysis(triple, sm, d1, d2, region_m, region_mp, ours, previous_qsspi_reconstruction(triple), report)
