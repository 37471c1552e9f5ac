"""Reconstruction quality: display normalization, fidelity and true-to-fake ratio."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def normalize_display(image) -> np.ndarray:
    """Affine map of ``image`` onto [0, 255] (min to 0, max to 255). Constant maps to zeros."""
    img = np.asarray(image, dtype=np.float64)
    lo, hi = float(np.min(img)), float(np.max(img))
    if hi <= lo:
        return np.zeros_like(img)
    return (img - lo) * (255.0 / (hi - lo))


def display_unit(image) -> np.ndarray:
    """What the metrics see: negatives clamped to 0, normalized, scaled to [0, 1]."""
    return normalize_display(np.clip(np.asarray(image, dtype=np.float64), 0.0, None)) / 255.0


def _values(mask):
    return np.asarray(getattr(mask, "values", mask), dtype=np.float64)


def fidelity(g_exp, reference_mask) -> float:
    """Mean over all pixels of ``reference_mask * g_exp``; ``g_exp`` already in [0, 1]."""
    g = np.asarray(g_exp, dtype=np.float64)
    ref = _values(reference_mask)
    if g.shape != ref.shape:
        raise ValueError(f"shape mismatch {g.shape} vs {ref.shape}")
    return float(np.mean(ref * g))


def target_ratio(g_exp, true_mask, fake_mask) -> float:
    """``fidelity(true) / fidelity(fake)``; NaN flags an undefined ratio (denominator <= 0)."""
    den = fidelity(g_exp, fake_mask)
    if den <= 0:
        return float("nan")
    return fidelity(g_exp, true_mask) / den


def normalized_correlation(image, mask) -> float:
    """Pearson correlation between an image and a mask (0 if either is constant)."""
    a = np.asarray(image, dtype=np.float64).ravel()
    b = _values(mask).ravel()
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt(np.dot(a, a) * np.dot(b, b))
    return float(np.dot(a, b) / den) if den > 0 else 0.0


@dataclass
class QualityReport:
    """Per-image fidelity to the true mask and true-to-fake ratio."""

    fidelity_true: dict = field(default_factory=dict)
    ratio_true_to_fake: dict = field(default_factory=dict)
    averaging: str = "all-pixels"

    @classmethod
    def evaluate(cls, images: dict, true_mask, fake_mask=None) -> "QualityReport":
        rep = cls()
        fake = None if fake_mask is None or not np.any(_values(fake_mask)) else fake_mask
        for name, img in images.items():
            if img is None:
                continue
            unit = display_unit(img)
            rep.fidelity_true[name] = fidelity(unit, true_mask)
            if fake is None:
                rep.ratio_true_to_fake[name] = float("inf") if rep.fidelity_true[name] > 0 else float("nan")
            else:
                rep.ratio_true_to_fake[name] = target_ratio(unit, true_mask, fake)
        return rep

    def to_dict(self) -> dict:
        def clean(d):
            return {k: (None if np.isnan(v) else ("inf" if np.isinf(v) else v)) for k, v in d.items()}

        return {
            "fidelity_true": clean(self.fidelity_true),
            "ratio_true_to_fake": clean(self.ratio_true_to_fake),
            "averaging": self.averaging,
        }

    def csv_row(self, scenario: str, names=("g_tot", "g_cor", "ours", "baseline")) -> dict:
        row = {"scenario": scenario}
        for n in names:
            row[f"fidelity_{n}"] = self.fidelity_true.get(n, float("nan"))
            row[f"ratio_{n}"] = self.ratio_true_to_fake.get(n, float("nan"))
        return row
