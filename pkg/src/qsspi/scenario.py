"""End-to-end scenario runs: simulate, analyze, score, and write artifacts."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from qsspi.analysis import Analysis, analyze
from qsspi.config import ExperimentConfig, config_to_pairs
from qsspi.metrics import QualityReport, display_unit, normalize_display
from qsspi.patterns import PatternSet, build_pattern_set
from qsspi.scene import Scene, TargetMask, load_mask, parse_glyph_spec, write_pgm
from qsspi.simulator import (
    AttackKind,
    RunRecord,
    mismatch_probability,
    simulate_intercept_resend_mechanistic,
    simulate_run,
)

log = logging.getLogger(__name__)

IMAGE_ARTIFACTS = ("g_tot", "g_cor", "g_mis", "d1", "d2", "M", "M_prime", "ours", "baseline")
RUN_FILE = "run.txt"
SECURITY_FILE = "security.json"
QUALITY_FILE = "quality.csv"


def resolve_mask(spec: str, n: int, binarize: bool = False, threshold: float = 0.5, base_dir=None) -> TargetMask:
    """Glyph spec (``A``, ``8-F``, ``none``) or a PGM path."""
    if spec.lower().endswith((".pgm", ".pnm")) or os.sep in spec:
        path = spec if base_dir is None or os.path.isabs(spec) else os.path.join(base_dir, spec)
        return load_mask(path, resolution=(2**n, 2**n), threshold=threshold, binarize=binarize)
    return parse_glyph_spec(spec, n)


def build_scene(config: ExperimentConfig, base_dir=None) -> Scene:
    kw = dict(binarize=config.scene_binarize, threshold=config.scene_threshold, base_dir=base_dir)
    return Scene(resolve_mask(config.scene_true, config.n, **kw), resolve_mask(config.scene_fake, config.n, **kw))


def simulate(config: ExperimentConfig, pattern_set: PatternSet, scene: Scene, seed: int) -> RunRecord:
    if config.attack_model == "mechanistic":
        run = simulate_intercept_resend_mechanistic(pattern_set, scene, config.source, config.attack, seed)
    else:
        run = simulate_run(pattern_set, scene, config.source, config.attack, seed)
    prov = dict(run.provenance)
    prov["run.name"] = config.name
    prov["scene.true"] = config.scene_true
    prov["scene.fake"] = config.scene_fake
    prov["scene.binarize"] = str(config.scene_binarize).lower()
    prov["scene.threshold"] = repr(config.scene_threshold)
    return RunRecord(run.correct, run.mismatch, prov)


def analyze_run(config: ExperimentConfig, run: RunRecord, pattern_set: PatternSet) -> Analysis:
    true_e = mismatch_probability(config.attack.kind) if config.attack.kind is not AttackKind.NONE else None
    return analyze(
        run,
        pattern_set,
        kappa=config.kappa,
        tolerance=config.tolerance,
        smoothing=config.smoothing,
        noise=config.noise,
        weighting=config.weighting,
        true_fake_error=true_e,
    )


def quality(analysis: Analysis, scene: Scene) -> QualityReport:
    images = {
        "g_tot": analysis.triple.g_tot,
        "g_cor": analysis.triple.g_cor,
        "ours": analysis.ours,
        "baseline": analysis.baseline,
    }
    return QualityReport.evaluate(images, scene.true_target, scene.fake_target)


@dataclass
class ScenarioResult:
    config: ExperimentConfig
    runs: list
    analyses: list
    qualities: list
    summary: dict


def _stats(values) -> dict:
    vals = [v for v in values if v is not None and math.isfinite(v)]
    if not vals:
        return {"mean": None, "std": None, "count": 0}
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return {"mean": float(np.mean(vals)), "std": std, "count": len(vals)}


def execute(config: ExperimentConfig, base_dir=None) -> ScenarioResult:
    """Simulate and analyze ``config.repeats`` runs with seeds ``seed, seed+1, ...``."""
    pattern_set = build_pattern_set(config.n)
    scene = build_scene(config, base_dir)
    runs, analyses, qualities = [], [], []
    for i in range(config.repeats):
        run = simulate(config, pattern_set, scene, config.seed + i)
        a = analyze_run(config, run, pattern_set)
        runs.append(run)
        analyses.append(a)
        qualities.append(quality(a, scene))
        log.debug("seed %d: e_S=%.4f e_F'=%s", config.seed + i, a.report.e_s, a.report.e_f_prime)
    reports = [a.report for a in analyses]
    summary = {
        "seeds": [config.seed + i for i in range(config.repeats)],
        "e_s": _stats(r.e_s for r in reports),
        "e_f_prime": _stats(r.e_f_prime for r in reports),
        "mean_d1_over_m": _stats(r.mean_d1_over_m for r in reports),
        "mean_d2_over_m": _stats(r.mean_d2_over_m for r in reports),
        "verdicts": [r.verdict.value for r in reports],
        "fidelity_true": {k: _stats(q.fidelity_true.get(k) for q in qualities) for k in ("g_tot", "g_cor", "ours", "baseline")},
        "ratio_true_to_fake": {
            k: _stats(q.ratio_true_to_fake.get(k) for q in qualities) for k in ("g_tot", "g_cor", "ours", "baseline")
        },
    }
    return ScenarioResult(config, runs, analyses, qualities, summary)


def image_artifacts(analysis: Analysis) -> dict:
    """Display-ready [0, 255] images for each artifact name."""
    d1 = np.nan_to_num(analysis.d1, nan=0.0)
    d2 = np.nan_to_num(analysis.d2, nan=0.0)
    return {
        "g_tot": display_unit(analysis.triple.g_tot) * 255,
        "g_cor": display_unit(analysis.triple.g_cor) * 255,
        "g_mis": display_unit(analysis.triple.g_mis) * 255,
        "d1": np.clip(d1, 0.0, 1.0) * 255,
        "d2": normalize_display(np.clip(d2, 0.0, None)),
        "M": analysis.region_m * 255.0,
        "M_prime": analysis.region_m_prime * 255.0,
        "ours": display_unit(analysis.ours) * 255,
        "baseline": display_unit(analysis.baseline) * 255,
    }


def write_images(analysis: Analysis, out_dir, name: str = "") -> dict:
    files = {}
    for key, img in image_artifacts(analysis).items():
        fname = f"{key}.pgm"
        write_pgm(os.path.join(out_dir, fname), img, tag=f"qsspi {name} {key}".strip())
        files[key] = fname
    return files


def security_document(config: ExperimentConfig, analysis: Analysis, artifacts: dict, q: QualityReport | None, summary=None) -> dict:
    doc = {
        "scenario": config.name,
        "config": dict(config_to_pairs(config)),
        "report": analysis.report.to_dict(),
        "artifacts": artifacts,
    }
    if q is not None:
        doc["quality"] = q.to_dict()
    if summary is not None:
        doc["repeats"] = summary
    return doc


def write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_quality_csv(path, result: ScenarioResult) -> None:
    rows = []
    for seed, q in zip(result.summary["seeds"], result.qualities):
        row = q.csv_row(result.config.name)
        row["seed"] = seed
        rows.append(row)
    fieldnames = ["scenario", "seed"] + [k for k in rows[0] if k not in ("scenario", "seed")]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def run_scenario(config: ExperimentConfig, out_dir=None, base_dir=None) -> ScenarioResult:
    """Execute ``config`` and write the run file, images, and reports of the first seed.

    Repeats feed the ``repeats`` summary in the security report and one CSV
    row each.
    """
    out_dir = out_dir or config.output
    os.makedirs(out_dir, exist_ok=True)
    result = execute(config, base_dir)
    first = result.analyses[0]
    result.runs[0].write(os.path.join(out_dir, RUN_FILE))
    files = write_images(first, out_dir, config.name)
    files["run"] = RUN_FILE
    files["quality"] = QUALITY_FILE
    doc = security_document(config, first, files, result.qualities[0], result.summary)
    write_json(os.path.join(out_dir, SECURITY_FILE), doc)
    write_quality_csv(os.path.join(out_dir, QUALITY_FILE), result)
    return result
