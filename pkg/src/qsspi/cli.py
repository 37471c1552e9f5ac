"""Command-line entry point.

Subcommands::

    qsspi simulate  [--config FILE] [--from-run RUN] [--section.key VALUE ...] --out run.txt
    qsspi analyze   RUN --out DIR [--analysis.key VALUE ...]
    qsspi reconstruct RUN --out DIR [--e-f-prime X]
    qsspi metrics   RUN --true MASK [--fake MASK]
    qsspi scenario  [PRESET] [--config FILE] [--section.key VALUE ...] [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 analysis inconsistency, 4 IO error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

from qsspi.analysis import AnalysisError, correlation_triple, previous_qsspi_reconstruction, reconstruct_true_image
from qsspi.config import PRESET_NAMES, ConfigError, ExperimentConfig, config_from_provenance, parse_config, preset
from qsspi.metrics import QualityReport, display_unit
from qsspi.patterns import build_pattern_set
from qsspi.scene import PGMError, write_pgm
from qsspi.scenario import (
    SECURITY_FILE,
    analyze_run,
    build_scene,
    quality,
    resolve_mask,
    run_scenario,
    security_document,
    simulate,
    write_images,
    write_json,
)
from qsspi.simulator import RunRecord

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ANALYSIS = 3
EXIT_IO = 4

log = logging.getLogger("qsspi")


def split_overrides(extra: list[str]) -> list[tuple[str, str]]:
    """Turn ``--section.key value`` (or ``--section.key=value``) pairs into tuples."""
    pairs = []
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or "." not in tok:
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"missing value for {tok}")
            value = extra[i + 1]
            i += 2
        pairs.append((key, value))
    return pairs


def _run_config(run: RunRecord, overrides) -> ExperimentConfig:
    base = config_from_provenance(run.provenance) if "scene.true" in run.provenance else None
    if base is None:
        base = ExperimentConfig(scene_true="none", n=int(run.provenance.get("run.n", 5)))
    return parse_config(None, overrides, base=base)


def _pattern_set_for(run: RunRecord):
    num_patterns = len(run) // 2
    n = (num_patterns.bit_length() - 1) // 2
    if 4**n != num_patterns:
        raise AnalysisError(f"run has {len(run)} shots, not a full Hadamard budget")
    return build_pattern_set(n)


def cmd_simulate(args, overrides) -> int:
    base = None
    if args.from_run:
        base = config_from_provenance(RunRecord.read(args.from_run).provenance)
    config = parse_config(args.config, overrides, base=base)
    base_dir = os.path.dirname(os.path.abspath(args.config)) if args.config else None
    ps = build_pattern_set(config.n)
    run = simulate(config, ps, build_scene(config, base_dir), config.seed)
    run.write(args.out)
    log.info("wrote %s (%d shots)", args.out, len(run))
    return EXIT_OK


def cmd_analyze(args, overrides) -> int:
    run = RunRecord.read(args.run)
    config = _run_config(run, overrides)
    ps = _pattern_set_for(run)
    a = analyze_run(config, run, ps)
    os.makedirs(args.out, exist_ok=True)
    files = write_images(a, args.out, config.name)
    q = None
    if config.scene_true.lower() not in ("none", "empty", "zero"):
        q = quality(a, build_scene(config))
    write_json(os.path.join(args.out, SECURITY_FILE), security_document(config, a, files, q))
    r = a.report
    print(f"verdict={r.verdict.value} e_S={r.e_s:.4f} e_F'={r.e_f_prime} |M|={r.region_m_size} |M'|={r.region_m_prime_size}")
    return EXIT_OK


def cmd_reconstruct(args, overrides) -> int:
    run = RunRecord.read(args.run)
    ps = _pattern_set_for(run)
    triple = correlation_triple(run, ps)
    if args.e_f_prime is not None:
        e_fp = args.e_f_prime
    else:
        config = _run_config(run, overrides)
        e_fp = analyze_run(config, run, ps).report.e_f_prime
        if e_fp is None:
            raise AnalysisError("no erroneous region found; nothing to remove")
    os.makedirs(args.out, exist_ok=True)
    ours = reconstruct_true_image(triple, e_fp)
    write_pgm(os.path.join(args.out, "ours.pgm"), display_unit(ours) * 255, tag=f"qsspi ours e_F'={e_fp:.6f}")
    write_pgm(os.path.join(args.out, "baseline.pgm"), display_unit(previous_qsspi_reconstruction(triple)) * 255, tag="qsspi baseline")
    print(f"e_F'={e_fp:.6f}")
    return EXIT_OK


def cmd_metrics(args, overrides) -> int:
    run = RunRecord.read(args.run)
    config = _run_config(run, overrides)
    ps = _pattern_set_for(run)
    a = analyze_run(config, run, ps)
    true_mask = resolve_mask(args.true, ps.n)
    fake_mask = resolve_mask(args.fake, ps.n) if args.fake else None
    images = {"g_tot": a.triple.g_tot, "g_cor": a.triple.g_cor, "ours": a.ours, "baseline": a.baseline}
    row = QualityReport.evaluate(images, true_mask, fake_mask).csv_row(config.name)
    writer = csv.DictWriter(sys.stdout, fieldnames=list(row), lineterminator="\n")
    writer.writeheader()
    writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return EXIT_OK


def cmd_scenario(args, overrides) -> int:
    base = preset(args.preset) if args.preset else None
    config = parse_config(args.config, overrides, base=base)
    base_dir = os.path.dirname(os.path.abspath(args.config)) if args.config else None
    out = args.out or config.output
    result = run_scenario(config, out, base_dir)
    s = result.summary
    print(f"scenario={config.name} verdicts={','.join(sorted(set(s['verdicts'])))}")
    print(f"e_S mean={s['e_s']['mean']:.4f} std={s['e_s']['std']:.4f}")
    if s["e_f_prime"]["mean"] is not None:
        print(f"e_F' mean={s['e_f_prime']['mean']:.4f} std={s['e_f_prime']['std']:.4f}")
    print(f"artifacts in {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsspi", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one run and write the run file")
    p.add_argument("--config")
    p.add_argument("--from-run", help="reuse the provenance header of an existing run file as config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="security analysis of a run file")
    p.add_argument("run")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("reconstruct", help="write our and the baseline reconstruction")
    p.add_argument("run")
    p.add_argument("--out", required=True)
    p.add_argument("--e-f-prime", type=float, help="use this fake error rate instead of estimating it")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("metrics", help="fidelity and true/fake ratio as a CSV row")
    p.add_argument("run")
    p.add_argument("--true", required=True, help="glyph spec or PGM path")
    p.add_argument("--fake")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("scenario", help="run a preset or configured scenario end to end")
    p.add_argument("preset", nargs="?", choices=PRESET_NAMES)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_scenario)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, split_overrides(extra))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AnalysisError as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except (OSError, PGMError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
