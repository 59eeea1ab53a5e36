"""Command-line entry point.

Every verb runs its pipeline stage inside ``--out``, first bringing any
stale or missing upstream stage up to date. ``classify --profile`` also
scores user-supplied profile CSVs with the trained decision model.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 infeasible sampling slice.
"""

import argparse
import json
import os
import sys

from .config import PipelineConfig
from .envelope import DecisionModel, classify, geometric_mahalanobis
from .exceptions import BladeEnvelopeError, ConfigError, EmptySliceError, MissingArtifactsError, NumericalError
from .oracle import BladeProfile
from .pipeline import STAGES, Pipeline, export_plotdata

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INFEASIBLE = 4

VERB_STAGE = {
    "fit": "fit",
    "subspace": "subspace",
    "intersect": "intersect",
    "sample": "sample",
    "envelope": "envelope",
    "classify": "classify",
    "export-mesh": "export-mesh",
    "export-plots": "export-plots",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="bladeenv", description="Inactive-subspace blade envelopes for tolerance design.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in [*VERB_STAGE, "run"]:
        p = sub.add_parser(verb, help=f"run the {verb} stage" if verb != "run" else "run the full pipeline")
        p.add_argument("--config", help="pipeline configuration (JSON)")
        p.add_argument("--out", required=True, help="run directory")
        p.add_argument("--seed-override", type=int, default=None, help="replace every stage seed by this value plus a fixed offset")
        p.add_argument("--stage", choices=STAGES, default=None, help="with run: stop after this stage")
        p.add_argument("--force", action="store_true", help="recompute stages even if their records are valid")
        if verb == "classify":
            p.add_argument("--profile", action="append", default=[], help="profile CSV to classify (repeatable)")
    return parser


def _load_config(args):
    if args.config is None:
        raise ConfigError("--config is required for this verb")
    config = PipelineConfig.from_file(args.config)
    if args.seed_override is not None:
        config = config.with_seed_override(args.seed_override)
    return config


def _classify_profiles(out_dir, paths):
    model_path = os.path.join(out_dir, "decision_model.json")
    nominal_path = os.path.join(out_dir, "nominal_profile.csv")
    missing = [p for p in (model_path, nominal_path) if not os.path.exists(p)]
    if missing:
        raise MissingArtifactsError(missing)
    model = DecisionModel.load(model_path)
    nominal = BladeProfile.from_csv(nominal_path)
    results = []
    for path in paths:
        try:
            profile = BladeProfile.from_csv(path)
        except (OSError, ValueError, IndexError) as exc:
            raise ConfigError(f"cannot read profile {path}: {exc}") from exc
        prob, decision = classify(model, profile, nominal)
        results.append({
            "profile": path,
            "distance": geometric_mahalanobis(model, profile, nominal),
            "accept_probability": prob,
            "decision": decision,
        })
    return results


def run(args):
    if args.verb == "export-plots" and args.config is None:
        files = export_plotdata(args.out)
        return {"files": sorted(files)}
    if args.verb == "classify" and args.profile and args.config is None:
        return {"profiles": _classify_profiles(args.out, args.profile)}
    config = _load_config(args)
    until = args.stage if args.verb == "run" else VERB_STAGE[args.verb]
    if args.verb != "run" and args.stage is not None and args.stage != until:
        raise ConfigError(f"--stage {args.stage} conflicts with verb {args.verb}")
    result = Pipeline(config, args.out).run(until, force=args.force)
    payload = {
        "out": result.out_dir,
        "executed": list(result.executed),
        "skipped": list(result.skipped),
        "manifest_sha256": result.manifest_hash,
        "summary": {s: result.manifest["stages"][s]["summary"] for s in result.executed},
    }
    if args.verb == "classify" and args.profile:
        payload["profiles"] = _classify_profiles(args.out, args.profile)
    return payload


def exit_code(exc):
    if isinstance(exc, EmptySliceError):
        return EXIT_INFEASIBLE
    if isinstance(exc, (ConfigError, MissingArtifactsError)):
        return EXIT_CONFIG
    if isinstance(exc, (NumericalError, BladeEnvelopeError, ArithmeticError)):
        return EXIT_NUMERICAL
    return None


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        payload = run(args)
    except Exception as exc:
        code = exit_code(exc)
        if code is None:
            raise
        stage = getattr(exc, "pipeline_stage", None)
        where = f" in stage {stage!r}" if stage else ""
        print(f"bladeenv: {type(exc).__name__}{where}: {exc}", file=sys.stderr)
        return code
    json.dump(payload, sys.stdout, indent=1, sort_keys=True, default=str)
    sys.stdout.write("\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
