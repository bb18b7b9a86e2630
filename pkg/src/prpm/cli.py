"""Command-line entry point: ``prpm {synth,train,index,replay,sweep}``.

Every command writes into ``--out`` a ``manifest.json`` (config snapshot,
input and artifact hashes, seeds, version, argv) and a ``config.txt`` that
can be fed back through ``--config`` to reproduce the run.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from importlib import resources
from pathlib import Path

from prpm import __version__
from prpm import pipeline as pl
from prpm import replay as rp
from prpm.config import Settings, load_settings
from prpm.errors import ConfigError, SchemaMismatch
from prpm.event_log import extract_prefixes, flatten, write_log
from prpm.synth import BUNDLED_SEED, BUNDLED_SPEC, SynthSpec, generate_synthetic_log

log = logging.getLogger("prpm")

MODELS_FILE = "models.json"
SYNTH_FLAGS = ("n_cases", "base_neg_rate", "uplift", "uplift_slope", "noise", "propensity", "length_effect")


def bundled_log() -> Path:
    return Path(str(resources.files("prpm") / "data" / "synthetic_log.csv"))


def _settings_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("settings (override --config and built-in defaults)")
    for f in fields(Settings):
        g.add_argument("--" + f.name.replace("_", "-"), dest=f.name, metavar="V", default=None)


def _io_args(p: argparse.ArgumentParser, models: bool) -> None:
    p.add_argument("--config", type=Path, help="flat key = value settings file")
    p.add_argument("--log", type=Path, default=None, help="event log CSV (default: bundled synthetic log)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    if models:
        p.add_argument("--models", type=Path, default=None,
                       help=f"trained {MODELS_FILE} (default: train on the log's training split)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prpm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"prpm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labelled event log")
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--seed", type=int, default=BUNDLED_SEED)
    for name in SYNTH_FLAGS:
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=type(getattr(BUNDLED_SPEC, name)),
                       default=getattr(BUNDLED_SPEC, name))
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("train", help="fit the outcome ensemble and uplift model")
    _io_args(p, models=False)
    _settings_args(p)

    p = sub.add_parser("index", help="attach the future-state history index to trained models")
    _io_args(p, models=True)
    _settings_args(p)

    p = sub.add_parser("replay", help="replay the test split under one policy")
    _io_args(p, models=True)
    p.add_argument("--policy", default="avgProba_CATE_oppCost")
    _settings_args(p)

    p = sub.add_parser("sweep", help="replay every configured policy at every resource level")
    _io_args(p, models=True)
    _settings_args(p)
    return parser


def _settings(args) -> Settings:
    overrides = {f.name: getattr(args, f.name) for f in fields(Settings)}
    return load_settings(args.config, overrides)


def _write_manifest(out: Path, args, argv, settings: Settings | None, inputs: dict, artifacts: list[Path],
                    seeds: dict) -> None:
    manifest = {
        "tool": "prpm",
        "version": __version__,
        "command": args.command,
        "argv": list(argv),
        "config": settings.to_dict() if settings is not None else None,
        "seeds": seeds,
        "inputs": {k: {"path": str(p), "sha256": pl.sha256_file(p)} for k, p in inputs.items()},
        "artifacts": {p.name: pl.sha256_file(p) for p in artifacts},
    }
    pl.save_json(manifest, out / "manifest.json")


def _write_config(out: Path, settings: Settings) -> Path:
    p = out / "config.txt"
    p.write_text(settings.to_text(), encoding="utf-8")
    return p


def _train(log_path: Path, settings: Settings):
    splits = pl.load_splits(log_path, settings)
    bundle, prefixes = pl.fit_models(splits.train, settings)
    bundle.source_sha256 = pl.sha256_file(log_path)
    return splits, bundle, prefixes


def _training_prefixes(splits, bundle: pl.Bundle):
    return flatten(extract_prefixes(splits.train, 1.0, bundle.schema, bundle.cap))


def _load_bundle(path: Path, log_path: Path, settings: Settings):
    bundle = pl.Bundle.from_dict(pl.load_json(path))
    splits = pl.load_splits(log_path, settings)
    if bundle.source_sha256 not in (None, pl.sha256_file(log_path)):
        log.warning("models were trained on a different log than %s", log_path)
    return splits, bundle


def cmd_synth(args, argv) -> list[str]:
    spec = SynthSpec(**{k: getattr(args, k) for k in SYNTH_FLAGS},
                     **{k: getattr(BUNDLED_SPEC, k) for k in ("ramp_events", "signal_std", "noise_scale")})
    traces = generate_synthetic_log(spec, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "log.csv"
    write_log(traces, path)
    _write_manifest(args.out, args, argv, None, {}, [path], {"synth": args.seed})
    neg = sum(t.outcome == "negative" for t in traces)
    treated = sum(t.treated for t in traces)
    return [f"wrote {len(traces)} cases ({neg} negative, {treated} treated) to {path}"]


def cmd_train(args, argv) -> list[str]:
    settings = _settings(args)
    log_path = args.log or bundled_log()
    splits, bundle, _ = _train(log_path, settings)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / MODELS_FILE
    pl.save_json(bundle.to_dict(), path)
    cfg = _write_config(args.out, settings)
    _write_manifest(args.out, args, argv, settings, {"log": log_path}, [path, cfg],
                    {"outcome": settings.seed, "uplift": settings.seed + 1})
    return [f"trained on {len(splits.train)} cases ({len(bundle.schema)} features, prefix cap {bundle.cap})",
            f"wrote {path}"]


def cmd_index(args, argv) -> list[str]:
    settings = _settings(args)
    log_path = args.log or bundled_log()
    inputs = {"log": log_path}
    if args.models is not None:
        splits, bundle = _load_bundle(args.models, log_path, settings)
        inputs["models"] = args.models
    else:
        splits, bundle, _ = _train(log_path, settings)
    pl.attach_index(bundle, _training_prefixes(splits, bundle))
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / MODELS_FILE
    pl.save_json(bundle.to_dict(with_index=True), path)
    cfg = _write_config(args.out, settings)
    _write_manifest(args.out, args, argv, settings, inputs, [path, cfg],
                    {"outcome": settings.seed, "uplift": settings.seed + 1})
    sizes = {k: len(b.freq) for k, b in sorted(bundle.index.buckets.items())}
    return [f"indexed {sum(sizes.values())} distinct prefixes over lengths {min(sizes)}..{max(sizes)}",
            f"wrote {path}"]


def _replay(args, argv, policy_names) -> list[str]:
    settings = _settings(args)
    log_path = args.log or bundled_log()
    inputs = {"log": log_path}
    if args.models is not None:
        splits, bundle = _load_bundle(args.models, log_path, settings)
        inputs["models"] = args.models
        if bundle.index is None:
            pl.attach_index(bundle, _training_prefixes(splits, bundle))
    else:
        splits, bundle, prefixes = _train(log_path, settings)
        pl.attach_index(bundle, prefixes)
    cases = pl.score_traces(splits.test, bundle, settings.knn_k)
    policies = {name: settings.policy(name) for name in policy_names}
    matrix = rp.sweep(cases, policies, settings.resources, settings.costs, settings.duration, settings.seed)
    artifacts = rp.emit_report(matrix, args.out)
    cfg = _write_config(args.out, settings)
    if args.models is None:
        models = args.out / MODELS_FILE
        pl.save_json(bundle.to_dict(with_index=True), models)
        artifacts.append(models)
    _write_manifest(args.out, args, argv, settings, inputs, artifacts + [cfg],
                    {"outcome": settings.seed, "uplift": settings.seed + 1, "replay": settings.seed})
    lines = [f"replayed {len(cases)} test cases; {len(matrix)} runs written to {args.out}",
             f"{'policy':32s} {'R':>3s} {'treated':>8s} {'total_gain':>11s} {'per_case':>9s}"]
    for rep in matrix:
        lines.append(f"{rep.policy_name:32s} {rep.resources:3d} {rep.treated_count:8d} "
                     f"{rep.total_gain:11.2f} {rep.gain_per_treated:9.3f}")
    return lines


def cmd_replay(args, argv) -> list[str]:
    return _replay(args, argv, [args.policy])


def cmd_sweep(args, argv) -> list[str]:
    return _replay(args, argv, list(_settings(args).policies))


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "index": cmd_index, "replay": cmd_replay, "sweep": cmd_sweep}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        lines = COMMANDS[args.command](args, argv)
    except FileNotFoundError as e:
        msg = f"file not found: {e.filename}" if e.filename is not None else str(e)
        print(f"prpm: error: {msg}", file=sys.stderr)
        return 1
    except (ConfigError, SchemaMismatch, ValueError, OSError) as e:
        print(f"prpm: error: {e}", file=sys.stderr)
        return 1
    print("\n".join(lines))
    return 0


if __name__ == "__main__":
    sys.exit(main())
