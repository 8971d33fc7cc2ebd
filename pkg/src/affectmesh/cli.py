"""Command-line entry point.

Exit codes: 0 success, 1 a check failed, 2 bad input (missing file, invalid
scenario or config), 3 malformed behavioral log rows.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import checks, paf, simnet, trainer
from .affect import MoodLookup, generate_default_lookup
from .catalog import Catalog, generate as generate_catalog
from .cfc import save_weights
from .curation import RequeueRecord, Reason, requeue_csv

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_LOG = 0, 1, 2, 3

BUILTIN_SCENARIOS = {
    "echo-on": lambda seed: simnet.scenario_echo(True, seed=seed),
    "echo-off": lambda seed: simnet.scenario_echo(False, seed=seed),
    "colisten": lambda seed: simnet.scenario_colisten(seed),
    "solo": lambda seed: simnet.scenario_solo() if seed is None else simnet.scenario_solo(seed),
}


class InputError(Exception):
    pass


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_script(source: str, seed: int | None, config: str | None) -> simnet.ScenarioScript:
    if source.startswith("builtin:"):
        name = source.split(":", 1)[1]
        if name not in BUILTIN_SCENARIOS:
            raise InputError(f"unknown builtin scenario {name!r}; choose from {', '.join(BUILTIN_SCENARIOS)}")
        script = BUILTIN_SCENARIOS[name](seed if seed is not None else (None if name == "solo" else 0))
    else:
        script = simnet.ScenarioScript.load(source)
    if config or seed is not None:
        doc = script.to_dict()
        if config:
            path = Path(config)
            if not path.is_file():
                raise InputError(f"no such config file: {path}")
            try:
                doc.update(json.loads(path.read_text(encoding="utf-8")))
            except json.JSONDecodeError as exc:
                raise InputError(f"config is not valid JSON: {exc}") from None
        if seed is not None:
            doc["seed"] = seed
        script = simnet.ScenarioScript.from_dict(doc)
    return script


def _requeue_records(metrics: simnet.SimMetrics) -> list[RequeueRecord]:
    recs = []
    for agent, rows in metrics.requeues.items():
        for t, reason, old, new in rows:
            recs.append(RequeueRecord(t, agent, simnet._parse_point(old), simnet._parse_point(new), Reason(reason)))
    return sorted(recs, key=lambda r: (r.time, r.agent))


def cmd_simulate(args) -> int:
    script = _load_script(args.script, args.seed, args.config)
    lookup = MoodLookup.load(args.mood_lookup) if args.mood_lookup else None
    catalog = Catalog.load(args.catalog) if args.catalog else None
    result = simnet.simulate(script, lookup, catalog)
    out = _out_dir(args)
    (out / "event_log.csv").write_text(result.event_log, encoding="utf-8")
    (out / "metrics.json").write_text(result.metrics.report(), encoding="utf-8")
    (out / "requeues.csv").write_text(requeue_csv(_requeue_records(result.metrics)), encoding="utf-8")
    (out / "svaf.csv").write_text(simnet.fusion_csv(result.event_log), encoding="utf-8")
    m = result.metrics
    print(f"scenario {script.name}: {m.messages} messages, requeues {m.requeue_counts}, "
          f"oscillation {m.oscillation_count}")
    print(f"wrote event_log.csv, metrics.json, requeues.csv, svaf.csv to {out}")
    return EXIT_OK


def cmd_paf_replay(args) -> int:
    path = Path(args.log) if args.log else paf.bundled_log_path()
    if not path.is_file():
        raise InputError(f"no such log: {path}")
    try:
        signals = paf.parse_log(path.read_text(encoding="utf-8"))
    except paf.LogFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOG
    report = paf.replay(signals)
    print(report.text())
    if args.out:
        (_out_dir(args) / "paf_profile.txt").write_text(report.text() + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_cfc_check(args) -> int:
    results = checks.run_all(args.seed or 0)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name}: {r.detail}")
    return EXIT_OK if all(r.ok for r in results) else EXIT_CHECK


def cmd_train_toy(args) -> int:
    cfg = trainer.TOY_TRAIN
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise InputError(f"no such config file: {path}")
        try:
            cfg = trainer.TrainConfig(**{**cfg.__dict__, **json.loads(path.read_text(encoding="utf-8"))})
        except (json.JSONDecodeError, TypeError) as exc:
            raise InputError(f"bad training config: {exc}") from None
    if args.epochs is not None:
        cfg = trainer.TrainConfig(**{**cfg.__dict__, "epochs": args.epochs})
    out = _out_dir(args)
    result = trainer.train(cfg, args.seed or 0, checkpoint_dir=out / "checkpoints")
    (out / "history.csv").write_text(trainer.history_csv(result.history), encoding="utf-8")
    save_weights(result.model, out / "toy_weights.npz")
    first, best = result.history[0]["val_loss"], min(h["val_loss"] for h in result.history)
    print(f"val loss {first:.4f} -> {best:.4f} (best epoch {result.best_epoch}"
          f"{', early stop' if result.stopped_early else ''})")
    return EXIT_OK


def cmd_catalog_gen(args) -> int:
    cat = generate_catalog(args.seed or 0, args.n)
    out = Path(args.out or "catalog.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    cat.save(out)
    print(f"wrote {len(cat)} tracks across {len(cat.genres)} genres to {out}")
    return EXIT_OK


def cmd_lookup_gen(args) -> int:
    lookup = generate_default_lookup(args.seed if args.seed is not None else 1)
    out = Path(args.out or "mood_lookup.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    lookup.save(out)
    print(f"wrote {len(lookup)} anchors to {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.event_log)
    if not path.is_file():
        raise InputError(f"no such event log: {path}")
    try:
        metrics = simnet.metrics_from_log(path.read_text(encoding="utf-8"))
    except (ValueError, KeyError) as exc:
        raise InputError(f"cannot read event log: {exc}") from None
    text = metrics.report()
    if args.out:
        (_out_dir(args) / "metrics.json").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=None, help="output directory (or file for the generators)")
    common.add_argument("--config", default=None, help="JSON overrides")
    common.add_argument("--mood-lookup", default=None, help="mood lookup CSV")
    common.add_argument("--catalog", default=None, help="catalog CSV")

    p = argparse.ArgumentParser(prog="affectmesh", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run a scenario file or builtin:<name>")
    s.add_argument("script")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("paf-replay", parents=[common], help="replay a behavioral log into a profile")
    s.add_argument("log", nargs="?", default=None, help="defaults to the bundled 46-row log")
    s.set_defaults(func=cmd_paf_replay)

    s = sub.add_parser("cfc-check", parents=[common], help="cell properties and the gradient oracle")
    s.set_defaults(func=cmd_cfc_check)

    s = sub.add_parser("train-toy", parents=[common], help="train the toy model on the synthetic task")
    s.add_argument("--epochs", type=int, default=None)
    s.set_defaults(func=cmd_train_toy)

    s = sub.add_parser("catalog-gen", parents=[common], help="generate a synthetic catalog CSV")
    s.add_argument("--n", type=int, default=1000)
    s.set_defaults(func=cmd_catalog_gen)

    s = sub.add_parser("lookup-gen", parents=[common], help="generate the 400-anchor mood lookup")
    s.set_defaults(func=cmd_lookup_gen)

    s = sub.add_parser("report", parents=[common], help="recompute metrics from an event log")
    s.add_argument("event_log")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except (InputError, simnet.ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
