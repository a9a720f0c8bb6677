"""Command-line entry point: ``securiot {train,evaluate,simulate,ledger}``.

Exit status: 0 success, 2 usage error, 3 input data error, 4 model error,
5 ledger verification failure, 6 scenario error, 1 anything else.
Every command that writes into ``--out`` also writes ``manifest.json``
(command, effective configuration, seed, library versions, SHA-256 of each
output); no timestamps, so repeated runs are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import confusion_csv, evaluate, heatmap_text, normalize
from .ids import cache
from .ids.data import DataError, build_dataset, clean
from .ids.pipeline import Prepared, ingest_path, prepare, prepare_synthetic
from .ledger import (ExportFormatError, LedgerError, NotFound, TxKind, first_invalid_height,
                     query_asset, read_export, replay)
from .membership import MembershipError, MembershipRegistry
from .models import FAMILIES, ModelError, read_model, serialize_model, train
from .scenario import (BUNDLED, ScenarioError, build_registry, bundled_scenario, read_scenario,
                       run_scenario)

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_DATA, EXIT_MODEL, EXIT_VERIFY, EXIT_SCENARIO = 0, 1, 2, 3, 4, 5, 6


class UsageError(Exception):
    pass


# -- helpers ---------------------------------------------------------------------------

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _hyper(pairs: list[str]) -> dict:
    out = {}
    for p in pairs:
        k, sep, v = p.partition("=")
        if not sep or not k:
            raise UsageError(f"--param expects key=value, got {p!r}")
        out[k.strip()] = _parse_value(v.strip())
    return out


def apply_config(args: argparse.Namespace, path: str | None) -> None:
    """Override parsed flags with ``key = value`` lines from a config file."""
    if not path:
        return
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from None
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        k, sep, v = line.partition("=")
        key = k.strip().replace("-", "_")
        if not sep or not hasattr(args, key) or key in ("command", "ledger_command", "func"):
            raise UsageError(f"{path}:{n}: unknown or malformed setting {line!r}")
        v = v.strip()
        current = getattr(args, key)
        if key == "param":
            args.param = list(args.param or []) + [v]
        elif isinstance(current, bool):
            setattr(args, key, v.lower() in ("1", "true", "yes", "on"))
        elif isinstance(current, int):
            setattr(args, key, int(v))
        elif isinstance(current, float):
            setattr(args, key, float(v))
        else:
            setattr(args, key, v)


def _write(out: Path, name: str, content: str | bytes, written: dict) -> Path:
    path = out / name
    data = content.encode("utf-8") if isinstance(content, str) else content
    path.write_bytes(data)
    written[name] = hashlib.sha256(data).hexdigest()
    return path


def _manifest(out: Path, args: argparse.Namespace, written: dict, extra: dict | None = None) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    doc = {
        "command": args.command,
        "seed": args.seed,
        "config": config,
        "versions": {"securiot": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "outputs": dict(sorted(written.items())),
    }
    if extra:
        doc.update(extra)
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, default=str) + "\n")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- train -----------------------------------------------------------------------------

def _prepared(args) -> Prepared:
    if args.synthetic:
        return prepare_synthetic(args.seed, args.scale, args.test_fraction)
    if not args.data:
        raise UsageError("train needs --data PATH or --synthetic")
    return prepare(ingest_path(args.data), args.seed, args.scale, args.test_fraction, args.clean_policy)


def cmd_train(args) -> int:
    prep = _prepared(args)
    config = _hyper(args.param or [])
    if args.family == "mlp":
        config.setdefault("seed", args.seed)
    model = train(args.family, prep.train, config)
    out = _outdir(args)
    written: dict[str, str] = {}
    _write(out, "model.bin", serialize_model(model), written)
    _write(out, "test.cache", cache.dumps(prep.test), written)
    _write(out, "train_report.txt", prep.summary_text(), written)
    _manifest(out, args, written)
    print(f"trained {args.family} on {len(prep.train)} rows ({len(prep.schema.names)} features); "
          f"model written to {out / 'model.bin'}")
    return EXIT_OK


# -- evaluate --------------------------------------------------------------------------

def _test_data(args, model):
    if args.synthetic:
        return prepare_synthetic(args.seed, args.scale, args.test_fraction).test
    if not args.data:
        raise UsageError("evaluate needs --data PATH (cache, CSV or directory) or --synthetic")
    path = Path(args.data)
    if path.is_file() and path.suffix == ".cache":
        return cache.load(path)
    cleaned, _ = clean(ingest_path(path), args.clean_policy)
    return build_dataset(cleaned, model.schema, model.labels)


def cmd_evaluate(args) -> int:
    if not args.model:
        raise UsageError("evaluate needs --model")
    model = read_model(args.model)
    data = _test_data(args, model)
    pred, _ = model.predict(data)
    cm, report = evaluate(data.y, pred, model.labels)
    norm = normalize(cm)
    out = _outdir(args)
    written: dict[str, str] = {}
    _write(out, "report.txt", report.to_text(), written)
    _write(out, "report.json", report.to_json(), written)
    _write(out, "confusion.csv", confusion_csv(cm), written)
    _write(out, "confusion_normalized.csv", confusion_csv(cm, normalized=True), written)
    _write(out, "heatmap.txt", heatmap_text(norm, model.labels), written)
    _manifest(out, args, written)
    sys.stdout.write(report.to_text().split("per_class", 1)[0])
    return EXIT_OK


# -- simulate --------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    if not args.scenario:
        raise UsageError("simulate needs --scenario FILE (or a bundled name: "
                         f"{', '.join(BUNDLED)})")
    sc = bundled_scenario(args.scenario) if args.scenario in BUNDLED else read_scenario(args.scenario)
    if args.model:
        model = read_model(args.model)
        model_note = {"model": str(args.model)}
    else:
        prep = prepare_synthetic(sc.corpus_seed)
        model = train("tree", prep.dataset)
        model_note = {"model": f"tree trained on the synthetic corpus (seed {sc.corpus_seed})"}
    res = run_scenario(sc, model)
    out = _outdir(args)
    written: dict[str, str] = {}
    _write(out, "ledger.ndjson", res.ledger_export(), written)
    _write(out, "registry.csv", build_registry(sc).dumps(), written)
    _write(out, "trace.tsv", res.trace(), written)
    _write(out, "decisions.tsv", res.decision_log(), written)
    _write(out, "summary.txt", res.summary_text(), written)
    _write(out, "summary.json", res.summary_json(), written)
    _manifest(out, args, written, model_note)
    sys.stdout.write(res.summary_text())
    return EXIT_OK


# -- ledger ----------------------------------------------------------------------------

def cmd_ledger_inspect(args) -> int:
    blocks = read_export(args.file)
    for b in blocks:
        kinds = {}
        for tx in b.tx_list:
            kinds[tx.kind.value] = kinds.get(tx.kind.value, 0) + 1
        summary = " ".join(f"{k}={v}" for k, v in sorted(kinds.items())) or "empty"
        print(f"height={b.height} proposer={b.proposer} timestamp={b.timestamp} "
              f"hash={b.block_hash.hex()[:16]} txs={len(b.tx_list)} {summary}")
    state = replay(blocks)
    print(f"chain_id={blocks[0].chain_id} height={blocks[-1].height} devices={len(state.devices)} "
          f"sensors={len(state.sensors)} alerts={len(state.alerts)}")
    return EXIT_OK


def cmd_ledger_verify(args) -> int:
    try:
        blocks = read_export(args.file)
    except ExportFormatError as e:
        print(f"FAIL height={e.line - 1}: {e}")
        return EXIT_VERIFY
    registry = MembershipRegistry.load(args.registry) if args.registry else None
    bad = first_invalid_height(blocks, registry)
    if bad is not None:
        print(f"FAIL height={bad}: block breaks the hash chain")
        return EXIT_VERIFY
    print("OK")
    return EXIT_OK


def cmd_ledger_query(args) -> int:
    blocks = read_export(args.file)
    state = replay(blocks)
    asset = query_asset(state, args.asset)
    if hasattr(asset, "last_value"):
        print(f"sensor={asset.sensor_id} device={asset.device_id} value={asset.last_value}")
        for b in blocks:
            for tx in b.tx_list:
                if tx.sensor_id == args.asset and tx.kind is not TxKind.ALERT:
                    print(f"  height={b.height} {tx.kind.value} by={tx.submitter} value={tx.value}")
    else:
        print(f"device={asset.device_id} owner={asset.owner_member} status={asset.status.value}")
        for b in blocks:
            for tx in b.tx_list:
                if tx.device_id == args.asset and tx.sensor_id is None:
                    extra = f" class={tx.alert_class} p={tx.probability}" if tx.kind is TxKind.ALERT else ""
                    print(f"  height={b.height} {tx.kind.value} by={tx.submitter}{extra}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    def global_flags(parser, suppress: bool):
        # subcommands repeat the global flags without defaults so either position works
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        parser.add_argument("--seed", type=int, default=d(0), help="seed for every random choice")
        parser.add_argument("--out", default=d("out"), help="output directory (default ./out)")
        parser.add_argument("--config", default=d(None), help="key = value file overriding flags")

    common = argparse.ArgumentParser(add_help=False)
    global_flags(common, suppress=True)
    p = argparse.ArgumentParser(prog="securiot", description=__doc__.split("\n")[0])
    global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    def data_flags(sp):
        sp.add_argument("--data", help="CSV file or directory of CSVs (evaluate also takes a .cache)")
        sp.add_argument("--synthetic", action="store_true", help="use the bundled synthetic corpus")
        sp.add_argument("--scale", type=float, default=1.0, help="stratified fraction of rows to keep")
        sp.add_argument("--test-fraction", type=float, default=0.3)
        sp.add_argument("--clean-policy", choices=("strict", "lenient"), default="strict")

    t = sub.add_parser("train", parents=[common], help="train a detection model")
    data_flags(t)
    t.add_argument("--family", choices=FAMILIES, default="tree")
    t.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="hyperparameter override (repeatable; values parsed as JSON)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", parents=[common], help="score a model on held-out data")
    data_flags(e)
    e.add_argument("--model", default="")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("simulate", parents=[common], help="run an end-to-end scenario")
    s.add_argument("--scenario", default="", help=f"scenario file or one of {', '.join(BUNDLED)}")
    s.add_argument("--model", default="", help="model file (default: tree on the synthetic corpus)")
    s.set_defaults(func=cmd_simulate)

    lg = sub.add_parser("ledger", parents=[common], help="inspect, verify or query a ledger export")
    lsub = lg.add_subparsers(dest="ledger_command", required=True)
    li = lsub.add_parser("inspect", parents=[common])
    li.add_argument("file")
    li.set_defaults(func=cmd_ledger_inspect)
    lv = lsub.add_parser("verify", parents=[common])
    lv.add_argument("file")
    lv.add_argument("--registry", default="", help="member file to re-check signatures")
    lv.set_defaults(func=cmd_ledger_verify)
    lq = lsub.add_parser("query", parents=[common])
    lq.add_argument("file")
    lq.add_argument("asset")
    lq.set_defaults(func=cmd_ledger_query)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        apply_config(args, args.config)
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"securiot: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as e:
        print(f"securiot: scenario error: {e}", file=sys.stderr)
        return EXIT_SCENARIO
    except (ModelError, DataError) as e:
        code = EXIT_DATA if isinstance(e, DataError) and not isinstance(e, ModelError) else EXIT_MODEL
        if type(e).__name__ == "SchemaMismatch":
            code = EXIT_MODEL
        print(f"securiot: {type(e).__name__}: {e}", file=sys.stderr)
        return code
    except NotFound as e:
        print(f"securiot: no asset {e.args[0]!r} on the ledger", file=sys.stderr)
        return EXIT_DATA
    except (LedgerError, MembershipError) as e:
        print(f"securiot: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_VERIFY
    except (OSError, KeyError) as e:
        print(f"securiot: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
