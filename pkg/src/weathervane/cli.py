"""Operator command line: run scenarios, inspect ledger state, exercise the
blob store and forecasters, and launch the HTTP node.

Exit codes: 0 on success, 1 on a domain error (reported as a JSON object on
stderr), 2 on a usage error. Output files are written to a temp file and
renamed into place, so a failed command never leaves a partial file behind.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from . import __version__, forecast, ledger, node, sim
from .cas import BlobStore, Cid
from .errors import WeathervaneError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def _write_atomic(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(payload: dict, as_json: bool, human: str) -> None:
    print(json.dumps(payload, sort_keys=True) if as_json else human)


# --- subcommand handlers ------------------------------------------------------

def _cmd_simulate(args) -> int:
    config = sim.load_scenario(args.scenario)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    seeds = [config.seed + i for i in range(args.sweep)] if args.sweep else [config.seed]

    last_report = None
    for seed in seeds:
        report = sim.run_scenario(replace(config, seed=seed))
        last_report = report
        if args.out:
            out = Path(args.out)
            if args.sweep:
                out = out / f"report-{seed}.json"
            _write_atomic(out, report.to_json().encode())
    summary = {
        "seeds": seeds,
        "rounds": len(last_report.rounds),
        "poisoned_promotions": last_report.poisoned_promotions,
        "reordering_score_delta_bp": last_report.reordering_score_delta_bp,
        "consensus_digest": last_report.consensus_digest,
    }
    if args.out:
        summary["out"] = str(args.out)
        _emit(summary, args.json,
              f"wrote {len(seeds)} report(s) to {args.out}")
    else:
        print(last_report.to_json(), end="")
    if args.ledger_out:
        # Re-run the last seed to persist its final ledger state.
        world, _ = sim.execute_scenario(replace(config, seed=seeds[-1]))
        _write_atomic(Path(args.ledger_out), ledger.encode_state(world.ledger))
    return 0


def _cmd_ledger_inspect(args) -> int:
    state = ledger.decode_state(Path(args.state_file).read_bytes())
    payload = {
        "accounts": {
            acct.id: {"role": acct.role.name.lower(), "reputation": acct.reputation}
            for acct in state.accounts.values()},
        "models": [{
            "model_id": rec.model_id, "cid": rec.cid.text, "submitter": rec.submitter,
            "kind": rec.kind, "status": rec.status.value,
            "final_score_bp": rec.final_score_bp, "votes": len(rec.votes),
        } for rec in state.models.values()],
        "primary": dict(state.primary),
        "next_sequence": state.next_sequence,
        "events": len(state.event_log),
        "state_digest": ledger.state_digest(state).hex(),
    }
    print(json.dumps(payload, sort_keys=True, indent=None if args.json else 2))
    return 0


def _cmd_cas_put(args) -> int:
    store = BlobStore(args.store)
    cid = store.put(Path(args.file).read_bytes())
    _emit({"cid": cid.text}, args.json, cid.text)
    return 0


def _cmd_cas_get(args) -> int:
    store = BlobStore(args.store)
    data = store.get(Cid.parse(args.cid))
    if args.out:
        _write_atomic(Path(args.out), data)
        _emit({"cid": args.cid, "bytes": len(data), "out": args.out}, args.json,
              f"wrote {len(data)} bytes to {args.out}")
    else:
        sys.stdout.buffer.write(data)
    return 0


def _cmd_forecast_fit(args) -> int:
    data = forecast.impute_missing(forecast.read_csv(args.data, target=args.target))
    model = forecast.fit_forecaster(args.kind, data, order=args.order,
                                    period=args.period)
    blob = forecast.encode_model(model)
    _write_atomic(Path(args.out), blob)
    _emit({"kind": args.kind, "bytes": len(blob), "cid": Cid.of(blob).text,
           "out": args.out},
          args.json, f"wrote {args.kind} model ({len(blob)} bytes) to {args.out}")
    return 0


def _cmd_forecast_eval(args) -> int:
    model = forecast.decode_model(Path(args.model).read_bytes())
    data = forecast.impute_missing(forecast.read_csv(args.data, target=args.target))
    train, test = forecast.temporal_split(data, args.train_fraction)
    if model.kind == "nearest_centroid":
        predicted = forecast.predict(model, test, 1)
        report = forecast.classification_metrics(
            list(test.categorical[model.class_column]), list(predicted))
        score = forecast.skill_score(report, None, "classification")
    else:
        predicted = forecast.predict(model, train, test.n_rows)
        report = forecast.regression_metrics(test.target_values(), predicted)
        naive = forecast.predict(
            forecast.fit_forecaster("naive_last", train), train, test.n_rows)
        reference = forecast.regression_metrics(test.target_values(), naive)
        score = forecast.skill_score(report, reference, "regression")
    payload = {"kind": model.kind, "metrics": report.to_dict(), "skill_score_bp": score}
    print(json.dumps(payload, sort_keys=True, indent=None if args.json else 2))
    return 0


def _cmd_serve(args) -> int:
    with open(args.config, "rb") as handle:
        raw = tomllib.load(handle)
    server = raw.get("server", {})
    limits = raw.get("limits", {})
    token_file = raw.get("token_file")
    token_entries = list(raw.get("tokens", []))
    if token_file:
        with open(Path(args.config).parent / token_file, "rb") as handle:
            token_entries += tomllib.load(handle).get("tokens", [])
    tokens = [node.ApiToken(e["token"], e["account"], node.ROLE_NAMES[e["role"]])
              for e in token_entries]
    config = node.NodeConfig(
        tokens=tokens,
        host=server.get("host", "127.0.0.1"),
        port=int(server.get("port", 8420)),
        limiter_capacity=int(limits.get("capacity", 30)),
        limiter_refill_per_second=float(limits.get("refill_per_second", 1.0)),
    )
    owner = raw.get("genesis", {}).get("owner", ledger.account_id("owner"))
    state = ledger.genesis(owner)
    for token in tokens:
        if token.role is node.Role.ADMIN:
            ledger.add_admin(state, owner, token.account)
        elif token.role is node.Role.CLIENT:
            ledger.add_client(state, owner, token.account)
    store = BlobStore(raw.get("store", {}).get("root", "blobstore"))
    print(f"serving on {config.host}:{config.port} "
          f"({len(tokens)} tokens, store at {store.root})", file=sys.stderr)
    node.serve(state, store, config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="weathervane",
        description="Decentralized forecaster governance: simulator, ledger, "
                    "store, forecasting, and HTTP node.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="override the scenario seed")
    p.add_argument("--out", help="report file (or directory with --sweep)")
    p.add_argument("--sweep", type=int, default=0,
                   help="run N consecutive seeds starting at the base seed")
    p.add_argument("--ledger-out", help="write the final ledger state (WFL1)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("ledger-inspect", help="summarize a WFL1 state file")
    p.add_argument("state_file")
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=_cmd_ledger_inspect)

    p = sub.add_parser("cas", help="content-addressed store")
    cas_sub = p.add_subparsers(dest="cas_command", required=True)
    pp = cas_sub.add_parser("put", help="store a file, print its cid")
    pp.add_argument("file")
    pp.add_argument("--store", default="blobstore")
    pp.add_argument("--json", action="store_true")
    pp.set_defaults(handler=_cmd_cas_put)
    pg = cas_sub.add_parser("get", help="fetch a blob by cid")
    pg.add_argument("cid")
    pg.add_argument("--store", default="blobstore")
    pg.add_argument("--out")
    pg.add_argument("--json", action="store_true")
    pg.set_defaults(handler=_cmd_cas_get)

    p = sub.add_parser("forecast", help="fit and evaluate forecasters")
    fc_sub = p.add_subparsers(dest="forecast_command", required=True)
    pf = fc_sub.add_parser("fit")
    pf.add_argument("--kind", required=True, choices=forecast.FORECASTER_KINDS)
    pf.add_argument("--order", type=int, default=None)
    pf.add_argument("--period", type=int, default=None)
    pf.add_argument("--data", required=True)
    pf.add_argument("--out", required=True)
    pf.add_argument("--target", default="Temperature")
    pf.add_argument("--json", action="store_true")
    pf.set_defaults(handler=_cmd_forecast_fit)
    pe = fc_sub.add_parser("eval")
    pe.add_argument("--model", required=True)
    pe.add_argument("--data", required=True)
    pe.add_argument("--train-fraction", type=float, default=0.8)
    pe.add_argument("--target", default="Temperature")
    pe.add_argument("--json", action="store_true")
    pe.set_defaults(handler=_cmd_forecast_eval)

    p = sub.add_parser("serve", help="run the HTTP node")
    p.add_argument("--config", required=True)
    p.set_defaults(handler=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except WeathervaneError as exc:
        print(json.dumps({"error": exc.code, "detail": str(exc)}), file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": "io-error", "detail": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
