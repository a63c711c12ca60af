"""loopbench command line.

    loopbench run --scenario s1 --ticks 600 --seed 42 --out runs/s1
    loopbench validate intents.txt
    loopbench serve --port 8099 --scenario s1
    loopbench report --run runs/s1
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ENV_DATA_DIR, ENV_PORT, LoopConfig, env_default
from .loop import ClosedLoop
from .model import ValidationFailure, validate_policy_ir
from .realization import ParseFailure, grammar_translate
from .scenarios import ScenarioError, builtin_names, load_scenario


def _onoff(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loopbench", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="headless closed-loop run")
    run.add_argument("--scenario", required=True, help=f"builtin ({', '.join(builtin_names())}) or a file path")
    run.add_argument("--ticks", type=int, default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", type=Path, default=None)
    run.add_argument("--remediation", type=_onoff, default=True, metavar="on|off")
    run.add_argument("--auto-approve", type=_onoff, default=True, metavar="on|off")
    run.add_argument("--noise", type=_onoff, default=True, metavar="on|off")

    validate = sub.add_parser("validate", help="realize intents from a file, no activation")
    validate.add_argument("intent_file", type=Path)

    serve = sub.add_parser("serve", help="HTTP gateway with live event stream")
    serve.add_argument("--port", type=int, default=int(env_default(ENV_PORT, "8099")))
    serve.add_argument("--scenario", default="s1")
    serve.add_argument("--seed", type=int, default=None)
    serve.add_argument("--data-dir", type=Path, default=env_default(ENV_DATA_DIR))
    serve.add_argument("--manual-ticks", action="store_true", help="disable the auto tick loop")
    serve.add_argument("--tick-interval", type=float, default=0.2)

    report = sub.add_parser("report", help="render figures and summary.csv from a run directory")
    report.add_argument("--run", type=Path, required=True)
    report.add_argument("--out", type=Path, default=None)
    return parser


def cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"{args.scenario}: {exc}", file=sys.stderr)
        return 2
    seed = args.seed if args.seed is not None else scenario.default_seed
    ticks = args.ticks if args.ticks is not None else scenario.default_ticks
    if ticks < 0:
        print("--ticks must be >= 0", file=sys.stderr)
        return 2
    out = args.out or Path(f"loopbench-out/{scenario.name}-seed{seed}")
    out.mkdir(parents=True, exist_ok=True)
    config = LoopConfig().with_remediation(args.remediation, args.auto_approve)
    loop = ClosedLoop(scenario=scenario, seed=seed, config=config, data_dir=out, noise=args.noise)
    try:
        loop.run(ticks)
        loop.write_outputs(out)
    finally:
        loop.close()
    counts: dict[str, int] = {}
    for record in loop.log.records():
        counts[record.kind.value] = counts.get(record.kind.value, 0) + 1
    print(f"scenario={scenario.name} seed={seed} ticks={ticks} events={loop.log.head_seq}")
    for kind in sorted(counts):
        print(f"  {kind}: {counts[kind]}")
    print(f"outputs: {out}/events.jsonl, {out}/kpi.csv")
    return 0


def cmd_validate(args) -> int:
    if not args.intent_file.exists():
        print(f"{args.intent_file}: no such file", file=sys.stderr)
        return 2
    failures = 0
    for lineno, line in enumerate(args.intent_file.read_text(encoding="utf-8").splitlines(), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        try:
            document = grammar_translate(text)
        except ParseFailure as exc:
            print(json.dumps({"line": lineno, "ok": False, "parse_failure": exc.to_doc()}))
            failures += 1
            continue
        result = validate_policy_ir(document)
        if isinstance(result, ValidationFailure):
            print(json.dumps({"line": lineno, "ok": False, "validation": result.to_doc()}))
            failures += 1
        else:
            print(json.dumps({"line": lineno, "ok": True, "policy": result.to_doc()}))
    return 1 if failures else 0


def cmd_serve(args) -> int:
    from .gateway import GatewayServer  # imported lazily; serving is optional

    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"{args.scenario}: {exc}", file=sys.stderr)
        return 2
    seed = args.seed if args.seed is not None else scenario.default_seed
    data_dir = Path(args.data_dir) if args.data_dir else None
    loop = ClosedLoop(scenario=scenario, seed=seed, data_dir=data_dir)
    server = GatewayServer(
        loop,
        port=args.port,
        auto_tick_interval=None if args.manual_ticks else args.tick_interval,
    )
    server.start()
    print(f"loopbench gateway on http://127.0.0.1:{server.port} (scenario {scenario.name})")
    try:
        import time

        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
    return 0


def cmd_report(args) -> int:
    from .report import render_report

    run_dir = args.run
    if not (run_dir / "events.jsonl").exists():
        print(f"{run_dir}: no events.jsonl (not a run directory)", file=sys.stderr)
        return 2
    out = render_report(run_dir, args.out)
    print(f"report written to {out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "validate":
        return cmd_validate(args)
    if args.command == "serve":
        return cmd_serve(args)
    if args.command == "report":
        return cmd_report(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
