"""Command-line interface: dataset synthesis, evaluation, single runs, serving."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .backends import RemoteBackend, RulePolicyBackend, ScriptedBackend
from .corpus import build_default_index, default_registry
from .embedding import HashEmbedder
from .engine import RetrievalPlan, start_session
from .errors import SonopilotError
from .evaluation import (
    DEFAULT_INSTRUCTION,
    eval_execution,
    eval_retrieval,
    load_eval_pairs,
)
from .knowledge import build_index, load_handbook_entries, load_usage_records
from .robot import FaultSpec, UltrasoundRobot, state_snapshot
from .synth import SynthDatasetSpec, synth_dataset, write_dataset


def _print_table(headers: list[str], rows: list[list[str]]) -> None:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    print(line)
    print("  ".join("-" * w for w in widths))
    for row in rows:
        print("  ".join(c.ljust(w) for c, w in zip(row, widths)))


def _emit_jsonl(path: str | None, rows: list[dict]) -> None:
    if not path:
        return
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def _parse_fault(text: str) -> FaultSpec:
    """Fault syntax: kind:after:N or kind:on:Api_Name."""
    parts = text.split(":")
    if len(parts) != 3 or parts[1] not in ("after", "on"):
        raise SonopilotError(f"bad fault syntax {text!r}; use kind:after:N or kind:on:Api")
    if parts[1] == "after":
        return FaultSpec(kind=parts[0], after_invocations=int(parts[2]))
    return FaultSpec(kind=parts[0], on_api=parts[2])


def cmd_synth(args: argparse.Namespace) -> int:
    spec = SynthDatasetSpec(seed=args.seed, n_handbook=args.n_handbook, n_api=args.n_api)
    dataset = synth_dataset(spec)
    paths = write_dataset(dataset, args.out)
    for name, path in paths.items():
        print(f"wrote {name}: {path}")
    return 0


def _load_index(index_dir: str, dimension: int):
    d = Path(index_dir)
    usage = load_usage_records(d / "api_usage.jsonl") if (d / "api_usage.jsonl").exists() else []
    handbook = (
        load_handbook_entries(d / "handbook.jsonl") if (d / "handbook.jsonl").exists() else []
    )
    if not usage and not handbook:
        raise SonopilotError(f"no dataset files found under {index_dir}")
    return build_index(HashEmbedder(dimension), usage, handbook)


def cmd_eval_retrieval(args: argparse.Namespace) -> int:
    index = _load_index(args.index, args.dimension)
    pairs = load_eval_pairs(args.pairs)
    ks = [int(k) for k in args.k.split(",")]
    rows = eval_retrieval(index, pairs, ks)
    _print_table(
        ["module", "k", "recall", "pairs"],
        [[r.module, str(r.k), f"{r.recall:.4f}", str(r.pairs)] for r in rows],
    )
    _emit_jsonl(
        args.jsonl,
        [{"module": r.module, "k": r.k, "recall": r.recall, "pairs": r.pairs} for r in rows],
    )
    return 0


def _backend_factory(args: argparse.Namespace):
    if args.backend == "rule":
        policy = RulePolicyBackend()
        return lambda i: policy
    if args.backend == "scripted":
        if not args.script:
            raise SonopilotError("--script FILE is required with the scripted backend")
        return lambda i: ScriptedBackend.from_file(args.script)
    if args.backend == "remote":
        return lambda i: RemoteBackend()
    raise SonopilotError(f"unknown backend {args.backend!r}")


def cmd_eval_exec(args: argparse.Namespace) -> int:
    index = _load_index(args.index, args.dimension) if args.index else build_default_index()
    fault = _parse_fault(args.fault) if args.fault else None
    metrics = eval_execution(
        _backend_factory(args),
        index,
        ablation=args.ablation,
        replications=args.reps,
        base_seed=args.seed,
        instruction=args.instruction,
        fault=fault,
    )
    provenance = "deterministic" if args.backend in ("rule", "scripted") else "remote (non-reproducible)"
    _print_table(
        ["backend", "ablation", "first_step_pct", "overall_pct", "reps", "provenance"],
        [
            [
                args.backend,
                args.ablation,
                str(metrics.first_step_percent),
                str(metrics.overall_percent),
                str(metrics.replications),
                provenance,
            ]
        ],
    )
    _emit_jsonl(
        args.jsonl,
        [
            {
                "seed": r.seed,
                "first_step_ok": r.first_step_ok,
                "terminal": r.terminal,
                "steps": r.steps,
            }
            for r in metrics.records
        ],
    )
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    index = build_default_index()
    registry = default_registry()
    robot = UltrasoundRobot(seed=args.seed)
    session = start_session(
        args.instruction,
        index,
        registry,
        _backend_factory(args)(0),
        robot,
        retrieval=RetrievalPlan.from_ablation(args.ablation),
    )
    if args.fault:
        session.inject_fault(_parse_fault(args.fault))
    transcript = session.run_to_completion()
    if args.json:
        print(transcript.to_json())
    else:
        print(f"instruction: {transcript.instruction}")
        print(f"retrieved apis: {', '.join(transcript.retrieved_api_names) or '(none)'}")
        print(f"retrieved procedures: {', '.join(transcript.retrieved_procedure_ids) or '(none)'}")
        for step in transcript.steps:
            print(f"--- step {step.index}")
            if step.thought:
                print(f"  thought: {step.thought}")
            if step.backend_error:
                print(f"  backend error: {step.backend_error}")
            if step.action_result:
                print(f"  observation: {step.action_result.render()}")
        print(f"terminal: {transcript.terminal}")
        print(f"robot: {json.dumps(state_snapshot(robot.state))}")
    if args.events_json:
        events = _transcript_events(transcript, robot)
        Path(args.events_json).write_text(json.dumps(events, indent=2), encoding="utf-8")
        print(f"wrote events: {args.events_json}", file=sys.stderr)
    return 0 if transcript.terminal == "Completed" else 1


def _transcript_events(transcript, robot) -> list[dict]:
    """Offline rendering of the SSE event sequence for a finished session."""
    from .toolcalls import Call, validate_call

    registry = default_registry()
    replay_robot = UltrasoundRobot(seed=transcript.seed)
    faults_by_position = {}
    for n, fault in transcript.injected_faults:
        faults_by_position.setdefault(n, []).append(fault)
    events = []
    for position, step in enumerate(transcript.steps):
        for fault in faults_by_position.get(position, []):
            replay_robot.inject_fault(fault)
        if step.action_result is not None and isinstance(step.outcome, Call):
            try:
                replay_robot.invoke(validate_call(step.outcome.request, registry))
            except SonopilotError:
                pass
        events.append(
            {
                "type": "step",
                "session_id": "offline",
                "seq": step.index,
                "step": step.to_dict(),
                "robot_state": state_snapshot(replay_robot.state),
            }
        )
    events.append(
        {
            "type": "terminal",
            "session_id": "offline",
            "seq": len(transcript.steps) + 1,
            "terminal": transcript.terminal,
            "robot_state": state_snapshot(replay_robot.state),
        }
    )
    return events


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import SessionService, create_app

    app = create_app(SessionService(transcripts_dir=args.transcripts_dir))
    static_dir = Path(args.static) if args.static else None
    if static_dir and static_dir.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="console")
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sonopilot")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-api", type=int, default=622)
    p.add_argument("--n-handbook", type=int, default=522)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval-retrieval", help="recall@k over an eval-pair file")
    p.add_argument("--index", required=True, help="directory with api_usage.jsonl / handbook.jsonl")
    p.add_argument("--pairs", required=True)
    p.add_argument("--k", default="1,3,10")
    p.add_argument("--dimension", type=int, default=256)
    p.add_argument("--jsonl", help="also write rows as JSON lines")
    p.set_defaults(func=cmd_eval_retrieval)

    p = sub.add_parser("eval-exec", help="execution success rates over replications")
    p.add_argument("--backend", choices=["scripted", "rule", "remote"], default="rule")
    p.add_argument("--script", help="turn script JSON file (scripted backend)")
    p.add_argument("--ablation", choices=["none", "uar", "uar+rhr"], default="uar+rhr")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instruction", default=DEFAULT_INSTRUCTION)
    p.add_argument("--index", help="dataset directory; defaults to the built-in corpus")
    p.add_argument("--dimension", type=int, default=256)
    p.add_argument("--fault", help="kind:after:N or kind:on:Api_Name")
    p.add_argument("--jsonl", help="also write per-replication rows as JSON lines")
    p.set_defaults(func=cmd_eval_exec)

    p = sub.add_parser("run", help="run one session and print the transcript")
    p.add_argument("--instruction", required=True)
    p.add_argument("--backend", choices=["scripted", "rule", "remote"], default="rule")
    p.add_argument("--script")
    p.add_argument("--ablation", choices=["none", "uar", "uar+rhr"], default="uar+rhr")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fault")
    p.add_argument("--json", action="store_true", help="print the transcript as JSON")
    p.add_argument("--events-json", help="also write the SSE-shaped event list to a file")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve", help="start the session service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8077)
    p.add_argument("--transcripts-dir")
    p.add_argument("--static", help="directory of console assets to serve at /")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SonopilotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
