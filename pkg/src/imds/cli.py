"""``imds`` command-line front end.

Exit codes: 0 ok, 1 model or limit error, 2 I/O error, 3 policy failure
(``--fail-on-deadlock`` with a deadlock verdict that holds).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from typing import Optional

from . import __version__
from .ctl import evaluate, parse_formula
from .detectors import COMMUNICATION, RESOURCE, TOTAL, check_all
from .errors import ImdsError, LimitExceeded, ParseError, SpecError
from .exporters import DOT_MAX_STATES, report_json, report_text, to_dot, to_promela
from .lts import DEFAULT_MAX_STATES, DEFAULT_MAX_TRANSITIONS, Limits, build_lts, terminal_states
from .model import validate_spec
from .notation import load, parse, render

EXIT_OK, EXIT_MODEL, EXIT_IO, EXIT_POLICY = 0, 1, 2, 3


class _IoError(Exception):
    pass


@dataclass
class RunConfig:
    path: str
    command: str
    limits: Limits
    json: bool = False
    out: Optional[str] = None
    formula: Optional[str] = None


def _read(path: str) -> str:
    try:
        if path == "-":
            return sys.stdin.read()
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        raise _IoError(f"cannot read {path}: {e.strerror or e}") from e


def _write(text: str, out: Optional[str]) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as e:
        raise _IoError(f"cannot write {out}: {e.strerror or e}") from e


def _positive(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return n


def _load(cfg: RunConfig):
    text = _read(cfg.path)
    for w in parse(text).warnings:
        print(f"warning: {w}", file=sys.stderr)
    return load(text)


def _build(cfg: RunConfig, spec):
    return build_lts(spec, cfg.limits)


def cmd_validate(cfg: RunConfig) -> int:
    spec = _load(cfg)
    rep = validate_spec(spec)
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    for e in rep.errors:
        print(f"error: {e}", file=sys.stderr)
    if not rep.ok:
        return EXIT_MODEL
    print(f"ok: {len(spec.servers)} servers, {len(spec.agents)} agents, "
          f"{len(spec.actions)} actions", file=sys.stderr)
    return EXIT_OK


def cmd_lts(cfg: RunConfig) -> int:
    lts = _build(cfg, _load(cfg))
    term = terminal_states(lts)
    data = dict(lts.stats.as_dict(), clean_terminal=sorted(term.clean),
                stuck_terminal=sorted(term.stuck))
    if cfg.json:
        _write(json.dumps(data, sort_keys=True, indent=2) + "\n", cfg.out)
    else:
        _write(f"states: {data['state_count']}\ntransitions: {data['transition_count']}\n"
               f"clean terminal states: {len(term.clean)}\n"
               f"stuck terminal states: {len(term.stuck)}\n", cfg.out)
    return EXIT_OK


def cmd_check(cfg: RunConfig, fail_on_deadlock: bool = False) -> int:
    formula = parse_formula(cfg.formula) if cfg.formula is not None else None
    spec = _load(cfg)
    lts = _build(cfg, spec)
    if formula is not None:
        sat = evaluate(lts, formula)
        holds = bool(sat[0])
        if cfg.json:
            data = {"formula": str(formula), "holds": holds, "satisfying_states": int(sat.sum()),
                    "state_count": lts.n_states}
            _write(json.dumps(data, sort_keys=True, indent=2) + "\n", cfg.out)
        else:
            _write(f"{formula}: {'TRUE' if holds else 'FALSE'} "
                   f"(holds in {int(sat.sum())} of {lts.n_states} states)\n", cfg.out)
        return EXIT_OK
    report = check_all(lts, spec)
    _write(report_json(report) if cfg.json else report_text(report), cfg.out)
    if fail_on_deadlock and any(v.holds for v in report.verdicts
                                if v.kind in (RESOURCE, COMMUNICATION, TOTAL)):
        return EXIT_POLICY
    return EXIT_OK


def cmd_export(cfg: RunConfig, what: str, render_limit: int = DOT_MAX_STATES,
               label_mode: str = "index") -> int:
    spec = _load(cfg)
    if what == "promela":
        _write(to_promela(spec), cfg.out)
        return EXIT_OK
    lts = _build(cfg, spec)
    if what == "lts-dot":
        _write(to_dot(lts, render_limit, label_mode), cfg.out)
    else:
        _write(report_json(check_all(lts, spec)), cfg.out)
    return EXIT_OK


def cmd_views(cfg: RunConfig, view: str) -> int:
    _write(render(_load(cfg), view), cfg.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="imds", description="Explicit-state deadlock and "
                                "termination checker for IMDS models.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, help, *first):
        c = sub.add_parser(name, help=help)
        for args, kw in first:
            c.add_argument(*args, **kw)
        c.add_argument("path", help="model file in IMDS notation ('-' for stdin)")
        c.add_argument("--out", "-o", help="output file (default: stdout)")
        c.add_argument("--max-states", type=_positive, default=DEFAULT_MAX_STATES)
        c.add_argument("--max-transitions", type=_positive, default=DEFAULT_MAX_TRANSITIONS)
        c.add_argument("--json", action="store_true", help="machine-readable output")
        return c

    command("validate", "parse and validate a model")
    command("lts", "build the LTS and print its statistics")
    c = command("check", "run the deadlock and termination checks")
    c.add_argument("--formula", help="evaluate one CTL formula instead of the standard checks")
    c.add_argument("--fail-on-deadlock", action="store_true",
                   help="exit 3 when any deadlock verdict holds")
    e = command("export", "export the LTS, Promela or a report",
                (("what",), {"choices": ["lts-dot", "promela", "report-json"]}))
    e.add_argument("--render-limit", type=_positive, default=DOT_MAX_STATES,
                   help="largest LTS rendered as DOT")
    e.add_argument("--labels", choices=["index", "config"], default="index")
    v = command("views", "render the model in a given view")
    v.add_argument("--view", choices=["server", "agent"], required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(args.path, args.command, Limits(args.max_states, args.max_transitions),
                    args.json, args.out, getattr(args, "formula", None))
    try:
        if args.command == "validate":
            return cmd_validate(cfg)
        if args.command == "lts":
            return cmd_lts(cfg)
        if args.command == "check":
            return cmd_check(cfg, args.fail_on_deadlock)
        if args.command == "export":
            return cmd_export(cfg, args.what, args.render_limit, args.labels)
        return cmd_views(cfg, args.view)
    except _IoError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except SpecError as e:
        print(f"error: {e}", file=sys.stderr)
        for msg in e.errors:
            print(f"  {msg}", file=sys.stderr)
        return EXIT_MODEL
    except (LimitExceeded, ParseError, ImdsError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
