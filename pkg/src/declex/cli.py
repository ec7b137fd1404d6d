"""Command-line front end: train/ingest trees, run session scripts,
interactive sessions, and a small evaluation harness.

Exit codes: 0 success (including "No answer."), 2 usage, 3 input parse
errors, 4 engine errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from typing import Optional, Sequence, TextIO

from .algebra import AlgebraError
from .constraints import format_rat, rat
from .milp import SearchBudgetExceeded
from .model import (FeatureSchema, ModelError, learn_tree, load_tree,
                    read_data, save_tree, training_accuracy)
from .parser import ParseError
from .session import (AnswerBundle, Session, SessionError, structured_record,
                      transcript_lines)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_ENGINE = 4


class ScriptError(Exception):
    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


def _parse_kwargs(parts: Sequence[str], lineno: int) -> dict[str, str]:
    out: dict[str, str] = {}
    for part in parts:
        key, sep, value = part.partition("=")
        if not sep:
            raise ScriptError(lineno, f"expected key=value, got {part!r}")
        out[key] = value
    return out


class ScriptRunner:
    """Executes line-oriented session commands and renders the transcript.

    The same runner backs the CLI and the snapshot/restore path of the HTTP
    service, so both surfaces emit identical structured records.
    """

    def __init__(self, session: Optional[Session] = None,
                 fmt: str = "text", out: Optional[TextIO] = None):
        self.session = session
        self.fmt = fmt
        self.out = out or sys.stdout
        self.lines_out: list[str] = []

    def _emit(self, text: str) -> None:
        self.lines_out.append(text)
        print(text, file=self.out)

    def _emit_bundle(self, bundle: AnswerBundle) -> None:
        if self.fmt == "structured":
            record = structured_record(bundle)
            self._emit(json.dumps(record, separators=(",", ":")))
        else:
            for line in transcript_lines(bundle):
                self._emit(line)

    def run_line(self, line: str, lineno: int = 0) -> None:
        line = line.strip()
        if not line or line.startswith("#"):
            return
        cmd, _, rest = line.partition(" ")
        rest = rest.strip()
        try:
            handler = getattr(self, f"_cmd_{cmd}", None)
            if handler is None:
                raise ScriptError(lineno, f"unknown command {cmd!r}")
            handler(rest, lineno)
        except ScriptError:
            raise
        except (ParseError, SessionError, ModelError) as exc:
            raise ScriptError(lineno, str(exc)) from exc

    def run(self, text: str) -> None:
        for lineno, line in enumerate(text.splitlines(), start=1):
            self.run_line(line, lineno)

    # -- commands --
    def _need_session(self, lineno: int) -> Session:
        if self.session is None:
            raise ScriptError(lineno, "load a schema before this command")
        return self.session

    def _cmd_schema(self, rest: str, lineno: int) -> None:
        if not rest:
            raise ScriptError(lineno, "schema needs a file path")
        self.session = Session(FeatureSchema.load(rest))

    def _cmd_model(self, rest: str, lineno: int) -> None:
        parts = rest.split()
        if not parts:
            raise ScriptError(lineno, "model needs a file path")
        tree_id = None
        if len(parts) == 3 and parts[1] == "as":
            tree_id = parts[2]
        elif len(parts) != 1:
            raise ScriptError(lineno, "usage: model PATH [as ID]")
        self._need_session(lineno).add_model(load_tree(parts[0]), tree_id)

    def _cmd_instance(self, rest: str, lineno: int) -> None:
        parts = rest.split()
        if not parts:
            raise ScriptError(lineno, "instance needs a name")
        name = parts[0]
        kwargs = _parse_kwargs(parts[1:], lineno)
        if "label" not in kwargs:
            raise ScriptError(lineno, "instance needs label=...")
        features = None
        if "features" in kwargs:
            features = [v for v in kwargs["features"].split(",") if v != ""]
        self._need_session(lineno).declare_instance(
            name, kwargs["label"], tree_id=kwargs.get("tree"),
            minconf=Fraction(kwargs.get("minconf", "0")), features=features)

    def _cmd_constraint(self, rest: str, lineno: int) -> None:
        if not rest:
            raise ScriptError(lineno, "constraint needs text")
        self._need_session(lineno).constraint(rest)

    def _cmd_retract(self, rest: str, lineno: int) -> None:
        if rest == "last":
            self._need_session(lineno).retract(last=True)
        elif rest:
            self._need_session(lineno).retract(rest)
        else:
            raise ScriptError(lineno, "usage: retract last | retract TEXT")

    def _cmd_solveopt(self, rest: str, lineno: int) -> None:
        kwargs = _parse_kwargs(rest.split(), lineno)
        project = None
        if "project" in kwargs:
            project = [p for p in kwargs["project"].split(",") if p]
        bundle = self._need_session(lineno).solveopt(
            minimize=kwargs.get("minimize"),
            project=project,
            eps=kwargs.get("eps"),
            global_opt=kwargs.get("global", "").lower() in ("1", "true", "on"))
        self._emit_bundle(bundle)

    def _cmd_reset(self, rest: str, lineno: int) -> None:
        kwargs = _parse_kwargs(rest.split(), lineno)
        keep = kwargs.get("keep_model", "true").lower() not in ("0", "false", "off")
        self._need_session(lineno).reset(keep_model=keep)


# --- subcommands ----------------------------------------------------------------

def cmd_train(args) -> int:
    schema = FeatureSchema.load(args.schema)
    data = read_data(args.data, schema)
    tree = learn_tree(data, schema, args.depth, tree_id=args.tree_id)
    save_tree(tree, args.out)
    acc = training_accuracy(tree, data)
    print(f"wrote {args.out}; training accuracy {format_rat(acc)} "
          f"({float(acc):.4f})")
    return EXIT_OK


def cmd_session(args) -> int:
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        runner = ScriptRunner(fmt=args.format, out=out)
        if args.schema:
            runner.session = Session(FeatureSchema.load(args.schema))
        for path in args.model or []:
            if runner.session is None:
                raise ScriptError(0, "--schema is required before --model")
            runner.session.add_model(load_tree(path))
        if args.eps is not None and runner.session is not None:
            runner.session.eps = rat(args.eps)
        if args.script:
            with open(args.script) as fh:
                runner.run(fh.read())
        else:
            for lineno, line in enumerate(sys.stdin, start=1):
                runner.run_line(line, lineno)
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def cmd_eval(args) -> int:
    schema = FeatureSchema.load(args.schema)
    data = read_data(args.data, schema)
    if args.model:
        trees = [load_tree(p) for p in args.model]
    elif args.depth is not None:
        trees = [learn_tree(data, schema, args.depth)]
    else:
        raise ScriptError(0, "eval needs --model or --depth")
    labels = sorted({label for _, label in data})
    rows = data[:args.limit] if args.limit else data
    report = evaluate_instances(schema, trees[0], rows, labels,
                                minconf_f=rat(args.minconf_f),
                                minconf_ce=rat(args.minconf_ce),
                                norm=args.norm, eps=rat(args.eps))
    if args.format == "structured":
        print(json.dumps(report, separators=(",", ":")))
    else:
        print(f"N {report['N']}  S/N {report['S_over_N']:.3f}")
        for key in ("l_F", "l_C", "N_C", "N_CE", "d_CE"):
            print(f"{key} {report[key]}")
        print(f"dim_CE point={report['dim_point']} "
              f"higher-dimensional={report['dim_higher']}")
    return EXIT_OK


def evaluate_instances(schema, tree, rows, labels, minconf_f, minconf_ce,
                       norm, eps) -> dict:
    """Per-instance loop: factual solve for rule stats, minimized solve for
    contrastive-example stats, averaged over the supplied rows."""
    n = len(rows)
    successes = 0
    sums = {"l_F": Fraction(0), "l_C": Fraction(0), "N_C": 0, "N_CE": 0,
            "d_CE": Fraction(0)}
    counts = {"l_F": 0, "l_C": 0, "d_CE": 0}
    dim_point = dim_higher = 0
    for feats, label in rows:
        contrast = next((l for l in labels if l != label), None)
        if contrast is None:
            continue
        session = Session(schema)
        session.add_model(tree)
        session.declare_instance("F", label, minconf=minconf_f, features=feats)
        session.declare_instance("CE", contrast, minconf=minconf_ce)
        plain = session.solveopt()
        if plain.no_answer:
            continue
        successes += 1
        stats = session.metrics(plain)
        if stats["l_F"] is not None:
            sums["l_F"] += stats["l_F"]
            counts["l_F"] += 1
        if stats["l_C"] is not None:
            sums["l_C"] += stats["l_C"]
            counts["l_C"] += 1
        sums["N_C"] += stats["N_C"]
        minimized = session.solveopt(minimize=f"{'l1norm' if norm == 'l1' else 'linfnorm'}(F,CE)",
                                     project=["CE"], eps=eps)
        mstats = session.metrics(minimized)
        sums["N_CE"] += mstats["N_CE"]
        for d in mstats["d_CE"]:
            sums["d_CE"] += d
            counts["d_CE"] += 1
        for dim in mstats["dim_CE"]:
            if dim == "point":
                dim_point += 1
            else:
                dim_higher += 1
    return {
        "N": n,
        "S": successes,
        "S_over_N": (successes / n) if n else 0.0,
        "l_F": _ratio(sums["l_F"], counts["l_F"]),
        "l_C": _ratio(sums["l_C"], counts["l_C"]),
        "N_C": _ratio(Fraction(sums["N_C"]), successes),
        "N_CE": _ratio(Fraction(sums["N_CE"]), successes),
        "d_CE": _ratio(sums["d_CE"], counts["d_CE"]),
        "dim_point": dim_point,
        "dim_higher": dim_higher,
    }


def _ratio(total: Fraction, count: int) -> Optional[float]:
    return float(total / count) if count else None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="declex",
        description="Declarative factual/contrastive explanations for decision trees")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="learn a tree and write its JSON")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--schema", required=True)
    p_train.add_argument("--depth", type=int, required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--tree-id", default="DT")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.set_defaults(func=cmd_train)

    p_sess = sub.add_parser("session", help="run a session script or stdin")
    p_sess.add_argument("--script")
    p_sess.add_argument("--model", action="append")
    p_sess.add_argument("--schema")
    p_sess.add_argument("--eps")
    p_sess.add_argument("--seed", type=int, default=0)
    p_sess.add_argument("--format", choices=("text", "structured"), default="text")
    p_sess.add_argument("--out")
    p_sess.set_defaults(func=cmd_session)

    p_eval = sub.add_parser("eval", help="metrics over labeled data")
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--schema", required=True)
    p_eval.add_argument("--model", action="append")
    p_eval.add_argument("--depth", type=int)
    p_eval.add_argument("--minconf-f", default="0")
    p_eval.add_argument("--minconf-ce", default="0")
    p_eval.add_argument("--norm", choices=("l1", "linf"), default="l1")
    p_eval.add_argument("--eps", default="0")
    p_eval.add_argument("--limit", type=int)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--format", choices=("text", "structured"), default="text")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScriptError, ParseError, ModelError, json.JSONDecodeError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SessionError, AlgebraError, SearchBudgetExceeded) as exc:
        print(f"engine error: {exc}", file=sys.stderr)
        return EXIT_ENGINE


if __name__ == "__main__":
    sys.exit(main())
