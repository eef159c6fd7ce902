"""``mdsrob`` command line: encode/decode frames, check codebooks, run scenarios."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

from . import codec
from .ciphers import KeyringError, load_keyring

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TOO_LONG = 3
EXIT_CODEBOOK = 4
EXIT_KEY = 5
EXIT_NOT_A_FRAME = 6
EXIT_MALFORMED = 7
EXIT_SCENARIO = 8


class CliError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


def _err(msg: str) -> None:
    print(f"mdsrob: {msg}", file=sys.stderr)


def _read_stdin() -> str:
    data = sys.stdin.buffer.read()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CliError(EXIT_USAGE, f"standard input is not UTF-8: {exc}") from exc


def _write_stdout(text: str) -> None:
    sys.stdout.buffer.write(text.encode("utf-8"))
    sys.stdout.buffer.flush()


def _codebook(arg: Optional[str]) -> codec.Codebook:
    if arg is None:
        return codec.default_codebook()
    if arg == "none":
        return codec.EMPTY_CODEBOOK
    try:
        return codec.load_codebook(Path(arg).read_text("utf-8"))
    except OSError as exc:
        raise CliError(EXIT_CODEBOOK, f"cannot read codebook {arg}: {exc}") from exc
    except codec.CodebookConflict as exc:
        raise CliError(EXIT_CODEBOOK, f"{arg}: {exc}") from exc


def _keyring(path: Optional[str]):
    if path is None:
        return {}
    try:
        return load_keyring(path)
    except KeyringError as exc:
        raise CliError(EXIT_KEY, str(exc)) from exc


def cmd_encode(args) -> int:
    body = _read_stdin()
    if not args.keep_trailing_newline and body.endswith("\n"):
        body = body[:-1]
    if not args.id:
        raise CliError(EXIT_USAGE, "--id must be non-empty")
    cb = _codebook(args.codebook)
    cipher = None
    if args.type == codec.ENCRYPTED:
        if not args.key:
            raise CliError(EXIT_KEY, "type 1 needs --key (and --keyring)")
        keys = _keyring(args.keyring)
        if args.key not in keys:
            raise CliError(EXIT_KEY, f"key {args.key!r} not in keyring")
        cipher = keys[args.key]
    elif args.key:
        raise CliError(EXIT_USAGE, "--key only applies to --type 1")
    try:
        frame = codec.encode_frame(codec.PlainMessage(args.id, body), args.type, cb, cipher)
    except codec.FrameTooLong as exc:
        raise CliError(EXIT_TOO_LONG, f"frame too long by {exc.overflow} characters ({exc.length} > {exc.limit})") from exc
    _write_stdout(frame + "\n")
    return EXIT_OK


def cmd_decode(args) -> int:
    name = _read_stdin().rstrip("\r\n")
    cb = _codebook(args.codebook)
    ciphers = list(_keyring(args.keyring).values())
    try:
        msg = codec.decode_frame(name, cb, ciphers)
    except codec.UndecryptablePayload as exc:
        raise CliError(EXIT_KEY, str(exc)) from exc
    except codec.MalformedFrame as exc:
        raise CliError(EXIT_MALFORMED, f"malformed frame: {exc}") from exc

    if msg is codec.NotAFrame:
        legacy = codec.decode_legacy(name)
        if legacy is codec.NotAFrame:
            raise CliError(EXIT_NOT_A_FRAME, "not a frame")
        msg_id, body, is_legacy = None, legacy, True
    else:
        msg_id, body, is_legacy = msg.id, msg.body, False

    if args.json:
        out = {"id": msg_id, "body": body}
        if is_legacy:
            out["legacy"] = True
        _write_stdout(json.dumps(out, ensure_ascii=False) + "\n")
    else:
        _write_stdout(f"{msg_id or ''}\n{body}\n")
    return EXIT_OK


def cmd_codebook_check(args) -> int:
    cb = _codebook(args.path)
    print(f"ok: {len(cb)} entries")
    return EXIT_OK


def cmd_simulate(args) -> int:
    # networkx and pydantic are slow to import; encode/decode never need them
    from . import sim
    from .scenario import InvalidScenario, load_scenario

    try:
        scenario = load_scenario(args.scenario)
    except InvalidScenario as exc:
        raise CliError(EXIT_SCENARIO, f"invalid scenario: {exc}") from exc
    result = sim.run(scenario)
    sim.write_outputs(result, args.out)
    print(sim.summary_line(result.report))
    return EXIT_OK


def cmd_report(args) -> int:
    from . import sim

    path = Path(args.run)
    if path.is_dir():
        path = path / "report.json"
    try:
        report = json.loads(path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_USAGE, f"cannot read report {path}: {exc}") from exc
    if args.csv:
        _write_stdout(sim.delivery_csv(report))
        return EXIT_OK
    print(sim.summary_line(report))
    n = len(report["nodes"])
    for m in report["messages"]:
        row = report["delivery"][m["id"]]
        got = [t for t in row.values() if t is not None]
        last = max(got) if got else None
        print(f"{m['id']:<12} origin={m['origin']:<8} reached={len(got)}/{n} "
              f"complete_at={'-' if len(got) < n else last}")
    for k, v in sorted(report["counters"].items()):
        print(f"  {k}={v}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdsrob", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log protocol warnings to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("encode", help="encode standard input as a device-name frame")
    e.add_argument("--id", required=True, help="message id")
    e.add_argument("--type", choices=sorted(codec.TYPE_TABLE), default=codec.PLAIN)
    e.add_argument("--codebook", help="codebook file, or 'none' (default: shipped table)")
    e.add_argument("--keyring", help="keyring file (name<TAB>secret lines)")
    e.add_argument("--key", help="keyring entry to encrypt with (type 1)")
    e.add_argument("--keep-trailing-newline", action="store_true")
    e.set_defaults(func=cmd_encode)

    d = sub.add_parser("decode", help="decode a device name read from standard input")
    d.add_argument("--codebook", help="codebook file, or 'none' (default: shipped table)")
    d.add_argument("--keyring", help="keyring file; every key is tried")
    d.add_argument("--json", action="store_true", help="print {id, body} as JSON")
    d.set_defaults(func=cmd_decode)

    c = sub.add_parser("codebook-check", help="validate a codebook file")
    c.add_argument("path")
    c.set_defaults(func=cmd_codebook_check)

    s = sub.add_parser("simulate", help="run a scenario and write logs and a report")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="summarise a simulation run")
    r.add_argument("--run", required=True, help="output directory or report.json")
    r.add_argument("--csv", action="store_true", help="print the delivery matrix as CSV")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        _err(str(exc))
        return exc.status


if __name__ == "__main__":
    sys.exit(main())
