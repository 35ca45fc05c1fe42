"""Command-line entry point: a thin client over the HTTP service.

Commands post pydantic-validated requests to the FastAPI app, in-process by
default or against a remote server with --server. Exit codes follow sysexits
(64 usage, 65 data, 66 no-input) plus the pipeline's 0/2/3/4.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from typing import Dict, Optional, Tuple

import httpx

from .config import CliConfig, ConfigError
from .service.app import create_app

EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_NOINPUT = 66


class _Parser(argparse.ArgumentParser):
    """argparse that exits 64 on usage errors instead of 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> _Parser:
    parser = _Parser(prog="autorefactor",
                     description="Retrieval-augmented agentic method refactoring.")
    parser.add_argument("--config", default="",
                        help="path to a JSON config file")
    parser.add_argument("--server", default="",
                        help="base URL of a running service (default: in-process)")
    sub = parser.add_subparsers(dest="command", metavar="command",
                                parser_class=_Parser)

    p_index = sub.add_parser("index", help="build the retrieval store from records")
    p_index.add_argument("--records", required=True,
                         help="JSON Lines file of before/after refactoring records")
    p_index.add_argument("--store-dir", required=True,
                         help="directory to write the store into")
    p_index.add_argument("--description-field", default="",
                         help="reuse this record field as the description "
                              "instead of calling the backend")
    p_index.add_argument("--strict", action="store_true",
                         help="exit nonzero if any record is rejected")
    p_index.add_argument("--script", default="",
                         help="JSON file of scripted backend responses")

    p_ref = sub.add_parser("refactor", help="run the refactoring pipeline")
    p_ref.add_argument("--repo", required=True, help="path to a green repository")
    p_ref.add_argument("--class", dest="class_name", required=True,
                       help="simple or qualified class name of the target")
    p_ref.add_argument("--method", required=True, help="target method name")
    p_ref.add_argument("--arity", required=True, type=int,
                       help="target method parameter count")
    p_ref.add_argument("--type", required=True,
                       help="refactoring type, e.g. extract-method")
    p_ref.add_argument("--out-report", required=True,
                       help="report directory to create (must not exist)")
    p_ref.add_argument("--script", default="",
                       help="JSON file of scripted backend responses")
    p_ref.add_argument("--store-dir", default="",
                       help="retrieval store directory (overrides config)")

    p_det = sub.add_parser("detect", help="detect refactorings between two trees")
    p_det.add_argument("--before", required=True, help="before source directory")
    p_det.add_argument("--after", required=True, help="after source directory")
    p_det.add_argument("--expect", default="",
                       help="verify this refactoring type is present")

    p_eval = sub.add_parser("eval", help="score a candidate against a reference")
    p_eval.add_argument("--before", required=True, help="before source directory")
    p_eval.add_argument("--candidate", required=True,
                        help="tool output source directory")
    p_eval.add_argument("--reference", required=True,
                        help="developer reference source directory")

    p_rep = sub.add_parser("replay", help="re-run a recorded session")
    p_rep.add_argument("--report", required=True, help="report directory to replay")

    p_srv = sub.add_parser("serve", help="run the HTTP service")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8000)

    return parser


def _load_config(path: str) -> CliConfig:
    if not path:
        return CliConfig()
    return CliConfig.load(path)


async def _post_in_process(cfg: CliConfig, path: str,
                           payload: Dict[str, object]) -> Tuple[int, dict]:
    transport = httpx.ASGITransport(app=create_app(cfg))
    async with httpx.AsyncClient(transport=transport, base_url="http://service",
                                 timeout=None) as client:
        resp = await client.post(path, json=payload)
        return resp.status_code, resp.json()


async def _post_remote(server: str, path: str,
                       payload: Dict[str, object]) -> Tuple[int, dict]:
    async with httpx.AsyncClient(base_url=server, timeout=None) as client:
        resp = await client.post(path, json=payload)
        return resp.status_code, resp.json()


def _post(cfg: CliConfig, server: str, path: str,
          payload: Dict[str, object]) -> Tuple[int, dict]:
    if server:
        return asyncio.run(_post_remote(server, path, payload))
    return asyncio.run(_post_in_process(cfg, path, payload))


def _finish(status: int, data: dict) -> int:
    """Turn an HTTP response into an exit code, printing errors to stderr."""
    if status == 400:
        print(f"error: {data.get('error', 'request failed')}", file=sys.stderr)
        return int(data.get("exit_code", EXIT_USAGE))
    if status == 422:
        print(f"error: invalid request: {json.dumps(data.get('detail'))}",
              file=sys.stderr)
        return EXIT_USAGE
    if status != 200:
        print(f"error: service returned HTTP {status}", file=sys.stderr)
        return 1
    return int(data.get("exit_code", 0))


def _run_index(cfg: CliConfig, server: str, args: argparse.Namespace) -> int:
    status, data = _post(cfg, server, "/index", {
        "records_path": args.records,
        "store_dir": args.store_dir,
        "description_field": args.description_field,
        "strict": args.strict,
        "script_path": args.script,
    })
    code = _finish(status, data)
    if status == 200:
        print(f"admitted {data['admitted']}, rejected {data['rejected']}")
        for reason in data["rejected_reasons"]:
            print(f"  rejected: {reason}", file=sys.stderr)
    return code


def _run_refactor(cfg: CliConfig, server: str, args: argparse.Namespace) -> int:
    status, data = _post(cfg, server, "/refactor", {
        "repo": args.repo,
        "class_name": args.class_name,
        "method": args.method,
        "arity": args.arity,
        "type": args.type,
        "out_report": args.out_report,
        "script_path": args.script,
        "store_dir": args.store_dir,
    })
    code = _finish(status, data)
    if status == 200:
        print(f"status: {data['status']}")
        print(f"report: {data['report_dir']}")
        print(f"review rounds: {data['rounds']}, "
              f"repair episodes: {data['episode_count']}")
    return code


def _run_detect(cfg: CliConfig, server: str, args: argparse.Namespace) -> int:
    status, data = _post(cfg, server, "/detect", {
        "before_dir": args.before,
        "after_dir": args.after,
        "expect": args.expect,
    })
    code = _finish(status, data)
    if status == 200:
        print(json.dumps(data["instances"], indent=2, sort_keys=True))
        if data.get("report"):
            print(data["report"])
    return code


def _run_eval(cfg: CliConfig, server: str, args: argparse.Namespace) -> int:
    status, data = _post(cfg, server, "/eval", {
        "before_dir": args.before,
        "candidate_dir": args.candidate,
        "reference_dir": args.reference,
    })
    code = _finish(status, data)
    if status == 200:
        print(json.dumps({"code_bleu": data["code_bleu"], "ast": data["ast"]},
                         indent=2, sort_keys=True))
    return code


def _run_replay(cfg: CliConfig, server: str, args: argparse.Namespace) -> int:
    status, data = _post(cfg, server, "/replay", {"report_dir": args.report})
    code = _finish(status, data)
    if status == 200:
        print(data["detail"])
    return code


def _run_serve(cfg: CliConfig, args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run(create_app(cfg), host=args.host, port=args.port)
    return 0


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_NOINPUT

    if args.command == "index":
        return _run_index(cfg, args.server, args)
    if args.command == "refactor":
        return _run_refactor(cfg, args.server, args)
    if args.command == "detect":
        return _run_detect(cfg, args.server, args)
    if args.command == "eval":
        return _run_eval(cfg, args.server, args)
    if args.command == "replay":
        return _run_replay(cfg, args.server, args)
    if args.command == "serve":
        return _run_serve(cfg, args)
    parser.error(f"unknown command: {args.command}")
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
