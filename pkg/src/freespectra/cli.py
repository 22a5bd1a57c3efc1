"""Command-line driver.

Thin client over the HTTP service: requests go through an in-process ASGI
transport by default, or to a remote server with --server.  Artifacts
(CSV files plus manifest.json) are written into --out.

Exit codes: 0 success, 2 usage error (bad preset/model/flags), 3 numerical
validation failure (e.g. negative density beyond tolerance).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Tuple

import httpx

_ARTIFACT_COMMANDS = ("density", "spectrum", "mc", "transforms", "examples")


def _parse_range(text: str) -> Tuple[float, float, int]:
    """Parse a:b:n into (min, max, steps)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("range must look like min:max:steps")
    try:
        return float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freespectra",
        description="Spectra and Brown measures of free non-normal operators",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        group = p.add_mutually_exclusive_group()
        group.add_argument("--preset", help="named preset (see `freespectra density --help`)")
        group.add_argument("--model", help="path to a model/ensemble JSON file")
        p.add_argument("--grid", type=int, help="grid steps per axis (default 400)")
        p.add_argument("--re", type=_parse_range, metavar="a:b:n", help="real window override")
        p.add_argument("--im", type=_parse_range, metavar="a:b:n", help="imag window override")
        p.add_argument("--t", type=float, help="circular-flow variance t")
        p.add_argument("--alpha", type=float, help="elliptic/cross weight alpha")
        p.add_argument("--beta", type=float, help="elliptic/cross weight beta")
        p.add_argument("--q", type=float, help="Poisson-kernel parameter q")
        p.add_argument("--n", type=int, default=150, help="matrix size for mc")
        p.add_argument("--samples", type=int, default=200, help="matrix samples for mc")
        p.add_argument("--seed", type=int, default=1, help="RNG seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--server", help="remote service URL (default: in-process)")

    for name, blurb in (
        ("density", "Brown-measure density grid CSV"),
        ("spectrum", "support boundary polyline CSV"),
        ("mc", "random-matrix eigenvalue cloud CSV"),
        ("transforms", "series coefficient table CSV"),
        ("examples", "cross-sum legs / enclosure region CSV"),
    ):
        add_common(sub.add_parser(name, help=blurb))

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _load_model(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _post(server: Optional[str], path: str, payload: dict) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server, timeout=600.0) as client:
            return client.post(path, json=payload)

    import asyncio

    from .service import create_app

    async def go() -> httpx.Response:
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://freespectra.local", timeout=600.0
        ) as client:
            return await client.post(path, json=payload)

    return asyncio.run(go())


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.subcommand == "serve":
        import uvicorn

        from .service import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0

    payload = {
        "preset": args.preset,
        "grid": args.grid,
        "re_window": args.re,
        "im_window": args.im,
        "t": args.t,
        "alpha": args.alpha,
        "beta": args.beta,
        "q": args.q,
        "n": args.n,
        "samples": args.samples,
        "seed": args.seed,
        "threads": args.threads,
    }
    if args.model is not None:
        try:
            payload["model"] = _load_model(args.model)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read model file: {exc}", file=sys.stderr)
            return 2
    payload = {k: v for k, v in payload.items() if v is not None}

    resp = _post(args.server, f"/{args.subcommand}", payload)
    if resp.status_code == 400:
        print(f"error: {resp.json().get('detail')}", file=sys.stderr)
        return 2
    if resp.status_code == 409:
        print(f"validation failure: {resp.json().get('detail')}", file=sys.stderr)
        return 3
    if resp.status_code == 422:
        print(f"error: {resp.json().get('detail')}", file=sys.stderr)
        return 2
    resp.raise_for_status()
    body = resp.json()

    os.makedirs(args.out, exist_ok=True)
    for name, text in body["files"].items():
        with open(os.path.join(args.out, name), "w") as fh:
            fh.write(text)
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump(body["manifest"], fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name in sorted(body["files"]):
        print(os.path.join(args.out, name))
    print(os.path.join(args.out, "manifest.json"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
