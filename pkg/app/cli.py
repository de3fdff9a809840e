"""Console entry points: node binaries, client, simulator, benchmark and sizing."""

import argparse
import asyncio
import random
import sys
from pathlib import Path
from typing import Optional

import httpx
from dotenv import dotenv_values
from loguru import logger
from pydantic import ValidationError

from app.adapters.mesh import client_ssl_context
from app.config import Settings, load_settings
from app.core.errors import RiposteError
from app.core.types import RejectReason, Role, SimSpec
from app.main import run_node
from app.services.bench import run_benchmark
from app.services.client import (
    ClientConfig,
    SubmitResult,
    fetch_epoch,
    make_cover_request,
    make_write_request,
    submit_write,
    summarize,
)
from app.services.collision import sizing_table
from app.services.simulator import run_simulation


def _node_main(role: Role, argv: Optional[list[str]]):
    ap = argparse.ArgumentParser(description=f"Run a Riposte {role.value} node.")
    ap.add_argument("--config", help="Key-value config file (RIPOSTE_* keys).")
    args = ap.parse_args(argv)

    cfg = load_settings(args.config)
    if cfg.role != role:
        cfg = cfg.model_copy(update={"role": role})
    run_node(cfg)


def server_main(argv: Optional[list[str]] = None):
    _node_main(Role.SERVER, argv)


def audit_main(argv: Optional[list[str]] = None):
    _node_main(Role.AUDITOR, argv)


def load_sim_spec(path: str, seed: Optional[int] = None) -> SimSpec:
    """SimSpec from a key-value file; keys are case-insensitive field names."""
    values = {k.lower(): v for k, v in dotenv_values(path).items() if v is not None}
    if seed is not None:
        values["seed"] = seed
    return SimSpec(**values)


def sim_main(argv: Optional[list[str]] = None):
    ap = argparse.ArgumentParser(description="Run the in-process cluster simulator.")
    ap.add_argument("--spec", required=True, help="Simulation spec file.")
    ap.add_argument("--seed", type=int, default=None, help="Override the seed in the spec file.")
    args = ap.parse_args(argv)

    try:
        spec = load_sim_spec(args.spec, args.seed)
    except ValidationError as e:
        logger.error(f"Invalid simulation spec {args.spec}: {e}")
        sys.exit(2)
    result = run_simulation(spec)
    print(result.model_dump_json(indent=2))


def bench_main(argv: Optional[list[str]] = None):
    ap = argparse.ArgumentParser(description="Measure write throughput against the PRG ceiling.")
    ap.add_argument("--rows", type=int, required=True, help="Table size L.")
    ap.add_argument("--row-bytes", type=int, required=True, help="Row width in bytes.")
    ap.add_argument("--duration", type=float, default=10.0, help="Seconds to run.")
    ap.add_argument("--requests", type=int, default=None, help="Stop after this many requests.")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    report = run_benchmark(args.rows, args.row_bytes, args.duration, args.requests, args.seed)
    print(report.model_dump_json(indent=2))


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.4f}"


def size_main(argv: Optional[list[str]] = None):
    ap = argparse.ArgumentParser(description="Size the table for a target delivery rate.")
    ap.add_argument("--writers", type=int, required=True)
    ap.add_argument("--malicious", type=int, default=0)
    ap.add_argument("--target-rate", type=float, default=0.95)
    ap.add_argument("--recovery", action="store_true")
    ap.add_argument("--monte-carlo-trials", type=int, default=0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rows = sizing_table(
        args.writers, args.malicious, args.target_rate, args.recovery, args.monte_carlo_trials, args.seed
    )
    print(f"{'n':>10}  {'predicted':>10}  {'exact':>10}  {'simulated':>10}")
    for row in rows:
        print(f"{row['n']:>10}  {_fmt(row['predicted']):>10}  {_fmt(row['exact']):>10}  {_fmt(row['simulated']):>10}")


async def _next_epoch(cc: ClientConfig, client: httpx.AsyncClient, after: int, poll_s: float = 0.5) -> int:
    """First epoch id greater than `after`, polling while the previous one closes."""
    loop = asyncio.get_running_loop()
    deadline = loop.time() + cc.timeout_s
    epoch_id = await fetch_epoch(cc, client)
    while epoch_id <= after and loop.time() < deadline:
        await asyncio.sleep(poll_s)
        epoch_id = await fetch_epoch(cc, client)
    return epoch_id


async def run_client(
    cc: ClientConfig,
    command: str,
    message: bytes = b"",
    row: int = 0,
    retry_row: bool = False,
    verify=True,
    rng=None,
) -> SubmitResult:
    rng = rng or random.SystemRandom()
    async with httpx.AsyncClient(timeout=cc.timeout_s, verify=verify) as client:
        result = None
        epoch_id = 0
        for _ in range(2 if retry_row else 1):
            epoch_id = await _next_epoch(cc, client, epoch_id)
            if command == "cover":
                request = make_cover_request(cc, epoch_id, rng)
            else:
                request = make_write_request(message, row, cc, epoch_id, rng)
            result = summarize(await submit_write(cc, request, client))
            if result.accepted or RejectReason.EPOCH.value not in result.reasons:
                break
            logger.info(f"Epoch {epoch_id} closed under the write; retrying row {row} in the next epoch")
        return result


def client_main(argv: Optional[list[str]] = None):
    ap = argparse.ArgumentParser(description="Submit a write (or cover traffic) to the board.")
    ap.add_argument("--config", help="Key-value config file (RIPOSTE_* keys).")
    sub = ap.add_subparsers(dest="command", required=True)
    write = sub.add_parser("write")
    write.add_argument("--row", type=int, required=True)
    source = write.add_mutually_exclusive_group(required=True)
    source.add_argument("--message", help="Message as hex.")
    source.add_argument("--file", help="Read the message from a file.")
    write.add_argument("--retry-row", action="store_true", help="Retry once in the next epoch on an epoch reject.")
    sub.add_parser("cover")
    args = ap.parse_args(argv)

    cfg: Settings = load_settings(args.config)
    message = b""
    if args.command == "write":
        try:
            message = bytes.fromhex(args.message) if args.message else Path(args.file).read_bytes()
        except (ValueError, OSError) as e:
            logger.error(f"Cannot read message: {e}")
            sys.exit(2)

    try:
        result = asyncio.run(
            run_client(
                cfg.client_config(),
                args.command,
                message,
                getattr(args, "row", 0),
                getattr(args, "retry_row", False),
                client_ssl_context(cfg),
            )
        )
    except (RiposteError, ValidationError) as e:
        logger.error(f"Cannot build request: {e}")
        sys.exit(2)
    except httpx.HTTPError as e:
        logger.error(f"Cannot reach the servers: {e}")
        sys.exit(2)

    if result.accepted:
        print("accepted")
        return
    codes = ",".join(str(RejectReason(r).code) for r in result.reasons) or "-"
    print(f"rejected: {','.join(result.reasons) or 'unknown'} (codes {codes})")
    sys.exit(1)
