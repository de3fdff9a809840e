"""Throughput benchmark over an in-process two-server cluster."""

import os
import platform
import time
from typing import Optional

import psutil
from loguru import logger

from app.core.prg import SEED_BYTES, prg_expand
from app.core.types import BenchReport, LatencyPercentiles, SimSpec
from app.core.utils import percentile
from app.services.simulator import Simulation

PRG_SAMPLE_BYTES = 16 * 1024 * 1024


def host_info() -> dict[str, str]:
    mem = psutil.virtual_memory()
    return {
        "platform": platform.platform(),
        "python": platform.python_version(),
        "cpu_count": str(psutil.cpu_count(logical=True) or os.cpu_count() or 0),
        "memory_total_mb": f"{mem.total / (1024 * 1024):.0f}",
    }


def measure_prg_rate(sample_bytes: int = PRG_SAMPLE_BYTES, min_time_s: float = 0.2) -> float:
    """AES-CTR keystream bytes per second on this machine."""
    seed = bytes(SEED_BYTES)
    produced = 0
    start = time.perf_counter()
    while True:
        prg_expand(seed, sample_bytes)
        produced += sample_bytes
        elapsed = time.perf_counter() - start
        if elapsed >= min_time_s:
            return produced / elapsed


def run_benchmark(
    rows: int,
    row_bytes: int,
    duration_s: float,
    max_requests: Optional[int] = None,
    seed: int = 0,
) -> BenchReport:
    """
    Submit honest writes one at a time until `duration_s` elapses or
    `max_requests` have been sent.

    Latency is wall-clock from submission until both acknowledgements arrive,
    so it covers share evaluation, both audit phases and the coin flip.
    """
    sim = Simulation(SimSpec(rows=rows, row_bytes=row_bytes, seed=seed))
    geometry = sim.config.geometry
    table_bytes = geometry.x * geometry.y * sim.client_config.layout.field.row_bytes
    epoch_id = sim.servers[0].epoch_id

    logger.info(f"Benchmark: L={rows}, row={row_bytes}B, x={geometry.x}, y={geometry.y}, {duration_s}s")
    latencies: list[float] = []
    accepted = 0
    sent = 0
    start = time.perf_counter()
    while time.perf_counter() - start < duration_s:
        if max_requests is not None and sent >= max_requests:
            break
        plan = sim.plan_client(epoch_id, "honest", sent)
        t0 = time.perf_counter()
        sim.submit(plan)
        sim.run_until_quiet()
        latencies.append((time.perf_counter() - t0) * 1000.0)
        sent += 1
        accepted += int(plan.accepted)
    elapsed = max(time.perf_counter() - start, 1e-9)

    prg_rate = measure_prg_rate()
    report = BenchReport(
        host=host_info(),
        rows=rows,
        row_bytes=row_bytes,
        x=geometry.x,
        y=geometry.y,
        duration_s=elapsed,
        requests=sent,
        accepted=accepted,
        accepted_per_s=accepted / elapsed,
        eval_full_bytes_per_s=accepted * table_bytes / elapsed,
        audit_latency=LatencyPercentiles(
            p50_ms=percentile(latencies, 50),
            p90_ms=percentile(latencies, 90),
            p99_ms=percentile(latencies, 99),
        ),
        prg_bytes_per_s=prg_rate,
        ceiling_requests_per_s=prg_rate / table_bytes,
    )
    logger.info(
        f"Benchmark done: {accepted}/{sent} accepted, {report.accepted_per_s:.2f} req/s "
        f"(ceiling {report.ceiling_requests_per_s:.2f} req/s)"
    )
    return report
