from app.core.utils import percentile
from app.services.bench import host_info, measure_prg_rate, run_benchmark


def test_benchmark_report():
    report = run_benchmark(rows=64, row_bytes=16, duration_s=30.0, max_requests=5, seed=1)
    assert report.requests == 5 and report.accepted == 5
    assert report.x * report.y >= 64
    assert report.accepted_per_s > 0
    assert report.ceiling_requests_per_s > report.accepted_per_s
    latency = report.audit_latency
    assert 0 < latency.p50_ms <= latency.p90_ms <= latency.p99_ms
    assert report.host["python"]


def test_prg_rate_is_positive():
    assert measure_prg_rate(sample_bytes=1 << 16, min_time_s=0.01) > 0
    assert "cpu_count" in host_info()


def test_percentile_nearest_rank():
    values = [float(v) for v in range(1, 101)]
    assert percentile(values, 50) == 50.0
    assert percentile(values, 99) == 99.0
    assert percentile([3.0], 90) == 3.0
    assert percentile([], 50) == 0.0
