import random

import numpy as np
import pytest

from app.core.types import MutationStrategy, SimSpec, Variant
from app.services.collision import SizingModel, SizingQuery, required_table_size
from app.services.simulator import STRATEGIES, Simulation, run_simulation


def _oracle_matches(sim: Simulation, epoch_id: int) -> bool:
    """Revealed rows 1.. equal the plain sum of every accepted honest payload."""
    field = sim.client_config.layout.field
    expected = field.zeros(sim.config.geometry.rows)
    for row, payload in sim.accepted_payloads(epoch_id):
        if payload is not None:
            expected[row] = field.add(expected[row], payload)
    return np.array_equal(sim.tables[epoch_id][1:], expected[1:])


def test_runs_are_reproducible():
    spec = SimSpec(n_clients=12, malicious_fraction=0.25, cover_clients=2, rows=32, row_bytes=16, seed=7)
    first, second = run_simulation(spec), run_simulation(spec)
    assert first.model_dump() == second.model_dump()
    assert run_simulation(spec.model_copy(update={"seed": 8})).model_dump() != first.model_dump()


def test_empty_epoch_reveals_empty_board():
    result = run_simulation(SimSpec(n_clients=0, rows=16, row_bytes=16))
    assert len(result.reports) == 1
    report = result.reports[0]
    assert report.accepted == 0 and report.records == []
    assert report.empty == 15
    assert result.success_rate == 0.0


def test_honest_clients_match_oracle():
    sim = Simulation(SimSpec(n_clients=16, rows=64, row_bytes=16, seed=3))
    result = sim.run()
    assert result.honest_writers == 16
    assert result.rejected == 0
    assert _oracle_matches(sim, 1)
    collided = {}
    for plan in sim.plans_by_epoch[1]:
        collided[plan.row] = collided.get(plan.row, 0) + 1
    assert result.honest_delivered == sum(1 for c in collided.values() if c == 1)


def test_malicious_clients_never_land():
    """Ten percent malicious clients with mixed strategies: none accepted, honest writes intact."""
    sim = Simulation(SimSpec(n_clients=40, malicious_fraction=0.1, rows=128, row_bytes=16, seed=11))
    result = sim.run()
    assert result.malicious_requests == 4
    assert result.malicious_accepted == 0
    assert all(plan.accepted for plan in sim.plans_by_epoch[1] if plan.kind == "honest")
    assert _oracle_matches(sim, 1)


@pytest.mark.parametrize("strategy", STRATEGIES, ids=[s.value for s in STRATEGIES])
def test_disruption_strategies_rejected(strategy):
    """Every deviation is refused by at least one server and never added to the table."""
    sim = Simulation(
        SimSpec(n_clients=4, malicious_fraction=0.5, strategy=strategy, rows=32, row_bytes=16, seed=13)
    )
    result = sim.run()
    assert result.malicious_accepted == 0
    bad = [p for p in sim.plans_by_epoch[1] if p.kind == "malicious"]
    assert bad and all(p.strategy == strategy and p.rejected for p in bad)
    assert _oracle_matches(sim, 1)


@pytest.mark.parametrize(
    "strategy", [MutationStrategy.INDEX_TAMPER, MutationStrategy.BITFLIP, MutationStrategy.DROP_PEER]
)
def test_multi_server_disruption_rejected(strategy):
    spec = SimSpec(
        n_clients=4,
        malicious_fraction=0.5,
        strategy=strategy,
        variant=Variant.MULTI_SERVER,
        n_servers=3,
        rows=16,
        row_bytes=8,
        seed=17,
    )
    sim = Simulation(spec)
    result = sim.run()
    assert result.malicious_accepted == 0
    assert all(p.accepted for p in sim.plans_by_epoch[1] if p.kind == "honest")
    assert _oracle_matches(sim, 1)


def test_cover_traffic_fills_row_zero_only():
    sim = Simulation(SimSpec(n_clients=3, cover_clients=3, rows=32, row_bytes=16, seed=19))
    result = sim.run()
    assert result.cover_requests == 3
    report = result.reports[0]
    assert report.cover_nonempty
    assert all(r.row != 0 for r in report.records)


def test_threshold_policy_spans_epochs():
    result = run_simulation(SimSpec(n_clients=5, epochs=3, threshold=5, rows=64, row_bytes=16, seed=23))
    assert [r.epoch_id for r in result.reports] == [1, 2, 3]
    assert all(r.accepted == 5 for r in result.reports)
    assert result.honest_writers == 15


def test_stress_mode_matches_sequential():
    """Request generation on a worker pool does not change the outcome."""
    spec = SimSpec(n_clients=10, malicious_fraction=0.2, rows=32, row_bytes=16, seed=29)
    stressed = run_simulation(spec.model_copy(update={"stress": True, "workers": 4}))
    assert stressed.model_dump() == run_simulation(spec).model_dump()


def test_latency_does_not_change_outcome():
    spec = SimSpec(n_clients=8, rows=32, row_bytes=16, seed=31)
    delayed = run_simulation(spec.model_copy(update={"latency_ms": 40.0}))
    assert delayed.model_dump() == run_simulation(spec).model_dump()


def test_recovery_layout_delivers_pairs():
    sim = Simulation(SimSpec(n_clients=30, rows=32, row_bytes=16, recovery=True, seed=37))
    result = sim.run()
    assert result.reports[0].pair > 0
    assert result.honest_delivered > 0


def _nonzero_rows(sim: Simulation, epoch_id: int) -> set[int]:
    field = sim.client_config.layout.field
    table = sim.tables[epoch_id]
    return {row for row in range(1, len(table)) if not field.is_zero(table[row])}


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(100))
def test_malicious_writes_touch_at_most_their_own_rows(seed):
    """Mixed disruption strategies: rows touched beyond the honest ones never exceed the malicious count."""
    rng = random.Random(seed)
    n_clients = rng.randrange(4, 13)
    variant = Variant.MULTI_SERVER if seed % 5 == 0 else Variant.TWO_SERVER
    spec = SimSpec(
        n_clients=n_clients,
        malicious_fraction=rng.choice([0.25, 0.5, 0.75]),
        strategy=MutationStrategy.RANDOM,
        variant=variant,
        n_servers=3 if variant == Variant.MULTI_SERVER else 2,
        rows=32,
        row_bytes=8,
        seed=seed,
    )
    sim = Simulation(spec)
    result = sim.run()
    n_bad = result.malicious_requests
    honest_rows = {row for row, _ in sim.accepted_payloads(1)}
    assert len(_nonzero_rows(sim, 1) - honest_rows) <= n_bad
    assert result.malicious_accepted <= n_bad
    assert _oracle_matches(sim, 1)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(100))
def test_revealed_board_matches_oracle(seed):
    """Random variant, geometry and writer count: the board equals the plain sum of accepted writes."""
    rng = random.Random(1000 + seed)
    variant = rng.choice([Variant.TWO_SERVER, Variant.MULTI_SERVER])
    multi = variant == Variant.MULTI_SERVER
    spec = SimSpec(
        n_clients=rng.randrange(0, 9 if multi else 25),
        cover_clients=rng.randrange(0, 3),
        variant=variant,
        n_servers=rng.choice([2, 3]) if multi else 2,
        recovery=not multi and rng.random() < 0.3,
        rows=rng.randrange(2, 33 if multi else 129),
        row_bytes=rng.randrange(4, 13 if multi else 33),
        seed=seed,
    )
    sim = Simulation(spec)
    result = sim.run()
    assert len(result.reports) == 1
    assert _oracle_matches(sim, 1)


@pytest.mark.slow
def test_success_rate_tracks_sizing():
    """1024 writers on a table sized for 95% delivery land within two points of the target."""
    writers = 1024
    target = 0.95
    cells = required_table_size(SizingQuery(m=writers, target=target, model=SizingModel.EXACT))
    result = run_simulation(SimSpec(n_clients=writers, rows=cells + 1, row_bytes=16, seed=41))
    assert result.honest_writers == writers
    assert abs(result.success_rate - target) <= 0.02
