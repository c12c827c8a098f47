import math

import pytest

import fedcl

SMALL = {
    "federation.clients": 4,
    "rounds": 3,
    "data.blobs.classes": 3,
    "data.blobs.per_class": 40,
    "model.feature_widths": [8],
    "generator.batch_size": 16,
}


def test_cl_loss_at_tau_is_zero():
    loss, sigma, score = fedcl.cl_loss(10.0, tau=10.0, lam=0.5)
    assert loss == 0.0
    assert sigma == 1.0
    assert score == 0.0


def test_confidence_beats_grid():
    loss, sigma, _ = fedcl.cl_loss(4.0, tau=10.0, lam=0.5)
    grid = [i / 1000 for i in range(1, 2719)]
    best = min((4.0 - 10.0) * s + 0.5 * math.log(s) ** 2 for s in grid)
    assert loss <= best + 1e-12
    assert 0.0 < sigma <= math.e


def test_gmm_trace_is_monotone():
    xs = [(-1) ** i * (5 + 0.01 * i) for i in range(300)]
    comps, trace = fedcl.fit_gmm(xs, components=2, seed=3)
    assert abs(sum(w for w, _, _ in comps) - 1.0) < 1e-9
    assert all(b >= a - 1e-9 for a, b in zip(trace, trace[1:]))


def test_sync_helpers():
    assert fedcl.threshold(list(range(10, 0, -1)), 0.3) == 3
    assert fedcl.should_freeze([1, 1, 1, 1, 9], 1.0, 0.79)
    assert not fedcl.should_freeze([1, 1, 1, 1, 9], 1.0, 0.8)


def test_partition_covers_every_index():
    clients, labels = fedcl.partition(5, 20, 6, 0.1, seed=2)
    flat = sorted(i for c in clients for i in c)
    assert flat == list(range(len(labels)))
    assert all(clients)


def test_run_is_deterministic():
    a = fedcl.run(SMALL)
    b = fedcl.run(SMALL)
    assert a["csv"] == b["csv"]
    assert a["model_hash"] == b["model_hash"]
    assert [r["round"] for r in a["history"]] == [1, 2, 3]
    assert a["csv"].startswith("round,z,algorithm,")


def test_bad_key_raises():
    with pytest.raises(fedcl.ConfigError):
        fedcl.run({"no.such.key": 1})
