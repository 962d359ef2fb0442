import json

import numpy as np
import pytest

from aqbell.errors import (
    NegativityError,
    NormalizationError,
    ScenarioMismatchError,
    SignallingError,
    SizeGuardError,
)
from aqbell.scenario import (
    BellFunctional,
    CGVector,
    _cg_maps,
    behavior_from_json,
    behavior_from_table,
    behavior_to_json,
    enumerate_deterministic,
    evaluate,
    from_collins_gisin,
    functional_from_json,
    functional_from_table,
    functional_from_terms,
    functional_to_json,
    make_scenario,
    random_local_behavior,
    to_collins_gisin,
    unit_functional,
)


def uniform_behavior(scn):
    table = np.full(scn.table_shape, 1.0 / scn.outcomes**scn.parties)
    return behavior_from_table(scn, table)


def test_make_scenario():
    scn = make_scenario(2, 3, 2)
    assert scn.parties == 2 and scn.settings == (3, 3) and scn.outcomes == 2
    assert make_scenario(1, 1, 2).vertex_count == 2
    for bad in [(0, 1, 2), (1, 0, 2), (1, 1, 1), (-2, 3, 2)]:
        with pytest.raises(ValueError):
            make_scenario(*bad)


def test_behavior_validation(scn222):
    uniform_behavior(scn222)  # white noise is fine
    det = np.zeros(scn222.table_shape)
    det[:, :, 0, 0] = 1.0
    behavior_from_table(scn222, det)

    bumped = np.full(scn222.table_shape, 0.25)
    bumped[0, 0, 0, 0] += 0.1
    with pytest.raises(NormalizationError):
        behavior_from_table(scn222, bumped)

    negative = np.full(scn222.table_shape, 0.25)
    negative[0, 0, 0, 0] = -0.05
    negative[0, 0, 1, 1] = 0.55
    with pytest.raises(NegativityError):
        behavior_from_table(scn222, negative)

    # Alice's outcome copies Bob's setting: signalling
    signalling = np.zeros(scn222.table_shape)
    for x in range(2):
        for y in range(2):
            signalling[x, y, y, 0] = 1.0
    with pytest.raises(SignallingError):
        behavior_from_table(scn222, signalling)


def test_cg_white_noise(scn222):
    v = to_collins_gisin(uniform_behavior(scn222))
    expected = np.array([1.0, 0.5, 0.5, 0.5, 0.5, 0.25, 0.25, 0.25, 0.25])
    np.testing.assert_allclose(v.entries, expected, atol=1e-15)


def test_cg_deterministic_all_zero(scn222):
    det = np.zeros(scn222.table_shape)
    det[:, :, 0, 0] = 1.0
    v = to_collins_gisin(behavior_from_table(scn222, det))
    np.testing.assert_allclose(v.entries, np.ones(9), atol=1e-15)


def test_cg_anticorrelated_box(scn222):
    # even mixture of "a=0,b=1 always" and "a=1,b=0 always"
    table = np.zeros(scn222.table_shape)
    table[:, :, 0, 1] = 0.5
    table[:, :, 1, 0] = 0.5
    b = behavior_from_table(scn222, table)
    v = to_collins_gisin(b)
    basis = _cg_maps(scn222)[0]
    idx = basis.index(((0, 1, 0), (1, 1, 0)))
    assert v.entries[idx] == 0.0  # p(00|11)


def test_round_trip_identity_matrix():
    for scn in (make_scenario(1, 1, 2), make_scenario(2, 2, 2), make_scenario(2, 3, 2), make_scenario(3, 3, 2)):
        _, _, tmat, lmat = _cg_maps(scn)
        np.testing.assert_allclose(tmat @ lmat, np.eye(tmat.shape[0]), atol=1e-13)


def test_round_trip_random_behaviors(rng):
    # vertex mixtures span the whole no-signalling subspace
    cases = [(make_scenario(2, 2, 2), 600), (make_scenario(2, 3, 2), 250), (make_scenario(3, 3, 2), 150)]
    worst = 0.0
    for scn, count in cases:
        for _ in range(count):
            b = random_local_behavior(scn, rng)
            back = from_collins_gisin(to_collins_gisin(b))
            worst = max(worst, float(np.abs(back.table - b.table).max()))
    assert worst < 1e-10


def test_round_trip_pr_box(scn222):
    table = np.zeros(scn222.table_shape)
    for x in range(2):
        for y in range(2):
            for a in range(2):
                for b in range(2):
                    if (a + b) % 2 == (x & y):
                        table[x, y, a, b] = 0.5
    box = behavior_from_table(scn222, table)
    back = from_collins_gisin(to_collins_gisin(box))
    np.testing.assert_allclose(back.table, box.table, atol=1e-12)


def test_from_cg_rejects_negative(scn222):
    entries = to_collins_gisin(uniform_behavior(scn222)).entries.copy()
    entries[5] = 0.9  # pair probability above its marginals
    with pytest.raises(NegativityError):
        from_collins_gisin(CGVector(scn222, entries))


def test_enumerate_counts():
    assert len(enumerate_deterministic(make_scenario(2, 2, 2))) == 16
    assert len(enumerate_deterministic(make_scenario(2, 3, 2))) == 64
    assert len(enumerate_deterministic(make_scenario(3, 3, 2))) == 512


def test_enumerate_exactness(scn222):
    for vertex in enumerate_deterministic(scn222):
        sums = vertex.table.sum(axis=(2, 3))
        assert np.all(sums == 1.0)
        assert set(np.unique(vertex.table)) <= {0.0, 1.0}


def test_enumerate_guard():
    with pytest.raises(SizeGuardError):
        enumerate_deterministic(make_scenario(4, 10, 2))


def test_evaluate_wiring_examples(scn232):
    wiring = functional_from_terms(
        scn232,
        {(): 1.0, ((0, 1, 0),): -1.0, ((1, 1, 0),): -1.0, ((0, 1, 0), (1, 1, 0)): 2.0},
    )
    both_zero = np.zeros(scn232.table_shape)
    both_zero[..., 0, 0] = 1.0
    assert evaluate(wiring, behavior_from_table(scn232, both_zero)) == 1.0

    mismatch = np.zeros(scn232.table_shape)
    mismatch[..., 0, 1] = 1.0
    assert evaluate(wiring, behavior_from_table(scn232, mismatch)) == 0.0

    # shared coin: equal outcomes with probability one at every setting
    coin = np.zeros(scn232.table_shape)
    coin[..., 0, 0] = 0.5
    coin[..., 1, 1] = 0.5
    assert evaluate(wiring, behavior_from_table(scn232, coin)) == 1.0


def test_evaluate_linearity(scn232, rng):
    from aqbell.scenario import basis_size

    n = basis_size(scn232)
    worst = 0.0
    for _ in range(50):
        f1 = BellFunctional(scn232, rng.uniform(-1, 1, n))
        f2 = BellFunctional(scn232, rng.uniform(-1, 1, n))
        t = rng.uniform(-2, 2)
        combo = BellFunctional(scn232, t * f1.coeffs + (1 - t) * f2.coeffs)
        b1 = random_local_behavior(scn232, rng)
        b2 = random_local_behavior(scn232, rng)
        s = rng.uniform(0, 1)
        mix = behavior_from_table(scn232, s * b1.table + (1 - s) * b2.table)
        worst = max(worst, abs(evaluate(combo, b1) - (t * evaluate(f1, b1) + (1 - t) * evaluate(f2, b1))))
        worst = max(worst, abs(evaluate(f1, mix) - (s * evaluate(f1, b1) + (1 - s) * evaluate(f1, b2))))
    assert worst < 1e-12


def test_evaluate_scenario_mismatch(scn222, scn232):
    f = unit_functional(scn222)
    b = random_local_behavior(scn232, np.random.default_rng(0))
    with pytest.raises(ScenarioMismatchError):
        evaluate(f, b)


def test_functional_from_table_round_trip(scn222, rng):
    from aqbell.scenario import basis_size, representative_table

    f = BellFunctional(scn222, rng.uniform(-1, 1, basis_size(scn222)))
    again = functional_from_table(scn222, representative_table(f))
    np.testing.assert_allclose(again.coeffs, f.coeffs, atol=1e-13)


def test_behavior_json_round_trip(scn232, rng):
    b = random_local_behavior(scn232, rng)
    for fmt in ("full", "collins_gisin"):
        blob = json.dumps(behavior_to_json(b, fmt))
        back = behavior_from_json(json.loads(blob))
        np.testing.assert_allclose(back.table, b.table, atol=1e-12)
        # serialization is exact, so a second round trip is byte-identical
        assert json.dumps(behavior_to_json(back, fmt)) == blob


def test_functional_json_round_trip(scn232, rng):
    from aqbell.scenario import basis_size

    f = BellFunctional(scn232, rng.uniform(-1, 1, basis_size(scn232)))
    blob = json.dumps(functional_to_json(f))
    back = functional_from_json(json.loads(blob))
    assert np.array_equal(back.coeffs, f.coeffs)
    assert back.scenario == f.scenario


def test_functional_json_full_format(scn222):
    from aqbell.scenario import representative_table

    f = functional_from_terms(scn222, {(): 0.5, ((0, 0, 0), (1, 0, 0)): 1.25})
    obj = {
        "scenario": {"parties": 2, "settings": [2, 2], "outcomes": 2},
        "format": "full",
        "entries": [
            {"monomial": [[0, x, a], [1, y, b]], "coeff": float(representative_table(f)[x, y, a, b])}
            for x in range(2)
            for y in range(2)
            for a in range(2)
            for b in range(2)
        ],
    }
    back = functional_from_json(obj)
    np.testing.assert_allclose(back.coeffs, f.coeffs, atol=1e-13)
