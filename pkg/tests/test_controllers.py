import itertools

import numpy as np
import pytest

from dccmpc import controllers
from dccmpc.converter import CANDIDATE_LEVELS, CapacitorDifferences, SwitchingState
from dccmpc.plant import PlantParams
from dccmpc.predictor import SubintervalGrid, full_period_model, subinterval_models


PARAMS = PlantParams(R=30.0, L=5e-3, V_dc=750.0, C=1e-3)
TS = 20e-6
WEIGHTS = controllers.CostWeights(lambda_I=1e2, lambda_C=2e-4)
NOMINAL_GRID = SubintervalGrid([0.45, 0.75, 1.0], TS)


# Balancing coefficients per level, written out from the capacitor current equations.
ORACLE_COLUMNS = {
    'equations': {-2: (-1, -1, 0), -1: (0, -1, 0), 0: (0, 0, 0), 1: (0, -1, 1), 2: (-1, -1, 0)},
    'printed_table': {-2: (-1, -1, 0), -1: (0, -1, 1), 0: (0, 0, 0), 1: (0, -1, 0), 2: (-1, -1, 0)},
}


def oracle_stage(i, vd, u_prev, i_ref, model, v_dm, w, C, table='equations'):
    """Brute force over all level triples in plain Python floats.

    Returns (cost, state, predicted current, predicted differences) of the first triple, in
    lexicographic order, whose cost is within rounding of the minimum.
    """
    i, vd, v_dm, i_ref = [float(x) for x in i], [float(x) for x in vd], [float(x) for x in v_dm], list(i_ref)
    results = []
    for levels in itertools.product(range(-2, 3), repeat=3):
        i_pred = [model.A * i[p] + model.B * levels[p] for p in range(3)]
        vd_pred = []
        for k in range(3):
            change = sum(ORACLE_COLUMNS[table][levels[p]][k] * i_pred[p] for p in range(3))
            vd_pred.append(vd[k] + model.dt / C * change)
        errors = [i_pred[p] - float(i_ref[p]) for p in range(3)]
        if w.tracking_norm == 'l1':
            tracking = sum(abs(e) for e in errors)
        else:
            tracking = sum(e * e for e in errors)
        switching = sum(abs(levels[p] - int(u_prev[p])) for p in range(3))
        balancing = sum((vd_pred[k] - v_dm[k]) * v_dm[k] for k in range(3))
        cost = w.lambda_I * tracking + w.lambda_u * switching + w.lambda_C * balancing
        results.append((cost, SwitchingState.from_levels(levels), np.array(i_pred), np.array(vd_pred)))
    best = min(r[0] for r in results)
    return next(r for r in results if r[0] <= best + 1e-9 * max(1.0, abs(best)))


def random_inputs(rng, n_alpha=1, v_dm_scale=20.0):
    i_ref = rng.uniform(-12, 12, (n_alpha, 3)) if n_alpha > 1 else rng.uniform(-12, 12, 3)
    return controllers.ControllerInputs(
        i_m=rng.uniform(-14, 14, 3),
        v_dm=rng.uniform(-v_dm_scale, v_dm_scale, 3),
        u_m=SwitchingState.from_levels(CANDIDATE_LEVELS[rng.integers(125)]),
        i_ref=i_ref,
    )


def test_cost_weights():
    w = controllers.CostWeights(1e2, 2e-4)
    assert w.lambda_u == 1.0
    assert w.tracking_norm == 'l1'
    doubled = w.scaled(2.0)
    assert (doubled.lambda_I, doubled.lambda_C, doubled.lambda_u) == (2e2, 4e-4, 2.0)

    with pytest.raises(ValueError, match='lambda_I must be non-negative'):
        controllers.CostWeights(-1.0, 0.0)
    with pytest.raises(ValueError, match='Unknown tracking norm'):
        controllers.CostWeights(1.0, 0.0, tracking_norm='linf')


def test_stage_cost():
    args = (
        np.array([1.0, 0.0, 0.0]),
        np.zeros(3),
        SwitchingState.from_levels((1, 0, 0)),
        SwitchingState.from_levels((0, 0, 0)),
        CapacitorDifferences(1.0, 0.0, 0.0),
        CapacitorDifferences(2.0, 0.0, 0.0),
    )
    assert controllers.stage_cost(*args, WEIGHTS) == pytest.approx(100 + 1 - 2e-4 * 2)
    squared = controllers.CostWeights(1e2, 2e-4, tracking_norm='l2sq')
    args_far = (np.array([2.0, 0.0, 0.0]),) + args[1:]
    assert controllers.stage_cost(*args_far, squared) == pytest.approx(400 + 1 + 2e-4 * (1 - 2) * 2)


def test_standard_step_at_rest():
    inputs = controllers.ControllerInputs(np.zeros(3), np.zeros(3), SwitchingState.from_levels((0, 0, 0)), np.zeros(3))
    decision = controllers.standard_mpc_step(inputs, full_period_model(PARAMS, TS), WEIGHTS, PARAMS.C)
    assert decision.actions == [(SwitchingState.from_levels((0, 0, 0)), 0.0)]
    assert decision.costs == [0.0]
    assert decision.candidates_evaluated == 125


@pytest.mark.parametrize('table', ['equations', 'printed_table'])
@pytest.mark.parametrize('norm', ['l1', 'l2sq'])
def test_standard_step_matches_oracle(table, norm):
    rng = np.random.default_rng(11)
    model = full_period_model(PARAMS, TS)
    w = controllers.CostWeights(1e2, 2e-4, tracking_norm=norm)
    for _ in range(10):
        inputs = random_inputs(rng)
        decision = controllers.standard_mpc_step(inputs, model, w, PARAMS.C, table)
        cost, u, _, _ = oracle_stage(
            inputs.i_m, inputs.v_dm, inputs.u_m, inputs.i_ref, model, inputs.v_dm, w, PARAMS.C, table
        )
        assert decision.actions[0][0] == u
        assert decision.costs[0] == pytest.approx(cost, rel=1e-9, abs=1e-9)


def test_multirate_step_matches_oracle():
    rng = np.random.default_rng(5)
    models = subinterval_models(PARAMS, NOMINAL_GRID)
    for _ in range(5):
        inputs = random_inputs(rng)
        decision = controllers.multirate_mpc_step(inputs, NOMINAL_GRID, PARAMS, WEIGHTS)
        assert decision.candidates_evaluated == 375
        assert [offset for _, offset in decision.actions] == pytest.approx([0.0, 9e-6, 15e-6])

        i, vd, u_prev = inputs.i_m, inputs.v_dm, inputs.u_m
        for p, model in enumerate(models):
            cost, u, i, vd = oracle_stage(i, vd, u_prev, inputs.i_ref, model, inputs.v_dm, WEIGHTS, PARAMS.C)
            assert decision.actions[p][0] == u
            assert decision.costs[p] == pytest.approx(cost, rel=1e-9, abs=1e-9)
            u_prev = u


def test_multirate_single_subinterval_equals_standard():
    rng = np.random.default_rng(2)
    single = SubintervalGrid([1.0], TS)
    for _ in range(20):
        inputs = random_inputs(rng)
        standard = controllers.standard_mpc_step(inputs, full_period_model(PARAMS, TS), WEIGHTS, PARAMS.C)
        multirate = controllers.multirate_mpc_step(inputs, single, PARAMS, WEIGHTS)
        assert multirate.actions == standard.actions
        assert multirate.costs == standard.costs


def test_multirate_per_subinterval_reference():
    rng = np.random.default_rng(9)
    inputs = random_inputs(rng, n_alpha=3)
    decision = controllers.multirate_mpc_step(inputs, NOMINAL_GRID, PARAMS, WEIGHTS)
    assert len(decision.actions) == 3

    wrong = inputs._replace(i_ref=np.zeros((2, 3)))
    with pytest.raises(AssertionError, match='one reference per subinterval'):
        controllers.multirate_mpc_step(wrong, NOMINAL_GRID, PARAMS, WEIGHTS)


def test_step_is_deterministic():
    rng = np.random.default_rng(4)
    inputs = random_inputs(rng)
    first = controllers.multirate_mpc_step(inputs, NOMINAL_GRID, PARAMS, WEIGHTS)
    second = controllers.multirate_mpc_step(inputs, NOMINAL_GRID, PARAMS, WEIGHTS)
    assert first == second


def test_step_is_odd_symmetric():
    rng = np.random.default_rng(6)
    model = full_period_model(PARAMS, TS)
    for _ in range(10):
        inputs = random_inputs(rng)._replace(v_dm=np.zeros(3))
        mirrored = controllers.ControllerInputs(
            -inputs.i_m, np.zeros(3), SwitchingState.from_levels(-inputs.u_m.as_array()), -inputs.i_ref
        )
        decision = controllers.standard_mpc_step(inputs, model, WEIGHTS, PARAMS.C)
        flipped = controllers.standard_mpc_step(mirrored, model, WEIGHTS, PARAMS.C)
        assert np.array_equal(flipped.actions[0][0].as_array(), -decision.actions[0][0].as_array())
        assert flipped.costs[0] == pytest.approx(decision.costs[0], rel=1e-12)


@pytest.mark.parametrize('order', [(1, 2, 0), (0, 2, 1), (2, 1, 0)])
def test_step_follows_phase_permutation(order):
    rng = np.random.default_rng(7)
    order = list(order)
    for _ in range(10):
        inputs = random_inputs(rng, n_alpha=3)
        permuted = controllers.ControllerInputs(
            inputs.i_m[order],
            inputs.v_dm,
            SwitchingState.from_levels(inputs.u_m.as_array()[order]),
            inputs.i_ref[:, order],
        )
        decision = controllers.multirate_mpc_step(inputs, NOMINAL_GRID, PARAMS, WEIGHTS)
        moved = controllers.multirate_mpc_step(permuted, NOMINAL_GRID, PARAMS, WEIGHTS)
        for (u, offset), (u_moved, offset_moved) in zip(decision.actions, moved.actions):
            assert np.array_equal(u_moved.as_array(), u.as_array()[order])
            assert offset_moved == offset
        assert moved.costs == pytest.approx(decision.costs, rel=1e-12)


def test_step_invariant_to_weight_scaling():
    rng = np.random.default_rng(8)
    for _ in range(10):
        inputs = random_inputs(rng)
        decision = controllers.multirate_mpc_step(inputs, NOMINAL_GRID, PARAMS, WEIGHTS)
        scaled = controllers.multirate_mpc_step(inputs, NOMINAL_GRID, PARAMS, WEIGHTS.scaled(10.0))
        assert scaled.switching_states == decision.switching_states
        assert scaled.total_cost == pytest.approx(10.0 * decision.total_cost, rel=1e-9)


def test_exhaustive_never_worse_than_greedy():
    rng = np.random.default_rng(12)
    grid = SubintervalGrid([0.45, 1.0], TS)
    for _ in range(10):
        inputs = random_inputs(rng, n_alpha=2)
        greedy = controllers.multirate_mpc_step(inputs, grid, PARAMS, WEIGHTS)
        exhaustive = controllers.exhaustive_multirate_step(inputs, grid, PARAMS, WEIGHTS)
        assert exhaustive.candidates_evaluated == 125**2
        assert exhaustive.total_cost <= greedy.total_cost + 1e-9


def test_exhaustive_beats_greedy_when_early_switch_is_undone():
    # Phase a: a small first reference makes level 1 locally cheapest, but the second subinterval
    # wants zero current, so greedy has to switch back.
    grid = SubintervalGrid([0.45, 1.0], TS)
    w = controllers.CostWeights(lambda_I=1e2, lambda_C=0.0)
    inputs = controllers.ControllerInputs(
        i_m=np.zeros(3),
        v_dm=np.zeros(3),
        u_m=SwitchingState.from_levels((0, 0, 0)),
        i_ref=np.array([[0.18, 0.0, 0.0], [0.0, 0.0, 0.0]]),
    )
    greedy = controllers.multirate_mpc_step(inputs, grid, PARAMS, w)
    exhaustive = controllers.exhaustive_multirate_step(inputs, grid, PARAMS, w)

    assert greedy.actions[0][0] == (1, 0, 0)
    assert greedy.total_cost == pytest.approx(16.75 + 11.7275, rel=1e-6)
    assert exhaustive.total_cost <= 18.0 + 1e-9
    assert exhaustive.total_cost < greedy.total_cost - 1.0
    assert sum(exhaustive.costs) == pytest.approx(exhaustive.total_cost)


def test_exhaustive_matches_greedy_on_single_subinterval():
    rng = np.random.default_rng(13)
    single = SubintervalGrid([1.0], TS)
    inputs = random_inputs(rng)
    greedy = controllers.multirate_mpc_step(inputs, single, PARAMS, WEIGHTS)
    exhaustive = controllers.exhaustive_multirate_step(inputs, single, PARAMS, WEIGHTS)
    assert exhaustive.actions == greedy.actions
    assert exhaustive.costs == pytest.approx(greedy.costs)


def test_exhaustive_three_subintervals():
    inputs = controllers.ControllerInputs(np.zeros(3), np.zeros(3), SwitchingState.from_levels((0, 0, 0)), np.zeros(3))
    decision = controllers.exhaustive_multirate_step(inputs, NOMINAL_GRID, PARAMS, WEIGHTS)
    assert decision.candidates_evaluated == 1_953_125
    assert decision.switching_states == [SwitchingState.from_levels((0, 0, 0))] * 3
    assert decision.costs == [0.0, 0.0, 0.0]
    assert [offset for _, offset in decision.actions] == pytest.approx([0.0, 9e-6, 15e-6])
    assert controllers.Controller('exhaustive', PARAMS, NOMINAL_GRID, WEIGHTS).candidates_per_step == 1_953_125


def test_exhaustive_rejects_long_grids():
    inputs = random_inputs(np.random.default_rng(0))
    with pytest.raises(ValueError, match='at most 3 subintervals'):
        controllers.exhaustive_multirate_step(inputs, SubintervalGrid.uniform(4, TS), PARAMS, WEIGHTS)


def test_controller():
    standard = controllers.Controller('standard', PARAMS, SubintervalGrid([1.0], TS), WEIGHTS)
    multirate = controllers.Controller('multirate', PARAMS, NOMINAL_GRID, WEIGHTS)
    exhaustive = controllers.Controller('exhaustive', PARAMS, SubintervalGrid([0.5, 1.0], TS), WEIGHTS)
    assert standard.candidates_per_step == 125
    assert multirate.candidates_per_step == 375
    assert exhaustive.candidates_per_step == 125**2

    inputs = random_inputs(np.random.default_rng(1))
    assert standard.step(inputs) == controllers.standard_mpc_step(inputs, full_period_model(PARAMS, TS), WEIGHTS, 1e-3)
    assert multirate.step(inputs) == controllers.multirate_mpc_step(inputs, NOMINAL_GRID, PARAMS, WEIGHTS)

    with pytest.raises(ValueError, match='Unknown controller kind'):
        controllers.Controller('robust', PARAMS, NOMINAL_GRID, WEIGHTS)
    with pytest.raises(ValueError, match='one input per period'):
        controllers.Controller('standard', PARAMS, NOMINAL_GRID, WEIGHTS)
    with pytest.raises(ValueError, match='at most 3 subintervals'):
        controllers.Controller('exhaustive', PARAMS, SubintervalGrid.uniform(5, TS), WEIGHTS)
    with pytest.raises(ValueError, match='Unknown coupling table'):
        controllers.Controller('multirate', PARAMS, NOMINAL_GRID, WEIGHTS, table='transposed')


@pytest.mark.integration
def test_standard_step_matches_oracle_at_scale():
    rng = np.random.default_rng(2024)
    model = full_period_model(PARAMS, TS)
    for _ in range(10_000):
        inputs = random_inputs(rng)
        decision = controllers.standard_mpc_step(inputs, model, WEIGHTS, PARAMS.C)
        cost, u, _, _ = oracle_stage(
            inputs.i_m, inputs.v_dm, inputs.u_m, inputs.i_ref, model, inputs.v_dm, WEIGHTS, PARAMS.C
        )
        assert decision.actions[0][0] == u
        assert decision.costs[0] == pytest.approx(cost, rel=1e-9, abs=1e-9)


@pytest.mark.integration
def test_exhaustive_dominance_at_scale():
    rng = np.random.default_rng(2025)
    grid = SubintervalGrid([0.45, 1.0], TS)
    strict = 0
    for _ in range(1000):
        inputs = random_inputs(rng, n_alpha=2)
        greedy = controllers.multirate_mpc_step(inputs, grid, PARAMS, WEIGHTS)
        exhaustive = controllers.exhaustive_multirate_step(inputs, grid, PARAMS, WEIGHTS)
        assert exhaustive.total_cost <= greedy.total_cost + 1e-9
        strict += exhaustive.total_cost < greedy.total_cost - 1e-6
    assert strict >= 1
