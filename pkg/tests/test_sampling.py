import numpy as np
import pytest

from dreamcfr.errors import SamplingError
from dreamcfr.evaluation import OracleBaseline
from dreamcfr.games import Action, FhpGame, KuhnGame, LeducGame
from dreamcfr.sampling import (
    BaselineTable,
    GeneratorSampler,
    SamplingPolicySpec,
    ScriptedSampler,
    baseline_update,
    es_traverse,
    os_traverse,
    sampling_policy,
    zero_baseline,
)
from oracles import enumerate_traversals, expectimax, uniform_policy

F, C, R = Action.FOLD, Action.CALL, Action.RAISE


def test_sampling_policy_mix():
    pi = np.array([0.8, 0.2])
    assert np.allclose(sampling_policy(pi, 0.5, is_traverser=True), [0.65, 0.35])
    assert np.allclose(sampling_policy(pi, 0.5, is_traverser=False), pi)
    assert np.allclose(sampling_policy(pi, 1.0, is_traverser=True), [0.5, 0.5])
    assert np.allclose(sampling_policy(pi, 0.0, is_traverser=True), pi)


def test_sampling_policy_validation():
    with pytest.raises(ValueError):
        sampling_policy(np.array([0.8, 0.2]), 1.5, True)
    with pytest.raises(ValueError):
        sampling_policy(np.array([0.8, 0.3]), 0.5, True)  # sums to 1.1
    with pytest.raises(ValueError):
        sampling_policy(np.array([1.2, -0.2]), 0.5, True)
    with pytest.raises(ValueError):
        sampling_policy(np.array([np.nan, 1.0]), 0.5, True)
    with pytest.raises(ValueError):
        sampling_policy(np.array([]), 0.5, True)


def test_generator_sampler_matches_distribution():
    rng = np.random.default_rng(5)
    sampler = GeneratorSampler(rng)
    probs = np.array([0.2, 0.5, 0.3])
    draws = np.bincount([sampler.pick(probs) for _ in range(20000)], minlength=3)
    assert np.allclose(draws / 20000, probs, atol=0.02)


def test_generator_sampler_rejects_bad_distribution():
    sampler = GeneratorSampler(np.random.default_rng(0))
    with pytest.raises(SamplingError):
        sampler.pick(np.array([0.5, 0.2]))
    with pytest.raises(SamplingError):
        sampler.pick(np.array([1.5, -0.5]))
    with pytest.raises(SamplingError):
        sampler.pick(np.array([np.inf, 1.0]))


def test_scripted_sampler_replays_and_records():
    s = ScriptedSampler([2, 0])
    assert s.pick(np.array([0.2, 0.3, 0.5])) == 2
    assert s.pick(np.array([0.4, 0.6])) == 0
    assert s.pick(np.array([0.9, 0.1])) == 0  # beyond the script: first branch
    assert s.trace == [(3, 2, 0.5), (2, 0, 0.4), (2, 0, 0.9)]
    assert np.isclose(s.probability, 0.5 * 0.4 * 0.9)


def test_enumerate_traversals_covers_everything():
    # two draws of width 2 and 3: six runs, probabilities sum to one
    def run(sampler):
        a = sampler.pick(np.array([0.3, 0.7]))
        b = sampler.pick(np.array([0.2, 0.5, 0.3]))
        return (a, b)

    runs = list(enumerate_traversals(run))
    assert len(runs) == 6
    assert {r for _, r in runs} == {(a, b) for a in range(2) for b in range(3)}
    assert np.isclose(sum(p for p, _ in runs), 1.0)


def test_baseline_table_running_mean():
    game = KuhnGame()
    state = game.apply(game.initial_state(), game.chance_outcomes(game.initial_state())[0])
    table = BaselineTable(game)
    legal = tuple(game.legal_actions(state))
    assert np.allclose(table(state, legal), [0.0, 0.0])
    hkey = game.joint_key(state)
    baseline_update(table, hkey, legal[0], 10.0)
    baseline_update(table, hkey, legal[0], 20.0)
    baseline_update(table, hkey, legal[1], -6.0)
    assert np.allclose(table(state, legal), [15.0, -6.0])
    baseline_update(table, hkey, legal[0], 30.0)
    assert np.allclose(table(state, legal), [20.0, -6.0])


def test_os_traverse_hand_checked_trajectory():
    game = KuhnGame()
    spec = SamplingPolicySpec(traverser=0, epsilon=0.5)
    # deal jack/queen, seat 0 raises, seat 1 calls: queen wins the 200 pot
    sampler = ScriptedSampler([0, 1, 1])
    out = os_traverse(game, uniform_policy, spec, None, sampler)

    assert out.terminal_reward == -200.0
    assert out.terminal_state.folded is None
    assert out.nodes_touched == 4  # chance, two decisions, terminal
    assert np.isclose(sampler.probability, (1 / 6) * 0.5 * 0.5)

    first, second = out.steps
    assert first.actor == 0 and second.actor == 1
    assert first.legal == (C, R) and second.legal == (F, C)
    assert first.action_index == 1 and second.action_index == 1
    assert first.xi_prob == 0.5 and second.xi_prob == 0.5
    assert first.reach_i == 1.0
    assert second.reach_i == 0.5  # traverser sampled its raise at probability 1/2
    assert first.chance_reach == second.chance_reach == pytest.approx(1 / 6)

    # unwind with zero baseline: sampled slot gets value / sampling prob
    assert np.allclose(second.vtilde, [0.0, -400.0])
    assert second.node_value == -200.0
    assert second.child_value == -200.0
    assert np.allclose(first.vtilde, [0.0, -400.0])
    assert first.node_value == -200.0
    assert out.root_value == -200.0

    # only the traverser's infostates are reported in values
    assert set(out.values) == {first.key}
    assert first.key.agent == 0


def test_os_traverse_nonzero_baseline_fills_unsampled_slots():
    game = KuhnGame()
    spec = SamplingPolicySpec(traverser=0, epsilon=0.5)

    def baseline(state, legal):
        return np.full(len(legal), 7.0)

    out = os_traverse(game, uniform_policy, spec, baseline, ScriptedSampler([0, 1, 1]))
    first, second = out.steps
    # unsampled slot reads the baseline; sampled slot is corrected through it
    assert second.vtilde[0] == 7.0
    assert second.vtilde[1] == pytest.approx(7.0 + (-200.0 - 7.0) / 0.5)
    assert second.node_value == pytest.approx(0.5 * 7.0 + 0.5 * second.vtilde[1])


def test_os_root_estimate_unbiased_for_any_fixed_baseline():
    game = KuhnGame()
    rng = np.random.default_rng(3)

    def random_baseline(state, legal):
        # deterministic per-history values, fixed across trajectories
        h = abs(hash(game.joint_key(state))) % 1000
        return np.asarray([((h * 31 + int(a)) % 17) - 8.0 for a in legal])

    for traverser in (0, 1):
        spec = SamplingPolicySpec(traverser, 0.5)
        truth = expectimax(game, uniform_policy, traverser)
        for baseline in (None, random_baseline):
            total = 0.0
            mass = 0.0
            for p, out in enumerate_traversals(
                lambda s: os_traverse(game, uniform_policy, spec, baseline, s)
            ):
                total += p * out.root_value
                mass += p
            assert np.isclose(mass, 1.0, atol=1e-12)
            assert np.isclose(total, truth, atol=1e-9), (traverser, baseline)


def test_oracle_baseline_removes_estimate_variance_below_the_deal():
    # chance noise cannot be corrected away, so condition on the dealt cards:
    # within one deal every estimate must be exact and therefore constant
    game = KuhnGame()
    for traverser in (0, 1):
        spec = SamplingPolicySpec(traverser, 0.5)
        baseline = OracleBaseline(game, uniform_policy, traverser)
        roots_by_deal = {}
        cells = {}
        mean_root = 0.0
        for p, out in enumerate_traversals(
            lambda s: os_traverse(game, uniform_policy, spec, baseline, s)
        ):
            roots_by_deal.setdefault(out.terminal_state.private, []).append(out.root_value)
            mean_root += p * out.root_value
            for step in out.steps:
                cells.setdefault(game.joint_key(step.state), []).append(step.vtilde.copy())
        assert len(roots_by_deal) == 6
        for roots in roots_by_deal.values():
            assert max(roots) - min(roots) < 1e-9
        for visits in cells.values():
            spread = np.ptp(np.stack(visits), axis=0)
            assert np.all(spread < 1e-9)
        assert np.isclose(mean_root, expectimax(game, uniform_policy, traverser), atol=1e-9)


def test_os_traverse_rejects_zero_probability_pick():
    game = KuhnGame()

    def deterministic(state, actor, legal):
        probs = np.zeros(len(legal))
        probs[0] = 1.0
        return probs

    spec = SamplingPolicySpec(traverser=0, epsilon=0.0)
    with pytest.raises(SamplingError):
        os_traverse(game, deterministic, spec, None, ScriptedSampler([0, 1]))


def test_os_traverse_steps_cover_both_actors():
    game = LeducGame()
    rng = np.random.default_rng(11)
    spec = SamplingPolicySpec(traverser=1, epsilon=0.5)
    seen_actors = set()
    for _ in range(20):
        out = os_traverse(game, uniform_policy, spec, None, rng)
        seen_actors.update(step.actor for step in out.steps)
        for step in out.steps:
            assert step.key.agent == step.actor
            assert len(step.vtilde) == len(step.legal)
        assert all(key.agent == 1 for key in out.values)
    assert seen_actors == {0, 1}


def test_es_traverse_explores_all_traverser_actions():
    game = KuhnGame()
    rng = np.random.default_rng(2)
    out = es_traverse(game, uniform_policy, 0, rng)
    assert out.records
    for rec in out.records:
        assert rec.key.agent == 0
        assert len(rec.values) == len(rec.legal)
        assert rec.node_value == pytest.approx(float(np.full(len(rec.legal), 1 / len(rec.legal)) @ rec.values))


def test_es_root_estimate_unbiased():
    game = KuhnGame()
    for traverser in (0, 1):
        truth = expectimax(game, uniform_policy, traverser)
        total = 0.0
        mass = 0.0
        for p, out in enumerate_traversals(
            lambda s: es_traverse(game, uniform_policy, traverser, s)
        ):
            total += p * out.root_value
            mass += p
        assert np.isclose(mass, 1.0, atol=1e-12)
        assert np.isclose(total, truth, atol=1e-9)


def test_traversals_run_on_unenumerable_game():
    game = FhpGame()
    rng = np.random.default_rng(0)
    spec = SamplingPolicySpec(traverser=0, epsilon=0.5)
    out = os_traverse(game, uniform_policy, spec, None, rng)
    assert np.isfinite(out.root_value)
    assert out.nodes_touched >= 3
    es = es_traverse(game, uniform_policy, 1, rng)
    assert np.isfinite(es.root_value)


def test_zero_baseline_is_zero():
    game = KuhnGame()
    state = game.apply(game.initial_state(), game.chance_outcomes(game.initial_state())[0])
    assert np.allclose(zero_baseline(state, (C, R)), [0.0, 0.0])
