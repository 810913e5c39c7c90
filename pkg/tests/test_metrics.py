from __future__ import annotations

import random

import pytest

from agentgauge.agents import (
    BfsPlannerAgent,
    CapacityBudget,
    GreedyPlannerAgent,
    LearningAgent,
    LookupAgent,
    Plan,
    RandomAgent,
)
from agentgauge.metrics import (
    DataBatch,
    LearningScenario,
    MetricParams,
    ScoreComponents,
    SkillTask,
    TaskBoundExceeded,
    causal_reasoning_score,
    intelligence_score,
    knowledge_score,
    measure_learning,
    planning_score,
    rank_outputs,
    skill_score,
)
from agentgauge.simulator import (
    ActionInvocation,
    GroundTruthWorld,
    apply_action,
    enumerate_invocations,
    random_episode,
)
from agentgauge.worldmodel import (
    ActionSchema,
    ModelSchema,
    WorldModel,
    canonical_world,
    empty_world,
    with_object_values,
    world_norm,
)


@pytest.fixture
def params() -> MetricParams:
    return MetricParams()


def test_metric_params_reject_zero_gamma():
    with pytest.raises(ValueError, match="gamma"):
        MetricParams(gamma=0)
    with pytest.raises(ValueError):
        MetricParams(alpha=-0.5)


def test_score_components_ranges():
    with pytest.raises(ValueError):
        ScoreComponents(knowledge=0.0, plan_quality=1.0, plan_cost=1)
    with pytest.raises(ValueError):
        ScoreComponents(knowledge=1.0, plan_quality=1.0, plan_cost=0)
    with pytest.raises(ValueError):
        ScoreComponents(knowledge=1.0, plan_quality=1.0, plan_cost=1,
                        d_knowledge=float("inf"))


def test_data_batch_needs_an_episode():
    with pytest.raises(ValueError):
        DataBatch(())


def test_knowledge_of_the_truth_itself_is_one(switches_truth, switches_world):
    assert knowledge_score(switches_world, switches_truth) == 1.0


def test_knowledge_of_empty_model_against_three_four_world():
    world = WorldModel(
        tuple(ModelSchema(f"m{i}") for i in range(3)),
        tuple(ActionSchema(f"a{i}") for i in range(4)),
        (), (),
    )
    truth = GroundTruthWorld(world, seed=1)
    assert knowledge_score(empty_world(), truth) == pytest.approx(1 / 6, abs=1e-12)


def test_random_agent_knowledge_equals_empty_world_norm(switches_truth, switches_world):
    agent = RandomAgent(seed=1)
    assert knowledge_score(agent.describe(), switches_truth) == world_norm(
        empty_world(), switches_world)


def test_planning_score_goal_reached_is_one(switches_world, switches_goal, switches_truth, params):
    plan = Plan((ActionInvocation("toggle", {"sw": "switch_1"}),
                 ActionInvocation("toggle", {"sw": "switch_2"})), cost_units=9)
    score = planning_score(plan, switches_world, switches_goal, params,
                           mode="grounded", truth=switches_truth)
    assert score.quality == 1.0
    assert score.cost == 9
    assert not score.diverged


def test_planning_score_empty_plan_at_goal(switches_world, params):
    score = planning_score(Plan(), switches_world, switches_world, params)
    assert (score.quality, score.cost) == (1.0, 1)


def test_planning_score_grounded_needs_truth(switches_world, params):
    with pytest.raises(ValueError):
        planning_score(Plan(), switches_world, switches_world, params, mode="grounded")


def test_planning_score_internal_uses_the_internal_model(switches_world, switches_goal, params):
    # a plan over an empty internal model cannot move anything
    plan = Plan((ActionInvocation("toggle", {"sw": "switch_1"}),), cost_units=2)
    score = planning_score(plan, empty_world(), switches_goal, params)
    assert score.quality == world_norm(switches_goal, empty_world())


def test_planning_score_flags_divergence(params):
    from .conftest import cyclic_world

    world = cyclic_world()
    plan = Plan((ActionInvocation("ping", {"n": "node_1"}),))
    score = planning_score(plan, world, world, params)
    assert score.diverged
    assert score.quality == 1.0  # last valid state is the start, which is the goal


def test_bfs_at_least_as_good_as_greedy_grounded(switches_world, switches_goal,
                                                 switches_truth, params):
    bfs_plan = BfsPlannerAgent(horizon=2).plan_for(switches_world, switches_goal)
    greedy_plan = GreedyPlannerAgent(horizon=2).plan_for(switches_world, switches_goal)
    bfs = planning_score(bfs_plan, switches_world, switches_goal, params,
                         mode="grounded", truth=switches_truth)
    greedy = planning_score(greedy_plan, switches_world, switches_goal, params,
                            mode="grounded", truth=switches_truth)
    assert bfs.quality >= greedy.quality


def test_skill_vacuous_threshold_is_one(switches_world, switches_goal, switches_truth):
    task = SkillTask(switches_truth, (switches_world,), switches_goal)
    outputs = enumerate_invocations(switches_world)
    agent = RandomAgent(seed=8, horizon=1)
    assert skill_score(agent, task, top_k=len(outputs)) == 1.0


def test_skill_monotone_in_top_k(switches_world, switches_goal, switches_truth):
    state = switches_world
    states = [state]
    for inv in enumerate_invocations(switches_world)[:3]:
        state = apply_action(state, inv).after
        states.append(state)
    task = SkillTask(switches_truth, tuple(states), switches_goal)
    agent = RandomAgent(seed=9, horizon=1)
    scores = [skill_score(RandomAgent(seed=9, horizon=1), task, top_k=k)
              for k in (1, 2, 4, 6)]
    assert scores == sorted(scores)


def test_skill_bound_exceeded(switches_world, switches_goal, switches_truth):
    task = SkillTask(switches_truth, (switches_world,), switches_goal, max_states=2)
    with pytest.raises(TaskBoundExceeded):
        skill_score(RandomAgent(seed=0), task, top_k=1)


def test_rank_outputs_is_exhaustive_and_ordered(switches_world, switches_goal, switches_truth):
    ranked = rank_outputs(switches_truth, switches_world, switches_goal)
    assert len(ranked) == len(enumerate_invocations(switches_world))
    norms = [
        world_norm(switches_goal, apply_action(switches_world, inv).after)
        for inv in ranked
    ]
    assert norms == sorted(norms, reverse=True)


class _InversePredictor:
    """Predicts every true change mirrored to the other side of its old value."""

    def __init__(self, truth: GroundTruthWorld):
        self.truth = truth

    def predict(self, state, invocation):
        actual = apply_action(state, invocation, self.truth.max_trigger_depth).after
        base = state.object_map()
        updates = {}
        for obj in actual.objects:
            for prop, new in obj.values.items():
                old = base[obj.id].values[prop]
                if old != new:
                    updates.setdefault(obj.id, {})[prop] = old + (old - new)
        return canonical_world(with_object_values(state, updates))


def _seven_change_probes(switches_world):
    toggled = apply_action(switches_world, ActionInvocation("toggle", {"sw": "switch_1"})).after
    desynced = with_object_values(switches_world, {"switch_1": {"on": True}})
    return [
        (switches_world, ActionInvocation("toggle", {"sw": "switch_1"})),  # 2 changes
        (toggled, ActionInvocation("toggle", {"sw": "switch_2"})),         # 2 changes
        (toggled, ActionInvocation("toggle", {"sw": "switch_1"})),         # 2 changes
        (desynced, ActionInvocation("sync_lamp", {"lm": "lamp_1", "sw": "switch_1"})),  # 1
    ]


def test_perfect_predictor_scores_total_changes(switches_world, switches_truth):
    probes = _seven_change_probes(switches_world)
    agent = BfsPlannerAgent(horizon=1)  # simulator-exact predictions
    assert causal_reasoning_score(agent, probes, switches_truth) == 7


def test_predicting_no_changes_scores_zero(switches_world, switches_truth):
    probes = _seven_change_probes(switches_world)
    agent = RandomAgent(seed=0)
    assert causal_reasoning_score(agent, probes, switches_truth) == 0


def test_inverse_predictor_scores_negative_total(battery_world):
    truth = GroundTruthWorld(battery_world, seed=2)
    drain = ActionInvocation("drain", {"r": "robot_1"})
    state = battery_world
    probes = []
    for _ in range(3):  # 10 -> 8 -> 6 -> 4: one change each, no recharge trigger
        probes.append((state, drain))
        state = apply_action(state, drain).after
    agent = _InversePredictor(truth)
    assert causal_reasoning_score(agent, probes, truth) == -3


def _scenario(truth, goal, params) -> LearningScenario:
    return LearningScenario(truth, goal, params)


def test_measure_learning_of_lookup_is_exactly_zero(switches_world, switches_goal,
                                                    switches_truth, params):
    task = SkillTask(switches_truth, (switches_world,), switches_goal)
    agent = LookupAgent(task)
    rng = random.Random(1)
    batch = DataBatch(tuple(random_episode(switches_truth, rng, 5) for _ in range(5)))
    result = measure_learning(agent, batch, _scenario(switches_truth, switches_goal, params))
    assert result == (0.0, 0.0, 0.0)


def test_measure_learning_learner_gains_knowledge(switches_goal, switches_truth, params):
    agent = LearningAgent(CapacityBudget(10 ** 6), seed=0)
    rng = random.Random(2)
    batch = DataBatch(tuple(random_episode(switches_truth, rng, 6) for _ in range(50)))
    d_knowledge, _, _ = measure_learning(
        agent, batch, _scenario(switches_truth, switches_goal, params))
    assert d_knowledge > 0


def test_measure_learning_unit_batch_is_raw_difference(switches_goal, switches_truth, params):
    rng = random.Random(3)
    episode = random_episode(switches_truth, rng, 6)
    scenario = _scenario(switches_truth, switches_goal, params)

    probe = LearningAgent(CapacityBudget(10 ** 6), seed=0)
    before = knowledge_score(probe.describe(), switches_truth, params.norm_weights)
    probe.observe(episode)
    after = knowledge_score(probe.describe(), switches_truth, params.norm_weights)

    agent = LearningAgent(CapacityBudget(10 ** 6), seed=0)
    d_knowledge, _, _ = measure_learning(agent, DataBatch((episode,)), scenario)
    assert d_knowledge == pytest.approx(after - before, abs=1e-15)


# ---------------------------------------------------------------------------
# the weighted aggregate


def _components(knowledge=1.0, plan_quality=1.0, plan_cost=1,
                d_knowledge=0.0, d_planning=0.0, d_cost=0.0) -> ScoreComponents:
    return ScoreComponents(knowledge, plan_quality, plan_cost,
                           d_knowledge, d_planning, d_cost)


def test_alpha_only_returns_knowledge():
    params = MetricParams(alpha=1, beta=0, gamma=1, delta=0, epsilon=0, zeta=0)
    assert intelligence_score(_components(knowledge=0.8), params) == pytest.approx(0.8, abs=1e-12)


def test_all_ones_unit_components_gives_two():
    params = MetricParams(alpha=1, beta=1, gamma=1, delta=1, epsilon=1, zeta=1)
    assert intelligence_score(_components(), params) == pytest.approx(2.0, abs=1e-12)


def test_zeta_term_carries_a_minus_sign():
    params = MetricParams(alpha=0, beta=0, gamma=1, delta=0, epsilon=0, zeta=1)
    assert intelligence_score(_components(d_cost=2.0), params) == pytest.approx(-2.0, abs=1e-12)


def test_component_isolation_for_each_weight():
    c = _components(knowledge=0.7, plan_quality=0.6, plan_cost=3,
                    d_knowledge=0.11, d_planning=-0.2, d_cost=0.5)
    zero = dict(alpha=0, beta=0, gamma=1, delta=0, epsilon=0, zeta=0)
    assert intelligence_score(c, MetricParams(**{**zero, "alpha": 1})) == c.knowledge
    assert intelligence_score(c, MetricParams(**{**zero, "beta": 1})) == c.plan_quality / c.plan_cost
    assert intelligence_score(c, MetricParams(**{**zero, "beta": 1, "gamma": 2})) == (
        c.plan_quality / (2 * c.plan_cost))
    assert intelligence_score(c, MetricParams(**{**zero, "delta": 1})) == c.d_knowledge
    assert intelligence_score(c, MetricParams(**{**zero, "epsilon": 1})) == c.d_planning
    assert intelligence_score(c, MetricParams(**{**zero, "zeta": 1})) == -c.d_cost


def test_linearity_doubling_beta_doubles_the_planning_term():
    c = _components(knowledge=0.3, plan_quality=0.9, plan_cost=7)
    base = MetricParams(alpha=0, beta=1, gamma=1, delta=0, epsilon=0, zeta=0)
    doubled = MetricParams(alpha=0, beta=2, gamma=1, delta=0, epsilon=0, zeta=0)
    assert intelligence_score(c, doubled) == pytest.approx(
        2 * intelligence_score(c, base), abs=1e-15)


def test_speed_accuracy_tradeoff_orderings_exist():
    fast_inexact = _components(knowledge=0.5, plan_quality=0.9, plan_cost=1)
    slow_exact = _components(knowledge=0.9, plan_quality=1.0, plan_cost=100)

    eager = MetricParams(alpha=1, beta=1, gamma=1, delta=0, epsilon=0, zeta=0)
    patient = MetricParams(alpha=1, beta=1, gamma=100, delta=0, epsilon=0, zeta=0)

    assert intelligence_score(fast_inexact, eager) > intelligence_score(slow_exact, eager)
    assert intelligence_score(fast_inexact, patient) < intelligence_score(slow_exact, patient)
