import pytest

from conftest import brute_force_ok
from cyclicdp import (
    InfeasibleRuleError,
    ParallelismConfig,
    Scheme,
    build_cdp_timeline,
    build_dp_timeline,
    generic_rule,
    min_delay_rule,
    validate_timeline,
)
from cyclicdp.profiles import CostWeights
from cyclicdp.schedule import TaskKind


def cfg_for(scheme, n, steps=2, batch=1, weights=None):
    kw = {}
    if weights:
        kw["cost_weights"] = CostWeights(*weights)
    return ParallelismConfig(
        scheme=scheme, n=n, micro_batch_size=batch, training_steps=steps, **kw
    )


def task_at(tl, kind, i, j, t):
    return tl.task_index()[(kind, i, j, t)]


class TestDpTimeline:
    def test_step_occupies_2n_steps(self):
        tl = build_dp_timeline(cfg_for(Scheme.MULTI_GPU_DP, 3))
        step1 = [t for t in tl.tasks if t.training_step == 1]
        assert min(t.start for t in step1) == 1
        assert max(t.end for t in step1) == 6
        assert task_at(tl, TaskKind.BACKWARD, 2, 1, 1).start == 6

    def test_n1_forward_then_backward(self):
        tl = build_dp_timeline(cfg_for(Scheme.SINGLE_GPU_DP, 1))
        assert task_at(tl, TaskKind.FORWARD, 1, 1, 1).start == 1
        assert task_at(tl, TaskKind.BACKWARD, 1, 1, 1).start == 2

    def test_two_steps_horizon_and_versions(self):
        tl = build_dp_timeline(cfg_for(Scheme.MULTI_GPU_DP, 4, steps=2))
        assert tl.horizon == 16
        assert all(
            t.param_version == 2 for t in tl.tasks if t.training_step == 2
        )
        assert brute_force_ok(tl)
        assert validate_timeline(tl).ok

    def test_rejects_other_schemes(self):
        with pytest.raises(ValueError):
            build_dp_timeline(cfg_for(Scheme.PP, 2))


class TestCdpTimeline:
    def test_stagger_positions(self):
        tl = build_cdp_timeline(cfg_for(Scheme.SINGLE_GPU_CDP, 3), "cdp-v1")
        assert task_at(tl, TaskKind.FORWARD, 1, 1, 1).start == 1
        assert task_at(tl, TaskKind.FORWARD, 3, 1, 1).start == 5

    def test_stagger_is_two_mod_cycle(self):
        for n in range(2, 17):
            tl = build_cdp_timeline(cfg_for(Scheme.MULTI_GPU_CDP, n), "cdp-v2")
            starts = {
                i: min(t.start for t in tl.tasks if t.micro_batch == i)
                for i in range(1, n + 1)
            }
            for i in range(2, n + 1):
                assert (starts[i] - starts[i - 1]) % (2 * n) == 2

    def test_n1_degenerates_to_dp(self):
        v1 = build_cdp_timeline(cfg_for(Scheme.SINGLE_GPU_CDP, 1), "cdp-v1")
        v2 = build_cdp_timeline(cfg_for(Scheme.SINGLE_GPU_CDP, 1), "cdp-v2")
        dp = build_dp_timeline(cfg_for(Scheme.SINGLE_GPU_DP, 1))
        assert [(t.start, t.kind) for t in v1.tasks] == [
            (t.start, t.kind) for t in dp.tasks
        ]
        assert all(t.param_version == t.training_step - 1 for t in v1.tasks)
        assert all(t.param_version == t.training_step for t in v2.tasks)

    def test_version_matrix_v2(self):
        n = 4
        tl = build_cdp_timeline(cfg_for(Scheme.MULTI_GPU_CDP, n), "cdp-v2")
        rule = min_delay_rule(n)
        for t in tl.tasks:
            assert t.param_version == rule.version_read(
                t.micro_batch, t.stage, t.training_step
            )
        fresh = {
            j
            for t in tl.tasks
            if t.micro_batch == 2 and t.param_version == t.training_step
            for j in [t.stage]
        }
        assert fresh == {3, 4}

    def test_warmup_reads_version_zero(self):
        tl = build_cdp_timeline(cfg_for(Scheme.MULTI_GPU_CDP, 3), "cdp-v1")
        assert all(
            t.param_version == 0 for t in tl.tasks if t.training_step == 1
        )

    def test_steady_state_no_idle_slots(self):
        for n in (1, 2, 5, 16):
            tl = build_cdp_timeline(cfg_for(Scheme.MULTI_GPU_CDP, n, steps=3), "cdp-v2")
            lo, hi = tl.steady_window()
            for step in range(lo, hi + 1):
                for d in tl.devices:
                    assert (d.id, step) in tl.slots

    def test_infeasible_generic_rule_rejected(self):
        cfg = cfg_for(Scheme.MULTI_GPU_CDP, 3)
        table = [[True] * 3 for _ in range(3)]
        with pytest.raises(InfeasibleRuleError) as err:
            build_cdp_timeline(cfg, generic_rule(table))
        assert (err.value.micro_batch, err.value.stage) == (1, 1)

    def test_feasible_generic_rule_accepted(self):
        table = [
            [False, False, True],
            [False, True, True],
            [False, False, False],
        ]
        tl = build_cdp_timeline(cfg_for(Scheme.MULTI_GPU_CDP, 3), generic_rule(table))
        assert validate_timeline(tl).ok
        assert brute_force_ok(tl)

    def test_rule_size_mismatch(self):
        with pytest.raises(ValueError):
            build_cdp_timeline(cfg_for(Scheme.MULTI_GPU_CDP, 3), min_delay_rule(4))

    def test_v2_reads_are_always_freshest_available(self):
        # Minimal-delay semantics: no task reads an old version while a newer
        # one already exists, so no second parameter copy is ever needed.
        n = 5
        tl = build_cdp_timeline(cfg_for(Scheme.MULTI_GPU_CDP, n, steps=3), "cdp-v2")
        ready = {}
        for t in tl.tasks:
            if t.kind is TaskKind.BACKWARD:
                key = (t.stage, t.training_step + 1)
                ready[key] = max(ready.get(key, 0), t.end)

        def latest(stage, when):
            best = 1
            for (s, v), avail in ready.items():
                if s == stage and avail < when:
                    best = max(best, v)
            return best

        for t in tl.tasks:
            assert max(t.param_version, 1) == latest(t.stage, t.start)

        v1 = build_cdp_timeline(cfg_for(Scheme.MULTI_GPU_CDP, n, steps=3), "cdp-v1")
        stale_while_fresh_exists = [
            t
            for t in v1.tasks
            if max(t.param_version, 1) < latest(t.stage, t.start)
        ]
        assert stale_while_fresh_exists


class TestCostWeights:
    def test_dp_span_scales_with_weights(self):
        tl = build_dp_timeline(cfg_for(Scheme.MULTI_GPU_DP, 3, weights=(2, 3)))
        step1 = [t for t in tl.tasks if t.training_step == 1]
        assert max(t.end for t in step1) == 3 * (2 + 3)
        assert validate_timeline(tl).ok

    def test_cdp_stagger_twice_forward_cost(self):
        tl = build_cdp_timeline(
            cfg_for(Scheme.MULTI_GPU_CDP, 3, weights=(2, 2)), "cdp-v1"
        )
        starts = {
            i: min(t.start for t in tl.tasks if t.micro_batch == i) for i in (1, 2, 3)
        }
        assert starts[2] - starts[1] == 4
        assert validate_timeline(tl).ok
