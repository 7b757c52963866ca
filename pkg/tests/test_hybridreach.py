"""Hybrid automaton engine tests: mode flows, guards, jumps, simulation."""

import math

import numpy as np
import pytest

from reachflow.hybridreach import (
    DELAYED,
    INCOMPLETE,
    RANDOM,
    URGENT,
    HybridAutomaton,
    HybridFlowpipe,
    Jump,
    Mode,
    Transition,
    guard_cross,
    hybrid_reach,
    hybrid_simulate,
    mode_reach,
)
from reachflow.linreach import (
    BAD_REACHED,
    COMPLETED,
    CONTINUOUS,
    DISCRETE,
    HORIZON,
    ReachConfig,
)
from reachflow.setgeom import Box, HPolytope, axis_bounds, member

from oracles import euler_interval_1d


def le(bound):  # invariant/guard helper: x <= bound
    return HPolytope([[1.0]], [bound])


def ge(bound):  # x >= bound
    return HPolytope([[-1.0]], [-bound])


def thermostat(hot_limit=22.0):
    """Heater with relay switching: heat dx/dt = 30 - x, cool dx/dt = 10 - x.

    ``hot_limit`` > 22 widens the heat invariant into a band [22, hot_limit]
    where jumping is optional, which separates the jump policies.
    """
    heat = Mode(
        "heat",
        [[-1.0]],
        b=[[1.0]],
        input_set=Box([30.0], [30.0]),
        invariant=le(hot_limit),
    )
    cool = Mode(
        "cool",
        [[-1.0]],
        b=[[1.0]],
        input_set=Box([10.0], [10.0]),
        invariant=ge(18.0),
    )
    to_cool = Transition("heat", "cool", guard=ge(22.0))
    to_heat = Transition("cool", "heat", guard=le(18.0))
    return HybridAutomaton((heat, cool), (to_cool, to_heat))


def cfg(horizon, step=0.01, **kw):
    return ReachConfig(horizon=horizon, step=step, **kw)


class TestAutomatonValidation:
    def test_duplicate_mode_names(self):
        m = Mode("a", [[1.0]])
        with pytest.raises(ValueError, match="unique"):
            HybridAutomaton((m, Mode("a", [[2.0]])), ())

    def test_unknown_transition_endpoint(self):
        m = Mode("a", [[1.0]])
        tr = Transition("a", "ghost", guard=le(1.0))
        with pytest.raises(ValueError, match="ghost"):
            HybridAutomaton((m,), (tr,))

    def test_dimension_mismatch_across_modes(self):
        with pytest.raises(ValueError, match="dimension"):
            HybridAutomaton((Mode("a", [[1.0]]), Mode("b", np.eye(2))), ())

    def test_guard_must_be_h_form(self):
        m = Mode("a", [[1.0]])
        from reachflow.setgeom import VPolytope

        with pytest.raises(ValueError, match="Box or HPolytope"):
            Transition("a", "a", guard=VPolytope([[0.0], [1.0]]))

    def test_mode_lookup(self):
        auto = thermostat()
        assert auto.mode("heat").name == "heat"
        with pytest.raises(KeyError):
            auto.mode("tepid")
        assert [t.target for t in auto.outgoing("heat")] == ["cool"]


class TestModeReach:
    def test_invariant_clips_segments(self):
        auto = thermostat()
        segs, hits, status, step = mode_reach(
            auto.mode("heat"),
            Box([19.0], [20.0]),
            cfg(2.0),
            200,
            auto.outgoing("heat"),
        )
        for seg in segs:
            lo, hi = axis_bounds(seg.set_rep)
            assert hi[0] <= 22.0 + 1e-9
        # the flow escapes through the guard in finite time
        assert status == COMPLETED
        # lower end crosses 22 at t = ln((30-19)/(30-22)) ~ 0.318
        assert 25 <= step <= 40

    def test_guard_hits_start_near_crossing_time(self):
        auto = thermostat()
        _, hits, _, _ = mode_reach(
            auto.mode("heat"),
            Box([19.0], [20.0]),
            cfg(2.0),
            200,
            auto.outgoing("heat"),
        )
        ks = [k for k, _ in hits[0]]
        assert ks == list(range(ks[0], ks[0] + len(ks)))  # one contiguous run
        # upper end crosses 22 at t = ln((30-20)/(30-22)) ~ 0.223
        assert 19 <= ks[0] <= 25
        for _, piece in hits[0]:
            lo, hi = axis_bounds(piece)
            assert lo[0] == pytest.approx(22.0, abs=1e-9)
            assert hi[0] == pytest.approx(22.0, abs=1e-9)

    def test_no_invariant_runs_to_horizon(self):
        mode = Mode("free", [[-1.0]], b=[[1.0]], input_set=Box([30.0], [30.0]))
        segs, _, status, _ = mode_reach(
            mode, Box([19.0], [20.0]), cfg(0.5), 50, (), CONTINUOUS
        )
        assert status == HORIZON
        assert len(segs) == 51

    def test_heating_flow_matches_interval_recurrence(self):
        # independent oracle: exact scalar affine interval recurrence
        r = 0.01
        mode = Mode("free", [[-1.0]], b=[[1.0]], input_set=Box([30.0], [30.0]))
        segs, _, _, _ = mode_reach(
            mode,
            Box([19.0], [20.0]),
            cfg(0.5, step=r, bloat_policy="error_ball"),
            50,
            (),
            CONTINUOUS,
        )
        alpha = math.exp(-r)
        drift = 30.0 * (1.0 - alpha)
        want = euler_interval_1d(19.0, 20.0, alpha, drift, r, 50)
        phi = math.exp(r) - 1.0 - r
        pad = phi * 20.0 + phi * 30.0  # error-ball radius bound per step
        for k, seg in enumerate(segs):
            lo, hi = axis_bounds(seg.set_rep)
            assert lo[0] <= want[k][0] + 1e-9
            assert hi[0] >= want[k][1] - 1e-9
            assert lo[0] >= want[k][0] - (k + 1) * 3 * pad - 1e-9
            assert hi[0] <= want[k][1] + (k + 1) * 3 * pad + 1e-9

    def test_bad_set_stops_the_flow(self):
        auto = thermostat()
        segs, _, status, step = mode_reach(
            auto.mode("heat"),
            Box([19.0], [20.0]),
            cfg(2.0),
            200,
            (),
            bad_set=ge(21.0),
        )
        assert status == BAD_REACHED
        assert step == len(segs) - 1
        lo, hi = axis_bounds(segs[-1].set_rep)
        assert hi[0] >= 21.0 - 1e-9


class TestGuardCross:
    def test_contiguous_pieces_merge_into_one_cluster(self):
        tr = Transition("a", "b", guard=ge(22.0))
        hits = [
            (3, Box([22.0], [22.5])),
            (4, Box([22.3], [23.5])),
            (7, Box([24.0], [24.5])),
        ]
        out = guard_cross(hits, tr)
        assert len(out) == 2
        k_lo, k_hi, pre, post = out[0]
        assert (k_lo, k_hi) == (3, 4)
        lo, hi = axis_bounds(pre)
        assert lo[0] == pytest.approx(22.0, abs=1e-12)
        assert hi[0] == pytest.approx(23.5, abs=1e-12)
        assert (out[1][0], out[1][1]) == (7, 7)

    def test_reset_is_applied_to_the_cluster(self):
        tr = Transition(
            "a", "b", guard=ge(0.0), reset_matrix=[[0.5]], reset_offset=[1.0]
        )
        out = guard_cross([(0, Box([2.0], [4.0]))], tr)
        _, _, _, post = out[0]
        lo, hi = axis_bounds(post)
        assert lo[0] == pytest.approx(2.0, abs=1e-12)
        assert hi[0] == pytest.approx(3.0, abs=1e-12)


class TestHybridReach:
    def test_thermostat_stays_in_band(self):
        auto = thermostat()
        pipe = hybrid_reach(auto, "heat", Box([19.0], [20.0]), cfg(2.0))
        assert pipe.status == COMPLETED
        assert pipe.time_step == 0.01
        assert len(pipe.flows) >= 3  # heat, cool, heat again at least
        for mode_name, seg in pipe.all_segments():
            lo, hi = axis_bounds(seg.set_rep)
            assert lo[0] >= 17.5
            assert hi[0] <= 22.5

    def test_jump_bookkeeping_is_consistent(self):
        auto = thermostat()
        pipe = hybrid_reach(auto, "heat", Box([19.0], [20.0]), cfg(2.0))
        assert pipe.jumps
        for j in pipe.jumps:
            src = pipe.flows[j.from_flow]
            assert j.transition.source == src.mode
            if j.to_flow is not None:
                dst = pipe.flows[j.to_flow]
                assert dst.mode == j.transition.target
                assert dst.depth == src.depth + 1
                assert dst.entry_step == src.entry_step + j.step_lo
                entry_seg = dst.segments[0]
                lo_e, hi_e = axis_bounds(entry_seg.set_rep)
                lo_p, hi_p = axis_bounds(j.post)
                # the successor's first segment covers the jump target
                assert lo_e <= lo_p + 1e-9 and hi_e >= hi_p - 1e-9

    def test_longer_horizon_prunes_repeated_entries(self):
        auto = thermostat()
        pipe = hybrid_reach(auto, "heat", Box([19.0], [20.0]), cfg(4.0))
        assert pipe.status == COMPLETED
        assert any(j.pruned for j in pipe.jumps)

    def test_depth_overflow_is_incomplete(self):
        auto = thermostat()
        pipe = hybrid_reach(
            auto, "heat", Box([19.0], [20.0]), cfg(2.0), jump_depth=1
        )
        assert pipe.status == INCOMPLETE
        assert any(j.to_flow is None and not j.pruned for j in pipe.jumps)

    def test_bad_set_aborts(self):
        auto = thermostat()
        pipe = hybrid_reach(
            auto,
            "heat",
            Box([19.0], [20.0]),
            cfg(2.0, mode="bad_set", bad_set=ge(21.0)),
        )
        assert pipe.status == BAD_REACHED
        assert pipe.bad_flow == 0
        assert pipe.flows[0].status == BAD_REACHED

    def test_bad_set_unreachable_completes(self):
        auto = thermostat()
        pipe = hybrid_reach(
            auto,
            "heat",
            Box([19.0], [20.0]),
            cfg(2.0, mode="bad_set", bad_set=ge(25.0)),
        )
        assert pipe.status == COMPLETED
        assert pipe.bad_flow is None

    def test_discrete_automaton_counter(self):
        # x+ = x + 1 while x <= 5; at x >= 3 may move to a frozen mode
        count = Mode(
            "count",
            [[1.0]],
            b=[[1.0]],
            input_set=Box([1.0], [1.0]),
            invariant=le(5.0),
        )
        frozen = Mode("frozen", [[1.0]])
        tr = Transition("count", "frozen", guard=ge(3.0))
        auto = HybridAutomaton((count, frozen), (tr,), time_kind=DISCRETE)
        pipe = hybrid_reach(auto, "count", Box([0.0], [0.0]), ReachConfig(horizon=8))
        assert pipe.status == COMPLETED
        assert pipe.time_step is None
        count_flow = pipe.flows[0]
        assert count_flow.status == COMPLETED  # leaves x <= 5 after six steps
        assert len(count_flow.segments) == 6  # x = 0..5
        lo, hi = axis_bounds(count_flow.segments[5].set_rep)
        assert lo[0] == pytest.approx(5.0, abs=1e-9)
        # one cluster for the contiguous guard run x = 3, 4, 5
        (jump,) = pipe.jumps
        assert (jump.step_lo, jump.step_hi) == (3, 5)
        lo, hi = axis_bounds(jump.post)
        assert lo[0] == pytest.approx(3.0, abs=1e-9)
        assert hi[0] == pytest.approx(5.0, abs=1e-9)

    def test_requires_step_for_continuous(self):
        auto = thermostat()
        with pytest.raises(ValueError, match="time step"):
            hybrid_reach(auto, "heat", Box([19.0], [20.0]), ReachConfig(horizon=2.0))


class TestHybridSimulate:
    def test_deterministic_under_seed(self):
        auto = thermostat()
        a = hybrid_simulate(
            auto, "heat", [19.5], 2.0, step=0.01, rng=np.random.default_rng(42)
        )
        b = hybrid_simulate(
            auto, "heat", [19.5], 2.0, step=0.01, rng=np.random.default_rng(42)
        )
        np.testing.assert_array_equal(a.states, b.states)
        assert a.modes == b.modes

    def test_trace_respects_invariants_and_band(self):
        auto = thermostat()
        rng = np.random.default_rng(1)
        for _ in range(20):
            x0 = rng.uniform(19.0, 20.0)
            tr = hybrid_simulate(auto, "heat", [x0], 2.0, step=0.01, rng=rng)
            assert not tr.truncated
            assert tr.states.min() >= 18.0 - 1e-9
            assert tr.states.max() <= 22.0 + 1e-9
            assert tr.times[-1] == pytest.approx(2.0, abs=1e-9)

    def test_modes_switch_along_the_trace(self):
        auto = thermostat()
        tr = hybrid_simulate(
            auto, "heat", [19.5], 2.0, step=0.01, rng=np.random.default_rng(3)
        )
        assert "cool" in tr.modes and "heat" in tr.modes

    def test_policies_order_the_switching_level(self):
        # widen the heat invariant to [.., 23]: urgent leaves near 22,
        # delayed rides the flow up to the forced crossing at 23
        auto = thermostat(hot_limit=23.0)
        urgent = hybrid_simulate(
            auto, "heat", [19.5], 2.0, step=0.01,
            rng=np.random.default_rng(7), jump_policy=URGENT,
        )
        delayed = hybrid_simulate(
            auto, "heat", [19.5], 2.0, step=0.01,
            rng=np.random.default_rng(7), jump_policy=DELAYED,
        )
        assert urgent.states.max() <= 22.2
        assert delayed.states.max() == pytest.approx(23.0, abs=1e-6)

    def test_boundary_clamp_lands_on_the_guard(self):
        auto = thermostat()
        tr = hybrid_simulate(
            auto, "heat", [19.5], 2.0, step=0.01,
            rng=np.random.default_rng(9), jump_policy=DELAYED,
        )
        switches = [
            i
            for i in range(1, len(tr.modes))
            if tr.modes[i] != tr.modes[i - 1]
        ]
        assert switches
        for i in switches:
            x = tr.states[i][0]
            assert x == pytest.approx(22.0, abs=1e-6) or x == pytest.approx(
                18.0, abs=1e-6
            )

    def test_truncates_when_stuck(self):
        # no way out of the invariant: the trace must clamp and stop
        stuck = Mode(
            "stuck",
            [[-1.0]],
            b=[[1.0]],
            input_set=Box([30.0], [30.0]),
            invariant=le(22.0),
        )
        auto = HybridAutomaton((stuck,), ())
        tr = hybrid_simulate(
            auto, "stuck", [19.5], 5.0, step=0.01, rng=np.random.default_rng(0)
        )
        assert tr.truncated
        assert tr.states[-1][0] == pytest.approx(22.0, abs=1e-6)

    def test_rejects_bad_start(self):
        auto = thermostat()
        with pytest.raises(ValueError, match="invariant"):
            hybrid_simulate(
                auto, "heat", [25.0], 1.0, step=0.01, rng=np.random.default_rng(0)
            )

    def test_simulation_stays_inside_the_flowpipe(self):
        # dual route: pointwise exact flows against the set recurrence
        auto = thermostat()
        pipe = hybrid_reach(auto, "heat", Box([19.0], [20.0]), cfg(2.0))
        by_mode = {}
        for mode_name, seg in pipe.all_segments():
            by_mode.setdefault(mode_name, []).append(seg.set_rep)
        rng = np.random.default_rng(11)
        for _ in range(25):
            x0 = rng.uniform(19.0, 20.0)
            trace = hybrid_simulate(auto, "heat", [x0], 2.0, step=0.01, rng=rng)
            assert not trace.truncated
            for x, m in zip(trace.states, trace.modes):
                assert any(member(s, x) for s in by_mode[m]), (m, x)
