import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teamsched import (
    DisaggregatedProfile,
    GameInstance,
    InfeasibleError,
    SchedulerPopulation,
    SolveSettings,
    ValidationError,
    equilibrium_residuals,
    eval_delay,
    grid_search_optimum,
    solve_fully_selfish,
    solve_social_optimum,
    solve_team_equilibrium,
    solve_wardrop,
    system_cost,
    team_cost_linear,
)


def attacked_delays(instance, loads):
    return [eval_delay(instance.delays[i], loads[i], instance.attack_bonus(i + 1))
            for i in range(instance.n)]


class TestWardrop:
    def test_two_servers_attacked(self):
        inst = GameInstance.linear(2, 1.0)
        y = solve_wardrop(inst, {1, 2}, 2.0)
        assert y == pytest.approx([0.5, 1.5], abs=1e-9)

    @pytest.mark.parametrize("n", [2, 3, 5])
    def test_symmetric_no_attack(self, n):
        inst = GameInstance.linear(n)
        y = solve_wardrop(inst, set(range(1, n + 1)), float(n))
        assert y == pytest.approx([1.0] * n, abs=1e-9)

    def test_attacked_server_abandoned(self):
        inst = GameInstance.linear(3, 6.0)
        y = solve_wardrop(inst, {1, 2, 3}, 3.0)
        assert y == pytest.approx([0.0, 1.5, 1.5], abs=1e-9)
        # abandonment is justified: attacked delay at zero load >= common level
        assert eval_delay(inst.delays[0], 0.0, 6.0) >= 1.5

    def test_empty_access_with_mass(self):
        inst = GameInstance.linear(2)
        with pytest.raises(InfeasibleError):
            solve_wardrop(inst, set(), 1.0)

    def test_zero_mass(self):
        inst = GameInstance.linear(2, 1.0)
        assert solve_wardrop(inst, {1, 2}, 0.0) == [0.0, 0.0]

    def test_constant_delays_split(self):
        inst = GameInstance.identical(2, (3.0,))
        y = solve_wardrop(inst, {1, 2}, 2.0)
        assert y == pytest.approx([1.0, 1.0], abs=1e-9)

    @given(data=st.data())
    @settings(max_examples=80, deadline=None)
    def test_used_servers_have_minimal_delay(self, data):
        n = data.draw(st.integers(2, 5))
        coeffs = tuple(
            (data.draw(st.floats(0.0, 2.0)),
             data.draw(st.floats(0.1, 3.0)),
             data.draw(st.floats(0.0, 2.0)))
            for _ in range(n)
        )
        alpha = data.draw(st.floats(0.0, 5.0))
        inst = GameInstance(n, coeffs, 1, alpha)
        access = data.draw(st.sets(st.sampled_from(range(1, n + 1)), min_size=1))
        mass = data.draw(st.floats(0.1, 4.0))
        background = [data.draw(st.floats(0.0, 2.0)) for _ in range(n)]

        y = solve_wardrop(inst, access, mass, background)
        assert math.fsum(y) == pytest.approx(mass, abs=1e-12)
        loads = [background[i] + y[i] for i in range(n)]
        delays = attacked_delays(inst, loads)
        best = min(delays[i - 1] for i in access)
        for i in access:
            if y[i - 1] > 1e-9:
                assert delays[i - 1] <= best + 2e-10


class TestSocialOptimum:
    def test_two_servers_attacked(self):
        inst = GameInstance.linear(2, 1.0)
        y = solve_social_optimum(inst, {1, 2}, 2.0)
        assert y == pytest.approx([0.75, 1.25], abs=1e-9)

    def test_three_servers_attacked(self):
        inst = GameInstance.linear(3, 1.0)
        y = solve_social_optimum(inst, {1, 2, 3}, 3.0)
        assert y == pytest.approx([2 / 3, 7 / 6, 7 / 6], abs=1e-9)

    @pytest.mark.parametrize("n", [2, 4])
    def test_symmetric_no_attack(self, n):
        inst = GameInstance.linear(n)
        y = solve_social_optimum(inst, set(range(1, n + 1)), float(n))
        assert y == pytest.approx([1.0] * n, abs=1e-9)

    @pytest.mark.parametrize("coeffs,alpha", [
        ((0.0, 1.0), 0.7),
        ((0.0, 1.0), 2.0),
        ((0.0, 1.0, 1.0), 1.0),
        ((0.5, 0.3, 0.0, 0.2), 1.5),
    ])
    @pytest.mark.parametrize("n", [2, 3])
    def test_matches_lattice_search(self, n, coeffs, alpha):
        inst = GameInstance.identical(n, coeffs, attack_strength=alpha)
        y = solve_social_optimum(inst, set(range(1, n + 1)), float(n))
        _, lattice_cost = grid_search_optimum(inst, 1e-3)
        assert inst.cost(y) <= lattice_cost + 1e-5


class TestTeamEquilibrium:
    def test_high_penetration_is_optimal(self):
        inst = GameInstance.linear(2, 1.0)
        pop = SchedulerPopulation.full_access(2, 1.0)
        rep = solve_team_equilibrium(inst, pop)
        assert rep.converged
        assert rep.aggregate.loads == pytest.approx((0.75, 1.25), abs=1e-6)
        assert rep.cost == pytest.approx(1.4375, abs=1e-8)

    def test_low_penetration_is_selfish(self):
        inst = GameInstance.linear(2, 1.0)
        pop = SchedulerPopulation.full_access(2, 0.25)
        rep = solve_team_equilibrium(inst, pop)
        assert rep.converged
        assert rep.aggregate.loads == pytest.approx((0.5, 1.5), abs=1e-6)
        assert rep.cost == pytest.approx(1.5, abs=1e-8)

    def test_constrained_access_nullifies_machines(self):
        inst = GameInstance.linear(3, 1.0)
        pop = SchedulerPopulation.for_instance(3, ((2.0, (2, 3)),), (1, 2))
        rep = solve_team_equilibrium(inst, pop)
        assert rep.converged
        assert rep.aggregate.loads == pytest.approx((1 / 3, 4 / 3, 4 / 3), abs=1e-6)
        assert rep.cost == pytest.approx(4 / 3, abs=1e-8)

    def test_report_cost_matches_aggregate(self):
        inst = GameInstance.linear(3, 0.8)
        pop = SchedulerPopulation.full_access(3, 1.2)
        rep = solve_team_equilibrium(inst, pop)
        assert abs(rep.cost - system_cost(inst, rep.aggregate)) <= 1e-12

    def test_zero_machine_mass_matches_wardrop(self):
        inst = GameInstance.linear(3, 1.3)
        pop = SchedulerPopulation.for_instance(3, ())
        rep = solve_team_equilibrium(inst, pop)
        y = solve_wardrop(inst, {1, 2, 3}, 3.0)
        assert rep.converged
        assert abs(rep.cost - inst.cost(y)) <= 1e-8

    def test_zero_selfish_mass_matches_social_optimum(self):
        inst = GameInstance.linear(3, 1.3)
        pop = SchedulerPopulation.full_access(3, 3.0)
        rep = solve_team_equilibrium(inst, pop)
        y = solve_social_optimum(inst, {1, 2, 3}, 3.0)
        assert rep.converged
        assert abs(rep.cost - inst.cost(y)) <= 1e-8

    def test_cost_nonincreasing_in_machine_mass(self):
        inst = GameInstance.linear(2, 1.0)
        costs = []
        for i in range(21):
            pop = SchedulerPopulation.full_access(2, 2.0 * i / 20)
            rep = solve_team_equilibrium(inst, pop)
            assert rep.converged
            costs.append(rep.cost)
        assert all(b <= a + 1e-8 for a, b in zip(costs, costs[1:]))

    def test_unattacked_servers_balance(self):
        inst = GameInstance.linear(4, 1.2)
        pop = SchedulerPopulation.full_access(4, 1.5)
        rep = solve_team_equilibrium(inst, pop)
        assert rep.converged
        others = rep.aggregate.loads[1:]
        assert max(others) - min(others) <= 1e-7

    def test_multiple_machines_same_access_split_proportionally(self):
        inst = GameInstance.linear(2, 1.0)
        pop = SchedulerPopulation.full_access(2, 1.0, machines=4)
        rep = solve_team_equilibrium(inst, pop)
        assert rep.converged
        assert rep.cost == pytest.approx(1.4375, abs=1e-8)
        blocks = rep.profile.per_machine
        for block in blocks[1:]:
            assert block == pytest.approx(blocks[0], abs=1e-12)

    def test_heterogeneous_access_groups(self):
        inst = GameInstance.linear(3, 0.5)
        pop = SchedulerPopulation.for_instance(3, ((1.0, (1, 2)), (1.0, (2, 3))), None)
        rep = solve_team_equilibrium(inst, pop)
        assert rep.converged
        s_res, m_res = equilibrium_residuals(inst, pop, rep.profile)
        assert max(s_res, m_res) <= 1e-10

    def test_initial_profile_dimension_check(self):
        inst = GameInstance.linear(2, 1.0)
        pop = SchedulerPopulation.full_access(2, 1.0)
        bad = DisaggregatedProfile((1.0, 1.0), ())
        with pytest.raises(ValidationError):
            solve_team_equilibrium(inst, pop, initial=bad)

    def test_nonlinear_delays_converge(self):
        inst = GameInstance.identical(3, (0.0, 1.0, 1.0), attack_strength=1.0)
        pop = SchedulerPopulation.full_access(3, 1.0)
        rep = solve_team_equilibrium(inst, pop)
        assert rep.converged
        assert rep.selfish_residual <= 1e-10
        assert rep.machine_residual <= 1e-10

    def test_non_convergence_reported_not_raised(self):
        inst = GameInstance.linear(2, 1.0)
        pop = SchedulerPopulation.full_access(2, 1.0)
        rep = solve_team_equilibrium(inst, pop,
                                     SolveSettings(max_outer_iterations=1))
        assert not rep.converged
        assert rep.iterations == 1

    def test_settings_validation(self):
        with pytest.raises(ValueError):
            SolveSettings(tolerance=0.0)
        with pytest.raises(ValueError):
            SolveSettings(damping=0.0)
        with pytest.raises(ValueError):
            SolveSettings(damping=1.5)

    def test_blocking_violations_raise(self):
        inst = GameInstance.linear(2, 1.0)
        pop = SchedulerPopulation.for_instance(2, ((2.5, None),))
        with pytest.raises(ValidationError):
            solve_team_equilibrium(inst, pop)


class TestResiduals:
    def test_balanced_profile_no_attack(self):
        inst = GameInstance.linear(2)
        pop = SchedulerPopulation.full_access(2, 1.0)
        profile = DisaggregatedProfile((0.5, 0.5), ((0.5, 0.5),))
        assert equilibrium_residuals(inst, pop, profile) == (0.0, 0.0)

    def test_certifies_known_equilibrium(self):
        # selfish all on server 2, machine holding (0.75, 0.25): wardrop gap
        # 1.75 - 1.25 >= 0 unused, machine marginal costs equalized
        inst = GameInstance.linear(2, 1.0)
        pop = SchedulerPopulation.full_access(2, 1.0)
        profile = DisaggregatedProfile((0.0, 1.0), ((0.75, 0.25),))
        s_res, m_res = equilibrium_residuals(inst, pop, profile)
        assert s_res <= 1e-9
        assert m_res <= 1e-9

    def test_balanced_profile_under_attack_has_selfish_gap(self):
        inst = GameInstance.linear(2, 1.0)
        pop = SchedulerPopulation.for_instance(2, ())
        profile = DisaggregatedProfile((1.0, 1.0), ())
        s_res, m_res = equilibrium_residuals(inst, pop, profile)
        assert s_res == pytest.approx(1.0, abs=1e-12)
        assert m_res == 0.0

    def test_dimension_mismatch(self):
        inst = GameInstance.linear(3)
        pop = SchedulerPopulation.full_access(3, 1.0)
        with pytest.raises(ValidationError):
            equilibrium_residuals(inst, pop, DisaggregatedProfile((1.0, 1.0), ((1.0, 1.0),)))

    def test_mass_outside_access_rejected(self):
        inst = GameInstance.linear(3, 1.0)
        pop = SchedulerPopulation.for_instance(3, ((2.0, (2, 3)),), (1, 2))
        bad = DisaggregatedProfile((0.0, 0.0, 1.0), ((0.0, 1.0, 1.0),))
        with pytest.raises(ValidationError):
            equilibrium_residuals(inst, pop, bad)


class TestFullySelfish:
    def test_full_access_matches_wardrop(self):
        inst = GameInstance.linear(2, 1.0)
        pop = SchedulerPopulation.full_access(2, 1.0)
        rep = solve_fully_selfish(inst, pop)
        assert rep.converged
        assert rep.cost == pytest.approx(1.5, abs=1e-10)
        assert rep.aggregate.loads == pytest.approx((0.5, 1.5), abs=1e-9)

    def test_heterogeneous_access_classes(self):
        # converted machines keep access {2,3}; outcome matches the team cost
        inst = GameInstance.linear(3, 1.0)
        pop = SchedulerPopulation.for_instance(3, ((2.0, (2, 3)),), (1, 2))
        rep = solve_fully_selfish(inst, pop)
        assert rep.converged
        assert rep.cost == pytest.approx(4 / 3, abs=1e-8)

    @pytest.mark.parametrize("alpha", [0.0, 0.6, 1.4, 2.5])
    def test_matches_closed_form_zero_penetration(self, alpha):
        inst = GameInstance.linear(4, alpha)
        pop = SchedulerPopulation.full_access(4, 2.0)
        rep = solve_fully_selfish(inst, pop)
        assert rep.converged
        assert rep.cost == pytest.approx(team_cost_linear(4, 0.0, alpha), abs=1e-8)
