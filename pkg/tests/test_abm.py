import numpy as np
import pytest

from ivmlab import (
    OpinionSpace,
    PopulationState,
    SimConfig,
    detect_absorption,
    empirical_pmf,
    make_pmf,
    point_mass,
    run_ensemble,
    sample_initial,
    simulate_ctmc,
    simulate_meanfield_particle,
    step_embedded,
    uniform_pmf,
)
from ivmlab.abm import _complete_pair, _move, derive_seed, draw_interaction_pair

K1 = OpinionSpace(1)
K2 = OpinionSpace(2)


class TestSampleInitial:
    def test_point_mass_puts_everyone_at_k(self):
        state = sample_initial(K1, 50, point_mass(K1, 2), seed=1)
        assert np.all(state.opinions == 1)
        assert state.time == 0.0
        assert state.event_count == 0

    def test_law_of_large_numbers(self):
        state = sample_initial(K1, 100_000, uniform_pmf(K1), seed=42)
        fractions = empirical_pmf(state).weights
        assert fractions == pytest.approx([1 / 3] * 3, abs=0.01)

    def test_deterministic_under_seed(self):
        a = sample_initial(K2, 1000, uniform_pmf(K2), seed=9)
        b = sample_initial(K2, 1000, uniform_pmf(K2), seed=9)
        assert np.array_equal(a.opinions, b.opinions)


class TestMoveRule:
    def test_extreme_persuader_forces_up(self):
        # persuader at +k gives up-probability one
        for u in np.linspace(0.0, 0.999, 25):
            assert _move(0, 1, u, k=1) == 1

    def test_extreme_low_persuader_forces_down(self):
        for u in np.linspace(0.0, 0.999, 25):
            assert _move(0, -1, u, k=1) == -1

    def test_boundary_clamp(self):
        assert _move(1, 1, 0.5, k=1) == 0
        assert _move(-1, -1, 0.5, k=1) == 0

    def test_center_persuader_is_unbiased(self):
        assert _move(0, 0, 0.49, k=1) == 1
        assert _move(0, 0, 0.51, k=1) == -1

    def test_up_frequency_tracks_persuader_opinion(self):
        # listener at 0 never clamps for k=2, so every move is +-1
        rng = np.random.default_rng(101)
        trials = 4000
        for x in (-2, -1, 0, 1, 2):
            u = rng.random(trials)
            ups = sum(_move(0, x, ui, k=2) == 1 for ui in u)
            p = (2 + x) / 4
            sigma = np.sqrt(max(p * (1 - p), 1e-12) / trials)
            assert abs(ups / trials - p) <= max(4 * sigma, 1e-12)


class TestPairSelection:
    def test_complete_pair_never_selects_listener(self):
        for n in (2, 3, 7):
            for i in range(n):
                partners = {_complete_pair(i, c) for c in range(n - 1)}
                assert partners == set(range(n)) - {i}

    def test_chi_square_uniformity(self):
        # mirrors the kernel's vectorized draw; 5 sigma per ordered pair
        n = 4
        steps = 1_000_000
        rng = np.random.default_rng(7)
        i = rng.integers(0, n, size=steps)
        co = rng.integers(0, n - 1, size=steps)
        j = co + (co >= i)
        assert not np.any(i == j)
        counts = np.bincount(i * n + j, minlength=n * n).reshape(n, n)
        p = 1.0 / (n * (n - 1))
        sigma = np.sqrt(steps * p * (1 - p))
        for a in range(n):
            for b in range(n):
                expected = 0.0 if a == b else steps * p
                assert abs(counts[a, b] - expected) <= 5 * sigma

    def test_draw_interaction_pair_matches_mapping(self):
        rng = np.random.default_rng(3)
        for _ in range(500):
            i, j = draw_interaction_pair(rng, 5)
            assert 0 <= i < 5 and 0 <= j < 5 and i != j


class TestStepEmbedded:
    def test_single_step_locality(self):
        rng = np.random.default_rng(11)
        state = sample_initial(K2, 30, uniform_pmf(K2), seed=5)
        for _ in range(2000):
            new = step_embedded(state, rng)
            changed = np.flatnonzero(new.opinions != state.opinions)
            assert len(changed) <= 1
            if len(changed):
                assert abs(new.opinions[changed[0]] - state.opinions[changed[0]]) == 1
            assert new.opinions.min() >= -2 and new.opinions.max() <= 2
            assert new.event_count == state.event_count + 1
            state = new

    def test_absorbing_state_is_fixed(self):
        rng = np.random.default_rng(13)
        state = PopulationState(K1, np.full(6, -1))
        for _ in range(50):
            state = step_embedded(state, rng)
            assert np.all(state.opinions == -1)

    def test_input_state_not_mutated(self):
        rng = np.random.default_rng(17)
        state = PopulationState(K1, np.array([0, 1, -1, 0]))
        before = state.opinions.copy()
        step_embedded(state, rng)
        assert np.array_equal(state.opinions, before)


class TestDetectAbsorption:
    def test_left(self):
        assert detect_absorption(PopulationState(K1, [-1, -1, -1])) == "left"

    def test_right(self):
        assert detect_absorption(PopulationState(K1, [1, 1, 1])) == "right"

    def test_mixed(self):
        assert detect_absorption(PopulationState(K1, [1, -1, 1])) is None


class TestEmpiricalPmf:
    def test_counting(self):
        state = PopulationState(K1, [-1, -1, 1, 1])
        assert np.array_equal(empirical_pmf(state).weights, [0.5, 0.0, 0.5])

    def test_consensus_is_point_mass(self):
        state = PopulationState(K2, [2, 2, 2])
        assert np.array_equal(empirical_pmf(state).weights, [0, 0, 0, 0, 1])

    def test_concatenation_invariance(self):
        ops = np.array([-1, 0, 1, 1, 0])
        single = empirical_pmf(PopulationState(K1, ops))
        double = empirical_pmf(PopulationState(K1, np.concatenate([ops, ops])))
        assert np.array_equal(single.weights, double.weights)


class TestSimulateCtmc:
    def test_started_absorbed(self):
        config = SimConfig(
            space=K1, n=5, initial=np.full(5, 1), horizon=10.0, seed=0,
            snapshot_times=(0.0, 5.0),
        )
        result = simulate_ctmc(config)
        assert result.absorption.absorbed
        assert result.absorption.target == "right"
        assert result.absorption.continuous_time == 0.0
        assert result.absorption.discrete_steps == 0
        assert all(np.all(s.opinions == 1) for s in result.snapshots)

    def test_mean_inter_event_time(self):
        # clock rate n/2: for n=2 the mean ring gap is 1; the two-agent chain
        # absorbs almost immediately, so pool first-ring times across runs
        waits = [
            simulate_ctmc(
                SimConfig(
                    space=K1, n=2, initial=np.array([-1, 1]),
                    max_events=1, seed=trial,
                )
            ).final.time
            for trial in range(1000)
        ]
        assert abs(np.mean(waits) - 1.0) <= 3.0 / np.sqrt(len(waits))

    def test_exponential_clock_large_n(self):
        config = SimConfig(
            space=K2, n=50, initial=uniform_pmf(K2), max_events=100_000, seed=23
        )
        result = simulate_ctmc(config)
        events = result.final.event_count
        mean_wait = result.final.time / events
        expected = 2.0 / 50
        assert abs(mean_wait - expected) <= 3.0 * expected / np.sqrt(events)

    def test_snapshot_at_zero_is_initial(self):
        initial = np.array([0, 1, -1, 0])
        config = SimConfig(
            space=K1, n=4, initial=initial, horizon=5.0, seed=3,
            snapshot_times=(0.0, 2.5, 5.0),
        )
        result = simulate_ctmc(config)
        assert np.array_equal(result.snapshots[0].opinions, initial)
        assert result.snapshots[0].event_count == 0

    def test_snapshots_follow_the_clock(self):
        config = SimConfig(
            space=K1, n=10, initial=uniform_pmf(K1), horizon=8.0, seed=5,
            snapshot_times=tuple(np.linspace(0, 8, 9)),
        )
        result = simulate_ctmc(config)
        assert [s.time for s in result.snapshots] == list(np.linspace(0, 8, 9))
        events = [s.event_count for s in result.snapshots]
        assert all(b >= a for a, b in zip(events, events[1:]))

    def test_absorption_freezes_snapshots(self):
        config = SimConfig(
            space=K1, n=3, initial=np.array([1, 1, 0]), horizon=500.0, seed=7,
            snapshot_times=(400.0, 500.0),
        )
        result = simulate_ctmc(config)
        assert result.absorption.absorbed
        for snap in result.snapshots:
            assert detect_absorption(snap) == result.absorption.target

    def test_cap_stop_reports_not_absorbed(self):
        config = SimConfig(
            space=K2, n=40, initial=uniform_pmf(K2), max_events=500, seed=9
        )
        result = simulate_ctmc(config)
        assert not result.absorption.absorbed
        assert result.absorption.target is None
        assert result.final.event_count == 500

    def test_bit_identical_repeat(self):
        config = SimConfig(
            space=K1, n=12, initial=uniform_pmf(K1), horizon=20.0, seed=31,
            snapshot_times=(5.0, 10.0, 20.0),
        )
        a = simulate_ctmc(config)
        b = simulate_ctmc(config)
        assert np.array_equal(a.final.opinions, b.final.opinions)
        assert a.final.time == b.final.time
        assert a.absorption == b.absorption
        for sa, sb in zip(a.snapshots, b.snapshots):
            assert np.array_equal(sa.opinions, sb.opinions)

    def test_stopping_rule_required(self):
        with pytest.raises(ValueError, match="stopping rule"):
            SimConfig(space=K1, n=4, initial=uniform_pmf(K1), seed=0)


class TestAbsorptionBatches:
    def test_small_populations_always_absorb(self):
        # bounded-(n, k) batch under the 10^6 event cap
        for space, n, trials in ((K1, 4, 100), (K2, 6, 20)):
            config = SimConfig(
                space=space, n=n, initial=uniform_pmf(space),
                max_events=10**6, seed=derive_seed(1, n, space.k),
            )
            stats = run_ensemble(config, trials)
            assert stats.absorbed_fraction() == 1.0
            for record in stats.absorption:
                assert record.target in ("left", "right")
                assert np.isfinite(record.continuous_time)


class TestRunEnsemble:
    def test_single_trial_reproduces_ctmc(self):
        config = SimConfig(
            space=K1, n=8, initial=uniform_pmf(K1), horizon=6.0, seed=77,
            snapshot_times=(2.0, 6.0),
        )
        stats = run_ensemble(config, 1)
        solo = simulate_ctmc(
            SimConfig(
                space=K1, n=8, initial=uniform_pmf(K1), horizon=6.0,
                seed=int(stats.trial_seeds[0]), snapshot_times=(2.0, 6.0),
            )
        )
        for s, snap in enumerate(solo.snapshots):
            assert np.array_equal(stats.marginals[0, s], empirical_pmf(snap).weights)
            assert stats.event_counts[0, s] == snap.event_count
        assert stats.absorption[0] == solo.absorption

    def test_worker_count_does_not_change_results(self):
        config = SimConfig(
            space=K1, n=16, initial=uniform_pmf(K1), horizon=4.0, seed=55,
            snapshot_times=(1.0, 4.0),
        )
        a = run_ensemble(config, 12, threads=1)
        b = run_ensemble(config, 12, threads=4)
        assert np.array_equal(a.marginals, b.marginals)
        assert np.array_equal(a.event_counts, b.event_counts)
        assert a.absorption == b.absorption

    def test_trial_seeds_are_distinct(self):
        config = SimConfig(
            space=K1, n=4, initial=uniform_pmf(K1), horizon=1.0, seed=0
        )
        stats = run_ensemble(config, 64)
        assert len(set(stats.trial_seeds.tolist())) == 64

    def test_trials_validated(self):
        config = SimConfig(space=K1, n=4, initial=uniform_pmf(K1), horizon=1.0, seed=0)
        with pytest.raises(ValueError, match="trials"):
            run_ensemble(config, 0)


class TestMeanfieldParticle:
    def test_saturating_high_mean(self):
        path = simulate_meanfield_particle(
            K1, point_mass(K1, 0), lambda t: 2.0, horizon=60.0, seed=2
        )
        assert np.all(np.diff(path.opinions) >= 0)
        assert path.opinions[-1] == 1

    def test_saturating_low_mean(self):
        path = simulate_meanfield_particle(
            K1, point_mass(K1, 2), lambda t: 0.0, horizon=60.0, seed=2
        )
        assert np.all(np.diff(path.opinions) <= 0)
        assert path.opinions[-1] == -1

    def test_occupation_under_balanced_mean(self):
        # persuasion balanced: the induced 3-state chain is doubly stochastic,
        # so occupation converges to the uniform distribution
        path = simulate_meanfield_particle(
            K1, uniform_pmf(K1), lambda t: 1.0, horizon=float(10**6),
            seed=12, max_events=10**6,
        )
        assert path.occupation() == pytest.approx([1 / 3] * 3, abs=0.02)

    def test_mean_path_range_validated(self):
        with pytest.raises(ValueError, match="outside"):
            simulate_meanfield_particle(
                K1, uniform_pmf(K1), lambda t: 3.0, horizon=5.0, seed=0
            )

    def test_event_cap(self):
        path = simulate_meanfield_particle(
            K1, uniform_pmf(K1), lambda t: 1.0, horizon=1e9, seed=4, max_events=250
        )
        assert len(path.times) == 251
