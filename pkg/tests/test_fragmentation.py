"""Fragmentation unit tests.

Core claims:
    - frag multiplies each atom into its normalized split and sorts, stably,
      conserving total mass (brute-force multiply-and-sort oracle)
    - stick fractions follow Beta(1, alpha) exactly (scipy CDF as oracle)
    - stick masses telescope: sum + remainder = 1
    - the level concentrations match quadrature of the divergence density
      c/(1-s) over each level's increment, and the singular level raises
    - recursive weight trees conserve mass per node and reproduce plain
      stick-breaking at depth 1; fractions are ancestor-independent
    - node_weight recomputes the stored mass from break fractions
    - the lazily truncated leaf sampler reproduces the size-biased stick
      index law (geometric) and the two-draw coincidence rate 1/(1+alpha)
"""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from dfpmix.fragmentation import (
    DivergenceSchedule,
    MassSequence,
    WeightedTree,
    dfp_sample_weights,
    divergence_alpha,
    frag,
    node_weight,
    sample_assignment_paths,
    sample_stick_fractions,
    stick_break,
    sticks_from_fractions,
)


# -- MassSequence ------------------------------------------------------------


def test_mass_sequence_validation():
    MassSequence.from_masses([0.5, 0.5])
    with pytest.raises(ValueError):
        MassSequence(np.array([0.5, -0.1]), 0.4)
    with pytest.raises(ValueError):
        MassSequence(np.array([0.5, 0.5]), 0.9)
    with pytest.raises(ValueError):
        MassSequence(np.array([0.2, 0.5]), 0.7, is_sorted=True)


# -- frag --------------------------------------------------------------------


def test_frag_worked_example():
    masses = MassSequence.from_masses([0.6, 0.4])
    fragments = [
        MassSequence.from_masses([0.5, 0.5]),
        MassSequence.from_masses([0.75, 0.25]),
    ]
    out = frag(masses, fragments)
    assert out.is_sorted
    np.testing.assert_allclose(out.masses, [0.3, 0.3, 0.3, 0.1], rtol=0, atol=1e-15)
    assert abs(out.total - 1.0) <= 1e-12


def test_frag_matches_brute_force_and_conserves_mass():
    rng = np.random.default_rng(11)
    for _ in range(300):
        k = int(rng.integers(1, 6))
        raw = rng.random(k) * rng.choice([0.1, 1.0, 10.0])
        masses = MassSequence.from_masses(raw)
        fragments = []
        for _ in range(k):
            parts = rng.random(int(rng.integers(1, 6)))
            fragments.append(MassSequence.from_masses(parts / parts.sum()))
        out = frag(masses, fragments)
        # oracle: plain python multiply-and-sort
        expect = sorted(
            (float(m * p) for m, fr in zip(raw, fragments) for p in fr.masses),
            reverse=True,
        )
        np.testing.assert_allclose(out.masses, expect, rtol=0, atol=0)
        assert abs(out.total - masses.total) <= 1e-12 * max(1.0, masses.total)
        assert np.all(np.diff(out.masses) <= 0)


def test_frag_tie_breaking_is_stable():
    masses = MassSequence.from_masses([0.5, 0.5])
    fragments = [
        MassSequence.from_masses([0.5, 0.5]),
        MassSequence.from_masses([0.5, 0.5]),
    ]
    out = frag(masses, fragments)
    np.testing.assert_array_equal(out.masses, [0.25, 0.25, 0.25, 0.25])


def test_frag_errors():
    masses = MassSequence.from_masses([0.6, 0.4])
    ok = MassSequence.from_masses([1.0])
    with pytest.raises(ValueError):
        frag(masses, [ok])
    with pytest.raises(ValueError):
        frag(masses, [ok, MassSequence.from_masses([0.5, 0.4])])


# -- stick-breaking ----------------------------------------------------------


def test_sticks_from_fractions_worked_example():
    out = sticks_from_fractions([0.5, 0.5, 0.5])
    np.testing.assert_allclose(out.masses, [0.5, 0.25, 0.125])
    assert out.remainder == pytest.approx(0.125, abs=1e-15)


def test_stick_fractions_follow_beta_1_alpha():
    rng = np.random.default_rng(5)
    for alpha in (0.3, 1.0, 4.5):
        draws = sample_stick_fractions(alpha, 20000, rng)
        stat = stats.kstest(draws, stats.beta(1.0, alpha).cdf)
        assert stat.pvalue > 1e-3, (alpha, stat)


def test_stick_break_totals_and_means():
    rng = np.random.default_rng(17)
    first = np.empty(20000)
    for r in range(first.size):
        ms = stick_break(1.0, 40, rng)
        assert abs(ms.total + ms.remainder - 1.0) <= 1e-12
        first[r] = ms.masses[0]
    # E[pi_1] = E[nu] = 1/(1+alpha) = 0.5 at alpha = 1
    se = first.std() / math.sqrt(first.size)
    assert abs(first.mean() - 0.5) < 4 * se


def test_stick_break_extreme_alpha():
    rng = np.random.default_rng(3)
    tiny = stick_break(1e-8, 8, rng)
    assert tiny.masses[0] > 1 - 1e-6
    big = stick_break(1e8, 8, rng)
    assert big.masses[0] < 1e-6
    with pytest.raises(ValueError):
        stick_break(0.0, 8, rng)
    with pytest.raises(ValueError):
        stick_break(1.0, 0, rng)


# -- divergence schedule -----------------------------------------------------


def test_divergence_alpha_closed_form_examples():
    sched = DivergenceSchedule(c=1.0, depth=3, horizon=4)
    assert sched.alpha(0) == pytest.approx(math.log(4.0 / 3.0), abs=1e-15)
    assert sched.alpha(2) == pytest.approx(math.log(2.0), abs=1e-15)


def test_divergence_alpha_matches_quadrature():
    # alpha(l) is the increment of the cumulative divergence a(s) = -c ln(1-s)
    # over [l/H, (l+1)/H]; integrate its density c/(1-s) directly.
    for c, depth, horizon in [(1.0, 3, 4), (2.5, 5, 6), (0.7, 4, 9)]:
        sched = DivergenceSchedule(c=c, depth=depth, horizon=horizon)
        for level in range(depth):
            val, err = integrate.quad(
                lambda s: c / (1.0 - s), level / horizon, (level + 1) / horizon
            )
            assert divergence_alpha(level, sched) == pytest.approx(val, abs=1e-10)


def test_divergence_schedule_singularity_and_validation():
    sched = DivergenceSchedule(c=1.0, depth=3, horizon=3)
    assert sched.alpha(0) == pytest.approx(math.log(3.0 / 2.0))
    with pytest.raises(ValueError):
        sched.alpha(2)  # level+1 == horizon: a(1) diverges
    with pytest.raises(ValueError):
        sched.alpha(3)
    with pytest.raises(ValueError):
        sched.alpha(-1)
    assert DivergenceSchedule(c=1.0, depth=3).horizon == 4
    with pytest.raises(ValueError):
        DivergenceSchedule(c=0.0, depth=3)
    with pytest.raises(ValueError):
        DivergenceSchedule(c=1.0, depth=3, horizon=2)


# -- recursive weight trees --------------------------------------------------


def test_dfp_weights_conserve_mass_per_node():
    rng = np.random.default_rng(23)
    sched = DivergenceSchedule(c=1.5, depth=2)
    wt = dfp_sample_weights(sched, truncation=16, rng=rng)
    for parent in wt.tree.internal_ids():
        child_total = sum(wt.weights[c] for c in wt.tree.child_ids(parent))
        got = child_total + wt.remainders[parent]
        assert got == pytest.approx(wt.weights[parent], rel=1e-12, abs=1e-15)
    leaf_total = sum(wt.weights[l] for l in wt.tree.leaf_ids())
    lost = sum(wt.remainders.values())
    assert leaf_total + lost == pytest.approx(1.0, abs=1e-12)


def test_dfp_weights_depth_one_is_plain_stick_break():
    sched = DivergenceSchedule(c=2.0, depth=1)
    wt = dfp_sample_weights(sched, truncation=12, rng=np.random.default_rng(99))
    direct = stick_break(sched.alpha(0), 12, np.random.default_rng(99))
    got = [wt.weights[(k,)] for k in range(1, 13)]
    np.testing.assert_allclose(got, direct.masses, rtol=0, atol=0)
    assert wt.remainders[()] == pytest.approx(direct.remainder, abs=1e-15)


def test_dfp_weights_degenerate_c_gives_single_heavy_child():
    rng = np.random.default_rng(31)
    sched = DivergenceSchedule(c=1e-8, depth=3)
    second_largest = []
    for _ in range(50):
        wt = dfp_sample_weights(sched, truncation=6, rng=rng)
        for parent in wt.tree.internal_ids():
            kids = sorted((wt.weights[c] for c in wt.tree.child_ids(parent)), reverse=True)
            if wt.weights[parent] > 1e-6:
                second_largest.append(kids[1] / wt.weights[parent])
    assert np.mean(second_largest) < 0.01


def test_dfp_weights_fractions_are_ancestor_independent():
    # the first-child fraction at depth 2 is Beta(1, alpha(1)) no matter what
    # happened at depth 1; compare against fresh draws and across a median
    # split on the parent fraction
    rng = np.random.default_rng(41)
    sched = DivergenceSchedule(c=1.2, depth=2)
    parent_nu, child_nu = [], []
    for _ in range(4000):
        wt = dfp_sample_weights(sched, truncation=2, rng=rng)
        parent_nu.append(wt.fractions[(1,)])
        child_nu.append(wt.fractions[(1, 1)])
    parent_nu = np.asarray(parent_nu)
    child_nu = np.asarray(child_nu)
    fresh = sample_stick_fractions(sched.alpha(1), 4000, rng)
    assert stats.ks_2samp(child_nu, fresh).pvalue > 1e-3
    lo = child_nu[parent_nu < np.median(parent_nu)]
    hi = child_nu[parent_nu >= np.median(parent_nu)]
    assert stats.ks_2samp(lo, hi).pvalue > 1e-3


def test_node_weight_recomputes_stored_masses():
    rng = np.random.default_rng(53)
    sched = DivergenceSchedule(c=1.0, depth=3)
    wt = dfp_sample_weights(sched, truncation=4, rng=rng)
    ids = list(wt.weights)
    for node in [ids[i] for i in rng.integers(0, len(ids), size=40)]:
        assert node_weight(wt, node) == pytest.approx(
            wt.weights[node], rel=1e-12, abs=1e-300
        )
    with pytest.raises(KeyError):
        node_weight(wt, (1, 99))


# -- lazily truncated leaf sampling ------------------------------------------


def test_assignment_paths_shape_and_determinism():
    sched = DivergenceSchedule(c=1.0, depth=2)
    a = sample_assignment_paths(sched, n=3, n_replicates=50, rng=np.random.default_rng(1))
    b = sample_assignment_paths(sched, n=3, n_replicates=50, rng=np.random.default_rng(1))
    assert a.shape == (50, 3, 2)
    assert a.min() >= 1
    np.testing.assert_array_equal(a, b)


def test_assignment_paths_stick_index_law():
    # P(first index = k) = E[pi_k] = (1/(1+a)) (a/(1+a))^(k-1)
    sched = DivergenceSchedule(c=3.0, depth=1)
    alpha = sched.alpha(0)
    rng = np.random.default_rng(77)
    paths = sample_assignment_paths(sched, n=1, n_replicates=60000, rng=rng)
    idx = paths[:, 0, 0]
    for k in (1, 2, 3):
        p = (1 / (1 + alpha)) * (alpha / (1 + alpha)) ** (k - 1)
        freq = np.mean(idx == k)
        se = math.sqrt(p * (1 - p) / idx.size)
        assert abs(freq - p) < 5 * se, (k, freq, p)


def test_assignment_paths_coincidence_rate():
    # two draws from one weight tree share a stick with probability
    # E[sum pi_k^2] = 1/(1+alpha): the two-customer seating law
    sched = DivergenceSchedule(c=2.0, depth=1)
    alpha = sched.alpha(0)
    rng = np.random.default_rng(78)
    paths = sample_assignment_paths(sched, n=2, n_replicates=60000, rng=rng)
    same = np.mean(paths[:, 0, 0] == paths[:, 1, 0])
    p = 1 / (1 + alpha)
    se = math.sqrt(p * (1 - p) / paths.shape[0])
    assert abs(same - p) < 5 * se
