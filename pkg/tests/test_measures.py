import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emergence_lab.errors import InputError, InvariantError, SizeError
from emergence_lab.measures import (FinSuppMeasure, MarkovMeasure,
                                    MarkovMixture, empirical_measure,
                                    empirical_snapshots, make_rng,
                                    measure_entropy, truncation_proxy,
                                    wasserstein1)
from emergence_lab.sofic import PointPrefix, ShiftSpace

FULL2 = ShiftSpace.full_shift(2)
FULL3 = ShiftSpace.full_shift(3)
GM = ShiftSpace.golden_mean()


def bern(p, space=FULL2):
    return MarkovMeasure.bernoulli(p, space)


# ------------------------------------------------------------- MarkovMeasure

def test_bernoulli_stationary_is_row():
    mu = bern([0.3, 0.7])
    assert np.allclose(mu.stationary, [0.3, 0.7])
    assert mu.is_bernoulli


def test_row_sum_validation():
    with pytest.raises(InvariantError):
        MarkovMeasure(np.array([[0.5, 0.4], [0.5, 0.5]]), FULL2)


def test_support_must_respect_transitions():
    with pytest.raises(InvariantError):
        MarkovMeasure(np.array([[0.5, 0.5], [0.5, 0.5]]), GM)


def test_parry_measure_golden_mean():
    mu = MarkovMeasure.parry(GM)
    phi = (1 + math.sqrt(5)) / 2
    # the Parry measure attains the topological entropy
    assert measure_entropy(mu) == pytest.approx(math.log(phi), abs=1e-9)
    assert mu.cylinder_probability((2, 2)) == 0.0


def test_cylinder_probability_markov():
    p = np.array([[0.9, 0.1], [0.2, 0.8]])
    mu = MarkovMeasure(p, FULL2)
    pi = mu.stationary
    assert mu.cylinder_probability((1, 2, 2)) == pytest.approx(
        pi[0] * 0.1 * 0.8, rel=1e-12)
    assert mu.cylinder_probability(()) == 1.0


def test_entropy_bernoulli_half():
    assert measure_entropy(bern([0.5, 0.5])) == pytest.approx(math.log(2))
    assert measure_entropy(bern([1.0, 0.0])) == pytest.approx(0.0, abs=1e-12)


def test_sampling_deterministic_and_admissible():
    mu = MarkovMeasure.parry(GM)
    w1 = mu.sample(500, make_rng(99))
    w2 = mu.sample(500, make_rng(99))
    assert np.array_equal(w1, w2)
    assert all(not (a == 2 and b == 2) for a, b in zip(w1, w1[1:]))


def test_sampling_frequencies_track_stationary():
    p = np.array([[0.7, 0.2, 0.1], [0.1, 0.8, 0.1], [0.3, 0.3, 0.4]])
    mu = MarkovMeasure(p, FULL3)
    w = mu.sample(200000, make_rng(5))
    freq = np.bincount(w, minlength=4)[1:] / len(w)
    assert np.abs(freq - mu.stationary).max() < 0.01


def test_chain_walk_jit_matches_python_semantics():
    p = np.array([[0.2, 0.3, 0.5], [0.5, 0.2, 0.3], [0.3, 0.5, 0.2]])
    mu = MarkovMeasure(p, FULL3)
    short = mu.sample(4096, make_rng(3))       # python loop path
    long = mu.sample(8192, make_rng(3))        # jit path if numba is present
    assert np.array_equal(short, long[:4096])


# ----------------------------------------------------------- FinSuppMeasure

def test_finsupp_weight_validation():
    with pytest.raises(InvariantError):
        FinSuppMeasure(atoms=np.array([[1, 1]], dtype=np.int16),
                       weights=np.array([0.9]))


def test_merged_combines_duplicate_prefixes():
    atoms = np.array([[1, 1, 1], [1, 1, 2], [2, 1, 1]], dtype=np.int16)
    mu = FinSuppMeasure(atoms=atoms, weights=np.array([0.25, 0.25, 0.5]))
    prefixes, weights, keys = mu.merged(2, 2)
    assert prefixes.shape == (2, 2)
    got = {tuple(p): w for p, w in zip(prefixes, weights)}
    assert got[(1, 1)] == pytest.approx(0.5)
    assert got[(2, 1)] == pytest.approx(0.5)
    assert np.all(np.diff(keys) > 0)


def test_empirical_measure_counts_windows():
    x = PointPrefix.from_word((1, 1, 2, 1, 1))
    mu = empirical_measure(x, 4, 2, FULL2)
    got = {tuple(a): w for a, w in zip(mu.atoms, mu.weights)}
    assert got[(1, 1)] == pytest.approx(0.5)
    assert got[(1, 2)] == pytest.approx(0.25)
    assert got[(2, 1)] == pytest.approx(0.25)


def test_empirical_snapshots_match_single_calls():
    mu = bern([0.4, 0.6])
    x = PointPrefix(mu.sample(3000, make_rng(11)))
    times = [100, 700, 2995]
    snaps = empirical_snapshots(x, times, 6, FULL2)
    for t, snap in zip(times, snaps):
        single = empirical_measure(x, t, 6, FULL2)
        d, _ = wasserstein1(snap, single, 6, FULL2)
        assert d == pytest.approx(0.0, abs=1e-12)


def test_truncation_proxy_masses_are_cylinder_probabilities():
    mu = bern([0.3, 0.7])
    proxy = truncation_proxy(mu, 3, FULL2)
    got = {tuple(a): w for a, w in zip(proxy.atoms, proxy.weights)}
    assert got[(1, 1, 1)] == pytest.approx(0.3 ** 3, rel=1e-12)
    assert got[(2, 1, 2)] == pytest.approx(0.7 * 0.3 * 0.7, rel=1e-12)
    assert sum(got.values()) == pytest.approx(1.0)


def test_truncation_proxy_respects_support():
    mu = MarkovMeasure.parry(GM)
    proxy = truncation_proxy(mu, 4, GM)
    for a in proxy.atoms:
        assert not any(x == 2 and y == 2 for x, y in zip(a, a[1:]))


# ------------------------------------------------------------- Wasserstein-1

def point(word, width):
    return FinSuppMeasure(atoms=np.asarray(word, dtype=np.int16)[None, :width],
                          weights=np.array([1.0]))


def test_w1_point_masses_equals_truncated_metric():
    a = point((1,) * 6, 6)
    b = point((2,) * 6, 6)
    val, err = wasserstein1(a, b, 6, FULL2)
    assert val == pytest.approx(1.0 - 2.0 ** -6, abs=1e-14)
    assert err == pytest.approx(2.0 ** -6)


def test_w1_half_mass_move():
    # move half the mass from 111 to 211: cost 0.5 * beta^-1
    a = FinSuppMeasure(atoms=np.array([[1, 1, 1]], dtype=np.int16),
                       weights=np.array([1.0]))
    b = FinSuppMeasure(atoms=np.array([[1, 1, 1], [2, 1, 1]], dtype=np.int16),
                       weights=np.array([0.5, 0.5]))
    val, _ = wasserstein1(a, b, 3, FULL2)
    assert val == pytest.approx(0.25, abs=1e-12)


def test_w1_identity_and_symmetry():
    mu = truncation_proxy(bern([0.3, 0.7]), 5, FULL2)
    nu = truncation_proxy(bern([0.6, 0.4]), 5, FULL2)
    d_self, _ = wasserstein1(mu, mu, 5, FULL2)
    assert d_self == 0.0
    d_ab, _ = wasserstein1(mu, nu, 5, FULL2)
    d_ba, _ = wasserstein1(nu, mu, 5, FULL2)
    assert d_ab == pytest.approx(d_ba, rel=1e-9)
    assert d_ab > 0


def test_w1_triangle_inequality_random():
    rng = make_rng(17)
    for _ in range(25):
        ps = rng.random(3)
        mus = [truncation_proxy(bern([p, 1 - p]), 4, FULL2) for p in ps]
        d01, _ = wasserstein1(mus[0], mus[1], 4, FULL2)
        d12, _ = wasserstein1(mus[1], mus[2], 4, FULL2)
        d02, _ = wasserstein1(mus[0], mus[2], 4, FULL2)
        assert d02 <= d01 + d12 + 1e-9


def test_w1_bernoulli_shift_one_step_oracle():
    # depth-1 marginals alone: |p - q| * beta^-1 is a lower bound, and for
    # product measures the optimal coupling realizes it at depth 1
    mu = truncation_proxy(bern([0.2, 0.8]), 1, FULL2)
    nu = truncation_proxy(bern([0.5, 0.5]), 1, FULL2)
    val, _ = wasserstein1(mu, nu, 1, FULL2)
    assert val == pytest.approx(0.3 * 0.5, abs=1e-12)


def test_w1_atom_cap():
    mu = truncation_proxy(bern([0.5, 0.5]), 6, FULL2)
    with pytest.raises(SizeError):
        wasserstein1(mu, mu, 6, FULL2, atom_cap=10)


def test_w1_scale_invariance_under_common_mass():
    # adding identical extra mass to both sides must not change the distance
    a = FinSuppMeasure(atoms=np.array([[1, 1], [2, 2]], dtype=np.int16),
                       weights=np.array([0.5, 0.5]))
    b = FinSuppMeasure(atoms=np.array([[1, 2], [2, 2]], dtype=np.int16),
                       weights=np.array([0.5, 0.5]))
    val, _ = wasserstein1(a, b, 2, FULL2)
    # only 0.5 mass moves from 11 to 12: 0.5 * 2^-2
    assert val == pytest.approx(0.125, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=0.05, max_value=0.95),
       st.floats(min_value=0.05, max_value=0.95))
def test_w1_nonnegative_and_bounded(p, q):
    mu = truncation_proxy(bern([p, 1 - p]), 4, FULL2)
    nu = truncation_proxy(bern([q, 1 - q]), 4, FULL2)
    val, err = wasserstein1(mu, nu, 4, FULL2)
    assert 0.0 <= val <= 1.0  # diameter of the depth-4 truncated metric
    assert err > 0


# ----------------------------------------------------------------- mixtures

def test_mixture_weights_validation():
    with pytest.raises(InvariantError):
        MarkovMixture(components=(bern([0.5, 0.5]),), weights=np.array([0.7]))


def test_mixture_cylinder_probability_is_convex():
    a, b = bern([0.2, 0.8]), bern([0.9, 0.1])
    mix = MarkovMixture(components=(a, b), weights=np.array([0.25, 0.75]))
    w = (1, 2)
    expected = 0.25 * a.cylinder_probability(w) + 0.75 * b.cylinder_probability(w)
    assert mix.cylinder_probability(w) == pytest.approx(expected, rel=1e-12)


def test_make_rng_is_deterministic():
    assert make_rng(42).random(5).tolist() == make_rng(42).random(5).tolist()
    assert make_rng(1).random(1) != make_rng(2).random(1)
