import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gibbsmix.certify import MomentSpaceBox
from gibbsmix.errors import DomainError, Refusal
from gibbsmix.expfam import (ConjugateHyperparameters, GaussianKnownVariance, PoissonGamma,
                             log_marginal)
from gibbsmix.partition import GibbsPartitionModel, OrderedPartition, enumerate_partitions
from gibbsmix.theory import (HalfspaceRegion, bounded_case_constant, capture_check,
                             capture_convergence_experiment, event_constant, fraction_in_region,
                             lemma_bound, phi_t, s_a_set, splittable_counts,
                             subset_marginal_event_check)

G1 = GaussianKnownVariance(1, 1.0)
H01 = ConjugateHyperparameters.make(G1, [0.0], 1.0)
POI = PoissonGamma()
HP = ConjugateHyperparameters.make(POI, [1.0], 1.0)
DP1 = GibbsPartitionModel.dirichlet(1.0)


def test_s_a_examples():
    x = np.array([0.0, 0.0])
    assert s_a_set(G1, H01, x, (1, 1), 1.0) == []
    assert s_a_set(G1, H01, x, (1, 1), 2.0) == [1, 2]
    y = np.array([0.3, -1.0, 2.0])
    assert s_a_set(G1, H01, y, (1, 2, 3), 1.0) == [1, 2, 3]
    assert s_a_set(G1, H01, y, (1, 2, 3), 0.99) == []
    with pytest.raises(DomainError):
        s_a_set(G1, H01, y, (1, 2), 1.0)


def _brute_s_a(fam, hyp, x, part, c):
    out = []
    for block in part.blocks():
        idx = [j - 1 for j in block]
        for j in idx:
            rest = [i for i in idx if i != j]
            if log_marginal(fam, hyp, x[idx]) <= math.log(c) + log_marginal(fam, hyp, x[rest]) \
                    + log_marginal(fam, hyp, x[[j]]):
                out.append(j + 1)
    return sorted(out)


def test_splittable_counts_match_s_a():
    rng = np.random.default_rng(1)
    x = rng.normal(0, 2, 6)
    cnt = splittable_counts(G1, H01, x, 1.5)
    for part in enumerate_partitions(6):
        total = sum(int(cnt[m]) for m in part.masks())
        assert total == len(s_a_set(G1, H01, x, part, 1.5)) == \
            len(_brute_s_a(G1, H01, x, part, 1.5))


def test_phi_examples():
    rng = np.random.default_rng(2)
    x = rng.normal(0, 1, 7)
    assert phi_t(G1, H01, x, 7, 1.0)[0] == 1.0
    v, part = phi_t(G1, H01, x, 3, 0.0)
    assert v == 0.0 and part.t == 3
    with pytest.raises(DomainError):
        phi_t(G1, H01, x, 8, 1.0)
    with pytest.raises(Refusal):
        phi_t(G1, H01, np.zeros(13), 2, 1.0, method="enumerate")


def test_phi_dp_matches_enumeration_and_is_monotone():
    rng = np.random.default_rng(3)
    cs = [0.0, 0.5, 1.0, 1.5, 2.0, 4.0, 10.0]
    for _ in range(20):
        n = int(rng.integers(2, 10))
        if rng.random() < 0.5:
            fam, hyp = G1, H01
            x = rng.normal(0, 2, n)
        else:
            fam, hyp = POI, HP
            x = rng.poisson(3, n)
        t = int(rng.integers(1, n + 1))
        prev = -1.0
        for c in cs:
            v_dp, part = phi_t(fam, hyp, x, t, c)
            v_en, _ = phi_t(fam, hyp, x, t, c, method="enumerate")
            assert v_dp == v_en
            assert part.t == t
            assert len(s_a_set(fam, hyp, x, part, c)) / n == v_dp
            assert v_dp >= prev
            prev = v_dp


def test_phi_backends_agree():
    rng = np.random.default_rng(4)
    x = rng.normal(0, 2, 9)
    for t in (1, 2, 4):
        a = phi_t(G1, H01, x, t, 2.0, backend="cython")
        b = phi_t(G1, H01, x, t, 2.0, backend="python")
        assert a[0] == b[0]


def _bound_instance(rng):
    n = int(rng.integers(3, 11))
    model = [GibbsPartitionModel.dirichlet(float(rng.uniform(0.3, 2))),
             GibbsPartitionModel.pitman_yor(float(rng.uniform(0.0, 0.8)), 1.0)][int(rng.integers(2))]
    if rng.random() < 0.5:
        x = rng.normal(0, float(rng.uniform(0.2, 3)), n)
        fam, hyp = G1, H01
    else:
        x = rng.poisson(float(rng.uniform(0.5, 6)), n)
        fam, hyp = POI, HP
    t = int(rng.integers(1, n))
    c = float(rng.choice([1.0, 2.0, 4.0, 20.0]))
    return model, fam, hyp, x, t, c


def test_lemma_bound_random_instances():
    rng = np.random.default_rng(34)
    informative = 0
    checked = 0
    for _ in range(2000):
        model, fam, hyp, x, t, c = _bound_instance(rng)
        rep = lemma_bound(model, fam, hyp, x, t, c)
        assert 0.0 <= rep.bound <= 1.0
        if rep.preconditions:
            checked += 1
            assert rep.holds, rep.to_json()
            informative += rep.bound < 1.0
        if checked >= 200:
            break
    assert checked >= 200
    assert informative > 0


def test_lemma_bound_flags():
    x = np.array([0.0, 0.0, 0.0])
    rep = lemma_bound(DP1, G1, H01, x, 2, 0.0)
    assert not rep.phi_ok and not rep.preconditions and rep.holds is None and rep.bound == 1.0
    m = GibbsPartitionModel.pitman_yor(-1.0, 2.0)
    rng = np.random.default_rng(0)
    rep = lemma_bound(m, G1, H01, rng.normal(0, 1, 6), 2, 2.0)
    assert rep.c_v == math.inf and rep.bound == 1.0 and rep.uninformative
    assert json.loads(rep.to_json())["c_v"] == "inf"
    rep = lemma_bound(DP1, G1, H01, x, 1, 2.0, phi=0.9, phi_source="region", posterior=0.3)
    assert rep.phi_source == "region" and rep.posterior == 0.3


def test_bounded_case_constant_examples():
    assert bounded_case_constant(POI, HP, [0]) == pytest.approx(2.0)
    c = bounded_case_constant(POI, HP, [0, 1, 2, 5])
    assert math.isfinite(c) and c >= 2.0
    gb = bounded_case_constant(G1, H01, (-1.0, 1.0))
    assert math.isfinite(gb)


def test_bounded_case_splitting_property():
    rng = np.random.default_rng(41)
    U = [0, 1]
    c = bounded_case_constant(POI, HP, U)
    lc = math.log(c)
    for _ in range(1000):
        size = int(rng.integers(1, 30))
        J = rng.poisson(float(rng.uniform(0.2, 8)), size).astype(float)
        J = np.append(J, float(rng.choice(U)))
        lhs = log_marginal(POI, HP, J)
        rhs = lc + log_marginal(POI, HP, J[-1:]) + log_marginal(POI, HP, J[:-1])
        assert lhs <= rhs + 1e-12


def test_bounded_case_gaussian_grid_property():
    rng = np.random.default_rng(42)
    c = bounded_case_constant(G1, H01, (-1.0, 1.0))
    for _ in range(1000):
        J = rng.normal(float(rng.uniform(-3, 3)), 1.0, int(rng.integers(1, 20)))
        J = np.append(J, rng.uniform(-1, 1))
        lhs = log_marginal(G1, H01, J)
        rhs = math.log(c) + log_marginal(G1, H01, J[-1:]) + log_marginal(G1, H01, J[:-1])
        assert lhs <= rhs


def test_fraction_in_region():
    assert fraction_in_region(POI, [0, 1, 3, 0], [0, 1]) == 0.75
    assert fraction_in_region(G1, [0.5, 2.0], (-1.0, 1.0)) == 0.5


def _brute_capture(y, region, beta):
    n = y.shape[0]
    m = math.ceil(beta * n - 1e-12)
    for r in range(max(m, 1), n + 1):
        for J in itertools.combinations(range(n), r):
            if not region.contains(y[list(J)].mean(axis=0))[0]:
                return False
    return True


def test_capture_examples():
    region = HalfspaceRegion.box([-1.0], [1.0])
    rng = np.random.default_rng(0)
    assert capture_check(rng.uniform(-1, 1, 20), region, 0.1)
    y = np.zeros((10, 3))
    y[-1] = 10.0
    h = HalfspaceRegion(np.ones((1, 3)) / math.sqrt(3), [1 / math.sqrt(3)])
    assert not capture_check(y, h, 0.1)
    with pytest.raises(DomainError):
        capture_check(np.zeros((0, 1)), region, 0.5)
    with pytest.raises(DomainError):
        capture_check([0.0], region, 0.0)
    with pytest.raises(DomainError):
        HalfspaceRegion([[1.0, 1.0]], [0.0])


def test_capture_matches_brute_force():
    rng = np.random.default_rng(5)
    agree_true = 0
    for _ in range(100):
        n = int(rng.integers(1, 13))
        k = int(rng.integers(1, 3))
        y = rng.normal(0, 1, (n, k))
        region = HalfspaceRegion.box(-np.full(k, 1.2), np.full(k, 1.2))
        beta = float(rng.choice([0.1, 0.25, 0.5, 0.75, 1.0]))
        fast = capture_check(y, region, beta)
        assert fast == _brute_capture(y, region, beta)
        agree_true += fast
    assert 0 < agree_true < 100


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=12), st.sampled_from([0.2, 0.5, 0.9]))
def test_capture_property(ys, beta):
    y = np.array(ys)[:, None]
    region = HalfspaceRegion(np.array([[0.6], [-1.0]]) / np.abs([[0.6], [-1.0]]), [1.0, 1.5])
    assert capture_check(y, region, beta) == _brute_capture(y, region, beta)


def test_capture_beta_one_is_grand_mean():
    rng = np.random.default_rng(6)
    region = HalfspaceRegion.box([-0.2], [0.2])
    for _ in range(50):
        y = rng.normal(0, 0.5, 9)
        assert capture_check(y, region, 1.0) == bool(abs(y.mean()) <= 0.2)


def test_capture_convergence():
    region = HalfspaceRegion.box([-3.0], [3.0])
    rows, freq, thr = capture_convergence_experiment(
        lambda n, rng: rng.standard_normal((n, 1)), 0.5, region, [2, 50, 200], range(100))
    assert freq[200] == 1.0 and thr is not None and thr <= 200
    assert len(rows) == 300
    _, freq, thr = capture_convergence_experiment(
        lambda n, rng: np.full((n, 1), 0.5), 0.3, region, [1, 5, 10], range(5))
    assert all(v == 1.0 for v in freq.values()) and thr == 1
    with pytest.raises(DomainError):
        capture_convergence_experiment(lambda n, rng: None, 0.5, region, [5, 2], [0])


def _brute_event(fam, hyp, x, beta, c):
    n = len(x)
    m = math.ceil(beta * n - 1e-12)
    for r in range(max(m, 1), n + 1):
        for J in itertools.combinations(range(n), r):
            J = list(J)
            lmJ = log_marginal(fam, hyp, x[J])
            good = sum(
                lmJ <= math.log(c) + log_marginal(fam, hyp, x[[i for i in J if i != j]])
                + log_marginal(fam, hyp, x[[j]]) for j in J)
            if 2 * good < r:
                return False
    return True


@pytest.mark.parametrize("seed", range(6))
def test_event_exact_matches_definition(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, float(rng.uniform(0.3, 3)), 6)
    c = float(rng.choice([1.0, 1.5, 3.0]))
    beta = float(rng.choice([0.3, 0.5, 1.0]))
    v = subset_marginal_event_check(G1, H01, x, beta, c, mode="exact")
    assert v.holds == _brute_event(G1, H01, x, beta, c)


def test_event_beta_one_pair():
    x = np.array([0.0, 0.0])
    # only J = {1,2}; both j qualify iff m(0,0) <= c m(0)^2
    assert not subset_marginal_event_check(G1, H01, x, 1.0, 1.0, mode="exact").holds
    assert subset_marginal_event_check(G1, H01, x, 1.0, 2.0, mode="exact").holds


def test_event_sufficient_implies_exact():
    U = MomentSpaceBox.make([-1.0], [1.0], resolution=32)
    c = event_constant(G1, H01, U, U)
    assert math.isfinite(c)
    hits = 0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        x = rng.normal(0, 0.3, 12)
        suff = subset_marginal_event_check(G1, H01, x, 0.5, c, mode="sufficient", U1=U, U2=U,
                                           spot_checks=200, seed=seed)
        assert suff.mode == "sufficient-only"
        if suff.holds:
            hits += 1
            assert subset_marginal_event_check(G1, H01, x, 0.5, c, mode="exact").holds
    assert hits > 0


def test_event_refusals():
    with pytest.raises(Refusal):
        subset_marginal_event_check(G1, H01, np.zeros(16), 0.5, 1.0, mode="exact")
    with pytest.raises(DomainError):
        subset_marginal_event_check(G1, H01, np.zeros(16), 0.5, 1.0, mode="sufficient")
    v = subset_marginal_event_check(G1, H01, np.zeros(4), 0.5, 1.0)
    assert v.mode == "exact"


def test_partition_argument_type():
    x = np.array([0.0, 1.0])
    assert s_a_set(G1, H01, x, OrderedPartition((1, 2)), 1.0) == [1, 2]
