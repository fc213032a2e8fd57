import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zeroone import evaluator
from zeroone.configuration import Configuration, LocalConfiguration
from zeroone.evaluator import (
    InfeasibleError,
    ProbabilityEstimate,
    check_bounded_local_probability,
    estimate_mixing,
    estimate_probability,
    exact_ball_distribution,
    exact_mixing,
    exact_probability,
    find_witnesses,
    mixing_center,
    satisfies,
    satisfies_batch,
)
from zeroone.samplers import BernoulliModel, IsingParams, ShiftFieldParams
from zeroone.sentence import (
    And,
    Atom,
    BasicLocalSentence,
    LocalFormula,
    Not,
    Or,
    description_formula,
    distance_constraint_holds,
    embed_pattern,
    exists,
    parse_sentence,
)
from zeroone.torus import TorusParams, ball_template

from oracles import bfs, coloring_from_code, naive_ising_logweight, naive_satisfies

BLACK = "EXIST 1 BALL r=0 { C(0) }"
TWO_BLACK = "EXIST 2 BALL r=0 { C(0) } { C(0) }"


def test_exists_black_vertex():
    params = TorusParams(1, 6)
    sentence = parse_sentence(BLACK, params)
    assert not satisfies(Configuration.constant(params, False), sentence)
    for x in range(6):
        assert satisfies(Configuration.from_blacks(params, [x]), sentence)


def test_two_black_vertices_exhaustive():
    params = TorusParams(1, 4)
    sentence = parse_sentence(TWO_BLACK, params)
    cache = {}
    for code in range(16):
        config = Configuration.from_code(params, code)
        oracle = naive_satisfies(coloring_from_code(code, 1, 4), sentence, 1, 4, 1, 1, cache)
        assert satisfies(config, sentence) == oracle == (bin(code).count("1") >= 2)


def test_find_witnesses_respects_distance():
    params = TorusParams(1, 9)
    sentence = parse_sentence("EXIST 2 BALL r=1 { C(0) & !C(1) } { C(0) }", params)
    config = Configuration.from_blacks(params, [0, 2])
    assert find_witnesses(config, sentence) is None  # distance 2 is not > 2
    config = Configuration.from_blacks(params, [0, 3])
    xs = find_witnesses(config, sentence)
    assert xs is not None and distance_constraint_holds(params, xs, 1)


OFFSETS_1 = ((-1,), (0,), (1,))
OFFSETS_2 = tuple(ball_template(TorusParams(2, 5), 1).offsets)


def formulas(offsets):
    return st.recursive(
        st.sampled_from(offsets).map(Atom),
        lambda inner: st.one_of(
            inner.map(Not),
            st.tuples(inner, inner).map(lambda t: And(*t)),
            st.tuples(inner, inner).map(lambda t: Or(*t)),
        ),
        max_leaves=5,
    )


def sentences(offsets):
    basic = st.tuples(st.integers(1, 3), st.integers(0, 1)).flatmap(
        lambda mr: st.lists(
            formulas(offsets if mr[1] else ((0,) * len(offsets[0]),)), min_size=mr[0], max_size=mr[0]
        ).map(lambda ts: BasicLocalSentence(len(ts), mr[1], tuple(LocalFormula(mr[1], t) for t in ts)))
    )
    return st.recursive(
        basic,
        lambda inner: st.one_of(inner.map(Not), st.tuples(inner, inner).map(lambda t: And(*t))),
        max_leaves=3,
    )


_DIST_CACHE = {}


@pytest.mark.parametrize("dense", [True, False])
@settings(max_examples=80, deadline=None)
@given(
    shape=st.sampled_from([(1, 7, 1, 1), (1, 9, 1, 1), (2, 4, 1, 1), (2, 5, "inf", 1)]),
    data=st.data(),
)
def test_satisfies_matches_naive_oracle(dense, shape, data):
    d, n, p, rho = shape
    params = TorusParams(d, n, p, rho)
    offsets = OFFSETS_1 if d == 1 else tuple(ball_template(params, 1).offsets)
    sentence = data.draw(sentences(offsets))
    rate = data.draw(st.sampled_from([0.2, 0.5, 0.8]))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31)))
    spins = rng.random((4, params.size)) < rate
    old = evaluator.DENSE_MAX_SITES
    evaluator.DENSE_MAX_SITES = old if dense else 0
    try:
        got = satisfies_batch(spins, sentence, params)
    finally:
        evaluator.DENSE_MAX_SITES = old
    pn = math.inf if p == "inf" else p
    for row, value in zip(spins, got):
        code = int(row.astype(np.int64) @ (1 << np.arange(params.size)))
        black = coloring_from_code(code, d, n)
        assert bool(value) == naive_satisfies(black, sentence, d, n, pn, rho, _DIST_CACHE)


def test_large_torus_pigeonhole_and_search():
    params = TorusParams(2, 60)
    rng = np.random.default_rng(3)
    spins = rng.random((3, params.size)) < 0.001
    sentence = parse_sentence("EXIST 3 BALL r=1 { C(0,0) } { C(0,0) } { C(0,0) }", params)
    got = satisfies_batch(spins, sentence, params)
    for row, value in zip(spins, got):
        blacks = [params.coords(i) for i in np.flatnonzero(row)]
        # brute force over black triples with the L1 torus metric
        def dist(x, y):
            return sum(min(abs(a - b), 60 - abs(a - b)) for a, b in zip(x, y))
        expected = any(
            all(dist(u, v) > 2 for u, v in itertools.combinations(t, 2))
            for t in itertools.combinations(blacks, 3)
        )
        assert bool(value) == expected
    dense = rng.random((2, params.size)) < 0.5
    assert satisfies_batch(dense, sentence, params).all()


def test_radius_violation():
    params = TorusParams(1, 4)
    with pytest.raises(ValueError):
        satisfies(Configuration.constant(params, True), exists(LocalFormula(2, Atom((0,)))))


@settings(max_examples=40, deadline=None)
@given(code=st.integers(0, (1 << 16) - 1), shift=st.integers(0, 15), data=st.data())
def test_satisfies_translation_invariant(code, shift, data):
    params = TorusParams(2, 4)
    sentence = data.draw(sentences(OFFSETS_2))
    config = Configuration.from_code(params, code)
    moved = config.shifted(params.coords(shift))
    assert satisfies(config, sentence) == satisfies(moved, sentence)


def test_exact_probability_examples():
    params = TorusParams(1, 4)
    black = parse_sentence(BLACK, params)
    for p in (0.5, 0.13):
        est = exact_probability(params, BernoulliModel(p), black)
        assert est.point == pytest.approx(1 - (1 - p) ** 4, abs=1e-12)
        assert est.method == "exact" and est.stderr == 0
    assert exact_probability(params, BernoulliModel(0.5), black).point == pytest.approx(15 / 16, abs=1e-15)
    pair = parse_sentence("EXIST 1 BALL r=1 { C(0) & !C(1) }", params)
    for sentence in (black, pair):
        assert exact_probability(params, IsingParams(0, 0), sentence).point == pytest.approx(
            exact_probability(params, BernoulliModel(0.5), sentence).point, abs=1e-14
        )
    tri = TorusParams(1, 3)
    all_black = parse_sentence("!EXIST 1 BALL r=0 { !C(0) }", tri)
    expected = math.exp(3) / (2 * math.exp(3) + 6 * math.exp(-1))
    assert exact_probability(tri, IsingParams(0, 1), all_black).point == pytest.approx(expected, abs=1e-14)
    with pytest.raises(TypeError):
        exact_probability(params, ShiftFieldParams({(0,): 1.0}), black)


def test_exact_probability_against_brute_force():
    params = TorusParams(2, 3)
    sentence = parse_sentence("EXIST 2 BALL r=0 { C(0,0) } { !C(0,0) } && !EXIST 1 BALL r=1 { C(0,0) & C(1,0) }", params)
    ising = IsingParams(-0.2, 0.5)
    logw, hits = [], []
    cache = {}
    for code in range(1 << 9):
        black = coloring_from_code(code, 2, 3)
        logw.append(naive_ising_logweight(black, ising.a, ising.b, 2, 3, 1, 1))
        hits.append(naive_satisfies(black, sentence, 2, 3, 1, 1, cache))
    w = np.exp(np.array(logw))
    expected = float(w[np.array(hits)].sum() / w.sum())
    assert exact_probability(params, ising, sentence).point == pytest.approx(expected, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(data=st.data(), a=st.floats(-1.5, 0.5), b=st.floats(-0.8, 0.8))
def test_negation_and_disjunction_properties(data, a, b):
    params = TorusParams(1, 6)
    model = IsingParams(a, b)
    first = data.draw(sentences(OFFSETS_1))
    second = data.draw(sentences(OFFSETS_1))
    p = exact_probability(params, model, first).point
    assert p + exact_probability(params, model, Not(first)).point == pytest.approx(1, abs=1e-12)
    assert exact_probability(params, model, Or(first, second)).point >= p - 1e-12


def test_monte_carlo_negation_on_shared_samples():
    params = TorusParams(1, 10)
    model = IsingParams(-0.4, 0.3)
    sentence = parse_sentence(TWO_BLACK, params)
    pos = estimate_probability(params, model, sentence, 5000, 12)
    neg = estimate_probability(params, model, Not(sentence), 5000, 12)
    assert pos.point + neg.point == pytest.approx(1, abs=1e-12)
    assert abs(pos.point + neg.point - 1) <= 2 * pos.stderr


@settings(max_examples=20, deadline=None)
@given(code=st.integers(0, 7), a=st.floats(-1, 0), b=st.floats(-0.5, 0.5))
def test_embedded_description_bounds_pattern(code, a, b):
    params = TorusParams(1, 12)
    small = ball_template(params, 1)
    desc = LocalConfiguration.from_code(small, code)
    pattern = exists(description_formula(desc), m=2)
    big = embed_pattern([desc], 2, params)
    model = IsingParams(a, b)
    p_pattern = exact_probability(TorusParams(1, 12), model, pattern).point
    p_big = exact_probability(params, model, exists(description_formula(big))).point
    assert p_pattern >= p_big - 1e-12


def test_estimate_examples():
    params = TorusParams(1, 8)
    black = parse_sentence(BLACK, params)
    est = estimate_probability(params, BernoulliModel(1.0), black, 1000, 0)
    assert (est.point, est.stderr, est.method) == (1.0, 0.0, "monte_carlo")
    model = IsingParams(-0.5, 0.4)
    sentence = parse_sentence(TWO_BLACK, params)
    exact = exact_probability(params, model, sentence).point
    inside = sum(
        abs(e.point - exact) <= 3 * e.stderr
        for e in (estimate_probability(params, model, sentence, 2000, seed) for seed in range(100))
    )
    assert inside >= 99
    one = estimate_probability(params, BernoulliModel(0.1), black, 10_000, 1)
    two = estimate_probability(params, BernoulliModel(0.1), black, 20_000, 1)
    four = estimate_probability(params, BernoulliModel(0.1), black, 40_000, 1)
    assert two.stderr / one.stderr == pytest.approx(1 / math.sqrt(2), rel=0.2)
    assert four.stderr / one.stderr == pytest.approx(0.5, rel=0.2)
    again = estimate_probability(params, model, sentence, 2000, 7)
    assert again == estimate_probability(params, model, sentence, 2000, 7)


def test_probability_estimate_invariants():
    est = ProbabilityEstimate.from_hits(30, 100)
    assert est.point == 0.3 and est.stderr == pytest.approx(math.sqrt(0.3 * 0.7 / 100))


def test_bounded_local_probability_bernoulli():
    params = TorusParams(2, 20)
    report = check_bounded_local_probability(params, BernoulliModel(0.5), 0, 500, 1)
    assert all(abs(f - 0.5) < 0.01 for f in report.frequencies.values())
    p = 0.3
    report = check_bounded_local_probability(params, BernoulliModel(p), 1, 2000, 2)
    samples = 2000 * params.size
    for desc, freq in report.frequencies.items():
        k = desc.plus_count
        expected = p ** k * (1 - p) ** (5 - k)
        # pooled counts are correlated across overlapping balls; 5 sigma with a 5x variance allowance
        assert abs(freq - expected) <= 5 * math.sqrt(5 * expected * (1 - expected) / samples)
    assert report.p_min == min(report.frequencies.values())


def test_bounded_local_probability_ising_exact():
    params = TorusParams(1, 9)
    model = IsingParams(-0.4, 0.5)
    exact = exact_ball_distribution(params, model, 1, center=4)
    template = ball_template(params, 1)
    # oracle: sum naive Boltzmann weights by the coloring of vertices 3, 4, 5
    oracle = np.zeros(8)
    for code in range(1 << 9):
        black = coloring_from_code(code, 1, 9)
        w = math.exp(naive_ising_logweight(black, model.a, model.b, 1, 9, 1, 1))
        oracle[black[(3,)] + 2 * black[(4,)] + 4 * black[(5,)]] += w
    assert np.allclose(exact, oracle / oracle.sum(), atol=1e-13)
    assert np.allclose(exact, exact_ball_distribution(params, model, 1, center=0), atol=1e-13)
    report = check_bounded_local_probability(params, model, template, 40_000, 3, pooled=False, center=4)
    freqs = report.array()
    sigma = np.sqrt(exact * (1 - exact) / 40_000)
    assert np.all(np.abs(freqs - exact) <= 4 * sigma)
    with pytest.raises(ValueError):
        check_bounded_local_probability(TorusParams(2, 11, "inf", 1), model, 2, 10, 0)


def test_exact_ball_distribution_single_site():
    params = TorusParams(1, 5)
    model = IsingParams(-0.3, 0.2)
    law = exact_ball_distribution(params, model, 0)
    sentence_free = exact_probability(params, model, parse_sentence("!EXIST 1 BALL r=0 { !C(0) }", params)).point
    assert law.sum() == pytest.approx(1, abs=1e-12)
    assert law[1] >= sentence_free


def test_mixing_center_geometry():
    params = TorusParams(1, 16)
    assert mixing_center(params, 1, 1) == (3, 1)
    assert mixing_center(params, 1, 4) == (6, 4)
    with pytest.raises(InfeasibleError):
        mixing_center(params, 1, 7)
    with pytest.raises(InfeasibleError):
        mixing_center(params, 0, 0)


def test_mixing_independent_models():
    params = TorusParams(2, 10)
    for model in (BernoulliModel(0.3), IsingParams(-0.5, 0.0)):
        report = estimate_mixing(params, model, 0, [1, 2, 4], 100_000, 5)
        assert all(v <= 4 / math.sqrt(100_000) for v in report.max_abs_cov.values())
        assert report.replicas == 100_000
        for cov in report.covariances.values():
            assert np.all(np.abs(cov) <= 1)


def test_mixing_against_exact_enumeration():
    params = TorusParams(1, 14)
    model = IsingParams(-1.0, 0.2)
    distances = [1, 2, 3]
    exact = exact_mixing(params, model, 0, distances)
    replicas = 100_000
    report = estimate_mixing(params, model, 0, distances, replicas, 9)
    for s in distances:
        cov, sd = exact[s]
        # binary events: all four entries share one magnitude
        assert np.allclose(np.abs(cov), np.abs(cov[0, 0]))
        assert np.all(np.abs(report.covariances[s] - cov) <= 3 * sd / math.sqrt(replicas))
    exact_max = [float(np.abs(exact[s][0]).max()) for s in distances]
    assert exact_max == sorted(exact_max, reverse=True)


@pytest.mark.parametrize("d,n,p,r", [(1, 12, 1, 1), (2, 7, 1, 1), (2, 8, "inf", 1), (2, 9, 2, 0)])
def test_mixing_center_set_distance_by_brute_force(d, n, p, r):
    params = TorusParams(d, n, p, 1)
    pn = math.inf if p == "inf" else p
    dist = {x: bfs(d, n, pn, 1, x) for x in itertools.product(range(n), repeat=d)}
    base = [tuple(o % n for o in off) for off in ball_template(params, r).offsets]
    for s in range(1, 2 * n):
        try:
            c, actual = mixing_center(params, r, s)
        except InfeasibleError:
            best = max(
                min(dist[u][tuple((a + o) % n for a, o in zip(y, off))] for u in base for off in ball_template(params, r).offsets)
                for y in dist
            )
            assert best < s
            continue
        cc = params.coords(c)
        other = [tuple((a + o) % n for a, o in zip(cc, off)) for off in ball_template(params, r).offsets]
        assert min(dist[u][v] for u in base for v in other) == actual >= s
