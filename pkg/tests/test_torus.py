import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zeroone.torus import (
    TorusGraph,
    TorusParams,
    ball_template,
    neighbors,
    sub_lattice,
    torus_distance,
    translate_ball,
)

from oracles import all_vertices, bfs, naive_neighbors, to_index


def coords(params, idxs):
    return {params.coords(i) for i in idxs}


def test_von_neumann_neighbors():
    params = TorusParams(2, 5, 1, 1)
    assert coords(params, neighbors(params, (0, 0))) == {(1, 0), (4, 0), (0, 1), (0, 4)}


def test_moore_neighbors_against_scan():
    params = TorusParams(2, 5, "inf", 1)
    expected = naive_neighbors(2, 5, math.inf, 1, (0, 0))
    assert len(expected) == 8
    assert coords(params, neighbors(params, (0, 0))) == expected


def test_cycle_wraparound():
    params = TorusParams(1, 4, 1, 1)
    assert coords(params, neighbors(params, (3,))) == {(2,), (0,)}


def test_neighbors_rejects_out_of_range():
    params = TorusParams(2, 5)
    with pytest.raises(ValueError):
        neighbors(params, (5, 0))
    with pytest.raises(ValueError):
        neighbors(params, (0,))
    with pytest.raises(ValueError):
        neighbors(params, 25)


@pytest.mark.parametrize("d,n,p,rho", [(1, 7, 1, 2), (2, 6, 2, 1), (2, 5, "inf", 2), (2, 7, 2, 2), (3, 4, 1, 1)])
def test_neighbors_match_scan_everywhere(d, n, p, rho):
    params = TorusParams(d, n, p, rho)
    pn = math.inf if p == "inf" else p
    for x in all_vertices(d, n):
        assert coords(params, neighbors(params, x)) == naive_neighbors(d, n, pn, rho, x)


def test_params_validation_and_text_roundtrip():
    for bad in [dict(d=0, n=5), dict(d=1, n=1), dict(d=1, n=5, rho=0), dict(d=1, n=5, p=0)]:
        with pytest.raises(ValueError):
            TorusParams(**bad)
    params = TorusParams(2, 9, "inf", 2)
    assert params.p == math.inf
    assert TorusParams.from_text(params.to_text()) == params
    assert TorusParams.from_text("d=1\nn=4\np=2\nrho=1") == TorusParams(1, 4, 2, 1)


@pytest.mark.parametrize(
    "p,beta",
    [(1, 5), ("inf", 9)],
)
def test_ball_sizes_radius_one(p, beta):
    assert ball_template(TorusParams(2, 7, p, 1), 1).beta == beta


def test_ball_radius_zero():
    template = ball_template(TorusParams(3, 4, 2, 2), 0)
    assert template.offsets == ((0, 0, 0),)
    assert template.beta == 1


def test_ball_requires_large_torus():
    with pytest.raises(ValueError, match="self-overlapping"):
        ball_template(TorusParams(1, 4, 1, 2), 1)
    ball_template(TorusParams(1, 5, 1, 2), 1)


@pytest.mark.parametrize("d,n,p,rho,r", [(2, 9, 1, 1, 2), (2, 9, 2, 2, 2), (2, 11, "inf", 1, 3), (1, 11, 1, 3, 1), (3, 5, 1, 1, 2)])
def test_ball_matches_bfs(d, n, p, rho, r):
    params = TorusParams(d, n, p, rho)
    pn = math.inf if p == "inf" else p
    dist = bfs(d, n, pn, rho, (0,) * d)
    expected = {v for v, k in dist.items() if k <= r}
    template = ball_template(params, r)
    assert coords(params, translate_ball(template, 0, params)) == expected
    assert list(template.offsets) == sorted(template.offsets)
    assert template.beta <= (2 * rho * r + 1) ** d


def test_ball_template_independent_of_n():
    assert ball_template(TorusParams(2, 7, 2, 2), 1) == ball_template(TorusParams(2, 30, 2, 2), 1)


def test_beta_nondecreasing():
    params = TorusParams(2, 40, 2, 2)
    betas = [ball_template(params, r).beta for r in range(6)]
    assert betas == sorted(betas)
    assert all(b <= (2 * 2 * r + 1) ** 2 for r, b in enumerate(betas))


def test_translate_ball():
    params = TorusParams(1, 6)
    template = ball_template(params, 1)
    assert translate_ball(template, 5, params) == [4, 5, 0]
    assert translate_ball(template, 0, params) == [params.wrap(o) for o in template.offsets]


def test_translate_group_action():
    params = TorusParams(2, 7, "inf", 1)
    template = ball_template(params, 2)
    for y, z in [((1, 2), (3, 6)), ((6, 6), (5, 0))]:
        yz = tuple((a + b) % 7 for a, b in zip(y, z))
        first = translate_ball(template, y, params)
        twice = [params.wrap(tuple(a + b for a, b in zip(params.coords(v), z))) for v in first]
        assert twice == translate_ball(template, yz, params)


def test_translate_rejects_foreign_template():
    with pytest.raises(ValueError):
        translate_ball(ball_template(TorusParams(2, 7, 1, 1), 1), 0, TorusParams(2, 7, "inf", 1))


def test_sub_lattice_examples():
    lat = sub_lattice(TorusParams(2, 20), 2)
    assert lat.spacing == 5 and lat.tau == 16 and len(lat.centers) == 16
    params = TorusParams(1, 7)
    lat = sub_lattice(params, 1)
    assert coords(params, lat.centers) == {(0,), (3,)} and lat.tau == 2
    params = TorusParams(2, 5)
    lat = sub_lattice(params, 2)
    assert lat.tau == 1 and lat.centers == (0,)
    with pytest.raises(ValueError):
        sub_lattice(TorusParams(1, 4), 2)


@pytest.mark.parametrize("d,n,p,rho,r,R", [(1, 17, 1, 1, 1, 2), (2, 13, "inf", 1, 1, 2), (2, 16, 1, 1, 1, 2), (2, 19, 2, 2, 1, 3)])
def test_sub_lattice_balls_disjoint(d, n, p, rho, r, R):
    params = TorusParams(d, n, p, rho)
    template = ball_template(params, r)
    lat = sub_lattice(params, R)
    seen = set()
    for c in lat.centers:
        ball = set(translate_ball(template, c, params))
        assert not ball & seen
        seen |= ball


def test_distance_examples():
    params = TorusParams(1, 10, 1, 2)
    assert torus_distance(params, 0, 0) == 0
    assert torus_distance(params, 0, 5) == 3


def test_distance_linf_closed_form():
    params = TorusParams(2, 7, "inf", 1)
    for x in all_vertices(2, 7):
        for y in all_vertices(2, 7):
            expected = max(min(abs(a - b), 7 - abs(a - b)) for a, b in zip(x, y))
            assert torus_distance(params, x, y) == expected


@pytest.mark.parametrize("d,n,p,rho", [(1, 8, 1, 1), (1, 8, 1, 3), (2, 5, 1, 1), (2, 6, 2, 2), (2, 8, "inf", 1), (2, 7, 1, 2)])
def test_distance_against_bfs_all_pairs(d, n, p, rho):
    params = TorusParams(d, n, p, rho)
    pn = math.inf if p == "inf" else p
    graph = TorusGraph(params)
    for r in range(0, 3):
        if n > 2 * rho * r:
            graph.template(r)
    matrix = graph.distance_matrix()
    for x in all_vertices(d, n):
        dist = bfs(d, n, pn, rho, x)
        for y, k in dist.items():
            assert graph.distance(x, y) == k
            assert torus_distance(params, x, y) == k
            assert matrix[to_index(x, n), to_index(y, n)] == k


@settings(max_examples=40, deadline=None)
@given(
    d=st.integers(1, 2),
    n=st.integers(2, 9),
    p=st.sampled_from([1, 2, "inf"]),
    rho=st.integers(1, 2),
    data=st.data(),
)
def test_neighborhood_symmetry_and_regularity(d, n, p, rho, data):
    params = TorusParams(d, n, p, rho)
    verts = range(params.size)
    degree = {len(neighbors(params, x)) for x in verts}
    assert len(degree) == 1
    x = data.draw(st.sampled_from(verts))
    y = data.draw(st.sampled_from(verts))
    z = data.draw(st.sampled_from(verts))
    assert (y in neighbors(params, x)) == (x in neighbors(params, y))
    dxy = torus_distance(params, x, y)
    assert dxy == torus_distance(params, y, x)
    assert torus_distance(params, x, z) <= dxy + torus_distance(params, y, z)
