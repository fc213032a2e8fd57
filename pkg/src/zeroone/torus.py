"""Lattice torus geometry: neighborhoods, graph distance, balls, sub-lattices.

Vertices of ``{0..n-1}^d`` are encoded as row-major integer indices; the
coordinate tuple is a view computed on demand. The first coordinate is the
most significant one.
"""
from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np

Vertex = Union[int, Sequence[int]]

INF_NORM = math.inf


def _parse_norm(value) -> float:
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "oo"):
            return INF_NORM
        value = int(value)
    if isinstance(value, float) and math.isinf(value):
        return INF_NORM
    if int(value) != value or value < 1:
        raise ValueError(f"norm p must be a positive integer or 'inf', got {value!r}")
    return int(value)


def _within_norm(delta: Sequence[int], p, rho: int) -> bool:
    if p == INF_NORM:
        return max(abs(c) for c in delta) <= rho
    # integer arithmetic: sum |c|^p <= rho^p, no float ties for p=2
    return sum(abs(c) ** p for c in delta) <= rho ** p


@dataclass(frozen=True)
class TorusParams:
    """Dimension ``d``, side ``n``, ``L_p`` norm and neighborhood radius ``rho``."""

    d: int
    n: int
    p: float = 1
    rho: int = 1

    def __post_init__(self):
        object.__setattr__(self, "p", _parse_norm(self.p))
        for name, low in (("d", 1), ("n", 2), ("rho", 1)):
            value = getattr(self, name)
            if int(value) != value or value < low:
                raise ValueError(f"{name} must be an integer >= {low}, got {value!r}")
            object.__setattr__(self, name, int(value))

    @property
    def size(self) -> int:
        return self.n ** self.d

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    def index(self, x: Vertex) -> int:
        """Row-major index of a vertex given as an index or a coordinate tuple."""
        if isinstance(x, (int, np.integer)):
            if not 0 <= x < self.size:
                raise ValueError(f"vertex index {x} out of range for n^d={self.size}")
            return int(x)
        coords = tuple(int(c) for c in x)
        if len(coords) != self.d:
            raise ValueError(f"vertex {coords} must have {self.d} coordinates")
        if any(not 0 <= c < self.n for c in coords):
            raise ValueError(f"vertex {coords} has coordinates outside 0..{self.n - 1}")
        idx = 0
        for c in coords:
            idx = idx * self.n + c
        return idx

    def coords(self, index: int) -> tuple:
        if not 0 <= index < self.size:
            raise ValueError(f"vertex index {index} out of range")
        out = []
        for _ in range(self.d):
            index, c = divmod(index, self.n)
            out.append(c)
        return tuple(reversed(out))

    def wrap(self, coords: Sequence[int]) -> int:
        """Index of an arbitrary integer point reduced modulo ``n``."""
        return self.index(tuple(int(c) % self.n for c in coords))

    def to_text(self) -> str:
        p = "inf" if self.p == INF_NORM else str(self.p)
        return f"d = {self.d}\nn = {self.n}\np = {p}\nrho = {self.rho}\n"

    @classmethod
    def from_text(cls, text: str) -> "TorusParams":
        """Parse ``key = value`` lines with keys d, n, p, rho (``p = inf`` allowed)."""
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in ("d", "n", "p", "rho"):
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            values[key] = value.strip("\"'")
        missing = {"d", "n"} - set(values)
        if missing:
            raise ValueError(f"missing keys: {sorted(missing)}")
        return cls(
            d=int(values["d"]),
            n=int(values["n"]),
            p=values.get("p", 1),
            rho=int(values.get("rho", 1)),
        )

    def with_n(self, n: int) -> "TorusParams":
        return TorusParams(self.d, n, self.p, self.rho)


def neighbor_offsets(d: int, p, rho: int) -> list:
    """Nonzero offsets ``delta`` in Z^d with ``||delta||_p <= rho``, lexicographic."""
    p = _parse_norm(p)
    box = range(-rho, rho + 1)
    return [
        delta
        for delta in itertools.product(box, repeat=d)
        if any(delta) and _within_norm(delta, p, rho)
    ]


def neighbors(params: TorusParams, x: Vertex) -> list:
    """Indices of all ``y != x`` within ``rho`` of ``x`` in the torus metric, sorted."""
    base = params.coords(params.index(x))
    out = set()
    for delta in neighbor_offsets(params.d, params.p, params.rho):
        y = params.wrap([b + c for b, c in zip(base, delta)])
        out.add(y)
    out.discard(params.index(x))
    return sorted(out)


@dataclass(frozen=True)
class BallTemplate:
    """Offsets of ``B(0, r)`` in canonical (lexicographic) order."""

    radius: int
    offsets: tuple
    d: int
    p: float
    rho: int

    @property
    def beta(self) -> int:
        return len(self.offsets)

    @cached_property
    def position(self) -> dict:
        """Map offset -> position in the canonical order."""
        return {off: i for i, off in enumerate(self.offsets)}

    def __contains__(self, offset) -> bool:
        return tuple(offset) in self.position


def _zd_ball(d: int, p, rho: int, r: int) -> list:
    steps = neighbor_offsets(d, p, rho)
    origin = (0,) * d
    seen = {origin: 0}
    frontier = [origin]
    for depth in range(1, r + 1):
        nxt = []
        for u in frontier:
            for s in steps:
                v = tuple(a + b for a, b in zip(u, s))
                if v not in seen:
                    seen[v] = depth
                    nxt.append(v)
        frontier = nxt
    return sorted(seen)


def ball_template(params: TorusParams, r: int) -> BallTemplate:
    """Template of the ball of graph radius ``r``; requires ``n > 2 rho r``.

    For ``n > 2 rho r`` every lift of a ball vertex other than the one in
    ``[-rho r, rho r]^d`` lies too far away, so the torus ball is the
    injective projection of the Z^d ball grown by breadth-first search.
    """
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if params.n <= 2 * params.rho * r:
        raise ValueError(
            f"self-overlapping ball: need n > 2*rho*r, got n={params.n}, "
            f"rho={params.rho}, r={r}"
        )
    return _template(params.d, params.p, params.rho, r)


_TEMPLATES: dict = {}


def _template(d, p, rho, r) -> BallTemplate:
    key = (d, p, rho, r)
    if key not in _TEMPLATES:
        _TEMPLATES[key] = BallTemplate(r, tuple(_zd_ball(d, p, rho, r)), d, p, rho)
    return _TEMPLATES[key]


def translate_ball(template: BallTemplate, x: Vertex, params: TorusParams) -> list:
    """Vertices ``x + offsets (mod n)`` in canonical offset order."""
    _check_template(template, params)
    base = params.coords(params.index(x))
    return [params.wrap([b + c for b, c in zip(base, off)]) for off in template.offsets]


def _check_template(template: BallTemplate, params: TorusParams) -> None:
    if (template.d, template.p, template.rho) != (params.d, params.p, params.rho):
        raise ValueError("ball template was built for different torus parameters")
    if params.n <= 2 * params.rho * template.radius:
        raise ValueError("torus too small for this ball template")


def vertex_difference(params: TorusParams, x, y) -> np.ndarray:
    """Index of ``y - x (mod n)``; vectorized over array-valued ``x``, ``y``."""
    x = np.asarray(x)
    y = np.asarray(y)
    out = np.zeros(np.broadcast(x, y).shape, dtype=np.intp)
    scale = 1
    for _ in range(params.d):
        out += ((y // scale) % params.n - (x // scale) % params.n) % params.n * scale
        scale *= params.n
    return out


@dataclass(frozen=True)
class SubLattice:
    spacing: int
    centers: tuple
    tau: int


def sub_lattice(params: TorusParams, R: int | None = None, *, spacing: int | None = None) -> SubLattice:
    """Regular grid ``{alpha * spacing}^d`` with ``spacing = 2R+1`` unless given."""
    if spacing is None:
        if R is None or R < 1:
            raise ValueError("R must be >= 1")
        spacing = 2 * R + 1
    if spacing < 1 or spacing > params.n:
        raise ValueError(f"spacing {spacing} is larger than n={params.n}")
    count = params.n // spacing
    axis = [a * spacing for a in range(count)]
    centers = tuple(params.index(c) for c in itertools.product(axis, repeat=params.d))
    return SubLattice(spacing, centers, count ** params.d)


@dataclass(frozen=True)
class TorusGraph:
    """A torus with cached distance data.

    ``origin_distances[v]`` is the graph distance from vertex 0 to ``v``;
    by vertex-transitivity ``dist(x, y) = origin_distances[y - x]``.
    """

    params: TorusParams
    _templates: dict = field(default_factory=dict, compare=False, repr=False)

    def neighbors(self, x: Vertex) -> list:
        return neighbors(self.params, x)

    def template(self, r: int) -> BallTemplate:
        if r not in self._templates:
            self._templates[r] = ball_template(self.params, r)
        return self._templates[r]

    @cached_property
    def neighbor_table(self) -> np.ndarray:
        table = np.array([neighbors(self.params, x) for x in range(self.params.size)], dtype=np.intp)
        table.setflags(write=False)
        return table

    @cached_property
    def origin_distances(self) -> np.ndarray:
        dist = np.full(self.params.size, -1, dtype=np.int64)
        dist[0] = 0
        queue = deque([0])
        table = self.neighbor_table
        while queue:
            u = queue.popleft()
            for v in table[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        dist.setflags(write=False)
        return dist

    def distance(self, x: Vertex, y: Vertex) -> int:
        return torus_distance(self.params, x, y, graph=self)

    def distance_matrix(self) -> np.ndarray:
        idx = np.arange(self.params.size)
        return self.origin_distances[vertex_difference(self.params, idx[:, None], idx[None, :])]

    def set_distance(self, xs, ys) -> int:
        xs = np.asarray(list(xs))
        ys = np.asarray(list(ys))
        return int(self.origin_distances[vertex_difference(self.params, xs[:, None], ys[None, :])].min())


def torus_distance(params: TorusParams, x: Vertex, y: Vertex, graph: TorusGraph | None = None) -> int:
    """Graph distance in the torus.

    Cached ball templates are tried first (smallest radius containing
    ``y - x``); beyond them the breadth-first distance table is used.
    """
    graph = graph if graph is not None else _graph(params)
    xi, yi = params.index(x), params.index(y)
    if xi == yi:
        return 0
    diff = params.coords(int(vertex_difference(params, xi, yi)))
    lifted = tuple(c if c <= params.n // 2 else c - params.n for c in diff)
    # only a contiguous run of cached radii 0..r certifies "smallest r"
    r = 0
    while r in graph._templates:
        if lifted in graph._templates[r]:
            return r
        r += 1
    return int(graph.origin_distances[int(vertex_difference(params, xi, yi))])


_GRAPHS: dict = {}


def _graph(params: TorusParams) -> TorusGraph:
    g = _GRAPHS.get(params)
    if g is None:
        g = _GRAPHS[params] = TorusGraph(params)
    return g


def torus_graph(params: TorusParams) -> TorusGraph:
    """Shared cached :class:`TorusGraph` for ``params``."""
    return _graph(params)
