"""Random field samplers on the torus.

Every sampler is deterministic given its seed. Replica ``i`` of a seeded
batch of chains uses ``numpy.random.SeedSequence(seed, spawn_key=(i,))``;
SeedSequence hashing is stable across platforms and numpy releases.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Union

import numba
import numpy as np
from scipy.special import logsumexp

from .configuration import Configuration, codes_to_bits
from .torus import TorusParams, ball_template, torus_graph, translate_ball

EXACT_MAX_SITES = 24
DEFAULT_BURN_IN = 64
_CHUNK_ROWS = 4096
_SPARSE_RATE = 1 / 64


class EnumerationBoundError(RuntimeError):
    """Raised when exact enumeration over ``2^(n^d)`` states is infeasible."""


# models ---------------------------------------------------------------------

@dataclass(frozen=True)
class BernoulliModel:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"Bernoulli probability must lie in [0, 1], got {self.p}")


@dataclass(frozen=True)
class IsingParams:
    """Surface potential ``a`` and pair potential ``b``."""

    a: float
    b: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError("Ising potentials must be finite")

    @property
    def plus_probability(self) -> float:
        """Single-site probability of +1 when ``b == 0``."""
        return 1.0 / (1.0 + math.exp(-2.0 * self.a))


IsingModel = IsingParams


@dataclass(frozen=True)
class ShiftFieldParams:
    """Thresholded moving average ``eta(t) = +1 iff sum_s w_s xi_{t-s} > threshold``."""

    kernel: Mapping
    threshold: float = 0.0
    innovation: str = "gaussian"

    def __post_init__(self):
        kernel = {tuple(int(c) for c in k): float(v) for k, v in dict(self.kernel).items()}
        if not kernel or not any(kernel.values()):
            raise ValueError("kernel needs at least one nonzero weight")
        if len({len(k) for k in kernel}) != 1:
            raise ValueError("kernel offsets must share one dimension")
        if self.innovation not in ("gaussian", "rademacher", "uniform"):
            raise ValueError(f"unknown innovation distribution {self.innovation!r}")
        object.__setattr__(self, "kernel", kernel)

    def __hash__(self):
        return hash((tuple(sorted(self.kernel.items())), self.threshold, self.innovation))


ShiftFieldModel = ShiftFieldParams
FieldModel = Union[BernoulliModel, IsingParams, ShiftFieldParams]


def replica_seed(seed, replica: int) -> np.random.SeedSequence:
    """Seed of replica ``replica``; nests when ``seed`` is itself a SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + (int(replica),))
    return np.random.SeedSequence(int(seed), spawn_key=(int(replica),))


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


# Bernoulli -------------------------------------------------------------------

def sample_bernoulli(params: TorusParams, p: float, seed) -> Configuration:
    return Configuration(params, sample_bernoulli_batch(params, p, 1, seed)[0])


def sample_bernoulli_batch(params: TorusParams, p: float, replicas: int, seed) -> np.ndarray:
    """I.i.d. spins, black with probability ``p``.

    When black (or white) sites are rare, each row draws its binomial count
    and then that many distinct positions, which is exact and much cheaper
    than one uniform per site.
    """
    BernoulliModel(p)
    rng = _rng(seed)
    rare = min(p, 1.0 - p)
    if rare <= _SPARSE_RATE and params.size >= 64:
        out = np.zeros((replicas, params.size), dtype=bool)
        counts = rng.binomial(params.size, rare, size=replicas)
        for row in np.flatnonzero(counts):
            out[row, rng.choice(params.size, size=counts[row], replace=False)] = True
        return ~out if rare != p else out
    out = np.empty((replicas, params.size), dtype=bool)
    rows = max(1, _CHUNK_ROWS * 256 // params.size)
    for start in range(0, replicas, rows):
        stop = min(start + rows, replicas)
        out[start:stop] = rng.random((stop - start, params.size)) < p
    return out


# Ising, exact ------------------------------------------------------------------

def edges(params: TorusParams) -> np.ndarray:
    """Undirected edges as ``(E, 2)`` index pairs with ``x < y``, each listed once."""
    table = torus_graph(params).neighbor_table
    pairs = [(x, int(y)) for x in range(params.size) for y in table[x] if x < y]
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def _check_enumerable(params: TorusParams) -> None:
    if params.size > EXACT_MAX_SITES:
        raise EnumerationBoundError(
            f"exact enumeration needs n^d <= {EXACT_MAX_SITES}, got {params.size}"
        )


def ising_log_weights(params: TorusParams, ising: IsingParams) -> np.ndarray:
    """Unnormalized log-mass ``a sum eta + b sum_edges eta eta`` for every state code."""
    _check_enumerable(params)
    size = params.size
    edge_list = edges(params)
    total = 1 << size
    out = np.empty(total, dtype=np.float64)
    step = 1 << min(size, 20)
    for start in range(0, total, step):
        codes = np.arange(start, min(start + step, total), dtype=np.int64)
        plus = np.zeros(codes.shape, dtype=np.int64)
        for i in range(size):
            plus += (codes >> i) & 1
        disagree = np.zeros(codes.shape, dtype=np.int64)
        for x, y in edge_list:
            disagree += ((codes >> x) ^ (codes >> y)) & 1
        out[start:start + codes.size] = (
            ising.a * (2 * plus - size) + ising.b * (len(edge_list) - 2 * disagree)
        )
    return out


def ising_exact_distribution(params: TorusParams, ising: IsingParams) -> np.ndarray:
    """Probability of every configuration, indexed by state code.

    Bit ``i`` of the code is the color of vertex ``i``
    (see :meth:`Configuration.from_code`).
    """
    logw = ising_log_weights(params, ising)
    return np.exp(logw - logsumexp(logw))


def bernoulli_exact_distribution(params: TorusParams, p: float) -> np.ndarray:
    _check_enumerable(params)
    BernoulliModel(p)
    total = 1 << params.size
    codes = np.arange(total, dtype=np.int64)
    plus = np.zeros(total, dtype=np.int64)
    for i in range(params.size):
        plus += (codes >> i) & 1
    return np.power(p, plus) * np.power(1.0 - p, params.size - plus)


def exact_distribution(params: TorusParams, model) -> np.ndarray:
    if isinstance(model, BernoulliModel):
        return bernoulli_exact_distribution(params, model.p)
    if isinstance(model, IsingParams):
        return ising_exact_distribution(params, model)
    raise TypeError(f"no tractable per-configuration mass for {type(model).__name__}")


def sample_from_table(params: TorusParams, probs: np.ndarray, replicas: int, seed) -> np.ndarray:
    cdf = np.cumsum(probs)
    u = _rng(seed).random(replicas) * cdf[-1]
    codes = np.minimum(np.searchsorted(cdf, u, side="right"), len(probs) - 1)
    return codes_to_bits(codes, params.size)


def ising_exact_sample(params: TorusParams, ising: IsingParams, seed) -> Configuration:
    return Configuration(params, ising_exact_sample_batch(params, ising, 1, seed)[0])


def ising_exact_sample_batch(params: TorusParams, ising: IsingParams, replicas: int, seed) -> np.ndarray:
    return sample_from_table(params, ising_exact_distribution(params, ising), replicas, seed)


# Ising, heat bath ------------------------------------------------------------------

@numba.njit(cache=True)
def _heat_bath(state, nbr, a, b, uniforms, out, burn):
    # state: int8 spins; uniforms: (sweeps, N); rows >= burn are recorded
    n_sweeps, n_sites = uniforms.shape
    for s in range(n_sweeps):
        for x in range(n_sites):
            field = 0
            for j in range(nbr.shape[1]):
                field += state[nbr[x, j]]
            h = a + b * field
            if uniforms[s, x] * (1.0 + math.exp(-2.0 * h)) < 1.0:
                state[x] = 1
            else:
                state[x] = -1
        if s >= burn:
            for x in range(n_sites):
                out[s - burn, x] = state[x] > 0


def heat_bath_probability(ising: IsingParams, neighbor_sum: float) -> float:
    """Probability that a site update sets +1 given the sum of neighbor spins."""
    h = ising.a + ising.b * neighbor_sum
    return math.exp(h) / (math.exp(h) + math.exp(-h))


def _neighbors_int(params: TorusParams) -> np.ndarray:
    return np.ascontiguousarray(torus_graph(params).neighbor_table, dtype=np.int64)


def ising_gibbs_chain(
    params: TorusParams,
    ising: IsingParams,
    sweeps: int,
    burn_in: int = DEFAULT_BURN_IN,
    seed=None,
    initial: Configuration | None = None,
) -> np.ndarray:
    """Systematic-scan heat-bath chain; one snapshot per post-burn-in sweep.

    Returns a ``(sweeps, n^d)`` boolean array.
    """
    return np.concatenate(list(_chain_chunks(params, ising, sweeps, burn_in, seed, initial)), axis=0)


def iter_gibbs_chain(params, ising, sweeps, burn_in=DEFAULT_BURN_IN, seed=None, initial=None) -> Iterator[Configuration]:
    for block in _chain_chunks(params, ising, sweeps, burn_in, seed, initial):
        for row in block:
            yield Configuration(params, row)


def _chain_chunks(params, ising, sweeps, burn_in, seed, initial):
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    rng = _rng(seed)
    nbr = _neighbors_int(params)
    if initial is None:
        state = np.where(rng.random(params.size) < 0.5, 1, -1).astype(np.int8)
    else:
        state = np.where(initial.spins, 1, -1).astype(np.int8)
    rows = max(1, (1 << 20) // params.size)
    if burn_in:
        left = burn_in
        while left:
            k = min(rows, left)
            _heat_bath(state, nbr, ising.a, ising.b, rng.random((k, params.size)), np.empty((0, params.size), dtype=np.bool_), k)
            left -= k
    left = sweeps
    while left:
        k = min(rows, left)
        out = np.empty((k, params.size), dtype=np.bool_)
        _heat_bath(state, nbr, ising.a, ising.b, rng.random((k, params.size)), out, 0)
        left -= k
        yield out


def gibbs_replicas(
    params: TorusParams,
    ising: IsingParams,
    replicas: int,
    seed,
    burn_in: int = DEFAULT_BURN_IN,
) -> np.ndarray:
    """Final states of independent chains, replica ``i`` seeded by ``replica_seed(seed, i)``."""
    out = np.empty((replicas, params.size), dtype=bool)
    for i in range(replicas):
        out[i] = ising_gibbs_chain(params, ising, 1, burn_in, replica_seed(seed, i))[0]
    return out


# shift fields ----------------------------------------------------------------------

def _innovations(rng, kind: str, shape) -> np.ndarray:
    if kind == "gaussian":
        return rng.standard_normal(shape)
    if kind == "rademacher":
        return np.where(rng.random(shape) < 0.5, 1.0, -1.0)
    return rng.uniform(-1.0, 1.0, shape)


def _check_kernel(params: TorusParams, sf: ShiftFieldParams) -> None:
    dims = {len(k) for k in sf.kernel}
    if dims != {params.d}:
        raise ValueError(f"kernel offsets must have {params.d} coordinates")
    for axis in range(params.d):
        coords = [k[axis] for k in sf.kernel]
        if max(coords) - min(coords) >= params.n:
            raise ValueError("kernel support too large for the torus")


def sample_shift_field(params: TorusParams, sf: ShiftFieldParams, seed) -> Configuration:
    return Configuration(params, sample_shift_field_batch(params, sf, 1, seed)[0])


def sample_shift_field_batch(params: TorusParams, sf: ShiftFieldParams, replicas: int, seed) -> np.ndarray:
    """Innovations live on the torus itself (periodic), not on Z^d."""
    _check_kernel(params, sf)
    rng = _rng(seed)
    out = np.empty((replicas, params.size), dtype=bool)
    axes = tuple(range(1, params.d + 1))
    rows = max(1, _CHUNK_ROWS * 64 // params.size)
    for start in range(0, replicas, rows):
        stop = min(start + rows, replicas)
        xi = _innovations(rng, sf.innovation, (stop - start,) + params.shape)
        y = np.zeros_like(xi)
        for offset, weight in sorted(sf.kernel.items()):
            y += weight * np.roll(xi, offset, axis=axes)
        out[start:stop] = (y > sf.threshold).reshape(stop - start, -1)
    return out


# dispatch -----------------------------------------------------------------------

def sample_batch(params: TorusParams, model, replicas: int, seed, method: str = "auto", burn_in: int = DEFAULT_BURN_IN) -> np.ndarray:
    """Draw ``replicas`` independent configurations as a ``(replicas, n^d)`` array.

    For Ising models ``method`` selects ``exact`` (inverse CDF over the full
    table), ``gibbs`` (independent heat-bath chains) or ``auto``: the product
    sampler when ``b == 0``, exact for ``n^d <= 20``, otherwise Gibbs.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    if isinstance(model, BernoulliModel):
        return sample_bernoulli_batch(params, model.p, replicas, seed)
    if isinstance(model, ShiftFieldParams):
        return sample_shift_field_batch(params, model, replicas, seed)
    if isinstance(model, IsingParams):
        if method == "auto":
            if model.b == 0:
                return sample_bernoulli_batch(params, model.plus_probability, replicas, seed)
            method = "exact" if params.size <= 20 else "gibbs"
        if method == "exact":
            return ising_exact_sample_batch(params, model, replicas, seed)
        if method == "gibbs":
            return gibbs_replicas(params, model, replicas, seed, burn_in)
        raise ValueError(f"unknown sampling method {method!r}")
    raise TypeError(f"unknown model {model!r}")


# potentials schedules ----------------------------------------------------------------

@dataclass(frozen=True)
class PotentialSchedule:
    """``a(n) = log c - (d / 2k) * theta * log n`` or an explicit table; ``b`` likewise."""

    c: float = 1.0
    k: int = 1
    theta: float = 1.0
    b: float = 0.0
    a_table: Mapping = field(default_factory=dict)
    b_table: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("schedule constant c must be positive")
        if self.k < 1:
            raise ValueError("schedule index k must be >= 1")
        object.__setattr__(self, "a_table", {int(n): float(a) for n, a in dict(self.a_table).items()})
        object.__setattr__(self, "b_table", {int(n): float(b) for n, b in dict(self.b_table).items()})

    def __hash__(self):
        return hash((self.c, self.k, self.theta, self.b, tuple(sorted(self.a_table.items())), tuple(sorted(self.b_table.items()))))


def schedule_eval(schedule: PotentialSchedule, n: int, d: int) -> IsingParams:
    if schedule.a_table:
        if n not in schedule.a_table:
            raise ValueError(f"n={n} not in the schedule table")
        a = schedule.a_table[n]
    else:
        a = math.log(schedule.c) - (d / (2 * schedule.k)) * schedule.theta * math.log(n)
    b = schedule.b_table.get(n, schedule.b) if schedule.b_table else schedule.b
    if not a < 0:
        raise ValueError(f"schedule gives a({n}) = {a} >= 0; a negative surface potential is required")
    return IsingParams(a, b)


# local energy and conditional law of a ball ----------------------------------------------

def ball_boundary(params: TorusParams, center, r: int) -> list:
    """Vertices outside ``B(center, r)`` adjacent to it, sorted by index."""
    ball = set(translate_ball(ball_template(params, r), center, params))
    table = torus_graph(params).neighbor_table
    return sorted({int(y) for x in ball for y in table[x] if int(y) not in ball})


def local_energy(params: TorusParams, ising: IsingParams, center, r: int, zeta, sigma) -> float:
    """Energy of the ball plus every edge touching it.

    ``zeta`` colors ``B(center, r)`` in canonical offset order and ``sigma``
    colors :func:`ball_boundary` in index order (booleans, True = +1).
    """
    ball = translate_ball(ball_template(params, r), center, params)
    boundary = ball_boundary(params, center, r)
    if len(zeta) != len(ball) or len(sigma) != len(boundary):
        raise ValueError("zeta/sigma lengths do not match the ball and its boundary")
    spin = {v: (1 if c else -1) for v, c in zip(ball, zeta)}
    spin.update({v: (1 if c else -1) for v, c in zip(boundary, sigma)})
    inside = set(ball)
    table = torus_graph(params).neighbor_table
    pair = 0
    for y in ball:
        for z in table[y]:
            z = int(z)
            if z in inside and z < y:
                continue  # counted from the smaller endpoint
            pair += spin[y] * spin[z]
    return ising.a * sum(spin[v] for v in ball) + ising.b * pair


def conditional_description_probabilities(params: TorusParams, ising: IsingParams, center, r: int, sigma) -> np.ndarray:
    """Law of the ball coloring given ``sigma`` on its boundary, indexed by description code."""
    beta = ball_template(params, r).beta
    energies = np.array([
        local_energy(params, ising, center, r, [(code >> i) & 1 for i in range(beta)], sigma)
        for code in range(1 << beta)
    ])
    return np.exp(energies - logsumexp(energies))
