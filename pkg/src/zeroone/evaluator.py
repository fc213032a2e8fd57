"""Model checking of local sentences and probability estimators.

Batched routines take configurations as ``(R, n^d)`` boolean arrays.
A basic local sentence is decided by first marking, for each witness
formula, the centers whose ball satisfies it (the union of the match sets
of its complete descriptions), then searching for a scattered choice of
witnesses. The search is exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator

import numpy as np

from .configuration import Configuration, LocalConfiguration, ball_codes, codes_to_bits, shifted_bits
from .samplers import (
    ShiftFieldParams,
    _check_enumerable,
    exact_distribution,
    replica_seed,
    sample_batch,
)
from .sentence import (
    And,
    BasicLocalSentence,
    Not,
    Or,
    check_formula,
    evaluate_formula,
)
from .torus import BallTemplate, TorusParams, ball_template, torus_graph, vertex_difference

DENSE_MAX_SITES = 2048
_SAMPLE_CELLS = 1 << 22  # booleans per sampled chunk
_EXACT_CHUNK = 1 << 16
LOCAL_ENUMERATION_CAP = 20


class InfeasibleError(ValueError):
    """Requested geometry cannot be realised on this torus."""


@dataclass(frozen=True)
class ProbabilityEstimate:
    point: float
    stderr: float
    replicas: int
    method: str

    @classmethod
    def from_hits(cls, hits: int, replicas: int) -> "ProbabilityEstimate":
        p = hits / replicas
        return cls(p, math.sqrt(p * (1.0 - p) / replicas), replicas, "monte_carlo")


# witness search --------------------------------------------------------------

def witness_masks(configs: np.ndarray, sentence: BasicLocalSentence, params: TorusParams) -> list:
    """For each witness formula, the ``(R, n^d)`` mask of centers satisfying it."""
    template = ball_template(params, sentence.r)
    configs = np.asarray(configs, dtype=bool)
    shifted: dict = {}

    def lookup(offset):
        if offset not in shifted:
            shifted[offset] = shifted_bits(configs, offset, params)
        return shifted[offset]

    cache: dict = {}
    out = []
    for psi in sentence.psis:
        if psi not in cache:
            check_formula(psi, template)
            cache[psi] = np.broadcast_to(evaluate_formula(psi, lookup), configs.shape)
        out.append(cache[psi])
    return out


@lru_cache(maxsize=64)
def _far_matrix(params: TorusParams, r: int) -> np.ndarray:
    far = torus_graph(params).distance_matrix() > 2 * r
    far.setflags(write=False)
    return far


@lru_cache(maxsize=64)
def _near_mask(params: TorusParams, r: int) -> np.ndarray:
    near = torus_graph(params).origin_distances <= 2 * r
    near.setflags(write=False)
    return near


def _dense_exists(masks: list, far: np.ndarray, far32: np.ndarray) -> np.ndarray:
    if len(masks) == 1:
        return masks[0].any(axis=1)
    if len(masks) == 2:
        reach = (masks[0].astype(np.float32) @ far32) > 0
        return (reach & masks[1]).any(axis=1)
    # most selective witness first
    order = sorted(range(len(masks)), key=lambda i: masks[i].sum())
    first, rest = masks[order[0]], [masks[i] for i in order[1:]]
    result = np.zeros(first.shape[0], dtype=bool)
    for x in np.flatnonzero(first.any(axis=0)):
        rows = np.flatnonzero(first[:, x] & ~result)
        if rows.size:
            sub = [m[rows] & far[x] for m in rest]
            result[rows] = _dense_exists(sub, far, far32)
    return result


def _sparse_search(cands: list, params: TorusParams, near: np.ndarray, chosen: list) -> list | None:
    if not cands:
        return chosen
    i = min(range(len(cands)), key=lambda j: len(cands[j][1]))
    slot, pool = cands[i]
    rest = cands[:i] + cands[i + 1:]
    for x in pool:
        filtered = [(s, c[~near[vertex_difference(params, x, c)]]) for s, c in rest]
        if any(c.size == 0 for _, c in filtered):
            continue
        found = _sparse_search(filtered, params, near, chosen + [(slot, int(x))])
        if found is not None:
            return found
    return None


def find_witnesses(config: Configuration, sentence: BasicLocalSentence) -> tuple | None:
    """Witness vertices ``(x_1..x_m)`` for a basic local sentence, or ``None``."""
    params = config.params
    masks = [m[0] for m in witness_masks(config.spins[None, :], sentence, params)]
    cands = [(i, np.flatnonzero(m)) for i, m in enumerate(masks)]
    if any(c.size == 0 for _, c in cands):
        return None
    found = _sparse_search(cands, params, _near_mask(params, sentence.r), [])
    if found is None:
        return None
    return tuple(x for _, x in sorted(found))


def _leaf_batch(configs: np.ndarray, leaf: BasicLocalSentence, params: TorusParams) -> np.ndarray:
    masks = witness_masks(configs, leaf, params)
    if leaf.m == 1:
        return masks[0].any(axis=1)
    alive = np.logical_and.reduce([m.any(axis=1) for m in masks])
    result = np.zeros(configs.shape[0], dtype=bool)
    rows = np.flatnonzero(alive)
    if not rows.size:
        return result
    if params.size <= DENSE_MAX_SITES:
        far = _far_matrix(params, leaf.r)
        sub = [m[rows] for m in masks]
        result[rows] = _dense_exists(sub, far, far.astype(np.float32))
        return result
    near = _near_mask(params, leaf.r)
    blocked = int(near.sum())
    for row in rows:
        cands = [(i, np.flatnonzero(m[row])) for i, m in enumerate(masks)]
        # each chosen witness rules out at most |B(0, 2r)| vertices of any other list
        if min(c.size for _, c in cands) > (leaf.m - 1) * blocked:
            result[row] = True
        else:
            result[row] = _sparse_search(cands, params, near, []) is not None
    return result


def satisfies_batch(configs: np.ndarray, sentence, params: TorusParams) -> np.ndarray:
    """Truth value of ``sentence`` on every row of ``configs``."""
    configs = np.asarray(configs, dtype=bool)
    if configs.ndim != 2 or configs.shape[1] != params.size:
        raise ValueError(f"configs must have shape (R, {params.size})")
    if isinstance(sentence, BasicLocalSentence):
        return _leaf_batch(configs, sentence, params)
    if isinstance(sentence, Not):
        return ~satisfies_batch(configs, sentence.child, params)
    if isinstance(sentence, And):
        left = satisfies_batch(configs, sentence.left, params)
        right = np.zeros_like(left)
        if left.any():
            right[left] = satisfies_batch(configs[left], sentence.right, params)
        return right
    if isinstance(sentence, Or):
        left = satisfies_batch(configs, sentence.left, params)
        if left.all():
            return left
        out = left.copy()
        out[~left] = satisfies_batch(configs[~left], sentence.right, params)
        return out
    raise TypeError(f"not a sentence: {sentence!r}")


def satisfies(config: Configuration, sentence) -> bool:
    if isinstance(sentence, BasicLocalSentence):
        return find_witnesses(config, sentence) is not None
    if isinstance(sentence, Not):
        return not satisfies(config, sentence.child)
    if isinstance(sentence, And):
        return satisfies(config, sentence.left) and satisfies(config, sentence.right)
    if isinstance(sentence, Or):
        return satisfies(config, sentence.left) or satisfies(config, sentence.right)
    raise TypeError(f"not a sentence: {sentence!r}")


# probabilities ------------------------------------------------------------------

def _all_states(params: TorusParams) -> Iterator[tuple]:
    _check_enumerable(params)
    total = 1 << params.size
    for start in range(0, total, _EXACT_CHUNK):
        codes = np.arange(start, min(start + _EXACT_CHUNK, total), dtype=np.int64)
        yield codes, codes_to_bits(codes, params.size)


def exact_probability(params: TorusParams, model, sentence) -> ProbabilityEstimate:
    """Sum of the model mass over every configuration satisfying ``sentence``."""
    if isinstance(model, ShiftFieldParams):
        raise TypeError("shift fields have no tractable per-configuration mass")
    probs = exact_distribution(params, model)
    total = 0.0
    for codes, bits in _all_states(params):
        total += float(probs[codes][satisfies_batch(bits, sentence, params)].sum())
    return ProbabilityEstimate(min(max(total, 0.0), 1.0), 0.0, 0, "exact")


def sample_chunks(params: TorusParams, model, replicas: int, seed, method: str = "auto") -> Iterator[np.ndarray]:
    """Sampled configurations in fixed-size chunks; chunk ``j`` uses ``replica_seed(seed, j)``."""
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    rows = max(1, _SAMPLE_CELLS // params.size)
    for j, start in enumerate(range(0, replicas, rows)):
        count = min(rows, replicas - start)
        yield sample_batch(params, model, count, replica_seed(seed, j), method=method)


def estimate_probability(params: TorusParams, model, sentence, replicas: int, seed, method: str = "auto") -> ProbabilityEstimate:
    hits = 0
    for chunk in sample_chunks(params, model, replicas, seed, method):
        hits += int(satisfies_batch(chunk, sentence, params).sum())
    return ProbabilityEstimate.from_hits(hits, replicas)


# hypothesis diagnostics ------------------------------------------------------------

@dataclass(frozen=True)
class LocalProbabilityReport:
    template: BallTemplate
    frequencies: dict
    replicas: int
    pooled: bool

    @property
    def p_min(self) -> float:
        return min(self.frequencies.values())

    def array(self) -> np.ndarray:
        """Frequencies indexed by description code."""
        out = np.zeros(1 << self.template.beta)
        for desc, f in self.frequencies.items():
            out[desc.code] = f
        return out


def _template_arg(params, template) -> BallTemplate:
    return ball_template(params, template) if isinstance(template, int) else template


def check_bounded_local_probability(
    params: TorusParams,
    model,
    template,
    replicas: int,
    seed,
    pooled: bool = True,
    center=0,
    method: str = "auto",
) -> LocalProbabilityReport:
    """Empirical probability of every complete description of a ball.

    With ``pooled`` the count runs over every center (sensible for
    translation-invariant models); otherwise only ``center`` is used.
    """
    template = _template_arg(params, template)
    if template.beta > LOCAL_ENUMERATION_CAP:
        raise ValueError(f"beta={template.beta} exceeds cap {LOCAL_ENUMERATION_CAP}")
    x = params.index(center)
    counts = np.zeros(1 << template.beta, dtype=np.int64)
    for chunk in sample_chunks(params, model, replicas, seed, method):
        codes = ball_codes(chunk, template, params)
        codes = codes.ravel() if pooled else codes[:, x]
        counts += np.bincount(codes, minlength=counts.size)
    freqs = counts / counts.sum()
    return LocalProbabilityReport(
        template,
        {LocalConfiguration.from_code(template, c): float(f) for c, f in enumerate(freqs)},
        replicas,
        pooled,
    )


def ball_frequencies(configs: np.ndarray, template: BallTemplate, params: TorusParams) -> np.ndarray:
    """Pooled description frequencies of a batch (e.g. a Gibbs chain), by code."""
    counts = np.zeros(1 << template.beta, dtype=np.int64)
    rows = max(1, _SAMPLE_CELLS // params.size)
    for start in range(0, len(configs), rows):
        codes = ball_codes(configs[start:start + rows], template, params)
        counts += np.bincount(codes.ravel(), minlength=counts.size)
    return counts / counts.sum()


def exact_ball_distribution(params: TorusParams, model, r: int, center=0) -> np.ndarray:
    """Exact law of the coloring of ``B(center, r)``, indexed by description code."""
    template = ball_template(params, r)
    probs = exact_distribution(params, model)
    x = params.index(center)
    out = np.zeros(1 << template.beta)
    for codes, bits in _all_states(params):
        local = ball_codes(bits, template, params)[:, x]
        out += np.bincount(local, weights=probs[codes], minlength=out.size)
    return out


@dataclass(frozen=True)
class MixingReport:
    """Largest absolute covariance between local events, per requested distance."""

    radius: int
    distances: tuple
    actual_distances: dict
    max_abs_cov: dict
    covariances: dict = field(repr=False)
    replicas: int = 0
    catalog: str = "complete descriptions of B(0,r) x complete descriptions of B(c,r)"

    @property
    def monotone_decay(self) -> bool:
        values = [self.max_abs_cov[s] for s in self.distances]
        return all(a >= b for a, b in zip(values, values[1:]))


def mixing_center(params: TorusParams, r: int, s: int) -> tuple:
    """Center ``c`` whose r-ball is nearest to ``B(0, r)`` at set distance ``>= s``.

    Two graph balls are at set distance ``max(dist(0, c) - 2r, 0)``, so this
    is the lowest-index vertex of smallest distance ``>= s + 2r`` from 0.
    Returns ``(c, actual set distance)``.
    """
    if s < 1:
        raise InfeasibleError("mixing distances must be positive")
    ball_template(params, r)
    dist = torus_graph(params).origin_distances
    far = np.flatnonzero(dist >= s + 2 * r)
    if not far.size:
        raise InfeasibleError(f"no pair of radius-{r} balls at distance >= {s} on a torus of side {params.n}")
    c = int(far[np.argmin(dist[far])])
    return c, int(dist[c]) - 2 * r


def _mixing_geometry(params, r, distances):
    distances = tuple(int(s) for s in distances)
    if not distances:
        raise InfeasibleError("no distances requested")
    return distances, {s: mixing_center(params, r, s) for s in distances}


def estimate_mixing(
    params: TorusParams,
    model,
    ball_radius: int,
    distances,
    replicas: int,
    seed,
    method: str = "auto",
) -> MixingReport:
    """Empirical ``|P(e_B & e_C) - P(e_B) P(e_C)|`` over pairs of complete descriptions."""
    template = ball_template(params, ball_radius)
    distances, geometry = _mixing_geometry(params, ball_radius, distances)
    k = 1 << template.beta
    joint = {s: np.zeros(k * k, dtype=np.int64) for s in distances}
    for chunk in sample_chunks(params, model, replicas, seed, method):
        codes = ball_codes(chunk, template, params)
        for s in distances:
            c, _ = geometry[s]
            joint[s] += np.bincount(codes[:, 0] * k + codes[:, c], minlength=k * k)
    covs, maxima = {}, {}
    for s in distances:
        pj = joint[s].reshape(k, k) / replicas
        cov = pj - np.outer(pj.sum(axis=1), pj.sum(axis=0))
        covs[s] = cov
        maxima[s] = float(np.abs(cov).max())
    return MixingReport(
        ball_radius,
        distances,
        {s: geometry[s][1] for s in distances},
        maxima,
        covs,
        replicas,
    )


def exact_mixing(params: TorusParams, model, ball_radius: int, distances) -> dict:
    """Exact covariance matrices and per-replica standard deviations of their estimators.

    Returns ``{s: (cov, sd)}``; the Monte Carlo covariance from ``R``
    replicas has standard error close to ``sd / sqrt(R)``.
    """
    template = ball_template(params, ball_radius)
    distances, geometry = _mixing_geometry(params, ball_radius, distances)
    probs = exact_distribution(params, model)
    k = 1 << template.beta
    joint = {s: np.zeros(k * k) for s in distances}
    for codes, bits in _all_states(params):
        local = ball_codes(bits, template, params)
        w = probs[codes]
        for s in distances:
            c, _ = geometry[s]
            joint[s] += np.bincount(local[:, 0] * k + local[:, c], weights=w, minlength=k * k)
    out = {}
    for s in distances:
        pj = joint[s].reshape(k, k)
        pa, pc = pj.sum(axis=1)[:, None], pj.sum(axis=0)[None, :]
        cov = pj - pa * pc
        # second moment of (A - pA)(C - pC) from the 2x2 joint of the indicators
        m2 = (
            pj * (1 - pa) ** 2 * (1 - pc) ** 2
            + (pa - pj) * (1 - pa) ** 2 * pc ** 2
            + (pc - pj) * pa ** 2 * (1 - pc) ** 2
            + (1 - pa - pc + pj) * pa ** 2 * pc ** 2
        )
        out[s] = (cov, np.sqrt(np.maximum(m2 - cov ** 2, 0.0)))
    return out

