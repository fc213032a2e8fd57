"""Binary configurations on the torus and local pattern matching.

A configuration stores one boolean per vertex in row-major order: ``True``
is a black vertex (spin +1), ``False`` a white one (spin -1). Batches of
configurations are plain ``(replicas, n^d)`` boolean arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .torus import (
    BallTemplate,
    SubLattice,
    TorusParams,
    translate_ball,
)


@dataclass(frozen=True, eq=False)
class Configuration:
    params: TorusParams
    spins: np.ndarray

    def __post_init__(self):
        spins = np.asarray(self.spins)
        if spins.dtype != bool:
            spins = _as_bits(spins)
        spins = np.ascontiguousarray(spins.reshape(-1))
        if spins.shape != (self.params.size,):
            raise ValueError(f"expected {self.params.size} spins, got {spins.size}")
        if spins.flags.writeable:
            spins = spins.copy()
            spins.setflags(write=False)
        object.__setattr__(self, "spins", spins)

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.params == other.params and np.array_equal(self.spins, other.spins)

    def __hash__(self):
        return hash((self.params, self.spins.tobytes()))

    @classmethod
    def constant(cls, params: TorusParams, black: bool) -> "Configuration":
        return cls(params, np.full(params.size, bool(black)))

    @classmethod
    def from_code(cls, params: TorusParams, code: int) -> "Configuration":
        """Bit ``i`` of ``code`` is the color of vertex ``i``."""
        return cls(params, codes_to_bits([code], params.size)[0])

    @classmethod
    def from_blacks(cls, params: TorusParams, blacks: Iterable) -> "Configuration":
        spins = np.zeros(params.size, dtype=bool)
        for x in blacks:
            spins[params.index(x)] = True
        return cls(params, spins)

    @property
    def code(self) -> int:
        return int(sum(1 << int(i) for i in np.flatnonzero(self.spins)))

    @property
    def values(self) -> np.ndarray:
        """Spins as a +1/-1 integer array shaped like the torus."""
        return np.where(self.spins, 1, -1).astype(np.int8).reshape(self.params.shape)

    def packed(self) -> bytes:
        return np.packbits(self.spins, bitorder="little").tobytes()

    def shifted(self, t) -> "Configuration":
        """Configuration ``eta'(x) = eta(x - t)``."""
        t = self.params.coords(self.params.index(t))
        grid = self.spins.reshape(self.params.shape)
        return Configuration(self.params, np.roll(grid, t, axis=tuple(range(self.params.d))))


def _as_bits(values) -> np.ndarray:
    values = np.asarray(values)
    if values.dtype == bool:
        return values
    uniq = np.unique(values)
    if np.isin(uniq, (-1, 1)).all():
        return values > 0
    if np.isin(uniq, (0, 1)).all():
        return values.astype(bool)
    raise ValueError("spins must be booleans, 0/1 or -1/+1")


def codes_to_bits(codes, width: int) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    return ((codes[:, None] >> np.arange(width, dtype=np.int64)) & 1).astype(bool)


def bits_to_codes(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    return bits @ (np.int64(1) << np.arange(bits.shape[-1], dtype=np.int64))


@dataclass(frozen=True)
class LocalConfiguration:
    """Colors of the ball ``B(0, r)`` in canonical offset order.

    Read as a sentence it is the complete description asserting ``C y`` for
    every black offset and its negation for every white one.
    """

    template: BallTemplate
    colors: tuple

    def __post_init__(self):
        colors = tuple(bool(c) for c in self.colors)
        if len(colors) != self.template.beta:
            raise ValueError(f"need {self.template.beta} colors, got {len(colors)}")
        object.__setattr__(self, "colors", colors)

    @property
    def plus_count(self) -> int:
        return sum(self.colors)

    @property
    def radius(self) -> int:
        return self.template.radius

    @property
    def code(self) -> int:
        return sum(1 << i for i, c in enumerate(self.colors) if c)

    @classmethod
    def from_code(cls, template: BallTemplate, code: int) -> "LocalConfiguration":
        return cls(template, tuple((code >> i) & 1 for i in range(template.beta)))

    @classmethod
    def from_string(cls, template: BallTemplate, text: str) -> "LocalConfiguration":
        """Parse ``+``/``-`` characters in canonical offset order."""
        chars = [c for c in text if not c.isspace()]
        if any(c not in "+-" for c in chars):
            raise ValueError("description string must contain only '+' and '-'")
        return cls(template, tuple(c == "+" for c in chars))

    def to_string(self) -> str:
        return "".join("+" if c else "-" for c in self.colors)

    def color_at(self, offset) -> bool:
        return self.colors[self.template.position[tuple(offset)]]


CompleteDescription = LocalConfiguration


def restrict(config: Configuration, x, template: BallTemplate) -> LocalConfiguration:
    ball = translate_ball(template, x, config.params)
    return LocalConfiguration(template, tuple(config.spins[ball]))


def match_at(config: Configuration, x, local: LocalConfiguration) -> bool:
    ball = translate_ball(local.template, x, config.params)
    return bool(np.array_equal(config.spins[ball], np.asarray(local.colors)))


def shifted_bits(configs: np.ndarray, offset, params: TorusParams) -> np.ndarray:
    """``out[..., x] = configs[..., x + offset]`` for every vertex ``x``."""
    configs = np.asarray(configs, dtype=bool)
    if not any(offset):
        return configs
    lead = configs.shape[:-1]
    grid = configs.reshape(lead + params.shape)
    axes = tuple(range(len(lead), len(lead) + params.d))
    return np.roll(grid, tuple(-o for o in offset), axis=axes).reshape(configs.shape)


def gather_balls(configs: np.ndarray, template: BallTemplate, params: TorusParams) -> np.ndarray:
    """``(R, n^d, beta)`` ball colors for every replica and every center."""
    configs = np.asarray(configs, dtype=bool)
    return np.stack([shifted_bits(configs, off, params) for off in template.offsets], axis=-1)


def ball_codes(configs: np.ndarray, template: BallTemplate, params: TorusParams) -> np.ndarray:
    """Integer code of the ball coloring at every center, ``(R, n^d)``."""
    configs = np.asarray(configs, dtype=bool)
    codes = np.zeros(configs.shape[:-1] + (params.size,), dtype=np.int64)
    for i, off in enumerate(template.offsets):
        codes |= shifted_bits(configs, off, params).astype(np.int64) << i
    return codes


def match_mask(configs: np.ndarray, local: LocalConfiguration, params: TorusParams) -> np.ndarray:
    """Indicator ``I_x^D`` for every replica and center."""
    return ball_codes(configs, local.template, params) == local.code


def count_matches(
    config: Configuration,
    local: LocalConfiguration,
    sub: SubLattice | None = None,
) -> int:
    """Number of centers where ``local`` occurs; over ``sub.centers`` if given."""
    mask = match_mask(config.spins[None, :], local, config.params)[0]
    if sub is not None:
        mask = mask[list(sub.centers)]
    return int(mask.sum())


# textual dumps -------------------------------------------------------------

def _norm_text(p) -> str:
    return "inf" if p == float("inf") else str(p)


def dump_configuration(config: Configuration) -> str:
    """Header ``d n p rho`` then ``+``/``-`` characters, ``n`` per line."""
    params = config.params
    head = f"{params.d} {params.n} {_norm_text(params.p)} {params.rho}\n"
    chars = np.where(config.spins, "+", "-")
    rows = ["".join(chars[i:i + params.n]) for i in range(0, params.size, params.n)]
    return head + "\n".join(rows) + "\n"


def parse_dump(text: str) -> Configuration:
    configs = list(iter_dumps(text))
    if len(configs) != 1:
        raise ValueError(f"expected one configuration, found {len(configs)}")
    return configs[0]


def iter_dumps(text: str) -> Iterator[Configuration]:
    """Read consecutive dumps; lines starting with ``#`` are ignored."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    i = 0
    while i < len(lines):
        fields = lines[i].split()
        if len(fields) != 4:
            raise ValueError(f"bad dump header {lines[i]!r}; expected 'd n p rho'")
        params = TorusParams(int(fields[0]), int(fields[1]), fields[2], int(fields[3]))
        i += 1
        chars: list = []
        while len(chars) < params.size:
            if i >= len(lines):
                raise ValueError("truncated configuration dump")
            chars.extend(lines[i])
            i += 1
        if len(chars) != params.size or any(c not in "+-" for c in chars):
            raise ValueError("dump body must hold exactly n^d '+'/'-' characters")
        yield Configuration(params, np.array([c == "+" for c in chars]))
