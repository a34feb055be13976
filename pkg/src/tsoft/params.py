"""Partitioned parameter vectors.

A :class:`ParamSet` keeps all parameters of a network in one contiguous
float64 buffer and exposes named, fixed-length slices of it as
:class:`ParamSubset` views (one per weight matrix and one per bias vector).
Update rules operate either subset by subset or on the whole buffer at once.

A ParamSet must not be written from more than one thread at a time; reads
are safe to share.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import CongruenceError, DomainError, ParameterError


@dataclass
class ParamSubset:
    """A named block of parameters, usually a view into a ParamSet buffer."""

    name: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size < 1:
            raise ParameterError(f"subset {self.name!r} must be a non-empty 1-d vector")

    def __len__(self):
        return self.values.size

    @property
    def length(self) -> int:
        return self.values.size


class ParamSet:
    """Ordered named subsets backed by one flat float64 array.

    Args:
        names: subset labels, unique.
        lengths: number of entries per subset, each >= 1.
        values: optional initial flat values (copied); zeros if omitted.
    """

    __slots__ = ("names", "lengths", "offsets", "flat")

    def __init__(self, names: Sequence[str], lengths: Sequence[int], values=None):
        names = tuple(str(n) for n in names)
        lengths = tuple(int(n) for n in lengths)
        if not names or len(names) != len(lengths):
            raise ParameterError("names and lengths must be non-empty and of equal size")
        if len(set(names)) != len(names):
            raise ParameterError("subset names must be unique")
        if any(n < 1 for n in lengths):
            raise ParameterError("every subset needs at least one entry")
        self.names = names
        self.lengths = lengths
        self.offsets = tuple(int(o) for o in np.concatenate(([0], np.cumsum(lengths)[:-1])))
        total = sum(lengths)
        if values is None:
            self.flat = np.zeros(total)
        else:
            flat = np.array(values, dtype=np.float64).ravel()
            if flat.size != total:
                raise CongruenceError(f"expected {total} values, got {flat.size}")
            if not np.all(np.isfinite(flat)):
                raise DomainError("parameter values must be finite")
            self.flat = flat

    @classmethod
    def from_subsets(cls, subsets: Sequence[ParamSubset]) -> "ParamSet":
        subsets = list(subsets)
        return cls(
            [s.name for s in subsets],
            [s.length for s in subsets],
            np.concatenate([s.values for s in subsets]) if subsets else None,
        )

    @classmethod
    def from_arrays(cls, arrays: dict) -> "ParamSet":
        """Build from a ``{name: array}`` mapping; arrays are flattened in order."""
        flat = [np.asarray(a, dtype=np.float64).ravel() for a in arrays.values()]
        return cls(list(arrays), [a.size for a in flat], np.concatenate(flat))

    def __len__(self):
        return len(self.names)

    def __iter__(self) -> Iterator[ParamSubset]:
        for i in range(len(self.names)):
            yield self.subset(i)

    def __repr__(self):
        parts = ", ".join(f"{n}[{k}]" for n, k in zip(self.names, self.lengths))
        return f"ParamSet({parts})"

    @property
    def size(self) -> int:
        return self.flat.size

    def subset(self, key) -> ParamSubset:
        """Return subset ``key`` (index or name) as a view; writes go through."""
        i = self.names.index(key) if isinstance(key, str) else int(key)
        o = self.offsets[i]
        return ParamSubset(self.names[i], self.flat[o:o + self.lengths[i]])

    def view(self, key, shape) -> np.ndarray:
        """Reshaped view of one subset, e.g. a weight matrix."""
        return self.subset(key).values.reshape(shape)

    def copy(self) -> "ParamSet":
        out = ParamSet.__new__(ParamSet)
        out.names, out.lengths, out.offsets = self.names, self.lengths, self.offsets
        out.flat = self.flat.copy()
        return out

    def zeros_like(self) -> "ParamSet":
        out = self.copy()
        out.flat[:] = 0.0
        return out

    def assign(self, other: "ParamSet") -> None:
        """Overwrite values in place with those of a congruent set."""
        check_congruent(self, other)
        self.flat[:] = other.flat

    def is_congruent(self, other: "ParamSet") -> bool:
        return self.names == other.names and self.lengths == other.lengths

    def allclose(self, other: "ParamSet", **kw) -> bool:
        return self.is_congruent(other) and np.allclose(self.flat, other.flat, **kw)

    def equals(self, other: "ParamSet") -> bool:
        return self.is_congruent(other) and np.array_equal(self.flat, other.flat)


def check_congruent(a: ParamSet, b: ParamSet) -> None:
    if not a.is_congruent(b):
        raise CongruenceError(
            f"incongruent parameter sets: {list(zip(a.names, a.lengths))} "
            f"vs {list(zip(b.names, b.lengths))}"
        )


def _check_pair(a: ParamSubset, b: ParamSubset) -> None:
    if a.length != b.length:
        raise CongruenceError(f"subset lengths differ: {a.length} vs {b.length}")


def mean_sq_diff(theta_i: ParamSubset, phi_i: ParamSubset) -> float:
    """Mean squared difference between two subsets of equal length."""
    _check_pair(theta_i, phi_i)
    d = theta_i.values - phi_i.values
    if not np.all(np.isfinite(d)):
        raise DomainError("non-finite parameter values")
    return float(np.dot(d, d) / d.size)


def lerp_subset(phi_i: ParamSubset, theta_i: ParamSubset, tau_i: float) -> ParamSubset:
    """Return ``(1 - tau_i) * phi_i + tau_i * theta_i`` as a new subset."""
    _check_pair(phi_i, theta_i)
    if not 0.0 < tau_i <= 1.0:
        raise ParameterError(f"tau_i must lie in (0, 1], got {tau_i}")
    return ParamSubset(phi_i.name, lerp(phi_i.values, theta_i.values, tau_i))


def lerp(phi, theta, tau):
    # Every rule (soft, t-soft, hard via tau=1) goes through this expression so
    # that equal tau values give bitwise-equal results.
    if np.ndim(tau) == 0 and tau == 1.0:
        return np.array(theta, dtype=np.float64, copy=True)
    return (1.0 - tau) * phi + tau * theta


def mean_abs_diff(theta: ParamSet, phi: ParamSet) -> float:
    """Mean absolute parameter difference over every entry of every subset."""
    check_congruent(theta, phi)
    return float(np.mean(np.abs(theta.flat - phi.flat)))


# -- snapshots -------------------------------------------------------------

def dumps(params: ParamSet) -> str:
    """Serialize to text: ``name length`` header, then the values on one line."""
    buf = io.StringIO()
    for sub in params:
        if any(ch.isspace() for ch in sub.name):
            raise ParameterError(f"subset name {sub.name!r} contains whitespace")
        buf.write(f"{sub.name} {sub.length}\n")
        buf.write(" ".join(format(v, ".17g") for v in sub.values))
        buf.write("\n")
    return buf.getvalue()


def loads(text: str) -> ParamSet:
    tokens = text.split()
    names, lengths, values = [], [], []
    pos = 0
    while pos < len(tokens):
        try:
            name, n = tokens[pos], int(tokens[pos + 1])
        except (IndexError, ValueError) as exc:
            raise DomainError(f"malformed snapshot header at token {pos}") from exc
        chunk = tokens[pos + 2:pos + 2 + n]
        if len(chunk) != n:
            raise DomainError(f"subset {name!r}: expected {n} values, got {len(chunk)}")
        names.append(name)
        lengths.append(n)
        values.extend(float(v) for v in chunk)
        pos += 2 + n
    if not names:
        raise DomainError("empty snapshot")
    if not all(math.isfinite(v) for v in values):
        raise DomainError("snapshot contains non-finite values")
    return ParamSet(names, lengths, values)


def save(params: ParamSet, path) -> None:
    with open(path, "w") as f:
        f.write(dumps(params))


def load(path) -> ParamSet:
    with open(path) as f:
        return loads(f.read())
