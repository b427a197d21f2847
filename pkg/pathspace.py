"""
Exact finite probability-space engine.

Paths of a joint (X, R) process on a finite time grid, probability measures
over them, sigma-fields represented as partitions of path indices, conditional
expectations and Radon-Nikodym derivatives between measures.

Enumeration order is lexicographic in (t, x_t, r_t): the path index of a
trajectory is its rank among all (|X| * 2^d)^horizon trajectories when steps
are compared first to last, x symbols by alphabet position and r codes as
integers. A PathSpace usually holds only the common support of a family of
measures; every path keeps its index into the exhaustive enumeration.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable, Hashable, Iterable, Sequence

import numpy as np
import pandas as pd

from config import MAX_HORIZON, PATH_COUNT_CAP, SUM_TOL

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Custom exceptions
# ---------------------------------------------------------------------------

class CoarseningError(Exception):
    """Base exception for every error raised by the engine."""


class IncompatibleSpacesError(CoarseningError):
    """Raised when two objects live on different path spaces."""


class NullAtomError(CoarseningError):
    """Raised when conditioning on an atom of total mass zero."""


class DominanceViolatedError(CoarseningError):
    """Raised when the denominator measure gives an atom zero mass."""


class HorizonError(CoarseningError):
    """Raised when a time grid is empty or longer than the configured maximum."""


class CapExceededError(CoarseningError):
    """Raised when a path space would exceed the path-count cap."""


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------

def _frozen(values: Iterable[Any], dtype: Any = float) -> np.ndarray:
    arr = np.array(list(values) if not isinstance(values, np.ndarray) else values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeGrid:
    """Discrete time indices 1..horizon."""

    horizon: int
    label: str = ""

    def __post_init__(self) -> None:
        if not isinstance(self.horizon, (int, np.integer)) or self.horizon < 1:
            raise HorizonError(f"horizon must be a positive integer, got {self.horizon!r}")
        if self.horizon > MAX_HORIZON:
            raise HorizonError(
                f"horizon {self.horizon} exceeds the configured maximum {MAX_HORIZON}"
            )

    @property
    def times(self) -> range:
        return range(1, self.horizon + 1)


@dataclass(frozen=True)
class Path:
    """One joint trajectory.

    ``x[t-1]`` is the X symbol at time t. ``r[t-1]`` is an integer code whose
    bit h is R_{h,t}; with a single response component this is just 0 or 1.
    """

    x: tuple
    r: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class PathSpace:
    """Indexed collection of paths sharing a grid, X alphabet and response dimension.

    Spaces compare by identity: two partitions or measures are compatible only
    when they were built on the very same space object.
    """

    grid: TimeGrid
    x_alphabet: tuple
    r_dim: int
    paths: tuple[Path, ...]
    full_index: np.ndarray
    label: str = ""

    @property
    def horizon(self) -> int:
        return self.grid.horizon

    @property
    def size(self) -> int:
        return len(self.paths)

    @property
    def n_total(self) -> int:
        """Size of the exhaustive enumeration, (|X| * 2^d)^horizon."""
        return exhaustive_count(len(self.x_alphabet), self.r_dim, self.grid.horizon)

    @property
    def r_codes(self) -> range:
        return range(2 ** self.r_dim)

    @cached_property
    def index_of(self) -> dict[Path, int]:
        return {path: i for i, path in enumerate(self.paths)}

    # -- constructors -------------------------------------------------------

    @classmethod
    def exhaustive(
        cls,
        grid: TimeGrid,
        x_alphabet: Sequence[Hashable],
        r_dim: int = 1,
        cap: int | None = None,
        label: str = "",
    ) -> PathSpace:
        """Every (x, r) trajectory, in enumeration order."""
        alphabet = tuple(x_alphabet)
        check_cap(len(alphabet), r_dim, grid.horizon, cap)
        steps = list(itertools.product(alphabet, range(2 ** r_dim)))
        paths = tuple(
            Path(x=tuple(s[0] for s in combo), r=tuple(s[1] for s in combo))
            for combo in itertools.product(steps, repeat=grid.horizon)
        )
        return cls(
            grid=grid,
            x_alphabet=alphabet,
            r_dim=r_dim,
            paths=paths,
            full_index=_frozen(range(len(paths)), dtype=np.int64),
            label=label,
        )

    @classmethod
    def from_paths(
        cls,
        grid: TimeGrid,
        x_alphabet: Sequence[Hashable],
        r_dim: int,
        paths: Iterable[Path],
        cap: int | None = None,
        label: str = "",
    ) -> PathSpace:
        """Subspace holding the given paths, sorted into enumeration order."""
        alphabet = tuple(x_alphabet)
        check_cap(len(alphabet), r_dim, grid.horizon, cap)
        position = {sym: i for i, sym in enumerate(alphabet)}
        base = len(alphabet) * 2 ** r_dim
        keyed = {}
        for path in paths:
            if len(path.x) != grid.horizon or len(path.r) != grid.horizon:
                raise HorizonError(f"path {path} does not match horizon {grid.horizon}")
            idx = 0
            for x_t, r_t in zip(path.x, path.r):
                if x_t not in position:
                    raise ValueError(f"symbol {x_t!r} is not in the X alphabet")
                if not 0 <= r_t < 2 ** r_dim:
                    raise ValueError(f"response code {r_t!r} out of range for r_dim={r_dim}")
                idx = idx * base + position[x_t] * 2 ** r_dim + r_t
            keyed[idx] = path
        order = sorted(keyed)
        return cls(
            grid=grid,
            x_alphabet=alphabet,
            r_dim=r_dim,
            paths=tuple(keyed[i] for i in order),
            full_index=_frozen(order, dtype=np.int64),
            label=label,
        )

    def restrict(self, indices: Sequence[int], label: str = "") -> PathSpace:
        """Subspace made of the paths at the given positions."""
        keep = sorted(set(int(i) for i in indices))
        return PathSpace(
            grid=self.grid,
            x_alphabet=self.x_alphabet,
            r_dim=self.r_dim,
            paths=tuple(self.paths[i] for i in keep),
            full_index=_frozen(self.full_index[keep], dtype=np.int64),
            label=label or self.label,
        )


def exhaustive_count(n_symbols: int, r_dim: int, horizon: int) -> int:
    return (n_symbols * 2 ** r_dim) ** horizon


def check_cap(n_symbols: int, r_dim: int, horizon: int, cap: int | None) -> None:
    limit = PATH_COUNT_CAP if cap is None else cap
    total = exhaustive_count(n_symbols, r_dim, horizon)
    if total > limit:
        raise CapExceededError(
            f"path space of size {total} exceeds the cap of {limit} paths"
        )


@dataclass(frozen=True, eq=False)
class Partition:
    """A sigma-field on a finite space, stored as canonical atom labels.

    Atoms are numbered in order of first occurrence along the path index, so
    two partitions with the same atoms have identical label arrays.
    """

    space: PathSpace
    labels: np.ndarray
    generator_label: str = ""

    @property
    def n_atoms(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @cached_property
    def atoms(self) -> tuple[np.ndarray, ...]:
        order = np.argsort(self.labels, kind="stable")
        bounds = np.cumsum(np.bincount(self.labels, minlength=self.n_atoms))[:-1]
        return tuple(_frozen(a, dtype=np.int64) for a in np.split(order, bounds))

    def atom_of(self, index: int) -> np.ndarray:
        return self.atoms[int(self.labels[index])]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return self.space is other.space and np.array_equal(self.labels, other.labels)

    def __hash__(self) -> int:
        return hash((id(self.space), self.labels.tobytes()))


@dataclass(frozen=True, eq=False)
class Measure:
    """Probability vector over the paths of a space."""

    space: PathSpace
    p: np.ndarray
    params: tuple = ()

    def __post_init__(self) -> None:
        p = _frozen(self.p)
        object.__setattr__(self, "p", p)
        if p.shape != (self.space.size,):
            raise ValueError(f"measure has {p.shape} entries for a space of {self.space.size} paths")
        total = math.fsum(p)
        if abs(total - 1.0) > SUM_TOL:
            raise ValueError(f"measure {self.params} sums to {total!r}, not 1")
        if np.any(p <= 0.0):
            raise ValueError(f"measure {self.params} is not strictly positive on its space")

    def mass(self, indices: Sequence[int] | np.ndarray) -> float:
        return math.fsum(self.p[np.asarray(indices, dtype=np.int64)])


@dataclass(frozen=True, eq=False)
class PathFunction:
    """A real random variable on a path space."""

    space: PathSpace
    v: np.ndarray

    def __post_init__(self) -> None:
        v = _frozen(self.v)
        object.__setattr__(self, "v", v)
        if v.shape != (self.space.size,):
            raise ValueError(f"function has {v.shape} entries for a space of {self.space.size} paths")
        if not np.all(np.isfinite(v)):
            raise ValueError("path functions take finite values only")

    def __getitem__(self, index: int) -> float:
        return float(self.v[index])

    def __mul__(self, other: PathFunction) -> PathFunction:
        _same_space(self.space, other.space)
        return PathFunction(self.space, self.v * other.v)

    def __truediv__(self, other: PathFunction) -> PathFunction:
        _same_space(self.space, other.space)
        return PathFunction(self.space, self.v / other.v)

    @classmethod
    def constant(cls, space: PathSpace, value: float) -> PathFunction:
        return cls(space, np.full(space.size, float(value)))


# ---------------------------------------------------------------------------
# Core computation
# ---------------------------------------------------------------------------

def _same_space(*spaces: PathSpace) -> None:
    first = spaces[0]
    for other in spaces[1:]:
        if other is not first:
            raise IncompatibleSpacesError("incompatible spaces")


def _canonical(keys: Sequence[Hashable]) -> np.ndarray:
    codes: dict[Hashable, int] = {}
    return _frozen([codes.setdefault(k, len(codes)) for k in keys], dtype=np.int64)


def atom_sums(values: np.ndarray, partition: Partition) -> np.ndarray:
    """Per-atom sums of ``values``, accumulated with compensated summation."""
    sums = pd.Series(np.asarray(values, dtype=float)).groupby(partition.labels).sum()
    return sums.reindex(range(partition.n_atoms), fill_value=0.0).to_numpy()


def generate_partition(
    space: PathSpace, classify: Callable[[Path], Hashable], label: str = ""
) -> Partition:
    """sigma(classify): paths share an atom iff their labels are equal."""
    return Partition(space, _canonical([classify(p) for p in space.paths]), label)


def trivial_partition(space: PathSpace) -> Partition:
    return Partition(space, _frozen(np.zeros(space.size), dtype=np.int64), "trivial")


def full_partition(space: PathSpace) -> Partition:
    return Partition(space, _frozen(range(space.size), dtype=np.int64), "full")


def x_partition(space: PathSpace) -> Partition:
    return generate_partition(space, lambda p: p.x, "sigma(X)")


def r_partition(space: PathSpace) -> Partition:
    return generate_partition(space, lambda p: p.r, "sigma(R)")


def join(a: Partition, b: Partition) -> Partition:
    """Common refinement of two partitions."""
    _same_space(a.space, b.space)
    keys = list(zip(a.labels.tolist(), b.labels.tolist()))
    return Partition(a.space, _canonical(keys), f"{a.generator_label} v {b.generator_label}")


def refines(fine: Partition, coarse: Partition) -> bool:
    """True when every atom of ``fine`` lies inside a single atom of ``coarse``."""
    _same_space(fine.space, coarse.space)
    frame = pd.DataFrame({"fine": fine.labels, "coarse": coarse.labels})
    return bool((frame.groupby("fine")["coarse"].nunique() == 1).all())


def trace_labels(partition: Partition, event: np.ndarray) -> np.ndarray:
    """Canonical atom labels of ``partition`` restricted to the paths in ``event``."""
    return _canonical(partition.labels[np.asarray(event, dtype=np.int64)].tolist())


def cond_expect(f: PathFunction, g: Partition, mu: Measure) -> PathFunction:
    """E_mu[f | g], constant on every atom of g."""
    _same_space(f.space, g.space, mu.space)
    num = atom_sums(f.v * mu.p, g)
    den = atom_sums(mu.p, g)
    if np.any(den <= 0.0):
        raise NullAtomError(f"null atom in {g.generator_label or 'partition'}")
    return PathFunction(f.space, (num / den)[g.labels])


def rn_derivative(num: Measure, den: Measure, g: Partition) -> PathFunction:
    """dP_num/dP_den restricted to the sigma-field g."""
    _same_space(num.space, den.space, g.space)
    num_mass = atom_sums(num.p, g)
    den_mass = atom_sums(den.p, g)
    if np.any(den_mass <= 0.0):
        raise DominanceViolatedError(
            f"dominance violated: {den.params} gives an atom of "
            f"{g.generator_label or 'partition'} zero mass"
        )
    return PathFunction(num.space, (num_mass / den_mass)[g.labels])


def atom_spread(f: PathFunction, g: Partition) -> np.ndarray:
    """max - min of f on every atom of g."""
    _same_space(f.space, g.space)
    grouped = pd.Series(f.v).groupby(g.labels)
    return (grouped.max() - grouped.min()).to_numpy()


def is_measurable(f: PathFunction, g: Partition, tol: float = SUM_TOL) -> bool:
    """True iff f is constant on every atom of g.

    Values are compared relative to ``max(1, |f|)`` on the atom.
    """
    scale = np.maximum(1.0, pd.Series(np.abs(f.v)).groupby(g.labels).max().to_numpy())
    return bool(np.all(atom_spread(f, g) <= tol * scale))


def indicator(space: PathSpace, predicate: Callable[[Path], bool]) -> PathFunction:
    return PathFunction(space, np.array([1.0 if predicate(p) else 0.0 for p in space.paths]))


def event_indices(space: PathSpace, predicate: Callable[[Path], bool]) -> np.ndarray:
    return np.array([i for i, p in enumerate(space.paths) if predicate(p)], dtype=np.int64)


def disagreements(f: PathFunction, g: PathFunction, tol: float, where: np.ndarray | None = None) -> np.ndarray:
    """Indices (within ``where``) at which f and g differ by more than tol, relatively."""
    _same_space(f.space, g.space)
    idx = np.arange(f.space.size) if where is None else np.asarray(where, dtype=np.int64)
    a, b = f.v[idx], g.v[idx]
    bad = np.abs(a - b) > tol * np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return idx[bad]
