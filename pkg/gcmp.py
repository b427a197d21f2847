"""
General coarsening models for processes.

A model pairs a parameterized law of the process X with a response-indicator
mechanism for R. The mechanism kernel never receives the process parameter,
so the conditional law of R given X is free of theta by construction.
"""
from __future__ import annotations

import enum
import inspect
import logging
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Hashable, Mapping, Sequence

import numpy as np

from config import DERIVED_TOL, MEASURE_CACHE_SIZE, SUM_TOL
from pathspace import (
    CoarseningError,
    Measure,
    Partition,
    Path,
    PathSpace,
    TimeGrid,
    atom_sums,
    check_cap,
    generate_partition,
    x_partition,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Custom exceptions
# ---------------------------------------------------------------------------

class InvalidKernelError(CoarseningError):
    """Raised when a kernel row is negative, unnormalized or takes theta."""


class NonEquivalentFamilyError(CoarseningError):
    """Raised when the support of the joint law changes with the parameters."""


class NoAbsorbingStateError(CoarseningError):
    """Raised when the absorbing-state convention is requested without one."""


class ParameterError(CoarseningError):
    """Raised when a parameter value or reference pair is not on its grid."""


# ---------------------------------------------------------------------------
# Masking
# ---------------------------------------------------------------------------

class _Mask:
    """Placeholder for an unobserved X value. Never equal to an X symbol."""

    _instance: _Mask | None = None

    def __new__(cls) -> _Mask:
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NA"

    def __reduce__(self) -> str:
        return "MASK"


MASK = _Mask()


def mask_value(x_t: Any, r_t: int, r_dim: int) -> Any:
    """Visible part of one X value under response code r_t."""
    if r_dim == 1:
        return x_t if r_t else MASK
    return tuple(x_t[h] if (r_t >> h) & 1 else MASK for h in range(r_dim))


def mask_path(x: Sequence[Any], r: Sequence[int], r_dim: int) -> tuple:
    return tuple(mask_value(x_t, r_t, r_dim) for x_t, r_t in zip(x, r))


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------

class DependenceClass(str, enum.Enum):
    """Declared information used by a mechanism. Advisory; certify verifies it."""

    PAST_OBSERVED = "past_observed"
    PAST_X = "past_x"
    ANTICIPATING = "anticipating"


ProcessKernel = Callable[[Any, int, tuple], Mapping[Hashable, float]]
ResponseKernel = Callable[[Any, int, tuple, tuple], Mapping[int, float]]


def _check_row(row: Mapping[Any, float], where: str) -> dict[Any, float]:
    values = dict(row)
    for key, prob in values.items():
        if not math.isfinite(prob) or prob < 0.0:
            raise InvalidKernelError(f"invalid kernel: {where} gives {key!r} probability {prob!r}")
    total = math.fsum(values.values())
    if abs(total - 1.0) > SUM_TOL:
        raise InvalidKernelError(f"invalid kernel: {where} sums to {total!r}")
    return {k: p for k, p in values.items() if p > 0.0}


@dataclass(frozen=True)
class ProcessModel:
    """Parameterized sequential law p_theta(x_t | x_1..x_{t-1})."""

    x_alphabet: tuple
    grid: TimeGrid
    kernel: ProcessKernel
    theta_grid: tuple
    absorbing_state: Hashable | None = None
    is_counting: bool = False
    label: str = ""

    def __post_init__(self) -> None:
        if not self.theta_grid:
            raise ParameterError("theta grid is empty")
        if self.absorbing_state is not None and self.absorbing_state not in self.x_alphabet:
            raise ParameterError(f"absorbing state {self.absorbing_state!r} is not in the alphabet")

    def step(self, theta: Any, t: int, history: tuple) -> dict[Any, float]:
        row = _check_row(self.kernel(theta, t, history), f"process {self.label} at t={t}")
        for sym in row:
            if sym not in self.x_alphabet:
                raise InvalidKernelError(f"invalid kernel: symbol {sym!r} outside the alphabet")
        if (
            self.absorbing_state is not None
            and history
            and history[-1] == self.absorbing_state
            and row.get(self.absorbing_state, 0.0) < 1.0
        ):
            raise InvalidKernelError(
                f"invalid kernel: process {self.label} leaves absorbing state at t={t}"
            )
        return row

    def path_prob(self, theta: Any, x: tuple) -> float:
        prob = 1.0
        for t in self.grid.times:
            prob *= self.step(theta, t, x[: t - 1]).get(x[t - 1], 0.0)
            if prob == 0.0:
                break
        return prob

    def support(self, theta: Any) -> dict[tuple, float]:
        """Every x-path of positive probability under theta."""
        out: dict[tuple, float] = {}
        frontier: list[tuple[tuple, float]] = [((), 1.0)]
        while frontier:
            history, prob = frontier.pop()
            t = len(history) + 1
            for sym, p in self.step(theta, t, history).items():
                if t == self.grid.horizon:
                    out[history + (sym,)] = prob * p
                else:
                    frontier.append((history + (sym,), prob * p))
        return out


@dataclass(frozen=True)
class MechanismKernel:
    """Sequential law q_psi(r_t | full x-path, r_1..r_{t-1}).

    The kernel is called as ``kernel(psi, t, x_path, r_history)`` and returns a
    mapping from response code to probability. ``r_kind`` records how the
    response process is counted: "window" (jumps at every change) or "visit"
    (a jump at every observation time).
    """

    r_dim: int
    kernel: ResponseKernel
    psi_grid: tuple
    dependence_class: DependenceClass = DependenceClass.PAST_OBSERVED
    r_kind: str = "window"
    label: str = ""
    absorbing_convention: bool = False

    def __post_init__(self) -> None:
        if not self.psi_grid:
            raise ParameterError("psi grid is empty")
        if self.r_kind not in ("window", "visit"):
            raise ParameterError(f"unknown response kind {self.r_kind!r}")
        try:
            names = list(inspect.signature(self.kernel).parameters)
        except (TypeError, ValueError) as exc:
            raise InvalidKernelError(f"mechanism kernel {self.label} has no signature") from exc
        if "theta" in names:
            raise InvalidKernelError(
                f"invalid kernel: mechanism {self.label} takes the process parameter"
            )
        if len(names) != 4:
            raise InvalidKernelError(
                f"invalid kernel: mechanism {self.label} must take (psi, t, x_path, r_history)"
            )

    def step(self, psi: Any, t: int, x: tuple, r_history: tuple) -> dict[int, float]:
        row = _check_row(self.kernel(psi, t, x, r_history), f"mechanism {self.label} at t={t}")
        for code in row:
            if not 0 <= code < 2 ** self.r_dim:
                raise InvalidKernelError(f"invalid kernel: response code {code!r} out of range")
        return row

    def path_prob(self, psi: Any, x: tuple, r: tuple) -> float:
        prob = 1.0
        for t in range(1, len(x) + 1):
            prob *= self.step(psi, t, x, r[: t - 1]).get(r[t - 1], 0.0)
            if prob == 0.0:
                break
        return prob

    def support(self, psi: Any, x: tuple) -> dict[tuple, float]:
        out: dict[tuple, float] = {}
        frontier: list[tuple[tuple, float]] = [((), 1.0)]
        while frontier:
            history, prob = frontier.pop()
            t = len(history) + 1
            for code, p in self.step(psi, t, x, history).items():
                if t == len(x):
                    out[history + (code,)] = prob * p
                else:
                    frontier.append((history + (code,), prob * p))
        return out


@dataclass(frozen=True)
class VerticalCoarsener:
    """Fixed, parameter-free coarsening of the value of X at observed times."""

    map: Callable[[Any], Hashable]
    label: str = ""

    def __call__(self, value: Any) -> Hashable:
        return MASK if value is MASK else self.map(value)

    def coarse_alphabet(self, alphabet: Sequence[Any]) -> tuple:
        return tuple(dict.fromkeys(self.map(s) for s in alphabet))

    def apply(self, x_obs: tuple, r_dim: int) -> tuple:
        if r_dim == 1:
            return tuple(self(v) for v in x_obs)
        return tuple(tuple(self(c) for c in v) for v in x_obs)


IDENTITY = VerticalCoarsener(lambda v: v, "identity")


@dataclass(frozen=True)
class Observation:
    """What is seen of one path: the response path and the masked X values."""

    r: tuple[int, ...]
    x_obs: tuple
    r_dim: int = 1

    def __post_init__(self) -> None:
        if len(self.r) != len(self.x_obs):
            raise ValueError("response path and observed values differ in length")
        for r_t, v in zip(self.r, self.x_obs):
            if self.r_dim == 1:
                if (v is MASK) != (r_t == 0):
                    raise ValueError(f"observation {self} is inconsistent with its response path")
            else:
                for h in range(self.r_dim):
                    if (v[h] is MASK) != (((r_t >> h) & 1) == 0):
                        raise ValueError(f"observation {self} is inconsistent with its response path")


def observe(path: Path, r_dim: int = 1) -> Observation:
    return Observation(r=path.r, x_obs=mask_path(path.x, path.r, r_dim), r_dim=r_dim)


class MeasureCache:
    """Least-recently-used store for per-parameter arrays and measures.

    Safe to share between estimation workers; values are computed outside the
    lock, so two workers may compute the same entry once each.
    """

    def __init__(self, maxsize: int = MEASURE_CACHE_SIZE) -> None:
        if maxsize < 1:
            raise ParameterError(f"cache size must be positive, got {maxsize}")
        self.maxsize = maxsize
        self._items: OrderedDict[Hashable, Any] = OrderedDict()
        self._lock = threading.Lock()

    def __len__(self) -> int:
        with self._lock:
            return len(self._items)

    def __contains__(self, key: Hashable) -> bool:
        with self._lock:
            return key in self._items

    def get_or_compute(self, key: Hashable, compute: Callable[[], Any]) -> Any:
        with self._lock:
            if key in self._items:
                self._items.move_to_end(key)
                return self._items[key]
        value = compute()
        with self._lock:
            if key in self._items:
                self._items.move_to_end(key)
                return self._items[key]
            self._items[key] = value
            while len(self._items) > self.maxsize:
                self._items.popitem(last=False)
        return value


@dataclass(frozen=True, eq=False)
class JointModel:
    """Family of joint laws P_(theta, psi) on the common support."""

    process: ProcessModel
    mechanism: MechanismKernel
    space: PathSpace
    measures: Mapping[tuple, Measure]
    reference: tuple
    vertical: VerticalCoarsener | None = None
    metadata: Mapping[str, Any] = field(default_factory=dict)
    cap: int | None = None
    _cache: MeasureCache = field(default_factory=MeasureCache, repr=False)

    @property
    def theta_grid(self) -> tuple:
        return self.process.theta_grid

    @property
    def psi_grid(self) -> tuple:
        return self.mechanism.psi_grid

    @property
    def theta0(self) -> Any:
        return self.reference[0]

    @property
    def psi0(self) -> Any:
        return self.reference[1]

    @property
    def r_dim(self) -> int:
        return self.mechanism.r_dim

    @property
    def label(self) -> str:
        return self.space.label

    def param_pairs(self) -> list[tuple]:
        return [(theta, psi) for theta in self.theta_grid for psi in self.psi_grid]

    def x_prob(self, theta: Any) -> np.ndarray:
        """p_theta of the x-part of every path; theta need not be on the grid."""

        def compute() -> np.ndarray:
            probs: dict[tuple, float] = {}
            for path in self.space.paths:
                if path.x not in probs:
                    probs[path.x] = self.process.path_prob(theta, path.x)
            return np.array([probs[path.x] for path in self.space.paths])

        return self._cache.get_or_compute(("x", _hashable(theta)), compute)

    def q_prob(self, psi: Any) -> np.ndarray:
        """q_psi of the r-part given the x-part of every path."""
        return self._cache.get_or_compute(
            ("q", _hashable(psi)),
            lambda: np.array([self.mechanism.path_prob(psi, p.x, p.r) for p in self.space.paths]),
        )

    def measure(self, theta: Any, psi: Any) -> Measure:
        pair = (theta, psi)
        if pair in self.measures:
            return self.measures[pair]
        return self._cache.get_or_compute(
            ("m", _hashable(theta), _hashable(psi)),
            lambda: Measure(self.space, self.x_prob(theta) * self.q_prob(psi), pair),
        )

    @property
    def reference_measure(self) -> Measure:
        return self.measures[self.reference]

    def r_paths(self) -> list[tuple]:
        return list(dict.fromkeys(p.r for p in self.space.paths))

    def describe(self) -> dict[str, Any]:
        """Plain-data summary used in logs and reports."""
        return {
            "label": self.label,
            "process": self.process.label,
            "mechanism": self.mechanism.label,
            "horizon": self.space.horizon,
            "x_alphabet": [repr(s) for s in self.process.x_alphabet],
            "r_dim": self.r_dim,
            "theta_grid": [repr(t) for t in self.theta_grid],
            "psi_grid": [repr(p) for p in self.psi_grid],
            "reference": [repr(self.theta0), repr(self.psi0)],
            "support_size": self.space.size,
            "n_total": self.space.n_total,
            **{k: v for k, v in self.metadata.items() if isinstance(v, (str, int, float, bool))},
        }


def _hashable(value: Any) -> Hashable:
    if isinstance(value, (list, np.ndarray)):
        return tuple(_hashable(v) for v in value)
    return value


# ---------------------------------------------------------------------------
# Core computation
# ---------------------------------------------------------------------------

def build_joint(
    process: ProcessModel,
    mechanism: MechanismKernel,
    reference: tuple | None = None,
    *,
    vertical: VerticalCoarsener | None = None,
    metadata: Mapping[str, Any] | None = None,
    cap: int | None = None,
    label: str = "",
) -> JointModel:
    """Enumerate the common support and build every P_(theta, psi) on the grids."""
    if reference is None:
        reference = (process.theta_grid[0], mechanism.psi_grid[0])
    theta0, psi0 = reference
    if theta0 not in process.theta_grid or psi0 not in mechanism.psi_grid:
        raise ParameterError(f"reference pair {reference!r} is not on the parameter grids")
    check_cap(len(process.x_alphabet), mechanism.r_dim, process.grid.horizon, cap)
    if vertical is not None:
        _check_vertical(vertical, process.x_alphabet, mechanism.r_dim)

    x_laws = {theta: process.support(theta) for theta in process.theta_grid}
    x_support = set(x_laws[theta0])
    for theta, law in x_laws.items():
        if set(law) != x_support:
            raise NonEquivalentFamilyError(
                f"non-equivalent family: X support under theta={theta!r} differs from theta0"
            )

    r_laws: dict[Any, dict[tuple, dict[tuple, float]]] = {}
    joint_support: set[tuple] | None = None
    for psi in mechanism.psi_grid:
        r_laws[psi] = {x: mechanism.support(psi, x) for x in x_support}
        pairs = {(x, r) for x, law in r_laws[psi].items() for r in law}
        if joint_support is None:
            joint_support = pairs
        elif pairs != joint_support:
            raise NonEquivalentFamilyError(
                f"non-equivalent family: R support under psi={psi!r} differs from psi0"
            )

    space = PathSpace.from_paths(
        process.grid,
        process.x_alphabet,
        mechanism.r_dim,
        (Path(x, r) for x, r in joint_support or ()),
        cap=cap,
        label=label or f"{process.label}|{mechanism.label}",
    )
    measures: dict[tuple, Measure] = {}
    sigma_x = x_partition(space)
    for theta in process.theta_grid:
        for psi in mechanism.psi_grid:
            p = np.array([x_laws[theta][path.x] * r_laws[psi][path.x][path.r] for path in space.paths])
            measure = Measure(space, p, (theta, psi))
            _verify_marginal(measure, sigma_x, x_laws[theta])
            measures[(theta, psi)] = measure

    logger.info(
        "Built joint model %s: %d support paths of %d, %d parameter pairs",
        space.label, space.size, space.n_total, len(measures),
    )
    return JointModel(
        process=process,
        mechanism=mechanism,
        space=space,
        measures=measures,
        reference=(theta0, psi0),
        vertical=vertical,
        metadata=dict(metadata or {}),
        cap=cap,
    )


def _check_vertical(vertical: VerticalCoarsener, alphabet: Sequence[Any], r_dim: int) -> None:
    """A vertical coarsening must report an observed value, never MASK."""
    symbols = list(alphabet) if r_dim == 1 else list(dict.fromkeys(c for s in alphabet for c in s))
    coarse = vertical.coarse_alphabet(symbols)
    if any(c is MASK for c in coarse):
        raise ParameterError(f"vertical coarsening {vertical.label!r} maps an observed value to MASK")
    logger.debug("Vertical coarsening %s: %d values -> %d", vertical.label, len(symbols), len(coarse))


def _verify_marginal(measure: Measure, sigma_x: Partition, x_law: Mapping[tuple, float]) -> None:
    """The X-marginal of P_(theta, psi) must be p_theta, whatever psi."""
    sums = atom_sums(measure.p, sigma_x)
    for atom, total in zip(sigma_x.atoms, sums):
        expected = x_law[measure.space.paths[int(atom[0])].x]
        if abs(total - expected) > DERIVED_TOL * max(1.0, expected):
            raise InvalidKernelError(
                f"invalid kernel: X marginal of {measure.params} is {total!r}, expected {expected!r}"
            )


def observed_partition(model: JointModel) -> Partition:
    """sigma(R_t, R_t X_t) with unobserved values replaced by MASK."""
    d = model.r_dim
    return generate_partition(model.space, lambda p: (p.r, mask_path(p.x, p.r, d)), "O")


def fixed_r_partition(
    model: JointModel, r: Sequence[int], vertical: VerticalCoarsener | None = None
) -> Partition:
    """sigma(X_t : r_t = 1) for a fixed response path, ignoring each path's own R.

    An all-zero r generates the trivial partition.
    """
    r = tuple(r)
    d = model.r_dim
    coarsen = vertical or IDENTITY
    return generate_partition(
        model.space,
        lambda p: coarsen.apply(mask_path(p.x, r, d), d),
        f"X^{r}" if vertical is None else f"X'^{r}",
    )


def apply_vertical(model: JointModel, v: VerticalCoarsener) -> Partition:
    """O' generated by the response path and the coarsened observed values."""
    d = model.r_dim
    return generate_partition(
        model.space,
        lambda p: (p.r, v.apply(mask_path(p.x, p.r, d), d)),
        f"O'[{v.label}]",
    )


def enforce_absorbing_convention(model: JointModel) -> JointModel:
    """Force full observation once the absorbing state has been observed.

    Idempotent: a mechanism already carrying the convention is kept as is.
    """
    absorbing = model.process.absorbing_state
    if absorbing is None:
        raise NoAbsorbingStateError(f"no absorbing state declared for {model.process.label}")
    if model.mechanism.absorbing_convention:
        return model
    base = model.mechanism
    full = 2 ** base.r_dim - 1

    def kernel(psi: Any, t: int, x_path: tuple, r_history: tuple) -> Mapping[int, float]:
        for s, r_s in enumerate(r_history):
            if r_s == full and x_path[s] == absorbing:
                return {full: 1.0}
        return base.kernel(psi, t, x_path, r_history)

    mechanism = replace(
        base,
        kernel=kernel,
        label=f"{base.label}+absorbing",
        absorbing_convention=True,
    )
    logger.info("Applied absorbing-state convention to %s", model.label)
    return build_joint(
        model.process,
        mechanism,
        model.reference,
        vertical=model.vertical,
        metadata=model.metadata,
        cap=model.cap,
    )


# ---------------------------------------------------------------------------
# Table-driven builders
# ---------------------------------------------------------------------------

def markov_process(
    x_alphabet: Sequence[Hashable],
    horizon: int,
    initial: Mapping[Any, Mapping[Hashable, float]],
    transition: Mapping[Any, Mapping[Hashable, Mapping[Hashable, float]]],
    absorbing_state: Hashable | None = None,
    is_counting: bool = False,
    label: str = "markov",
) -> ProcessModel:
    """Time-homogeneous Markov chain, one initial/transition table per theta."""
    if set(initial) != set(transition):
        raise ParameterError("initial and transition tables list different theta values")

    def kernel(theta: Any, t: int, history: tuple) -> Mapping[Hashable, float]:
        if theta not in initial:
            raise ParameterError(f"theta {theta!r} is not tabulated")
        if t == 1:
            return initial[theta]
        return transition[theta][history[-1]]

    return ProcessModel(
        x_alphabet=tuple(x_alphabet),
        grid=TimeGrid(horizon, label),
        kernel=kernel,
        theta_grid=tuple(initial),
        absorbing_state=absorbing_state,
        is_counting=is_counting,
        label=label,
    )


_DEPENDENCE_OF_KEY = {
    "none": DependenceClass.PAST_OBSERVED,
    "observed": DependenceClass.PAST_OBSERVED,
    "past_x": DependenceClass.PAST_X,
    "current_x": DependenceClass.ANTICIPATING,
}


def response_key(depends_on: str, t: int, x_path: tuple, r_history: tuple) -> Hashable:
    """Value of X the table mechanism reads at step t."""
    if depends_on == "none":
        return MASK
    if depends_on == "current_x":
        return x_path[t - 1]
    if t == 1:
        return MASK
    if depends_on == "past_x":
        return x_path[t - 2]
    if depends_on == "observed":
        return x_path[t - 2] if r_history[-1] else MASK
    raise ParameterError(f"unknown dependence {depends_on!r}")


def response_table_mechanism(
    tables: Mapping[Any, Mapping[tuple[int, Hashable], float]],
    depends_on: str = "none",
    r_kind: str = "window",
    label: str = "table",
) -> MechanismKernel:
    """Single-component response driven by P(R_t = 1 | R_{t-1}, key).

    ``tables[psi][(prev_r, key)]`` gives the observation probability, with
    R_0 = 1 and ``key`` the value returned by ``response_key``.
    """
    if depends_on not in _DEPENDENCE_OF_KEY:
        raise ParameterError(f"unknown dependence {depends_on!r}")

    def kernel(psi: Any, t: int, x_path: tuple, r_history: tuple) -> Mapping[int, float]:
        prev = r_history[-1] if r_history else 1
        key = response_key(depends_on, t, x_path, r_history)
        try:
            p_obs = tables[psi][(prev, key)]
        except KeyError as exc:
            raise ParameterError(f"no table entry for psi={psi!r}, state {(prev, key)!r}") from exc
        return {1: p_obs, 0: 1.0 - p_obs}

    return MechanismKernel(
        r_dim=1,
        kernel=kernel,
        psi_grid=tuple(tables),
        dependence_class=_DEPENDENCE_OF_KEY[depends_on],
        r_kind=r_kind,
        label=label,
    )
