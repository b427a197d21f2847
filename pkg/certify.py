"""
Certification of ignorability conditions and of the implications between them.

Every check enumerates the model's support and returns a Certificate. A
failing certificate carries a witness: the parameter pair, the time step when
relevant, the atom, two path indices and the two values that differ.
"""
from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from config import DERIVED_TOL
from gcmp import (
    MASK,
    DependenceClass,
    JointModel,
    VerticalCoarsener,
    apply_vertical,
    build_joint,
    fixed_r_partition,
    markov_process,
    mask_path,
    observed_partition,
    response_table_mechanism,
)
from likelihood import conditional_lr
from pathspace import (
    CoarseningError,
    Partition,
    PathFunction,
    PathSpace,
    atom_spread,
    cond_expect,
    disagreements,
    event_indices,
    generate_partition,
    r_partition,
    refines,
    rn_derivative,
    trivial_partition,
    x_partition,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Custom exceptions
# ---------------------------------------------------------------------------

class ROffSupportError(CoarseningError):
    """Raised when a response path has probability zero."""


class NotApplicableError(CoarseningError):
    """Raised when a condition does not apply to the model at hand."""


class ImplicationViolationError(CoarseningError):
    """Raised when a certified antecedent holds and its consequent fails."""


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------

class Verdict(str, enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    PRECONDITION_FAILED = "precondition-failed"
    NOT_APPLICABLE = "not-applicable"


@dataclass(frozen=True)
class Witness:
    params: tuple = ()
    t: int | None = None
    atom: tuple[int, ...] = ()
    paths: tuple[int, ...] = ()
    values: tuple[float, ...] = ()
    note: str = ""

    def to_dict(self, space: PathSpace | None = None) -> dict[str, Any]:
        out: dict[str, Any] = {
            "params": [repr(p) for p in self.params],
            "t": self.t,
            "atom": list(self.atom),
            "paths": list(self.paths),
            "values": [float(v) for v in self.values],
            "note": self.note,
        }
        if space is not None:
            out["rendered"] = [render_path(space, i) for i in self.paths]
        return out


@dataclass(frozen=True)
class Certificate:
    condition: str
    verdict: Verdict
    tolerance: float
    witness: Witness | None = None
    scope: str = ""
    detail: Mapping[str, Any] = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.verdict is Verdict.HOLDS

    def to_dict(self, space: PathSpace | None = None) -> dict[str, Any]:
        return {
            "condition": self.condition,
            "scope": self.scope,
            "verdict": self.verdict.value,
            "tolerance": self.tolerance,
            "witness": None if self.witness is None else self.witness.to_dict(space),
            "detail": dict(self.detail),
        }


def render_path(space: PathSpace, index: int) -> str:
    path = space.paths[index]
    return f"x={list(path.x)!r} r={list(path.r)!r}"


def _certificate(
    condition: str, witness: Witness | None, tol: float, scope: str = "", **detail: Any
) -> Certificate:
    verdict = Verdict.HOLDS if witness is None else Verdict.FAILS
    logger.info("%s%s: %s", condition, f"[{scope}]" if scope else "", verdict.value)
    return Certificate(condition, verdict, tol, witness, scope, detail)


def _spread_witness(f: PathFunction, g: Partition, tol: float, params: tuple, t: int | None = None) -> Witness | None:
    """Two paths in one atom of g on which f differs, if any."""
    spread = atom_spread(f, g)
    scale = np.array([max(1.0, float(np.abs(f.v[a]).max())) for a in g.atoms])
    bad = np.flatnonzero(spread > tol * scale)
    if bad.size == 0:
        return None
    atom = g.atoms[int(bad[0])]
    lo, hi = int(atom[np.argmin(f.v[atom])]), int(atom[np.argmax(f.v[atom])])
    return Witness(params, t, tuple(int(i) for i in atom), (lo, hi), (f[lo], f[hi]))


# ---------------------------------------------------------------------------
# Filtrations and counting processes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Filtration:
    """Increasing sequence of partitions, stages t = 0..horizon."""

    stages: tuple[Partition, ...]
    label: str

    def __post_init__(self) -> None:
        for t in range(1, len(self.stages)):
            if not refines(self.stages[t], self.stages[t - 1]):
                raise ValueError(f"filtration {self.label} decreases at t={t}")

    def __getitem__(self, t: int) -> Partition:
        return self.stages[t]

    @property
    def horizon(self) -> int:
        return len(self.stages) - 1


def _staged(space: PathSpace, label: str, key: Callable[[Any, int], Any], stage0: Partition | None = None) -> Filtration:
    stages = [stage0 or trivial_partition(space)]
    stages += [generate_partition(space, lambda p, t=t: key(p, t), f"{label}[{t}]") for t in space.grid.times]
    return Filtration(tuple(stages), label)


def observed_filtration(model: JointModel) -> Filtration:
    """O_t: response path and observed values up to t."""
    d = model.r_dim
    return _staged(model.space, "O_t", lambda p, t: (p.r[:t], mask_path(p.x[:t], p.r[:t], d)))


def full_x_filtration(model: JointModel) -> Filtration:
    """F*_t = sigma(X) v O_t."""
    space = model.space
    return _staged(space, "F*_t", lambda p, t: (p.x, p.r[:t]), x_partition(space))


def natural_filtration(model: JointModel) -> Filtration:
    """F_t: X and R up to t."""
    return _staged(model.space, "F_t", lambda p, t: (p.x[:t], p.r[:t]))


def x_filtration(model: JointModel) -> Filtration:
    return _staged(model.space, "X_t", lambda p, t: p.x[:t])


def fixed_r_filtration(model: JointModel, r: Sequence[int]) -> Filtration:
    """F^r_t: X observed through the fixed path r, plus R up to t."""
    r = tuple(r)
    d = model.r_dim
    return _staged(model.space, f"F^{r}_t", lambda p, t: (mask_path(p.x[:t], r[:t], d), p.r[:t]))


def response_filtration(model: JointModel) -> Filtration:
    """N_t: the response process alone."""
    return _staged(model.space, "N_t", lambda p, t: p.r[:t])


def censoring_filtration(model: JointModel) -> Filtration:
    """Stage t is sigma(X up to t, R up to t + 1): R_t is decided before X_t is revealed."""
    space = model.space
    stage0 = generate_partition(space, lambda p: p.r[:1], "F^cens_t[0]")
    return _staged(space, "F^cens_t", lambda p, t: (p.x[:t], p.r[: t + 1]), stage0)


@dataclass(frozen=True)
class CountingProcess:
    """Marked counting increments, ``increments[path, t - 1, mark]`` in {0, 1}.

    ``components[path, t - 1, h]`` keeps the per-component counts.
    """

    space: PathSpace
    marks: tuple[int, ...]
    increments: np.ndarray
    components: np.ndarray
    kind: str

    def delta(self, t: int, mark_index: int) -> PathFunction:
        return PathFunction(self.space, self.increments[:, t - 1, mark_index].astype(float))

    def counts(self) -> np.ndarray:
        """N_{h,t} per path, component and time."""
        return np.cumsum(self.components, axis=1)


def counting_of_R(model: JointModel) -> CountingProcess:
    """Counting representation of the response process.

    Window responses jump at every change of R (with R_0 fully on); visit
    responses jump at every observation time. Marks are the nonzero jump
    patterns, so at most one mark jumps per step.
    """
    space, d = model.space, model.r_dim
    full = 2 ** d - 1
    kind = model.mechanism.r_kind
    patterns = np.zeros((space.size, space.horizon), dtype=np.int64)
    for i, path in enumerate(space.paths):
        prev = full
        for t, r_t in enumerate(path.r):
            patterns[i, t] = r_t if kind == "visit" else r_t ^ prev
            prev = r_t
    marks = tuple(int(m) for m in np.unique(patterns) if m != 0) or (full,)
    increments = np.stack([(patterns == m).astype(np.int8) for m in marks], axis=-1)
    components = np.stack([(patterns >> h) & 1 for h in range(d)], axis=-1).astype(np.int8)
    return CountingProcess(space, marks, increments, components, kind)


def counting_of_X(model: JointModel) -> CountingProcess:
    """Counting increments of a scalar counting process X (x_0 = 0)."""
    if not model.process.is_counting or model.r_dim != 1:
        raise NotApplicableError(f"{model.label}: X is not a scalar counting process")
    space = model.space
    jumps = np.zeros((space.size, space.horizon), dtype=np.int64)
    for i, path in enumerate(space.paths):
        prev = 0
        for t, x_t in enumerate(path.x):
            if not isinstance(x_t, (int, np.integer)):
                raise NotApplicableError(f"{model.label}: X symbols are not counts")
            jumps[i, t] = x_t - prev
            prev = x_t
    if not np.isin(jumps, (0, 1)).all():
        raise NotApplicableError(f"{model.label}: X jumps by more than one")
    inc = jumps[..., np.newaxis].astype(np.int8)
    return CountingProcess(space, (1,), inc, inc, "counting")


@dataclass(frozen=True)
class Compensator:
    """Per-step increments lambda[path, t - 1, mark], each measurable w.r.t. stage t - 1."""

    increments: np.ndarray
    filtration: Filtration
    params: tuple

    def at(self, t: int, mark_index: int = 0) -> np.ndarray:
        return self.increments[:, t - 1, mark_index]

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.increments, axis=1)

    def is_predictable(self, tol: float = DERIVED_TOL) -> bool:
        lam = self.increments
        return bool(np.all((np.abs(lam) <= tol) | (np.abs(lam - 1.0) <= tol)))


def compensator(model: JointModel, N: CountingProcess, filtration: Filtration, params: tuple) -> Compensator:
    """lambda_t = E_params[Delta N_t | stage t - 1]."""
    mu = model.measure(*params)
    lam = np.zeros(N.increments.shape, dtype=float)
    for t in model.space.grid.times:
        for m in range(len(N.marks)):
            lam[:, t - 1, m] = cond_expect(N.delta(t, m), filtration[t - 1], mu).v
    return Compensator(lam, filtration, params)


def project_compensator(fine: Compensator, coarse: Filtration, model: JointModel) -> Compensator:
    """E[lambda^fine_t | coarse stage t - 1] under the fine compensator's measure."""
    mu = model.measure(*fine.params)
    lam = np.zeros(fine.increments.shape, dtype=float)
    for t in model.space.grid.times:
        for m in range(fine.increments.shape[2]):
            lam[:, t - 1, m] = cond_expect(PathFunction(model.space, fine.at(t, m)), coarse[t - 1], mu).v
    return Compensator(lam, coarse, fine.params)


def _compare_compensators(
    model: JointModel, coarse: Compensator, fine: Compensator, tol: float
) -> Witness | None:
    for t in model.space.grid.times:
        for m in range(coarse.increments.shape[2]):
            bad = disagreements(
                PathFunction(model.space, coarse.at(t, m)), PathFunction(model.space, fine.at(t, m)), tol
            )
            if bad.size:
                i = int(bad[0])
                atom = coarse.filtration[t - 1].atom_of(i)
                fine_vals = fine.at(t, m)[atom]
                j = int(atom[np.argmax(np.abs(fine_vals - fine_vals[list(atom).index(i)]))])
                return Witness(
                    coarse.params, t, tuple(int(a) for a in atom), (i, j),
                    (float(fine.at(t, m)[i]), float(fine.at(t, m)[j])),
                    note=f"coarse compensator {coarse.at(t, m)[i]!r}",
                )
    return None


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------

def check_car_dyn(model: JointModel, tol: float = DERIVED_TOL) -> Certificate:
    """Response compensators agree under O_t and F*_t for every parameter pair."""
    N = counting_of_R(model)
    obs_f, full_f = observed_filtration(model), full_x_filtration(model)
    for params in model.param_pairs():
        witness = _compare_compensators(
            model, compensator(model, N, obs_f, params), compensator(model, N, full_f, params), tol
        )
        if witness is not None:
            return _certificate("CAR(DYN)", witness, tol)
    return _certificate("CAR(DYN)", None, tol, marks=list(N.marks))


def check_predictable(model: JointModel, tol: float = DERIVED_TOL) -> Certificate:
    """The response jumps are O_t-predictable: every O-compensator increment is 0 or 1."""
    N = counting_of_R(model)
    obs_f = observed_filtration(model)
    for params in model.param_pairs():
        comp = compensator(model, N, obs_f, params)
        if comp.is_predictable(tol):
            continue
        lam = comp.increments
        i, t0, m = (int(v) for v in np.argwhere((np.abs(lam) > tol) & (np.abs(lam - 1.0) > tol))[0])
        atom = obs_f[t0].atom_of(i)
        return _certificate(
            "predictable",
            Witness(params, t0 + 1, tuple(int(a) for a in atom), (i,), (float(lam[i, t0, m]),)),
            tol,
        )
    return _certificate("predictable", None, tol)


def _psi_pairs(model: JointModel) -> list[tuple[Any, Any]]:
    return [(a, b) for a in model.psi_grid for b in model.psi_grid if a != b]


def check_car_gcmp(model: JointModel, tol: float = DERIVED_TOL) -> Certificate:
    """L^{psi/psi'}_{R|X} is O-measurable for every pair of mechanism parameters."""
    observed = observed_partition(model)
    sigma_r, sigma_x = r_partition(model.space), x_partition(model.space)
    theta0 = model.theta0
    for psi, psi_b in _psi_pairs(model):
        params = ((theta0, psi), (theta0, psi_b))
        l_rx = conditional_lr(model, sigma_r, sigma_x, *params)
        witness = _spread_witness(l_rx, observed, tol, params)
        if witness is not None:
            return _certificate("CAR(GCMP)", witness, tol)
    return _certificate("CAR(GCMP)", None, tol)


def check_car_rel(model: JointModel, tol: float = DERIVED_TOL) -> Certificate:
    """Kernel-level ratio q_psi(r|x) / q_psi'(r|x) agrees across x with the same r and rx."""
    observed = observed_partition(model)
    mech = model.mechanism
    for psi, psi_b in _psi_pairs(model):
        ratio = PathFunction(
            model.space,
            np.array([mech.path_prob(psi, p.x, p.r) / mech.path_prob(psi_b, p.x, p.r) for p in model.space.paths]),
        )
        witness = _spread_witness(ratio, observed, tol, (psi, psi_b))
        if witness is not None:
            return _certificate("CAR(REL)", witness, tol)
    return _certificate("CAR(REL)", None, tol)


def _x_support(model: JointModel) -> list[tuple]:
    return list(dict.fromkeys(p.x for p in model.space.paths))


def check_car_abs(model: JointModel, tol: float = DERIVED_TOL) -> Certificate:
    """q_psi(r | x) is the same for every support x compatible with each observation.

    Quantified over all support x, including those for which the observation
    has probability zero.
    """
    d = model.r_dim
    xs = _x_support(model)
    for psi in model.psi_grid:
        for r in model.r_paths():
            groups: dict[tuple, list[tuple]] = {}
            for x in xs:
                groups.setdefault(mask_path(x, r, d), []).append(x)
            for x_obs, members in groups.items():
                probs = [model.mechanism.path_prob(psi, x, r) for x in members]
                if max(probs) - min(probs) > tol * max(1.0, max(probs)):
                    a, b = int(np.argmin(probs)), int(np.argmax(probs))
                    witness = Witness(
                        (psi,), None, (), (), (probs[a], probs[b]),
                        note=f"r={list(r)!r} x={list(members[a])!r} vs x'={list(members[b])!r}",
                    )
                    return _certificate("CAR(ABS)", witness, tol)
    return _certificate("CAR(ABS)", None, tol)


def _require_r(model: JointModel, r: Sequence[int]) -> tuple[int, ...]:
    r = tuple(int(v) for v in r)
    if r not in set(model.r_paths()):
        raise ROffSupportError(f"r off support: {list(r)!r} has probability zero")
    return r


def check_car_loc(model: JointModel, r: Sequence[int], tol: float = DERIVED_TOL) -> Certificate:
    """On {R=r}: L_{R|X} equals L_{R|X^r} for every parameter pair."""
    r = _require_r(model, r)
    space = model.space
    on_r = event_indices(space, lambda p: p.r == r)
    sigma_r, sigma_x = r_partition(space), x_partition(space)
    x_r = fixed_r_partition(model, r)
    for theta in model.theta_grid:
        for psi in model.psi_grid:
            for psi_b in model.psi_grid:
                params = ((theta, psi), (model.theta0, psi_b))
                full = conditional_lr(model, sigma_r, sigma_x, *params)
                local = conditional_lr(model, sigma_r, x_r, *params)
                bad = disagreements(full, local, tol, on_r)
                if bad.size:
                    i = int(bad[0])
                    witness = Witness(params, None, tuple(int(a) for a in x_r.atom_of(i)), (i,), (full[i], local[i]))
                    return _certificate("CAR(GCMP)-loc", witness, tol, scope=str(list(r)))
    return _certificate("CAR(GCMP)-loc", None, tol, scope=str(list(r)))


def check_ignorable(
    model: JointModel,
    r: Sequence[int],
    vertical: VerticalCoarsener | None = None,
    tol: float = DERIVED_TOL,
) -> Certificate:
    """On {R=r}: the observed-data likelihood at psi = psi0 equals the likelihood ignoring R.

    With a vertical coarsener both sides use the coarsened values.
    """
    r = _require_r(model, r)
    space = model.space
    on_r = event_indices(space, lambda p: p.r == r)
    observed = observed_partition(model) if vertical is None else apply_vertical(model, vertical)
    x_r = fixed_r_partition(model, r, vertical)
    name = "ignorable" if vertical is None else f"ignorable[{vertical.label}]"
    for theta in model.theta_grid:
        for psi0 in model.psi_grid:
            num, den = model.measure(theta, psi0), model.measure(model.theta0, psi0)
            l_obs = rn_derivative(num, den, observed)
            l_ign = rn_derivative(num, den, x_r)
            bad = disagreements(l_obs, l_ign, tol, on_r)
            if bad.size:
                i = int(bad[0])
                witness = Witness(
                    ((theta, psi0), (model.theta0, psi0)), None,
                    tuple(int(a) for a in observed.atom_of(i)), (i,), (l_obs[i], l_ign[i]),
                    note="observed vs ignoring",
                )
                return _certificate(name, witness, tol, scope=str(list(r)))
    return _certificate(name, None, tol, scope=str(list(r)))


def check_factorization(model: JointModel, tol: float = DERIVED_TOL) -> Certificate:
    """L_O = L_{R|X} * E_(theta0, psi0)[L_X | O], with the second factor free of psi0."""
    if not check_car_gcmp(model, tol).holds:
        logger.info("factorization: CAR(GCMP) does not hold, precondition failed")
        return Certificate("factorization", Verdict.PRECONDITION_FAILED, tol)
    space = model.space
    observed = observed_partition(model)
    sigma_r, sigma_x = r_partition(space), x_partition(space)
    theta0 = model.theta0
    for theta in model.theta_grid:
        projected: PathFunction | None = None
        for psi0 in model.psi_grid:
            den = model.measure(theta0, psi0)
            l_x = rn_derivative(model.measure(theta, psi0), den, sigma_x)
            e_lx = cond_expect(l_x, observed, den)
            if projected is not None:
                bad = disagreements(projected, e_lx, tol)
                if bad.size:
                    i = int(bad[0])
                    witness = Witness(((theta, psi0),), None, (), (i,), (projected[i], e_lx[i]), note="E[L_X|O] depends on psi0")
                    return _certificate("factorization", witness, tol)
            projected = e_lx
            for psi in model.psi_grid:
                num = (theta, psi)
                l_obs = rn_derivative(model.measure(*num), den, observed)
                l_rx = conditional_lr(model, sigma_r, sigma_x, (theta0, psi), (theta0, psi0))
                bad = disagreements(l_obs, l_rx * e_lx, tol)
                if bad.size:
                    i = int(bad[0])
                    witness = Witness((num, (theta0, psi0)), None, (), (i,), (l_obs[i], (l_rx * e_lx)[i]))
                    return _certificate("factorization", witness, tol)
    return _certificate("factorization", None, tol)


def check_independent_censoring(model: JointModel, tol: float = DERIVED_TOL) -> Certificate:
    """The compensator of X is unchanged by adding the censoring information.

    Applies to a scalar counting process X under a nonincreasing (right-censoring) response.
    """
    if any(any(b > a for a, b in zip(r, r[1:])) for r in model.r_paths()):
        raise NotApplicableError(f"{model.label}: response is not right-censoring")
    X = counting_of_X(model)
    own, enlarged = x_filtration(model), censoring_filtration(model)
    for params in model.param_pairs():
        witness = _compare_compensators(
            model, compensator(model, X, own, params), compensator(model, X, enlarged, params), tol
        )
        if witness is not None:
            return _certificate("independent censoring", witness, tol)
    return _certificate("independent censoring", None, tol)


PastKey = Callable[[Any, int], tuple]


def observed_past(d: int) -> PastKey:
    """Response history and the values it revealed before step t."""
    return lambda path, t: (path.r[: t - 1], mask_path(path.x[: t - 1], path.r[: t - 1], d))


def full_past(path: Any, t: int) -> tuple:
    """Response history and every X value before step t."""
    return (path.r[: t - 1], path.x[: t - 1])


def _row_gap(model: JointModel, past: PastKey, tol: float) -> Witness | None:
    """Two support paths whose kernel rows at some step differ although ``past`` agrees."""
    mech = model.mechanism
    for psi in model.psi_grid:
        for t in model.space.grid.times:
            rows: dict[tuple, tuple[tuple, dict[int, float]]] = {}
            for path in model.space.paths:
                r_hist = path.r[: t - 1]
                key = past(path, t)
                row = mech.step(psi, t, path.x, r_hist)
                if key not in rows:
                    rows[key] = (path.x, row)
                    continue
                x_ref, ref = rows[key]
                codes = set(ref) | set(row)
                gap = max(abs(ref.get(c, 0.0) - row.get(c, 0.0)) for c in codes)
                if gap > tol:
                    return Witness(
                        (psi,), t, (), (), (gap,),
                        note=f"x={list(x_ref)!r} vs x'={list(path.x)!r} after r={list(r_hist)!r}",
                    )
    return None


def check_fixed_visit_mar(model: JointModel, tol: float = DERIVED_TOL) -> Certificate:
    """Each step of the mechanism depends only on the observed past.

    Compares kernel rows across support prefixes that share the response
    history and the values observed so far.
    """
    return _certificate("fixed-visit MAR", _row_gap(model, observed_past(model.r_dim), tol), tol)


DEPENDENCE_ORDER = (DependenceClass.PAST_OBSERVED, DependenceClass.PAST_X, DependenceClass.ANTICIPATING)


def measured_dependence(model: JointModel, tol: float = DERIVED_TOL) -> DependenceClass:
    """Smallest dependence class consistent with the kernel rows on the support."""
    if _row_gap(model, observed_past(model.r_dim), tol) is None:
        return DependenceClass.PAST_OBSERVED
    if _row_gap(model, full_past, tol) is None:
        return DependenceClass.PAST_X
    return DependenceClass.ANTICIPATING


def check_dependence_class(model: JointModel, tol: float = DERIVED_TOL) -> Certificate:
    """The mechanism reads no more than its declared dependence class allows.

    Declaring a wider class than the kernel uses is allowed. A kernel declared
    past-observed must also pass CAR(DYN).
    """
    declared = model.mechanism.dependence_class
    measured = measured_dependence(model, tol)
    dyn = check_car_dyn(model, tol)
    detail = {"declared": declared.value, "measured": measured.value, "car_dyn": dyn.verdict.value}

    witness: Witness | None = None
    if DEPENDENCE_ORDER.index(measured) > DEPENDENCE_ORDER.index(declared):
        past = observed_past(model.r_dim) if declared is DependenceClass.PAST_OBSERVED else full_past
        witness = _row_gap(model, past, tol)
    elif declared is DependenceClass.PAST_OBSERVED and not dyn.holds:
        witness = dyn.witness
    if witness is not None:
        logger.warning(
            "Mechanism %s is declared %s but reads %s",
            model.mechanism.label, declared.value, measured.value,
        )
    return _certificate("dependence class", witness, tol, **detail)


# ---------------------------------------------------------------------------
# Theorem battery
# ---------------------------------------------------------------------------

Certifier = Callable[..., Certificate]

DEFAULT_CERTIFIERS: dict[str, Certifier] = {
    "car_dyn": check_car_dyn,
    "car_gcmp": check_car_gcmp,
    "car_rel": check_car_rel,
    "car_abs": check_car_abs,
    "car_loc": check_car_loc,
    "ignorable": check_ignorable,
    "factorization": check_factorization,
    "independent_censoring": check_independent_censoring,
}


@dataclass(frozen=True)
class ArrowResult:
    name: str
    scope: str
    antecedent: Verdict
    consequent: Verdict
    violated: bool


@dataclass
class BatteryReport:
    model: dict[str, Any]
    certificates: list[Certificate] = field(default_factory=list)
    arrows: list[ArrowResult] = field(default_factory=list)

    @property
    def violations(self) -> list[ArrowResult]:
        return [a for a in self.arrows if a.violated]

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_for_violations(self) -> None:
        if self.violations:
            names = ", ".join(f"{a.name}{a.scope}" for a in self.violations)
            raise ImplicationViolationError(
                f"implication violated ({names}) on model {json.dumps(self.model, sort_keys=True)}"
            )


def _implies(name: str, a: Certificate, b: Certificate, scope: str = "") -> ArrowResult:
    violated = a.verdict is Verdict.HOLDS and b.verdict is Verdict.FAILS
    return ArrowResult(name, scope, a.verdict, b.verdict, violated)


def _equivalent(name: str, a: Certificate, b: Certificate) -> ArrowResult:
    decided = {Verdict.HOLDS, Verdict.FAILS}
    violated = a.verdict in decided and b.verdict in decided and a.verdict is not b.verdict
    return ArrowResult(name, "", a.verdict, b.verdict, violated)


def serialize_model(model: JointModel) -> dict[str, Any]:
    out = model.describe()
    spec = model.metadata.get("spec")
    if spec is not None:
        out["spec"] = spec
    return out


def theorem_battery(
    model: JointModel,
    *,
    certifiers: Mapping[str, Certifier] | None = None,
    strict: bool = False,
    tol: float = DERIVED_TOL,
) -> BatteryReport:
    """Evaluate every certificate and every implication arrow on one model."""
    c = {**DEFAULT_CERTIFIERS, **(certifiers or {})}
    report = BatteryReport(model=serialize_model(model))

    dyn, gcmp = c["car_dyn"](model, tol=tol), c["car_gcmp"](model, tol=tol)
    rel, abs_ = c["car_rel"](model, tol=tol), c["car_abs"](model, tol=tol)
    fact = c["factorization"](model, tol=tol)
    report.certificates += [dyn, gcmp, rel, abs_, fact]
    report.arrows.append(_implies("CAR(DYN) => CAR(GCMP)", dyn, gcmp))
    report.arrows.append(_equivalent("CAR(GCMP) <=> CAR(REL)", gcmp, rel))
    if gcmp.holds:
        violated = fact.verdict is not Verdict.HOLDS
        report.arrows.append(ArrowResult("CAR(GCMP) => factorization", "", gcmp.verdict, fact.verdict, violated))

    for r in model.r_paths():
        scope = str(list(r))
        loc, ign = c["car_loc"](model, r, tol=tol), c["ignorable"](model, r, tol=tol)
        report.certificates += [loc, ign]
        report.arrows.append(_implies("CAR(DYN) => CAR(GCMP)-loc", dyn, loc, scope))
        report.arrows.append(_implies("CAR(ABS) => CAR(GCMP)-loc", abs_, loc, scope))
        report.arrows.append(_implies("CAR(GCMP)-loc => ignorable", loc, ign, scope))

    try:
        cens = c["independent_censoring"](model, tol=tol)
    except NotApplicableError:
        cens = Certificate("independent censoring", Verdict.NOT_APPLICABLE, tol)
    else:
        report.arrows.append(_equivalent("CAR(DYN) <=> independent censoring", dyn, cens))
    report.certificates.append(cens)

    for arrow in report.violations:
        logger.error(
            "Implication %s%s violated on model %s",
            arrow.name, arrow.scope, json.dumps(report.model, sort_keys=True),
        )
    if strict:
        report.raise_for_violations()
    return report


# ---------------------------------------------------------------------------
# Randomized models
# ---------------------------------------------------------------------------

DEPENDENCES = ("none", "observed", "past_x", "current_x")


def _prob(rng: np.random.Generator) -> float:
    return round(float(rng.uniform(0.1, 0.9)), 3)


def random_model_spec(rng: np.random.Generator, horizon: int, depends_on: str | None = None) -> dict[str, Any]:
    """Plain-data table model: binary Markov X, single-component response table."""
    depends_on = depends_on or str(rng.choice(DEPENDENCES))
    initial, transition = {}, {}
    for theta in ("a", "b"):
        p1 = _prob(rng)
        initial[theta] = {"0": round(1.0 - p1, 3), "1": p1}
        transition[theta] = {}
        for prev in ("0", "1"):
            q1 = _prob(rng)
            transition[theta][prev] = {"0": round(1.0 - q1, 3), "1": q1}
    keys = ["NA"] if depends_on == "none" else ["NA", "0", "1"]
    tables = {
        psi: [{"prev_r": prev, "key": key, "p": _prob(rng)} for prev in (0, 1) for key in keys]
        for psi in ("p", "q")
    }
    return {
        "label": f"random-{depends_on}-h{horizon}",
        "horizon": horizon,
        "x_alphabet": [0, 1],
        "process": {"initial": initial, "transition": transition},
        "mechanism": {"depends_on": depends_on, "r_kind": str(rng.choice(["window", "visit"])), "tables": tables},
        "reference": ["a", "p"],
    }


def table_model(spec: Mapping[str, Any], cap: int | None = None) -> JointModel:
    """Build a joint model from a plain-data table specification.

    Probabilities are floats; symbol keys are the ``str`` of the alphabet
    entries; the key "NA" stands for MASK.
    """
    alphabet = list(spec["x_alphabet"])
    symbol = {str(s): s for s in alphabet}
    symbol["NA"] = MASK
    proc = spec["process"]
    initial = {th: {symbol[k]: float(v) for k, v in row.items()} for th, row in proc["initial"].items()}
    transition = {
        th: {symbol[prev]: {symbol[k]: float(v) for k, v in row.items()} for prev, row in rows.items()}
        for th, rows in proc["transition"].items()
    }
    absorbing = spec.get("absorbing_state")
    process = markov_process(
        alphabet,
        int(spec["horizon"]),
        initial,
        transition,
        absorbing_state=None if absorbing is None else symbol[str(absorbing)],
        is_counting=bool(spec.get("is_counting", False)),
        label=spec.get("label", "table"),
    )
    mech = spec["mechanism"]
    tables = {
        psi: {(int(e["prev_r"]), symbol[str(e["key"])]): float(e["p"]) for e in entries}
        for psi, entries in mech["tables"].items()
    }
    mechanism = response_table_mechanism(
        tables, mech.get("depends_on", "none"), mech.get("r_kind", "window"), label=mech.get("label", "table")
    )
    reference = tuple(spec.get("reference") or (process.theta_grid[0], mechanism.psi_grid[0]))
    return build_joint(process, mechanism, reference, metadata={"spec": dict(spec)}, cap=cap, label=spec.get("label", ""))


def _normalized(row: Mapping[str, float]) -> dict[str, float]:
    total = sum(row.values())
    return {k: v / total for k, v in row.items()}


def drop_symbol(spec: Mapping[str, Any]) -> dict[str, Any]:
    """The same table model with the last X symbol removed and its rows renormalized."""
    alphabet = list(spec["x_alphabet"])
    gone = str(alphabet.pop())
    proc = spec["process"]
    initial = {th: _normalized({k: v for k, v in row.items() if k != gone}) for th, row in proc["initial"].items()}
    transition = {
        th: {prev: _normalized({k: v for k, v in row.items() if k != gone}) for prev, row in rows.items() if prev != gone}
        for th, rows in proc["transition"].items()
    }
    mech = spec["mechanism"]
    tables = {psi: [e for e in entries if str(e["key"]) != gone] for psi, entries in mech["tables"].items()}
    out = {
        **spec,
        "x_alphabet": alphabet,
        "process": {**proc, "initial": initial, "transition": transition},
        "mechanism": {**mech, "tables": tables},
    }
    if str(spec.get("absorbing_state")) == gone:
        out["absorbing_state"] = None
    return out


def _smaller_specs(spec: Mapping[str, Any]) -> list[dict[str, Any]]:
    candidates = []
    if spec["horizon"] > 1:
        candidates.append({**spec, "horizon": spec["horizon"] - 1})
    if len(spec["x_alphabet"]) > 1:
        candidates.append(drop_symbol(spec))
    return candidates


def shrink_spec(spec: Mapping[str, Any], still_fails: Callable[[dict[str, Any]], bool]) -> dict[str, Any]:
    """Lower the horizon, then the number of X states, while the specification keeps failing."""
    best = dict(spec)
    progress = True
    while progress:
        progress = False
        for smaller in _smaller_specs(best):
            smaller["label"] = f"{spec['label']}-shrunk"
            try:
                failing = still_fails(smaller)
            except (CoarseningError, ZeroDivisionError):
                failing = False
            if failing:
                best, progress = smaller, True
                break
    return best


def battery_violates(spec: Mapping[str, Any], certifiers: Mapping[str, Certifier] | None = None) -> bool:
    return not theorem_battery(table_model(spec), certifiers=certifiers).ok

