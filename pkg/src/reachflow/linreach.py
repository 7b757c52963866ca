"""Flowpipe computation for linear systems with bounded inputs.

Discrete-time semantics is the exact set recurrence
``X_{k+1} = A X_k + B V``; continuous-time systems are reduced to that
shape by conservative time discretization.  Three interchangeable
stepping strategies are provided: explicit vertex propagation, facet
pushing in H-representation, and a lazy support-function evaluator that
never materializes intermediate sets (and therefore does not wrap).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .numkernel import as_matrix, as_vector, mat_apply, mat_exp
from .setgeom import (
    TOL,
    Box,
    Empty,
    HPolytope,
    SetRep,
    VPolytope,
    Zonotope,
    axis_bounds,
    bloat,
    contains_set,
    default_template,
    hrep_to_vrep,
    hull_union,
    intersect,
    is_empty,
    linear_map,
    member,
    minkowski_sum,
    support,
    support_batch,
    vrep_to_hrep,
    zonotope_vertices_2d,
)

log = logging.getLogger(__name__)

DISCRETE = "discrete"
CONTINUOUS = "continuous"

BOUNDED = "bounded"
BAD_SET = "bad_set"
FIXPOINT = "fixpoint"

VERTICES = "vertices"
FACETS = "facets"
LAZY = "lazy"

SMALL_R = "small_r"
ONCE_HULL = "once_hull"
ERROR_BALL = "error_ball"

# Flowpipe termination statuses.
HORIZON = "horizon"
BAD_REACHED = "bad_reached"
FIXPOINT_REACHED = "fixpoint"
COMPLETED = "completed"


@dataclass(frozen=True)
class LinearSystem:
    """``x' = A x + B v`` (discrete step or time derivative).

    ``input_set`` is the bounded set of admissible input values v; it is
    held fixed over the whole horizon but v may vary per step.  ``b``
    defaults to the identity when an input set is given without a gain.
    """

    a: np.ndarray
    x0: SetRep
    b: Optional[np.ndarray] = None
    input_set: Optional[SetRep] = None
    time_kind: str = DISCRETE

    def __post_init__(self):
        a = as_matrix(self.a)
        if a.shape[0] != a.shape[1]:
            raise ValueError("dynamics matrix must be square")
        object.__setattr__(self, "a", a)
        if isinstance(self.x0, Empty):
            raise ValueError("initial set must be nonempty")
        if self.x0.dim != a.shape[0]:
            raise ValueError("initial set dimension does not match dynamics")
        lo, hi = axis_bounds(self.x0)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("initial set must be bounded")
        if self.time_kind not in (DISCRETE, CONTINUOUS):
            raise ValueError(f"unknown time kind {self.time_kind!r}")
        if self.input_set is not None:
            b = np.eye(a.shape[0]) if self.b is None else as_matrix(self.b)
            if b.shape[0] != a.shape[0]:
                raise ValueError("input gain row count does not match dynamics")
            if b.shape[1] != self.input_set.dim:
                raise ValueError("input gain column count does not match input set")
            lo, hi = axis_bounds(self.input_set)
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                raise ValueError("input set must be bounded")
            object.__setattr__(self, "b", b)
        elif self.b is not None:
            raise ValueError("input gain given without an input set")

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    @property
    def has_input(self) -> bool:
        return self.input_set is not None


@dataclass(frozen=True)
class ReachConfig:
    """Knobs for one flowpipe run.

    ``horizon`` counts steps for discrete systems and is a time length
    for continuous ones (paired with ``step``).  ``max_steps`` guards the
    fixpoint mode only; the default is 10x the horizon step count, capped
    at 10000.
    """

    horizon: float
    step: Optional[float] = None
    mode: str = BOUNDED
    bad_set: Optional[SetRep] = None
    strategy: str = LAZY
    template: Optional[np.ndarray] = None
    bloat_policy: str = ONCE_HULL
    max_steps: Optional[int] = None
    state_bound: Optional[float] = None

    def __post_init__(self):
        if self.mode not in (BOUNDED, BAD_SET, FIXPOINT):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.strategy not in (VERTICES, FACETS, LAZY):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.bloat_policy not in (SMALL_R, ONCE_HULL, ERROR_BALL):
            raise ValueError(f"unknown bloat policy {self.bloat_policy!r}")
        if self.mode == BAD_SET and self.bad_set is None:
            raise ValueError("bad_set mode requires a bad set")
        if self.mode != BAD_SET and self.bad_set is not None:
            raise ValueError("bad set given outside bad_set mode")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if self.step is not None and self.step <= 0:
            raise ValueError("step must be positive")
        if self.template is not None:
            t = as_matrix(self.template)
            if np.any(np.linalg.norm(t, axis=1) < TOL):
                raise ValueError("template rows must be nonzero")
            object.__setattr__(self, "template", t)


@dataclass(frozen=True)
class Segment:
    """One flowpipe element: the states reachable over one step.

    For continuous systems the segment covers the dense time interval
    [t0, t1]; for discrete systems (and lattice-semantics continuous
    policies) it is the snapshot at step ``k`` and t0 == t1 == k * r.
    """

    k: int
    t0: float
    t1: float
    set_rep: SetRep


@dataclass(frozen=True)
class Flowpipe:
    segments: tuple
    status: str
    status_step: Optional[int] = None
    time_step: Optional[float] = None

    def __iter__(self):
        return iter(self.segments)

    def __len__(self):
        return len(self.segments)


@dataclass(frozen=True)
class SimTrace:
    states: np.ndarray  # (steps+1, n)
    inputs: Optional[np.ndarray]  # (steps, m) or None
    time_step: Optional[float] = None


# ---------------------------------------------------------------------------
# effective per-step input: kept as a list of summands so the lazy
# strategy can exploit support additivity without folding the sum


class _InputChannel:
    """Minkowski sum of a few simple sets, evaluated lazily."""

    def __init__(self, parts: Sequence[SetRep]):
        self.parts = [p for p in parts if not _is_origin(p)]

    def __bool__(self):
        return bool(self.parts)

    @property
    def dim(self):
        return self.parts[0].dim

    def support_batch(self, dmat: np.ndarray) -> np.ndarray:
        total = np.zeros(dmat.shape[1])
        for p in self.parts:
            total += support_batch(p, dmat)
        return total

    def as_set(self) -> SetRep:
        s = self.parts[0]
        for p in self.parts[1:]:
            s = minkowski_sum(s, p)
        return s


def _is_origin(s: SetRep) -> bool:
    if isinstance(s, Box):
        return bool(np.all(s.lower == 0.0) and np.all(s.upper == 0.0))
    if isinstance(s, Zonotope):
        return bool(
            np.all(s.center == 0.0)
            and (s.order == 0 or np.all(s.generators == 0.0))
        )
    return False


# ---------------------------------------------------------------------------
# single-step operators


def step_autonomous(p: SetRep, a: np.ndarray) -> SetRep:
    """One autonomous step ``P -> A P``."""
    return linear_map(a, p)


def step_input_vertices(
    p: SetRep, v: SetRep, a: np.ndarray, b: Optional[np.ndarray] = None
) -> VPolytope:
    """``A P + B V`` by explicit vertex propagation.

    Both operands must be convertible to V-representation, which limits
    this strategy to low dimensions for H-form operands.  In 2-d the
    vertex cloud is reduced to its hull after every step, so the count
    stays bounded by the true facet structure.
    """
    a = as_matrix(a)
    pv = _as_vpolytope(p)
    av = linear_map(a, pv)
    bv = _as_vpolytope(v if b is None else linear_map(as_matrix(b), v))
    out = minkowski_sum(av, bv)
    if not isinstance(out, VPolytope):
        out = _as_vpolytope(out)
    return out


def step_input_facets(
    p: HPolytope, v: SetRep, a: np.ndarray, b: Optional[np.ndarray] = None
) -> HPolytope:
    """``A P + B V`` by pushing facets of P through the map.

    For invertible A each facet normal is pulled back exactly and its
    offset raised by the input support, so every facet of the result
    touches the true sum.  The input may add facet directions that P does
    not have, so with a full-dimensional input the result is a tight
    superset and is flagged; it is the exact sum when the input is absent
    or a point.  A singular A loses facet correspondence: the step falls
    back to a template over-approximation and logs a warning.
    """
    a = as_matrix(a)
    if not isinstance(p, HPolytope):
        p = _as_hpolytope(p)
    bv = v if b is None else linear_map(as_matrix(b), v)
    bv_batch = (
        bv.support_batch if isinstance(bv, _InputChannel) else (lambda d: support_batch(bv, d))
    )
    n = a.shape[0]
    if abs(np.linalg.det(a)) > TOL:
        # rows of the image: a_i A^{-1}; same offsets, then push by the input
        mapped = np.linalg.solve(a.T, p.normals.T).T
        img = HPolytope(mapped, p.offsets, exact=p.exact)
        if v is None:
            return img
        return HPolytope(img.normals, img.offsets + bv_batch(img.normals.T),
                         exact=False)
    log.warning(
        "facet pushing through a singular map: falling back to a template hull"
    )
    dirs = default_template(n)
    vals = support_batch(p, (a.T @ dirs.T))
    if v is not None:
        vals = vals + bv_batch(dirs.T)
    return HPolytope(dirs, vals, exact=False)


# ---------------------------------------------------------------------------
# lazy strategy


class LazyReachSet:
    """Reach set at step k, represented by its support function.

    Holds the initial set X0, the step matrix A and the per-step input
    summands; the set it denotes is ``A^k X0 + sum_{i<k} A^i U``.  A
    template of directions registered up front is co-evolved under A^T
    so their input support sums accumulate in O(1) per step; any other
    direction is answered from scratch in O(k).  Advancing returns a new
    object and never feeds a concretization back into the recurrence, so
    repeated over-approximation cannot compound.
    """

    __slots__ = ("base", "a", "channel", "k", "base_map", "dirs", "_cur", "_acc")

    def __init__(
        self,
        base: SetRep,
        a: np.ndarray,
        input_set: Union[SetRep, _InputChannel, None] = None,
        directions: Optional[np.ndarray] = None,
    ):
        if isinstance(base, Empty):
            raise ValueError("initial set must be nonempty")
        self.base = base
        self.a = as_matrix(a)
        n = self.a.shape[0]
        if self.a.shape != (n, n) or base.dim != n:
            raise ValueError("dimension mismatch between map and initial set")
        if input_set is None:
            self.channel = _InputChannel([])
        elif isinstance(input_set, _InputChannel):
            self.channel = input_set
        else:
            self.channel = _InputChannel([input_set])
        if self.channel and self.channel.dim != n:
            raise ValueError("input set dimension does not match the map")
        if directions is None:
            directions = default_template(n)
        directions = as_matrix(directions)
        if directions.shape[1] != n:
            raise ValueError("template direction dimension mismatch")
        self.k = 0
        self.base_map = np.eye(n)
        self.dirs = directions
        self._cur = directions.T.copy()  # columns: (A^T)^k d
        self._acc = np.zeros(directions.shape[0])

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def advance(self) -> "LazyReachSet":
        new = object.__new__(LazyReachSet)
        new.base = self.base
        new.a = self.a
        new.channel = self.channel
        new.dirs = self.dirs
        new.k = self.k + 1
        new.base_map = self.a @ self.base_map
        if self.channel:
            new._acc = self._acc + self.channel.support_batch(self._cur)
        else:
            new._acc = self._acc
        new._cur = self.a.T @ self._cur
        return new

    def support(self, d) -> float:
        """Support value in direction d (fresh O(k) evaluation)."""
        d = as_vector(d)
        if d.shape[0] != self.dim:
            raise ValueError("direction dimension mismatch")
        pulled = self.base_map.T @ d
        if np.all(pulled == 0.0):
            val = 0.0
        else:
            val = support(self.base, pulled)[0]
        if self.channel:
            t = d
            for _ in range(self.k):
                val += float(self.channel.support_batch(t.reshape(-1, 1))[0])
                t = self.a.T @ t
        return float(val)

    def _template_values(self) -> np.ndarray:
        pulled = self.base_map.T @ self.dirs.T
        zero = np.all(pulled == 0.0, axis=0)
        if np.any(zero):
            vals = np.zeros(self.dirs.shape[0])
            nz = ~zero
            if np.any(nz):
                vals[nz] = support_batch(self.base, pulled[:, nz])
        else:
            vals = support_batch(self.base, pulled)
        return vals + self._acc

    def concretize(self, directions: Optional[np.ndarray] = None) -> HPolytope:
        """Template H-polytope enclosure at the current step.

        Exact for the registered template directions; a superset of the
        true reach set overall, hence flagged non-exact.
        """
        if directions is None:
            return HPolytope(self.dirs, self._template_values(), exact=False)
        directions = as_matrix(directions)
        vals = np.array([self.support(d) for d in directions])
        return HPolytope(directions, vals, exact=False)


def lazy_advance(s: LazyReachSet) -> LazyReachSet:
    return s.advance()


def concretize(s: LazyReachSet, template: Optional[np.ndarray] = None) -> HPolytope:
    return s.concretize(template)


# ---------------------------------------------------------------------------
# time discretization


def _inf_norm(a: np.ndarray) -> float:
    return float(np.abs(a).sum(axis=1).max()) if a.size else 0.0


def _sup_norm_of_set(s: SetRep) -> float:
    lo, hi = axis_bounds(s)
    return float(np.max(np.maximum(np.abs(lo), np.abs(hi))))


def _ball(n: int, radius: float) -> Box:
    r = np.full(n, float(radius))
    return Box(-r, r)


def discretize_continuous(system: LinearSystem, config: ReachConfig):
    """Reduce ``dx/dt = A x + B v`` to a discrete recurrence over step r.

    Returns ``(a_step, omega0, err_ball)`` with ``a_step = e^{Ar}``.
    ``omega0`` covers the initial segment per the bloat policy and
    ``err_ball`` is the per-step error set E (a centered box; degenerate
    at the origin except for the error_ball policy).

    The per-step input contribution is NOT part of E: reach() adds
    ``r * BV`` plus a curvature residual of radius
    ``(e^u - 1 - u) / ||A||  *  sup ||Bv||`` (u = ||A|| r), which together
    cover the true convolution integral of the input over one step.
    """
    if config.step is None:
        raise ValueError("continuous systems require a time step")
    r = float(config.step)
    a = system.a
    n = system.dim
    a_step = mat_exp(a, r)
    u = _inf_norm(a) * r
    phi = math.expm1(u) - u  # e^u - 1 - u, accurate near 0
    r_v = 0.0
    if system.has_input:
        r_v = _sup_norm_of_set(linear_map(system.b, system.input_set))
    norm_a = _inf_norm(a)
    beta = (phi / norm_a) * r_v if norm_a > 0 else 0.0

    policy = config.bloat_policy
    if policy == SMALL_R:
        return a_step, system.x0, _ball(n, 0.0)
    if policy == ONCE_HULL:
        r_x = _sup_norm_of_set(system.x0)
        # chord defect of the matrix exponential over one step, plus the
        # input's first-step reachability radius
        gamma = ((math.expm1(u) / norm_a) if norm_a > 0 else r) * r_v
        eps = phi * r_x + gamma
        omega0 = hull_union(system.x0, linear_map(a_step, system.x0))
        if eps > 0:
            omega0 = bloat(omega0, eps)
        return a_step, omega0, _ball(n, 0.0)
    # error_ball: lattice semantics with a fixed fattening per step
    r_x = (
        float(config.state_bound)
        if config.state_bound is not None
        else _sup_norm_of_set(system.x0)
    )
    return a_step, system.x0, _ball(n, phi * r_x + beta)


def _input_channel(system: LinearSystem, config: ReachConfig) -> _InputChannel:
    """Effective per-step input summands for the discrete recurrence."""
    if system.time_kind == DISCRETE:
        if not system.has_input:
            return _InputChannel([])
        return _InputChannel([linear_map(system.b, system.input_set)])
    parts = []
    r = float(config.step)
    if system.has_input:
        bv = linear_map(system.b, system.input_set)
        parts.append(linear_map(r * np.eye(system.dim), bv))
    if config.bloat_policy == ERROR_BALL:
        # E already carries the input curvature residual beta
        _, _, err = discretize_continuous(system, config)
        parts.append(err)
    elif system.has_input:
        norm_a = _inf_norm(system.a)
        phi = math.expm1(norm_a * r) - (norm_a * r)
        beta = (phi / norm_a) * _sup_norm_of_set(bv) if norm_a > 0 else 0.0
        if beta > 0:
            parts.append(_ball(system.dim, beta))
    return _InputChannel(parts)


# ---------------------------------------------------------------------------
# conversion helpers for the strategies


def _as_vpolytope(s: SetRep) -> VPolytope:
    if isinstance(s, VPolytope):
        return s
    if isinstance(s, Box):
        return s.to_vpolytope()
    if isinstance(s, HPolytope):
        if s.dim > 3:
            raise ValueError(
                "vertex strategy needs V-form operands; H-form conversion "
                "is only available up to dimension 3"
            )
        return hrep_to_vrep(s)
    if isinstance(s, Zonotope):
        if s.dim == 2:
            return VPolytope(zonotope_vertices_2d(s), exact=s.exact)
        box = s.bounding_box()  # sound enclosure only: flag it
        return VPolytope(box.to_vpolytope().vertices, exact=False)
    if isinstance(s, _InputChannel):
        return _as_vpolytope(s.as_set())
    raise TypeError(f"cannot convert {type(s).__name__} to V-form")


def _as_hpolytope(s: SetRep) -> HPolytope:
    if isinstance(s, HPolytope):
        return s
    if isinstance(s, Box):
        return s.to_hpolytope()
    if isinstance(s, VPolytope):
        return vrep_to_hrep(s)
    if isinstance(s, Zonotope):
        if s.dim == 2:
            return vrep_to_hrep(VPolytope(zonotope_vertices_2d(s), exact=s.exact))
        b = s.bounding_box()
        return HPolytope(
            np.vstack([np.eye(s.dim), -np.eye(s.dim)]),
            np.concatenate([b.upper, -b.lower]),
            exact=False,
        )
    raise TypeError(f"cannot convert {type(s).__name__} to H-form")


def _template_dominates(q: SetRep, p: SetRep) -> bool:
    """P subset of Q, with an O(m) fast path for same-template H-forms."""
    if (
        isinstance(p, HPolytope)
        and isinstance(q, HPolytope)
        and p.normals.shape == q.normals.shape
        and np.array_equal(p.normals, q.normals)
    ):
        return bool(np.all(p.offsets <= q.offsets + TOL))
    return contains_set(q, p)


# ---------------------------------------------------------------------------
# driver


def reach(system: LinearSystem, config: ReachConfig) -> Flowpipe:
    """Compute the flowpipe of ``system`` under ``config``.

    Incremental worklist over steps: P is advanced by one step per
    iteration and appended to the output.  Early exit on bad-set contact
    (bad_set mode) or on inclusion in an already-seen segment (fixpoint
    mode, decided by template domination).
    """
    n = system.dim
    continuous = system.time_kind == CONTINUOUS
    if continuous:
        a_step, omega0, _ = discretize_continuous(system, config)
        r = float(config.step)
        nsteps = int(math.ceil(config.horizon / r - 1e-12))
        dense = config.bloat_policy == ONCE_HULL
    else:
        if config.step is not None:
            raise ValueError("discrete systems take an integer horizon, not a step")
        if config.horizon != int(config.horizon):
            raise ValueError("discrete horizon must be an integer step count")
        a_step, omega0 = system.a, system.x0
        r = 1.0
        nsteps = int(config.horizon)
        dense = False
    channel = _input_channel(system, config)

    limit = nsteps
    if config.mode == FIXPOINT:
        limit = (
            int(config.max_steps)
            if config.max_steps is not None
            else (10 * nsteps if nsteps > 0 else 10000)
        )

    if config.template is not None and config.template.shape[1] != n:
        raise ValueError("template dimension does not match the system")

    bad_h = None
    if config.bad_set is not None:
        if config.bad_set.dim != n:
            raise ValueError("bad set dimension does not match the system")
        bad_h = _as_hpolytope(config.bad_set)

    # strategy state: `current` yields the set to record, `advance` steps it
    if config.strategy == LAZY:
        lazy = LazyReachSet(omega0, a_step, channel, config.template)
        current = lazy.concretize()
    elif config.strategy == VERTICES:
        pv = _as_vpolytope(omega0)
        v_in = _as_vpolytope(channel.as_set()) if channel else None
        current = pv
    else:  # facets
        ph = _as_hpolytope(omega0)
        current = ph

    def record(k: int, s: SetRep) -> Segment:
        if dense:
            return Segment(k, k * r, (k + 1) * r, s)
        t = k * r if continuous else float(k)
        return Segment(k, t, t, s)

    segments = [record(0, current)]

    def hits_bad(s: SetRep) -> bool:
        cut = intersect(_as_hpolytope(s) if not isinstance(s, (Box, HPolytope)) else s, bad_h)
        return not is_empty(cut)

    status = HORIZON
    status_step: Optional[int] = None

    if bad_h is not None and hits_bad(current):
        return Flowpipe(
            (segments[0],),
            BAD_REACHED,
            status_step=0,
            time_step=r if continuous else None,
        )

    k = 0
    while k < limit:
        k += 1
        if config.strategy == LAZY:
            lazy = lazy.advance()
            current = lazy.concretize()
        elif config.strategy == VERTICES:
            if v_in is not None:
                pv = step_input_vertices(pv, v_in, a_step)
            else:
                out = step_autonomous(pv, a_step)
                pv = out if isinstance(out, VPolytope) else _as_vpolytope(out)
            current = pv
        else:
            ph = step_input_facets(ph, channel if channel else None, a_step)
            current = ph
        segments.append(record(k, current))
        if bad_h is not None and hits_bad(current):
            status, status_step = BAD_REACHED, k
            break
        if config.mode == FIXPOINT:
            if any(_template_dominates(seg.set_rep, current) for seg in segments[:-1]):
                status, status_step = FIXPOINT_REACHED, k
                break

    return Flowpipe(
        tuple(segments),
        status,
        status_step=status_step,
        time_step=r if continuous else None,
    )


# ---------------------------------------------------------------------------
# trajectory sampling


def simulate(
    system: LinearSystem,
    x0,
    inputs: Optional[Sequence] = None,
    steps: Optional[int] = None,
    step: Optional[float] = None,
) -> SimTrace:
    """One exact trajectory of the system from the point x0.

    Discrete systems iterate the map; continuous systems apply the exact
    one-step solution under a zero-order hold, i.e. the input is held
    constant over each step.  Every supplied input value must lie in the
    system's input set.
    """
    x0 = as_vector(x0)
    if x0.shape[0] != system.dim:
        raise ValueError("initial state dimension mismatch")
    if inputs is None:
        if system.has_input:
            raise ValueError("system has an input: per-step values are required")
        if steps is None:
            raise ValueError("autonomous simulation needs an explicit step count")
        seq = None
        nsteps = int(steps)
    else:
        seq = [as_vector(z) for z in inputs]
        for z in seq:
            if not member(system.input_set, z):
                raise ValueError("input value outside the admissible input set")
        if steps is not None and int(steps) != len(seq):
            raise ValueError("steps and input sequence length disagree")
        nsteps = len(seq)

    continuous = system.time_kind == CONTINUOUS
    if continuous:
        if step is None or step <= 0:
            raise ValueError("continuous simulation needs a positive time step")
        r = float(step)
        a_step = mat_exp(system.a, r)
        if system.has_input:
            # integral of e^{As} over one step via the augmented exponential
            n = system.dim
            aug = np.zeros((2 * n, 2 * n))
            aug[:n, :n] = system.a
            aug[:n, n:] = np.eye(n)
            b_step = mat_exp(aug, r)[:n, n:] @ system.b
    else:
        a_step = system.a

    states = np.empty((nsteps + 1, system.dim))
    states[0] = x0
    x = x0
    for k in range(nsteps):
        x = mat_apply(a_step, x)
        if seq is not None:
            gain = b_step if continuous else system.b
            x = x + mat_apply(gain, seq[k])
        states[k + 1] = x
    return SimTrace(
        states,
        np.array(seq) if seq is not None else None,
        time_step=(float(step) if continuous else None),
    )
