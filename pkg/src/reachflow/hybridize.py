"""Reachability for nonlinear systems via linearization with error bounds.

The vector field is replaced, over a bounded domain, by an affine system
``dx/dt = A x + b + w`` whose disturbance w ranges over a box that
contains the linearization residual everywhere on the domain.  Flowpipes
of the affine relaxation then over-approximate the nonlinear flow as
long as it stays inside the domain.  Two drivers are provided: a static
grid partition that becomes an ordinary hybrid automaton (one mode per
cell, face guards between neighbours), and a dynamic scheme that wraps a
domain around the current reach set and rebuilds it whenever the
flowpipe runs out of it.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .linreach import (
    BAD_REACHED,
    BAD_SET,
    CONTINUOUS,
    FIXPOINT,
    HORIZON,
    ONCE_HULL,
    LazyReachSet,
    LinearSystem,
    ReachConfig,
    Segment,
    _as_hpolytope,
    _input_channel,
    discretize_continuous,
)
from .hybridreach import HybridAutomaton, Mode, Transition
from .numkernel import as_matrix, as_vector
from .setgeom import (
    Box,
    HPolytope,
    SetRep,
    bounding_box,
    contains_set,
    intersect,
    is_empty,
    member,
)

log = logging.getLogger(__name__)

STALLED = "stalled"


@dataclass(frozen=True, eq=False)
class NonlinearSystem:
    """``dx/dt = f(x)`` with optional analytic Jacobian and curvature bound.

    ``hessian_bound`` bounds, per coordinate i, the spectral norm of the
    Hessian of f_i.  It may be a scalar, a per-coordinate vector, or a
    callable ``(lower, upper) -> scalar or vector`` evaluated on the box
    the bound is needed for.  Without it, linearization falls back to a
    sampled residual estimate and results are no longer guaranteed
    enclosures.
    """

    f: Callable[[np.ndarray], np.ndarray]
    dim: int
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hessian_bound: Union[None, float, Sequence, Callable] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("state dimension must be positive")

    def field(self, x) -> np.ndarray:
        out = as_vector(self.f(as_vector(x)))
        if out.shape[0] != self.dim:
            raise ValueError("vector field output dimension mismatch")
        return out

    def jacobian(self, x) -> np.ndarray:
        x = as_vector(x)
        if self.jac is not None:
            j = as_matrix(self.jac(x))
            if j.shape != (self.dim, self.dim):
                raise ValueError("Jacobian shape mismatch")
            return j
        return _fd_jacobian(self.field, x)

    def curvature(self, lower, upper) -> Optional[np.ndarray]:
        if self.hessian_bound is None:
            return None
        h = self.hessian_bound
        if callable(h):
            h = h(np.asarray(lower, dtype=float), np.asarray(upper, dtype=float))
        h = np.broadcast_to(np.asarray(h, dtype=float), (self.dim,)).copy()
        if np.any(h < 0):
            raise ValueError("curvature bound must be nonnegative")
        return h


def _fd_jacobian(f, x: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian with a relative step."""
    n = x.shape[0]
    fx = f(x)
    out = np.empty((fx.shape[0], n))
    for j in range(n):
        h = 1e-6 * max(1.0, abs(x[j]))
        e = np.zeros(n)
        e[j] = h
        out[:, j] = (f(x + e) - f(x - e)) / (2.0 * h)
    return out


@dataclass(frozen=True, eq=False)
class Linearization:
    """Affine enclosure ``f(x) in A x + b + [-err, err]`` valid on a box."""

    a: np.ndarray
    b: np.ndarray
    err: np.ndarray  # per-coordinate residual radius
    rigorous: bool

    def disturbance_set(self) -> Box:
        return Box(self.b - self.err, self.b + self.err)


def linearize(
    system: NonlinearSystem,
    domain: Box,
    rng: Optional[np.random.Generator] = None,
) -> Linearization:
    """Affine enclosure of the field over ``domain``.

    Expansion at the domain center c: A = Jf(c), b = f(c) - A c.  With a
    curvature bound H the Taylor remainder gives the rigorous residual
    radius ``err_i = H_i/2 * d^2`` where d is the largest Euclidean
    distance from c inside the box (the half-diagonal).  Without one, the
    residual is estimated from samples, doubled, and flagged non-rigorous.
    """
    if domain.dim != system.dim:
        raise ValueError("domain dimension does not match the system")
    c = domain.center
    a = system.jacobian(c)
    b = system.field(c) - a @ c
    h = system.curvature(domain.lower, domain.upper)
    if h is not None:
        d2 = float(domain.radii @ domain.radii)
        return Linearization(a, b, 0.5 * h * d2, rigorous=True)
    rng = rng if rng is not None else np.random.default_rng(0)
    pts = [c, domain.lower.copy(), domain.upper.copy()]
    if domain.dim <= 10:
        pts.extend(
            np.array(corner)
            for corner in itertools.product(*zip(domain.lower, domain.upper))
        )
    pts.extend(rng.uniform(domain.lower, domain.upper, size=(256, domain.dim)))
    resid = np.zeros(system.dim)
    for x in pts:
        resid = np.maximum(resid, np.abs(system.field(x) - (a @ x + b)))
    log.warning(
        "no curvature bound: linearization residual estimated from samples "
        "and doubled; the enclosure is not guaranteed"
    )
    return Linearization(a, b, 2.0 * resid, rigorous=False)


def _affine_mode_parts(lin: Linearization):
    """Mode dynamics for an affine enclosure.

    The constant term and the residual enter as one identity-gain
    disturbance box ``b + [-err, err]``, so the gain slot stays None.
    """
    return lin.a, None, lin.disturbance_set()


# ---------------------------------------------------------------------------
# static partition


@dataclass(frozen=True, eq=False)
class StaticHybridization:
    automaton: HybridAutomaton
    domain: Box
    shape: tuple  # cells per axis
    cells: dict  # mode name -> cell Box
    rigorous: bool

    def mode_containing(self, x) -> str:
        x = as_vector(x)
        for name, cell in self.cells.items():
            if member(cell, x):
                return name
        raise ValueError("point lies outside the partitioned domain")

    def initial(self, x0: SetRep):
        """Initial mode and entry set for ``x0``: the cell of its center.

        Warns and clips when x0 overhangs that cell; states outside the
        partition domain are never covered.
        """
        box = bounding_box(x0)
        name = self.mode_containing(box.center)
        cell = self.cells[name]
        if not contains_set(cell, x0):
            log.warning(
                "initial set overhangs cell %s: clipping to the cell", name
            )
        clipped = intersect(_as_hpolytope(x0) if not isinstance(x0, (Box, HPolytope)) else x0, cell)
        if is_empty(clipped):
            raise ValueError("initial set does not intersect its center cell")
        return name, clipped


def static_hybridize(
    system: NonlinearSystem,
    domain: Box,
    grid: Union[int, Sequence[int]],
    max_cells: int = 1024,
) -> StaticHybridization:
    """Partition ``domain`` into a grid and linearize each cell into a mode.

    Adjacent cells are connected both ways; the guard of each transition
    is the shared face.  The cell count is capped: refusing a huge grid
    beats silently building an automaton that can never be explored.
    """
    n = system.dim
    if domain.dim != n:
        raise ValueError("domain dimension does not match the system")
    shape = np.broadcast_to(np.asarray(grid, dtype=int), (n,)).copy()
    if np.any(shape < 1):
        raise ValueError("grid must have at least one cell per axis")
    total = int(np.prod(shape))
    if total > max_cells:
        raise ValueError(
            f"grid would create {total} cells (cap {max_cells}); "
            "coarsen the grid or raise max_cells"
        )
    edges = [
        np.linspace(domain.lower[i], domain.upper[i], shape[i] + 1)
        for i in range(n)
    ]

    def cell_box(idx):
        lo = np.array([edges[i][idx[i]] for i in range(n)])
        hi = np.array([edges[i][idx[i] + 1] for i in range(n)])
        return Box(lo, hi)

    modes = []
    cells = {}
    rigorous = True
    for idx in itertools.product(*(range(s) for s in shape)):
        cell = cell_box(idx)
        lin = linearize(system, cell)
        rigorous = rigorous and lin.rigorous
        a, gain, dist = _affine_mode_parts(lin)
        name = "cell_" + "_".join(str(i) for i in idx)
        modes.append(Mode(name, a, b=gain, input_set=dist, invariant=cell))
        cells[name] = cell

    transitions = []
    for idx in itertools.product(*(range(s) for s in shape)):
        name = "cell_" + "_".join(str(i) for i in idx)
        cell = cells[name]
        for axis in range(n):
            if idx[axis] + 1 >= shape[axis]:
                continue
            jdx = list(idx)
            jdx[axis] += 1
            other = "cell_" + "_".join(str(i) for i in jdx)
            upper_face = Box(
                np.where(np.arange(n) == axis, cell.upper, cell.lower),
                cell.upper.copy(),
            )
            transitions.append(Transition(name, other, guard=upper_face))
            transitions.append(Transition(other, name, guard=upper_face))

    auto = HybridAutomaton(tuple(modes), tuple(transitions), time_kind=CONTINUOUS)
    return StaticHybridization(auto, domain, tuple(int(s) for s in shape), cells, rigorous)


# ---------------------------------------------------------------------------
# dynamic domains


@dataclass(frozen=True, eq=False)
class DynamicFlowpipe:
    segments: tuple
    status: str  # horizon | bad_reached | stalled
    status_step: Optional[int] = None
    time_step: Optional[float] = None
    domains: tuple = ()  # the domain used for each rebuild epoch
    rigorous: bool = True

    def __iter__(self):
        return iter(self.segments)

    def __len__(self):
        return len(self.segments)


def _inflate(box: Box, pad_fraction: float, min_pad: float) -> Box:
    pad = np.maximum(pad_fraction * (box.upper - box.lower), min_pad)
    return Box(box.lower - pad, box.upper + pad)


def dynamic_hybridize_reach(
    system: NonlinearSystem,
    x0: SetRep,
    config: ReachConfig,
    pad_fraction: float = 0.5,
    min_pad: float = 0.1,
    max_rebuilds: int = 10000,
) -> DynamicFlowpipe:
    """Flowpipe of a nonlinear system with on-the-fly domains.

    Each epoch linearizes over a box wrapped around the current reach set
    (its bounding box inflated by ``pad_fraction`` of its width, at least
    ``min_pad``) and advances the affine flowpipe while its segments stay
    inside that box -- segment containment in the domain is what makes
    the residual bound, and hence the enclosure, valid.  A step that
    leaves the domain is undone and the domain rebuilt around the last
    good segment.  Two consecutive rebuilds without progress stall the
    run; the truncated pipe is returned with status ``stalled``.
    """
    if config.step is None:
        raise ValueError("hybridized reachability needs a time step")
    if config.mode == FIXPOINT:
        raise ValueError("fixpoint mode is not supported with hybridization")
    if config.bloat_policy != ONCE_HULL:
        raise ValueError(
            "hybridized reachability requires the dense bloat policy: "
            "lattice semantics could step across a domain face unseen"
        )
    r = float(config.step)
    total = int(math.ceil(config.horizon / r - 1e-12))
    bad = config.bad_set if config.mode == BAD_SET else None
    bad_h = None
    if bad is not None:
        bad_h = bad if isinstance(bad, (Box, HPolytope)) else _as_hpolytope(bad)

    segments = []
    domains = []
    rigorous = True
    entry: SetRep = x0
    k = 0  # global index of the next segment to produce
    stall = 0
    status, status_step = HORIZON, None

    while k <= total:
        if len(domains) >= max_rebuilds:
            status, status_step = STALLED, k
            break
        domain = _inflate(bounding_box(entry), pad_fraction, min_pad)
        domains.append(domain)
        lin = linearize(system, domain)
        rigorous = rigorous and lin.rigorous
        a, gain, dist = _affine_mode_parts(lin)
        affine = LinearSystem(a, entry, b=gain, input_set=dist, time_kind=CONTINUOUS)
        a_step, omega0, _ = discretize_continuous(affine, config)
        channel = _input_channel(affine, config)
        lazy = LazyReachSet(omega0, a_step, channel, config.template)
        progressed = 0
        while True:
            current = lazy.concretize()
            if not contains_set(domain, current):
                break  # rebuild around the last good segment
            segments.append(Segment(k, k * r, (k + 1) * r, current))
            progressed += 1
            k += 1
            if bad_h is not None:
                hit = intersect(current, bad_h)
                if not is_empty(hit):
                    status, status_step = BAD_REACHED, k - 1
                    break
            if k > total:
                break
            lazy = lazy.advance()
        if status != HORIZON or k > total:
            break
        if progressed == 0:
            stall += 1
            if stall >= 2:
                status, status_step = STALLED, k
                break
            # one retry with a wider margin before giving up
            entry = _inflate(bounding_box(entry), 0.0, min_pad)
            continue
        stall = 0
        entry = segments[-1].set_rep

    return DynamicFlowpipe(
        tuple(segments),
        status,
        status_step=status_step,
        time_step=r,
        domains=tuple(domains),
        rigorous=rigorous,
    )
