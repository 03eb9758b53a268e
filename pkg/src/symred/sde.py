"""Noise paths and Stratonovich integrators.

A Stratonovich operator is presented by one field per noise component. For a
state ``z`` and noise position ``x`` the system function returns the stacked
fields, and the discretized equation reads ``dz = sum_i sigma_i(x, z) dX^i``.

Three state kinds are supported:

``"vector"``
    ``z`` is a point of R^n, fields have shape ``(m, n)``.
``"group"``
    ``z`` is a rotation, fields are algebra vectors ``(m, 3)``. With
    ``side="left"`` the tangent vector is ``g hat(v)``, with ``side="right"``
    it is ``hat(v) g``.
``"bundle"``
    ``z = (g, y)`` on SO(3) x R^n; fields are a pair ``(v, f)`` with ``v`` of
    shape ``(m, 3)`` (trivialized as for ``"group"``) and ``f`` of shape
    ``(m, n)``.

Systems flagged ``vectorized=True`` accept a leading path axis on both ``x``
and ``z`` and are integrated over whole ensembles at once.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from symred.lie import exp_so3, reorthonormalize

__all__ = [
    "InvalidGrid",
    "NotDivisible",
    "Diverged",
    "GridMismatch",
    "InsufficientData",
    "NoisePath",
    "StratonovichSystem",
    "Trajectory",
    "project_trajectory",
    "brownian_path",
    "time_path",
    "coarsen",
    "path_rng",
    "integrate_heun",
    "integrate_group",
    "integrate",
    "integrate_ensemble",
    "state_distance",
    "strong_error",
    "convergence_order",
    "DEFAULT_BOUND",
    "DEFAULT_MAX_INCREMENT",
    "DEFAULT_REORTHO_EVERY",
]

DEFAULT_BOUND = 1e8
DEFAULT_MAX_INCREMENT = 10.0
DEFAULT_REORTHO_EVERY = 32


class InvalidGrid(ValueError):
    pass


class NotDivisible(ValueError):
    pass


class GridMismatch(ValueError):
    pass


class InsufficientData(ValueError):
    pass


class Diverged(RuntimeError):
    """Numerical blow-up detected during integration.

    Attributes:
        time: grid time at the start of the failing step.
        step: index of the failing step.
    """

    def __init__(self, message, time=None, step=None):
        super().__init__(message)
        self.time = time
        self.step = step


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Discretized sample path of the driving semimartingale.

    The path is stored by its values ``X_k`` at the grid times (``X_0 = 0``);
    increments are differences of consecutive values. Components labelled
    ``"time"`` coincide with the grid, so their increments are exactly
    ``t_{k+1} - t_k``.
    """

    times: np.ndarray
    values: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise InvalidGrid("a noise path needs at least one step")
        if not np.all(np.diff(times) > 0):
            raise InvalidGrid("grid must be strictly increasing")
        if values.shape != (times.size, len(self.labels)):
            raise InvalidGrid(
                f"values shape {values.shape} does not match grid {times.size} "
                f"x {len(self.labels)} components"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidGrid("noise values must be finite")
        for i, lab in enumerate(self.labels):
            if lab not in ("time", "brownian", "user"):
                raise InvalidGrid(f"unknown component kind {lab!r}")
            if lab == "time" and not np.array_equal(values[:, i], times):
                raise InvalidGrid("time components must coincide with the grid")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", tuple(self.labels))

    @classmethod
    def from_increments(cls, times, increments, labels):
        """Build a path from increments; time components are taken from ``times``."""
        times = np.asarray(times, dtype=float)
        increments = np.asarray(increments, dtype=float)
        values = np.zeros((times.size, increments.shape[1]))
        values[1:] = np.cumsum(increments, axis=0)
        for i, lab in enumerate(labels):
            if lab == "time":
                values[:, i] = times
        return cls(times, values, tuple(labels))

    @cached_property
    def increments(self):
        out = np.diff(self.values, axis=0)
        out.setflags(write=False)
        return out

    @property
    def steps(self):
        return self.times.size - 1

    @property
    def dim(self):
        return len(self.labels)

    @property
    def duration(self):
        return self.times[-1] - self.times[0]


def path_rng(seed, index=None):
    """Random generator for ``seed``, or for path ``index`` of an ensemble.

    Per-path streams are spawned from the pair ``(seed, index)`` so that
    ensembles are reproducible independently of evaluation order.
    """
    if index is None:
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def time_path(T, K):
    """Deterministic driving path ``X_t = t`` on a uniform grid."""
    if K < 1 or not T > 0:
        raise InvalidGrid("need K >= 1 and T > 0")
    times = np.linspace(0.0, T, K + 1)
    return NoisePath(times, times[:, None].copy(), ("time",))


def brownian_path(dim, T, K, seed=None, *, rng=None, scale=1.0):
    """Time component plus ``dim`` independent Brownian components.

    Args:
        dim: number of Brownian components.
        T: duration.
        K: number of steps of the uniform grid.
        seed: integer seed; ignored when ``rng`` is given.
        rng: explicit ``numpy.random.Generator``.
        scale: multiplies every Brownian component.
    """
    if K < 1 or not T > 0:
        raise InvalidGrid("need K >= 1 and T > 0")
    if rng is None:
        rng = path_rng(seed)
    times = np.linspace(0.0, T, K + 1)
    dW = rng.normal(0.0, math.sqrt(T / K), size=(K, dim)) * scale
    increments = np.column_stack([np.diff(times), dW])
    return NoisePath.from_increments(times, increments, ("time",) + ("brownian",) * dim)


def coarsen(p, factor):
    """Subsample ``p`` every ``factor`` steps.

    Coarse increments are the telescoped sums of the fine ones and the path
    values at shared times are bitwise identical.
    """
    factor = int(factor)
    if factor < 1 or p.steps % factor:
        raise NotDivisible(f"factor {factor} does not divide {p.steps} steps")
    if factor == 1:
        return p
    return NoisePath(p.times[::factor], p.values[::factor], p.labels)


@dataclass(frozen=True, eq=False)
class StratonovichSystem:
    """Stratonovich operator given as stacked fields, see the module docstring.

    Attributes:
        fields: callable ``(x, z) -> fields``.
        noise_dim: number of noise components ``m``.
        kind: ``"vector"``, ``"group"`` or ``"bundle"``.
        state_dim: dimension of the vector part (``None`` for pure group states).
        side: trivialization of group tangent vectors.
        vectorized: fields accept a leading path axis.
        labels: names of the vector-part coordinates (used for CSV columns).
    """

    fields: Callable
    noise_dim: int
    kind: str = "vector"
    state_dim: int | None = None
    side: str = "left"
    vectorized: bool = False
    labels: tuple[str, ...] | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("vector", "group", "bundle"):
            raise ValueError(f"unknown system kind {self.kind!r}")
        if self.side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {self.side!r}")

    def __call__(self, x, z):
        return self.fields(x, z)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Solution states on a time grid with named monitor series.

    ``group`` holds rotations ``(K+1, 3, 3)`` and ``vector`` holds points
    ``(K+1, n)``; bundle trajectories carry both. Ensemble results use the same
    class with a leading path axis on the state arrays.
    """

    times: np.ndarray
    group: np.ndarray | None = None
    vector: np.ndarray | None = None
    monitors: dict = field(default_factory=dict)
    labels: tuple[str, ...] | None = None

    @property
    def kind(self):
        if self.group is not None and self.vector is not None:
            return "bundle"
        return "group" if self.group is not None else "vector"

    def __len__(self):
        return self.times.size

    def state(self, k):
        """State at grid index ``k`` in the integrators' representation."""
        if self.kind == "bundle":
            return (self.group[..., k, :, :], self.vector[..., k, :])
        if self.kind == "group":
            return self.group[..., k, :, :]
        return self.vector[..., k, :]

    @classmethod
    def from_states(cls, times, states, kind, labels=None):
        """Inverse of iterating :meth:`state` over the grid."""
        states = list(states)
        if kind == "bundle":
            return cls(
                np.asarray(times),
                np.array([s[0] for s in states]),
                np.array([s[1] for s in states]),
                {},
                labels,
            )
        arr = np.array(states, dtype=float)
        if kind == "group":
            return cls(np.asarray(times), arr, None, {}, labels)
        return cls(np.asarray(times), None, arr, {}, labels)

    def with_monitor(self, name, series):
        series = np.asarray(series, dtype=float)
        if series.shape[-1] != self.times.size:
            raise ValueError("monitor length does not match the time grid")
        return replace(self, monitors={**self.monitors, name: series})

    def state_columns(self):
        cols = []
        if self.group is not None:
            cols += [f"g{i}{j}" for i in range(3) for j in range(3)]
        if self.vector is not None:
            n = self.vector.shape[-1]
            cols += list(self.labels) if self.labels else [f"y{i}" for i in range(n)]
        return cols

    def to_csv(self, path):
        """Write ``t,<state columns>,<monitor columns>`` with round-trip floats."""
        if (self.group is not None and self.group.ndim != 3) or (
            self.vector is not None and self.vector.ndim != 2
        ):
            raise ValueError("CSV export is defined for single-path trajectories")
        blocks = [self.times[:, None]]
        if self.group is not None:
            blocks.append(self.group.reshape(len(self), 9))
        if self.vector is not None:
            blocks.append(self.vector)
        names = list(self.monitors)
        for name in names:
            blocks.append(np.asarray(self.monitors[name])[:, None])
        table = np.hstack(blocks)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + self.state_columns() + names)
            for row in table:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, monitors=()):
        """Read a CSV written by :meth:`to_csv`.

        Columns named in ``monitors`` are read back as monitors; ``g00..g22``
        as the group part; anything else as the vector part.
        """
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array([[float(v) for v in r] for r in rows[1:]])
        idx = {name: i for i, name in enumerate(header)}
        gcols = [f"g{i}{j}" for i in range(3) for j in range(3)]
        group = None
        if all(c in idx for c in gcols):
            group = body[:, [idx[c] for c in gcols]].reshape(-1, 3, 3)
        vcols = [c for c in header[1:] if c not in gcols and c not in monitors]
        vector = body[:, [idx[c] for c in vcols]] if vcols else None
        mons = {m: body[:, idx[m]] for m in monitors}
        return cls(body[:, 0], group, vector, mons, tuple(vcols) or None)


def _contract(dx, F):
    # sum_i dx^i F_i, optional leading path axis
    return np.einsum("...m,...mk->...k", dx, F)


def _norms(v):
    return np.sqrt(np.sum(v * v, axis=-1))


def _check_vector(y, bound, t, k):
    norms = _norms(y)
    if not np.all(np.isfinite(norms)) or np.any(norms > bound):
        raise Diverged(f"state norm exceeded {bound:g} at t={t:g}", time=t, step=k)


def _check_increment(w, limit, t, k):
    norms = _norms(w)
    if not np.all(np.isfinite(norms)) or np.any(norms > limit):
        raise Diverged(
            f"algebra increment exceeded {limit:g} rad at t={t:g}", time=t, step=k
        )


def _move(g, w, side):
    return g @ exp_so3(w) if side == "left" else exp_so3(w) @ g


def _run(sys, times, X, z0, bound, max_increment, reortho_every):
    """Shared stepping loop; ``X`` holds noise values with optional path axis."""
    if X.shape[-1] != sys.noise_dim:
        raise ValueError(
            f"noise has {X.shape[-1]} components but the system expects {sys.noise_dim}"
        )
    K = times.size - 1
    dX = np.diff(X, axis=-2)
    kind = sys.kind
    g = y = gs = ys = None
    if kind == "vector":
        y = np.array(z0, dtype=float)
    elif kind == "group":
        g = np.array(z0, dtype=float)
    else:
        g, y = (np.array(a, dtype=float) for a in z0)
    lead = X.shape[:-2]
    if g is not None:
        gs = np.empty(lead + (K + 1, 3, 3))
        gs[..., 0, :, :] = g
    if y is not None:
        ys = np.empty(lead + (K + 1, y.shape[-1]))
        ys[..., 0, :] = y
        _check_vector(y, bound, times[0], 0)

    for k in range(K):
        x0 = X[..., k, :]
        x1 = X[..., k + 1, :]
        dx = dX[..., k, :]
        t = times[k]
        if kind == "vector":
            dy0 = _contract(dx, sys.fields(x0, y))
            ys_ = y + dy0
            dy1 = _contract(dx, sys.fields(x1, ys_))
            y = y + 0.5 * (dy0 + dy1)
            _check_vector(y, bound, t, k)
            ys[..., k + 1, :] = y
            continue
        if kind == "group":
            w0 = _contract(dx, sys.fields(x0, g))
            _check_increment(w0, max_increment, t, k)
            g_ = _move(g, w0, sys.side)
            w1 = _contract(dx, sys.fields(x1, g_))
        else:
            V0, F0 = sys.fields(x0, (g, y))
            w0 = _contract(dx, V0)
            dy0 = _contract(dx, F0)
            _check_increment(w0, max_increment, t, k)
            g_ = _move(g, w0, sys.side)
            V1, F1 = sys.fields(x1, (g_, y + dy0))
            w1 = _contract(dx, V1)
            y = y + 0.5 * (dy0 + _contract(dx, F1))
            _check_vector(y, bound, t, k)
            ys[..., k + 1, :] = y
        w = 0.5 * (w0 + w1)
        _check_increment(w, max_increment, t, k)
        g = _move(g, w, sys.side)
        if reortho_every and (k + 1) % reortho_every == 0:
            g = reorthonormalize(g)
        gs[..., k + 1, :, :] = g

    labels = sys.labels
    if kind == "vector":
        return Trajectory(times, None, ys, {}, labels)
    if kind == "group":
        return Trajectory(times, gs, None, {}, labels)
    return Trajectory(times, gs, ys, {}, labels)


def integrate_heun(sys, noise, z0, *, bound=DEFAULT_BOUND):
    """Stratonovich-Heun (trapezoidal predictor-corrector) for vector states.

    Predictor ``z* = z + sum_i sigma_i(x_k, z) dX^i``; corrector
    ``z+ = z + (1/2) sum_i (sigma_i(x_k, z) + sigma_i(x_{k+1}, z*)) dX^i``.

    Raises:
        Diverged: when the state leaves the ball of radius ``bound``.
    """
    if sys.kind != "vector":
        raise TypeError("integrate_heun needs a vector-state system; use integrate_group")
    return _run(sys, noise.times, noise.values, z0, bound, math.inf, 0)


def integrate_group(
    sys,
    noise,
    g0,
    *,
    bound=DEFAULT_BOUND,
    max_increment=DEFAULT_MAX_INCREMENT,
    reortho_every=DEFAULT_REORTHO_EVERY,
):
    """Geometric Heun scheme on SO(3) (or SO(3) x R^n for bundle systems).

    The group is advanced by ``g exp(w)`` (left) or ``exp(w) g`` (right), with
    ``w`` the trapezoidal average of the algebra increments at the current
    point and at the predicted point. A vector part, if present, takes the
    ordinary Heun step with the same predictor. Rotations are projected back
    onto SO(3) every ``reortho_every`` steps (0 disables this).

    Args:
        sys: a ``"group"`` or ``"bundle"`` system.
        noise: driving path.
        g0: initial rotation, or ``(g0, y0)`` for bundle systems.

    Raises:
        Diverged: algebra increment above ``max_increment`` or vector part above
            ``bound``.
    """
    if sys.kind == "vector":
        raise TypeError("integrate_group needs a group or bundle system")
    return _run(sys, noise.times, noise.values, g0, bound, max_increment, reortho_every)


def integrate(sys, noise, z0, **kw):
    """Dispatch to :func:`integrate_heun` or :func:`integrate_group`."""
    if sys.kind == "vector":
        return integrate_heun(sys, noise, z0, **kw)
    return integrate_group(sys, noise, z0, **kw)


def integrate_ensemble(sys, noises: Sequence[NoisePath], z0, **kw):
    """Integrate ``sys`` along every path in ``noises`` (common grid required).

    Vectorized systems are stepped for all paths at once; otherwise paths are
    integrated one after another. The result stacks states along a leading
    path axis, in the order of ``noises``.
    """
    noises = list(noises)
    if not noises:
        raise ValueError("empty ensemble")
    times = noises[0].times
    for p in noises[1:]:
        if not np.array_equal(p.times, times):
            raise GridMismatch("ensemble paths must share a grid")
    if sys.vectorized:
        X = np.stack([p.values for p in noises])
        n = len(noises)
        if sys.kind == "bundle":
            z = tuple(np.broadcast_to(a, (n,) + np.shape(a)).copy() for a in z0)
        else:
            z = np.broadcast_to(z0, (n,) + np.shape(z0)).copy()
        if sys.kind == "vector":
            return _run(sys, times, X, z, kw.get("bound", DEFAULT_BOUND), math.inf, 0)
        return _run(
            sys,
            times,
            X,
            z,
            kw.get("bound", DEFAULT_BOUND),
            kw.get("max_increment", DEFAULT_MAX_INCREMENT),
            kw.get("reortho_every", DEFAULT_REORTHO_EVERY),
        )
    runs = [integrate(sys, p, z0, **kw) for p in noises]
    group = np.stack([r.group for r in runs]) if runs[0].group is not None else None
    vector = np.stack([r.vector for r in runs]) if runs[0].vector is not None else None
    return Trajectory(times, group, vector, {}, runs[0].labels)


def state_distance(a, b):
    """Pointwise distances between two trajectories' states.

    Frobenius norm on rotations, Euclidean norm on vectors, combined as the
    product metric ``sqrt(d_G^2 + d_V^2)`` for bundle states.
    """
    if a.kind != b.kind:
        raise GridMismatch(f"cannot compare {a.kind} and {b.kind} trajectories")
    d2 = 0.0
    if a.group is not None:
        d2 = d2 + np.sum((a.group - b.group) ** 2, axis=(-2, -1))
    if a.vector is not None:
        d2 = d2 + np.sum((a.vector - b.vector) ** 2, axis=-1)
    return np.sqrt(d2)


def _shared_indices(coarse, fine, rtol=1e-12):
    scale = max(abs(coarse[-1]), 1.0) * rtol
    idx = np.searchsorted(fine, coarse - scale)
    idx = np.clip(idx, 0, fine.size - 1)
    if np.any(np.abs(fine[idx] - coarse) > scale):
        raise GridMismatch("the coarser grid is not contained in the finer grid")
    return idx


def _subsample(tr, idx):
    return Trajectory(
        tr.times[idx],
        None if tr.group is None else tr.group[..., idx, :, :],
        None if tr.vector is None else tr.vector[..., idx, :],
        {},
        tr.labels,
    )


def strong_error(a, b):
    """Sup over shared grid times of the state distance between ``a`` and ``b``.

    One grid must contain the other (nested refinements of one noise path).

    Raises:
        GridMismatch: different endpoints, non-nested grids or state kinds.
    """
    ta, tb = np.asarray(a.times), np.asarray(b.times)
    tol = 1e-12 * max(abs(ta[-1]), 1.0)
    if abs(ta[0] - tb[0]) > tol or abs(ta[-1] - tb[-1]) > tol:
        raise GridMismatch("trajectories do not share endpoints")
    if ta.size > tb.size:
        a, b, ta, tb = b, a, tb, ta
    b = _subsample(b, _shared_indices(ta, tb))
    return float(np.max(state_distance(a, b)))


def convergence_order(errs):
    """Least-squares slope of ``log(error)`` against ``log(dt)``.

    Args:
        errs: sequence of ``(dt, error)`` pairs, at least three.

    Raises:
        InsufficientData: fewer than three points or non-positive values.
    """
    errs = np.asarray(errs, dtype=float)
    if errs.ndim != 2 or errs.shape[0] < 3:
        raise InsufficientData("need at least three (dt, error) pairs")
    if np.any(errs <= 0) or not np.all(np.isfinite(errs)):
        raise InsufficientData("step sizes and errors must be positive and finite")
    slope, _ = np.polyfit(np.log(errs[:, 0]), np.log(errs[:, 1]), 1)
    return float(slope)


def project_trajectory(tr, project, labels=None):
    """Apply a state map (e.g. a quotient projection) at every grid time."""
    return Trajectory.from_states(
        tr.times, [project(tr.state(k)) for k in range(len(tr))], "vector", labels
    )
