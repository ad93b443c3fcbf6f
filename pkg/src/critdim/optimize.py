"""Full and theta-constrained maximisation of the contrast, and the profile excess.

Both bump functionals depend on ``v`` only through the target-block norm (or
first coordinate), the nuisance norm and ``|v|``; the linear term ``X.v`` then
forces every maximiser into the plane spanned by ``(X_theta, 0)`` and
``(0, X_eta)``.  The refinement therefore runs in that two-dimensional
subspace by default (``subspace=False`` runs the same ascent in all
coordinates).  The ascent is a line-searched Newton iteration: the step is
the Newton direction when the negated Hessian is positive definite and a
curvature-clipped eigen-direction otherwise, followed by Armijo backtracking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import JointParameter
from .errors import NoLocalMaximizer, NonFinite
from .models import (
    ModelKind,
    ModelSpec,
    gradient,
    hessian_terms,
    kernel_bump_f,
    lattice_set_distance,
    nearest_lattice_point,
    value,
)

ARMIJO = 1e-4
SHRINK = 0.5
MAX_ITER = 500
CONVERGED_GTOL = 1e-6   # times n
STOP_GTOL = 1e-10       # times n; iterate past CONVERGED_GTOL while Newton still pays
TIE_TOL = 1e-12         # times n
LATTICE_SCALE_GRID = np.linspace(0.5, 1.5, 65)
LATTICE_SCALED_REFINED = 4


def lambda_max(a: float) -> float:
    """Local maximiser of ``lam - lam^2/2 + a lam^3/3`` for ``0 <= a < 1/4``."""
    if a < 0:
        raise ValueError("a must be nonnegative")
    if a >= 0.25:
        raise NoLocalMaximizer(f"no strict local maximum for a = {a} >= 1/4")
    # (1 - sqrt(1-4a)) / (2a) rewritten without cancellation
    return 2.0 / (1.0 + math.sqrt(1.0 - 4.0 * a))


def tau(a: float) -> float:
    """``(lambda_max(a) - 1) / a``, continuous at ``a = 0``."""
    if a < 0:
        raise ValueError("a must be nonnegative")
    if a >= 0.25:
        raise NoLocalMaximizer(f"no strict local maximum for a = {a} >= 1/4")
    return 4.0 / (1.0 + math.sqrt(1.0 - 4.0 * a)) ** 2


@dataclass
class AscentResult:
    point: np.ndarray
    value: float
    grad_norm: float
    converged: bool
    iterations: int


def _checked(x: float) -> float:
    if not math.isfinite(x):
        raise NonFinite("contrast evaluated to a non-finite value")
    return x


def ascend(spec: ModelSpec, X, base, basis, z0, max_iter: int = MAX_ITER) -> AscentResult:
    """Maximise ``z -> L(base + basis @ z)`` from ``z0``."""
    X = np.asarray(X, dtype=float)
    base = np.asarray(base, dtype=float)
    B = np.asarray(basis, dtype=float)
    z = np.array(z0, dtype=float)
    n = spec.n
    pt = spec.split.p_target
    v = base + B @ z
    val = _checked(value(spec, X, v))
    it = 0
    gn = math.inf
    for it in range(1, max_iter + 1):
        g = B.T @ gradient(spec, X, v)
        gn = float(np.linalg.norm(g))
        if not math.isfinite(gn):
            raise NonFinite("gradient is not finite")
        if gn <= STOP_GTOL * n:
            break
        M = -hessian_terms(spec, X, v).project(B, pt)
        try:
            np.linalg.cholesky(M)
            d = np.linalg.solve(M, g)
        except np.linalg.LinAlgError:
            w, V = np.linalg.eigh(0.5 * (M + M.T))
            d = V @ ((V.T @ g) / np.maximum(np.abs(w), 1e-2 * n))
        slope = float(g @ d)
        t = 1.0
        accepted = False
        while t > 1e-30:
            z_new = z + t * d
            v_new = base + B @ z_new
            val_new = _checked(value(spec, X, v_new))
            if val_new >= val + ARMIJO * t * slope:
                accepted = True
                break
            t *= SHRINK
        if not accepted:
            break
        if np.array_equal(z_new, z):
            break
        z, v, val = z_new, v_new, val_new
    else:
        gn = float(np.linalg.norm(B.T @ gradient(spec, X, v)))
    return AscentResult(v, val, gn, gn <= CONVERGED_GTOL * n, it)


def _unit(x: np.ndarray) -> np.ndarray | None:
    nrm = float(np.linalg.norm(x))
    return x / nrm if nrm > 0.0 else None


def reduced_basis(spec: ModelSpec, X) -> np.ndarray:
    """Orthonormal basis of the plane holding every maximiser."""
    X = np.asarray(X, dtype=float)
    pt, p = spec.split.p_target, spec.p
    cols = []
    if spec.kind is ModelKind.LATTICE_BUMP:
        e = np.zeros(p)
        e[0] = 1.0
        cols.append(e)
    else:
        u = _unit(X[:pt])
        if u is not None:
            cols.append(np.concatenate([u, np.zeros(p - pt)]))
    u = _unit(X[pt:])
    if u is not None:
        cols.append(np.concatenate([np.zeros(pt), u]))
    return np.stack(cols, axis=1) if cols else np.zeros((p, 0))


def _better(a, b, n) -> bool:
    """Does candidate ``a`` beat ``b``?  Ties go to smaller norm, then lexicographic order."""
    if a[1] > b[1] + TIE_TOL * n:
        return True
    if b[1] > a[1] + TIE_TOL * n:
        return False
    na, nb = float(np.linalg.norm(a[0])), float(np.linalg.norm(b[0]))
    if na != nb:
        return na < nb
    return tuple(a[0]) < tuple(b[0])


@dataclass
class FullMaximum:
    point: JointParameter
    value: float
    method: str
    converged: bool
    grad_norm: float
    in_S_event: bool
    candidate_values: dict


def maximize_full(spec: ModelSpec, X, subspace: bool = True) -> FullMaximum:
    X = np.asarray(X, dtype=float)
    if X.shape != (spec.p,):
        raise ValueError(f"expected X of length {spec.p}")
    n = spec.n
    if spec.kind is ModelKind.GAUSSIAN:
        v = np.array(X)
        val = _checked(value(spec, X, v))
        return FullMaximum(JointParameter(v, spec.split), val, "closed-form", True, 0.0, False,
                           {"X": val})

    B = reduced_basis(spec, X) if subspace else np.eye(spec.p)
    zero = np.zeros(spec.p)
    starts: list[tuple[str, np.ndarray]] = [("X", X)]
    candidate_values = {}
    lam = None
    if spec.kind is ModelKind.KERNEL_BUMP:
        try:
            lam = lambda_max(float(np.linalg.norm(X)))
            starts.append(("lambda_max*X", lam * X))
        except NoLocalMaximizer:
            pass
    else:
        xs, _ = nearest_lattice_point(X, spec)
        h = spec.spacing
        base_pts = [("X", X), ("X_S", np.array(xs.values))]
        for sign, label in ((1.0, "X_S+h"), (-1.0, "X_S-h")):
            c = np.array(xs.values)
            c[0] += sign * h
            base_pts.append((label, c))
        starts = list(base_pts)
        scaled = []
        for label, c in base_pts:
            for lam_s in LATTICE_SCALE_GRID:
                if lam_s == 1.0:
                    continue
                cand = lam_s * c
                scaled.append((_checked(value(spec, X, cand)), f"{lam_s:.5g}*{label}", cand))
        scaled.sort(key=lambda s: -s[0])
        starts.extend((label, cand) for _, label, cand in scaled[:LATTICE_SCALED_REFINED])

    best = None
    best_label = None
    for label, start in starts:
        candidate_values[label] = _checked(value(spec, X, start))
        res = ascend(spec, X, zero, B, B.T @ start)
        entry = (res.point, res.value, res)
        if best is None or _better(entry, best, n):
            best, best_label = entry, label
    point, val, res = best
    if spec.kind is ModelKind.KERNEL_BUMP:
        # the closed-form point must sit on the f == 1 plateau and attain the maximum
        in_s = (
            lam is not None
            and kernel_bump_f(spec, lam * X) == 1.0
            and value(spec, X, lam * X) >= val - 1e-9 * max(1.0, abs(val))
        )
    else:
        in_s = lattice_set_distance(spec, point) < spec.vicinity_delta
    method = ("subspace" if subspace else "full") + "-newton-ascent:" + best_label
    return FullMaximum(JointParameter(point, spec.split), val, method, res.converged,
                       res.grad_norm, in_s, candidate_values)


def maximize_constrained(spec: ModelSpec, X, theta_fixed, subspace: bool = True):
    """Maximise over ``eta`` with ``theta`` held at ``theta_fixed``.

    Returns ``(point, value, converged, grad_norm)``.
    """
    X = np.asarray(X, dtype=float)
    split = spec.split
    theta = np.atleast_1d(np.asarray(theta_fixed, dtype=float))
    if theta.shape != (split.p_target,):
        raise ValueError(f"theta_fixed must have length {split.p_target}")
    n = spec.n
    x_eta = X[split.p_target:]
    closed = spec.kind is ModelKind.GAUSSIAN or (
        spec.kind is ModelKind.KERNEL_BUMP and not np.any(theta)
    )
    if closed:
        v = split.join(theta, x_eta)
        val = n * float(X[: split.p_target] @ theta) - 0.5 * n * float(theta @ theta) \
            + 0.5 * n * float(x_eta @ x_eta)
        return JointParameter(v, split), _checked(val), True, 0.0
    base = split.join(theta, np.zeros(split.p_nuisance))
    if split.p_nuisance == 0:
        return JointParameter(base, split), _checked(value(spec, X, base)), True, 0.0
    if subspace:
        u = _unit(x_eta)
        if u is None:
            u = np.zeros(split.p_nuisance)
            u[0] = 1.0
        B = np.concatenate([np.zeros(split.p_target), u])[:, None]
    else:
        B = np.vstack([np.zeros((split.p_target, split.p_nuisance)), np.eye(split.p_nuisance)])
    res = ascend(spec, X, base, B, B.T @ split.join(np.zeros(split.p_target), x_eta))
    return JointParameter(res.point, split), res.value, res.converged, res.grad_norm


@dataclass
class ProfileResult:
    upsilon_full: JointParameter
    upsilon_constrained: JointParameter
    theta_hat: np.ndarray
    value_full: float
    value_constrained: float
    excess: float
    method: str
    converged: bool
    in_S_event: bool
    grad_norm_at_solution: float


def profile_result(spec: ModelSpec, X, subspace: bool = True) -> ProfileResult:
    """Full and ``theta* = 0`` constrained maxima with their difference."""
    full = maximize_full(spec, X, subspace=subspace)
    cons, val_c, conv_c, _ = maximize_constrained(
        spec, X, np.zeros(spec.split.p_target), subspace=subspace
    )
    return ProfileResult(
        upsilon_full=full.point,
        upsilon_constrained=cons,
        theta_hat=np.array(full.point.theta),
        value_full=full.value,
        value_constrained=val_c,
        excess=full.value - val_c,
        method=full.method,
        converged=full.converged and conv_c,
        in_S_event=full.in_S_event,
        grad_norm_at_solution=full.grad_norm,
    )
