"""Contrast functionals ``L(v) = n X.v - n|v|^2/2 + c n f(v) |v|^3``.

Three kinds are implemented:

* ``gaussian``: ``f == 0``, the clean quadratic.
* ``lattice-bump``: ``c = 1``; ``f`` equals one on a set of hyperplane slices
  ``{v_1 = k h} ∩ ball`` and vanishes farther than ``delta = 1/n`` from it.
* ``kernel-bump``: ``c = 1/3``; ``f`` rises from zero to one as the target
  block norm crosses ``[1/L, 2/L] * sqrt(p/n)`` and is cut off smoothly
  outside the ball of radius ``2 sqrt(p/n)``.

Every transition uses the quintic smooth step, so the functionals are C^2
(C^1 on the rim of the lattice discs) and gradients/Hessians are analytic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import BlockSplit, InformationBlocks, JointParameter
from .rng import standard_normals


class ModelKind(str, Enum):
    GAUSSIAN = "gaussian"
    LATTICE_BUMP = "lattice-bump"
    KERNEL_BUMP = "kernel-bump"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"latticebump": "lattice-bump", "kernelbump": "kernel-bump"}
        key = aliases.get(key, key)
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValueError(f"unknown model kind {value!r}")


CUBIC_COEF = {
    ModelKind.GAUSSIAN: 0.0,
    ModelKind.LATTICE_BUMP: 1.0,
    ModelKind.KERNEL_BUMP: 1.0 / 3.0,
}

DEFAULT_L = 8.0
DEFAULT_CUTOFF_EPS = 0.25


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    n: int
    split: BlockSplit
    L: float = DEFAULT_L
    vicinity_delta: float | None = None
    outer_cutoff_eps: float = DEFAULT_CUTOFF_EPS
    _blocks: InformationBlocks | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if self.vicinity_delta is None:
            object.__setattr__(self, "vicinity_delta", 1.0 / self.n)
        if self.vicinity_delta <= 0:
            raise ValueError("vicinity_delta must be positive")
        if self.L <= 0 or self.outer_cutoff_eps <= 0:
            raise ValueError("L and outer_cutoff_eps must be positive")
        if self.kind is ModelKind.LATTICE_BUMP and self.split.p_target != 1:
            raise ValueError("lattice-bump estimates the first coordinate only (p_target = 1)")
        if self.kind is ModelKind.KERNEL_BUMP and (
            self.split.p_total % 2 or 2 * self.split.p_target != self.split.p_total
        ):
            raise ValueError("kernel-bump needs an even p_total with p_target = p_total / 2")

    @classmethod
    def gaussian(cls, n, p_total, p_target=None) -> "ModelSpec":
        p_target = max(1, p_total // 2) if p_target is None else p_target
        return cls(ModelKind.GAUSSIAN, n, BlockSplit(p_total, p_target))

    @classmethod
    def lattice_bump(cls, n, p_total, vicinity_delta=None) -> "ModelSpec":
        return cls(ModelKind.LATTICE_BUMP, n, BlockSplit(p_total, 1), vicinity_delta=vicinity_delta)

    @classmethod
    def kernel_bump(cls, n, p_total, L=DEFAULT_L, outer_cutoff_eps=DEFAULT_CUTOFF_EPS) -> "ModelSpec":
        return cls(
            ModelKind.KERNEL_BUMP, n, BlockSplit(p_total, p_total // 2),
            L=L, outer_cutoff_eps=outer_cutoff_eps,
        )

    @property
    def p(self) -> int:
        return self.split.p_total

    @property
    def cubic_coef(self) -> float:
        return CUBIC_COEF[self.kind]

    @property
    def unit(self) -> float:
        """``sqrt(p/n)``, the typical size of ``|X|``."""
        return math.sqrt(self.p / self.n)

    @property
    def spacing(self) -> float:
        return lattice_spacing(self.n, self.p)

    @property
    def s_ball_radius(self) -> float:
        """Radius of the ball intersected with the lattice slices."""
        return math.sqrt(2.0 * self.p / self.n) + self.spacing

    @property
    def kernel_width(self) -> float:
        return self.unit / self.L

    def blocks(self) -> InformationBlocks:
        if self._blocks is None:
            object.__setattr__(self, "_blocks", InformationBlocks.scaled_identity(self.n, self.split))
        return self._blocks

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "n": self.n,
            "p_total": self.split.p_total,
            "p_target": self.split.p_target,
            "L": self.L,
            "vicinity_delta": self.vicinity_delta,
            "outer_cutoff_eps": self.outer_cutoff_eps,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        known = {"kind", "n", "p_total", "p_target", "L", "vicinity_delta", "outer_cutoff_eps"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown ModelSpec keys: {sorted(extra)}")
        return cls(
            kind=d["kind"],
            n=d["n"],
            split=BlockSplit(d["p_total"], d["p_target"]),
            L=d.get("L", DEFAULT_L),
            vicinity_delta=d.get("vicinity_delta"),
            outer_cutoff_eps=d.get("outer_cutoff_eps", DEFAULT_CUTOFF_EPS),
        )

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Observation:
    X: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float).reshape(-1)
        X.setflags(write=False)
        object.__setattr__(self, "X", X)

    def __array__(self, dtype=None, copy=None):
        if copy:
            return np.array(self.X, dtype=dtype)
        return np.asarray(self.X, dtype=dtype)

    def __len__(self):
        return self.X.size


def sample_observation(spec: ModelSpec, seed: int) -> Observation:
    """Draw ``X ~ N(0, I/n)`` of length ``p_total``."""
    return Observation(standard_normals(seed, spec.p) / math.sqrt(spec.n))


# -- smooth step --------------------------------------------------------------

def smooth_step(t: float) -> float:
    """Quintic ``6t^5 - 15t^4 + 10t^3`` clamped to [0, 1]."""
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    # clamp: rounding can push the polynomial a few ulps outside [0, 1]
    return min(1.0, max(0.0, t * t * t * (t * (6.0 * t - 15.0) + 10.0)))


def smooth_step_derivs(t: float) -> tuple[float, float, float]:
    """Value, first and second derivative of :func:`smooth_step`."""
    if t <= 0.0:
        return 0.0, 0.0, 0.0
    if t >= 1.0:
        return 1.0, 0.0, 0.0
    u = 1.0 - t
    return (
        min(1.0, max(0.0, t * t * t * (t * (6.0 * t - 15.0) + 10.0))),
        30.0 * t * t * u * u,
        60.0 * t * u * (1.0 - 2.0 * t),
    )


# -- symmetric matrices as identity blocks plus outer products -----------------

class SymTerms:
    """``a I + b P_theta + c P_eta + sum_k w_k (u_k v_k^T + v_k u_k^T)/2``.

    Hessians of the bump functionals are all of this form; keeping them
    factored lets the optimizer project onto a small subspace in O(p k).
    """

    __slots__ = ("ident", "theta", "eta", "outers")

    def __init__(self):
        self.ident = 0.0
        self.theta = 0.0
        self.eta = 0.0
        self.outers = []

    def outer(self, w, u, v=None):
        if w != 0.0:
            self.outers.append((w, u, u if v is None else v))
        return self

    def add_scaled(self, other: "SymTerms", c: float):
        if c == 0.0:
            return self
        self.ident += c * other.ident
        self.theta += c * other.theta
        self.eta += c * other.eta
        self.outers.extend((c * w, u, v) for w, u, v in other.outers)
        return self

    def dense(self, p_total: int, p_target: int) -> np.ndarray:
        return self.project(np.eye(p_total), p_target)

    def project(self, B: np.ndarray, p_target: int) -> np.ndarray:
        """``B^T M B`` for a ``p x k`` basis ``B``."""
        Bt, Be = B[:p_target], B[p_target:]
        out = self.ident * (B.T @ B)
        if self.theta:
            out = out + self.theta * (Bt.T @ Bt)
        if self.eta:
            out = out + self.eta * (Be.T @ Be)
        for w, u, v in self.outers:
            bu, bv = B.T @ u, B.T @ v
            out = out + 0.5 * w * (np.outer(bu, bv) + np.outer(bv, bu))
        return out


# -- bump functions -----------------------------------------------------------

def lattice_spacing(n: int, p: int) -> float:
    """``sqrt(beta_n / n) / 2`` with ``beta_n = sqrt(p^3 / n)``."""
    if n < 1 or p < 1:
        raise ValueError("n and p must be >= 1")
    return 0.5 * (p / n) ** 0.75


def nearest_lattice_point(X, spec: ModelSpec) -> tuple[JointParameter, float]:
    """Move ``X_1`` away from zero onto the nearest lattice value.

    Returns the moved point and the displacement ``|X_1 - X_S,1|``.
    """
    X = np.array(X, dtype=float).reshape(-1)
    x1 = X[0]
    X[0] = round_away_to_lattice(x1, spec.spacing)
    return JointParameter(X, spec.split), abs(x1 - X[0])


def round_away_to_lattice(x: float, h: float) -> float:
    """Nearest multiple of ``h`` with absolute value at least ``|x|``.

    Values within a relative 1e-9 of a lattice point snap to it.
    """
    steps = math.ceil(abs(x) / h - 1e-9)
    return math.copysign(steps * h, x) if steps else 0.0


def _lattice_distance(spec: ModelSpec, v: np.ndarray):
    """Distance to the nearest slice disc, plus the pieces needed to differentiate it.

    Slice ``k`` is the disc ``{v_1 = k h, |eta| <= rho_k}``.  Returns
    ``(d, a, b, q)`` with ``a = v_1 - k h``, ``q = |eta|`` and
    ``b = q - rho_k`` (``b <= 0`` means the point projects into the disc).
    """
    h, R = spec.spacing, spec.s_ball_radius
    x1 = float(v[0])
    q = float(np.linalg.norm(v[1:]))
    k0 = round(x1 / h)
    best = (math.inf, 0.0, 0.0, q)
    for k in (k0 - 1, k0, k0 + 1):
        c = k * h
        if abs(c) > R:
            continue
        a = x1 - c
        b = q - math.sqrt(R * R - c * c)
        d = abs(a) if b <= 0.0 else math.hypot(a, b)
        if d < best[0]:
            best = (d, a, b, q)
    return best


def _lattice_parts(spec: ModelSpec, v: np.ndarray, order: int):
    p = v.size
    delta = spec.vicinity_delta
    d, a, b, q = _lattice_distance(spec, v)
    if d >= delta:
        return 0.0, (np.zeros(p) if order >= 1 else None), (SymTerms() if order >= 2 else None)
    s, s1, s2 = smooth_step_derivs(1.0 - d / delta)
    if order == 0:
        return s, None, None
    e1 = np.zeros(p)
    e1[0] = 1.0
    if b <= 0.0:
        grad_d = math.copysign(1.0, a) * e1 if a != 0.0 else np.zeros(p)
        hess_d = SymTerms()
    else:
        e_eta = np.zeros(p)
        e_eta[1:] = v[1:] / q
        grad_d = (a * e1 + b * e_eta) / d
        hess_d = SymTerms()
        hess_d.eta = b / (q * d)
        hess_d.outer(1.0 / d, e1).outer(1.0 / d - b / (q * d), e_eta).outer(-1.0 / d, grad_d)
    grad = (-s1 / delta) * grad_d
    if order == 1:
        return s, grad, None
    hess = SymTerms().outer(s2 / delta**2, grad_d)
    hess.add_scaled(hess_d, -s1 / delta)
    return s, grad, hess


def _kernel_parts(spec: ModelSpec, v: np.ndarray, order: int):
    p, pt = v.size, spec.split.p_target
    w, unit, eps = spec.kernel_width, spec.unit, spec.outer_cutoff_eps
    t = float(np.linalg.norm(v[:pt]))
    r = float(np.linalg.norm(v))
    S, S1, S2 = smooth_step_derivs(t / w - 1.0)
    C, C1, C2 = smooth_step_derivs((r / unit - 2.0) / eps)
    K, K1, K2 = 1.0 - C, -C1 / (unit * eps), -C2 / (unit * eps) ** 2
    f = S * K
    if order == 0:
        return f, None, None
    if (S == 0.0 and S1 == 0.0 and S2 == 0.0) or (K == 0.0 and K1 == 0.0 and K2 == 0.0):
        return f, np.zeros(p), (SymTerms() if order >= 2 else None)
    e_t = np.zeros(p)
    if t > 0.0:
        e_t[:pt] = v[:pt] / t
    e_r = v / r if r > 0.0 else np.zeros(p)
    gS = (S1 / w) * e_t
    gK = K1 * e_r
    grad = K * gS + S * gK
    if order == 1:
        return f, grad, None
    hS = SymTerms().outer(S2 / w**2, e_t)
    if t > 0.0 and S1:
        hS.theta = S1 / (w * t)
        hS.outer(-S1 / (w * t), e_t)
    hK = SymTerms().outer(K2, e_r)
    if r > 0.0 and K1:
        hK.ident = K1 / r
        hK.outer(-K1 / r, e_r)
    hess = SymTerms().add_scaled(hS, K).add_scaled(hK, S)
    hess.outer(2.0, gS, gK)
    return f, grad, hess


def _bump_parts(spec: ModelSpec, v: np.ndarray, order: int):
    if spec.kind is ModelKind.KERNEL_BUMP:
        return _kernel_parts(spec, v, order)
    if spec.kind is ModelKind.LATTICE_BUMP:
        return _lattice_parts(spec, v, order)
    return 0.0, (np.zeros(v.size) if order >= 1 else None), (SymTerms() if order >= 2 else None)


def kernel_bump_f(spec: ModelSpec, v) -> float:
    if spec.kind is not ModelKind.KERNEL_BUMP:
        raise ValueError("kernel_bump_f needs a kernel-bump spec")
    return _kernel_parts(spec, np.asarray(v, dtype=float), 0)[0]


def lattice_bump_f(spec: ModelSpec, v) -> float:
    if spec.kind is not ModelKind.LATTICE_BUMP:
        raise ValueError("lattice_bump_f needs a lattice-bump spec")
    return _lattice_parts(spec, np.asarray(v, dtype=float), 0)[0]


def lattice_set_distance(spec: ModelSpec, v) -> float:
    return _lattice_distance(spec, np.asarray(v, dtype=float))[0]


def bump_f(spec: ModelSpec, v) -> float:
    return _bump_parts(spec, np.asarray(v, dtype=float), 0)[0]


# -- the contrast -------------------------------------------------------------

def _prep(spec, X, v):
    X = np.asarray(X, dtype=float)
    v = np.asarray(v, dtype=float)
    if X.shape != (spec.p,) or v.shape != (spec.p,):
        raise ValueError(f"expected vectors of length {spec.p}")
    return X, v


def value(spec: ModelSpec, X, v) -> float:
    X, v = _prep(spec, X, v)
    n = spec.n
    r2 = float(v @ v)
    out = n * float(X @ v) - 0.5 * n * r2
    if spec.cubic_coef:
        f = _bump_parts(spec, v, 0)[0]
        if f:
            out += spec.cubic_coef * n * f * r2 * math.sqrt(r2)
    return out


def gradient(spec: ModelSpec, X, v) -> np.ndarray:
    X, v = _prep(spec, X, v)
    n = spec.n
    g = n * (X - v)
    if spec.cubic_coef:
        f, gf, _ = _bump_parts(spec, v, 1)
        r = float(np.linalg.norm(v))
        g = g + spec.cubic_coef * n * (r**3 * gf + 3.0 * f * r * v)
    return g


def hessian_terms(spec: ModelSpec, X, v) -> SymTerms:
    X, v = _prep(spec, X, v)
    n = spec.n
    out = SymTerms()
    out.ident = -float(n)
    if not spec.cubic_coef:
        return out
    f, gf, hf = _bump_parts(spec, v, 2)
    r = float(np.linalg.norm(v))
    cn = spec.cubic_coef * n
    out.add_scaled(hf, cn * r**3)
    out.outer(2.0 * cn * 3.0 * r, gf, v)
    if r > 0.0 and f:
        out.ident += cn * 3.0 * f * r
        out.outer(cn * 3.0 * f / r, v)
    return out


def hessian(spec: ModelSpec, X, v, basis=None) -> np.ndarray:
    """Hessian of the contrast, optionally projected as ``B^T H B``."""
    terms = hessian_terms(spec, X, v)
    if basis is None:
        return terms.dense(spec.p, spec.split.p_target)
    return terms.project(np.asarray(basis, dtype=float), spec.split.p_target)
