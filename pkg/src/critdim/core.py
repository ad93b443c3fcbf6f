"""Parameter blocks, information matrices and efficient-score algebra.

The joint parameter is split as ``upsilon = (theta, eta)`` with the target
``theta`` occupying the first ``p_target`` coordinates.  All information
matrices carry the curvature scale ``n``; for the built-in models they are
``n * I`` and the cross block vanishes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotPositiveDefinite, SingularNuisanceInformation

SYMMETRY_TOL = 1e-12
SINGULAR_RTOL = 1e-12
NEGATIVE_EIG_RTOL = 1e-10


@dataclass(frozen=True)
class BlockSplit:
    """Target/nuisance split of a ``p_total``-dimensional parameter.

    ``p_nuisance`` may be zero (a purely parametric problem); the built-in
    bump models always have a nonempty nuisance block.
    """

    p_total: int
    p_target: int

    def __post_init__(self):
        if int(self.p_total) != self.p_total or int(self.p_target) != self.p_target:
            raise ValueError("block dimensions must be integers")
        if self.p_total < 1:
            raise ValueError(f"p_total must be >= 1, got {self.p_total}")
        if not 1 <= self.p_target <= self.p_total:
            raise ValueError(
                f"p_target must lie in [1, p_total={self.p_total}], got {self.p_target}"
            )

    @property
    def p_nuisance(self) -> int:
        return self.p_total - self.p_target

    def theta(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float)[: self.p_target]

    def eta(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float)[self.p_target :]

    def join(self, theta, eta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        if theta.shape != (self.p_target,) or eta.shape != (self.p_nuisance,):
            raise ValueError(
                f"expected blocks of length ({self.p_target}, {self.p_nuisance}), "
                f"got ({theta.size}, {eta.size})"
            )
        return np.concatenate([theta, eta])


@dataclass(frozen=True)
class JointParameter:
    """A point ``upsilon = (theta, eta)`` of the joint parameter space."""

    values: np.ndarray
    split: BlockSplit

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size != self.split.p_total:
            raise ValueError(f"expected {self.split.p_total} coordinates, got {v.size}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, split: BlockSplit) -> "JointParameter":
        return cls(np.zeros(split.p_total), split)

    @property
    def theta(self) -> np.ndarray:
        return self.values[: self.split.p_target]

    @property
    def eta(self) -> np.ndarray:
        return self.values[self.split.p_target :]

    def __array__(self, dtype=None, copy=None):
        if copy:
            return np.array(self.values, dtype=dtype)
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return self.values.size


def _check_symmetric(name: str, m: np.ndarray) -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if m.size and np.max(np.abs(m - m.T)) > SYMMETRY_TOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return m


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition."""
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def _inverse_sqrt(m: np.ndarray, name: str, exc=NotPositiveDefinite) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    if w.size == 0:
        return np.zeros_like(m)
    if w[0] <= SINGULAR_RTOL * max(w[-1], 0.0) or w[-1] <= 0.0:
        raise exc(f"{name} is singular or not positive definite (min eigenvalue {w[0]:.3e})")
    return (v / np.sqrt(w)) @ v.T


@dataclass(frozen=True)
class InformationBlocks:
    """Blocks of the full information matrix ``Dfull2 = [[D2, A], [A^T, H2]]``.

    ``V2`` is the score covariance; it defaults to ``Dfull2`` (correct
    specification of the curvature, as in every built-in model).
    """

    D2: np.ndarray
    A: np.ndarray
    H2: np.ndarray
    Dfull2: np.ndarray
    V2: np.ndarray | None = field(default=None)

    def __post_init__(self):
        D2 = _check_symmetric("D2", self.D2)
        H2 = np.asarray(self.H2, dtype=float)
        H2 = _check_symmetric("H2", H2) if H2.size else np.zeros((0, 0))
        A = np.asarray(self.A, dtype=float).reshape(D2.shape[0], H2.shape[0])
        Dfull2 = _check_symmetric("Dfull2", self.Dfull2)
        if Dfull2.shape[0] != D2.shape[0] + H2.shape[0]:
            raise ValueError("Dfull2 dimension does not match D2 and H2")
        for name, m in (("D2", D2), ("H2", H2), ("Dfull2", Dfull2)):
            if m.size and np.linalg.eigvalsh(m)[0] <= 0.0:
                raise NotPositiveDefinite(f"{name} must be positive definite")
        V2 = Dfull2 if self.V2 is None else _check_symmetric("V2", self.V2)
        for name, m in (("D2", D2), ("A", A), ("H2", H2), ("Dfull2", Dfull2), ("V2", V2)):
            m = np.array(m)
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @classmethod
    def scaled_identity(cls, n: float, split: BlockSplit) -> "InformationBlocks":
        """``Dfull2 = n I`` with a vanishing cross block."""
        p, q = split.p_target, split.p_nuisance
        return cls(
            D2=n * np.eye(p),
            A=np.zeros((p, q)),
            H2=n * np.eye(q),
            Dfull2=n * np.eye(p + q),
        )

    @classmethod
    def from_full(cls, Dfull2, split: BlockSplit) -> "InformationBlocks":
        Dfull2 = _check_symmetric("Dfull2", Dfull2)
        p = split.p_target
        return cls(D2=Dfull2[:p, :p], A=Dfull2[:p, p:], H2=Dfull2[p:, p:], Dfull2=Dfull2)

    @property
    def p_target(self) -> int:
        return self.D2.shape[0]

    @property
    def p_nuisance(self) -> int:
        return self.H2.shape[0]

    def h2_condition_number(self) -> float:
        if not self.H2.size:
            return 1.0
        return float(np.linalg.cond(self.H2))


def _h2_solve(blocks: InformationBlocks, rhs: np.ndarray) -> np.ndarray:
    """``H2^{-1} rhs`` with a singularity check on H2."""
    if not blocks.H2.size:
        return np.zeros((0,) + rhs.shape[1:])
    w, v = np.linalg.eigh(blocks.H2)
    if w[0] <= SINGULAR_RTOL * w[-1]:
        raise SingularNuisanceInformation(
            f"H2 is singular (condition number {blocks.h2_condition_number():.3e})"
        )
    return v @ ((v.T @ rhs) / (w if rhs.ndim == 1 else w[:, None]))


def dbreve_squared(blocks: InformationBlocks) -> np.ndarray:
    """Semiparametric information ``D2 - A H2^{-1} A^T`` (Schur complement)."""
    if blocks.p_nuisance == 0:
        out = np.array(blocks.D2)
    else:
        out = blocks.D2 - blocks.A @ _h2_solve(blocks, blocks.A.T)
    out = 0.5 * (out + out.T)
    w = np.linalg.eigvalsh(out)
    scale = float(np.max(np.abs(np.linalg.eigvalsh(blocks.D2))))
    if w[0] < -NEGATIVE_EIG_RTOL * scale:
        raise NotPositiveDefinite(f"semiparametric information has eigenvalue {w[0]:.3e}")
    if w[0] <= SINGULAR_RTOL * w[-1]:
        raise NotPositiveDefinite("semiparametric information is singular")
    return out


@dataclass(frozen=True)
class ScoreMap:
    """Precomputed linear maps for repeated efficient-score evaluations.

    ``score = theta_map @ grad_theta + eta_map @ grad_eta`` and ``dbreve`` is
    the symmetric square root of the semiparametric information.
    """

    dbreve: np.ndarray
    theta_map: np.ndarray
    eta_map: np.ndarray

    @classmethod
    def from_blocks(cls, blocks: InformationBlocks) -> "ScoreMap":
        db2 = dbreve_squared(blocks)
        inv_root = _inverse_sqrt(db2, "Dbreve^2")
        if blocks.p_nuisance:
            eta_map = -inv_root @ blocks.A @ _h2_solve(blocks, np.eye(blocks.p_nuisance))
        else:
            eta_map = np.zeros((blocks.p_target, 0))
        return cls(psd_sqrt(db2), inv_root, eta_map)

    def score(self, grad_theta, grad_eta) -> np.ndarray:
        g_t = np.atleast_1d(np.asarray(grad_theta, dtype=float))
        g_e = np.asarray(grad_eta, dtype=float).reshape(-1)
        if g_t.shape != (self.theta_map.shape[1],) or g_e.shape != (self.eta_map.shape[1],):
            raise ValueError(
                "gradient blocks must have lengths "
                f"({self.theta_map.shape[1]}, {self.eta_map.shape[1]})"
            )
        out = self.theta_map @ g_t
        if g_e.size:
            out = out + self.eta_map @ g_e
        return out


def efficient_score(blocks: InformationBlocks, grad_theta, grad_eta) -> np.ndarray:
    """Standardised efficient score ``Dbreve^{-1} (grad_theta - A H2^{-1} grad_eta)``."""
    return ScoreMap.from_blocks(blocks).score(grad_theta, grad_eta)


def identifiability_nu(blocks: InformationBlocks) -> float:
    """Spectral norm of ``H^{-1} A^T D^{-1}``; zero when the cross block vanishes."""
    if blocks.p_nuisance == 0 or not np.any(blocks.A):
        return 0.0
    h_inv = _inverse_sqrt(blocks.H2, "H2", exc=SingularNuisanceInformation)
    d_inv = _inverse_sqrt(blocks.D2, "D2")
    return float(np.linalg.norm(h_inv @ blocks.A.T @ d_inv, ord=2))


@dataclass(frozen=True)
class LocalSet:
    """Elliptic vicinity ``{v : ||Dfull (v - center)|| <= radius}``."""

    center: JointParameter
    radius: float
    metric: np.ndarray

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        object.__setattr__(self, "metric", _check_symmetric("metric", self.metric))


def local_ball_contains(local_set: LocalSet, point) -> bool:
    diff = np.asarray(point, dtype=float) - np.asarray(local_set.center, dtype=float)
    if diff.shape != (local_set.metric.shape[0],):
        raise ValueError("point dimension does not match the local set")
    dist = float(np.linalg.norm(psd_sqrt(local_set.metric) @ diff))
    return dist <= local_set.radius + 1e-12
