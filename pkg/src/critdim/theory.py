"""Non-asymptotic Fisher and Wilks bounds for the profile estimator.

The spread is ``(8/(1-nu^2)^2 * delta(r) + 6 nu1 omega z(x, 2p*+2p)) * r``
with a linear smoothness modulus ``delta(r) = delta_slope * r``.  Constants
are model inputs (see :func:`model_constants`), not estimated from data.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import InformationBlocks, psd_sqrt
from .errors import InsufficientSamples
from .models import ModelKind, ModelSpec


@dataclass(frozen=True)
class ConditionConstants:
    nu: float = 0.0
    nu0: float = 1.0
    nu1: float = 1.0
    omega: float = 0.0
    g: float = math.inf
    delta_slope: float = 0.0
    # documentation only; nothing reads these
    b_r: float | None = None
    g_r: float | None = None
    nu_r: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.nu < 1.0:
            raise ValueError(f"nu must lie in [0, 1), got {self.nu}")
        if not 0.0 <= self.omega <= 0.5:
            raise ValueError(f"omega must lie in [0, 1/2], got {self.omega}")
        if self.g <= 0 or self.nu0 <= 0 or self.nu1 < 0 or self.delta_slope < 0:
            raise ValueError("g, nu0 must be positive; nu1, delta_slope nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["g"] = None if math.isinf(self.g) else self.g
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ConditionConstants":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown constants keys: {sorted(extra)}")
        d = dict(d)
        if d.get("g", 0) is None:
            d["g"] = math.inf
        return cls(**d)


def model_constants(spec: ModelSpec, L_tilde: float = 1.0) -> ConditionConstants:
    """Order-one default constants matching each model's scaling in ``n``."""
    root_n = math.sqrt(spec.n)
    if spec.kind is ModelKind.GAUSSIAN:
        return ConditionConstants()
    omega = min(0.5, 1.0 / root_n)
    if spec.kind is ModelKind.LATTICE_BUMP:
        return ConditionConstants(omega=omega, delta_slope=1.0 / root_n)
    return ConditionConstants(omega=omega, delta_slope=L_tilde / root_n)


def entropy_term(x: float, Q: float, g: float) -> float:
    """``z(x, Q)``: ``sqrt(2(x+Q))`` if that is at most ``g``, else ``(x+Q)/g + g/2``."""
    root = math.sqrt(2.0 * (x + Q))
    if root <= g:
        return root
    return (x + Q) / g + g / 2.0


def breve_constants(g: float, nu: float) -> tuple[float, float]:
    """Transformed exponential-moment range and identifiability constant."""
    if not 0.0 <= nu < 1.0:
        raise ValueError(f"nu must lie in [0, 1), got {nu}")
    factor = (1.0 + nu * math.sqrt(1.0 + nu * nu)) / math.sqrt(1.0 - nu * nu)
    return g / factor, factor * nu


def spread(r: float, x: float, p_total: int, p_target: int, constants: ConditionConstants) -> float:
    nu = constants.nu
    g_breve, _ = breve_constants(constants.g, nu)
    z = entropy_term(x, 2 * p_total + 2 * p_target, g_breve)
    smooth = 8.0 / (1.0 - nu * nu) ** 2 * constants.delta_slope * r
    stoch = 6.0 * constants.nu1 * constants.omega * z
    return (smooth + stoch) * r


def theorem_bounds(xi_norm: float, r0: float, x: float, p_total: int, p_target: int,
                   constants: ConditionConstants) -> tuple[float, float]:
    """Right-hand sides of the Fisher and Wilks inequalities."""
    s0 = spread(r0, x, p_total, p_target, constants)
    s2 = spread(2.0 * (1.0 + constants.nu) * r0, x, p_total, p_target, constants)
    return s0, 8.0 * (xi_norm + s0) * s2 + s0 * s0


def beta_n(n: float, p: float) -> float:
    return math.sqrt(p**3 / n)


LARGE_N_CONST = (2.0 ** (1.0 / 3.0) - 1.0) / 2.0 ** (1.0 / 6.0)


def check_large_n(n: float, p: float) -> bool:
    """Sample-size condition under which the lattice shift stays below the norm slack."""
    return LARGE_N_CONST * math.sqrt(p / n) >= 0.5 * (p / n) ** 0.75


def min_samples_r0(x: float) -> int:
    return math.ceil(10.0 * math.exp(x))


def nearest_rank_quantile(values, q: float) -> float:
    vals = np.sort(np.asarray(values, dtype=float))
    if vals.size == 0:
        raise InsufficientSamples("no samples")
    k = math.ceil(q * vals.size - 1e-12)
    if k > vals.size:
        raise InsufficientSamples(f"quantile rank {k} exceeds sample count {vals.size}")
    return float(vals[max(k, 1) - 1])


def estimate_r0_from_radii(radii, x: float) -> float:
    radii = list(radii)
    need = min_samples_r0(x)
    if len(radii) < need:
        raise InsufficientSamples(f"need at least {need} samples at x={x}, got {len(radii)}")
    if any(r is None or not math.isfinite(r) for r in radii):
        return math.inf
    return nearest_rank_quantile(radii, 1.0 - math.exp(-x))


def estimate_r0(samples, blocks: InformationBlocks, center, x: float) -> float:
    """Empirical ``1 - e^{-x}`` quantile of the localisation radius.

    ``samples`` holds ``(v_full, v_constrained)`` pairs; a ``None`` in either
    slot marks a replicate without a maximiser and yields ``inf``.
    """
    samples = list(samples)
    need = min_samples_r0(x)
    if len(samples) < need:
        raise InsufficientSamples(f"need at least {need} samples at x={x}, got {len(samples)}")
    if any(a is None or b is None for a, b in samples):
        return math.inf
    root = psd_sqrt(blocks.Dfull2)
    c = np.asarray(center, dtype=float)
    full = np.array([np.asarray(a, dtype=float) for a, _ in samples]) - c
    cons = np.array([np.asarray(b, dtype=float) for _, b in samples]) - c
    if not (np.all(np.isfinite(full)) and np.all(np.isfinite(cons))):
        return math.inf
    radii = np.maximum(np.linalg.norm(full @ root, axis=1), np.linalg.norm(cons @ root, axis=1))
    return nearest_rank_quantile(radii, 1.0 - math.exp(-x))
