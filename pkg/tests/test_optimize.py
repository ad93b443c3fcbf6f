import math

import numpy as np
import pytest

from critdim.errors import NoLocalMaximizer, NonFinite
from critdim.models import ModelSpec, kernel_bump_f, lattice_set_distance, sample_observation, value
from critdim.optimize import (
    lambda_max,
    maximize_constrained,
    maximize_full,
    profile_result,
    tau,
)
from critdim.rng import replicate_seed


def draw(spec, i, master=99):
    return np.array(sample_observation(spec, replicate_seed(master, spec.n, spec.p, i)))


def test_lambda_max_and_tau():
    assert lambda_max(0.0) == 1.0
    assert tau(0.0) == 1.0
    assert lambda_max(3 / 16) == pytest.approx(4 / 3, abs=1e-12)
    assert tau(3 / 16) == pytest.approx(16 / 9, abs=1e-12)
    assert lambda_max(0.1) == pytest.approx(1 + tau(0.1) * 0.1, rel=1e-12)
    for a in np.arange(0.01, 0.245, 0.01):
        lam = lambda_max(a)
        assert abs(1 - lam + a * lam * lam) <= 1e-12
        assert 2 * a * lam < 1
    for a in (0.25, 0.3):
        with pytest.raises(NoLocalMaximizer):
            lambda_max(a)
        with pytest.raises(NoLocalMaximizer):
            tau(a)


def test_gaussian_closed_forms():
    spec = ModelSpec.gaussian(256, 10)
    X = draw(spec, 0)
    full = maximize_full(spec, X)
    assert np.array_equal(full.point.values, X)
    assert full.value == pytest.approx(spec.n * X @ X / 2, rel=1e-14)
    pt = spec.split.p_target
    _, v0, conv, _ = maximize_constrained(spec, X, np.zeros(pt))
    assert conv and v0 == pytest.approx(spec.n * X[pt:] @ X[pt:] / 2, rel=1e-14)
    _, v1, _, _ = maximize_constrained(spec, X, X[:pt])
    assert v1 == pytest.approx(full.value, rel=1e-14)
    prof = profile_result(spec, X)
    assert prof.excess == pytest.approx(spec.n * X[:pt] @ X[:pt] / 2, rel=1e-12)
    assert np.array_equal(prof.theta_hat, X[:pt])


def test_kernel_closed_form_maximizer():
    spec = ModelSpec.kernel_bump(1024, 16)
    hits = 0
    for i in range(20):
        X = draw(spec, i)
        full = maximize_full(spec, X)
        assert full.converged
        lam = lambda_max(float(np.linalg.norm(X)))
        if full.in_S_event:
            hits += 1
            assert np.allclose(full.point.values, lam * X, rtol=1e-6, atol=1e-12)
            assert kernel_bump_f(spec, lam * X) == 1.0
        pt = spec.split.p_target
        cons, vc, _, _ = maximize_constrained(spec, X, np.zeros(pt))
        assert vc == pytest.approx(spec.n * X[pt:] @ X[pt:] / 2, rel=1e-14)
        prof = profile_result(spec, X)
        assert prof.value_full >= prof.value_constrained - 1e-9
        # independent value-only recomputation of the excess
        direct = value(spec, X, full.point.values) - value(spec, X, np.asarray(cons))
        assert prof.excess == pytest.approx(direct, abs=1e-10 * max(1.0, abs(prof.value_full)))
    assert hits >= 15


def test_kernel_event_reconstructed_from_scalars():
    # with rho = |X_theta|/|X| and s = |X| sqrt(n/p), lambda X is on the f == 1 plateau
    # iff lambda rho s >= 2/L and lambda s <= 2
    for n, p, L in ((1024, 16, 8.0), (4096, 32, 8.0), (1024, 16, 3.0)):
        spec = ModelSpec.kernel_bump(n, p, L=L)
        for i in range(25):
            X = draw(spec, i)
            norm = np.linalg.norm(X)
            rho = np.linalg.norm(X[: p // 2]) / norm
            s = norm * math.sqrt(n / p)
            lam = lambda_max(norm)
            expected = lam * rho * s >= 2.0 / L and lam * s <= 2.0
            assert maximize_full(spec, X).in_S_event == expected


def test_lattice_maximizer_sits_on_the_set():
    spec = ModelSpec.lattice_bump(4096, 16)  # beta_n = 1
    checked = 0
    for i in range(12):
        X = draw(spec, i)
        if not (0.5 * (16 / 4096) ** 1.5 < np.linalg.norm(X) ** 3 < (32 / 4096) ** 1.5):
            continue
        full = maximize_full(spec, X)
        checked += 1
        assert full.converged
        assert full.value > spec.n * X @ X / 2
        assert lattice_set_distance(spec, full.point.values) < spec.vicinity_delta
        for label, start_value in full.candidate_values.items():
            assert full.value >= start_value - 1e-9 * abs(full.value), label
    assert checked >= 6


def test_lattice_on_lattice_recovers_first_coordinate():
    # holds while the cubic term's radial pull 3|v||X_1| stays below half a lattice step
    spec = ModelSpec.lattice_bump(2**16, 16)
    h = spec.spacing
    X = draw(spec, 3)
    for k in (0, 1, -2):
        X[0] = k * h
        prof = profile_result(spec, X)
        assert abs(prof.theta_hat[0] - X[0]) < spec.vicinity_delta


def _brute_force_lattice(spec, X):
    """Enumerate every slice, maximise the radial nuisance coordinate on a grid, then polish."""
    from scipy.optimize import minimize_scalar

    n, h, R = spec.n, spec.spacing, spec.s_ball_radius
    xe = float(np.linalg.norm(X[1:]))
    best_val, best_t = n * float(X @ X) / 2, None
    K = int(R / h)
    for k in range(-K, K + 1):
        t = k * h
        rho = math.sqrt(max(R * R - t * t, 0.0))

        def neg(s, t=t):
            return -(n * (X[0] * t - t * t / 2) + n * (s * xe - s * s / 2) + n * (t * t + s * s) ** 1.5)

        grid = np.linspace(0.0, rho, 801)
        i = int(np.argmin([neg(s) for s in grid]))
        res = minimize_scalar(neg, bounds=(grid[max(i - 1, 0)], grid[min(i + 1, 800)]),
                              method="bounded", options={"xatol": 1e-13})
        if -res.fun > best_val:
            best_val, best_t = -res.fun, t
    return best_val, best_t


@pytest.mark.parametrize("n,p", [(4096, 16), (4096, 43)])
def test_lattice_matches_slice_enumeration(n, p):
    spec = ModelSpec.lattice_bump(n, p)
    for i in range(6):
        X = draw(spec, i)
        full = maximize_full(spec, X)
        brute_val, brute_t = _brute_force_lattice(spec, X)
        # the solver may sit up to delta off the slice, so it can only do (slightly) better
        assert full.value >= brute_val - 1e-9 * abs(brute_val)
        assert full.value <= brute_val + 2 * spec.n * spec.vicinity_delta
        assert brute_t is not None
        assert abs(full.point.theta[0] - brute_t) < spec.vicinity_delta


def test_subspace_and_full_ascent_agree():
    spec = ModelSpec.kernel_bump(256, 6)
    for i in range(5):
        X = draw(spec, i)
        a = maximize_full(spec, X, subspace=True)
        b = maximize_full(spec, X, subspace=False)
        assert a.value == pytest.approx(b.value, rel=1e-9)
        assert np.allclose(a.point.values, b.point.values, atol=1e-7 * np.linalg.norm(X))
    spec = ModelSpec.lattice_bump(512, 6)
    X = draw(spec, 1)
    theta = np.array([0.02])
    _, va, _, _ = maximize_constrained(spec, X, theta, subspace=True)
    _, vb, _, _ = maximize_constrained(spec, X, theta, subspace=False)
    assert va == pytest.approx(vb, rel=1e-9)


def test_non_finite_input_raises():
    spec = ModelSpec.kernel_bump(256, 4)
    with pytest.raises(NonFinite):
        maximize_full(spec, np.array([np.nan, 0.1, 0.1, 0.1]))
    with pytest.raises(ValueError):
        maximize_full(spec, np.zeros(3))
