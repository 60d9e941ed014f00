"""Kernel tests: independent oracles first, implementation checked against them."""

import math

import numpy as np
import pytest

from coopreg import linalg
from coopreg.errors import Singular


# ---------------------------------------------------------------------------
# Oracles (deliberately naive, independent of the implementation under test).

def expm_taylor(M, t, terms=30):
    """Plain truncated Taylor series, no scaling tricks."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    acc = np.eye(n)
    term = np.eye(n)
    for j in range(1, terms + 1):
        term = term @ (M * t) / j
        acc = acc + term
    return acc

def char_poly_coeffs(M):
    """Characteristic polynomial coefficients via the Faddeev-LeVerrier
    recurrence: p(x) = x^n + c[1] x^(n-1) + ... + c[n]."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    coeffs = [1.0]
    Mk = M.copy()
    for k in range(1, n + 1):
        ck = -np.trace(Mk) / k
        coeffs.append(ck)
        Mk = M @ (Mk + ck * np.eye(n))
    return coeffs

def eval_poly(coeffs, x):
    acc = 0.0 + 0.0j
    for c in coeffs:
        acc = acc * x + c
    return acc

def power_iteration_radius(M, iters=200, seed=0):
    """Dominant-eigenvalue magnitude by plain power iteration.

    Only trustworthy when the dominant magnitude belongs to a single real
    eigenvalue (possibly repeated but non-defective); callers arrange that,
    e.g. by powering the matrix first to collapse complex trios.
    """
    M = np.asarray(M, dtype=float)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(M.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = M @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        lam = v @ (M @ v)
    return abs(lam)


ROTATION = np.array([[0.0, 1.0], [-1.0, 0.0]])

# Follower-block Laplacian and leader-coupling block of the bundled
# six-agent benchmark topology.
L1_BENCH = np.array([
    [2.0, 0.0, 0.0, -1.0],
    [-1.0, 1.0, 0.0, 0.0],
    [-1.0, 0.0, 2.0, -1.0],
    [0.0, -1.0, 0.0, 2.0],
])
L2_BENCH = np.array([
    [-1.0, 0.0],
    [0.0, 0.0],
    [0.0, 0.0],
    [0.0, -1.0],
])


# ---------------------------------------------------------------------------
# solve_linear

def test_solve_identity_returns_rhs():
    b = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    X = linalg.solve_linear(np.eye(3), b)
    np.testing.assert_allclose(X, b, rtol=0, atol=1e-14)

def test_solve_diagonal():
    A = np.array([[2.0, 0.0], [0.0, 4.0]])
    b = np.array([[2.0], [8.0]])
    X = linalg.solve_linear(A, b)
    np.testing.assert_allclose(X, [[1.0], [2.0]], atol=1e-14)

def test_solve_vector_rhs_keeps_shape():
    A = np.array([[3.0, 1.0], [1.0, 2.0]])
    x = linalg.solve_linear(A, np.array([5.0, 5.0]))
    assert x.shape == (2,)
    np.testing.assert_allclose(A @ x, [5.0, 5.0], atol=1e-12)

def test_solve_random_roundtrip():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = rng.integers(1, 9)
        A = rng.standard_normal((n, n)) + n * np.eye(n)
        b = rng.standard_normal((n, 3))
        X = linalg.solve_linear(A, b)
        resid = np.abs(A @ X - b).max()
        assert resid <= 1e-9 * (1.0 + np.abs(b).max())

def test_solve_singular_raises():
    A = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(Singular):
        linalg.solve_linear(A, np.array([1.0, 1.0]))

def test_solve_zero_matrix_raises():
    with pytest.raises(Singular):
        linalg.solve_linear(np.zeros((2, 2)), np.ones(2))

def test_solve_benchmark_coupling_rows():
    # Rows of -L1^{-1} L2 must be nonnegative and sum to one.
    X = linalg.solve_linear(L1_BENCH, -L2_BENCH)
    assert X.min() >= -1e-12
    np.testing.assert_allclose(X.sum(axis=1), np.ones(4), atol=1e-10)


# ---------------------------------------------------------------------------
# expm

def test_expm_zero_time_is_identity():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((4, 4))
    np.testing.assert_allclose(linalg.expm(M, 0.0), np.eye(4), atol=1e-15)

@pytest.mark.parametrize("t", [0.1, 1.0, 1.5])
def test_expm_rotation_closed_form(t):
    expected = np.array([[math.cos(t), math.sin(t)],
                         [-math.sin(t), math.cos(t)]])
    np.testing.assert_allclose(linalg.expm(ROTATION, t), expected, atol=1e-13)
    # and against the series oracle
    np.testing.assert_allclose(linalg.expm(ROTATION, t),
                               expm_taylor(ROTATION, t), atol=1e-12)

def test_expm_diagonal():
    M = np.diag([0.3, -1.2])
    E = linalg.expm(M, 2.0)
    np.testing.assert_allclose(E, np.diag([math.exp(0.6), math.exp(-2.4)]),
                               rtol=1e-13)

def test_expm_vs_series_oracle_norm_bounded():
    # Relative agreement <= 1e-10 whenever norm(M t) <= 5.
    rng = np.random.default_rng(11)
    for _ in range(60):
        n = rng.integers(1, 7)
        M = rng.standard_normal((n, n))
        nrm = np.abs(M).sum(axis=1).max()
        t = rng.uniform(0.0, 5.0) / max(nrm, 1e-3)
        E = linalg.expm(M, t)
        O = expm_taylor(M, t)
        denom = np.abs(O).max()
        assert np.abs(E - O).max() <= 1e-10 * max(denom, 1.0)

def test_expm_semigroup_property():
    rng = np.random.default_rng(21)
    for _ in range(30):
        M = rng.standard_normal((3, 3))
        M *= 2.0 / max(np.abs(M).sum(axis=1).max(), 1e-9)
        s, t = rng.uniform(0.0, 2.0, size=2)
        left = linalg.expm(M, s) @ linalg.expm(M, t)
        right = linalg.expm(M, s + t)
        assert np.abs(left - right).max() <= 1e-8

def test_expm_orthogonal_similarity():
    rng = np.random.default_rng(5)
    for _ in range(20):
        M = rng.standard_normal((4, 4))
        Q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        t = rng.uniform(0.0, 2.0)
        left = linalg.expm(Q @ M @ Q.T, t)
        right = Q @ linalg.expm(M, t) @ Q.T
        assert np.abs(left - right).max() <= 1e-8


# ---------------------------------------------------------------------------
# eigenvalues

def sorted_complex(vals):
    return sorted(vals, key=lambda z: (round(z.real, 6), round(z.imag, 6)))

def test_eigenvalues_rotation_pure_imaginary():
    lams = sorted_complex(linalg.eigenvalues(ROTATION))
    np.testing.assert_allclose([l.real for l in lams], [0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(sorted(l.imag for l in lams), [-1.0, 1.0],
                               atol=1e-12)

def test_eigenvalues_diagonal():
    lams = sorted_complex(linalg.eigenvalues(np.diag([3.0, -2.0])))
    np.testing.assert_allclose([l.real for l in lams], [-2.0, 3.0], atol=1e-12)

def test_eigenvalues_closed_loop_plant():
    # A + B K for the benchmark double-integrator-like agent: the closed-loop
    # characteristic polynomial is x^2 + 10 x + 12, both roots negative.
    A = np.array([[0.0, 1.0], [-2.0, -2.0]])
    BK = np.outer([0.0, 1.0], [-10.0, -8.0])
    lams = linalg.eigenvalues(A + BK)
    roots = np.roots([1.0, 10.0, 12.0])
    np.testing.assert_allclose(sorted(l.real for l in lams), sorted(roots),
                               atol=1e-9)
    assert all(l.real < 0 for l in lams)

def test_eigenvalues_char_poly_residual():
    rng = np.random.default_rng(13)
    for _ in range(60):
        n = rng.integers(2, 7)
        M = rng.standard_normal((n, n))
        coeffs = char_poly_coeffs(M)
        scale = max(1.0, np.abs(M).max()) ** n
        for lam in linalg.eigenvalues(M):
            assert abs(eval_poly(coeffs, lam)) <= 1e-7 * scale

def test_eigenvalues_repeated_and_defective():
    # Jordan-ish block: repeated eigenvalue 2.
    M = np.array([[2.0, 1.0], [0.0, 2.0]])
    lams = linalg.eigenvalues(M)
    np.testing.assert_allclose(sorted(l.real for l in lams), [2.0, 2.0],
                               atol=1e-6)

def test_eigenvalues_match_schur_diagonal():
    rng = np.random.default_rng(17)
    for _ in range(40):
        n = rng.integers(1, 9)
        M = rng.standard_normal((n, n))
        lams = sorted_complex(linalg.eigenvalues(M))
        T = linalg.real_schur(M).T
        lams_t = sorted_complex(linalg.eigenvalues(T))
        for a, b in zip(lams, lams_t):
            assert abs(a - b) <= 1e-6 * max(1.0, abs(a))


# ---------------------------------------------------------------------------
# real_schur

def assert_schur_invariants(S, res, rel=1e-7):
    n = S.shape[0]
    scale = max(np.abs(S).max(), 1e-30)
    assert np.abs(res.V @ res.V.T - np.eye(n)).max() <= 1e-10
    assert np.abs(res.V @ S @ res.V.T - res.T).max() <= 1e-8 * scale
    assert np.abs(res.V.T @ res.T @ res.V - S).max() <= rel * scale
    assert sum(res.block_sizes) == n
    # quasi-triangular: everything below the block diagonal is negligible
    i = 0
    for size in res.block_sizes:
        assert size in (1, 2)
        below = res.T[i + size:, i:i + size]
        if below.size:
            assert np.abs(below).max() <= 1e-8 * scale
        if size == 2:
            a, b = res.T[i, i], res.T[i, i + 1]
            c, d = res.T[i + 1, i], res.T[i + 1, i + 1]
            disc = 0.25 * (a - d) ** 2 + b * c
            assert disc < 0.0  # complex-conjugate pair
        i += size

def test_schur_rotation_block():
    res = linalg.real_schur(ROTATION)
    assert res.block_sizes == (2,)
    assert_schur_invariants(ROTATION, res)

def test_schur_upper_triangular_passthrough():
    S = np.array([[1.0, 2.0, 3.0], [0.0, 4.0, 5.0], [0.0, 0.0, 6.0]])
    res = linalg.real_schur(S)
    assert res.block_sizes == (1, 1, 1)
    assert_schur_invariants(S, res)

def test_schur_symmetric_becomes_diagonal():
    rng = np.random.default_rng(23)
    A = rng.standard_normal((4, 4))
    S = A + A.T
    res = linalg.real_schur(S)
    assert res.block_sizes == (1, 1, 1, 1)
    off = res.T - np.diag(np.diag(res.T))
    assert np.abs(off).max() <= 1e-7 * np.abs(S).max()
    assert_schur_invariants(S, res)

def test_schur_reconstruction_random_sweep():
    rng = np.random.default_rng(29)
    for _ in range(100):
        n = rng.integers(1, 9)
        S = rng.standard_normal((n, n))
        res = linalg.real_schur(S)
        assert_schur_invariants(S, res)

def test_schur_structured_matrices():
    cases = [
        np.zeros((3, 3)),
        np.eye(5),
        np.diag([1.0, 1.0, -1.0]),
        np.kron(np.eye(2), ROTATION),          # two identical complex pairs
        np.array([[0.0, 1.0], [0.0, 0.0]]),    # nilpotent
    ]
    for S in cases:
        res = linalg.real_schur(S)
        n = S.shape[0]
        scale = max(np.abs(S).max(), 1.0)
        assert np.abs(res.V.T @ res.T @ res.V - S).max() <= 1e-7 * scale
        assert np.abs(res.V @ res.V.T - np.eye(n)).max() <= 1e-10


# ---------------------------------------------------------------------------
# spectral_radius

def test_spectral_radius_identity_and_zero():
    assert linalg.spectral_radius(np.eye(4)) == pytest.approx(1.0, abs=1e-12)
    assert linalg.spectral_radius(np.zeros((3, 3))) == pytest.approx(0.0,
                                                                     abs=1e-12)

def test_spectral_radius_small_gain_benchmark():
    # Gamma = I - D^{-1} L1 for the bundled benchmark; its nonzero spectrum
    # is a real value and a complex pair of equal magnitude, so the power
    # iteration runs on Gamma^3 where the trio collapses onto one real
    # eigenvalue.
    D = np.diag([2.0, 1.0, 2.0, 2.0])
    Gamma = np.eye(4) - np.diag(1.0 / np.diag(D)) @ L1_BENCH
    rho = linalg.spectral_radius(Gamma)
    assert rho < 1.0
    cubed_radius = power_iteration_radius(Gamma @ Gamma @ Gamma, iters=400)
    assert rho == pytest.approx(cubed_radius ** (1.0 / 3.0), abs=1e-6)


# ---------------------------------------------------------------------------
# matrix_rank

def test_rank_basics():
    assert linalg.matrix_rank(np.eye(3), 1e-9) == 3
    assert linalg.matrix_rank(np.zeros((2, 5)), 1e-9) == 0
    assert linalg.matrix_rank(np.array([[1.0, 2.0], [2.0, 4.0]]), 1e-9) == 1

def test_rank_complex():
    M = np.array([[1.0 + 1.0j, 0.0], [0.0, 0.0]])
    assert linalg.matrix_rank(M, 1e-9) == 1
    M2 = np.array([[1.0 + 1.0j, 2.0], [0.0, 1.0j]])
    assert linalg.matrix_rank(M2, 1e-9) == 2
    # rank-1 complex case: second row is i times the first
    M3 = np.array([[1.0, 1.0 - 1.0j], [1.0j, 1.0 + 1.0j]])
    assert linalg.matrix_rank(M3, 1e-9) == 1
