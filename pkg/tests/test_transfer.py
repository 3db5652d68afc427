import math

import numpy as np
import pytest
from scipy.sparse.linalg import eigs

from thermoform.errors import ConvergenceError, PreconditionError, SingularityError
from thermoform.interval_map import IntervalMap
from thermoform.potential import Constant, Cosine, Geometric
from thermoform.transfer import (
    MeasureEstimate,
    equilibrium_report,
    equilibrium_state,
    integrate,
    leading_eigendata,
    lyapunov_exponent,
    ruelle_ok,
    ulam_operator,
)

CHEB2 = IntervalMap.chebyshev2()
CHEB3 = IntervalMap.chebyshev3()
LOG2 = math.log(2)


@pytest.fixture(scope="module")
def mme_4096():
    return equilibrium_state(CHEB2, Constant(0.0), 4096)


def test_ulam_small_examples():
    assert np.array_equal(ulam_operator(CHEB2, Constant(0.0), 2).matrix.toarray(), [[1, 1], [1, 1]])
    m = ulam_operator(CHEB2, Constant(0.3), 2).matrix.toarray()
    assert np.allclose(m, math.exp(0.3) * np.ones((2, 2)), rtol=1e-15)
    rows = np.asarray(ulam_operator(CHEB2, Constant(0.0), 4).matrix.sum(axis=1)).ravel()
    assert np.allclose(rows, 2.0, atol=1e-12)


@pytest.mark.parametrize("f,deg", [(CHEB2, 2), (CHEB3, 3)])
@pytest.mark.parametrize("m", [7, 64, 300])
def test_zero_potential_row_sums_and_sparsity(f, deg, m):
    op = ulam_operator(f, Constant(0.0), m)
    mat = op.matrix
    assert mat.min() >= 0
    assert np.allclose(np.asarray(mat.sum(axis=1)).ravel(), deg, atol=1e-12)
    assert mat.nnz <= deg * m + 2 * deg * m
    lam, v, u = leading_eigendata(op)
    assert lam == pytest.approx(deg, abs=1e-6)


def test_irreducibility_flag():
    assert ulam_operator(CHEB2, Constant(0.0), 64).irreducible


def test_matrix_matches_direct_branch_image_oracle():
    m = 16
    op = ulam_operator(CHEB2, Cosine(0.3), m).matrix.toarray()
    edges = np.linspace(0, 1, m + 1)
    want = np.zeros((m, m))
    for i in range(m):
        for sign in (-1, 1):
            ys = sorted(0.5 * (1 + sign * math.sqrt(1 - t)) for t in (edges[i], edges[i + 1]))
            L = ys[1] - ys[0]
            for j in range(m):
                lo, hi = max(ys[0], edges[j]), min(ys[1], edges[j + 1])
                if hi > lo:
                    want[i, j] += math.exp(0.3 * math.cos(2 * math.pi * 0.5 * (lo + hi))) * (hi - lo) / L
    assert np.allclose(op, want, atol=1e-12)


def test_eigendata_examples():
    lam, v, u = leading_eigendata(np.ones((2, 2)))
    assert lam == pytest.approx(2.0)
    assert np.allclose(v, [0.5, 0.5])
    assert np.allclose(u, [1.0, 1.0])
    lam2, _, _ = leading_eigendata(math.exp(0.3) * np.ones((2, 2)))
    assert lam2 == pytest.approx(2 * math.exp(0.3))


def test_eigendata_normalisation_and_scipy_oracle():
    op = ulam_operator(CHEB2, Cosine(0.3), 512)
    lam, v, u = leading_eigendata(op)
    assert math.fsum(v) == pytest.approx(1.0, abs=1e-12)
    assert math.fsum(u * v) == pytest.approx(1.0, abs=1e-12)
    ref = eigs(op.matrix, k=1, which="LM", return_eigenvectors=False)[0]
    assert lam == pytest.approx(ref.real, rel=1e-9)
    assert np.allclose(op.matrix @ v, lam * v, atol=1e-9)


def test_eigendata_nonconvergence():
    with pytest.raises(ConvergenceError):
        leading_eigendata(np.array([[0.0, 1.0], [2.0, 0.0]]), max_iter=50)


def test_shift_equivariance_of_eigenvalue():
    lam0, *_ = leading_eigendata(ulam_operator(CHEB2, Cosine(0.3), 256))
    lam1, *_ = leading_eigendata(ulam_operator(CHEB2, Cosine(0.3) + 1.7, 256))
    assert lam1 == pytest.approx(math.exp(1.7) * lam0, rel=1e-11)


def test_equilibrium_small_and_symmetry(mme_4096):
    op, eig, mu = equilibrium_state(CHEB2, Constant(0.0), 2)
    assert np.allclose(mu.weights, [0.5, 0.5])
    _, _, mu = mme_4096
    assert math.fsum(mu.weights) == pytest.approx(1.0, abs=1e-12)
    assert mu.mass(0.0, 0.5) == pytest.approx(0.5, abs=0.01)
    assert np.allclose(mu.weights, mu.weights[::-1], atol=1e-9)


def test_equilibrium_weights_invariant_under_constants():
    _, _, a = equilibrium_state(CHEB2, Cosine(0.2), 256)
    _, _, b = equilibrium_state(CHEB2, Cosine(0.2) + 0.9, 256)
    assert np.allclose(a.weights, b.weights, atol=1e-12)


def test_integrate_examples():
    mu = MeasureEstimate(np.array([0.0, 0.5]), np.array([0.5, 1.0]), np.array([0.5, 0.5]))
    assert integrate(mu, lambda x: x) == 0.5
    uni = MeasureEstimate.uniform((0.0, 1.0), 37)
    assert integrate(uni, lambda x: np.full_like(x, 2.5)) == pytest.approx(2.5)


def test_integrate_excludes_singular_cells():
    mu = MeasureEstimate(np.array([0.0, 0.5, 0.6]), np.array([0.5, 0.5, 1.0]), np.array([0.49, 0.02, 0.49]))
    with pytest.raises(SingularityError):
        integrate(mu, lambda x: np.log(np.abs(x - 0.5)), avoid=[0.5])
    mu = MeasureEstimate(np.array([0.0, 0.5, 0.6]), np.array([0.5, 0.5, 1.0]), np.array([0.496, 0.008, 0.496]))
    got = integrate(mu, lambda x: x, avoid=[0.5])
    assert got == pytest.approx(0.5 * (0.25 + 0.8))


def test_measure_estimate_validation():
    with pytest.raises(PreconditionError):
        MeasureEstimate(np.array([0.0]), np.array([1.0]), np.array([-1.0]))
    mu = MeasureEstimate.orbit([0.25, 0.75])
    assert np.allclose(mu.weights, [0.5, 0.5])


def test_lyapunov_against_orbit_average(mme_4096):
    _, _, mu = mme_4096
    chi, excluded = lyapunov_exponent(CHEB2, mu)
    assert excluded == 0.0
    # Birkhoff-average oracle: cheb2 is conjugate to doubling by x = sin^2(pi theta), so a
    # genuine orbit comes from sliding a 52-bit window along one random bit stream
    rng = np.random.default_rng(11)
    steps = 200_000
    bits = rng.integers(0, 2, steps + 52).astype(float)
    windows = np.lib.stride_tricks.sliding_window_view(bits, 52)[:steps]
    theta = windows @ (0.5 ** np.arange(1, 53))
    x = np.sin(np.pi * theta) ** 2
    oracle = float(np.mean(np.log(np.abs(4 - 8 * x))))
    assert oracle == pytest.approx(LOG2, abs=0.02)
    assert chi == pytest.approx(oracle, abs=0.05)


def test_equilibrium_report_zero(mme_4096):
    r = equilibrium_report(CHEB2, Constant(0.0), 4096, pressure_used=LOG2, state=mme_4096)
    assert r.entropy == pytest.approx(LOG2, abs=0.02)
    assert r.lyapunov == pytest.approx(LOG2, abs=0.05)
    assert all(r.flags.values())
    assert r.entropy + r.int_phi == r.pressure_used


def test_equilibrium_report_constant():
    r = equilibrium_report(CHEB2, Constant(0.3), 1024, pressure_used=LOG2 + 0.3)
    assert r.entropy == pytest.approx(LOG2, abs=0.02)
    assert r.pressure_ulam == pytest.approx(LOG2 + 0.3, abs=1e-9)


def test_ruelle_examples():
    assert not ruelle_ok(0.8, 0.69)
    assert ruelle_ok(0.69, 0.69)
    assert not ruelle_ok(0.5, -0.1)


def test_geometric_potential_operator():
    op = ulam_operator(CHEB2, Geometric(CHEB2, 1.0), 64)
    assert np.all(np.isfinite(op.matrix.data))
    # t = 1 gives the Perron-Frobenius operator of Lebesgue, whose pressure is 0 for this
    # map; the midpoint weights converge slowly near the critical point
    p = [math.log(leading_eigendata(ulam_operator(CHEB2, Geometric(CHEB2, 1.0), m))[0]) for m in (64, 256, 1024)]
    assert p[0] > p[1] > p[2] > 0
    assert p[2] < 0.03


def test_matrix_csv_dump():
    op = ulam_operator(CHEB2, Constant(0.0), 2)
    assert op.to_csv() == "i,j,value\n0,0,1.0\n0,1,1.0\n1,0,1.0\n1,1,1.0\n"
