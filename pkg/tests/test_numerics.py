import numpy as np
import pytest

from lossyetc.numerics import (
    DecayEnvelope,
    NumericsError,
    bisect_root,
    decay_envelope,
    eigendecompose,
    exp_norms_on_grid,
    mat_exp,
    spectral_abscissa,
)
from oracles import charpoly_eigenvalues, taylor_expm


def test_mat_exp_identity_at_zero_time():
    a = np.array([[0.3, -1.2], [0.7, 0.1]])
    assert np.allclose(mat_exp(a, 0.0), np.eye(2), atol=1e-15)
    assert np.allclose(mat_exp(np.zeros((3, 3))), np.eye(3), atol=1e-15)


def test_mat_exp_matches_taylor_oracle():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(100):
        a = rng.normal(size=(4, 4))
        t = float(rng.uniform(0.1, 2.0))
        got = mat_exp(a, t)
        ref = taylor_expm(a, t)
        err = np.linalg.norm(got - ref, np.inf) / max(1.0, np.linalg.norm(ref, np.inf))
        worst = max(worst, err)
    assert worst <= 1e-8


def test_mat_exp_semigroup_property():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(3, 3))
    lhs = mat_exp(a, 0.7)
    rhs = mat_exp(a, 0.3) @ mat_exp(a, 0.4)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_eigendecompose_matches_charpoly_roots():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a = rng.normal(size=(4, 4))
        got = eigendecompose(a).eigenvalues
        ref = charpoly_eigenvalues(a)
        assert np.allclose(got, ref, atol=1e-6)


def test_eigendecompose_residual_and_normalization():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(5, 5))
    eig = eigendecompose(a)
    for lam, v in zip(eig.eigenvalues, eig.eigenvectors.T):
        assert np.linalg.norm(a @ v - lam * v) <= 1e-8
        assert abs(np.linalg.norm(v) - 1.0) <= 1e-12


def test_eigendecompose_ordering_descending_real_part():
    a = np.diag([-3.0, 2.0, 0.5])
    vals = eigendecompose(a).eigenvalues
    assert np.all(np.diff(vals.real) <= 1e-12)


def test_eigendecompose_counts_growing_modes():
    a = np.diag([1.0, -1.0, 1e-9, 1e-3])
    eig = eigendecompose(a)
    # strictly growing: 1.0 and 1e-3; 1e-9 sits inside the marginal band
    assert eig.num_growing == 2


def test_spectral_abscissa():
    assert spectral_abscissa(np.diag([-2.0, -0.3])) == pytest.approx(-0.3)
    a = np.array([[0.0, 1.0], [-1.0, 0.0]])
    assert spectral_abscissa(a) == pytest.approx(0.0, abs=1e-12)


def test_exp_norms_on_grid_matches_direct_exponentials():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(3, 3)) - 2.0 * np.eye(3)
    ts = np.linspace(0.0, 4.0, 17)
    got = exp_norms_on_grid(a, ts)
    ref = np.array([np.linalg.norm(taylor_expm(a, t), 2) for t in ts])
    assert np.allclose(got, ref, rtol=1e-8, atol=1e-10)


def test_decay_envelope_holds_on_fresh_grid():
    rng = np.random.default_rng(9)
    for _ in range(10):
        a = rng.normal(size=(3, 3))
        a = a - (spectral_abscissa(a) + 0.5) * np.eye(3)
        env = decay_envelope(a)
        assert env.c >= 1.0 and env.rate > 0.0
        ts = np.sort(np.random.default_rng(2).uniform(0.0, 30.0, 200))
        norms = exp_norms_on_grid(a, ts)
        assert np.all(norms <= env.c * np.exp(-env.rate * ts) + 1e-9)


def test_decay_envelope_rejects_non_hurwitz():
    with pytest.raises(NumericsError):
        decay_envelope(np.diag([0.1, -1.0]))


def test_decay_envelope_is_value_type():
    env = DecayEnvelope(c=2.0, rate=0.5)
    assert env.c == 2.0 and env.rate == 0.5


def test_bisect_root_cosine():
    root = bisect_root(np.cos, 0.0, 3.0, tol=1e-12)
    assert root == pytest.approx(np.pi / 2.0, abs=1e-11)


def test_bisect_root_rejects_bad_bracket():
    with pytest.raises(NumericsError):
        bisect_root(np.cos, 0.0, 1.0, tol=1e-12)


def test_bisect_root_respects_tolerance():
    f = lambda x: x - 0.123456789
    for tol in (1e-3, 1e-6, 1e-12):
        assert abs(bisect_root(f, 0.0, 1.0, tol=tol) - 0.123456789) <= tol
