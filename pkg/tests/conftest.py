import numpy as np
import pytest
from hypothesis import settings

from agsf.moments import Transform

settings.register_profile("repo", max_examples=40, deadline=None)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_spd(rng, d, scale=1.0, floor=0.1):
    a = rng.standard_normal((d, d))
    return scale * (a @ a.T / d + floor * np.eye(d))


def kalman_means(F, Q, H, R, m0, P0, ys):
    """Closed-form scalar-or-matrix Kalman filter posterior means and covariances."""
    F, Q, H, R = (np.atleast_2d(np.asarray(a, float)) for a in (F, Q, H, R))
    m, P = np.asarray(m0, float), np.atleast_2d(np.asarray(P0, float))
    means, covs = [], []
    for y in ys:
        m, P = F @ m, F @ P @ F.T + Q
        S = H @ P @ H.T + R
        K = P @ H.T @ np.linalg.inv(S)
        m = m + K @ (np.atleast_1d(y) - H @ m)
        P = P - K @ S @ K.T
        means.append(m.copy())
        covs.append(P.copy())
    return np.array(means), np.array(covs)


def quadratic_transform(rng, d, d_out=None):
    """f_i(x) = 0.5 x^T A_i x + b_i^T x with random symmetric A_i."""
    d_out = d_out or d
    A = rng.standard_normal((d_out, d, d))
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    B = rng.standard_normal((d_out, d))
    return Transform(
        fn=lambda x: 0.5 * np.einsum("...i,kij,...j->...k", x, A, x) + x @ B.T,
        noise_cov=np.zeros((d_out, d_out)),
        jacobian=lambda x: np.einsum("kij,...j->...ki", A, x) + B,
        hessians=lambda x: np.broadcast_to(A, x.shape[:-1] + A.shape),
    )


def random_delta(rng, sigma):
    """A random 0 <= delta <= sigma."""
    root = np.linalg.cholesky(sigma)
    q, _ = np.linalg.qr(rng.standard_normal(sigma.shape))
    inner = q @ np.diag(rng.uniform(0.0, 1.0, sigma.shape[0])) @ q.T
    return root @ inner @ root.T
