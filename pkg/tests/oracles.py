"""Independent reference computations used by the sampler tests.

Nothing here calls into the package: the model posterior is obtained by
brute-force enumeration with numerical integration over the slab variance,
and subset selection by exhaustive search.
"""
import itertools

import numpy as np
from scipy import integrate, special


def toy_problem(seed: int, K: int = 3, n: int = 20):
    """Small correlated regression with one irrelevant column, unit-norm columns."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, K))
    X[:, 2] += 0.6 * X[:, 0]
    X /= np.linalg.norm(X, axis=0)
    beta = np.zeros(K)
    beta[0], beta[2] = 1.2, 0.5
    y = X @ beta + 0.35 * rng.standard_normal(n)
    return X, y / np.sqrt(np.mean(y**2))


def _log_evidence(X, y, z, theta, hp):
    # log p(y | z, theta) with beta and sigma^2 integrated out, up to a constant
    idx = np.flatnonzero(z)
    n = y.shape[0]
    quad, logdet = 0.0, 0.0
    if idx.size:
        A = X[:, idx].T @ X[:, idx] + np.eye(idx.size) / theta
        b = X[:, idx].T @ y
        quad = b @ np.linalg.solve(A, b)
        logdet = np.linalg.slogdet(A)[1]
    return (-0.5 * logdet - 0.5 * idx.size * np.log(theta)
            - (hp.a_sigma + 0.5 * n) * np.log(hp.b_sigma + 0.5 * (y @ y - quad)))


def enumerate_posterior(X, y, hp) -> dict[tuple[int, ...], float]:
    """Exact posterior over all 2^K indicator patterns.

    ``q`` is integrated analytically (Beta-Bernoulli); ``theta`` numerically
    against its inverse-gamma prior, in log space.
    """
    K = X.shape[1]
    patterns = list(itertools.product((0, 1), repeat=K))
    shift = max(_log_evidence(X, y, z, 1.0, hp) for z in patterns)
    log_norm = hp.a_theta * np.log(hp.b_theta) - special.gammaln(hp.a_theta)

    weights = {}
    for z in patterns:
        def integrand(s, z=z):
            th = np.exp(s)
            log_prior = log_norm - (hp.a_theta + 1.0) * s - hp.b_theta / th
            return np.exp(_log_evidence(X, y, z, th, hp) + log_prior + s - shift)

        mass = integrate.quad(integrand, -40.0, 40.0, limit=400, points=[0.0])[0]
        h = sum(z)
        prior_z = np.exp(special.betaln(hp.a_q + h, hp.b_q + K - h) - special.betaln(hp.a_q, hp.b_q))
        weights[z] = mass * prior_z
    total = sum(weights.values())
    return {z: w / total for z, w in weights.items()}


def bic(X, y, subset) -> float:
    n = y.shape[0]
    subset = list(subset)
    if subset:
        coef = np.linalg.lstsq(X[:, subset], y, rcond=None)[0]
        r = y - X[:, subset] @ coef
    else:
        r = y
    return n * np.log(r @ r / n) + len(subset) * np.log(n)


def best_subset(X, y) -> np.ndarray:
    """Indicator vector of the BIC-optimal subset, by exhaustive search."""
    K = X.shape[1]
    best = min(
        (s for h in range(K + 1) for s in itertools.combinations(range(K), h)),
        key=lambda s: bic(X, y, s),
    )
    z = np.zeros(K, dtype=np.int8)
    z[list(best)] = 1
    return z


def sparse_problem(seed: int, K: int = 10, n: int = 120, noise: float = 0.1):
    """Random design with a 1-4 term truth of clearly non-zero coefficients."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, K))
    h = int(rng.integers(1, min(K, 4) + 1))
    support = rng.choice(K, size=h, replace=False)
    beta = np.zeros(K)
    beta[support] = rng.uniform(1.0, 3.0, h) * rng.choice([-1.0, 1.0], h)
    return X, X @ beta + noise * rng.standard_normal(n), beta
