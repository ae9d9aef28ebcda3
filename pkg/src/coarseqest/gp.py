"""Gaussian-process imputation of satisfaction distributions.

A single squared-exponential ARD kernel is shared by all 2^n output
columns (one Cholesky factorisation serves every output); inputs are
state count vectors standardised per dimension.  Posterior means are
clipped to [1e-6, 1] and renormalised so imputed distributions stay on
the probability simplex.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.random import Philox, SeedSequence
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from coarseqest.smc import IMPUTED, SIMULATED, PropertyMap, SatisfactionDistribution

PROB_FLOOR = 1e-6
JITTER_CAP = 1e-4

# log-space optimisation bounds (lengthscales in standardised units)
VARIANCE_BOUNDS = (1e-4, 1e2)
LENGTHSCALE_BOUNDS = (1e-2, 1e3)
NOISE_BOUNDS = (1e-6, 1.0)

_HYPEROPT_STREAM = 7


class GpFitError(ValueError):
    pass


class NotPositiveDefiniteError(GpFitError):
    """Kernel matrix stayed indefinite past the jitter cap."""


@dataclass
class KernelConfig:
    """Squared-exponential kernel settings.

    With ``optimize`` the values act as the first optimisation start;
    otherwise they are used as-is.  ``lengthscales`` may be a scalar or a
    per-dimension sequence, in standardised input units.
    """

    optimize: bool = True
    variance: float = 1.0
    lengthscales: object = 1.0
    noise_variance: float = 1e-2
    restarts: int = 5
    max_iter: int = 60
    seed: int = 0

    def to_dict(self) -> dict:
        ls = self.lengthscales
        return {
            "optimize": self.optimize,
            "variance": self.variance,
            "lengthscales": list(np.atleast_1d(np.asarray(ls, dtype=float))),
            "noise_variance": self.noise_variance,
            "restarts": self.restarts,
            "max_iter": self.max_iter,
            "seed": self.seed,
        }


@dataclass
class GpModel:
    x_mean: np.ndarray
    x_std: np.ndarray
    X: np.ndarray  # standardised training inputs [m, D]
    Y: np.ndarray  # training targets [m, C]
    y_mean: np.ndarray  # per-column target means
    variance: float
    lengthscales: np.ndarray
    noise_variance: float
    L: np.ndarray = field(repr=False)  # lower Cholesky of K + noise I
    alpha: np.ndarray = field(repr=False)  # (K + noise I)^-1 (Y - y_mean)
    jitter: float = 0.0
    log_marginal_likelihood: float = 0.0

    def standardize(self, states) -> np.ndarray:
        pts = np.asarray(states, dtype=np.float64).reshape(-1, len(self.x_mean))
        return (pts - self.x_mean) / self.x_std


def _sq_dists(A: np.ndarray, B: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    diff = A[:, None, :] / lengthscales - B[None, :, :] / lengthscales
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kernel(A, B, variance, lengthscales):
    return variance * np.exp(-0.5 * _sq_dists(A, B, lengthscales))


def _chol_with_jitter(K: np.ndarray):
    """Lower Cholesky of K, escalating diagonal jitter up to JITTER_CAP."""
    jitter = 0.0
    while True:
        try:
            L = cholesky(K + jitter * np.eye(len(K)), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            pass
        jitter = 1e-10 if jitter == 0.0 else jitter * 10.0
        if jitter > JITTER_CAP:
            raise NotPositiveDefiniteError(
                f"kernel matrix not positive definite even with jitter {JITTER_CAP}"
            )


def _nll_and_grad(theta, X, Yc, sqd_per_dim):
    """Negative log marginal likelihood summed over output columns, plus
    its gradient in log-parameter space."""
    m, d = X.shape
    c = Yc.shape[1]
    variance = np.exp(theta[0])
    lengthscales = np.exp(theta[1 : 1 + d])
    noise = np.exp(theta[-1])

    scaled = sqd_per_dim / (lengthscales**2)[:, None, None]
    sq = scaled.sum(axis=0)
    K_se = variance * np.exp(-0.5 * sq)
    K = K_se + noise * np.eye(m)
    try:
        L = cholesky(K, lower=True)
    except np.linalg.LinAlgError:
        return 1e25, np.zeros_like(theta)

    A = cho_solve((L, True), Yc)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    nll = 0.5 * float((Yc * A).sum()) + 0.5 * c * logdet + 0.5 * m * c * np.log(2 * np.pi)

    Kinv = cho_solve((L, True), np.eye(m))
    W = c * Kinv - A @ A.T  # dNLL/dtheta_j = 0.5 * sum(W * dK/dtheta_j)

    grad = np.empty_like(theta)
    grad[0] = 0.5 * float((W * K_se).sum())
    for j in range(d):
        dK = K_se * scaled[j]
        grad[1 + j] = 0.5 * float((W * dK).sum())
    grad[-1] = 0.5 * float(np.trace(W)) * noise
    return nll, grad


def _training_arrays(pmap: PropertyMap):
    states = pmap.simulated_states()
    if len(states) < 2:
        raise GpFitError(f"need at least 2 simulated entries, found {len(states)}")
    X_raw = np.asarray(states, dtype=np.float64)
    if len(np.unique(X_raw, axis=0)) != len(X_raw):
        raise GpFitError("duplicate training states")
    Y = np.stack([pmap.distribution(s).probs for s in states])
    return states, X_raw, Y


def fit_gp(pmap: PropertyMap, config: KernelConfig | None = None) -> GpModel:
    """Condition a shared-kernel multi-output GP on the simulated entries.

    Hyperparameters are either taken from the config or optimised by
    multi-start L-BFGS-B ascent on the log marginal likelihood with the
    module-level bound constraints.
    """
    config = config or KernelConfig()
    _, X_raw, Y = _training_arrays(pmap)
    m, d = X_raw.shape

    x_mean = X_raw.mean(axis=0)
    x_std = X_raw.std(axis=0)
    x_std[x_std == 0.0] = 1.0
    X = (X_raw - x_mean) / x_std

    y_mean = Y.mean(axis=0)
    Yc = Y - y_mean

    ls0 = np.broadcast_to(
        np.atleast_1d(np.asarray(config.lengthscales, dtype=np.float64)), (d,)
    ).copy()

    if config.optimize:
        sqd_per_dim = (X[:, None, :] - X[None, :, :]) ** 2
        sqd_per_dim = np.moveaxis(sqd_per_dim, 2, 0)  # [d, m, m]
        lo = np.log([VARIANCE_BOUNDS[0]] + [LENGTHSCALE_BOUNDS[0]] * d + [NOISE_BOUNDS[0]])
        hi = np.log([VARIANCE_BOUNDS[1]] + [LENGTHSCALE_BOUNDS[1]] * d + [NOISE_BOUNDS[1]])
        bounds = list(zip(lo, hi))

        theta0 = np.log(
            np.concatenate(
                (
                    [np.clip(config.variance, *VARIANCE_BOUNDS)],
                    np.clip(ls0, *LENGTHSCALE_BOUNDS),
                    [np.clip(config.noise_variance, *NOISE_BOUNDS)],
                )
            )
        )
        starts = [np.clip(theta0, lo, hi)]
        rng = np.random.Generator(
            Philox(SeedSequence(config.seed, spawn_key=(_HYPEROPT_STREAM,)))
        )
        for _ in range(max(config.restarts - 1, 0)):
            starts.append(rng.uniform(lo, hi))

        best = None
        for theta in starts:
            res = minimize(
                _nll_and_grad,
                theta,
                args=(X, Yc, sqd_per_dim),
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": config.max_iter},
            )
            if best is None or res.fun < best.fun:
                best = res
        variance = float(np.exp(best.x[0]))
        lengthscales = np.exp(best.x[1 : 1 + d])
        noise = float(np.exp(best.x[-1]))
    else:
        variance = float(config.variance)
        lengthscales = ls0
        noise = float(config.noise_variance)

    K = _kernel(X, X, variance, lengthscales) + noise * np.eye(m)
    L, jitter = _chol_with_jitter(K)
    alpha = cho_solve((L, True), Yc)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    lml = (
        -0.5 * float((Yc * alpha).sum())
        - 0.5 * Y.shape[1] * logdet
        - 0.5 * m * Y.shape[1] * np.log(2 * np.pi)
    )
    return GpModel(
        x_mean=x_mean,
        x_std=x_std,
        X=X,
        Y=Y,
        y_mean=y_mean,
        variance=variance,
        lengthscales=lengthscales,
        noise_variance=noise,
        L=L,
        alpha=alpha,
        jitter=jitter,
        log_marginal_likelihood=lml,
    )


def predict(model: GpModel, states) -> list:
    """Posterior-mean distributions at the given states, clipped to
    [PROB_FLOOR, 1] and renormalised; provenance of the results is
    'imputed' (sample_count 0)."""
    Xs = model.standardize(states)
    Ks = _kernel(Xs, model.X, model.variance, model.lengthscales)
    mean = model.y_mean + Ks @ model.alpha
    clipped = np.clip(mean, PROB_FLOOR, 1.0)
    clipped /= clipped.sum(axis=1, keepdims=True)
    return [SatisfactionDistribution(probs=row, sample_count=0) for row in clipped]


def posterior_variance(model: GpModel, states) -> np.ndarray:
    """Shared posterior variance at each state (same for every output column)."""
    Xs = model.standardize(states)
    Ks = _kernel(Xs, model.X, model.variance, model.lengthscales)
    V = solve_triangular(model.L, Ks.T, lower=True)
    prior = model.variance
    return np.maximum(prior - np.einsum("ij,ij->j", V, V), 0.0)


def impute_map(
    pmap: PropertyMap, all_states, config: KernelConfig | None = None
) -> PropertyMap:
    """Extend the map with GP-imputed entries for every state not present.

    Returns the input map unchanged (and skips fitting entirely) when
    there is nothing to impute.
    """
    missing = [tuple(int(c) for c in s) for s in all_states]
    missing = [s for s in missing if s not in pmap.entries]
    if not missing:
        return pmap
    model = fit_gp(pmap, config)
    dists = predict(model, missing)
    out = PropertyMap(formula_names=pmap.formula_names)
    for state, (dist, prov) in pmap.entries.items():
        out.add(state, dist, prov)
    for state, dist in zip(missing, dists):
        out.add(state, dist, IMPUTED)
    return out
