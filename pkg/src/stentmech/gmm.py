"""Four-component Gaussian mixture over intimal Hounsfield units.

The mixture is seeded with k-means from fixed initial means (no randomness
anywhere), fitted with EM, and queried for hard or soft component
assignment.  Components are relabeled by ascending mean after fitting so
that index order always matches the nominal HU order of the plaque classes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import EmptySampleSetError, NonFiniteLikelihoodError

UNLABELED = -1  # sentinel for voxels outside the intima mask

_LOG_2PI = float(np.log(2.0 * np.pi))


class PlaqueComponent(IntEnum):
    """Plaque tissue classes in ascending order of nominal HU."""

    LIPID_RICH = 0
    FIBROTIC = 1
    NORMAL_INTIMA = 2
    CALCIFICATION = 3


@dataclass(frozen=True)
class GaussianComponent:
    mean: float
    variance: float
    weight: float


@dataclass(frozen=True)
class MixtureModel:
    """Fitted mixture; ``log_likelihood`` is the mean per-sample value and
    ``history`` the value at every EM iteration (for convergence checks)."""

    components: tuple[GaussianComponent, ...]
    log_likelihood: float
    iterations: int
    history: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.components) != len(PlaqueComponent):
            raise ValueError("exactly four components expected")
        w = sum(c.weight for c in self.components)
        if abs(w - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {w!r}")

    @property
    def means(self) -> np.ndarray:
        return np.array([c.mean for c in self.components])

    @property
    def variances(self) -> np.ndarray:
        return np.array([c.variance for c in self.components])

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])


def _as_samples(samples) -> np.ndarray:
    arr = np.asarray(samples, dtype=float).ravel()
    if arr.size == 0:
        raise EmptySampleSetError("no HU samples")
    return arr


def kmeans_init(samples, initial_means, max_iter: int = 100,
                variance_floor: float = 1.0, weight_epsilon: float = 1e-6,
                ) -> list[tuple[float, float, float]]:
    """Lloyd iterations from fixed seeds; returns (mean, variance, weight)
    per component.

    Empty clusters keep their seed mean with floor variance and epsilon
    weight; weights are renormalized to sum to one.
    """
    x = _as_samples(samples)
    seeds = np.asarray(initial_means, dtype=float)
    if seeds.shape != (len(PlaqueComponent),):
        raise ValueError("exactly four initial means expected")
    if np.any(np.diff(seeds) <= 0.0):
        raise ValueError("initial means must be strictly ascending")

    means = seeds.copy()
    assign = None
    for _ in range(max_iter):
        new_assign = np.argmin(np.abs(x[:, None] - means[None, :]), axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for k in range(len(means)):
            sel = x[assign == k]
            if sel.size:
                means[k] = sel.mean()

    triples = []
    weights = np.empty(len(means))
    for k in range(len(means)):
        sel = x[assign == k]
        if sel.size:
            var = max(float(sel.var()), variance_floor)
            triples.append((float(sel.mean()), var, 0.0))
            weights[k] = sel.size / x.size
        else:
            triples.append((float(seeds[k]), variance_floor, 0.0))
            weights[k] = weight_epsilon
    weights /= weights.sum()
    return [(m, v, float(w)) for (m, v, _), w in zip(triples, weights)]


def _log_densities(x: np.ndarray, means, variances, weights) -> np.ndarray:
    """log(w_k) + log N(x; mu_k, var_k), shape (n, 4)."""
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    with np.errstate(divide="ignore"):
        logw = np.log(np.asarray(weights, dtype=float))
    d = x[:, None] - means[None, :]
    return logw[None, :] - 0.5 * (_LOG_2PI + np.log(variances))[None, :] \
        - 0.5 * d * d / variances[None, :]


def fit_em(samples, init, tol: float = 1e-6, max_iter: int = 500,
           variance_floor: float = 1.0) -> MixtureModel:
    """EM for the 1D four-component mixture.

    Stops when the mean log-likelihood changes by less than ``tol`` or after
    ``max_iter`` iterations; variances never drop below ``variance_floor``.
    """
    x = _as_samples(samples)
    if x.size < len(PlaqueComponent):
        raise EmptySampleSetError(f"need at least 4 samples, got {x.size}")
    if tol <= 0:
        raise ValueError("tol must be positive")

    means = np.array([t[0] for t in init], dtype=float)
    variances = np.maximum([t[1] for t in init], variance_floor)
    weights = np.array([t[2] for t in init], dtype=float)
    weights = weights / weights.sum()

    prev_ll = -np.inf
    iterations = 0
    ll = prev_ll
    history = []
    for iterations in range(1, max_iter + 1):
        logd = _log_densities(x, means, variances, weights)
        shift = logd.max(axis=1, keepdims=True)
        lse = shift[:, 0] + np.log(np.exp(logd - shift).sum(axis=1))
        ll = float(lse.mean())
        if not np.isfinite(ll):
            raise NonFiniteLikelihoodError(f"log-likelihood became {ll}")
        history.append(ll)
        if abs(ll - prev_ll) < tol:
            break
        prev_ll = ll

        gamma = np.exp(logd - lse[:, None])  # responsibilities, rows sum to 1
        nk = gamma.sum(axis=0)
        populated = nk > 0.0
        new_means = means.copy()
        new_vars = np.full_like(variances, variance_floor)
        np.divide(gamma.T @ x, nk, out=new_means, where=populated)
        dev = x[:, None] - new_means[None, :]
        second = (gamma * dev * dev).sum(axis=0)
        np.divide(second, nk, out=new_vars, where=populated)
        means = new_means
        variances = np.maximum(new_vars, variance_floor)
        weights = nk / x.size

    order = np.argsort(means, kind="stable")
    comps = tuple(GaussianComponent(float(means[k]), float(variances[k]),
                                    float(weights[k])) for k in order)
    return MixtureModel(components=comps, log_likelihood=ll, iterations=iterations,
                        history=tuple(history))


def posteriors(model: MixtureModel, hu) -> np.ndarray:
    """Component responsibilities for HU value(s); last axis sums to 1."""
    x = np.atleast_1d(np.asarray(hu, dtype=float))
    logd = _log_densities(x.ravel(), model.means, model.variances, model.weights)
    shift = logd.max(axis=1, keepdims=True)
    p = np.exp(logd - shift)
    p /= p.sum(axis=1, keepdims=True)
    return p.reshape(np.shape(hu) + (len(PlaqueComponent),))


def classify(model: MixtureModel, hu):
    """Most likely component; exact ties go to the lower-HU component."""
    labels = np.argmax(posteriors(model, hu), axis=-1)
    if np.isscalar(hu) or np.ndim(hu) == 0:
        return PlaqueComponent(int(labels))
    return labels.astype(np.int8)


def classify_volume(bundle, model: MixtureModel) -> np.ndarray:
    """Dense component-label map over the case volume.

    Masked voxels carry their PlaqueComponent value, everything else the
    UNLABELED sentinel.  Shape matches the volume (x, y, z).
    """
    hu = bundle.volume.values
    mask = bundle.mask.flags.astype(bool)
    labels = np.full(hu.shape, UNLABELED, dtype=np.int8)
    if mask.any():
        labels[mask] = classify(model, hu[mask].astype(float))
    return labels
