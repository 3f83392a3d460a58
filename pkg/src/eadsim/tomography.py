"""Simulated homodyne tomography.

Quadrature samples are drawn at equally spaced phases from the exact
homodyne marginals of a Fock-basis state and reconstructed with the iterative
maximum-likelihood (R rho R) algorithm on binned data.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .fockspace import (
    FockDensityMatrix,
    FockError,
    fidelity,
    homodyne_pdf,
    quadrature_vectors,
)
from .phasespace import GridSpec, w0_metric, wigner_from_fock

N_PHASES = 12
N_PER_PHASE = 1500
MLE_CUTOFF = 12
MLE_ITERS = 500
N_BINS = 200
BIN_HALF_WIDTH = 6.0
STOP_GAIN = 1e-10
MONOTONE_TOL = 1e-9
MIN_BOOTSTRAP = 50
# sampling grid for the inverse-CDF draw of each phase's marginal
SAMPLING_POINTS = 4001


class TomographyError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureDataset:
    """Homodyne record: one (theta, x) pair per sample, grouped by phase."""

    theta: np.ndarray
    x: np.ndarray
    phases: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float)
        xs = np.asarray(self.x, dtype=float)
        if th.shape != xs.shape or th.ndim != 1:
            raise TomographyError("theta and x must be 1-D arrays of equal length")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "x", xs)
        object.__setattr__(self, "phases", np.asarray(self.phases, dtype=float))

    def __len__(self) -> int:
        return self.x.size

    @property
    def counts(self) -> np.ndarray:
        return np.array([np.count_nonzero(self.theta == ph) for ph in self.phases])

    def at_phase(self, phase: float) -> np.ndarray:
        return self.x[self.theta == phase]

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.theta, self.x])

    @classmethod
    def from_array(cls, arr, seed: int | None = None) -> "QuadratureDataset":
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise TomographyError("expected an (n, 2) array of (theta, x) records")
        return cls(arr[:, 0], arr[:, 1], np.unique(arr[:, 0]), seed)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("theta,x\n")
            for th, x in zip(self.theta, self.x):
                fh.write(f"{th:.9g},{x:.9g}\n")

    @classmethod
    def from_csv(cls, path) -> "QuadratureDataset":
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls.from_array(arr)


def default_phases(n: int = N_PHASES) -> np.ndarray:
    return np.pi * np.arange(n) / n


def sample_dataset(rho, phases=None, n_per_phase: int = N_PER_PHASE,
                   seed: int = 0) -> QuadratureDataset:
    """Draw ``n_per_phase`` homodyne samples at each phase (default 12 over [0, pi))."""
    rho = rho if isinstance(rho, FockDensityMatrix) else FockDensityMatrix(np.asarray(rho))
    if not rho.is_valid():
        raise FockError("sample_dataset needs a valid density matrix")
    if n_per_phase < 1:
        raise TomographyError("n_per_phase must be >= 1")
    if phases is None:
        phases = default_phases()
    elif np.isscalar(phases):
        phases = default_phases(int(phases))
    phases = np.asarray(phases, dtype=float)
    if phases.size == 0:
        raise TomographyError("at least one phase is required")

    rng = np.random.default_rng(seed)
    half = math.sqrt(2 * rho.dim + 1) + 6.0
    xs = np.linspace(-half, half, SAMPLING_POINTS)
    thetas, samples = [], []
    for ph in phases:
        pdf = np.clip(homodyne_pdf(rho, float(ph), xs), 0.0, None)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(xs))])
        cdf /= cdf[-1]
        samples.append(np.interp(rng.random(n_per_phase), cdf, xs))
        thetas.append(np.full(n_per_phase, ph))
    return QuadratureDataset(np.concatenate(thetas), np.concatenate(samples), phases, seed)


def _bin_edges(x: np.ndarray, n_bins: int, half_width: float) -> np.ndarray:
    """Uniform bins over [-half_width, half_width], widened in whole bins to hold every sample."""
    width = 2 * half_width / n_bins
    reach = max(half_width, float(np.abs(x).max()) if x.size else 0.0)
    extra = math.ceil((reach - half_width) / width - 1e-12)
    n = n_bins + 2 * max(extra, 0)
    lo = -half_width - max(extra, 0) * width
    return lo + width * np.arange(n + 1)


def _binned_povm(data: QuadratureDataset, dim: int, n_bins: int, half_width: float):
    """Quadrature vectors and counts for every occupied (phase, bin) pair."""
    edges = _bin_edges(data.x, n_bins, half_width)
    centers = 0.5 * (edges[1:] + edges[:-1])
    width = edges[1] - edges[0]
    rows, counts = [], []
    for ph in data.phases:
        hist, _ = np.histogram(data.at_phase(ph), bins=edges)
        occupied = hist > 0
        if not occupied.any():
            continue
        rows.append(quadrature_vectors(dim, float(ph), centers[occupied]))
        counts.append(hist[occupied].astype(float))
    vecs = np.vstack(rows) * math.sqrt(width)
    return vecs, np.concatenate(counts)


def _probabilities(rho: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    return np.clip(np.sum((vecs @ rho) * vecs.conj(), axis=1).real, 1e-300, None)


def _log_likelihood(rho: np.ndarray, vecs: np.ndarray, counts: np.ndarray) -> float:
    return float(counts @ np.log(_probabilities(rho, vecs)))


def _r_operator(p: np.ndarray, vecs: np.ndarray, freqs: np.ndarray, n_phases: int) -> np.ndarray:
    # each phase's POVM resolves the identity, so the fixed point is R = 1
    w = freqs * n_phases / p
    return (vecs.conj().T * w) @ vecs


def mle_reconstruct(data: QuadratureDataset, D: int = MLE_CUTOFF, iters: int = MLE_ITERS,
                    n_bins: int = N_BINS, half_width: float = BIN_HALF_WIDTH,
                    tol: float = STOP_GAIN, history: list | None = None) -> FockDensityMatrix:
    """Maximum-likelihood density matrix on a D-dimensional Fock space.

    Each iteration takes the full R rho R step; if that lowers the likelihood it
    falls back to the diluted update (1 + eps R) rho (1 + eps R) with eps halved
    until the likelihood rises, so the likelihood sequence is non-decreasing.
    The log-likelihood after every iteration is appended to ``history``.
    """
    if iters < 1:
        raise TomographyError("iters must be >= 1")
    if not 1 <= D <= 20:
        raise TomographyError(f"reconstruction cutoff must lie in [1, 20], got {D}")
    if len(data) == 0 or data.phases.size == 0:
        raise TomographyError("dataset is empty")
    counts_per_phase = data.counts
    if np.any(counts_per_phase == 0):
        raise TomographyError("every listed phase needs at least one sample")

    vecs, counts = _binned_povm(data, D, n_bins, half_width)
    n_total = counts.sum()
    freqs = counts / n_total
    n_ph = data.phases.size
    eye = np.eye(D)

    def propose(m):
        m = m / np.trace(m).real
        m = 0.5 * (m + m.conj().T)
        p = _probabilities(m, vecs)
        return m, p, float(counts @ np.log(p))

    rho, p, ll = propose(eye / D)
    trace = [ll]
    for it in range(iters):
        r = _r_operator(p, vecs, freqs, n_ph)
        cand, p_new, ll_new = propose(r @ rho @ r)
        eps = 1.0
        while ll_new < ll and eps > 1e-8:
            g = eye + eps * r
            cand, p_new, ll_new = propose(g @ rho @ g)
            eps *= 0.5
        if ll_new < ll:
            break
        gain = ll_new - ll
        rho, p, ll = cand, p_new, ll_new
        trace.append(ll)
        if (it + 1) % 10 == 0:
            _check_monotone(trace)
        if gain / n_total < tol:
            break
    _check_monotone(trace)
    if history is not None:
        history.extend(trace)
    return FockDensityMatrix(rho)


def _check_monotone(trace: list) -> None:
    d = np.diff(trace)
    if d.size and d.min() < -MONOTONE_TOL * max(1.0, abs(trace[0])):
        raise AssertionError(f"log-likelihood decreased by {-d.min():.3e}")


class MaximumLikelihoodTomography(BaseEstimator):
    """Estimator wrapper around :func:`mle_reconstruct`.

    ``X`` is either a :class:`QuadratureDataset` or an ``(n, 2)`` array of
    ``(theta, x)`` records.
    """

    def __init__(self, cutoff: int = MLE_CUTOFF, max_iter: int = MLE_ITERS,
                 n_bins: int = N_BINS, half_width: float = BIN_HALF_WIDTH, tol: float = STOP_GAIN):
        self.cutoff = cutoff
        self.max_iter = max_iter
        self.n_bins = n_bins
        self.half_width = half_width
        self.tol = tol

    @staticmethod
    def _dataset(X) -> QuadratureDataset:
        return X if isinstance(X, QuadratureDataset) else QuadratureDataset.from_array(X)

    def fit(self, X, y=None):
        data = self._dataset(X)
        hist: list[float] = []
        self.density_matrix_ = mle_reconstruct(data, self.cutoff, self.max_iter, self.n_bins,
                                               self.half_width, self.tol, history=hist)
        self.log_likelihood_ = np.array(hist)
        self.n_iter_ = len(hist) - 1
        return self

    def score(self, X, y=None) -> float:
        """Mean log-likelihood per sample of ``X`` under the fitted state."""
        data = self._dataset(X)
        vecs, counts = _binned_povm(data, self.cutoff, self.n_bins, self.half_width)
        return _log_likelihood(self.density_matrix_.data, vecs, counts) / counts.sum()


def resample(data: QuadratureDataset, rng: np.random.Generator) -> QuadratureDataset:
    """Draw records with replacement within each phase."""
    th, xs = [], []
    for ph in data.phases:
        x = data.at_phase(ph)
        xs.append(x[rng.integers(0, x.size, x.size)])
        th.append(np.full(x.size, ph))
    return QuadratureDataset(np.concatenate(th), np.concatenate(xs), data.phases, data.seed)


def metric_function(metric: str, target, grid: GridSpec):
    if metric == "F":
        if target is None:
            raise TomographyError("metric 'F' needs a target state")
        return lambda rho: fidelity(rho.embed(max(rho.dim, target.dim)),
                                    target.embed(max(rho.dim, target.dim)))
    if metric == "W0":
        return lambda rho: w0_metric(wigner_from_fock(rho, grid, warn=False))
    raise TomographyError(f"unknown metric {metric!r}; expected 'F' or 'W0'")


def bootstrap_values(data: QuadratureDataset, metrics: dict, D: int = MLE_CUTOFF,
                     iters: int = MLE_ITERS, B: int = MIN_BOOTSTRAP, seed: int = 0) -> dict:
    """Evaluate several metric functions on the same B bootstrap reconstructions.

    Resample ``b`` draws from child ``b`` of ``SeedSequence(seed)``, so values do
    not depend on evaluation order.
    """
    if B < 1:
        raise TomographyError("B must be >= 1")
    out = {name: np.empty(B) for name in metrics}
    for b, child in enumerate(np.random.SeedSequence(seed).spawn(B)):
        rho = mle_reconstruct(resample(data, np.random.default_rng(child)), D, iters)
        for name, fn in metrics.items():
            out[name][b] = fn(rho)
    return out


def summarize(values: np.ndarray) -> tuple[float, float]:
    """Mean and sample standard deviation; the deviation is nan for a single value."""
    if values.size == 1:
        return float(values[0]), float("nan")
    return float(values.mean()), float(values.std(ddof=1))


def bootstrap_metric(data: QuadratureDataset, D: int = MLE_CUTOFF, iters: int = MLE_ITERS,
                     B: int = MIN_BOOTSTRAP, metric: str = "F", seed: int = 0,
                     target: FockDensityMatrix | None = None,
                     grid: GridSpec = GridSpec()) -> tuple[float, float]:
    """Mean and sample standard deviation of a metric over B bootstrap reconstructions."""
    if B < MIN_BOOTSTRAP:
        warnings.warn(f"B={B} is below the recommended {MIN_BOOTSTRAP} resamples; "
                      "the standard error is unreliable" + (" (undefined for B=1)" if B == 1 else ""),
                      stacklevel=2)
    fn = metric_function(metric, target, grid)
    return summarize(bootstrap_values(data, {metric: fn}, D, iters, B, seed)[metric])


def write_density_csv(rho: FockDensityMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("row,col,re,im\n")
        d = rho.data
        for i in range(rho.dim):
            for j in range(rho.dim):
                fh.write(f"{i},{j},{d[i, j].real:.9g},{d[i, j].imag:.9g}\n")


def read_density_csv(path) -> FockDensityMatrix:
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    dim = int(arr[:, :2].max()) + 1
    m = np.zeros((dim, dim), dtype=complex)
    m[arr[:, 0].astype(int), arr[:, 1].astype(int)] = arr[:, 2] + 1j * arr[:, 3]
    return FockDensityMatrix(m)
