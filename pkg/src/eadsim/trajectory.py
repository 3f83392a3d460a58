"""Monte Carlo trajectories of the measured loop.

Every step injects a lossy p-squeezed ancilla, mixes it with the target on
the beam splitter, samples the leaked x-quadrature, conditions the target on
the outcome and applies the round-trip loss.  The recorded outcomes are fed
forward as one final x-displacement ``sum_k g_k x_k``.

Internally the target is kept in a moving frame displaced by the partial
correction accumulated so far, which keeps the conditional state centred and
the Fock truncation small.  Displacements commute through the Gaussian loop
operations, so the frame is pure bookkeeping: outcomes are converted back to
the lab frame and the final state equals the corrected state exactly.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .eads import LoopConfig, feedforward_gains, output_moments, output_state
from .fockspace import (
    FockDensityMatrix,
    ImpossibleOutcomeError,
    fidelity,
    _moment_operators,
    beamsplitter_elements,
    displacement_unitary,
    hermite_functions,
    loss_channel,
    loss_kraus,
    quadrature_operators,
    squeezed_vacuum,
)

log = logging.getLogger(__name__)

TARGET_CUTOFF = 20
ANCILLA_CUTOFF = 50
SAMPLING_POINTS = 1201
MAX_RETRIES = 8
MAX_DISCARD_FRACTION = 1e-3
ORACLE_FIDELITY = 0.99
ORACLE_SIGMAS = 3.0
# absolute slack for moments that vanish identically in both engines
MOMENT_ATOL = 1e-9
MOMENT_NAMES = ("x", "p", "xx", "pp", "xp")
CHUNK_SIZE = 250
WORKERS_ENV = "EADS_WORKERS"


class EnsembleQualityError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrajectoryRecord:
    """One run of the loop.

    ``corrected_state`` is the target after the feedforward displacement;
    ``conditional_state`` (computed on demand in an enlarged Fock space) is the
    state before it.
    """

    outcomes: np.ndarray
    corrected_state: FockDensityMatrix
    correction: float
    weight: float
    top_population: float = 0.0
    pad: int = 40

    @cached_property
    def conditional_state(self) -> FockDensityMatrix:
        big = self.corrected_state.dim + self.pad
        u = displacement_unitary(-self.correction, 0.0, big)
        rho = self.corrected_state.embed(big).data
        return FockDensityMatrix(u @ rho @ u.conj().T)


@dataclass(frozen=True)
class EnsembleResult:
    mean_state: FockDensityMatrix
    n_trajectories: int
    seed: int
    outcomes: np.ndarray
    corrections: np.ndarray
    log_weights: np.ndarray
    # per-trajectory <x>, <p>, <x^2>, <p^2>, <(xp+px)/2> of the corrected state
    traj_moments: np.ndarray
    n_discarded: int = 0
    max_top_population: float = 0.0

    @property
    def discard_fraction(self) -> float:
        total = self.n_trajectories + self.n_discarded
        return self.n_discarded / total if total else 0.0

    def moment_estimates(self) -> tuple[np.ndarray, np.ndarray]:
        """Ensemble means of the per-trajectory moments and their standard errors."""
        m = self.traj_moments
        n = m.shape[0]
        se = m.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(m.shape[1], np.nan)
        return m.mean(axis=0), se


class LoopKernel:
    """Precomputed tensors for one loop configuration and set of cutoffs."""

    def __init__(self, cfg: LoopConfig, dim: int = TARGET_CUTOFF,
                 ancilla_dim: int = ANCILLA_CUTOFF, pad: int = 40):
        self.cfg = cfg
        self.dim = dim
        self.pad = pad
        eb, el = cfg.eta_BS, cfg.eta_loop
        self.t_in = math.sqrt(1 - eb)
        self.t_anc = math.sqrt(eb)

        sq = squeezed_vacuum(cfg.r_a, ancilla_dim)
        sigma = loss_channel(sq.density(), cfg.eta_a).data
        lam, vecs = np.linalg.eigh(0.5 * (sigma + sigma.conj().T))
        keep = lam > 1e-12 * lam.max()
        self.lam = lam[keep] / lam[keep].sum()
        comps = vecs[:, keep].T

        self.leak_dim = dim + ancilla_dim - 1
        u = beamsplitter_elements(float(eb), dim, ancilla_dim, dim, self.leak_dim)
        # kraus[j, a', b', a] = sqrt(lam_j) sum_b <a', b'|U|a, b> s_j[b]
        comps = comps * np.sqrt(self.lam)[:, None]
        self.kraus = np.einsum("ABab,jb->jABa", u, comps, optimize=True)
        if np.abs(self.kraus.imag).max() < 1e-14:
            self.kraus = self.kraus.real.copy()
        # leak index first, for contracting with the quadrature wavefunction
        self._kraus_by_leak = np.ascontiguousarray(
            self.kraus.transpose(2, 0, 1, 3).reshape(self.leak_dim, -1))

        self.loss = loss_kraus(el, dim)

        half = math.sqrt(2 * dim + 1) + 6.0
        self.xs = np.linspace(-half, half, SAMPLING_POINTS)
        self.psi_grid = hermite_functions(dim, self.xs).T

        sd = math.sqrt(cfg.ancilla_x_variance)
        self.anc_xs = np.linspace(-8 * sd, 8 * sd, SAMPLING_POINTS)
        psi_anc = hermite_functions(ancilla_dim, self.anc_xs).T
        anc_pdf = np.einsum("gi,ij,gj->g", psi_anc, sigma, psi_anc.conj()).real
        self.anc_cdf = _cdf(self.anc_xs, anc_pdf)

        # displacement along x is exp(-i d p); diagonalize p once in the padded space
        _, p = quadrature_operators(dim + pad)
        self.p_eig, self.p_vec = np.linalg.eigh(p)

        g0 = math.sqrt(el) * math.sqrt((1 - eb) / eb)
        self.gain0 = cfg.gain_scale * g0
        self.frame_decay = math.sqrt(el / eb)
        self.frame_carry = math.sqrt(eb * el)

    def displace(self, rho: np.ndarray, d: float) -> np.ndarray:
        if d == 0.0:
            return rho
        v = self.p_vec
        u = ((v[: self.dim] * np.exp(-1j * d * self.p_eig)) @ v[: self.dim].conj().T)
        # x-displacements are real in the Fock basis
        if not np.iscomplexobj(rho):
            u = u.real
        return u @ rho @ u.conj().T

    def target_marginal_cdf(self, rho: np.ndarray) -> np.ndarray:
        # the wavefunctions are real, so only the symmetric real part contributes
        pdf = np.sum((self.psi_grid @ rho.real) * self.psi_grid, axis=1)
        return _cdf(self.xs, np.clip(pdf, 0, None))

    def condition(self, rho: np.ndarray, x: float) -> tuple[np.ndarray, float]:
        psi = _hermite_at(self.leak_dim, x)
        k = (psi @ self._kraus_by_leak).reshape(self.lam.size, self.dim, self.dim)
        cond = np.matmul(np.matmul(k, rho), k.conj().transpose(0, 2, 1)).sum(axis=0)
        weight = float(np.trace(cond).real)
        if not weight > 1e-300:
            raise ImpossibleOutcomeError(f"leak outcome {x} has likelihood {weight:.3e}")
        return cond / weight, weight

    def apply_loss(self, rho: np.ndarray) -> np.ndarray:
        if self.cfg.eta_loop == 1.0:
            return rho
        k = self.loss
        return np.matmul(np.matmul(k, rho), k.transpose(0, 2, 1)).sum(axis=0)

    def unconditioned_step(self, rho: np.ndarray) -> np.ndarray:
        """Deterministic map obtained by discarding the leak (no feedforward)."""
        out = np.einsum("jABa,ac,jDBc->AD", self.kraus, rho, self.kraus.conj(), optimize=True)
        return self.apply_loss(out)


def _hermite_at(nmax: int, x: float) -> np.ndarray:
    out = [0.0] * nmax
    out[0] = math.pi ** -0.25 * math.exp(-0.5 * x * x)
    if nmax > 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(1, nmax - 1):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * x * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return np.array(out)


def _cdf(xs: np.ndarray, pdf: np.ndarray) -> np.ndarray:
    c = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(xs))])
    return c / c[-1]


def _inverse_cdf(xs: np.ndarray, cdf: np.ndarray, u: float) -> float:
    return float(np.interp(u, cdf, xs))


@lru_cache(maxsize=8)
def _kernel(cfg: LoopConfig, dim: int, ancilla_dim: int) -> LoopKernel:
    return LoopKernel(cfg, dim, ancilla_dim)


def _run(kernel: LoopKernel, rho0: np.ndarray, rng: np.random.Generator):
    cfg = kernel.cfg
    rho = rho0
    frame = 0.0
    outcomes = np.empty(cfg.N)
    log_w = 0.0
    top = 0.0
    for k in range(cfg.N):
        cdf_in = kernel.target_marginal_cdf(rho)
        for attempt in range(MAX_RETRIES + 1):
            u_in, u_anc = rng.random(2)
            xin = _inverse_cdf(kernel.xs, cdf_in, u_in)
            xanc = _inverse_cdf(kernel.anc_xs, kernel.anc_cdf, u_anc)
            x_frame = kernel.t_in * xin - kernel.t_anc * xanc
            try:
                cond, w = kernel.condition(rho, x_frame)
                break
            except ImpossibleOutcomeError:
                if attempt == MAX_RETRIES:
                    return None
        log_w += math.log(w)
        x_lab = x_frame - kernel.t_in * frame
        outcomes[k] = x_lab
        rho = kernel.apply_loss(cond)
        new_frame = kernel.frame_decay * frame + kernel.gain0 * x_lab
        rho = kernel.displace(rho, new_frame - kernel.frame_carry * frame)
        rho = rho / np.trace(rho).real
        frame = new_frame
        top = max(top, float(rho[-1, -1].real))
    return rho, outcomes, frame, log_w, top


def run_trajectory(input_state: FockDensityMatrix, cfg: LoopConfig,
                   rng: np.random.Generator, ancilla_dim: int = ANCILLA_CUTOFF) -> TrajectoryRecord | None:
    """Simulate one trajectory; returns None if an outcome could not be sampled."""
    if cfg.N < 1:
        raise ValueError("a trajectory needs N >= 1")
    kernel = _kernel(cfg, input_state.dim, ancilla_dim)
    res = _run(kernel, _working_copy(input_state.data), rng)
    if res is None:
        return None
    rho, outcomes, frame, log_w, top = res
    correction = float(np.dot(feedforward_gains(cfg), outcomes))
    return TrajectoryRecord(outcomes, FockDensityMatrix(rho), correction, math.exp(log_w),
                            top, kernel.pad)


def apply_correction(rec: TrajectoryRecord, cfg: LoopConfig) -> FockDensityMatrix:
    """Displace the conditional state by the accumulated correction along x."""
    cond = rec.conditional_state
    u = displacement_unitary(rec.correction, 0.0, cond.dim)
    out = (u @ cond.data @ u.conj().T)[: rec.corrected_state.dim, : rec.corrected_state.dim]
    return FockDensityMatrix(out / np.trace(out).real)


def _working_copy(data: np.ndarray) -> np.ndarray:
    """Real arithmetic when the input is real; the loop operators are all real."""
    if np.abs(data.imag).max() == 0.0:
        return data.real.copy()
    return np.array(data)


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trajectory ``index``; no dependence on scheduling."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _run_chunk(args):
    rho0, cfg, ancilla_dim, seed, start, stop = args
    kernel = _kernel(cfg, rho0.shape[0], ancilla_dim)
    ops = _moment_operators(rho0.shape[0])
    acc = np.zeros_like(rho0)
    outs, corrs, logws, moms = [], [], [], []
    discarded = 0
    top = 0.0
    gains = feedforward_gains(cfg)
    for i in range(start, stop):
        res = _run(kernel, rho0, trajectory_rng(seed, i))
        if res is None:
            discarded += 1
            continue
        rho, outcomes, frame, log_w, t = res
        acc += rho
        outs.append(outcomes)
        corrs.append(float(np.dot(gains, outcomes)))
        logws.append(log_w)
        moms.append([np.trace(rho @ op).real for op in ops])
        top = max(top, t)
    return acc, outs, corrs, logws, moms, discarded, top


def _workers(workers: int | None) -> int:
    if workers is not None:
        return max(1, int(workers))
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def run_ensemble(input_state: FockDensityMatrix, cfg: LoopConfig, n_traj: int, seed: int,
                 ancilla_dim: int = ANCILLA_CUTOFF, workers: int | None = None) -> EnsembleResult:
    """Average corrected trajectories.

    Trajectory ``i`` always draws from the stream derived from ``(seed, i)`` and
    chunks are reduced in index order, so the result is bit-identical for any
    worker count.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if cfg.N < 1:
        raise ValueError("an ensemble needs N >= 1")
    rho0 = _working_copy(input_state.data)
    jobs = [(rho0, cfg, ancilla_dim, seed, s, min(s + CHUNK_SIZE, n_traj))
            for s in range(0, n_traj, CHUNK_SIZE)]
    nw = _workers(workers)
    if nw > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=nw) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]

    acc = np.zeros_like(rho0)
    outs, corrs, logws, moms = [], [], [], []
    discarded = 0
    top = 0.0
    for a, o, c, lw, m, d, t in parts:
        acc += a
        outs += o
        corrs += c
        logws += lw
        moms += m
        discarded += d
        top = max(top, t)
    kept = len(outs)
    total = kept + discarded
    if kept == 0 or discarded / total >= MAX_DISCARD_FRACTION:
        raise EnsembleQualityError(f"{discarded} of {total} trajectories discarded")
    if top > 1e-4:
        log.warning("top Fock population reached %.2e during the ensemble", top)
    mean = acc / kept
    return EnsembleResult(
        mean_state=FockDensityMatrix(mean / np.trace(mean).real),
        n_trajectories=kept,
        seed=seed,
        outcomes=np.array(outs).reshape(kept, cfg.N),
        corrections=np.array(corrs),
        log_weights=np.array(logws),
        traj_moments=np.array(moms),
        n_discarded=discarded,
        max_top_population=top,
    )


def ensemble_summary(result: EnsembleResult) -> dict[str, float]:
    from .fockspace import quadrature_moments

    mean, cov = quadrature_moments(result.mean_state)
    return {"mean_x": mean[0], "mean_p": mean[1], "var_x": cov[0, 0], "var_p": cov[1, 1]}


@dataclass(frozen=True)
class MomentCheck:
    name: str
    estimate: float
    std_error: float
    reference: float

    @property
    def passed(self) -> bool:
        return abs(self.estimate - self.reference) <= ORACLE_SIGMAS * self.std_error + MOMENT_ATOL


@dataclass(frozen=True)
class OracleReport:
    N: int
    fidelity: float
    moments: tuple[MomentCheck, ...]
    ensemble: EnsembleResult

    @property
    def passed(self) -> bool:
        return self.fidelity >= ORACLE_FIDELITY and all(m.passed for m in self.moments)


def compare_engines(input_state: FockDensityMatrix, cfg: LoopConfig, n_traj: int, seed: int,
                    variant: str = "suppressed", workers: int | None = None) -> OracleReport:
    """Run the ensemble and check it against the analytic channel output.

    Moments of the analytic side come straight from the channel map of the
    input's moments; the fidelity uses the phase-space output projected back
    onto the Fock basis.
    """
    res = run_ensemble(input_state, cfg, n_traj, seed, workers=workers)
    ana = output_state(cfg, variant, dim=input_state.dim)
    f = fidelity(res.mean_state, ana)
    mean, cov = output_moments(cfg, variant, input_state)
    ref = (mean[0], mean[1], cov[0, 0] + mean[0] ** 2, cov[1, 1] + mean[1] ** 2,
           cov[0, 1] + mean[0] * mean[1])
    est, se = res.moment_estimates()
    checks = tuple(MomentCheck(n, float(e), float(s), float(r))
                   for n, e, s, r in zip(MOMENT_NAMES, est, se, ref))
    return OracleReport(cfg.N, f, checks, res)
