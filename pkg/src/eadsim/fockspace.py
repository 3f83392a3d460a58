"""Truncated Fock-space linear algebra for single- and two-mode optical states.

Conventions are fixed: hbar = 1, x = (a + a^dag)/sqrt(2), p = (a - a^dag)/(i sqrt(2)),
so the vacuum has quadrature variance 1/2.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

HBAR = 1.0
VACUUM_VARIANCE = 0.5
DEFAULT_CUTOFF = 20
TWO_MODE_CUTOFF = 14
TRUNCATION_BUDGET = 1e-4

INPUT_KINDS = ("single_photon", "x_squeezed_photon", "p_squeezed_photon")


class FockError(ValueError):
    """Invalid argument for a Fock-space operation."""


class ImpossibleOutcomeError(FockError):
    """A homodyne outcome whose likelihood underflows."""


class TruncationWarning(UserWarning):
    """Population near the Fock cutoff exceeds the truncation budget."""


@dataclass(frozen=True)
class FockDensityMatrix:
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=complex)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise FockError(f"density matrix must be square, got shape {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.data).real)

    @property
    def populations(self) -> np.ndarray:
        return np.diag(self.data).real.copy()

    @property
    def top_population(self) -> float:
        return float(self.data[-1, -1].real)

    def normalized(self) -> "FockDensityMatrix":
        return FockDensityMatrix(self.data / np.trace(self.data).real)

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.data - self.data.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.data + self.data.conj().T))[0])

    def is_valid(self, trace_tol: float = 1e-8) -> bool:
        return (
            self.hermiticity_defect() <= 1e-10
            and abs(self.trace - 1.0) <= trace_tol
            and self.min_eigenvalue() >= -1e-8
        )

    def expect(self, op: np.ndarray) -> complex:
        return complex(np.trace(self.data @ op))

    def embed(self, dim: int) -> "FockDensityMatrix":
        """Zero-pad (or crop) to a different cutoff."""
        out = np.zeros((dim, dim), dtype=complex)
        d = min(dim, self.dim)
        out[:d, :d] = self.data[:d, :d]
        return FockDensityMatrix(out)

    @classmethod
    def from_pure(cls, psi: "PureFockVector | np.ndarray") -> "FockDensityMatrix":
        v = psi.amplitudes if isinstance(psi, PureFockVector) else np.asarray(psi, dtype=complex)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def fock(cls, n: int, dim: int = DEFAULT_CUTOFF) -> "FockDensityMatrix":
        return cls.from_pure(basis(n, dim))

    @classmethod
    def vacuum(cls, dim: int = DEFAULT_CUTOFF) -> "FockDensityMatrix":
        return cls.fock(0, dim)


@dataclass(frozen=True)
class PureFockVector:
    amplitudes: np.ndarray

    def __post_init__(self):
        v = np.array(self.amplitudes, dtype=complex).ravel()
        norm = np.linalg.norm(v)
        if abs(norm - 1.0) > 1e-10:
            raise FockError(f"state vector not normalized (norm {norm:.12g})")
        v.setflags(write=False)
        object.__setattr__(self, "amplitudes", v)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @classmethod
    def normalize(cls, v: np.ndarray) -> "PureFockVector":
        v = np.asarray(v, dtype=complex)
        return cls(v / np.linalg.norm(v))

    def density(self) -> FockDensityMatrix:
        return FockDensityMatrix.from_pure(self)


@dataclass(frozen=True)
class TwoModeState:
    """Joint density matrix with mode ordering A (x) B, index a * dim_b + b."""

    data: np.ndarray
    dims: tuple[int, int]

    def __post_init__(self):
        da, db = (int(d) for d in self.dims)
        data = np.array(self.data, dtype=complex)
        if data.shape != (da * db, da * db):
            raise FockError(f"joint matrix shape {data.shape} does not match dims {(da, db)}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dims", (da, db))

    @classmethod
    def product(cls, rho_a: FockDensityMatrix, rho_b: FockDensityMatrix) -> "TwoModeState":
        return cls(np.kron(rho_a.data, rho_b.data), (rho_a.dim, rho_b.dim))

    @property
    def trace(self) -> float:
        return float(np.trace(self.data).real)

    def tensor(self) -> np.ndarray:
        da, db = self.dims
        return self.data.reshape(da, db, da, db)

    def partial_trace(self, keep: str = "A") -> FockDensityMatrix:
        t = self.tensor()
        if keep == "A":
            return FockDensityMatrix(np.einsum("abcb->ac", t))
        if keep == "B":
            return FockDensityMatrix(np.einsum("abad->bd", t))
        raise FockError(f"mode must be 'A' or 'B', got {keep!r}")


def _check_cutoff(dim: int) -> None:
    if int(dim) != dim or dim < 2:
        raise FockError(f"cutoff must be an integer >= 2, got {dim}")


def _as_density(rho) -> FockDensityMatrix:
    if isinstance(rho, FockDensityMatrix):
        return rho
    if isinstance(rho, PureFockVector):
        return rho.density()
    return FockDensityMatrix(rho)


def basis(n: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[n] = 1.0
    return v


@lru_cache(maxsize=64)
def _annihilation(dim: int) -> np.ndarray:
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)
    a.setflags(write=False)
    return a


def annihilation(dim: int) -> np.ndarray:
    """Lowering operator with sqrt(n) at (n-1, n)."""
    _check_cutoff(dim)
    return _annihilation(dim).copy()


def quadrature_operators(dim: int) -> tuple[np.ndarray, np.ndarray]:
    a = _annihilation(dim)
    ad = a.conj().T
    return (a + ad) / np.sqrt(2), (a - ad) / (1j * np.sqrt(2))


@lru_cache(maxsize=32)
def _moment_operators(dim: int) -> tuple[np.ndarray, ...]:
    # built one level higher and cropped so that x^2 is exact on the truncated space
    x, p = quadrature_operators(dim + 1)
    ops = (x[:dim, :dim], p[:dim, :dim], (x @ x)[:dim, :dim], (p @ p)[:dim, :dim],
           (0.5 * (x @ p + p @ x))[:dim, :dim])
    for op in ops:
        op.setflags(write=False)
    return ops


def quadrature_moments(rho) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and symmetrized covariance matrix of (x, p)."""
    rho = _as_density(rho)
    x, p, xx, pp, xp = _moment_operators(rho.dim)
    d = rho.data
    mx = np.trace(d @ x).real
    mp = np.trace(d @ p).real
    cxx = np.trace(d @ xx).real - mx * mx
    cpp = np.trace(d @ pp).real - mp * mp
    cxp = np.trace(d @ xp).real - mx * mp
    return np.array([mx, mp]), np.array([[cxx, cxp], [cxp, cpp]])


def photon_number(rho) -> float:
    rho = _as_density(rho)
    return float(np.dot(np.arange(rho.dim), rho.populations))


def _expm_padded(generator, dim: int, pad: int) -> np.ndarray:
    big = dim + pad
    u = expm(generator(big))
    return u[:dim, :dim]


def _squeeze_generator(r: float):
    def gen(dim):
        a = _annihilation(dim)
        ad = a.conj().T
        return 0.5 * r * (ad @ ad - a @ a)
    return gen


def _displacement_generator(dx: float, dp: float):
    alpha = (dx + 1j * dp) / np.sqrt(2)

    def gen(dim):
        a = _annihilation(dim)
        return alpha * a.conj().T - np.conj(alpha) * a
    return gen


def squeeze_unitary(r: float, dim: int = DEFAULT_CUTOFF, pad: int = 0) -> np.ndarray:
    """Squeezer acting as x -> e^r x, p -> e^-r p (r > 0 squeezes p).

    With ``pad == 0`` the truncated generator is exponentiated, giving an exactly
    unitary matrix.  ``pad > 0`` exponentiates in a larger space and crops, which
    is accurate on low Fock levels but no longer unitary.
    """
    _check_cutoff(dim)
    if abs(r) > 5:
        raise FockError(f"|r| = {abs(r)} is beyond the supported range (<= 5)")
    u = _expm_padded(_squeeze_generator(r), dim, pad)
    if pad == 0:
        defect = np.max(np.abs(u.conj().T @ u - np.eye(dim)))
        if defect > 1e-8:
            raise FockError(f"squeeze unitary defect {defect:.2e}")
    vac = u[:, 0] if pad else _expm_padded(_squeeze_generator(r), dim, 40)[:, 0]
    # squeezed vacuum has only even levels, so look at the top two
    _warn_truncation(float(np.sum(np.abs(vac[-2:]) ** 2)), "squeeze_unitary")
    return u


def displacement_unitary(dx: float, dp: float = 0.0, dim: int = DEFAULT_CUTOFF,
                         pad: int = 0) -> np.ndarray:
    """Displacement shifting <x> by dx and <p> by dp."""
    _check_cutoff(dim)
    u = _expm_padded(_displacement_generator(dx, dp), dim, pad)
    nbar = 0.5 * (dx * dx + dp * dp)
    # coherent-state population of the top level
    n = dim - 1
    top = np.exp(-nbar + n * np.log(nbar) - gammaln(n + 1)) if nbar > 0 else 0.0
    _warn_truncation(top, "displacement_unitary")
    return u


def _warn_truncation(top: float, where: str, budget: float = TRUNCATION_BUDGET) -> None:
    if top > budget:
        warnings.warn(f"{where}: top Fock level population {top:.2e} exceeds budget {budget:.0e}",
                      TruncationWarning, stacklevel=3)


def apply_unitary(rho, u: np.ndarray) -> FockDensityMatrix:
    rho = _as_density(rho)
    return FockDensityMatrix(u @ rho.data @ u.conj().T)


def squeezed_vacuum(r: float, dim: int = DEFAULT_CUTOFF, pad: int = 40) -> PureFockVector:
    u = _expm_padded(_squeeze_generator(r), dim + 1, pad)
    v = u[:dim, 0]
    return PureFockVector.normalize(v)


def input_target(kind: str, r_ng: float, dim: int = DEFAULT_CUTOFF,
                 idealized: bool = False, pad: int = 40) -> PureFockVector:
    """Pure photon-subtracted squeezed vacuum a S|0> (normalized).

    ``p_squeezed_photon`` and ``single_photon`` use +r_ng (p squeezed), ``x_squeezed_photon``
    uses -r_ng.  ``idealized`` returns |1> for ``single_photon``.
    """
    if kind not in INPUT_KINDS:
        raise FockError(f"unknown input kind {kind!r}; expected one of {INPUT_KINDS}")
    if r_ng < 0:
        raise FockError("r_NG must be >= 0")
    if kind == "single_photon" and idealized:
        return PureFockVector(basis(1, dim))
    if r_ng == 0:
        raise FockError("photon subtraction from vacuum is degenerate; "
                        "use idealized=True for an exact |1>")
    r = -r_ng if kind == "x_squeezed_photon" else r_ng
    big = dim + pad
    sv = expm(_squeeze_generator(r)(big))[:, 0]
    sub = _annihilation(big) @ sv
    sub /= np.linalg.norm(sub)
    _warn_truncation(abs(sub[dim - 1]) ** 2, "input_target")
    return PureFockVector.normalize(sub[:dim])


def prepare_input(kind: str, r_ng: float, eta_ng: float, dim: int = DEFAULT_CUTOFF,
                  idealized: bool = False) -> FockDensityMatrix:
    """Photon-subtracted squeezed vacuum followed by loss eta_ng."""
    if not 0.0 <= eta_ng <= 1.0:
        raise FockError(f"eta_NG must lie in [0, 1], got {eta_ng}")
    psi = input_target(kind, r_ng, dim, idealized)
    rho = loss_channel(psi.density(), eta_ng)
    top = rho.top_population
    _warn_truncation(top, "prepare_input")
    return rho


@lru_cache(maxsize=128)
def _loss_kraus(eta: float, dim: int) -> np.ndarray:
    n = np.arange(dim)
    kraus = np.zeros((dim, dim, dim))
    with np.errstate(divide="ignore"):
        log_eta = np.log(eta) if eta > 0 else -np.inf
        log_mu = np.log1p(-eta) if eta < 1 else -np.inf
    for k in range(dim):
        m = n[k:]
        logc = gammaln(m + 1) - gammaln(k + 1) - gammaln(m - k + 1)
        with np.errstate(invalid="ignore"):
            le = np.where(m - k > 0, (m - k) * log_eta, 0.0)
            lm = k * log_mu if k > 0 else 0.0
        kraus[k, m - k, m] = np.exp(0.5 * (logc + le + lm))
    kraus.setflags(write=False)
    return kraus


def loss_kraus(eta: float, dim: int) -> np.ndarray:
    """Kraus operators E_k of the pure-loss channel, stacked along axis 0."""
    if not 0.0 <= eta <= 1.0:
        raise FockError(f"transmission must lie in [0, 1], got {eta}")
    return _loss_kraus(float(eta), int(dim))


def loss_channel(rho, eta: float) -> FockDensityMatrix:
    rho = _as_density(rho)
    if eta == 1.0:
        return rho
    k = loss_kraus(eta, rho.dim)
    return FockDensityMatrix(np.einsum("kij,jl,kml->im", k, rho.data, k, optimize=True))


@lru_cache(maxsize=16)
def beamsplitter_elements(eta: float, in_a: int, in_b: int, out_a: int, out_b: int) -> np.ndarray:
    """Matrix elements <a',b'|U|a,b> as a tensor indexed [a', b', a, b].

    U maps a -> sqrt(eta) a + sqrt(1-eta) b and b -> sqrt(1-eta) a - sqrt(eta) b
    in the Heisenberg picture.  Blocks of fixed total photon number are
    exponentiated exactly, so elements are free of truncation error.
    """
    theta = np.arccos(np.sqrt(eta))
    t = np.zeros((out_a, out_b, in_a, in_b))
    for n in range(in_a + in_b - 1):
        k = np.arange(n + 1)
        # basis |k, n-k>; generator theta (a^dag b - a b^dag)
        up = np.sqrt(k[:-1] + 1) * np.sqrt(n - k[:-1])
        g = np.zeros((n + 1, n + 1))
        g[k[1:], k[:-1]] = theta * up
        g[k[:-1], k[1:]] = -theta * up
        block = expm(g)
        ka_out = k[(k < out_a) & (n - k < out_b)]
        ka_in = k[(k < in_a) & (n - k < in_b)]
        if ka_out.size == 0 or ka_in.size == 0:
            continue
        sign = (-1.0) ** (n - ka_out)
        t[ka_out[:, None], (n - ka_out)[:, None], ka_in[None, :], (n - ka_in)[None, :]] = (
            sign[:, None] * block[np.ix_(ka_out, ka_in)]
        )
    t.setflags(write=False)
    return t


def beamsplitter_unitary(eta: float, dims: tuple[int, int]) -> np.ndarray:
    da, db = dims
    return beamsplitter_elements(float(eta), da, db, da, db).reshape(da * db, da * db)


def beamsplitter_apply(joint: TwoModeState, eta: float) -> TwoModeState:
    """Mix modes A and B; A keeps fraction eta of its own field."""
    da, db = joint.dims
    _check_cutoff(da)
    _check_cutoff(db)
    if not 0.0 <= eta <= 1.0:
        raise FockError(f"reflectivity must lie in [0, 1], got {eta}")
    u = beamsplitter_unitary(eta, joint.dims)
    out = u @ joint.data @ u.conj().T
    lost = joint.trace - np.trace(out).real
    if lost > TRUNCATION_BUDGET:
        warnings.warn(f"beamsplitter_apply: {lost:.2e} of the trace left the truncated space",
                      TruncationWarning, stacklevel=2)
    return TwoModeState(out, joint.dims)


def hermite_functions(nmax: int, xs) -> np.ndarray:
    """Quadrature wavefunctions psi_n(x), n < nmax, shape (nmax, len(xs)).

    Uses the three-term recurrence, stable well beyond n = 100.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    out = np.empty((nmax, xs.size))
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * xs * xs)
    if nmax > 1:
        out[1] = np.sqrt(2.0) * xs * out[0]
    for n in range(1, nmax - 1):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * xs * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out


def quadrature_vectors(dim: int, theta: float, xs) -> np.ndarray:
    """Rows are <x_theta|n> for x_theta = cos(theta) x + sin(theta) p."""
    psi = hermite_functions(dim, xs)
    phase = np.exp(-1j * theta * np.arange(dim))
    return (psi * phase[:, None]).T


def homodyne_pdf(rho, theta: float, xs) -> np.ndarray:
    """Marginal density of x_theta on the points xs."""
    rho = _as_density(rho)
    if abs(rho.trace - 1.0) > 1e-6:
        raise FockError(f"homodyne_pdf needs a normalized state (trace {rho.trace:.8f})")
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 1 or np.any(np.diff(xs) <= 0):
        raise FockError("xs must be a strictly increasing 1-D grid")
    v = quadrature_vectors(rho.dim, theta, xs)
    return np.einsum("gi,ij,gj->g", v, rho.data, v.conj()).real


def homodyne_project(joint: TwoModeState, measured_mode: str, x_value: float,
                     theta: float = 0.0) -> tuple[FockDensityMatrix, float]:
    """Condition the unmeasured mode on a quadrature outcome.

    Returns the normalized conditional state and the outcome's probability density.
    """
    t = joint.tensor()
    da, db = joint.dims
    if measured_mode == "B":
        v = quadrature_vectors(db, theta, [x_value])[0]
        cond = np.einsum("b,abcd,d->ac", v, t, v.conj())
    elif measured_mode == "A":
        v = quadrature_vectors(da, theta, [x_value])[0]
        cond = np.einsum("a,abcd,c->bd", v, t, v.conj())
    else:
        raise FockError(f"measured_mode must be 'A' or 'B', got {measured_mode!r}")
    weight = float(np.trace(cond).real)
    if not weight > 1e-300:
        raise ImpossibleOutcomeError(f"outcome x={x_value} has likelihood {weight:.3e}")
    return FockDensityMatrix(cond / weight), weight


def fidelity_pure(rho, psi: PureFockVector) -> float:
    """<psi|rho|psi>, clamped to [0, 1]."""
    rho = _as_density(rho)
    v = psi.amplitudes if isinstance(psi, PureFockVector) else np.asarray(psi, dtype=complex)
    if v.shape[0] != rho.dim:
        raise FockError(f"dimension mismatch: state {rho.dim}, vector {v.shape[0]}")
    f = float(np.real(v.conj() @ rho.data @ v))
    if f < -1e-8 or f > 1 + 1e-8:
        warnings.warn(f"fidelity {f:.3e} outside [0, 1] beyond tolerance", RuntimeWarning,
                      stacklevel=2)
    return min(max(f, 0.0), 1.0)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2."""
    rho, sigma = _as_density(rho), _as_density(sigma)
    if rho.dim != sigma.dim:
        raise FockError(f"dimension mismatch: {rho.dim} vs {sigma.dim}")
    s = _psd_sqrt(rho.data)
    w = np.linalg.eigvalsh(s @ sigma.data @ s)
    return float(np.sum(np.sqrt(np.clip(w, 0, None))) ** 2)
