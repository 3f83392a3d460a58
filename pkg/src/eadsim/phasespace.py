"""Wigner functions on rectangular grids and Gaussian channels acting on them."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid
from scipy.ndimage import map_coordinates

from .fockspace import FockDensityMatrix, _as_density

DEGENERATE_VARIANCE = 1e-10
# quadrature round-off; minima above this count as non-negative
NEGATIVITY_FLOOR = 1e-9


class GridError(ValueError):
    pass


class GridWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Square grid [-half_width, half_width]^2 with ``points`` samples per axis."""

    half_width: float = 6.0
    points: int = 241

    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.points)


@dataclass(frozen=True)
class WignerGrid:
    """W(x_i, p_j) stored as ``values[i, j]``."""

    x: np.ndarray
    p: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        p = np.array(self.p, dtype=float)
        v = np.array(self.values, dtype=float)
        if v.shape != (x.size, p.size):
            raise GridError(f"values shape {v.shape} does not match axes ({x.size}, {p.size})")
        for ax in (x, p):
            d = np.diff(ax)
            if ax.size < 3 or not np.allclose(d, d[0], rtol=1e-9, atol=0):
                raise GridError("axes must be uniformly spaced with at least 3 points")
        for arr in (x, p, v):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "values", v)

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def dp(self) -> float:
        return float(self.p[1] - self.p[0])

    def integrate(self, f: np.ndarray | None = None) -> float:
        f = self.values if f is None else f
        return float(trapezoid(trapezoid(f, self.p, axis=1), self.x))

    def normalization(self) -> float:
        return self.integrate()

    def same_axes(self, other: "WignerGrid") -> bool:
        return (self.x.shape == other.x.shape and self.p.shape == other.p.shape
                and np.allclose(self.x, other.x) and np.allclose(self.p, other.p))

    def value_at(self, x0: float, p0: float) -> float:
        """Bilinear interpolation at a single point."""
        i = (x0 - self.x[0]) / self.dx
        j = (p0 - self.p[0]) / self.dp
        if not (0 <= i <= self.x.size - 1 and 0 <= j <= self.p.size - 1):
            raise GridError(f"point ({x0}, {p0}) lies outside the grid")
        i0 = min(int(np.floor(i)), self.x.size - 2)
        j0 = min(int(np.floor(j)), self.p.size - 2)
        fi, fj = i - i0, j - j0
        v = self.values
        return float((1 - fi) * (1 - fj) * v[i0, j0] + fi * (1 - fj) * v[i0 + 1, j0]
                     + (1 - fi) * fj * v[i0, j0 + 1] + fi * fj * v[i0 + 1, j0 + 1])

    def to_csv(self, path) -> None:
        """Write ``x,p,w`` rows, x-major, 9 significant digits."""
        with open(path, "w", newline="") as fh:
            fh.write("x,p,w\n")
            for i, xv in enumerate(self.x):
                row_x = f"{xv:.9g}"
                fh.writelines(f"{row_x},{pv:.9g},{self.values[i, j]:.9g}\n"
                              for j, pv in enumerate(self.p))

    @classmethod
    def from_csv(cls, path) -> "WignerGrid":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["x", "p", "w"]:
                raise GridError(f"{path}: expected header x,p,w, got {header}")
            rows = np.array([[float(c) for c in r] for r in reader])
        x = np.unique(rows[:, 0])
        p = np.unique(rows[:, 1])
        return cls(x, p, rows[:, 2].reshape(x.size, p.size))


@dataclass(frozen=True)
class GaussianChannelSpec:
    """Single-mode Gaussian channel: mean -> S mean + mu0, cov -> S cov S^T + Vc."""

    S: np.ndarray
    Vc: np.ndarray
    mu0: np.ndarray = None

    def __post_init__(self):
        s = np.array(self.S, dtype=float).reshape(2, 2)
        vc = np.array(self.Vc, dtype=float).reshape(2, 2)
        mu0 = np.zeros(2) if self.mu0 is None else np.array(self.mu0, dtype=float).reshape(2)
        if np.max(np.abs(vc - vc.T)) > 1e-12:
            raise GridError("noise covariance must be symmetric")
        if np.linalg.eigvalsh(vc)[0] < -1e-12:
            raise GridError("noise covariance must be positive semidefinite")
        for arr in (s, vc, mu0):
            arr.setflags(write=False)
        object.__setattr__(self, "S", s)
        object.__setattr__(self, "Vc", vc)
        object.__setattr__(self, "mu0", mu0)

    @classmethod
    def identity(cls) -> "GaussianChannelSpec":
        return cls(np.eye(2), np.zeros((2, 2)))

    @classmethod
    def diagonal(cls, sx: float, sp: float, vx: float, vp: float) -> "GaussianChannelSpec":
        return cls(np.diag([sx, sp]), np.diag([vx, vp]))

    @classmethod
    def loss(cls, eta: float) -> "GaussianChannelSpec":
        return cls(np.sqrt(eta) * np.eye(2), 0.5 * (1 - eta) * np.eye(2))

    @property
    def is_diagonal(self) -> bool:
        return (self.S[0, 1] == 0 and self.S[1, 0] == 0 and self.Vc[0, 1] == 0
                and not self.mu0.any())

    def then(self, other: "GaussianChannelSpec") -> "GaussianChannelSpec":
        """Apply ``self`` first, then ``other``."""
        s2 = other.S
        return GaussianChannelSpec(s2 @ self.S, s2 @ self.Vc @ s2.T + other.Vc,
                                   s2 @ self.mu0 + other.mu0)

    def map_moments(self, mean, cov) -> tuple[np.ndarray, np.ndarray]:
        mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        return self.S @ mean + self.mu0, self.S @ cov @ self.S.T + self.Vc


def wigner_from_fock(rho, grid: GridSpec | None = None, warn: bool = True) -> WignerGrid:
    """Wigner function of a Fock-basis state on a square grid.

    Basis functions W_{|m><n|} are generated by the Laguerre recurrence in the
    complex variable alpha = (x + i p)/sqrt(2), never through factorials.
    """
    rho = _as_density(rho)
    grid = grid or GridSpec()
    ax = grid.axis()
    X, P = np.meshgrid(ax, ax, indexing="ij")
    values = _wigner_values(rho.data, X, P)
    w = WignerGrid(ax, ax, values)
    edge = max(np.abs(values[[0, -1], :]).max(), np.abs(values[:, [0, -1]]).max())
    if warn and edge > 1e-4:
        warnings.warn(f"grid too small: |W| = {edge:.2e} on the boundary", GridWarning,
                      stacklevel=2)
    return w


def _wigner_values(rho: np.ndarray, X: np.ndarray, P: np.ndarray) -> np.ndarray:
    dim = rho.shape[0]
    alpha = (X + 1j * P) / np.sqrt(2)
    two_alpha = 2 * alpha
    two_alpha_c = two_alpha.conj()
    # row m holds f_{m,n} for n >= m; W_{|m><n|} (n > m) contributes 2 Re(rho[m, n] f_{m,n})
    row = [None] * dim
    row[0] = np.exp(-2 * np.abs(alpha) ** 2) / np.pi
    w = rho[0, 0].real * row[0].real
    for n in range(1, dim):
        row[n] = two_alpha * row[n - 1] / np.sqrt(n)
        w += 2 * np.real(rho[0, n] * row[n])
    for m in range(1, dim):
        prev_diag = row[m]
        new_m = (two_alpha_c * prev_diag - np.sqrt(m) * row[m - 1]) / np.sqrt(m)
        carry = prev_diag
        row[m] = new_m
        w += rho[m, m].real * new_m.real
        for n in range(m + 1, dim):
            nxt = (two_alpha * row[n - 1] - np.sqrt(m) * carry) / np.sqrt(n)
            carry = row[n]
            row[n] = nxt
            w += 2 * np.real(rho[m, n] * nxt)
    return w


def fock_from_wigner(w: WignerGrid, dim: int) -> FockDensityMatrix:
    """Project a Wigner grid onto the Fock basis via rho_mn = 2 pi int W W_{|n><m|}."""
    X, P = np.meshgrid(w.x, w.p, indexing="ij")
    alpha = (X + 1j * P) / np.sqrt(2)
    two_alpha = 2 * alpha
    wx = _trap_weights(w.x)[:, None] * _trap_weights(w.p)[None, :]
    weighted = 2 * np.pi * w.values * wx
    out = np.zeros((dim, dim), dtype=complex)
    row = [None] * dim
    row[0] = np.exp(-2 * np.abs(alpha) ** 2) / np.pi
    # f_{m,n} is W of |n><m| up to conjugation: W_{|m><n|} = f_{m,n} for n >= m
    for n in range(1, dim):
        row[n] = two_alpha * row[n - 1] / np.sqrt(n)
    for m in range(dim):
        if m > 0:
            carry = row[m]
            row[m] = (two_alpha.conj() * carry - np.sqrt(m) * row[m - 1]) / np.sqrt(m)
            for n in range(m + 1, dim):
                nxt = (two_alpha * row[n - 1] - np.sqrt(m) * carry) / np.sqrt(n)
                carry = row[n]
                row[n] = nxt
        for n in range(m, dim):
            # rho_{m,n} = tr(rho |n><m|); W_{|n><m|} = conj(W_{|m><n|})
            val = np.sum(weighted * row[n].conj())
            out[m, n] = val
            out[n, m] = np.conj(val)
    return FockDensityMatrix(out)


def _trap_weights(ax: np.ndarray) -> np.ndarray:
    wts = np.full(ax.size, ax[1] - ax[0])
    wts[0] *= 0.5
    wts[-1] *= 0.5
    return wts


def apply_gaussian_channel(w: WignerGrid, chan: GaussianChannelSpec) -> WignerGrid:
    """Push a Wigner grid through a Gaussian channel.

    The input is resampled at S^-1 (x - mu0) with cubic splines and divided by
    det S; the additive noise is a Gaussian convolution done in Fourier space
    on a zero-padded grid.  Noise axes with variance below 1e-10 are treated as
    deltas.
    """
    det = float(np.linalg.det(chan.S))
    if abs(det) < 1e-12:
        raise GridError("scaling matrix is singular")
    values = w.values
    if not (np.array_equal(chan.S, np.eye(2)) and not chan.mu0.any()):
        values = _resample(w, np.linalg.inv(chan.S), chan.mu0) / abs(det)
    vc = np.array(chan.Vc)
    for i in range(2):
        if vc[i, i] < DEGENERATE_VARIANCE:
            vc[i, :] = 0.0
            vc[:, i] = 0.0
    if vc.any():
        values = _gaussian_blur(values, w.dx, w.dp, vc)
    return WignerGrid(w.x, w.p, values)


def _resample(w: WignerGrid, s_inv: np.ndarray, mu0: np.ndarray) -> np.ndarray:
    X, P = np.meshgrid(w.x - mu0[0], w.p - mu0[1], indexing="ij")
    src_x = s_inv[0, 0] * X + s_inv[0, 1] * P
    src_p = s_inv[1, 0] * X + s_inv[1, 1] * P
    ix = (src_x - w.x[0]) / w.dx
    ip = (src_p - w.p[0]) / w.dp
    return map_coordinates(w.values, [ix, ip], order=3, mode="grid-constant", cval=0.0)


def _gaussian_blur(values: np.ndarray, dx: float, dp: float, vc: np.ndarray) -> np.ndarray:
    nx, np_ = values.shape
    mx, mp = 2 * nx, 2 * np_
    kx = 2 * np.pi * np.fft.fftfreq(mx, d=dx)
    kp = 2 * np.pi * np.fft.rfftfreq(mp, d=dp)
    KX, KP = np.meshgrid(kx, kp, indexing="ij")
    kernel = np.exp(-0.5 * (vc[0, 0] * KX**2 + 2 * vc[0, 1] * KX * KP + vc[1, 1] * KP**2))
    spec = np.fft.rfft2(values, s=(mx, mp))
    return np.fft.irfft2(spec * kernel, s=(mx, mp))[:nx, :np_]


def w0_metric(w: WignerGrid) -> float:
    """Minimum of W when it is negative, otherwise W at the origin."""
    wmin = float(w.values.min())
    if wmin < -NEGATIVITY_FLOOR:
        return wmin
    return w.value_at(0.0, 0.0)


def w0_location(w: WignerGrid) -> tuple[float, float]:
    if w.values.min() < -NEGATIVITY_FLOOR:
        i, j = np.unravel_index(np.argmin(w.values), w.values.shape)
        return float(w.x[i]), float(w.p[j])
    return 0.0, 0.0


def overlap(w1: WignerGrid, w2: WignerGrid) -> float:
    """2 pi int W1 W2, i.e. tr(rho1 rho2)."""
    if not w1.same_axes(w2):
        raise GridError("overlap needs identical grids")
    return 2 * np.pi * w1.integrate(w1.values * w2.values)


def moments(w: WignerGrid) -> tuple[np.ndarray, np.ndarray]:
    X, P = np.meshgrid(w.x, w.p, indexing="ij")
    norm = w.integrate()
    mx = w.integrate(X * w.values) / norm
    mp = w.integrate(P * w.values) / norm
    dxv, dpv = X - mx, P - mp
    cxx = w.integrate(dxv * dxv * w.values) / norm
    cpp = w.integrate(dpv * dpv * w.values) / norm
    cxp = w.integrate(dxv * dpv * w.values) / norm
    return np.array([mx, mp]), np.array([[cxx, cxp], [cxp, cpp]])


def write_grid(path: str | Path, w: WignerGrid) -> None:
    w.to_csv(path)
