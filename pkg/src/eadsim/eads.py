"""Analytic N-step environment-assisted decoherence suppression model.

Each loop step mixes the target with a p-squeezed ancilla on a beam splitter
of reflectivity ``eta_BS``, measures the leaked x-quadrature, and suffers a
round-trip loss ``1 - eta_loop``.  Feeding the leak outcomes forward with the
gains below leaves a Gaussian channel whose scaling and added noise are known
in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
import numpy as np

from .fockspace import (
    DEFAULT_CUTOFF,
    INPUT_KINDS,
    FockDensityMatrix,
    PureFockVector,
    fidelity_pure,
    input_target,
    prepare_input,
    quadrature_moments,
    _expm_padded,
    _squeeze_generator,
)
from .phasespace import (
    GaussianChannelSpec,
    GridSpec,
    WignerGrid,
    apply_gaussian_channel,
    fock_from_wigner,
    overlap,
    w0_metric,
    wigner_from_fock,
)

VARIANTS = ("suppressed", "unsuppressed", "suppressed_ideal_ancilla")
IDEAL_ANCILLA_DB = 60.0
NO_CLONING_LIMIT = 2.0 / 3.0
# wide enough for the x anti-squeezing accumulated over ten suppressed steps
THEORY_GRID = GridSpec(half_width=10.0, points=401)


class ConfigError(ValueError):
    pass


def db_to_r(db: float) -> float:
    """Squeezing parameter r with 10 log10(e^{2r}) = db."""
    return db * math.log(10.0) / 20.0


def r_to_db(r: float) -> float:
    return 20.0 * r / math.log(10.0)


@dataclass(frozen=True)
class LoopConfig:
    eta_BS: float
    eta_loop: float
    eta_a: float
    r_a: float
    eta_NG: float
    r_NG: float
    input_kind: str = "p_squeezed_photon"
    N: int = 1
    idealized_input: bool = False
    gain_scale: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.eta_BS <= 1.0:
            raise ConfigError(f"eta_BS must lie in (0, 1], got {self.eta_BS}")
        if not 0.0 < self.eta_loop <= 1.0:
            raise ConfigError(f"eta_loop must lie in (0, 1], got {self.eta_loop}")
        for name in ("eta_a", "eta_NG"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.r_a < 0 or self.r_NG < 0:
            raise ConfigError("squeezing parameters must be >= 0")
        if int(self.N) != self.N or self.N < 0:
            raise ConfigError(f"N must be a non-negative integer, got {self.N}")
        if self.input_kind not in INPUT_KINDS:
            raise ConfigError(f"unknown input kind {self.input_kind!r}")
        object.__setattr__(self, "N", int(self.N))

    @classmethod
    def from_db(cls, *, eta_BS, eta_loop, eta_a, ancilla_db, eta_NG, input_db,
                **kw) -> "LoopConfig":
        return cls(eta_BS=eta_BS, eta_loop=eta_loop, eta_a=eta_a, r_a=db_to_r(ancilla_db),
                   eta_NG=eta_NG, r_NG=db_to_r(input_db), **kw)

    def with_steps(self, n: int) -> "LoopConfig":
        return replace(self, N=n)

    def ideal_ancilla(self) -> "LoopConfig":
        return replace(self, r_a=db_to_r(IDEAL_ANCILLA_DB), eta_a=1.0)

    @property
    def ancilla_p_variance(self) -> float:
        """Variance of the lossy ancilla's p quadrature."""
        return 0.5 * (self.eta_a * math.exp(-2 * self.r_a) + 1 - self.eta_a)

    @property
    def ancilla_x_variance(self) -> float:
        return 0.5 * (self.eta_a * math.exp(2 * self.r_a) + 1 - self.eta_a)


@dataclass(frozen=True)
class TheoryPoint:
    N: int
    F: float
    W0: float


@dataclass(frozen=True)
class TheoryCurve:
    variant: str
    input_kind: str
    points: tuple[TheoryPoint, ...] = field(default_factory=tuple)

    @property
    def F(self) -> np.ndarray:
        return np.array([pt.F for pt in self.points])

    @property
    def W0(self) -> np.ndarray:
        return np.array([pt.W0 for pt in self.points])

    @property
    def steps(self) -> np.ndarray:
        return np.array([pt.N for pt in self.points])

    def negativity_lifetime(self) -> int:
        """First step with W0 >= 0, or len(points) if W0 stays negative."""
        for pt in self.points:
            if pt.W0 >= 0:
                return pt.N
        return len(self.points)


def feedforward_gains(cfg: LoopConfig) -> np.ndarray:
    """g_k = sqrt(eta_loop (1-eta_BS)/eta_BS) (eta_loop/eta_BS)^((N-k)/2), k = 1..N."""
    n = cfg.N
    if n == 0:
        return np.zeros(0)
    k = np.arange(1, n + 1)
    base = math.sqrt(cfg.eta_loop) * math.sqrt((1 - cfg.eta_BS) / cfg.eta_BS)
    return cfg.gain_scale * base * np.sqrt(cfg.eta_loop / cfg.eta_BS) ** (n - k)


def _geometric(q: float, n: int) -> float:
    """sum_{j<n} q^j, continuous through q = 1."""
    if abs(1 - q) < 1e-12:
        return float(n)
    return (1 - q**n) / (1 - q)


def suppressed_channel(cfg: LoopConfig) -> GaussianChannelSpec:
    n, eb, el = cfg.N, cfg.eta_BS, cfg.eta_loop
    amp = math.sqrt(el**n)
    S = amp * np.diag([eb ** (-n / 2), eb ** (n / 2)])
    v1 = 0.5 * _geometric(el / eb, n) * (1 - el)
    v2 = 0.5 * _geometric(el * eb, n) * (
        el * (1 - eb) * (cfg.eta_a * math.exp(-2 * cfg.r_a) + 1 - cfg.eta_a) + 1 - el
    )
    return GaussianChannelSpec(S, np.diag([v1, v2]))


def suppressed_step_channel(cfg: LoopConfig) -> GaussianChannelSpec:
    """One feedforward-corrected loop step, from the per-step Heisenberg relations."""
    eb, el = cfg.eta_BS, cfg.eta_loop
    return GaussianChannelSpec.diagonal(
        math.sqrt(el / eb), math.sqrt(el * eb),
        0.5 * (1 - el),
        el * (1 - eb) * cfg.ancilla_p_variance + 0.5 * (1 - el),
    )


def open_loop_channel(cfg: LoopConfig) -> GaussianChannelSpec:
    """The loop with the ancilla in place but no feedforward (gains zero)."""
    eb, el = cfg.eta_BS, cfg.eta_loop
    step = GaussianChannelSpec.diagonal(
        math.sqrt(el * eb), math.sqrt(el * eb),
        el * (1 - eb) * cfg.ancilla_x_variance + 0.5 * (1 - el),
        el * (1 - eb) * cfg.ancilla_p_variance + 0.5 * (1 - el),
    )
    total = GaussianChannelSpec.identity()
    for _ in range(cfg.N):
        total = total.then(step)
    return total


def unsuppressed_channel(cfg: LoopConfig) -> GaussianChannelSpec:
    return GaussianChannelSpec.loss((cfg.eta_BS * cfg.eta_loop) ** cfg.N)


def channel_for(cfg: LoopConfig, variant: str) -> GaussianChannelSpec:
    if variant == "suppressed":
        return suppressed_channel(cfg)
    if variant == "suppressed_ideal_ancilla":
        return suppressed_channel(cfg.ideal_ancilla())
    if variant == "unsuppressed":
        return unsuppressed_channel(cfg)
    if variant == "open_loop":
        return open_loop_channel(cfg)
    raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def reference_variant(cfg: LoopConfig) -> str:
    """Analytic channel that a trajectory run of ``cfg`` should reproduce."""
    if cfg.gain_scale == 1.0:
        return "suppressed"
    if cfg.gain_scale == 0.0:
        return "open_loop"
    raise ConfigError("the analytic reference covers gain_scale 0 or 1 only, "
                      f"got {cfg.gain_scale}")


def byproduct_compensation(cfg: LoopConfig) -> float:
    """Total squeezing parameter N * ln(eta_BS)/2 that undoes the byproduct squeeze."""
    return cfg.N * 0.5 * math.log(cfg.eta_BS) + 0.0


def compensation_channel(r_total: float) -> GaussianChannelSpec:
    return GaussianChannelSpec.diagonal(math.exp(r_total), math.exp(-r_total), 0.0, 0.0)


def compensated_target(psi_in: PureFockVector, r_total: float, pad: int = 40) -> PureFockVector:
    """S(r)^dag |psi_in>, the state whose overlap with rho_out gives the compensated fidelity."""
    if r_total == 0:
        return psi_in
    u = _expm_padded(_squeeze_generator(-r_total), psi_in.dim, pad)
    return PureFockVector.normalize(u @ psi_in.amplitudes)


def compensated_fidelity(state, cfg: LoopConfig, psi_in: PureFockVector,
                         compensate: bool = True, grid: GridSpec | None = None) -> float:
    """<psi_in| S(r_byp) rho_out S(r_byp)^dag |psi_in>.

    ``state`` is either a FockDensityMatrix or a WignerGrid; the phase-space path
    overlaps W_out with the Wigner function of S^dag|psi_in>.
    """
    r_total = byproduct_compensation(cfg) if compensate else 0.0
    phi = compensated_target(psi_in, r_total)
    if isinstance(state, WignerGrid):
        w_phi = _target_wigner(phi, state)
        return float(min(max(overlap(state, w_phi), 0.0), 1.0))
    return fidelity_pure(state, phi)


def _target_wigner(phi: PureFockVector, like: WignerGrid) -> WignerGrid:
    half = float(like.x[-1])
    if np.allclose(like.x, like.p) and np.isclose(like.x[0], -half):
        return wigner_from_fock(phi.density(), GridSpec(half, like.x.size), warn=False)
    from .phasespace import _wigner_values
    X, P = np.meshgrid(like.x, like.p, indexing="ij")
    return WignerGrid(like.x, like.p, _wigner_values(phi.density().data, X, P))


def input_state(cfg: LoopConfig, dim: int = DEFAULT_CUTOFF) -> tuple[FockDensityMatrix, PureFockVector]:
    """The lossy prepared state and its pure target."""
    psi = input_target(cfg.input_kind, cfg.r_NG, dim, cfg.idealized_input)
    rho = prepare_input(cfg.input_kind, cfg.r_NG, cfg.eta_NG, dim, cfg.idealized_input)
    return rho, psi


def output_wigner(cfg: LoopConfig, variant: str, grid: GridSpec = THEORY_GRID,
                  w_in: WignerGrid | None = None) -> WignerGrid:
    if w_in is None:
        rho, _ = input_state(cfg)
        w_in = wigner_from_fock(rho, grid)
    return apply_gaussian_channel(w_in, channel_for(cfg, variant))


def output_moments(cfg: LoopConfig, variant: str, rho_in: FockDensityMatrix | None = None):
    """Exact output mean vector and covariance from the input's moments."""
    if rho_in is None:
        rho_in, _ = input_state(cfg)
    mean, cov = quadrature_moments(rho_in)
    return channel_for(cfg, variant).map_moments(mean, cov)


def output_state(cfg: LoopConfig, variant: str, dim: int = DEFAULT_CUTOFF,
                 grid: GridSpec = THEORY_GRID, w_in: WignerGrid | None = None) -> FockDensityMatrix:
    """Analytic output projected back onto the Fock basis and made physical."""
    rho = fock_from_wigner(output_wigner(cfg, variant, grid, w_in), dim).data
    rho = 0.5 * (rho + rho.conj().T)
    lam, vec = np.linalg.eigh(rho)
    lam = np.clip(lam, 0.0, None)
    rho = (vec * lam) @ vec.conj().T
    return FockDensityMatrix(rho / np.trace(rho).real)


def theory_curves(cfg: LoopConfig, n_max: int, variants=VARIANTS,
                  grid: GridSpec = THEORY_GRID, dim: int = DEFAULT_CUTOFF) -> dict[str, TheoryCurve]:
    """Compensated fidelity and W0 for N = 0..n_max for each variant."""
    if n_max < 0 or n_max > 10:
        raise ConfigError(f"n_max must lie in [0, 10], got {n_max}")
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError(f"unknown variant {v!r}")
    rho, psi = input_state(cfg, dim)
    w_in = wigner_from_fock(rho, grid, warn=False)
    targets = {}
    out = {}
    for variant in variants:
        compensate = variant != "unsuppressed"
        pts = []
        for n in range(n_max + 1):
            step_cfg = cfg.with_steps(n)
            w_out = apply_gaussian_channel(w_in, channel_for(step_cfg, variant))
            r_total = byproduct_compensation(step_cfg) if compensate else 0.0
            key = round(r_total, 15)
            if key not in targets:
                phi = compensated_target(psi, r_total)
                targets[key] = _target_wigner(phi, w_in)
            f = float(min(max(overlap(w_out, targets[key]), 0.0), 1.0))
            pts.append(TheoryPoint(n, f, w0_metric(w_out)))
        out[variant] = TheoryCurve(variant, cfg.input_kind, tuple(pts))
    return out


def curves_to_csv(curves, path, qualify: bool = False) -> None:
    """Write ``variant,N,F,W0`` rows with 9 significant digits."""
    with open(path, "w", newline="") as fh:
        fh.write("variant,N,F,W0\n")
        for curve in curves:
            name = f"{curve.input_kind}:{curve.variant}" if qualify else curve.variant
            for pt in curve.points:
                fh.write(f"{name},{pt.N},{pt.F:.9g},{pt.W0:.9g}\n")
