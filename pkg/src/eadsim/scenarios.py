"""Scenario configuration files and the named figure presets.

A scenario is an INI file.  ``[scenario]`` holds run settings, ``[loop]`` the
physical parameters, and optional ``[input NAME]`` sections override loop keys
for additional input states compared in the same run (for example the x- and
p-squeezed inputs of the squeezing-direction comparison).  Unknown sections or
keys are rejected.
"""

from __future__ import annotations

import configparser
from pathlib import Path
from dataclasses import dataclass, replace

from .eads import THEORY_GRID, VARIANTS, ConfigError, LoopConfig
from .fockspace import INPUT_KINDS
from .phasespace import GridSpec

ENGINES = ("analytic", "trajectory", "both")

SCENARIO_KEYS = {
    "description": str,
    "engine": str,
    "n_max": int,
    "n_traj": int,
    "seed": int,
    "variants": "list",
    "grid_half_width": float,
    "grid_points": int,
    "wigner_steps": "intlist",
    "wigner_variants": "list",
    "oracle_steps": "intlist",
    "tomography_source": str,
    "tomography_steps": int,
    "tomography_variant": str,
    "tomography_phases": int,
    "tomography_samples": int,
    "tomography_cutoff": int,
    "tomography_iters": int,
    "bootstrap": int,
}

LOOP_KEYS = {
    "eta_BS": float,
    "eta_loop": float,
    "eta_a": float,
    "ancilla_db": float,
    "eta_NG": float,
    "input_db": float,
    "input_kind": str,
    "idealized_input": bool,
    "gain_scale": float,
}


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    inputs: tuple[tuple[str, LoopConfig], ...]
    description: str = ""
    engine: str = "analytic"
    n_max: int = 5
    n_traj: int = 20000
    seed: int = 1
    variants: tuple[str, ...] = VARIANTS
    grid: GridSpec = THEORY_GRID
    wigner_steps: tuple[int, ...] = (0, 1, 3, 5)
    wigner_variants: tuple[str, ...] = ("unsuppressed", "suppressed")
    oracle_steps: tuple[int, ...] = (1, 2, 3)
    tomography_source: str = "input"
    tomography_steps: int = 0
    tomography_variant: str = "suppressed"
    tomography_phases: int = 12
    tomography_samples: int = 1500
    tomography_cutoff: int = 12
    tomography_iters: int = 500
    bootstrap: int = 50

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if not 0 <= self.n_max <= 10:
            raise ConfigError(f"n_max must lie in [0, 10], got {self.n_max}")
        if self.n_traj < 1:
            raise ConfigError("n_traj must be >= 1")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        for v in tuple(self.variants) + tuple(self.wigner_variants) + (self.tomography_variant,):
            if v not in VARIANTS:
                raise ConfigError(f"unknown variant {v!r}; expected one of {VARIANTS}")
        if not self.inputs:
            raise ConfigError("a scenario needs at least one input")
        if any(n < 0 or n > 10 for n in self.wigner_steps):
            raise ConfigError("wigner_steps must lie in [0, 10]")
        if any(n < 1 or n > 10 for n in self.oracle_steps):
            raise ConfigError("oracle_steps must lie in [1, 10]")
        if self.tomography_source not in ("input", "output"):
            raise ConfigError("tomography_source must be 'input' or 'output'")
        if self.tomography_samples < 1 or self.tomography_phases < 1:
            raise ConfigError("tomography needs at least one phase and one sample per phase")
        if self.bootstrap < 1:
            raise ConfigError("bootstrap must be >= 1")
        if self.grid.points < 3 or self.grid.half_width <= 0:
            raise ConfigError("grid needs half_width > 0 and at least 3 points")

    @property
    def qualify(self) -> bool:
        return len(self.inputs) > 1

    @property
    def primary(self) -> LoopConfig:
        return self.inputs[0][1]

    def with_overrides(self, **kw) -> "ScenarioConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self


def _convert(kind, raw: str, key: str):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "list":
            return tuple(s.strip() for s in raw.split(",") if s.strip())
        if kind == "intlist":
            return tuple(int(s) for s in raw.split(",") if s.strip())
        return kind(raw)
    except ValueError:
        raise ConfigError(f"cannot parse {key} = {raw!r}") from None


def _loop_from(values: dict) -> LoopConfig:
    missing = [k for k in ("eta_BS", "eta_loop", "eta_a", "ancilla_db", "eta_NG", "input_db")
               if k not in values]
    if missing:
        raise ConfigError(f"missing loop keys: {', '.join(missing)}")
    kind = values.get("input_kind", "p_squeezed_photon")
    if kind not in INPUT_KINDS:
        raise ConfigError(f"unknown input_kind {kind!r}; expected one of {INPUT_KINDS}")
    return LoopConfig.from_db(**values)


def parse_scenario(text: str, name: str = "custom") -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    settings = {}
    loop = {}
    extra_inputs = []
    for section in parser.sections():
        items = dict(parser.items(section))
        if section == "scenario":
            for k, v in items.items():
                if k not in SCENARIO_KEYS:
                    raise ConfigError(f"unknown key {k!r} in [scenario]")
                settings[k] = _convert(SCENARIO_KEYS[k], v, k)
        elif section == "loop" or section.startswith("input "):
            parsed = {}
            for k, v in items.items():
                if k not in LOOP_KEYS:
                    raise ConfigError(f"unknown key {k!r} in [{section}]")
                parsed[k] = _convert(LOOP_KEYS[k], v, k)
            if section == "loop":
                loop = parsed
            else:
                label = section[len("input "):].strip()
                if not label:
                    raise ConfigError("input sections need a name: [input NAME]")
                extra_inputs.append((label, parsed))
        else:
            raise ConfigError(f"unknown section [{section}]")
    if "loop" not in parser.sections():
        raise ConfigError("config needs a [loop] section")

    if extra_inputs:
        inputs = tuple((label, _loop_from({**loop, **vals})) for label, vals in extra_inputs)
    else:
        cfg = _loop_from(loop)
        inputs = ((cfg.input_kind, cfg),)

    labels = [lab for lab, _ in inputs]
    if len(set(labels)) != len(labels):
        raise ConfigError("input names must be unique")

    grid = THEORY_GRID
    if "grid_half_width" in settings or "grid_points" in settings:
        grid = GridSpec(settings.pop("grid_half_width", THEORY_GRID.half_width),
                        settings.pop("grid_points", THEORY_GRID.points))
    description = settings.pop("description", "")
    return ScenarioConfig(name=name, inputs=inputs, description=description, grid=grid, **settings)


def load_scenario(path) -> ScenarioConfig:
    with open(path) as fh:
        text = fh.read()
    return parse_scenario(text, Path(path).stem)


_ANCILLA = """eta_a = 0.73
ancilla_db = 9.7
"""

# nominal efficiencies for conditions without a fitted pair
_NOMINAL = "eta_NG = 0.62\neta_loop = 0.94\n"

PRESETS = {
    "fig2": f"""
[scenario]
description = p-squeezed single photon, 10% beam splitter loss (fitted 0.64 / 0.95)
wigner_steps = 0, 1, 3, 5
[loop]
input_kind = p_squeezed_photon
input_db = 3.5
eta_NG = 0.64
eta_loop = 0.95
eta_BS = 0.90
{_ANCILLA}""",
    "fig3a": f"""
[scenario]
description = p-squeezed single photon, 5% beam splitter loss (fitted 0.60 / 0.97)
wigner_steps = 3
[loop]
input_kind = p_squeezed_photon
input_db = 3.5
eta_NG = 0.60
eta_loop = 0.97
eta_BS = 0.95
{_ANCILLA}""",
    "fig3b": f"""
[scenario]
description = single photon from 1.0 dB squeezing, 10% beam splitter loss (fitted 0.60 / 0.97)
wigner_steps = 3
[loop]
input_kind = single_photon
input_db = 1.0
eta_NG = 0.60
eta_loop = 0.97
eta_BS = 0.90
{_ANCILLA}""",
    "fig3c": f"""
[scenario]
description = x-squeezed single photon, 10% beam splitter loss (fitted 0.64 / 0.95)
wigner_steps = 3
[loop]
input_kind = x_squeezed_photon
input_db = 3.5
eta_NG = 0.64
eta_loop = 0.95
eta_BS = 0.90
{_ANCILLA}""",
    "fig4": f"""
[scenario]
description = squeezing-direction comparison in a lossless setup, 10% beam splitter loss
variants = suppressed
wigner_variants = suppressed
[loop]
input_db = 3.5
eta_NG = 1.0
eta_loop = 1.0
eta_BS = 0.90
{_ANCILLA}
[input x_squeezed_photon]
input_kind = x_squeezed_photon
[input p_squeezed_photon]
input_kind = p_squeezed_photon
""",
}


def _supplementary(eta_bs: float, fitted: dict, wigner: bool) -> str:
    loss = round(100 * (1 - eta_bs))
    head = f"[scenario]\ndescription = all three inputs, {loss}% beam splitter loss"
    if wigner:
        head += ", Wigner functions for N = 0..5\nwigner_steps = 0, 1, 2, 3, 4, 5"
    body = [head, "[loop]", f"eta_BS = {eta_bs:.2f}", _ANCILLA.strip()]
    for kind, db in (("p_squeezed_photon", 3.5), ("x_squeezed_photon", 3.5), ("single_photon", 1.0)):
        eff = fitted.get(kind)
        effs = f"eta_NG = {eff[0]:.2f}\neta_loop = {eff[1]:.2f}" if eff else _NOMINAL.strip()
        body.append(f"[input {kind}]\ninput_kind = {kind}\ninput_db = {db}\n{effs}")
    return "\n".join(body) + "\n"


_FIT_5 = {"p_squeezed_photon": (0.60, 0.97)}
_FIT_10 = {"p_squeezed_photon": (0.64, 0.95), "single_photon": (0.60, 0.97),
           "x_squeezed_photon": (0.64, 0.95)}
PRESETS["figS1"] = _supplementary(0.95, _FIT_5, wigner=False)
PRESETS["figS2"] = _supplementary(0.90, _FIT_10, wigner=False)
PRESETS["figS3"] = _supplementary(0.95, _FIT_5, wigner=True)
PRESETS["figS4"] = _supplementary(0.90, _FIT_10, wigner=True)


def preset(name: str) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return parse_scenario(PRESETS[name], name)


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}")
    return PRESETS[name].lstrip()
