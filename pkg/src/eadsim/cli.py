"""Command-line runner: theory curves, Wigner maps, the cross-engine oracle and tomography.

Exit codes: 0 success, 2 configuration error, 3 numerical-check failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .eads import (
    ConfigError,
    TheoryCurve,
    TheoryPoint,
    byproduct_compensation,
    channel_for,
    compensated_fidelity,
    curves_to_csv,
    input_state,
    output_state,
    reference_variant,
    theory_curves,
)
from .fockspace import FockError, quadrature_moments
from .phasespace import GridSpec, apply_gaussian_channel, w0_location, w0_metric, wigner_from_fock
from .scenarios import ENGINES, PRESETS, ScenarioConfig, load_scenario, preset, preset_text
from .tomography import (
    MaximumLikelihoodTomography,
    TomographyError,
    bootstrap_values,
    metric_function,
    sample_dataset,
    summarize,
    write_density_csv,
)
from .trajectory import EnsembleQualityError, compare_engines, run_ensemble

log = logging.getLogger("eadsim")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECK = 3
EXIT_IO = 4

# output grid for Wigner maps and reconstructions
MAP_GRID = GridSpec(6.0, 241)


class CheckFailed(RuntimeError):
    pass


def _prefix(sc: ScenarioConfig, label: str) -> str:
    return f"{label}_" if sc.qualify else ""


def _trajectory_curve(cfg, label, sc: ScenarioConfig) -> TheoryCurve:
    rho, psi = input_state(cfg)
    pts = [TheoryPoint(0, compensated_fidelity(rho, cfg.with_steps(0), psi),
                       w0_metric(wigner_from_fock(rho, sc.grid, warn=False)))]
    for n in range(1, sc.n_max + 1):
        step = cfg.with_steps(n)
        res = run_ensemble(rho, step, sc.n_traj, sc.seed)
        w = wigner_from_fock(res.mean_state, sc.grid, warn=False)
        pts.append(TheoryPoint(n, compensated_fidelity(res.mean_state, step, psi), w0_metric(w)))
    return TheoryCurve("trajectory", label, tuple(pts))


def cmd_curves(sc: ScenarioConfig, out: Path) -> list[Path]:
    curves = []
    for label, cfg in sc.inputs:
        if sc.n_max == 0:
            # every variant reduces to the input state
            c = next(iter(theory_curves(cfg, 0, sc.variants[:1], sc.grid).values()))
            curves.append(replace(c, variant="input", input_kind=label))
            continue
        if sc.engine in ("analytic", "both"):
            for c in theory_curves(cfg, sc.n_max, sc.variants, sc.grid).values():
                curves.append(replace(c, input_kind=label))
        if sc.engine in ("trajectory", "both"):
            curves.append(_trajectory_curve(cfg, label, sc))
    csv_path = out / "curves.csv"
    svg_path = out / "curves.svg"
    curves_to_csv(curves, csv_path, qualify=sc.qualify)
    from .plotting import plot_curves
    plot_curves(curves, svg_path, qualify=sc.qualify, title=sc.description)
    return [csv_path, svg_path]


def cmd_wigner(sc: ScenarioConfig, out: Path, steps=None, variants=None) -> list[Path]:
    from .plotting import plot_wigner

    steps = tuple(sc.wigner_steps if steps is None else steps)
    variants = tuple(sc.wigner_variants if variants is None else variants)
    written = []
    rows = []
    failures = []
    for label, cfg in sc.inputs:
        rho, _ = input_state(cfg)
        w_in = wigner_from_fock(rho, MAP_GRID, warn=False)
        w0s = {}
        for variant in variants:
            for n in steps:
                w = apply_gaussian_channel(w_in, channel_for(cfg.with_steps(n), variant))
                stem = f"wigner_{_prefix(sc, label)}{variant}_N{n}"
                w.to_csv(out / f"{stem}.csv")
                plot_wigner(w, out / f"{stem}.svg", title=f"{label} {variant} N={n}")
                written += [out / f"{stem}.csv", out / f"{stem}.svg"]
                w0 = w0_metric(w)
                x0, p0 = w0_location(w)
                w0s[variant, n] = w0
                rows.append((label, variant, n, w0, x0, p0))
        for n in steps:
            if n >= 1 and ("suppressed", n) in w0s and ("unsuppressed", n) in w0s:
                if w0s["suppressed", n] > w0s["unsuppressed", n]:
                    failures.append(f"{label} N={n}: suppressed W0 above unsuppressed W0")
    summary = out / "wigner_summary.csv"
    with open(summary, "w", newline="") as fh:
        fh.write("input,variant,N,W0,x0,p0\n")
        for label, variant, n, w0, x0, p0 in rows:
            fh.write(f"{label},{variant},{n},{w0:.9g},{x0:.9g},{p0:.9g}\n")
    written.append(summary)
    if failures:
        raise CheckFailed("; ".join(failures))
    return written


def cmd_oracle(sc: ScenarioConfig, out: Path, steps=None) -> list[Path]:
    steps = tuple(sc.oracle_steps if steps is None else steps)
    checks_path = out / "oracle.csv"
    summary_path = out / "oracle_summary.csv"
    written = [checks_path, summary_path]
    failures = []
    with open(checks_path, "w", newline="") as chk, open(summary_path, "w", newline="") as summ:
        chk.write("input,N,check,estimate,std_error,reference,pass\n")
        summ.write("input,n,fidelity_to_analytic,mean_x,mean_p,var_x,var_p\n")
        for label, cfg in sc.inputs:
            rho, _ = input_state(cfg)
            for n in steps:
                rep = compare_engines(rho, cfg.with_steps(n), sc.n_traj, sc.seed,
                                     variant=reference_variant(cfg))
                chk.write(f"{label},{n},fidelity,{rep.fidelity:.9g},,0.99,"
                          f"{int(rep.fidelity >= 0.99)}\n")
                for m in rep.moments:
                    chk.write(f"{label},{n},{m.name},{m.estimate:.9g},{m.std_error:.9g},"
                              f"{m.reference:.9g},{int(m.passed)}\n")
                mean, cov = quadrature_moments(rep.ensemble.mean_state)
                summ.write(f"{label},{n},{rep.fidelity:.9g},{mean[0]:.9g},{mean[1]:.9g},"
                           f"{cov[0, 0]:.9g},{cov[1, 1]:.9g}\n")
                outcomes = out / f"outcomes_{_prefix(sc, label)}N{n}.csv"
                with open(outcomes, "w", newline="") as fh:
                    fh.write("trajectory,k,x_leak\n")
                    for i, row in enumerate(rep.ensemble.outcomes):
                        for k, x in enumerate(row, start=1):
                            fh.write(f"{i},{k},{x:.9g}\n")
                written.append(outcomes)
                if not rep.passed:
                    failures.append(f"{label} N={n}")
    if failures:
        raise CheckFailed("oracle checks failed for " + ", ".join(failures))
    return written


def _tomography_truth(cfg, sc: ScenarioConfig):
    if sc.tomography_source == "input":
        rho, psi = input_state(cfg)
        return rho, psi, cfg.with_steps(0)
    step = cfg.with_steps(sc.tomography_steps)
    _, psi = input_state(cfg)
    return output_state(step, sc.tomography_variant, grid=sc.grid), psi, step


def cmd_tomography(sc: ScenarioConfig, out: Path) -> list[Path]:
    from .plotting import plot_wigner

    written = []
    for i, (label, cfg) in enumerate(sc.inputs):
        truth, psi, step = _tomography_truth(cfg, sc)
        seed = np.random.SeedSequence([sc.seed, i])
        data_seed, boot_seed = (int(s.generate_state(1, np.uint64)[0]) for s in seed.spawn(2))
        data = sample_dataset(truth, sc.tomography_phases, sc.tomography_samples, data_seed)
        pre = _prefix(sc, label)
        data.to_csv(out / f"{pre}dataset.csv")

        est = MaximumLikelihoodTomography(cutoff=sc.tomography_cutoff,
                                          max_iter=sc.tomography_iters).fit(data)
        rho_hat = est.density_matrix_
        write_density_csv(rho_hat, out / f"{pre}density.csv")
        w = wigner_from_fock(rho_hat, MAP_GRID, warn=False)
        w.to_csv(out / f"{pre}reconstructed_wigner.csv")
        plot_wigner(w, out / f"{pre}reconstructed_wigner.svg", title=f"{label} reconstruction")

        fns = {"F_truth": metric_function("F", truth, MAP_GRID),
               "W0": metric_function("W0", None, MAP_GRID)}
        boot = bootstrap_values(data, fns, sc.tomography_cutoff, sc.tomography_iters,
                                sc.bootstrap, boot_seed)
        comp = None
        if sc.tomography_source == "output":
            comp = compensated_fidelity(rho_hat.embed(psi.dim), step, psi,
                                        compensate=sc.tomography_variant != "unsuppressed")
        metrics = out / f"{pre}metrics.csv"
        with open(metrics, "w", newline="") as fh:
            fh.write("metric,value,bootstrap_mean,bootstrap_se\n")
            for name, value in (("F_truth", fns["F_truth"](rho_hat)), ("W0", w0_metric(w))):
                m, se = summarize(boot[name])
                fh.write(f"{name},{value:.9g},{m:.9g},{se:.9g}\n")
            if comp is not None:
                fh.write(f"F_compensated,{comp:.9g},,\n")
            fh.write(f"log_likelihood,{est.log_likelihood_[-1]:.9g},,\n")
            fh.write(f"iterations,{est.n_iter_},,\n")
            fh.write(f"byproduct_r,{byproduct_compensation(step):.9g},,\n")
        written += [out / f"{pre}dataset.csv", out / f"{pre}density.csv",
                    out / f"{pre}reconstructed_wigner.csv", out / f"{pre}reconstructed_wigner.svg",
                    metrics]
    return written


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eadsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", type=Path, help="scenario INI file")
        src.add_argument("--preset", choices=sorted(PRESETS), help="named figure preset")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--seed", type=int, help="override the scenario seed (unsigned 64-bit)")
        p.add_argument("--n-traj", type=int, dest="n_traj", help="trajectories per ensemble")
        p.add_argument("--engine", choices=ENGINES, help="analytic, trajectory or both")
        p.add_argument("--n-max", type=int, dest="n_max", help="largest step count")

    common(sub.add_parser("curves", help="fidelity and W0 against step number"))
    p = sub.add_parser("wigner", help="Wigner maps at selected steps")
    common(p)
    p.add_argument("--steps", help="comma-separated step counts")
    p.add_argument("--variant", action="append", dest="variants", help="variant (repeatable)")
    p = sub.add_parser("oracle", help="cross-check the trajectory engine against the analytic one")
    common(p)
    p.add_argument("--steps", help="comma-separated step counts")
    p = sub.add_parser("tomography", help="simulated homodyne tomography of the configured state")
    common(p)
    p.add_argument("--samples", type=int, help="samples per phase")
    p.add_argument("--phases", type=int, help="number of phases")
    p.add_argument("--bootstrap", type=int, help="bootstrap resamples")

    p = sub.add_parser("presets", help="list or show figure presets")
    p.add_argument("action", choices=("list", "show"))
    p.add_argument("name", nargs="?")
    return parser


def _int_list(text: str | None):
    if text is None:
        return None
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"cannot parse step list {text!r}") from None


def _scenario(args) -> ScenarioConfig:
    sc = load_scenario(args.config) if args.config else preset(args.preset)
    over = dict(seed=args.seed, n_traj=args.n_traj, engine=args.engine, n_max=args.n_max)
    if args.command == "tomography":
        over.update(tomography_samples=args.samples, tomography_phases=args.phases,
                    bootstrap=args.bootstrap)
    return sc.with_overrides(**over)


def _presets(args) -> int:
    if args.action == "list":
        for name in PRESETS:
            print(f"{name}\t{preset(name).description}")
        return EXIT_OK
    if not args.name:
        raise ConfigError("presets show needs a preset name")
    print(preset_text(args.name), end="")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "presets":
            return _presets(args)
        sc = _scenario(args)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "curves":
            files = cmd_curves(sc, args.out)
        elif args.command == "wigner":
            files = cmd_wigner(sc, args.out, _int_list(args.steps),
                               tuple(args.variants) if args.variants else None)
        elif args.command == "oracle":
            files = cmd_oracle(sc, args.out, _int_list(args.steps))
        else:
            files = cmd_tomography(sc, args.out)
    except (ConfigError, TomographyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckFailed, EnsembleQualityError, FockError) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for f in files:
        log.info("wrote %s", f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
