"""Command-line interface.

Subcommands:
  sample           draw position measurements from the benchmark ensemble
  reconstruct      run a MAP reconstruction from a config file
  preset           run a named preset experiment
  check-gradients  verify analytic gradients against finite differences
  anneal-demo      annealer sanity run on an enumerable 12-site problem

Exit codes: 0 on success, 1 for configuration errors, 2 for numerical
failures (degenerate spectra after retries, failed factorizations).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import datagen, gradients, priors
from .config import (ConfigError, _read_ini, config_from_mapping,
                     parse_overrides)
from .ensemble import build_hamiltonian, diagonalize, likelihood_density
from .lattice import build_laplacian, build_shift_difference
from .optimizer import (AnnealSchedule, ReconstructionError,
                        anneal_binary_field, reconstruct)
from .presets import preset_config, preset_names, resolve_initial, run_preset
from .report import emit_all, format_real


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biqm",
        description="Bayesian reconstruction of 1-D lattice potentials "
                    "from finite-temperature position measurements.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw positions from the benchmark truth")
    p.add_argument("--config", help="config file for lattice/ensemble settings")
    p.add_argument("--seed", type=int, help="sampling seed")
    p.add_argument("--n", type=int, help="number of samples")
    p.add_argument("--out", default="samples.txt", help="output sample file")

    p = sub.add_parser("reconstruct", help="run a reconstruction from a config")
    p.add_argument("--config", required=True, help="INI configuration file")
    p.add_argument("--seed", type=int, help="override [run] seed")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--override", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="config override")

    p = sub.add_parser("preset", help="run a named preset experiment")
    p.add_argument("--preset", help="preset name")
    p.add_argument("--list", action="store_true", help="list preset names")
    p.add_argument("--seed", type=int, help="override [run] seed")
    p.add_argument("--out", help="output directory (default: preset name)")
    p.add_argument("--override", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="config override")

    p = sub.add_parser("check-gradients",
                       help="compare analytic gradients with finite differences")
    p.add_argument("--seed", type=int, default=7, help="test potential seed")

    p = sub.add_parser("anneal-demo",
                       help="annealer vs. enumeration on a 12-site problem")
    p.add_argument("--seed", type=int, default=1, help="base annealing seed")
    return parser


def _cmd_sample(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides.setdefault("run", {})["seed"] = str(args.seed)
    if args.n is not None:
        overrides.setdefault("data", {})["n"] = str(args.n)
    if args.config:
        with open(args.config) as fh:
            config = config_from_mapping(_read_ini(fh.read(), args.config),
                                         overrides)
    else:
        config = config_from_mapping(overrides)
    v = datagen.true_potential(config.lattice.n)
    ens = diagonalize(build_hamiltonian(v, config.ensemble.mass),
                      config.ensemble.beta)
    samples = datagen.sample_positions(likelihood_density(ens), config.data.n,
                                       config.run.seed)
    datagen.write_samples(args.out, samples)
    print(f"wrote {samples.n} samples (seed {samples.seed}) to {args.out}")
    return 0


def _run_and_emit(config, initial, outdir: str) -> int:
    try:
        result = reconstruct(config, initial=initial)
    except ReconstructionError as exc:
        os.makedirs(outdir, exist_ok=True)
        lines = ["iter,neg_log_post,grad_norm,mu,nu"]
        for tp in exc.trace:
            lines.append(f"{tp.iteration},{format_real(tp.value)},"
                         f"{format_real(tp.grad_norm)},{format_real(tp.mu)},"
                         f"{format_real(tp.nu)}")
        with open(os.path.join(outdir, "trace.csv"), "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"reconstruction failed: {exc}", file=sys.stderr)
        print(f"partial trace saved to {outdir}/trace.csv", file=sys.stderr)
        return 2
    emit_all(result, outdir)
    d = result.diagnostics
    print(f"finished in {result.iterations} iterations "
          f"({result.reason}); rmse {d['rmse_full']:.4f}, "
          f"|U - kappa| {d['abs_u_minus_kappa']:.4f}")
    print(f"outputs written to {outdir}/")
    return 0


def _cmd_reconstruct(args) -> int:
    with open(args.config) as fh:
        text = fh.read()
    extra = parse_overrides(args.override)
    if args.seed is not None:
        extra.setdefault("run", {})["seed"] = str(args.seed)
    config = config_from_mapping(_read_ini(text, args.config), extra)
    return _run_and_emit(config, resolve_initial(config), args.out)


def _cmd_preset(args) -> int:
    if args.list or not args.preset:
        for name in preset_names():
            print(name)
        return 0
    config = preset_config(args.preset, seed=args.seed,
                           overrides=parse_overrides(args.override))
    outdir = args.out or args.preset
    return _run_and_emit(config, resolve_initial(config), outdir)


def _cmd_check_gradients(args) -> int:
    n = 36
    beta, mass = 4.0, 0.25
    rng = datagen.CounterRng(args.seed, stream=9)
    v = 0.8 * (2.0 * rng.uniforms(n) - 1.0)
    v0 = datagen.true_potential(n)
    ens = diagonalize(build_hamiltonian(v, mass), beta)
    samples = datagen.sample_positions(likelihood_density(ens), 200,
                                       args.seed)
    neg_lap = build_laplacian(n)
    diff = build_shift_difference(n, 1)
    v1, v2 = datagen.two_band_reference_potentials(n)

    checks = []

    def add(name, energy_fn, grad_fn, tol):
        err = gradients.fd_check(energy_fn, grad_fn, v)
        checks.append((name, err, tol))

    def nll(w):
        e = diagonalize(build_hamiltonian(w, mass), beta)
        from .ensemble import log_likelihood
        return -log_likelihood(samples, e)

    add("log-likelihood", nll,
        lambda w: -gradients.grad_log_likelihood(
            diagonalize(build_hamiltonian(w, mass), beta),
            samples).gradient, 1e-4)

    def penalty(w):
        e = diagonalize(build_hamiltonian(w, mass), beta)
        return gradients.energy_penalty(e, 1000.0, -0.33)

    add("energy-penalty", penalty,
        lambda w: gradients.grad_energy_penalty(
            diagonalize(build_hamiltonian(w, mass), beta),
            1000.0, -0.33).gradient, 1e-4)

    models = {
        "gaussian": priors.GaussianPrior(k0=0.2 * neg_lap, v0=v0),
        "switch-fixed": priors.SwitchFixedReferencePrior(
            v0=v0, lam1=0.2, lam2=0.2, nu=5.0, vartheta=0.15,
            neg_lap=neg_lap),
        "switch-two": priors.SwitchTwoReferencesPrior(
            v1=v1, v2=v2, lam1=10.0, lam2=10.0, nu=5.0, vartheta=0.1,
            w=diff),
        "cup": priors.CupPrior(w=diff, v0=v0, a=5.0, b=10.0, gamma=0.7),
    }
    for name, model in models.items():
        add(f"prior:{name}", model.energy, model.gradient, 1e-6)

    ok = True
    print(f"{'gradient':<24}{'rel error':>14}{'tolerance':>12}  status")
    for name, err, tol in checks:
        good = err <= tol
        ok = ok and good
        print(f"{name:<24}{err:>14.3e}{tol:>12.0e}  "
              f"{'ok' if good else 'FAIL'}")
    return 0 if ok else 2


def _cmd_anneal_demo(args) -> int:
    n = 12
    pattern = np.zeros(n)
    pattern[3:8] = 1.0
    weights = 1.0 + ((np.arange(n) * 7) % 5) / 10.0

    def energy(b):
        return float(np.sum(weights * (b - pattern) ** 2)
                     + 1.5 * priors.count_discontinuities(b))

    best_e = np.inf
    for code in range(1 << n):
        b = np.array([(code >> i) & 1 for i in range(n)], dtype=float)
        e = energy(b)
        if e < best_e:
            best_e = e
    print(f"enumerated optimum over {1 << n} fields: E = {best_e:.6f}")

    hits = 0
    for k in range(10):
        rng = datagen.CounterRng(args.seed + k)
        res = anneal_binary_field(np.zeros(n), energy, AnnealSchedule(), rng)
        hit = abs(res.energy - best_e) == 0.0
        hits += hit
        print(f"  run {k}: E = {res.energy:.6f} "
              f"({'optimal' if hit else 'suboptimal'}, "
              f"accepted {res.n_accepted}/{res.n_moves})")
    print(f"{hits}/10 runs reached the optimum")
    return 0 if hits >= 9 else 2


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        if args.command == "sample":
            return _cmd_sample(args)
        if args.command == "reconstruct":
            return _cmd_reconstruct(args)
        if args.command == "preset":
            return _cmd_preset(args)
        if args.command == "check-gradients":
            return _cmd_check_gradients(args)
        if args.command == "anneal-demo":
            return _cmd_anneal_demo(args)
        parser.error(f"unknown command {args.command!r}")
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
