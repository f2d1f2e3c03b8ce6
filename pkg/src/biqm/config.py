"""Reconstruction run configuration: INI grammar, validation, round-trip.

A configuration file has the sections below; every key is optional and
falls back to the listed default.  Unknown sections or keys are hard errors
(typos must not silently change a run).

[lattice]   n = 36                 lattice size (integer >= 2)
            boundary = last        sites pinned to v = 0: 'last', 'none', or
                                   comma-separated 0-based indices
[ensemble]  mass = 0.25            particle mass (> 0)
            beta = 4.0             inverse temperature (>= 0)
[data]      source = sample        'sample' (draw from the benchmark truth)
                                   or 'file'
            n = 200                sample count for source = sample
            file =                 sample file path for source = file
[prior]     variant = gaussian     gaussian | periodic-cov | switch-fixed |
                                   switch-two | hyperfield-mix | cup
            lambda = 0.2           overall scale of the Gaussian kernel
            kernel = laplacian     laplacian | rbf (gaussian variant)
            rbf_sigma = 1.0        width of the rbf kernel
            gamma = 1.0            periodicity weight (periodic-cov)
            theta = 6              period in sites (periodic-cov)
            lambda1 = 0.2          switching weights (switch-*/hyperfield-mix)
            lambda2 = 0.2
            nu = inf               sigmoid sharpness: float, 'inf', or 'ramp'
            vartheta = 0.0         switching threshold
            tau = 0.0              discontinuity-count weight
            template = zero        zero | periodic | two-band
            template_amplitude = 1.0
            template_period = 6.0
            template_phase = 0.0
            cup_a = 5.0            cup saturation height
            cup_b = 10.0           cup width
            cup_gamma = 0.7        cup exponent
            cup_x0 = 0.0           cup center
[penalty]   mu = 0.0               average-energy penalty weight (>= 0)
            kappa = auto           target energy: 'auto' (recompute from the
                                   benchmark truth) or a float
[optimizer] preconditioner = k0    k0 | identity
            tol = 1e-6             final preconditioned gradient tolerance
            stage_tol = 1e-3       tolerance for intermediate stages
            max_iter = 5000        total iteration budget
            stage_max_iter = 150   per-stage budget (non-final stages)
            mu_stages = 10         geometric mu ramp length
            nu_stages = 10         geometric nu ramp length (nu = ramp)
            nu_final = 1000.0      last finite nu before the step limit
            anneal_t_initial = 1.0
            anneal_t_final = 0.001
            anneal_cooling = 0.95
            anneal_moves_per_site = 50
            anneal_cadence = 50    optimizer iterations between field anneals
[init]      guess = zero           zero | template | piecewise | anneal-mix |
                                   chain:<preset> | file:<path>
[run]       seed = 20200620       unsigned 64-bit seed
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass

SECTION_ORDER = ("lattice", "ensemble", "data", "prior", "penalty",
                 "optimizer", "init", "run")

DEFAULTS: dict[str, dict[str, str]] = {
    "lattice": {"n": "36", "boundary": "last"},
    "ensemble": {"mass": "0.25", "beta": "4.0"},
    "data": {"source": "sample", "n": "200", "file": ""},
    "prior": {
        "variant": "gaussian", "lambda": "0.2", "kernel": "laplacian",
        "rbf_sigma": "1.0", "gamma": "1.0", "theta": "6",
        "lambda1": "0.2", "lambda2": "0.2", "nu": "inf", "vartheta": "0.0",
        "tau": "0.0", "template": "zero", "template_amplitude": "1.0",
        "template_period": "6.0", "template_phase": "0.0",
        "cup_a": "5.0", "cup_b": "10.0", "cup_gamma": "0.7", "cup_x0": "0.0",
    },
    "penalty": {"mu": "0.0", "kappa": "auto"},
    "optimizer": {
        "preconditioner": "k0", "tol": "1e-6", "stage_tol": "1e-3",
        "max_iter": "5000", "stage_max_iter": "150", "mu_stages": "10",
        "nu_stages": "10", "nu_final": "1000.0", "anneal_t_initial": "1.0",
        "anneal_t_final": "0.001", "anneal_cooling": "0.95",
        "anneal_moves_per_site": "50", "anneal_cadence": "50",
    },
    "init": {"guess": "zero"},
    "run": {"seed": "20200620"},
}


class ConfigError(ValueError):
    """Configuration file or override is malformed or out of range."""


@dataclass(frozen=True)
class LatticeCfg:
    n: int
    boundary: tuple


@dataclass(frozen=True)
class EnsembleCfg:
    mass: float
    beta: float


@dataclass(frozen=True)
class DataCfg:
    source: str
    n: int
    file: str


@dataclass(frozen=True)
class PriorCfg:
    variant: str
    lam: float
    kernel: str
    rbf_sigma: float
    gamma: float
    theta: float
    lam1: float
    lam2: float
    nu: float
    nu_policy: str
    vartheta: float
    tau: float
    template: str
    template_amplitude: float
    template_period: float
    template_phase: float
    cup_a: float
    cup_b: float
    cup_gamma: float
    cup_x0: float


@dataclass(frozen=True)
class PenaltyCfg:
    mu: float
    kappa: float | None  # None means "auto"


@dataclass(frozen=True)
class OptimizerCfg:
    preconditioner: str
    tol: float
    stage_tol: float
    max_iter: int
    stage_max_iter: int
    mu_stages: int
    nu_stages: int
    nu_final: float
    anneal_t_initial: float
    anneal_t_final: float
    anneal_cooling: float
    anneal_moves_per_site: int
    anneal_cadence: int


@dataclass(frozen=True)
class InitCfg:
    guess: str


@dataclass(frozen=True)
class RunCfg:
    seed: int


@dataclass(frozen=True)
class ReconstructionConfig:
    lattice: LatticeCfg
    ensemble: EnsembleCfg
    data: DataCfg
    prior: PriorCfg
    penalty: PenaltyCfg
    optimizer: OptimizerCfg
    init: InitCfg
    run: RunCfg


def _fail(key: str, msg: str):
    raise ConfigError(f"{key}: {msg}")


def _float(raw: str, key: str, lo: float | None = None,
           allow_inf: bool = False) -> float:
    try:
        value = float(raw)
    except ValueError:
        _fail(key, f"expected a real number, got {raw!r}")
    if value != value:
        _fail(key, f"must not be NaN, got {raw!r}")
    if not allow_inf and abs(value) == float("inf"):
        _fail(key, f"must be finite, got {raw!r}")
    if lo is not None and value < lo:
        _fail(key, f"must be >= {lo}, got {value}")
    return value


def _int(raw: str, key: str, lo: int | None = None) -> int:
    try:
        value = int(raw)
    except ValueError:
        _fail(key, f"expected an integer, got {raw!r}")
    if lo is not None and value < lo:
        _fail(key, f"must be >= {lo}, got {value}")
    return value


def _choice(raw: str, key: str, options) -> str:
    if raw not in options:
        _fail(key, f"must be one of {sorted(options)}, got {raw!r}")
    return raw


def merge_mappings(*mappings) -> dict[str, dict[str, str]]:
    """Overlay string-valued section mappings left to right over the defaults."""
    merged = {sec: dict(keys) for sec, keys in DEFAULTS.items()}
    for mapping in mappings:
        if not mapping:
            continue
        for sec, keys in mapping.items():
            if sec not in merged:
                raise ConfigError(f"unknown section [{sec}]")
            for key, value in keys.items():
                if key not in merged[sec]:
                    raise ConfigError(f"unknown key {sec}.{key}")
                merged[sec][key] = str(value)
    return merged


def parse_overrides(pairs) -> dict[str, dict[str, str]]:
    """Turn 'section.key=value' strings into a section mapping."""
    out: dict[str, dict[str, str]] = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form "
                              "section.key=value")
        dotted, value = pair.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"override key {dotted!r} must be section.key")
        sec, key = dotted.split(".", 1)
        out.setdefault(sec.strip(), {})[key.strip()] = value.strip()
    return out


def config_from_mapping(*mappings) -> ReconstructionConfig:
    """Validate merged string mappings into a typed configuration."""
    m = merge_mappings(*mappings)

    n = _int(m["lattice"]["n"], "lattice.n", lo=2)
    braw = m["lattice"]["boundary"].strip()
    if braw == "none" or braw == "":
        boundary: tuple = ()
    elif braw == "last":
        boundary = (n - 1,)
    else:
        try:
            idx = sorted({int(tok) for tok in braw.split(",")})
        except ValueError:
            _fail("lattice.boundary", f"expected 'last', 'none', or comma-"
                  f"separated indices, got {braw!r}")
        if idx and (idx[0] < 0 or idx[-1] >= n):
            _fail("lattice.boundary", f"indices must lie in 0..{n - 1}")
        boundary = tuple(idx)
    lattice = LatticeCfg(n=n, boundary=boundary)

    ens = EnsembleCfg(
        mass=_float(m["ensemble"]["mass"], "ensemble.mass", lo=0.0),
        beta=_float(m["ensemble"]["beta"], "ensemble.beta", lo=0.0))
    if ens.mass == 0.0:
        _fail("ensemble.mass", "must be > 0")

    source = _choice(m["data"]["source"], "data.source", {"sample", "file"})
    data = DataCfg(source=source,
                   n=_int(m["data"]["n"], "data.n", lo=1),
                   file=m["data"]["file"].strip())
    if source == "file" and not data.file:
        _fail("data.file", "required when data.source = file")

    p = m["prior"]
    variant = _choice(p["variant"], "prior.variant",
                      {"gaussian", "periodic-cov", "switch-fixed",
                       "switch-two", "hyperfield-mix", "cup"})
    nu_raw = p["nu"].strip()
    if nu_raw == "ramp":
        nu_policy, nu = "ramp", float("inf")
    else:
        nu_policy = "fixed"
        nu = _float(nu_raw, "prior.nu", lo=0.0, allow_inf=True)
    template = _choice(p["template"], "prior.template",
                       {"zero", "periodic", "two-band"})
    if variant in ("switch-two", "hyperfield-mix") and template != "two-band":
        _fail("prior.template", f"variant {variant} requires template = two-band")
    if variant in ("gaussian", "periodic-cov", "switch-fixed", "cup") \
            and template == "two-band":
        _fail("prior.template", f"variant {variant} takes a single template")
    theta = _float(p["theta"], "prior.theta", lo=1.0)
    if variant == "periodic-cov" and (int(theta) != theta or theta >= n):
        _fail("prior.theta", f"must be an integer shift in 1..{n - 1}")
    prior = PriorCfg(
        variant=variant,
        lam=_float(p["lambda"], "prior.lambda", lo=0.0),
        kernel=_choice(p["kernel"], "prior.kernel", {"laplacian", "rbf"}),
        rbf_sigma=_float(p["rbf_sigma"], "prior.rbf_sigma", lo=0.0),
        gamma=_float(p["gamma"], "prior.gamma", lo=0.0),
        theta=theta,
        lam1=_float(p["lambda1"], "prior.lambda1", lo=0.0),
        lam2=_float(p["lambda2"], "prior.lambda2", lo=0.0),
        nu=nu, nu_policy=nu_policy,
        vartheta=_float(p["vartheta"], "prior.vartheta"),
        tau=_float(p["tau"], "prior.tau", lo=0.0),
        template=template,
        template_amplitude=_float(p["template_amplitude"],
                                  "prior.template_amplitude"),
        template_period=_float(p["template_period"], "prior.template_period"),
        template_phase=_float(p["template_phase"], "prior.template_phase"),
        cup_a=_float(p["cup_a"], "prior.cup_a", lo=0.0),
        cup_b=_float(p["cup_b"], "prior.cup_b", lo=0.0),
        cup_gamma=_float(p["cup_gamma"], "prior.cup_gamma", lo=0.0),
        cup_x0=_float(p["cup_x0"], "prior.cup_x0"))
    if prior.template_period == 0.0:
        _fail("prior.template_period", "must be nonzero")

    kraw = m["penalty"]["kappa"].strip()
    penalty = PenaltyCfg(
        mu=_float(m["penalty"]["mu"], "penalty.mu", lo=0.0),
        kappa=None if kraw == "auto" else _float(kraw, "penalty.kappa"))

    o = m["optimizer"]
    optimizer = OptimizerCfg(
        preconditioner=_choice(o["preconditioner"], "optimizer.preconditioner",
                               {"k0", "identity"}),
        tol=_float(o["tol"], "optimizer.tol", lo=0.0),
        stage_tol=_float(o["stage_tol"], "optimizer.stage_tol", lo=0.0),
        max_iter=_int(o["max_iter"], "optimizer.max_iter", lo=1),
        stage_max_iter=_int(o["stage_max_iter"], "optimizer.stage_max_iter",
                            lo=1),
        mu_stages=_int(o["mu_stages"], "optimizer.mu_stages", lo=1),
        nu_stages=_int(o["nu_stages"], "optimizer.nu_stages", lo=1),
        nu_final=_float(o["nu_final"], "optimizer.nu_final", lo=1.0),
        anneal_t_initial=_float(o["anneal_t_initial"],
                                "optimizer.anneal_t_initial", lo=0.0,
                                allow_inf=True),
        anneal_t_final=_float(o["anneal_t_final"], "optimizer.anneal_t_final",
                              lo=0.0),
        anneal_cooling=_float(o["anneal_cooling"], "optimizer.anneal_cooling",
                              lo=0.0),
        anneal_moves_per_site=_int(o["anneal_moves_per_site"],
                                   "optimizer.anneal_moves_per_site", lo=1),
        anneal_cadence=_int(o["anneal_cadence"], "optimizer.anneal_cadence",
                            lo=1))
    if not (0.0 < optimizer.anneal_cooling < 1.0):
        _fail("optimizer.anneal_cooling", "must lie strictly between 0 and 1")

    guess = m["init"]["guess"].strip()
    basic = {"zero", "template", "piecewise", "anneal-mix"}
    if guess not in basic and not guess.startswith(("chain:", "file:")):
        _fail("init.guess", f"must be one of {sorted(basic)} or "
              f"chain:<preset> or file:<path>, got {guess!r}")
    init = InitCfg(guess=guess)

    seed = _int(m["run"]["seed"], "run.seed", lo=0)
    if seed >= 1 << 64:
        _fail("run.seed", "must fit in 64 bits")
    run = RunCfg(seed=seed)

    return ReconstructionConfig(lattice=lattice, ensemble=ens, data=data,
                                prior=prior, penalty=penalty,
                                optimizer=optimizer, init=init, run=run)


def _read_ini(text: str, origin: str) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from exc
    return {sec: dict(parser.items(sec)) for sec in parser.sections()}


def parse_config(path) -> ReconstructionConfig:
    """Parse and validate an INI configuration file."""
    with open(path) as fh:
        text = fh.read()
    return config_from_mapping(_read_ini(text, str(path)))


def parse_config_text(text: str, origin: str = "<config>") -> ReconstructionConfig:
    return config_from_mapping(_read_ini(text, origin))


def _format_value(sec: str, key: str, value) -> str:
    if sec == "lattice" and key == "boundary":
        return "none" if not value else ",".join(str(i) for i in value)
    if sec == "penalty" and key == "kappa":
        return "auto" if value is None else repr(value)
    if sec == "prior" and key == "nu":
        return value  # already a string prepared by serialize_config
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(config: ReconstructionConfig) -> str:
    """Render the full configuration (every key) as INI text.

    parse(serialize(cfg)) == cfg, so configurations round-trip exactly:
    floats are written with repr (shortest exact form).
    """
    prior = config.prior
    nu_str = "ramp" if prior.nu_policy == "ramp" else repr(prior.nu) \
        if not (prior.nu == float("inf")) else "inf"
    values = {
        "lattice": {"n": config.lattice.n, "boundary": config.lattice.boundary},
        "ensemble": {"mass": config.ensemble.mass, "beta": config.ensemble.beta},
        "data": {"source": config.data.source, "n": config.data.n,
                 "file": config.data.file},
        "prior": {
            "variant": prior.variant, "lambda": prior.lam,
            "kernel": prior.kernel, "rbf_sigma": prior.rbf_sigma,
            "gamma": prior.gamma, "theta": prior.theta,
            "lambda1": prior.lam1, "lambda2": prior.lam2, "nu": nu_str,
            "vartheta": prior.vartheta, "tau": prior.tau,
            "template": prior.template,
            "template_amplitude": prior.template_amplitude,
            "template_period": prior.template_period,
            "template_phase": prior.template_phase,
            "cup_a": prior.cup_a, "cup_b": prior.cup_b,
            "cup_gamma": prior.cup_gamma, "cup_x0": prior.cup_x0,
        },
        "penalty": {"mu": config.penalty.mu, "kappa": config.penalty.kappa},
        "optimizer": {
            "preconditioner": config.optimizer.preconditioner,
            "tol": config.optimizer.tol,
            "stage_tol": config.optimizer.stage_tol,
            "max_iter": config.optimizer.max_iter,
            "stage_max_iter": config.optimizer.stage_max_iter,
            "mu_stages": config.optimizer.mu_stages,
            "nu_stages": config.optimizer.nu_stages,
            "nu_final": config.optimizer.nu_final,
            "anneal_t_initial": config.optimizer.anneal_t_initial,
            "anneal_t_final": config.optimizer.anneal_t_final,
            "anneal_cooling": config.optimizer.anneal_cooling,
            "anneal_moves_per_site": config.optimizer.anneal_moves_per_site,
            "anneal_cadence": config.optimizer.anneal_cadence,
        },
        "init": {"guess": config.init.guess},
        "run": {"seed": config.run.seed},
    }
    out = io.StringIO()
    for sec in SECTION_ORDER:
        out.write(f"[{sec}]\n")
        for key in DEFAULTS[sec]:
            out.write(f"{key} = {_format_value(sec, key, values[sec][key])}\n")
        out.write("\n")
    return out.getvalue()
