"""Scenario files: INI sections describing a plant, a formula and solver settings.

Values may reference other options with ``${option}`` (same section) or
``${section:option}``, which is how long formulas are assembled from named
regions. Every problem is reported as a :class:`ScenarioError` carrying the
file, line and ``section.option`` it came from.

Schema (all sections except ``[plant]`` and ``[formula]`` are optional)::

    [scenario]  name, seed, out
    [plant]     model (dubins | linear | integrator), initial, plus model
                parameters: dt, vehicles, v_max, omega_max, workspace,
                u_bound, A, B (matrices as "a b; c d")
    [formula]   phi, optional check (defaults to G[0,h_m] phi), helper keys
    [synth]     beta, beta_rect, beta_refine, robustness, epsilon, margin,
                xi, xi_fraction, stage1_iters, stage2_iters, stage3_iters,
                init, anneal, beta_max, restarts, state_box, stage3,
                alpha0, schedule, kappa, ratio, backtracking
    [cost]      name (motion | effort | none)
    [mpc]       h_m, warm_start, history
    [noise]     variance or std
    [smc]       delta, confidence, max_samples, policy (synthesize | mpc),
                trials (replay | mpc)
    [loop]      k_min, k_max, period_min, period_max, eta, iters_per_weight,
                weights, refine, periods
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .lang import Formula, ParseError, horizon, parse
from .mpc import LoopSearchConfig, MpcConfig, closed_loop_formula
from .plant import COSTS, PLANTS, CostFunction, SystemModel
from .smc import SmcConfig
from .synth import StepSchedule, SynthConfig

BUNDLED = "scenarios"

_KNOWN = {
    "scenario": {"name", "seed", "out"},
    "plant": {"model", "initial", "dt", "vehicles", "v_max", "omega_max", "workspace",
              "u_bound", "a", "b"},
    "synth": {"beta", "beta_rect", "beta_refine", "robustness", "epsilon", "margin", "xi",
              "xi_fraction", "stage1_iters", "stage2_iters", "stage3_iters", "init",
              "anneal", "beta_max", "restarts", "state_box", "stage3", "alpha0",
              "schedule", "kappa", "ratio", "backtracking"},
    "cost": {"name"},
    "mpc": {"h_m", "warm_start", "history"},
    "noise": {"variance", "std"},
    "smc": {"delta", "confidence", "max_samples", "policy", "trials"},
    "loop": {"k_min", "k_max", "period_min", "period_max", "eta", "iters_per_weight",
             "weights", "refine", "periods"},
}

_PLANT_PARAMS = {
    "dubins": {"dt", "vehicles", "v_max", "omega_max", "workspace"},
    "linear": {"a", "b", "u_bound", "dt"},
    "integrator": {"u_bound", "dt"},
}


class ScenarioError(ValueError):
    def __init__(self, message: str, path: str = "<string>", line: int | None = None,
                 field: str | None = None):
        self.path, self.line, self.field = path, line, field
        where = path if line is None else f"{path}:{line}"
        if field:
            where += f" [{field}]"
        super().__init__(f"{where}: {message}")


@dataclass
class Scenario:
    name: str
    seed: int
    system: SystemModel
    plant: dict
    gamma: np.ndarray
    formula_text: str
    formula: Formula
    check: Formula
    synth: SynthConfig
    cost_name: str
    cost: CostFunction | None
    mpc: MpcConfig
    noise_std: float | None
    smc: SmcConfig
    smc_policy: str = "synthesize"
    smc_trials: str = "replay"
    loop: LoopSearchConfig = field(default_factory=LoopSearchConfig)
    loop_periods: int = 3
    out: Path = Path("out")
    source: str = "<string>"

    @property
    def horizon(self) -> int:
        return horizon(self.formula)

    def with_seed(self, seed: int) -> "Scenario":
        from dataclasses import replace
        return replace(self, seed=seed, synth=replace(self.synth, seed=seed),
                       mpc=replace(self.mpc, synth=replace(self.mpc.synth, seed=seed)),
                       smc=replace(self.smc, seed=seed))

    def with_beta(self, beta: float) -> "Scenario":
        from dataclasses import replace
        synth = replace(self.synth, beta=beta)
        return replace(self, synth=synth, mpc=replace(self.mpc, synth=synth))


def _line_of(text: str, section: str, option: str | None = None) -> int | None:
    current = None
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip().lower()
            if option is None and current == section:
                return i
            continue
        if current == section and option is not None:
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
            if key == option:
                return i
    return None


class _Reader:
    """Typed option access that turns every failure into a located ScenarioError."""

    def __init__(self, cp: configparser.ConfigParser, text: str, path: str):
        self.cp, self.text, self.path = cp, text, path

    def error(self, message, section, option=None):
        fld = section if option is None else f"{section}.{option}"
        return ScenarioError(message, self.path, _line_of(self.text, section, option), fld)

    def has(self, section, option):
        return self.cp.has_option(section, option)

    def raw(self, section, option, default=None, required=False):
        if not self.has(section, option):
            if required:
                raise self.error("missing required option", section, option)
            return default
        try:
            return self.cp.get(section, option).strip()
        except configparser.InterpolationError as e:
            raise self.error(f"bad ${{...}} reference: {e.message}", section, option) from None

    def typed(self, section, option, conv, default=None, what="value"):
        v = self.raw(section, option)
        if v is None:
            return default
        try:
            return conv(v)
        except (TypeError, ValueError) as e:
            raise self.error(f"expected {what}, got {v!r} ({e})", section, option) from None

    def float(self, section, option, default=None):
        return self.typed(section, option, float, default, "a number")

    def int(self, section, option, default=None):
        return self.typed(section, option, int, default, "an integer")

    def bool(self, section, option, default=None):
        if not self.has(section, option):
            return default
        try:
            return self.cp.getboolean(section, option)
        except ValueError:
            raise self.error(f"expected a boolean, got {self.raw(section, option)!r}",
                             section, option) from None

    def choice(self, section, option, choices, default=None):
        v = self.raw(section, option, default)
        if v is not None and v not in choices:
            raise self.error(f"expected one of {sorted(choices)}, got {v!r}", section, option)
        return v


def _vector(text: str) -> list[float]:
    return [float(t) for t in re.split(r"[,\s]+", text.strip()) if t]


def _matrix(text: str) -> list[list[float]]:
    rows = [_vector(r) for r in text.split(";") if r.strip()]
    if len({len(r) for r in rows}) != 1:
        raise ValueError("rows differ in length")
    return rows


def _plant(r: _Reader) -> tuple[SystemModel, dict]:
    model = r.choice("plant", "model", set(PLANTS), None)
    if model is None:
        raise r.error("missing required option", "plant", "model")
    params = {}
    for key in sorted(_KNOWN["plant"] - {"model", "initial"}):
        if not r.has("plant", key):
            continue
        if key not in _PLANT_PARAMS[model]:
            raise r.error(f"not a parameter of the {model} plant", "plant", key)
        if key in ("a", "b"):
            params[key.upper()] = r.typed("plant", key, _matrix, what="a matrix")
        elif key == "vehicles":
            params[key] = r.int("plant", key)
        else:
            params[key] = r.float("plant", key)
    try:
        system = PLANTS[model](**params)
    except (TypeError, ValueError) as e:
        raise r.error(f"cannot build plant: {e}", "plant") from None
    return system, {"model": model, **params}


def _synth(r: _Reader, seed: int) -> SynthConfig:
    s = "synth"
    sched_kw = {k: v for k, v in {
        "alpha0": r.float(s, "alpha0"),
        "kind": r.choice(s, "schedule", {"harmonic", "geometric", "constant"}),
        "kappa": r.float(s, "kappa"),
        "ratio": r.float(s, "ratio"),
        "backtracking": r.bool(s, "backtracking"),
    }.items() if v is not None}
    kw = {
        "beta": r.float(s, "beta"), "beta_rect": r.float(s, "beta_rect"),
        "beta_refine": r.float(s, "beta_refine"),
        "robustness": r.choice(s, "robustness", {"cumulative", "traditional"}),
        "epsilon": r.float(s, "epsilon"), "margin": r.float(s, "margin"),
        "xi": r.float(s, "xi"), "xi_fraction": r.float(s, "xi_fraction"),
        "stage1_iters": r.int(s, "stage1_iters"), "stage2_iters": r.int(s, "stage2_iters"),
        "stage3_iters": r.int(s, "stage3_iters"),
        "init": r.choice(s, "init", {"random", "zeros"}),
        "anneal": r.bool(s, "anneal"), "beta_max": r.float(s, "beta_max"),
        "restarts": r.int(s, "restarts"), "state_box": r.bool(s, "state_box"),
        "stage3": r.bool(s, "stage3"),
    }
    kw = {k: v for k, v in kw.items() if v is not None}
    try:
        return SynthConfig(schedule=StepSchedule(**sched_kw), seed=seed, **kw)
    except ValueError as e:
        raise r.error(str(e), s) from None


def _formula(r: _Reader, option: str, text: str, n: int) -> Formula:
    try:
        return parse(text, n)
    except ParseError as e:
        raise r.error(f"formula: {e}", "formula", option) from None


def loads(text: str, path: str = "<string>") -> Scenario:
    """Parse scenario text; ``path`` only labels diagnostics."""
    cp = configparser.ConfigParser(interpolation=configparser.ExtendedInterpolation(),
                                   inline_comment_prefixes=("#",))
    try:
        cp.read_string(text, source=path)
    except configparser.ParsingError as e:
        line, bad = e.errors[0]
        raise ScenarioError(f"cannot parse line {bad.strip()!r}", path, line) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as e:
        raise ScenarioError(e.message, path, e.lineno) from None
    except configparser.MissingSectionHeaderError as e:
        raise ScenarioError("option outside any [section]", path, e.lineno) from None
    r = _Reader(cp, text, path)

    for section in cp.sections():
        if section == "formula":
            continue
        if section not in _KNOWN:
            raise r.error("unknown section", section)
        for option in cp[section]:
            if option not in _KNOWN[section]:
                raise r.error("unknown option", section, option)
    for section in ("plant", "formula"):
        if not cp.has_section(section):
            raise ScenarioError(f"missing [{section}] section", path)

    seed = r.int("scenario", "seed", 0)
    if seed < 0:
        raise r.error("seed must be nonnegative", "scenario", "seed")
    system, plant = _plant(r)
    gamma = r.typed("plant", "initial", _vector, what="a list of numbers")
    if gamma is None:
        raise r.error("missing required option", "plant", "initial")
    if len(gamma) != system.n:
        raise r.error(f"initial state has {len(gamma)} entries, plant has {system.n}",
                      "plant", "initial")

    text_phi = r.raw("formula", "phi", required=True)
    phi = _formula(r, "phi", text_phi, system.n)
    if horizon(phi) == 0:
        raise r.error("formula has horizon 0", "formula", "phi")

    synth = _synth(r, seed)
    cost_name = r.choice("cost", "name", set(COSTS), "none")
    cost = None if cost_name == "none" else COSTS[cost_name]()

    h_m = r.int("mpc", "h_m", 0)
    try:
        mpc = MpcConfig(h_m=h_m, synth=synth, warm_start=r.bool("mpc", "warm_start", True),
                        history=r.bool("mpc", "history", True))
    except ValueError as e:
        raise r.error(str(e), "mpc", "h_m") from None
    check_text = r.raw("formula", "check")
    check = (closed_loop_formula(phi, h_m) if check_text is None
             else _formula(r, "check", check_text, system.n))

    if r.has("noise", "variance") and r.has("noise", "std"):
        raise r.error("give variance or std, not both", "noise")
    std = r.float("noise", "std")
    var = r.float("noise", "variance")
    if var is not None:
        if var < 0:
            raise r.error("variance must be nonnegative", "noise", "variance")
        std = float(np.sqrt(var))
    if std is not None and std < 0:
        raise r.error("std must be nonnegative", "noise", "std")

    smc_kw = {k: v for k, v in {
        "delta": r.float("smc", "delta"), "confidence": r.float("smc", "confidence"),
        "max_samples": r.int("smc", "max_samples")}.items() if v is not None}
    try:
        smc = SmcConfig(seed=seed, **smc_kw)
    except ValueError as e:
        raise r.error(str(e), "smc") from None

    loop_kw = {}
    if cp.has_section("loop"):
        d = LoopSearchConfig()
        loop_kw = {
            "k_range": (r.int("loop", "k_min", d.k_range[0]), r.int("loop", "k_max", d.k_range[1])),
            "period_range": (r.int("loop", "period_min", d.period_range[0]),
                             r.int("loop", "period_max", d.period_range[1])),
            "eta": r.float("loop", "eta", d.eta),
            "iters_per_weight": r.int("loop", "iters_per_weight", d.iters_per_weight),
            "weights": tuple(r.typed("loop", "weights", _vector, d.weights, "a list of numbers")),
            "refine": r.bool("loop", "refine", d.refine),
        }
    try:
        loop = LoopSearchConfig(**loop_kw)
    except ValueError as e:
        raise r.error(str(e), "loop") from None
    periods = r.int("loop", "periods", 3)
    if periods < 1:
        raise r.error("periods must be >= 1", "loop", "periods")

    name = r.raw("scenario", "name", Path(path).stem)
    return Scenario(
        name=name, seed=seed, system=system, plant=plant, gamma=np.asarray(gamma, float),
        formula_text=text_phi, formula=phi, check=check, synth=synth,
        cost_name=cost_name, cost=cost, mpc=mpc, noise_std=std, smc=smc,
        smc_policy=r.choice("smc", "policy", {"synthesize", "mpc"}, "synthesize"),
        smc_trials=r.choice("smc", "trials", {"replay", "mpc"}, "replay"),
        loop=loop, loop_periods=periods,
        out=Path(r.raw("scenario", "out", f"out/{name}")), source=path)


def load(path) -> Scenario:
    """Read a scenario file, or a bundled scenario by bare name (``vehicle2``)."""
    p = Path(path)
    if not p.exists() and p.parent == Path("."):
        name = p.name if p.suffix else p.name + ".scn"
        bundled = resources.files(__package__).joinpath(BUNDLED).joinpath(name)
        if bundled.is_file():
            return loads(bundled.read_text(), name)
    try:
        text = p.read_text()
    except OSError as e:
        raise ScenarioError(f"cannot read scenario: {e.strerror}", str(p)) from None
    return loads(text, str(p))


def bundled_scenarios() -> list[str]:
    root = resources.files(__package__).joinpath(BUNDLED)
    return sorted(f.name for f in root.iterdir() if f.name.endswith(".scn"))


def bundled_path(name: str):
    """Traversable for a bundled data file (scenario or trace)."""
    return resources.files(__package__).joinpath(BUNDLED).joinpath(name)


__all__ = ["Scenario", "ScenarioError", "load", "loads", "bundled_scenarios", "bundled_path"]
