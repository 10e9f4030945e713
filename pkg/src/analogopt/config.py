"""Experiment configuration: named presets and the INI config file format.

The config file uses sections [run], [llm], [acquisition], [sampler], and
[evaluator]. Process constants are overridable with ``constants.<name>``
keys in [evaluator]. Presets bundle a circuit model (design space, constants,
FOM definition) with the task-card text templates.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from importlib import resources

from .acquisition import AcquisitionConfig
from .core import ConfigError
from .evaluator import CircuitModel, ProcessConstants, circuit_model
from .llm import LlmConfig, TaskCard
from .surrogate import GpFitConfig

METHODS = ("ado_llm", "gp_bo", "llm_only")
INIT_STRATEGIES = ("llm_zero_shot", "uniform_random")
SAMPLER_KINDS = ("top_k", "uniform", "none")
PRESETS = ("amp2", "comparator", "branin", "hartmann6")

_CARD_TEMPLATES = {
    "amp2": ("circuit_amp2.txt", "principles_amp2.txt"),
    "comparator": ("circuit_comparator.txt", "principles_comparator.txt"),
    "branin": ("circuit_synthetic.txt", "principles_synthetic.txt"),
    "hartmann6": ("circuit_synthetic.txt", "principles_synthetic.txt"),
}

# Default per-iteration query split for each method.
_METHOD_QUERIES = {"ado_llm": (1, 4), "gp_bo": (0, 5), "llm_only": (1, 0)}


@dataclass(frozen=True)
class RunConfig:
    method: str
    preset: str
    n_init: int = 5
    n_iter: int = 20
    llm_queries_per_step: int = 1
    gp_queries_per_step: int = 4
    init_strategy: str = "llm_zero_shot"
    sampler_kind: str = "top_k"
    sampler_k: int = 5
    seed: int = 0
    out: str | None = None
    mock: str | None = None
    principles_file: str | None = None
    llm: LlmConfig = field(default_factory=LlmConfig)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    gp_fit: GpFitConfig = field(default_factory=GpFitConfig)
    constants: ProcessConstants = field(default_factory=ProcessConstants)

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected {METHODS}")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; expected {PRESETS}")
        if self.init_strategy not in INIT_STRATEGIES:
            raise ConfigError(f"unknown init_strategy {self.init_strategy!r}")
        if self.sampler_kind not in SAMPLER_KINDS:
            raise ConfigError(f"unknown sampler kind {self.sampler_kind!r}")
        if self.n_init < 1 or self.n_iter < 0:
            raise ConfigError("n_init must be >= 1 and n_iter >= 0")
        if self.method == "gp_bo" and self.llm_queries_per_step != 0:
            raise ConfigError("gp_bo runs with llm_queries_per_step = 0")
        if self.method == "llm_only" and self.gp_queries_per_step != 0:
            raise ConfigError("llm_only runs with gp_queries_per_step = 0")
        if self.method == "ado_llm" and (
            self.llm_queries_per_step < 1 or self.gp_queries_per_step < 1
        ):
            raise ConfigError("ado_llm needs both llm and gp queries per step")
        if self.llm_queries_per_step + self.gp_queries_per_step < 1:
            raise ConfigError("at least one query per step is required")

    @property
    def batch_size(self) -> int:
        return self.llm_queries_per_step + self.gp_queries_per_step

    @property
    def total_evaluations(self) -> int:
        return self.n_init + self.batch_size * self.n_iter

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        return out


def build_model(config: RunConfig) -> CircuitModel:
    return circuit_model(config.preset, config.constants)


def build_task_card(config: RunConfig, model: CircuitModel) -> TaskCard:
    circuit_name, principles_name = _CARD_TEMPLATES[config.preset]
    circuit_text = (
        resources.files("analogopt.templates").joinpath(circuit_name).read_text(
            encoding="utf-8"
        )
    )
    if config.principles_file:
        with open(config.principles_file, encoding="utf-8") as handle:
            principles_text = handle.read()
    else:
        principles_text = (
            resources.files("analogopt.templates")
            .joinpath(principles_name)
            .read_text(encoding="utf-8")
        )
    return TaskCard(
        name=config.preset,
        space=model.space,
        fom=model.fom,
        circuit_text=circuit_text,
        principles_text=principles_text,
    )


_RUN_KEYS = {
    "method", "preset", "n_init", "n_iter", "llm_queries_per_step",
    "gp_queries_per_step", "init_strategy", "seed", "out",
}
_LLM_KEYS = {
    "endpoint", "model", "temperature", "max_tokens", "context_budget",
    "retry_limit", "api_key_env", "timeout", "transport_attempts", "backoff",
    "mock", "principles_file",
}
_ACQ_KEYS = {"mc_samples", "restarts", "raw_candidates", "maxiter"}
_GP_KEYS = {"gp_restarts", "noise_floor", "gp_maxiter"}
_SAMPLER_KEYS = {"kind", "k"}


def load_run_config(path: str, **overrides) -> RunConfig:
    """Parse an INI experiment file; keyword overrides win over file values."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    try:
        return _from_parser(parser, overrides)
    except (ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc


def _check_keys(section, present, allowed):
    unknown = set(present) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) in [{section}]: {sorted(unknown)}; "
            f"allowed: {sorted(allowed)}"
        )


def _from_parser(parser: configparser.ConfigParser, overrides: dict) -> RunConfig:
    if "run" not in parser:
        raise ConfigError("config file needs a [run] section")
    run = parser["run"]
    _check_keys("run", run.keys(), _RUN_KEYS)
    method = overrides.get("method", run.get("method"))
    preset = overrides.get("preset", run.get("preset"))
    if not method or not preset:
        raise ConfigError("[run] must set both method and preset")
    default_llm_q, default_gp_q = _METHOD_QUERIES.get(method, (1, 4))

    llm_section = parser["llm"] if "llm" in parser else {}
    _check_keys("llm", llm_section.keys(), _LLM_KEYS)
    acq_section = parser["acquisition"] if "acquisition" in parser else {}
    _check_keys("acquisition", acq_section.keys(), _ACQ_KEYS | _GP_KEYS)
    sampler_section = parser["sampler"] if "sampler" in parser else {}
    _check_keys("sampler", sampler_section.keys(), _SAMPLER_KEYS)

    constants = ProcessConstants()
    if "evaluator" in parser:
        updates = {}
        for key, raw in parser["evaluator"].items():
            if not key.startswith("constants."):
                raise ConfigError(
                    f"unknown key in [evaluator]: {key!r}; use constants.<name>"
                )
            name = key.split(".", 1)[1]
            if name not in ProcessConstants.__dataclass_fields__:
                raise ConfigError(f"unknown process constant {name!r}")
            updates[name] = float(raw)
        constants = dataclasses.replace(constants, **updates)

    def geti(section, key, default):
        return int(section.get(key, default))

    def getf(section, key, default):
        return float(section.get(key, default))

    llm_config = LlmConfig(
        endpoint=llm_section.get("endpoint", LlmConfig.endpoint),
        model=llm_section.get("model", LlmConfig.model),
        temperature=getf(llm_section, "temperature", LlmConfig.temperature),
        max_tokens=geti(llm_section, "max_tokens", LlmConfig.max_tokens),
        context_budget=geti(llm_section, "context_budget", LlmConfig.context_budget),
        retry_limit=geti(llm_section, "retry_limit", LlmConfig.retry_limit),
        api_key_env=llm_section.get("api_key_env", LlmConfig.api_key_env),
        timeout=getf(llm_section, "timeout", LlmConfig.timeout),
        transport_attempts=geti(
            llm_section, "transport_attempts", LlmConfig.transport_attempts
        ),
        backoff=getf(llm_section, "backoff", LlmConfig.backoff),
    )
    acquisition = AcquisitionConfig(
        batch_size=max(int(run.get("gp_queries_per_step", default_gp_q)), 1),
        mc_samples=geti(acq_section, "mc_samples", AcquisitionConfig.mc_samples),
        restarts=geti(acq_section, "restarts", AcquisitionConfig.restarts),
        raw_candidates=geti(
            acq_section, "raw_candidates", AcquisitionConfig.raw_candidates
        ),
        maxiter=geti(acq_section, "maxiter", AcquisitionConfig.maxiter),
    )
    gp_fit = GpFitConfig(
        restarts=geti(acq_section, "gp_restarts", GpFitConfig.restarts),
        noise_floor=getf(acq_section, "noise_floor", GpFitConfig.noise_floor),
        maxiter=geti(acq_section, "gp_maxiter", GpFitConfig.maxiter),
    )

    config = RunConfig(
        method=method,
        preset=preset,
        n_init=geti(run, "n_init", 5),
        n_iter=geti(run, "n_iter", 20),
        llm_queries_per_step=geti(run, "llm_queries_per_step", default_llm_q),
        gp_queries_per_step=geti(run, "gp_queries_per_step", default_gp_q),
        init_strategy=overrides.get(
            "init_strategy",
            run.get(
                "init_strategy",
                "uniform_random" if method == "gp_bo" else "llm_zero_shot",
            ),
        ),
        sampler_kind=sampler_section.get("kind", "top_k"),
        sampler_k=geti(sampler_section, "k", 5),
        seed=int(overrides.get("seed", run.get("seed", 0))),
        out=overrides.get("out", run.get("out")),
        mock=overrides.get("mock", llm_section.get("mock")),
        principles_file=llm_section.get("principles_file"),
        llm=llm_config,
        acquisition=acquisition,
        gp_fit=gp_fit,
        constants=constants,
    )
    return config
