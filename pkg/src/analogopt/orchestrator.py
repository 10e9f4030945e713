"""Experiment engine: the hybrid loop, both baselines, run logs, and reports.

Every run follows the same skeleton: initialize ``n_init`` points (LLM
zero-shot or uniform random), then iterate proposing a fixed per-iteration
batch (LLM proposals first, then the GP acquisition batch), evaluating, and
appending to the shared dataset. The GP is refit on the entire dataset every
iteration. All randomness derives from one master seed fanned out into fixed
per-component streams, so a rerun with the same configuration reproduces the
run log byte for byte (with a scripted or seeded mock client).

Run logs are JSONL: one header line, then eval / iteration / summary lines.
Recomputing the FOM from any logged metric vector reproduces the logged FOM
exactly; the report command verifies this replay invariant.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .acquisition import propose_batch, qei_mc
from .config import RunConfig, build_model, build_task_card
from .core import (
    ConfigError,
    Dataset,
    DesignPoint,
    Source,
    dataset_append,
    dataset_best,
)
from .evaluator import CircuitModel, evaluate
from .fom import FOM_PRESETS, compute_fom, count_missed_specs, hits_spec
from .llm import (
    Demonstration,
    HttpLlmClient,
    ProposerExhausted,
    RandomPointLlmClient,
    ScriptedLlmClient,
    load_script,
    propose,
    propose_init,
)
from .sampler import top_k, uniform_k
from .surrogate import from_unit_cube, gp_fit, to_unit_cube

VERSION = "0.1.0"
_SEED_STREAMS = ("init", "llm", "acquisition", "surrogate", "sampler")


class ReportError(ValueError):
    """A run log could not be parsed or failed the replay check."""


@dataclass
class RunLog:
    lines: list[dict]
    dataset: Dataset

    def text(self) -> str:
        return "\n".join(json.dumps(line, sort_keys=True) for line in self.lines) + "\n"

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(self.text())

    @property
    def header(self) -> dict:
        return self.lines[0]

    @property
    def summary(self) -> dict:
        return self.lines[-1]


def _preset_checksum(model: CircuitModel) -> str:
    payload = {
        "space": [
            [p.name, p.lower, p.upper, p.scale.value] for p in model.space.parameters
        ],
        "fom": [
            [m.name, m.direction.value, m.spec, m.norm_min, m.norm_max, m.failed,
             m.sign.value, m.bound, m.magnitude]
            for m in model.fom.metrics
        ],
    }
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode("utf-8")
    ).hexdigest()


def _header_line(config: RunConfig, model: CircuitModel) -> dict:
    echo = config.to_dict()
    echo.pop("out", None)  # not experiment-defining; keeps reruns byte-identical
    return {
        "type": "header",
        "version": VERSION,
        "method": config.method,
        "preset": config.preset,
        "seed": config.seed,
        "preset_checksum": _preset_checksum(model),
        "config": echo,
    }


def _eval_line(index: int, record) -> dict:
    return {
        "type": "eval",
        "index": index,
        "iteration": record.iteration,
        "source": record.source.value,
        "point": [float(v) for v in record.point.values],
        "metrics": {k: float(v) for k, v in record.metrics.items()},
        "regions": {k: v.value for k, v in record.regions.items()},
        "simulation_ok": record.simulation_ok,
        "fom": float(record.fom),
    }


def _transcript_dump(transcript) -> list[dict]:
    return [{"role": m.role, "content": m.content} for m in transcript]


def _make_client(config: RunConfig, space, llm_rng):
    if config.mock is None:
        return HttpLlmClient(config.llm)
    if config.mock == "random":
        return RandomPointLlmClient(space, llm_rng)
    return ScriptedLlmClient(load_script(config.mock))


def _uniform_point(space, rng) -> DesignPoint:
    return from_unit_cube(space, rng.uniform(size=space.dimension))


def _select_demos(config: RunConfig, dataset: Dataset, sampler_rng) -> list[Demonstration]:
    if config.sampler_kind == "none" or len(dataset) == 0:
        return []
    if config.sampler_kind == "top_k":
        records = top_k(dataset, config.sampler_k)
    else:
        records = uniform_k(dataset, config.sampler_k, sampler_rng)
        records = sorted(records, key=lambda r: -r.fom)
    return [Demonstration.from_record(r) for r in records]


def _best_index(dataset: Dataset) -> int:
    best = 0
    for i, record in enumerate(dataset):
        if record.fom > dataset[best].fom:
            best = i
    return best


def run_experiment(config: RunConfig) -> RunLog:
    """Execute one configured run and return its in-memory log."""
    model = build_model(config)
    space = model.space
    card = build_task_card(config, model)
    streams = dict(
        zip(
            _SEED_STREAMS,
            (np.random.default_rng(s)
             for s in np.random.SeedSequence(config.seed).spawn(len(_SEED_STREAMS))),
        )
    )
    needs_llm = (
        config.llm_queries_per_step > 0 or config.init_strategy == "llm_zero_shot"
    )
    client = _make_client(config, space, streams["llm"]) if needs_llm else None

    lines: list[dict] = [_header_line(config, model)]
    dataset = Dataset()
    index = 0

    # Initialization (iteration 0 records).
    n_substituted = 0
    init_transcript = None
    if config.init_strategy == "llm_zero_shot":
        try:
            points, transcript = propose_init(
                client, card, config.n_init, space, config.llm
            )
            sources = [Source.LLM_INIT] * len(points)
        except ProposerExhausted as exc:
            points = list(exc.partial)
            sources = [Source.LLM_INIT] * len(points)
            transcript = exc.transcript
            while len(points) < config.n_init:
                points.append(_uniform_point(space, streams["init"]))
                sources.append(Source.RANDOM)
                n_substituted += 1
        init_transcript = _transcript_dump(transcript)
    else:
        points = [_uniform_point(space, streams["init"]) for _ in range(config.n_init)]
        sources = [Source.RANDOM] * config.n_init
    for point, source in zip(points, sources):
        record = evaluate(model, point, source=source, iteration=0)
        dataset_append(dataset, record)
        lines.append(_eval_line(index, record))
        index += 1
    init_line: dict = {
        "type": "init",
        "strategy": config.init_strategy,
        "n_substituted": n_substituted,
    }
    if init_transcript is not None:
        init_line["transcript"] = init_transcript
    lines.append(init_line)

    for iteration in range(1, config.n_iter + 1):
        diag: dict = {"type": "iteration", "iteration": iteration}
        proposals: list[tuple[DesignPoint, Source]] = []

        if config.llm_queries_per_step > 0:
            demos = _select_demos(config, dataset, streams["sampler"])
            transcripts = []
            substituted = 0
            for _ in range(config.llm_queries_per_step):
                try:
                    point, transcript = propose(client, card, demos, space, config.llm)
                    proposals.append((point, Source.LLM))
                except ProposerExhausted as exc:
                    transcript = exc.transcript
                    point = _uniform_point(space, streams["llm"])
                    proposals.append((point, Source.RANDOM))
                    substituted += 1
                transcripts.append(_transcript_dump(transcript))
            diag["llm_transcripts"] = transcripts
            diag["llm_substituted"] = substituted

        if config.gp_queries_per_step > 0:
            X = np.array([to_unit_cube(space, r.point) for r in dataset])
            y = np.array([r.fom for r in dataset])
            fit_config = dataclasses.replace(
                config.gp_fit, seed=int(streams["surrogate"].integers(2**31 - 1))
            )
            gp = gp_fit(X, y, fit_config)
            best = dataset_best(dataset).fom
            acq_config = dataclasses.replace(
                config.acquisition,
                batch_size=config.gp_queries_per_step,
                seed=int(streams["acquisition"].integers(2**31 - 1)),
            )
            batch = propose_batch(gp, space, best, acq_config, streams["acquisition"])
            batch_u = np.array([to_unit_cube(space, p) for p in batch])
            diag["gp"] = {
                "lengthscales": [float(v) for v in gp.lengthscales],
                "signal_variance": float(gp.signal_variance),
                "noise_variance": float(gp.noise_variance),
                "log_marginal": float(gp.log_marginal),
            }
            diag["acquisition_value"] = float(qei_mc(gp, batch_u, best, acq_config))
            proposals.extend((p, Source.GP_BO) for p in batch)

        lines.append(diag)
        for point, source in proposals:
            record = evaluate(model, point, source=source, iteration=iteration)
            dataset_append(dataset, record)
            lines.append(_eval_line(index, record))
            index += 1

    expected = config.total_evaluations
    if len(dataset) != expected:
        raise RuntimeError(
            f"budget accounting broken: {len(dataset)} records, expected {expected}"
        )
    best_idx = _best_index(dataset)
    best = dataset[best_idx]
    lines.append(
        {
            "type": "summary",
            "n_evals": len(dataset),
            "best_index": best_idx,
            "best_iteration": best.iteration,
            "best_source": best.source.value,
            "best_fom": float(best.fom),
            "best_point": [float(v) for v in best.point.values],
            "best_metrics": {k: float(v) for k, v in best.metrics.items()},
            "missed_specs": count_missed_specs(best.metrics, model.fom),
        }
    )
    return RunLog(lines=lines, dataset=dataset)


def run_adollm(config: RunConfig) -> RunLog:
    if config.method != "ado_llm":
        raise ConfigError(f"run_adollm got method {config.method!r}")
    return run_experiment(config)


def run_gp_bo(config: RunConfig) -> RunLog:
    if config.method != "gp_bo":
        raise ConfigError(f"run_gp_bo got method {config.method!r}")
    return run_experiment(config)


def run_llm_only(config: RunConfig) -> RunLog:
    if config.method != "llm_only":
        raise ConfigError(f"run_llm_only got method {config.method!r}")
    return run_experiment(config)


def run(config: RunConfig) -> RunLog:
    return {
        "ado_llm": run_adollm,
        "gp_bo": run_gp_bo,
        "llm_only": run_llm_only,
    }[config.method](config)


def _load_log_lines(path: str) -> list[tuple[int, dict]]:
    entries: list[tuple[int, dict]] = []
    try:
        handle = open(path, encoding="utf-8")
    except OSError as exc:
        raise ReportError(f"{path}: {exc}") from exc
    with handle:
        for lineno, line in enumerate(handle, 1):
            line = line.strip()
            if not line:
                continue
            try:
                entries.append((lineno, json.loads(line)))
            except json.JSONDecodeError as exc:
                raise ReportError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
    if not entries or entries[0][1].get("type") != "header":
        raise ReportError(f"{path}:1: first line must be the header")
    return entries


def _replay_check(path: str, entries: list[tuple[int, dict]]) -> None:
    preset = entries[0][1].get("preset")
    if preset not in FOM_PRESETS:
        raise ReportError(f"{path}:1: unknown preset {preset!r} in header")
    fom_config = FOM_PRESETS[preset]
    for lineno, entry in entries:
        if entry.get("type") != "eval":
            continue
        recomputed = compute_fom(entry["metrics"], fom_config)
        if recomputed != entry["fom"]:
            raise ReportError(
                f"{path}:{lineno}: logged FOM {entry['fom']!r} does not match "
                f"recomputed {recomputed!r}"
            )


def report(log_paths: list[str], curves: bool = False) -> str:
    """Cross-run comparison table plus optional convergence series.

    Verifies the replay invariant of every log first. Metrics that miss
    their specification are cross-marked; the best FOM per preset is bolded.
    """
    loaded = []
    for path in log_paths:
        entries = _load_log_lines(path)
        _replay_check(path, entries)
        loaded.append((path, entries))

    by_preset: dict[str, list] = {}
    for path, entries in loaded:
        header = entries[0][1]
        summary = entries[-1][1]
        if summary.get("type") != "summary":
            raise ReportError(f"{path}: missing summary line (incomplete run?)")
        by_preset.setdefault(header["preset"], []).append((path, header, summary))

    out: list[str] = []
    for preset, rows in by_preset.items():
        fom_config = FOM_PRESETS[preset]
        best_fom = max(summary["best_fom"] for _, _, summary in rows)
        header_cells = (
            ["method", "protocol"]
            + [m.name for m in fom_config.metrics]
            + ["fom", "missed"]
        )
        table = [header_cells]
        for path, header, summary in rows:
            config = header["config"]
            protocol = (
                f"{config['n_init']}+"
                f"{config['llm_queries_per_step'] + config['gp_queries_per_step']}"
                f"x{config['n_iter']}"
            )
            cells = [header["method"], protocol]
            for metric in fom_config.metrics:
                value = summary["best_metrics"][metric.name]
                mark = "" if hits_spec(value, metric) else " ✗"
                cells.append(f"{value:.4g}{mark}")
            fom_text = f"{summary['best_fom']:.4g}"
            if summary["best_fom"] == best_fom and len(rows) > 1:
                fom_text = f"**{fom_text}**"
            cells.append(fom_text)
            cells.append(str(summary["missed_specs"]))
            table.append(cells)
        widths = [max(len(row[i]) for row in table) for i in range(len(header_cells))]
        out.append(f"# preset: {preset}")
        for row in table:
            out.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        out.append("")

    if curves:
        for path, entries in loaded:
            out.append(f"# convergence: {path}")
            out.append("index,best_fom")
            best = -float("inf")
            for _, entry in entries:
                if entry.get("type") != "eval":
                    continue
                best = max(best, entry["fom"])
                out.append(f"{entry['index']},{best!r}")
            out.append("")
    return "\n".join(out).rstrip() + "\n"
