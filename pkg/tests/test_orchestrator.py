import json
from collections import Counter

import numpy as np
import pytest

from analogopt.acquisition import AcquisitionConfig
from analogopt.cli import main
from analogopt.config import RunConfig, load_run_config
from analogopt.core import ConfigError, Source
from analogopt.fom import FOM_PRESETS, compute_fom
from analogopt.orchestrator import (
    ReportError,
    report,
    run,
    run_adollm,
    run_gp_bo,
    run_llm_only,
)
from analogopt.surrogate import GpFitConfig

FAST_ACQ = AcquisitionConfig(
    mc_samples=128, restarts=2, raw_candidates=64, maxiter=10
)
FAST_FIT = GpFitConfig(restarts=2, maxiter=40)


def fast_config(**kwargs):
    defaults = dict(
        method="ado_llm",
        preset="branin",
        n_init=5,
        n_iter=3,
        llm_queries_per_step=1,
        gp_queries_per_step=4,
        init_strategy="llm_zero_shot",
        mock="random",
        seed=0,
        acquisition=FAST_ACQ,
        gp_fit=FAST_FIT,
    )
    defaults.update(kwargs)
    return RunConfig(**defaults)


# ------------------------------------------------------------ run contracts

def test_adollm_budget_and_sources():
    from analogopt.config import build_model
    from analogopt.core import design_space_contains

    config = fast_config(n_iter=3)
    log = run_adollm(config)
    assert len(log.dataset) == 5 + 5 * 3
    space = build_model(config).space
    assert all(design_space_contains(space, r.point) for r in log.dataset)
    init_sources = [r.source for r in log.dataset if r.iteration == 0]
    assert init_sources == [Source.LLM_INIT] * 5
    for iteration in (1, 2, 3):
        sources = Counter(
            r.source.value for r in log.dataset if r.iteration == iteration
        )
        assert sources == {"llm": 1, "gp_bo": 4}
    # evaluation order within an iteration: llm first, then the gp batch
    per_iter = [r.source.value for r in log.dataset if r.iteration == 1]
    assert per_iter == ["llm", "gp_bo", "gp_bo", "gp_bo", "gp_bo"]


def test_adollm_rerun_is_byte_identical():
    config = fast_config(n_iter=2, seed=11)
    assert run_adollm(config).text() == run_adollm(config).text()


def test_different_seed_changes_run():
    a = run_adollm(fast_config(n_iter=2, seed=1))
    b = run_adollm(fast_config(n_iter=2, seed=2))
    assert a.text() != b.text()


def test_gp_bo_budget_and_uniform_init():
    config = fast_config(
        method="gp_bo",
        llm_queries_per_step=0,
        gp_queries_per_step=5,
        init_strategy="uniform_random",
        mock=None,
        n_iter=3,
    )
    log = run_gp_bo(config)
    assert len(log.dataset) == 5 + 5 * 3
    assert all(r.source is Source.RANDOM for r in log.dataset if r.iteration == 0)
    assert all(
        r.source is Source.GP_BO for r in log.dataset if r.iteration >= 1
    )


def test_gp_bo_protocol_arithmetic():
    # the long-protocol budget is config arithmetic, checked without running
    config = fast_config(
        method="gp_bo", llm_queries_per_step=0, gp_queries_per_step=5,
        init_strategy="uniform_random", mock=None, n_iter=20,
    )
    assert config.total_evaluations == 105
    config80 = fast_config(
        method="gp_bo", llm_queries_per_step=0, gp_queries_per_step=5,
        init_strategy="uniform_random", mock=None, n_iter=80,
    )
    assert config80.total_evaluations == 405


def test_gp_bo_with_llm_init_tags_records():
    config = fast_config(
        method="gp_bo",
        llm_queries_per_step=0,
        gp_queries_per_step=5,
        init_strategy="llm_zero_shot",
        n_iter=1,
    )
    log = run_gp_bo(config)
    init_sources = [r.source for r in log.dataset if r.iteration == 0]
    assert init_sources == [Source.LLM_INIT] * 5


def test_llm_only_variants():
    for kind in ("top_k", "uniform", "none"):
        config = fast_config(
            method="llm_only",
            llm_queries_per_step=1,
            gp_queries_per_step=0,
            sampler_kind=kind,
            n_iter=4,
        )
        log = run_llm_only(config)
        assert len(log.dataset) == 5 + 1 * 4
        assert all(
            r.source is Source.LLM for r in log.dataset if r.iteration >= 1
        ), kind


def test_run_dispatch_checks_method():
    with pytest.raises(ConfigError):
        run_gp_bo(fast_config())
    with pytest.raises(ConfigError):
        run_adollm(
            fast_config(
                method="llm_only", llm_queries_per_step=1, gp_queries_per_step=0
            )
        )


def test_proposer_exhaustion_substitutes_random(tmp_path):
    script = tmp_path / "bad.txt"
    script.write_text("never a valid point\n", encoding="utf-8")
    config = fast_config(
        method="llm_only",
        llm_queries_per_step=1,
        gp_queries_per_step=0,
        init_strategy="uniform_random",
        mock=str(script),
        n_iter=3,
    )
    log = run_llm_only(config)
    assert len(log.dataset) == 5 + 3  # budget preserved despite exhaustion
    iter_records = [r for r in log.dataset if r.iteration >= 1]
    assert all(r.source is Source.RANDOM for r in iter_records)
    iter_lines = [l for l in log.lines if l.get("type") == "iteration"]
    assert all(l["llm_substituted"] == 1 for l in iter_lines)


def test_iteration_diagnostics_present():
    log = run_adollm(fast_config(n_iter=2))
    iter_lines = [l for l in log.lines if l.get("type") == "iteration"]
    assert len(iter_lines) == 2
    for line in iter_lines:
        assert set(line["gp"]) == {
            "lengthscales", "signal_variance", "noise_variance", "log_marginal",
        }
        assert line["acquisition_value"] >= 0.0
        assert line["llm_transcripts"]


def test_transcript_replay_reproduces_point():
    from analogopt.config import build_model
    from analogopt.llm import parse_response

    config = fast_config(n_iter=2)
    model = build_model(config)
    log = run_adollm(config)
    evals = [l for l in log.lines if l.get("type") == "eval"]
    iter_lines = [l for l in log.lines if l.get("type") == "iteration"]
    for line in iter_lines:
        iteration = line["iteration"]
        llm_eval = next(
            e for e in evals
            if e["iteration"] == iteration and e["source"] == "llm"
        )
        last_assistant = [
            m for m in line["llm_transcripts"][0] if m["role"] == "assistant"
        ][-1]
        point = parse_response(last_assistant["content"], model.space)
        assert list(point.values) == llm_eval["point"]


def test_best_so_far_is_monotone():
    log = run_adollm(fast_config(n_iter=3))
    best = -np.inf
    series = []
    for line in log.lines:
        if line.get("type") == "eval":
            best = max(best, line["fom"])
            series.append(best)
    assert series == sorted(series)
    assert log.summary["best_fom"] == pytest.approx(best)


# ------------------------------------------------------------------ config

def test_load_run_config_ini(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(
        """
[run]
method = gp_bo
preset = comparator
n_iter = 2
seed = 5

[llm]
mock = random

[acquisition]
mc_samples = 99
gp_restarts = 4

[sampler]
kind = uniform
k = 3

[evaluator]
constants.vdd = 1.5
""",
        encoding="utf-8",
    )
    config = load_run_config(str(path))
    assert config.method == "gp_bo"
    assert config.preset == "comparator"
    assert config.llm_queries_per_step == 0  # gp_bo default
    assert config.gp_queries_per_step == 5
    assert config.init_strategy == "uniform_random"  # gp_bo default
    assert config.acquisition.mc_samples == 99
    assert config.gp_fit.restarts == 4
    assert config.sampler_kind == "uniform" and config.sampler_k == 3
    assert config.constants.vdd == 1.5
    assert config.seed == 5
    # overrides win
    assert load_run_config(str(path), seed=9).seed == 9


def test_config_validation_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(str(tmp_path / "missing.ini"))
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\nmethod = annealing\npreset = amp2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(str(bad))
    unknown = tmp_path / "unknown.ini"
    unknown.write_text(
        "[run]\nmethod = gp_bo\npreset = amp2\nbatchsize = 4\n", encoding="utf-8"
    )
    with pytest.raises(ConfigError):
        load_run_config(str(unknown))
    with pytest.raises(ConfigError):
        RunConfig(method="gp_bo", preset="amp2", llm_queries_per_step=1)
    with pytest.raises(ConfigError):
        RunConfig(method="llm_only", preset="amp2", gp_queries_per_step=2)


# ------------------------------------------------------------------ report

def _write_log(tmp_path, name, config):
    log = run(config)
    path = tmp_path / name
    log.write(str(path))
    return str(path), log


def test_report_single_and_replay(tmp_path):
    path, log = _write_log(tmp_path, "a.jsonl", fast_config(n_iter=2))
    text = report([path])
    assert "preset: branin" in text
    assert "ado_llm" in text
    assert "5+5x2" in text
    # replay on disk: recompute FOM from the logged metrics
    fom_config = FOM_PRESETS["branin"]
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            entry = json.loads(line)
            if entry.get("type") == "eval":
                assert compute_fom(entry["metrics"], fom_config) == entry["fom"]


def test_report_bolds_best_of_multiple(tmp_path):
    p1, log1 = _write_log(tmp_path, "a.jsonl", fast_config(n_iter=2, seed=1))
    p2, log2 = _write_log(tmp_path, "b.jsonl", fast_config(n_iter=2, seed=2))
    text = report([p1, p2])
    assert text.count("**") == 2  # exactly one bolded cell
    best = max(log1.summary["best_fom"], log2.summary["best_fom"])
    assert f"**{best:.4g}**" in text


def test_report_marks_missed_specs(tmp_path):
    config = fast_config(
        method="gp_bo", preset="amp2", llm_queries_per_step=0,
        gp_queries_per_step=5, init_strategy="uniform_random", mock=None,
        n_iter=1, seed=3,
    )
    path, log = _write_log(tmp_path, "amp2.jsonl", config)
    text = report([path])
    if log.summary["missed_specs"] > 0:
        assert "✗" in text


def test_report_curves(tmp_path):
    path, _ = _write_log(tmp_path, "a.jsonl", fast_config(n_iter=2))
    text = report([path], curves=True)
    assert "convergence" in text and "index,best_fom" in text


def test_report_corrupt_log_names_line(tmp_path):
    path, _ = _write_log(tmp_path, "a.jsonl", fast_config(n_iter=1))
    lines = open(path, encoding="utf-8").read().splitlines()
    lines[3] = lines[3][:-10]  # truncate mid-JSON
    broken = tmp_path / "broken.jsonl"
    broken.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(ReportError) as excinfo:
        report([str(broken)])
    assert ":4:" in str(excinfo.value)


def test_report_detects_fom_tampering(tmp_path):
    path, _ = _write_log(tmp_path, "a.jsonl", fast_config(n_iter=1))
    lines = open(path, encoding="utf-8").read().splitlines()
    entry = json.loads(lines[1])
    assert entry["type"] == "eval"
    entry["fom"] = entry["fom"] + 0.5
    lines[1] = json.dumps(entry, sort_keys=True)
    tampered = tmp_path / "tampered.jsonl"
    tampered.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(ReportError) as excinfo:
        report([str(tampered)])
    assert ":2:" in str(excinfo.value)


# --------------------------------------------------------------------- CLI

def _ini(tmp_path, extra=""):
    path = tmp_path / "exp.ini"
    path.write_text(
        f"""
[run]
method = ado_llm
preset = branin
n_iter = 2
seed = 3

[llm]
mock = random

[acquisition]
mc_samples = 128
restarts = 2
raw_candidates = 64
maxiter = 10
gp_restarts = 2
gp_maxiter = 40
{extra}
""",
        encoding="utf-8",
    )
    return str(path)


def test_cli_run_and_report(tmp_path, capsys):
    ini = _ini(tmp_path)
    out = str(tmp_path / "run.jsonl")
    assert main(["run", "--config", ini, "--out", out]) == 0
    assert "best FOM" in capsys.readouterr().out
    assert main(["report", out, "--curves"]) == 0
    assert "convergence" in capsys.readouterr().out


def test_cli_seed_override_changes_log(tmp_path):
    ini = _ini(tmp_path)
    out1, out2 = str(tmp_path / "a.jsonl"), str(tmp_path / "b.jsonl")
    assert main(["run", "--config", ini, "--out", out1, "--seed", "21"]) == 0
    assert main(["run", "--config", ini, "--out", out2, "--seed", "22"]) == 0
    assert open(out1).read() != open(out2).read()


def test_cli_config_error_exit_code(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.ini")]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_llm_failure_exit_code(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("OPENAI_API_KEY", raising=False)
    ini = tmp_path / "live.ini"
    ini.write_text(
        "[run]\nmethod = llm_only\npreset = branin\nn_iter = 1\n", encoding="utf-8"
    )
    assert main(["run", "--config", str(ini), "--out", str(tmp_path / "x.jsonl")]) == 3
    assert "LLM error" in capsys.readouterr().err


def test_cli_ablate_init(tmp_path, capsys):
    ini = _ini(tmp_path)
    out = str(tmp_path / "ab.jsonl")
    assert main(["ablate-init", "--config", ini, "--out", out]) == 0
    captured = capsys.readouterr().out
    assert "uniform_random" in captured and "llm_zero_shot" in captured
    assert (tmp_path / "ab_uniform_random.jsonl").exists()
    assert (tmp_path / "ab_llm_zero_shot.jsonl").exists()


def test_cli_ablate_icl(tmp_path, capsys):
    ini = _ini(tmp_path)
    out = str(tmp_path / "icl.jsonl")
    assert main(["ablate-icl", "--config", ini, "--out", out]) == 0
    captured = capsys.readouterr().out
    assert "sampler=none" in captured
    assert "sampler=uniform" in captured
    assert "sampler=top_k" in captured
    for tag in ("no_icl", "rand_k", "top_k"):
        assert (tmp_path / f"icl_{tag}.jsonl").exists()
