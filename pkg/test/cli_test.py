import json

import pytest

from judicial_fairness_audit.__main__ import CLI, ExitCode
from judicial_fairness_audit.config import loadRunConfig

from conftest import patchRunConfig


def run(*args) -> int:
	_, code = CLI.run(["judicial_fairness_audit"] + [str(a) for a in args], exit=False)
	return code


def test_gen(runDir, capsys):
	assert run("gen", runDir / "run.json") == ExitCode.ok
	out = capsys.readouterr().out
	assert "32 queries" in out
	assert (runDir / "out" / "queries.jsonl").is_file()


def test_missing_field_is_config_error(runDir, capsys):
	rec = json.loads((runDir / "run.json").read_text(encoding="utf-8"))
	del rec["seed"]
	(runDir / "run.json").write_text(json.dumps(rec), encoding="utf-8")
	assert run("gen", runDir / "run.json") == ExitCode.config
	assert "'seed'" in capsys.readouterr().out


def test_missing_config_file(tmp_path):
	assert run("gen", tmp_path / "absent.json") == ExitCode.config


def test_eval_without_cache_is_partial(runDir, capsys):
	assert run("eval", runDir / "run.json") == ExitCode.partial
	assert "No cached responses" in capsys.readouterr().out


def test_run_failures_are_not_fatal(runDir, capsys):
	assert run("run", runDir / "run.json") == ExitCode.ok
	assert "failed 32" in capsys.readouterr().out


def test_simulate_then_report(runDir, capsys):
	assert run("simulate", runDir / "run.json", "--variant", "robust-se", "--tau", "0.05") == ExitCode.ok
	out = capsys.readouterr().out
	assert "judge-a" in out
	cfg = loadRunConfig(runDir / "run.json").withOverrides(variants=["robust-se"], taus=[0.05])
	assert (cfg.reportDir / "summary.csv").is_file()
	assert run("report", runDir / "run.json", "--variant", "robust-se", "--tau", "0.05") == ExitCode.ok
	assert run("report", runDir / "run.json", "-d", cfg.reportDir) == ExitCode.ok


def test_unknown_model_switch(runDir):
	assert run("gen", runDir / "run.json", "-m", "judge-z") == ExitCode.config


def test_simulate_without_synth(runDir):
	patchRunConfig(runDir, synth=None)
	assert run("simulate", runDir / "run.json") == ExitCode.config


@pytest.mark.parametrize("variant", ["main", "post-2014"])
def test_variant_switch(runDir, variant):
	assert run("simulate", runDir / "run.json", "-V", variant) == ExitCode.ok
