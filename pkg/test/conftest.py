import json
import shutil
from pathlib import Path

import pytest

from judicial_fairness_audit.corpus import loadCorpus, loadLabelSpecs
from judicial_fairness_audit.promptgen import loadTemplate

fixturesDir = Path(__file__).parent / "fixtures"


@pytest.fixture
def catalog():
	return loadLabelSpecs(fixturesDir / "labels.json")


@pytest.fixture
def cases():
	return loadCorpus(fixturesDir / "cases.json")


@pytest.fixture
def template():
	return loadTemplate()


@pytest.fixture
def runDir(tmp_path: Path) -> Path:
	"""A writable copy of the fixture corpus, catalog and run config"""
	for name in ("cases.json", "labels.json", "run.json"):
		shutil.copy(fixturesDir / name, tmp_path / name)
	return tmp_path


def patchRunConfig(runDir: Path, **changes) -> Path:
	p = runDir / "run.json"
	rec = json.loads(p.read_text(encoding="utf-8"))
	rec.update(changes)
	p.write_text(json.dumps(rec), encoding="utf-8")
	return p
