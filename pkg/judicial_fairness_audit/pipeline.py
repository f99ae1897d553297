import json
import typing
import warnings
from collections import OrderedDict
from datetime import datetime, timezone
from pathlib import Path

from . import defaults
from .config import RunConfig
from .corpus import CaseSet, LabelCatalog, loadCorpus, loadLabelSpecs, sampleCases
from .errors import ConfigError, DataQualityWarning, MissingResponsesError
from .llm_client import ModelConfig, RawResponse, ResponseStatus, execute, loadCachedResponses, modelDirName, summarizeResponses
from .metrics import LabelOutcomeTable, ModelMetrics, computeModelMetrics
from .outcome_parser import parseResponse
from .promptgen import PromptTemplate, QuerySpec, buildQueries, countQueries, loadTemplate, writeQuerySet
from .report import loadModelMetrics, writeReportDir
from .synth_judge import SynthConfig, simulateOutputs
from .util import SlotsRepr, fileDigest, writeJSONLines

__all__ = ("Inputs", "EvalResult", "loadInputs", "cmdGen", "cmdRun", "cmdEval", "cmdSimulate", "cmdReport", "runManifest", "outcomeTables", "SYNTHETIC_MODEL_ID")

SYNTHETIC_MODEL_ID = "synthetic-judge"


class Inputs(SlotsRepr):
	__slots__ = ("cases", "catalog", "template")

	def __init__(self, cases: CaseSet, catalog: LabelCatalog, template: PromptTemplate) -> None:
		self.cases = cases
		self.catalog = catalog
		self.template = template


def loadInputs(cfg: RunConfig) -> Inputs:
	for field, p in (("corpus_path", cfg.corpusPath), ("catalog_path", cfg.catalogPath), ("template_path", cfg.templatePath)):
		if p is not None and not p.is_file():
			raise ConfigError(field, "file not found: " + str(p))
	cases = sampleCases(loadCorpus(cfg.corpusPath), cfg.sampleN, cfg.seed)
	return Inputs(cases, loadLabelSpecs(cfg.catalogPath), loadTemplate(cfg.templatePath))


def _dumpName(modelId: str, temperature: float) -> str:
	return modelDirName(modelId) + "_T" + format(temperature, "g") + ".jsonl"


def runManifest(cfg: RunConfig, inputs: Inputs, mode: str) -> "OrderedDict[str, typing.Any]":
	"""Everything needed to reproduce a report; `created` is the only field that varies between reruns"""
	return OrderedDict((
		("run_id", cfg.runId),
		("mode", mode),
		("config_digest", cfg.digest()),
		("config", cfg.toJSON()),
		("corpus_digest", fileDigest(cfg.corpusPath)),
		("catalog_digest", fileDigest(cfg.catalogPath or defaults.catalogPath)),
		("template_digest", fileDigest(cfg.templatePath or defaults.templatePath)),
		("catalog", inputs.catalog.summary()),
		("sample", OrderedDict((("n", len(inputs.cases)), ("provenance", inputs.cases.provenance)))),
		("seeds", OrderedDict((("sample_seed", cfg.seed), ("synth_seed", None if cfg.synth is None else cfg.synth.seed)))),
		("tool_version", cfg.effectiveToolVersion),
		("created", datetime.now(timezone.utc).replace(microsecond=0).isoformat()),
	))


def _queries(cfg: RunConfig, inputs: Inputs) -> typing.List[QuerySpec]:
	return buildQueries(inputs.cases, inputs.catalog, inputs.template, cfg.ageDraws)


def cmdGen(cfg: RunConfig, inputs: typing.Optional[Inputs] = None) -> typing.Tuple[Path, "OrderedDict[str, int]"]:
	inputs = inputs or loadInputs(cfg)
	queries = _queries(cfg, inputs)
	path = cfg.outputDir / "queries.jsonl"
	writeQuerySet(path, queries)
	return path, countQueries(queries)


def cmdRun(cfg: RunConfig, inputs: typing.Optional[Inputs] = None) -> "OrderedDict[typing.Tuple[str, float], OrderedDict[str, int]]":
	if not cfg.models:
		raise ConfigError("models", "at least one model is required")
	inputs = inputs or loadInputs(cfg)
	queries = _queries(cfg, inputs)
	res = OrderedDict()
	for m in cfg.modelsAt():
		responses = execute(queries, m, cfg.cacheDir)
		writeJSONLines(cfg.outputDir / "responses" / _dumpName(m.modelId, m.temperature), (r.toJSON() for r in responses))
		res[(m.modelId, m.temperature)] = summarizeResponses(responses)
	return res


class EvalResult(SlotsRepr):
	__slots__ = ("reportDir", "files", "models", "missing")

	def __init__(self, reportDir: Path, files: typing.Sequence[Path], models: typing.Sequence[ModelMetrics], missing: int = 0) -> None:
		self.reportDir = reportDir
		self.files = tuple(files)
		self.models = tuple(models)
		self.missing = missing

	@property
	def partial(self) -> bool:
		return self.missing > 0


def outcomeTables(responses: typing.Iterable[RawResponse], inputs: Inputs, context: str = "") -> typing.Tuple["OrderedDict[str, LabelOutcomeTable]", typing.List[dict]]:
	byLabel = OrderedDict((l.name, []) for l in inputs.catalog)
	dump = []
	failures = OrderedDict()
	for r in responses:
		if r.status is not ResponseStatus.ok:
			continue
		o = parseResponse(r.body)
		if not o.ok:
			failures[o.parseStatus] = failures.get(o.parseStatus, 0) + 1
		byLabel[r.labelName].append((r.caseId, r.valueName, o))
		rec = OrderedDict((("case_id", r.caseId), ("label", r.labelName), ("value", r.valueName)))
		rec.update(o.toJSON())
		dump.append(rec)
	if failures:
		warnings.warn((context + ": " if context else "") + ", ".join(str(n) + " " + s.value for s, n in failures.items()) + " responses could not be parsed", DataQualityWarning)
	tables = OrderedDict((l.name, LabelOutcomeTable.fromOutcomes(l, byLabel[l.name], inputs.cases)) for l in inputs.catalog if byLabel[l.name])
	return tables, dump


def _modelInfo(cfg: RunConfig) -> "OrderedDict[str, ModelConfig]":
	return OrderedDict((m.modelId, m) for m in cfg.models)


def _metricsFor(cfg: RunConfig, inputs: Inputs, modelId: str, temperature: float, tables: typing.Mapping[str, LabelOutcomeTable]) -> ModelMetrics:
	return computeModelMetrics(modelId, temperature, tables, inputs.catalog, cfg.variants, cfg.encoding, cfg.maeScope)


def cmdEval(cfg: RunConfig, inputs: typing.Optional[Inputs] = None) -> EvalResult:
	if not cfg.models:
		raise ConfigError("models", "at least one model is required")
	inputs = inputs or loadInputs(cfg)
	queries = _queries(cfg, inputs)

	loaded = []
	absent = []
	missingCount = 0
	for m in cfg.modelsAt():
		found, missing = loadCachedResponses(queries, m, cfg.cacheDir)
		if not found:
			absent.extend((m.modelId, format(m.temperature, "g")) + q.key for q in missing)
			continue
		if missing:
			missingCount += len(missing)
			warnings.warn(m.modelId + " at T=" + format(m.temperature, "g") + ": " + str(len(missing)) + " of " + str(len(queries)) + " responses are missing from the cache", DataQualityWarning)
		loaded.append((m, found))
	if absent:
		raise MissingResponsesError(absent)

	models = []
	for m, found in loaded:
		name = _dumpName(m.modelId, m.temperature)
		tables, dump = outcomeTables(found, inputs, m.modelId)
		writeJSONLines(cfg.outputDir / "outcomes" / name, dump)
		models.append(_metricsFor(cfg, inputs, m.modelId, m.temperature, tables))

	files = writeReportDir(cfg.reportDir, models, inputs.catalog, runManifest(cfg, inputs, "eval"), cfg.taus, cfg.variants, _modelInfo(cfg))
	return EvalResult(cfg.reportDir, files, models, missingCount)


def _synthModels(cfg: RunConfig) -> typing.List[typing.Tuple[str, SynthConfig]]:
	synth = cfg.synth
	ids = [m.modelId for m in cfg.models] or [SYNTHETIC_MODEL_ID]
	return [(modelId, SynthConfig(synth.baseLogSentence, synth.plantedEffects, synth.noiseSd, synth.jitterProb, synth.failureProb, synth.seed + i)) for i, modelId in enumerate(ids)]


def cmdSimulate(cfg: RunConfig, inputs: typing.Optional[Inputs] = None) -> EvalResult:
	if cfg.synth is None:
		raise ConfigError("synth", "missing")
	inputs = inputs or loadInputs(cfg)
	models = []
	for modelId, synth in _synthModels(cfg):
		tables = simulateOutputs(inputs.cases, inputs.catalog, synth, cfg.ageDraws)
		for t in cfg.temperatures:
			models.append(_metricsFor(cfg, inputs, modelId, t, tables))
	files = writeReportDir(cfg.reportDir, models, inputs.catalog, runManifest(cfg, inputs, "simulate"), cfg.taus, cfg.variants, _modelInfo(cfg))
	return EvalResult(cfg.reportDir, files, models)


def cmdReport(cfg: RunConfig, reportDir: typing.Optional[Path] = None) -> EvalResult:
	reportDir = Path(reportDir) if reportDir is not None else cfg.reportDir
	manifestPath = reportDir / "run_manifest.json"
	if not manifestPath.is_file():
		raise ConfigError("output_dir", "no report at " + str(reportDir))
	with open(manifestPath, "rt", encoding="utf-8") as f:
		manifest = json.load(f, object_pairs_hook=OrderedDict)
	models = loadModelMetrics(reportDir)
	files = writeReportDir(reportDir, models, loadLabelSpecs(cfg.catalogPath), manifest, cfg.taus, cfg.variants, _modelInfo(cfg))
	return EvalResult(reportDir, files, models)
