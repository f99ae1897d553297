import json
import typing
from collections import OrderedDict
from pathlib import Path

from . import defaults
from .errors import ConfigError, SchemaVersionError
from .llm_client import ModelConfig
from .metrics import MAEScope, RobustnessVariant
from .outcome_parser import NotGuiltyPolicy, SentenceEncoding
from .synth_judge import SynthConfig
from .util import SlotsRepr, canonicalJSON, sha256Hex

__all__ = ("RunConfig", "loadRunConfig", "toolVersion")


def toolVersion() -> str:
	try:
		from .version import version  # pylint:disable=import-outside-toplevel
	except ImportError:
		return "0.0.0+unknown"
	return version


def _path(base: Path, v: typing.Optional[str]) -> typing.Optional[Path]:
	if v is None:
		return None
	p = Path(v)
	if not p.is_absolute():
		p = base / p
	return p


def _enumList(enumCls, values, field: str) -> typing.Tuple:
	try:
		return tuple(enumCls(v) for v in values)
	except (ValueError, TypeError) as ex:
		raise ConfigError(field, str(ex)) from ex


class RunConfig(SlotsRepr):
	__slots__ = ("corpusPath", "catalogPath", "templatePath", "models", "sampleN", "seed", "temperatures", "variants", "taus", "cacheDir", "outputDir", "encoding", "synth", "maeScope", "ageDraws", "toolVersion", "baseDir")

	REQUIRED = ("schema_version", "corpus_path", "seed", "output_dir")

	def __init__(self, corpusPath: Path, outputDir: Path, seed: int, models: typing.Sequence[ModelConfig] = (), catalogPath: typing.Optional[Path] = None, templatePath: typing.Optional[Path] = None, sampleN: int = defaults.sampleSize, temperatures: typing.Sequence[float] = (0.0,), variants: typing.Sequence[RobustnessVariant] = tuple(RobustnessVariant), taus: typing.Sequence[float] = defaults.taus, cacheDir: typing.Optional[Path] = None, encoding: typing.Optional[SentenceEncoding] = None, synth: typing.Optional[SynthConfig] = None, maeScope: MAEScope = MAEScope.all, ageDraws: int = defaults.ageDraws, toolVersion: typing.Optional[str] = None, baseDir: typing.Optional[Path] = None) -> None:  # pylint:disable=redefined-outer-name
		self.corpusPath = Path(corpusPath)
		self.outputDir = Path(outputDir)
		self.seed = int(seed)
		self.models = tuple(models)
		self.catalogPath = catalogPath
		self.templatePath = templatePath
		self.sampleN = int(sampleN)
		self.temperatures = tuple(float(t) for t in temperatures)
		self.variants = tuple(variants)
		self.taus = tuple(float(t) for t in taus)
		self.cacheDir = Path(cacheDir) if cacheDir is not None else self.outputDir / "cache"
		self.encoding = encoding if encoding is not None else SentenceEncoding()
		self.synth = synth
		self.maeScope = maeScope
		self.ageDraws = int(ageDraws)
		self.toolVersion = toolVersion
		self.baseDir = baseDir
		self.validate()

	def validate(self) -> None:
		if self.sampleN < 1:
			raise ConfigError("sample_n", "must be at least 1")
		if self.seed < 0:
			raise ConfigError("seed", "must be non-negative")
		if not self.temperatures:
			raise ConfigError("temperatures", "at least one temperature is required")
		if not self.variants:
			raise ConfigError("variants", "at least one variant is required")
		if RobustnessVariant.main not in self.variants:
			self.variants = (RobustnessVariant.main,) + self.variants
		if not self.taus or not all(0 < t < 1 for t in self.taus):
			raise ConfigError("tau_list", "taus must lie in (0, 1)")
		if self.ageDraws < 1:
			raise ConfigError("age_draws", "must be at least 1")
		ids = [m.modelId for m in self.models]
		if len(set(ids)) != len(ids):
			raise ConfigError("models", "model ids must be unique")

	@classmethod
	def fromJSON(cls, rec: dict, baseDir: Path) -> "RunConfig":
		if not isinstance(rec, dict):
			raise ConfigError(None, "must be a JSON object")
		for field in cls.REQUIRED:
			if field not in rec:
				raise ConfigError(field, "missing")
		if rec["schema_version"] != defaults.configSchemaVersion:
			raise SchemaVersionError("schema_version", "expected " + str(defaults.configSchemaVersion) + ", got " + repr(rec["schema_version"]))

		models = []
		for i, m in enumerate(rec.get("models", ())):
			if not isinstance(m, dict):
				raise ConfigError("models[" + str(i) + "]", "must be an object")
			models.append(ModelConfig.fromJSON(m))

		enc = SentenceEncoding.fromJSON(rec.get("encoding"))
		if "not_guilty_policy" in rec:
			try:
				enc = SentenceEncoding(enc.mode, enc.lifeMonths, enc.deathMonths, NotGuiltyPolicy(rec["not_guilty_policy"]))
			except ValueError as ex:
				raise ConfigError("not_guilty_policy", str(ex)) from ex

		synth = rec.get("synth")
		if isinstance(synth, str):
			synthPath = _path(baseDir, synth)
			try:
				synth = SynthConfig.load(synthPath)
			except (OSError, json.JSONDecodeError) as ex:
				raise ConfigError("synth", "cannot read " + str(synthPath) + ": " + str(ex)) from ex
		elif synth is not None:
			synth = SynthConfig.fromJSON(synth)

		try:
			maeScope = MAEScope(rec.get("mae_scope", MAEScope.all.value))
		except ValueError as ex:
			raise ConfigError("mae_scope", str(ex)) from ex

		try:
			return cls(
				corpusPath=_path(baseDir, rec["corpus_path"]),
				outputDir=_path(baseDir, rec["output_dir"]),
				seed=rec["seed"],
				models=models,
				catalogPath=_path(baseDir, rec.get("catalog_path")),
				templatePath=_path(baseDir, rec.get("template_path")),
				sampleN=rec.get("sample_n", defaults.sampleSize),
				temperatures=rec.get("temperatures", (0.0,)),
				variants=_enumList(RobustnessVariant, rec.get("variants", [v.value for v in RobustnessVariant]), "variants"),
				taus=rec.get("tau_list", defaults.taus),
				cacheDir=_path(baseDir, rec.get("cache_dir")),
				encoding=enc,
				synth=synth,
				maeScope=maeScope,
				ageDraws=rec.get("age_draws", defaults.ageDraws),
				toolVersion=rec.get("tool_version"),
				baseDir=baseDir,
			)
		except (TypeError, ValueError) as ex:
			if isinstance(ex, ConfigError):
				raise
			raise ConfigError(None, str(ex)) from ex

	def toJSON(self) -> dict:
		return OrderedDict((
			("schema_version", defaults.configSchemaVersion),
			("corpus_path", str(self.corpusPath)),
			("catalog_path", None if self.catalogPath is None else str(self.catalogPath)),
			("template_path", None if self.templatePath is None else str(self.templatePath)),
			("models", [m.toJSON() for m in self.models]),
			("sample_n", self.sampleN),
			("seed", self.seed),
			("temperatures", list(self.temperatures)),
			("variants", [v.value for v in self.variants]),
			("tau_list", list(self.taus)),
			("cache_dir", str(self.cacheDir)),
			("output_dir", str(self.outputDir)),
			("encoding", self.encoding.toJSON()),
			("synth", None if self.synth is None else self.synth.toJSON()),
			("mae_scope", self.maeScope.value),
			("age_draws", self.ageDraws),
			("tool_version", self.effectiveToolVersion),
		))

	@property
	def effectiveToolVersion(self) -> str:
		return self.toolVersion or toolVersion()

	def digest(self) -> str:
		return sha256Hex(canonicalJSON(self.toJSON()))

	@property
	def runId(self) -> str:
		return self.digest()[:12]

	@property
	def reportDir(self) -> Path:
		return self.outputDir / "reports" / self.runId

	def _replace(self, **kw) -> "RunConfig":
		cur = {k: getattr(self, k) for k in self.__class__.__slots__}
		cur.update(kw)
		return self.__class__(**cur)

	def withOverrides(self, models: typing.Optional[typing.Sequence[str]] = None, temperatures: typing.Optional[typing.Sequence[float]] = None, variants: typing.Optional[typing.Sequence[str]] = None, taus: typing.Optional[typing.Sequence[float]] = None) -> "RunConfig":
		kw = {}
		if models:
			known = OrderedDict((m.modelId, m) for m in self.models)
			unknown = [m for m in models if m not in known]
			if unknown:
				raise ConfigError("models", "not configured: " + ", ".join(unknown))
			kw["models"] = tuple(m for i, m in known.items() if i in models)
		if temperatures:
			kw["temperatures"] = tuple(temperatures)
		if variants:
			kw["variants"] = _enumList(RobustnessVariant, variants, "variants")
		if taus:
			kw["taus"] = tuple(taus)
		if not kw:
			return self
		return self._replace(**kw)

	def modelsAt(self) -> typing.Iterator[ModelConfig]:
		for m in self.models:
			for t in self.temperatures:
				yield m.withTemperature(t)


def loadRunConfig(path: Path) -> RunConfig:
	path = Path(path)
	try:
		with open(path, "rt", encoding="utf-8") as f:
			rec = json.load(f)
	except OSError as ex:
		raise ConfigError(None, "cannot read " + str(path) + ": " + str(ex)) from ex
	except json.JSONDecodeError as ex:
		raise ConfigError(None, str(path) + " is not valid JSON: " + str(ex)) from ex
	return RunConfig.fromJSON(rec, path.parent)
