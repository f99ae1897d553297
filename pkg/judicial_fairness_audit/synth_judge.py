import hashlib
import json
import math
import threading
import typing
from collections import OrderedDict
from enum import Enum
from pathlib import Path

import numpy as np
from werkzeug.serving import make_server
from werkzeug.wrappers import Request, Response

from . import defaults
from .corpus import CaseSet, LabelSpec, applyExclusions
from .errors import ConfigError
from .matchers import makeTriggerMatcher
from .metrics import LabelOutcomeTable
from .outcome_parser import ParseStatus, SentencingOutcome
from .promptgen import PromptTemplate, buildQueries, counterfactualValues
from .util import SlotsRepr, sha256Hex

__all__ = ("NoiseScope", "SynthConfig", "simulateOutcome", "simulateBody", "simulateOutputs", "MockJudgeServer", "serveMock", "AGE_EFFECT_KEY")

AGE_EFFECT_KEY = "age"
BASE_LOG_RANGE = (math.log(7.0), math.log(240.0))

_BASE_TAG = 1
_OBS_TAG = 2
_DOC_TAG = 3


class NoiseScope(Enum):
	observation = "observation"
	document = "document"


class SynthConfig(SlotsRepr):
	"""Planted effects are log-points; for an age label the effect keyed by value `age` is a per-year slope"""

	__slots__ = ("baseLogSentence", "plantedEffects", "noiseSd", "jitterProb", "failureProb", "seed", "noiseScope")

	def __init__(self, baseLogSentence: typing.Optional[typing.Mapping[str, float]] = None, plantedEffects: typing.Optional[typing.Mapping[typing.Tuple[str, str], float]] = None, noiseSd: float = 0.0, jitterProb: float = 0.0, failureProb: float = 0.0, seed: int = 0, noiseScope: typing.Union[NoiseScope, str] = NoiseScope.observation) -> None:
		self.baseLogSentence = dict(baseLogSentence or {})
		self.plantedEffects = dict(plantedEffects or {})
		self.noiseSd = float(noiseSd)
		self.jitterProb = float(jitterProb)
		self.failureProb = float(failureProb)
		self.seed = int(seed)
		self.noiseScope = NoiseScope(noiseScope)
		self.validate()

	def validate(self) -> None:
		if not self.noiseSd >= 0:
			raise ConfigError("synth.noise_sd", "must be non-negative")
		for field, v in (("synth.jitter_prob", self.jitterProb), ("synth.failure_prob", self.failureProb)):
			if not 0.0 <= v <= 1.0:
				raise ConfigError(field, "must lie in [0, 1], got " + repr(v))
		if self.seed < 0:
			raise ConfigError("synth.seed", "must be non-negative")

	def effect(self, label: LabelSpec, valueName: str) -> float:
		if label.isAge:
			return self.plantedEffects.get((label.name, AGE_EFFECT_KEY), 0.0) * float(valueName)
		return self.plantedEffects.get((label.name, valueName), 0.0)

	def baseLog(self, caseId: str) -> float:
		v = self.baseLogSentence.get(caseId)
		if v is not None:
			return float(v)
		return float(_rng(self.seed, _BASE_TAG, caseId).uniform(*BASE_LOG_RANGE))

	@classmethod
	def fromJSON(cls, rec: dict) -> "SynthConfig":
		if not isinstance(rec, dict):
			raise ConfigError("synth", "must be an object")
		effects = {}
		for i, e in enumerate(rec.get("planted_effects", ())):
			try:
				effects[(e["label"], e["value"])] = float(e["effect"])
			except (KeyError, TypeError, ValueError) as ex:
				raise ConfigError("synth.planted_effects[" + str(i) + "]", "needs label, value and numeric effect") from ex
		try:
			return cls(rec.get("base_log_sentence"), effects, rec.get("noise_sd", 0.0), rec.get("jitter_prob", 0.0), rec.get("failure_prob", 0.0), rec.get("seed", 0), rec.get("noise_scope", NoiseScope.observation.value))
		except (TypeError, ValueError) as ex:
			if isinstance(ex, ConfigError):
				raise
			raise ConfigError("synth", str(ex)) from ex

	@classmethod
	def load(cls, path: Path) -> "SynthConfig":
		with open(path, "rt", encoding="utf-8") as f:
			return cls.fromJSON(json.load(f))

	def toJSON(self) -> dict:
		return OrderedDict((
			("seed", self.seed),
			("noise_sd", self.noiseSd),
			("jitter_prob", self.jitterProb),
			("failure_prob", self.failureProb),
			("noise_scope", self.noiseScope.value),
			("base_log_sentence", OrderedDict(sorted(self.baseLogSentence.items()))),
			("planted_effects", [OrderedDict((("label", l), ("value", v), ("effect", e))) for (l, v), e in sorted(self.plantedEffects.items())]),
		))


def _identityInt(*parts: str) -> int:
	return int.from_bytes(hashlib.blake2b("\x00".join(parts).encode("utf-8"), digest_size=16).digest(), "little")


# one PCG64 stream per (seed, tag, identity); outcomes are independent of query order
def _rng(seed: int, tag: int, *parts: str) -> np.random.Generator:
	return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, tag, _identityInt(*parts)])))


def simulateOutcome(cfg: SynthConfig, caseId: str, label: LabelSpec, valueName: str) -> SentencingOutcome:
	rng = _rng(cfg.seed, _OBS_TAG, caseId, label.name, valueName)
	# fixed draw order: noise, jitter coin, redraw noise, failure coin
	eps = rng.normal(0.0, 1.0) * cfg.noiseSd
	jitter = rng.random() < cfg.jitterProb
	eps2 = rng.normal(0.0, 1.0) * cfg.noiseSd
	failed = rng.random() < cfg.failureProb
	if failed:
		return SentencingOutcome.failed(ParseStatus.noJSON)
	if cfg.noiseScope is NoiseScope.document:
		# one draw and one jitter coin per (case, label); a jittered document gets independent noise per value
		docRng = _rng(cfg.seed, _DOC_TAG, caseId, label.name)
		shared = docRng.normal(0.0, 1.0) * cfg.noiseSd
		noise = eps if docRng.random() < cfg.jitterProb else shared
	else:
		noise = eps2 if jitter else eps
	y = cfg.baseLog(caseId) + cfg.effect(label, valueName) + noise
	months = max(0, int(round(math.expm1(y))))
	return SentencingOutcome(True, months, False, False)


def simulateBody(cfg: SynthConfig, caseId: str, label: LabelSpec, valueName: str) -> str:
	o = simulateOutcome(cfg, caseId, label, valueName)
	if not o.ok:
		return "I am unable to reach a verdict on this case without further deliberation."
	rec = OrderedDict((k, v) for k, v in o.toJSON().items() if k != "parse_status")
	return json.dumps(rec)


def simulateOutputs(cases: CaseSet, labels: typing.Iterable[LabelSpec], cfg: SynthConfig, ageDraws: int = defaults.ageDraws) -> "OrderedDict[str, LabelOutcomeTable]":
	res = OrderedDict()
	for label in labels:
		included = applyExclusions(cases, label)
		records = []
		for case in included:
			for valueName, _ in counterfactualValues(case, label, ageDraws):
				records.append((case.id, valueName, simulateOutcome(cfg, case.id, label, valueName)))
		res[label.name] = LabelOutcomeTable.fromOutcomes(label, records, cases)
	return res


class MockJudgeServer:
	"""Chat-completion endpoint answering with synthetic verdicts, run in a background thread"""

	__slots__ = ("cfg", "index", "labels", "matchers", "server", "thread", "__weakref__")

	path = "/v1/chat/completions"

	def __init__(self, cfg: SynthConfig, cases: CaseSet, labels: typing.Sequence[LabelSpec], template: PromptTemplate, host: str = "127.0.0.1", port: int = 0, ageDraws: int = defaults.ageDraws) -> None:
		self.cfg = cfg
		self.labels = OrderedDict((l.name, l) for l in labels)
		self.index = {}
		for q in buildQueries(cases, self.labels.values(), template, ageDraws):
			self.index.setdefault(q.promptHash, q.key)
		self.matchers = [(l.name, v, makeTriggerMatcher(t)) for l in self.labels.values() for v, t in l.triggerTemplates.items()]
		self.server = make_server(host, port, self._wsgi, threaded=True)
		self.thread = None

	@property
	def url(self) -> str:
		return "http://" + self.server.host + ":" + str(self.server.port) + self.__class__.path

	def start(self) -> "MockJudgeServer":
		if self.thread is None:
			self.thread = threading.Thread(target=self.server.serve_forever, name="mock-judge", daemon=True)
			self.thread.start()
		return self

	def shutdown(self) -> None:
		if self.thread is not None:
			self.server.shutdown()
			self.thread.join()
			self.thread = None
		self.server.server_close()

	def __enter__(self) -> "MockJudgeServer":
		return self.start()

	def __exit__(self, *args, **kwargs) -> None:
		self.shutdown()

	def __del__(self) -> None:
		try:
			if self.thread is not None:
				self.shutdown()
		except Exception:  # pylint:disable=broad-except
			pass

	def triggersIn(self, prompt: str) -> typing.List[str]:
		return [l + "=" + v for l, v, m in self.matchers if m(prompt)]

	def answer(self, prompt: str) -> str:
		key = self.index.get(sha256Hex(prompt))
		if key is None:
			return json.dumps(OrderedDict((
				("guilty", False),
				("imprisonment_months", None),
				("life_imprisonment", False),
				("death_penalty", False),
				("diagnostic", "unrecognized prompt; triggers seen: " + (", ".join(self.triggersIn(prompt)) or "none")),
			)))
		caseId, labelName, valueName = key
		return simulateBody(self.cfg, caseId, self.labels[labelName], valueName)

	@Request.application
	def _wsgi(self, request: Request) -> Response:
		if request.method != "POST" or request.path != self.__class__.path:
			return Response("not found", status=404)
		try:
			payload = json.loads(request.get_data(as_text=True))
			prompt = payload["messages"][-1]["content"]
			if not isinstance(prompt, str):
				raise TypeError("content must be text")
		except (ValueError, KeyError, IndexError, TypeError) as ex:
			return Response(json.dumps({"error": {"message": "malformed request: " + str(ex)}}), status=400, mimetype="application/json")

		reply = OrderedDict((
			("object", "chat.completion"),
			("model", payload.get("model", "")),
			("choices", [OrderedDict((("index", 0), ("message", {"role": "assistant", "content": self.answer(prompt)}), ("finish_reason", "stop")))]),
		))
		return Response(json.dumps(reply), status=200, mimetype="application/json")


def serveMock(cfg: SynthConfig, cases: CaseSet, labels: typing.Sequence[LabelSpec], template: PromptTemplate, host: str = "127.0.0.1", port: int = 0, ageDraws: int = defaults.ageDraws) -> MockJudgeServer:
	return MockJudgeServer(cfg, cases, labels, template, host, port, ageDraws).start()
