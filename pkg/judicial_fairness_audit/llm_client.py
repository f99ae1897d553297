import json
import os
import re
import threading
import time
import typing
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from datetime import date, datetime, timezone
from enum import Enum
from pathlib import Path

import requests
import tenacity

from . import defaults
from .errors import ConfigError
from .promptgen import QuerySpec
from .util import SlotsRepr, atomicWriteBytes, sha256Hex

__all__ = ("ModelConfig", "ResponseStatus", "RawResponse", "ResponseCache", "cacheKey", "execute", "loadCachedResponses", "summarizeResponses", "modelDirName", "authHeaders", "EndpointFailure")


class ModelConfig(SlotsRepr):
	__slots__ = ("modelId", "endpointUrl", "temperature", "maxOutputTokens", "runIndex", "requestTimeout", "maxRetries", "parallelism", "apiKeyEnv", "backoffBase", "backoffMax", "releaseDate", "parameterCount", "country")

	def __init__(self, modelId: str, endpointUrl: str, temperature: float = 0.0, maxOutputTokens: int = defaults.maxOutputTokens, runIndex: int = 0, requestTimeout: float = defaults.requestTimeout, maxRetries: int = defaults.maxRetries, parallelism: int = defaults.parallelism, apiKeyEnv: str = defaults.apiKeyEnvVar, backoffBase: float = defaults.backoffBase, backoffMax: float = defaults.backoffMax, releaseDate: typing.Optional[typing.Union[date, str]] = None, parameterCount: typing.Optional[float] = None, country: typing.Optional[str] = None) -> None:
		self.modelId = modelId
		self.endpointUrl = endpointUrl
		self.temperature = float(temperature)
		self.maxOutputTokens = int(maxOutputTokens)
		self.runIndex = int(runIndex)
		self.requestTimeout = float(requestTimeout)
		self.maxRetries = int(maxRetries)
		self.parallelism = int(parallelism)
		self.apiKeyEnv = apiKeyEnv
		self.backoffBase = float(backoffBase)
		self.backoffMax = float(backoffMax)
		self.releaseDate = date.fromisoformat(releaseDate) if isinstance(releaseDate, str) else releaseDate
		self.parameterCount = None if parameterCount is None else float(parameterCount)
		self.country = country or None
		self.validate()

	def validate(self) -> None:
		if not self.modelId:
			raise ConfigError("model_id", "must be non-empty")
		if not 0.0 <= self.temperature <= 2.0:
			raise ConfigError("temperature", "must lie in [0, 2], got " + repr(self.temperature))
		if self.parallelism < 1:
			raise ConfigError("parallelism", "must be at least 1")
		if self.runIndex < 0:
			raise ConfigError("run_index", "must be non-negative")
		if self.maxRetries < 0:
			raise ConfigError("max_retries", "must be non-negative")
		if self.maxOutputTokens < 1:
			raise ConfigError("max_output_tokens", "must be positive")
		if self.parameterCount is not None and not self.parameterCount > 0:
			raise ConfigError("parameter_count", "must be positive, got " + repr(self.parameterCount))

	def withTemperature(self, temperature: float) -> "ModelConfig":
		kw = {k: getattr(self, k) for k in self.__class__.__slots__}
		kw["temperature"] = temperature
		return self.__class__(**kw)

	JSON_FIELDS = OrderedDict((
		("model_id", "modelId"),
		("endpoint_url", "endpointUrl"),
		("temperature", "temperature"),
		("max_output_tokens", "maxOutputTokens"),
		("run_index", "runIndex"),
		("request_timeout", "requestTimeout"),
		("max_retries", "maxRetries"),
		("parallelism", "parallelism"),
		("api_key_env", "apiKeyEnv"),
		("backoff_base", "backoffBase"),
		("backoff_max", "backoffMax"),
		("release_date", "releaseDate"),
		("parameter_count", "parameterCount"),
		("country", "country"),
	))

	@classmethod
	def fromJSON(cls, rec: dict) -> "ModelConfig":
		for req in ("model_id", "endpoint_url"):
			if req not in rec:
				raise ConfigError("models[]." + req, "missing")
		kw = {attr: rec[jsonName] for jsonName, attr in cls.JSON_FIELDS.items() if jsonName in rec}
		try:
			return cls(**kw)
		except (TypeError, ValueError) as ex:
			if isinstance(ex, ConfigError):
				raise
			raise ConfigError("models[" + repr(rec.get("model_id")) + "]", str(ex)) from ex

	METADATA_FIELDS = ("release_date", "parameter_count", "country")

	def toJSON(self) -> dict:
		res = OrderedDict()
		for jsonName, attr in self.__class__.JSON_FIELDS.items():
			v = getattr(self, attr)
			if v is None and jsonName in self.__class__.METADATA_FIELDS:
				continue
			res[jsonName] = v.isoformat() if isinstance(v, date) else v
		return res


class ResponseStatus(Enum):
	ok = "ok"
	httpError = "http-error"
	timeout = "timeout"
	exhaustedRetries = "exhausted-retries"


class RawResponse(SlotsRepr):
	__slots__ = ("caseId", "labelName", "valueName", "modelId", "temperature", "runIndex", "body", "status", "latency", "fromCache", "promptHash")

	def __init__(self, query: QuerySpec, cfg: ModelConfig, body: str, status: ResponseStatus, latency: float, fromCache: bool) -> None:
		if status is ResponseStatus.ok and not body:
			raise ValueError("An ok response must carry a body")
		self.caseId, self.labelName, self.valueName = query.key
		self.promptHash = query.promptHash
		self.modelId = cfg.modelId
		self.temperature = cfg.temperature
		self.runIndex = cfg.runIndex
		self.body = body
		self.status = status
		self.latency = latency
		self.fromCache = fromCache

	@property
	def key(self) -> typing.Tuple[str, str, str]:
		return (self.caseId, self.labelName, self.valueName)

	def toJSON(self) -> dict:
		return OrderedDict((
			("case_id", self.caseId),
			("label", self.labelName),
			("value", self.valueName),
			("model_id", self.modelId),
			("temperature", self.temperature),
			("run_index", self.runIndex),
			("status", self.status.value),
			("from_cache", self.fromCache),
			("body", self.body),
		))


def cacheKey(modelId: str, temperature: float, promptHash: str, runIndex: int) -> str:
	return sha256Hex("\x00".join((modelId, repr(float(temperature)), promptHash, str(int(runIndex)))))


unsafeNameRx = re.compile("[^A-Za-z0-9._-]")


def modelDirName(modelId: str) -> str:
	return unsafeNameRx.sub("_", modelId)


class ResponseCache:
	"""`cacheDir/<model>/<key>.json` records of ok responses"""

	__slots__ = ("cacheDir",)

	def __init__(self, cacheDir: Path) -> None:
		self.cacheDir = Path(cacheDir)

	def __enter__(self) -> "ResponseCache":
		self.cacheDir.mkdir(parents=True, exist_ok=True)
		return self

	def __exit__(self, *args, **kwargs) -> None:
		pass

	def path(self, modelId: str, key: str) -> Path:
		return self.cacheDir / modelDirName(modelId) / (key + ".json")

	def get(self, modelId: str, key: str) -> typing.Optional[dict]:
		p = self.path(modelId, key)
		try:
			with open(p, "rt", encoding="utf-8") as f:
				rec = json.load(f)
		except FileNotFoundError:
			return None
		except json.JSONDecodeError:
			return None
		if rec.get("status") != ResponseStatus.ok.value or not rec.get("body"):
			return None
		return rec

	def put(self, modelId: str, key: str, promptHash: str, body: str, status: ResponseStatus) -> None:
		rec = OrderedDict((
			("prompt_hash", promptHash),
			("body", body),
			("timestamp", datetime.now(timezone.utc).isoformat()),
			("status", status.value),
		))
		atomicWriteBytes(self.path(modelId, key), json.dumps(rec, ensure_ascii=False, indent="\t").encode("utf-8"))

	def lookup(self, query: QuerySpec, cfg: ModelConfig) -> typing.Optional[str]:
		rec = self.get(cfg.modelId, cacheKey(cfg.modelId, cfg.temperature, query.promptHash, cfg.runIndex))
		if rec is None:
			return None
		return rec["body"]


class EndpointFailure(Exception):
	__slots__ = ("status", "retryable")

	def __init__(self, status: ResponseStatus, msg: str, retryable: bool = True) -> None:
		self.status = status
		self.retryable = retryable
		super().__init__(msg)


def _isRetryable(ex: BaseException) -> bool:
	return isinstance(ex, EndpointFailure) and ex.retryable


class _SessionPerThread(threading.local):
	def __init__(self) -> None:
		super().__init__()
		self.session = requests.Session()


def _postOnce(sessions: _SessionPerThread, cfg: ModelConfig, prompt: str, headers: dict) -> str:
	payload = {
		"model": cfg.modelId,
		"messages": [{"role": "user", "content": prompt}],
		"temperature": cfg.temperature,
		"max_tokens": cfg.maxOutputTokens,
	}
	try:
		resp = sessions.session.post(cfg.endpointUrl, json=payload, headers=headers, timeout=cfg.requestTimeout)
	except requests.Timeout as ex:
		raise EndpointFailure(ResponseStatus.timeout, str(ex)) from ex
	except requests.RequestException as ex:
		raise EndpointFailure(ResponseStatus.httpError, str(ex)) from ex

	if resp.status_code != 200:
		retryable = resp.status_code >= 500 or resp.status_code in (408, 409, 425, 429)
		raise EndpointFailure(ResponseStatus.httpError, "HTTP " + str(resp.status_code), retryable)
	try:
		content = resp.json()["choices"][0]["message"]["content"]
	except (ValueError, KeyError, IndexError, TypeError) as ex:
		raise EndpointFailure(ResponseStatus.httpError, "Malformed chat-completion response: " + str(ex)) from ex
	if not isinstance(content, str) or not content:
		raise EndpointFailure(ResponseStatus.httpError, "Empty completion")
	return content


def _fetch(sessions: _SessionPerThread, cfg: ModelConfig, prompt: str, headers: dict) -> typing.Tuple[str, ResponseStatus, float]:
	retrying = tenacity.Retrying(
		stop=tenacity.stop_after_attempt(cfg.maxRetries + 1),
		wait=tenacity.wait_exponential(multiplier=cfg.backoffBase, max=cfg.backoffMax),
		retry=tenacity.retry_if_exception(_isRetryable),
		reraise=True,
	)
	started = time.monotonic()
	attempts = 0
	try:
		for attempt in retrying:
			with attempt:
				attempts += 1
				body = _postOnce(sessions, cfg, prompt, headers)
	except EndpointFailure as ex:
		status = ResponseStatus.exhaustedRetries if attempts > 1 and ex.retryable else ex.status
		return "", status, time.monotonic() - started
	return body, ResponseStatus.ok, time.monotonic() - started


def authHeaders(cfg: ModelConfig) -> dict:
	key = os.environ.get(cfg.apiKeyEnv) or os.environ.get(defaults.apiKeyEnvVar)
	if key:
		return {"Authorization": "Bearer " + key}
	return {}


def execute(queries: typing.Sequence[QuerySpec], cfg: ModelConfig, cacheDir: Path) -> typing.List[RawResponse]:
	res = [None] * len(queries)
	pending = OrderedDict()

	with ResponseCache(cacheDir) as cache:
		for i, q in enumerate(queries):
			key = cacheKey(cfg.modelId, cfg.temperature, q.promptHash, cfg.runIndex)
			if key in pending:
				pending[key].append(i)
				continue
			cached = cache.get(cfg.modelId, key)
			if cached is not None:
				res[i] = RawResponse(q, cfg, cached["body"], ResponseStatus.ok, 0.0, True)
			else:
				pending[key] = [i]

		if pending:
			headers = authHeaders(cfg)
			sessions = _SessionPerThread()

			def work(key: str, idx: int) -> None:
				q = queries[idx]
				body, status, latency = _fetch(sessions, cfg, q.promptText, headers)
				if status is ResponseStatus.ok:
					cache.put(cfg.modelId, key, q.promptHash, body, status)
				for i in pending[key]:
					res[i] = RawResponse(queries[i], cfg, body, status, latency, i != idx and status is ResponseStatus.ok)

			with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
				futures = [pool.submit(work, key, idxs[0]) for key, idxs in pending.items()]
				for fut in futures:
					fut.result()

	return res


def loadCachedResponses(queries: typing.Sequence[QuerySpec], cfg: ModelConfig, cacheDir: Path) -> typing.Tuple[typing.List[RawResponse], typing.List[QuerySpec]]:
	found = []
	missing = []
	cache = ResponseCache(cacheDir)
	for q in queries:
		body = cache.lookup(q, cfg)
		if body is None:
			missing.append(q)
		else:
			found.append(RawResponse(q, cfg, body, ResponseStatus.ok, 0.0, True))
	return found, missing


def summarizeResponses(responses: typing.Iterable[RawResponse]) -> "OrderedDict[str, int]":
	res = OrderedDict((s.value, 0) for s in ResponseStatus)
	res["cached"] = 0
	for r in responses:
		res[r.status.value] += 1
		if r.fromCache:
			res["cached"] += 1
	return res
