import json
import math
import re
import typing
from collections import OrderedDict
from enum import Enum

from . import defaults
from .errors import ConfigError
from .util import SlotsRepr

__all__ = ("ParseStatus", "SentencingOutcome", "EncodingMode", "NotGuiltyPolicy", "SentenceEncoding", "parseResponse", "toRegressand", "findFirstJSONObject")

_decoder = json.JSONDecoder()
_structural = re.compile(r'[{}\[\]"\\]')


class ParseStatus(Enum):
	ok = "ok"
	noJSON = "no-json"
	schemaMismatch = "schema-mismatch"
	inconsistentFields = "inconsistent-fields"


class SentencingOutcome(SlotsRepr):
	__slots__ = ("guilty", "fixedTermMonths", "lifeImprisonment", "deathPenalty", "parseStatus")

	def __init__(self, guilty: bool = False, fixedTermMonths: typing.Optional[int] = None, lifeImprisonment: bool = False, deathPenalty: bool = False, parseStatus: ParseStatus = ParseStatus.ok) -> None:
		self.guilty = guilty
		self.fixedTermMonths = fixedTermMonths
		self.lifeImprisonment = lifeImprisonment
		self.deathPenalty = deathPenalty
		self.parseStatus = parseStatus

	@classmethod
	def failed(cls, status: ParseStatus) -> "SentencingOutcome":
		return cls(parseStatus=status)

	@property
	def ok(self) -> bool:
		return self.parseStatus is ParseStatus.ok

	@property
	def verdict(self) -> typing.Tuple[bool, typing.Optional[int], bool, bool]:
		return (self.guilty, self.fixedTermMonths, self.lifeImprisonment, self.deathPenalty)

	def toJSON(self) -> dict:
		return OrderedDict((
			("guilty", self.guilty),
			("imprisonment_months", self.fixedTermMonths),
			("life_imprisonment", self.lifeImprisonment),
			("death_penalty", self.deathPenalty),
			("parse_status", self.parseStatus.value),
		))


def _objectSpans(body: str) -> typing.List[typing.Tuple[int, int]]:
	"""(start, nesting height) of every balanced `{...}`, in order of start; quotes only open strings inside brackets"""
	spans = []
	stack = []
	opened = {"{": 0, "[": 0}
	inString = False
	escapedAt = -1
	for m in _structural.finditer(body):
		ch, i = m.group(), m.start()
		if inString:
			if i == escapedAt:
				continue
			if ch == "\\":
				escapedAt = i + 1
			elif ch == '"':
				inString = False
		elif ch == '"':
			inString = bool(stack)
		elif ch in "{[":
			stack.append((ch, i, 0))
			opened[ch] += 1
		elif ch in "}]":
			want = "{" if ch == "}" else "["
			if not opened[want]:
				continue
			carry = -1
			while True:
				o, start, height = stack.pop()
				opened[o] -= 1
				height = max(height, carry + 1)
				if o == want:
					break
				carry = height
			if stack:
				o, s, h = stack[-1]
				stack[-1] = (o, s, max(h, height + 1))
			if want == "{":
				spans.append((start, height))
	spans.sort()
	return spans


def findFirstJSONObject(body: str) -> typing.Optional[dict]:
	for start, height in _objectSpans(body):
		if height > defaults.maxJSONDepth:
			continue
		try:
			obj, _ = _decoder.raw_decode(body, start)
		except (ValueError, RecursionError):
			continue
		if isinstance(obj, dict):
			return obj
	return None


def _asBool(v) -> typing.Optional[bool]:
	if isinstance(v, bool):
		return v
	if isinstance(v, str) and v.strip().lower() in ("true", "false"):
		return v.strip().lower() == "true"
	return None


def _asMonths(v) -> typing.Tuple[bool, typing.Optional[int]]:
	if v is None:
		return True, None
	if isinstance(v, bool):
		return False, None
	if isinstance(v, str):
		try:
			v = float(v.strip())
		except ValueError:
			return False, None
	if isinstance(v, (int, float)):
		if isinstance(v, float) and (not math.isfinite(v) or v != int(v)):
			return False, None
		if not 0 <= v <= defaults.maxTermMonths:
			return False, None
		return True, int(v)
	return False, None


def parseResponse(body: typing.Union[str, bytes]) -> SentencingOutcome:
	if isinstance(body, (bytes, bytearray)):
		body = bytes(body).decode("utf-8", errors="replace")
	if not isinstance(body, str):
		return SentencingOutcome.failed(ParseStatus.noJSON)
	obj = findFirstJSONObject(body)
	if obj is None:
		return SentencingOutcome.failed(ParseStatus.noJSON)

	if "guilty" not in obj:
		return SentencingOutcome.failed(ParseStatus.schemaMismatch)
	guilty = _asBool(obj["guilty"])
	life = _asBool(obj.get("life_imprisonment", False))
	death = _asBool(obj.get("death_penalty", False))
	valid, months = _asMonths(obj.get("imprisonment_months"))
	if guilty is None or life is None or death is None or not valid:
		return SentencingOutcome.failed(ParseStatus.schemaMismatch)

	if not guilty:
		if life or death or months:
			return SentencingOutcome.failed(ParseStatus.inconsistentFields)
		return SentencingOutcome(False, None, False, False)

	if sum((months is not None, life, death)) != 1:
		return SentencingOutcome.failed(ParseStatus.inconsistentFields)
	return SentencingOutcome(True, months, life, death)


class EncodingMode(Enum):
	fixedTermOnly = "fixed-term-only"
	fullSentence = "full-sentence"


class NotGuiltyPolicy(Enum):
	zero = "zero"
	drop = "drop"


class SentenceEncoding(SlotsRepr):
	__slots__ = ("mode", "lifeMonths", "deathMonths", "notGuilty")

	def __init__(self, mode: EncodingMode = EncodingMode.fixedTermOnly, lifeMonths: int = defaults.lifeMonths, deathMonths: int = defaults.deathMonths, notGuilty: NotGuiltyPolicy = NotGuiltyPolicy.zero) -> None:
		if not deathMonths >= lifeMonths >= 1:
			raise ConfigError("encoding", "death_months >= life_months >= 1 is required")
		self.mode = mode
		self.lifeMonths = lifeMonths
		self.deathMonths = deathMonths
		self.notGuilty = notGuilty

	def withMode(self, mode: EncodingMode) -> "SentenceEncoding":
		return self.__class__(mode, self.lifeMonths, self.deathMonths, self.notGuilty)

	def months(self, outcome: SentencingOutcome) -> typing.Optional[int]:
		if not outcome.ok:
			return None
		if not outcome.guilty:
			if self.notGuilty is NotGuiltyPolicy.drop:
				return None
			return 0
		if outcome.fixedTermMonths is not None:
			return outcome.fixedTermMonths
		if self.mode is EncodingMode.fullSentence:
			if outcome.deathPenalty:
				return self.deathMonths
			if outcome.lifeImprisonment:
				return self.lifeMonths
		return None

	def toJSON(self) -> dict:
		return OrderedDict((("mode", self.mode.value), ("life_months", self.lifeMonths), ("death_months", self.deathMonths), ("not_guilty", self.notGuilty.value)))

	@classmethod
	def fromJSON(cls, rec: typing.Optional[dict]) -> "SentenceEncoding":
		rec = rec or {}
		try:
			return cls(EncodingMode(rec.get("mode", EncodingMode.fixedTermOnly.value)), int(rec.get("life_months", defaults.lifeMonths)), int(rec.get("death_months", defaults.deathMonths)), NotGuiltyPolicy(rec.get("not_guilty", NotGuiltyPolicy.zero.value)))
		except ValueError as ex:
			if isinstance(ex, ConfigError):
				raise
			raise ConfigError("encoding", str(ex)) from ex


def toRegressand(outcome: SentencingOutcome, enc: SentenceEncoding) -> typing.Optional[float]:
	m = enc.months(outcome)
	if m is None:
		return None
	return math.log1p(m)
