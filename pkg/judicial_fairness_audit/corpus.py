import json
import typing
import warnings
from collections import OrderedDict
from datetime import date
from enum import Enum
from pathlib import Path

import numpy as np

from . import defaults
from .errors import CatalogError, CorpusError, DataQualityWarning
from .matchers import AgeTriggerMatcher, agePlaceholder
from .util import SlotsRepr

__all__ = ("LabelCategory", "NumericKind", "AgeRange", "LabelSpec", "LabelCatalog", "CaseDocument", "CaseSet", "loadLabelSpecs", "parseLabelSpecs", "dumpLabelSpecs", "loadCorpus", "parseCorpus", "dumpCorpus", "applyExclusions", "sampleCases", "filterByDate", "generateAgeValues", "originalAge")


class LabelCategory(Enum):
	substanceDemographic = "substance-demographic"
	substanceNondemographic = "substance-nondemographic"
	procedureDemographic = "procedure-demographic"
	procedureNondemographic = "procedure-nondemographic"


class NumericKind(Enum):
	categorical = "categorical"
	numericAge = "numeric-age"


class AgeRange(SlotsRepr):
	__slots__ = ("min", "max", "window")

	def __init__(self, min: int, max: int, window: int = defaults.ageForbiddenWindow) -> None:  # pylint:disable=redefined-builtin
		self.min = min
		self.max = max
		self.window = window

	def allowed(self, original: typing.Optional[int]) -> typing.List[int]:
		res = list(range(self.min, self.max + 1))
		if original is not None:
			res = [a for a in res if abs(a - original) > self.window]
		return res


class LabelSpec(SlotsRepr):
	"""One auditable extra-legal factor.

	For numeric-age labels `values` are nominal slots: the concrete ages are drawn per case by `generateAgeValues` and the regression uses a single real-valued `age` column.
	"""

	__slots__ = ("name", "category", "values", "referenceValue", "triggerTemplates", "excludedCrimeCategories", "numericKind", "ageRange")

	def __init__(self, name: str, category: LabelCategory, values: typing.Sequence[str], referenceValue: str, triggerTemplates: typing.Mapping[str, str], excludedCrimeCategories: typing.Iterable[str] = (), numericKind: NumericKind = NumericKind.categorical, ageRange: typing.Optional[AgeRange] = None) -> None:
		self.name = name
		self.category = category
		self.values = tuple(values)
		self.referenceValue = referenceValue
		self.triggerTemplates = OrderedDict((v, triggerTemplates[v]) for v in self.values if v in triggerTemplates)
		self.excludedCrimeCategories = frozenset(excludedCrimeCategories)
		self.numericKind = numericKind
		self.ageRange = ageRange
		self.validate()

	@property
	def isAge(self) -> bool:
		return self.numericKind is NumericKind.numericAge

	@property
	def nonReferenceValues(self) -> typing.Tuple[str, ...]:
		return tuple(v for v in self.values if v != self.referenceValue)

	@property
	def regressorNames(self) -> typing.Tuple[str, ...]:
		if self.isAge:
			return ("age",)
		return self.nonReferenceValues

	@property
	def ageTemplate(self) -> str:
		return self.triggerTemplates[self.referenceValue]

	def validate(self) -> None:
		if not self.name or not isinstance(self.name, str):
			raise CatalogError(self.name, "name", "must be a non-empty string")
		if len(self.values) < 2:
			raise CatalogError(self.name, "values", "at least 2 values are required, got " + str(len(self.values)))
		if len(set(self.values)) != len(self.values):
			raise CatalogError(self.name, "values", "values must be pairwise distinct")
		if self.referenceValue not in self.values:
			raise CatalogError(self.name, "reference_value", repr(self.referenceValue) + " is not one of " + repr(self.values))
		for v in self.values:
			t = self.triggerTemplates.get(v)
			if not t:
				raise CatalogError(self.name, "triggers", "no trigger template for value " + repr(v))
		if self.isAge:
			if self.ageRange is None:
				raise CatalogError(self.name, "age_range", "required for numeric-age labels")
			if self.ageRange.min > self.ageRange.max:
				raise CatalogError(self.name, "age_range", "min exceeds max")
			for v, t in self.triggerTemplates.items():
				if agePlaceholder not in t:
					raise CatalogError(self.name, "triggers", "numeric-age template for " + repr(v) + " lacks " + agePlaceholder)

	def toJSON(self) -> dict:
		res = OrderedDict()
		res["name"] = self.name
		res["category"] = self.category.value
		res["values"] = list(self.values)
		res["reference_value"] = self.referenceValue
		res["triggers"] = OrderedDict(self.triggerTemplates)
		res["excluded_crime_categories"] = sorted(self.excludedCrimeCategories)
		res["numeric_kind"] = self.numericKind.value
		if self.ageRange is not None:
			res["age_range"] = OrderedDict((("min", self.ageRange.min), ("max", self.ageRange.max), ("window", self.ageRange.window)))
		return res


class LabelCatalog(list):
	__slots__ = ()

	def byName(self, name: str) -> LabelSpec:
		for l in self:
			if l.name == name:
				return l
		raise KeyError(name)

	def names(self) -> typing.Tuple[str, ...]:
		return tuple(l.name for l in self)

	def summary(self) -> "OrderedDict[str, int]":
		res = OrderedDict()
		res["labels"] = len(self)
		res["values"] = sum(len(l.values) for l in self)
		res["coefficients"] = sum(len(l.regressorNames) for l in self)
		for c in LabelCategory:
			res[c.value] = sum(1 for l in self if l.category is c)
		return res


def _req(rec: dict, field: str, label: typing.Optional[str]):
	try:
		return rec[field]
	except KeyError:
		raise CatalogError(label, field, "missing") from None


def _enumField(enumCls, rec: dict, field: str, label: str, default=None):
	raw = rec.get(field, default)
	if raw is None:
		raise CatalogError(label, field, "missing")
	try:
		return enumCls(raw)
	except ValueError:
		raise CatalogError(label, field, repr(raw) + " is not one of " + repr([e.value for e in enumCls])) from None


def labelSpecFromJSON(rec: dict) -> LabelSpec:
	if not isinstance(rec, dict):
		raise CatalogError(None, None, "every catalog entry must be an object, got " + type(rec).__name__)
	name = _req(rec, "name", None)
	values = _req(rec, "values", name)
	if not isinstance(values, list) or not all(isinstance(v, str) for v in values):
		raise CatalogError(name, "values", "must be a list of strings")
	triggers = _req(rec, "triggers", name)
	if not isinstance(triggers, dict):
		raise CatalogError(name, "triggers", "must be an object mapping value to sentence")
	excluded = rec.get("excluded_crime_categories", [])
	if not isinstance(excluded, list):
		raise CatalogError(name, "excluded_crime_categories", "must be a list")
	ageRange = None
	rawRange = rec.get("age_range")
	if rawRange is not None:
		try:
			ageRange = AgeRange(int(rawRange["min"]), int(rawRange["max"]), int(rawRange.get("window", defaults.ageForbiddenWindow)))
		except (KeyError, TypeError, ValueError):
			raise CatalogError(name, "age_range", "must be an object with integer min and max") from None
	return LabelSpec(
		name=name,
		category=_enumField(LabelCategory, rec, "category", name),
		values=values,
		referenceValue=_req(rec, "reference_value", name),
		triggerTemplates=triggers,
		excludedCrimeCategories=excluded,
		numericKind=_enumField(NumericKind, rec, "numeric_kind", name, NumericKind.categorical.value),
		ageRange=ageRange,
	)


def parseLabelSpecs(records: typing.Iterable[dict]) -> LabelCatalog:
	res = LabelCatalog()
	seen = set()
	for rec in records:
		spec = labelSpecFromJSON(rec)
		if spec.name in seen:
			raise CatalogError(spec.name, "name", "duplicate label name")
		seen.add(spec.name)
		res.append(spec)
	return res


def loadLabelSpecs(path: typing.Optional[Path] = None) -> LabelCatalog:
	if path is None:
		path = defaults.catalogPath
	with open(path, "rt", encoding="utf-8") as f:
		try:
			raw = json.load(f)
		except json.JSONDecodeError as ex:
			raise CatalogError(None, None, "not valid JSON: " + str(ex)) from ex
	if not isinstance(raw, list):
		raise CatalogError(None, None, "the catalog must be a JSON array")
	return parseLabelSpecs(raw)


def dumpLabelSpecs(catalog: typing.Iterable[LabelSpec]) -> str:
	return json.dumps([l.toJSON() for l in catalog], ensure_ascii=False, indent="\t")


class CaseDocument(SlotsRepr):
	__slots__ = ("id", "facts", "parties", "crimeCategories", "realSentenceMonths", "filingDate", "originalTriggers")

	def __init__(self, id: str, facts: str, parties: str, crimeCategories: typing.Iterable[str], realSentenceMonths: typing.Optional[int], filingDate: date, originalTriggers: typing.Optional[typing.Mapping[str, str]] = None) -> None:  # pylint:disable=redefined-builtin
		if realSentenceMonths is not None and realSentenceMonths < 0:
			raise CorpusError("Case " + repr(id) + ": real_sentence_months must be non-negative, got " + repr(realSentenceMonths))
		self.id = id
		self.facts = facts
		self.parties = parties
		self.crimeCategories = frozenset(crimeCategories)
		self.realSentenceMonths = realSentenceMonths
		self.filingDate = filingDate
		self.originalTriggers = dict(originalTriggers or {})

	@property
	def body(self) -> str:
		if self.parties:
			return self.facts + "\n" + self.parties
		return self.facts

	@property
	def firstCrimeCategory(self) -> str:
		"""Clustering key of the crime-category variant; the smallest id keeps it deterministic"""
		if not self.crimeCategories:
			return ""
		return min(self.crimeCategories)

	def toJSON(self) -> dict:
		res = OrderedDict()
		res["id"] = self.id
		res["facts"] = self.facts
		res["parties"] = self.parties
		res["crime_categories"] = sorted(self.crimeCategories)
		res["real_sentence_months"] = self.realSentenceMonths
		res["filing_date"] = self.filingDate.isoformat()
		res["original_triggers"] = OrderedDict(sorted(self.originalTriggers.items()))
		return res


class CaseSet(SlotsRepr):
	__slots__ = ("cases", "provenance")

	def __init__(self, cases: typing.Iterable[CaseDocument], provenance: str = "") -> None:
		self.cases = tuple(sorted(cases, key=lambda c: c.id))
		self.provenance = provenance
		prev = None
		for c in self.cases:
			if c.id == prev:
				raise CorpusError("Duplicate case id " + repr(c.id))
			prev = c.id

	def __len__(self) -> int:
		return len(self.cases)

	def __iter__(self) -> typing.Iterator[CaseDocument]:
		return iter(self.cases)

	def ids(self) -> typing.Tuple[str, ...]:
		return tuple(c.id for c in self.cases)

	def byId(self) -> typing.Dict[str, CaseDocument]:
		return {c.id: c for c in self.cases}

	def derive(self, cases: typing.Iterable[CaseDocument], note: str) -> "CaseSet":
		prov = self.provenance
		if not prov.endswith(note):
			prov = (prov + "; " if prov else "") + note
		return self.__class__(cases, prov)


def caseFromJSON(rec: dict) -> CaseDocument:
	try:
		cid = rec["id"]
		filing = date.fromisoformat(rec["filing_date"])
		months = rec.get("real_sentence_months")
		if months is not None:
			months = int(months)
		return CaseDocument(
			id=str(cid),
			facts=rec.get("facts", ""),
			parties=rec.get("parties", ""),
			crimeCategories=rec.get("crime_categories", ()),
			realSentenceMonths=months,
			filingDate=filing,
			originalTriggers=rec.get("original_triggers") or {},
		)
	except KeyError as ex:
		raise CorpusError("Case record " + repr(rec.get("id")) + " lacks field " + str(ex)) from None
	except (TypeError, ValueError) as ex:
		raise CorpusError("Case record " + repr(rec.get("id")) + " is malformed: " + str(ex)) from None


def parseCorpus(records: typing.Iterable[dict], provenance: str = "") -> CaseSet:
	return CaseSet((caseFromJSON(r) for r in records), provenance)


def loadCorpus(path: Path) -> CaseSet:
	with open(path, "rt", encoding="utf-8") as f:
		raw = json.load(f)
	if not isinstance(raw, list):
		raise CorpusError("The corpus must be a JSON array")
	res = parseCorpus(raw, "source=" + str(path))
	missing = sum(1 for c in res if c.realSentenceMonths is None)
	if missing:
		warnings.warn(str(missing) + " of " + str(len(res)) + " cases lack a real sentence; they are skipped by accuracy metrics", DataQualityWarning)
	return res


def dumpCorpus(cases: typing.Iterable[CaseDocument]) -> str:
	return json.dumps([c.toJSON() for c in cases], ensure_ascii=False, indent="\t")


def applyExclusions(cases: CaseSet, label: LabelSpec) -> CaseSet:
	if not label.excludedCrimeCategories:
		return cases
	return cases.derive((c for c in cases if not (c.crimeCategories & label.excludedCrimeCategories)), "exclusions=" + label.name)


def sampleCases(cases: CaseSet, n: int, seed: int) -> CaseSet:
	if n < 0:
		raise ValueError("Sample size must be non-negative")
	if len(cases) <= n:
		return cases
	rng = np.random.Generator(np.random.PCG64(seed))
	picked = rng.choice(len(cases), size=n, replace=False)
	return cases.derive((cases.cases[i] for i in sorted(picked.tolist())), "sample=" + str(n) + "@" + str(seed))


def filterByDate(cases: CaseSet, cutoff: date) -> CaseSet:
	return cases.derive((c for c in cases if c.filingDate >= cutoff), "filed>=" + cutoff.isoformat())


def originalAge(case: CaseDocument, label: LabelSpec) -> typing.Optional[int]:
	sentence = case.originalTriggers.get(label.name)
	if not sentence:
		return None
	return AgeTriggerMatcher(label.ageTemplate).age(sentence)


def generateAgeValues(label: LabelSpec, original: typing.Optional[int], k: int = defaults.ageDraws) -> typing.List[int]:
	"""`k` evenly spaced ages from the range, skipping the window around the original age"""
	if k < 1:
		raise ValueError("k must be at least 1")
	allowed = label.ageRange.allowed(original)
	if not allowed:
		return []
	if k >= len(allowed):
		return allowed
	if k == 1:
		return [allowed[0]]
	idx = np.linspace(0, len(allowed) - 1, k)
	return [allowed[int(round(i))] for i in idx]
