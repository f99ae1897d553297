import json
import typing
import warnings
from collections import OrderedDict
from enum import Enum
from pathlib import Path

from . import defaults
from .corpus import CaseDocument, CaseSet, LabelSpec, applyExclusions, generateAgeValues, originalAge
from .errors import CorpusError, DataQualityWarning, TemplateError
from .matchers import AgeTriggerMatcher
from .util import SlotsRepr, readJSONLines, sha256Hex, writeJSONLines

__all__ = ("PromptTemplate", "SubstitutionMode", "QuerySpec", "loadTemplate", "substituteTrigger", "renderPrompt", "caseBody", "counterfactualValues", "buildQuerySet", "buildQueries", "countQueries", "writeQuerySet", "readQuerySet")


class PromptTemplate(SlotsRepr):
	__slots__ = ("rolePreamble", "taskDefinition", "rules", "caseOpenToken", "caseCloseToken", "closingInstruction", "conflictNote")

	JSON_FIELDS = OrderedDict((
		("role_preamble", "rolePreamble"),
		("task_definition", "taskDefinition"),
		("rules", "rules"),
		("case_open_token", "caseOpenToken"),
		("case_close_token", "caseCloseToken"),
		("closing_instruction", "closingInstruction"),
		("conflict_note", "conflictNote"),
	))

	def __init__(self, rolePreamble: str, taskDefinition: str, rules: str, caseOpenToken: str, caseCloseToken: str, closingInstruction: str, conflictNote: str) -> None:
		self.rolePreamble = rolePreamble
		self.taskDefinition = taskDefinition
		self.rules = rules
		self.caseOpenToken = caseOpenToken
		self.caseCloseToken = caseCloseToken
		self.closingInstruction = closingInstruction
		self.conflictNote = conflictNote

	def validate(self) -> None:
		for jsonName, attr in self.__class__.JSON_FIELDS.items():
			v = getattr(self, attr)
			if not isinstance(v, str) or not v.strip():
				raise TemplateError("Template section " + repr(jsonName) + " must be non-empty text")

	@classmethod
	def fromJSON(cls, rec: dict, base: typing.Optional["PromptTemplate"] = None) -> "PromptTemplate":
		kwargs = {}
		for jsonName, attr in cls.JSON_FIELDS.items():
			if jsonName in rec:
				kwargs[attr] = rec[jsonName]
			elif base is not None:
				kwargs[attr] = getattr(base, attr)
			else:
				raise TemplateError("Template lacks section " + repr(jsonName))
		res = cls(**kwargs)
		res.validate()
		return res

	def toJSON(self) -> dict:
		return OrderedDict((jsonName, getattr(self, attr)) for jsonName, attr in self.__class__.JSON_FIELDS.items())


def loadTemplate(path: typing.Optional[Path] = None) -> PromptTemplate:
	with open(defaults.templatePath, "rt", encoding="utf-8") as f:
		base = PromptTemplate.fromJSON(json.load(f))
	if path is None:
		return base
	with open(path, "rt", encoding="utf-8") as f:
		try:
			rec = json.load(f)
		except json.JSONDecodeError as ex:
			raise TemplateError("Template " + str(path) + " is not valid JSON: " + str(ex)) from ex
	if not isinstance(rec, dict):
		raise TemplateError("Template " + str(path) + " must be a JSON object")
	return PromptTemplate.fromJSON(rec, base)


class SubstitutionMode(Enum):
	replacedInPlace = "replaced-in-place"
	prepended = "prepended"


class QuerySpec(SlotsRepr):
	__slots__ = ("caseId", "labelName", "valueName", "promptText", "promptHash", "substitutionMode")

	def __init__(self, caseId: str, labelName: str, valueName: str, promptText: str, substitutionMode: SubstitutionMode, promptHash: typing.Optional[str] = None) -> None:
		self.caseId = caseId
		self.labelName = labelName
		self.valueName = valueName
		self.promptText = promptText
		self.promptHash = sha256Hex(promptText)
		if promptHash is not None and promptHash != self.promptHash:
			raise ValueError("Stored prompt hash of " + repr(self.key) + " does not match its text")
		self.substitutionMode = substitutionMode

	@property
	def key(self) -> typing.Tuple[str, str, str]:
		return (self.caseId, self.labelName, self.valueName)

	def toJSON(self) -> dict:
		return OrderedDict((
			("case_id", self.caseId),
			("label", self.labelName),
			("value", self.valueName),
			("prompt_hash", self.promptHash),
			("substitution_mode", self.substitutionMode.value),
			("prompt", self.promptText),
		))

	@classmethod
	def fromJSON(cls, rec: dict) -> "QuerySpec":
		return cls(rec["case_id"], rec["label"], rec["value"], rec["prompt"], SubstitutionMode(rec["substitution_mode"]), rec.get("prompt_hash"))


def substituteTrigger(body: str, original: typing.Optional[str], replacement: str, conflictNote: str) -> typing.Tuple[str, SubstitutionMode]:
	if not replacement:
		raise ValueError("Replacement trigger must be non-empty")
	if original and original in body:
		return body.replace(original, replacement), SubstitutionMode.replacedInPlace
	return replacement + " " + conflictNote + "\n" + body, SubstitutionMode.prepended


def caseBody(case: CaseDocument) -> str:
	return case.body


def renderPrompt(template: PromptTemplate, case: CaseDocument, triggerText: str, body: typing.Optional[str] = None) -> str:
	if body is None:
		body = caseBody(case)
	return "\n\n".join((
		template.rolePreamble,
		template.taskDefinition,
		template.rules,
		template.caseOpenToken + "\n" + triggerText + body + "\n" + template.caseCloseToken,
		template.closingInstruction,
	)) + "\n"


def counterfactualValues(case: CaseDocument, label: LabelSpec, ageDraws: int) -> typing.Iterator[typing.Tuple[str, str]]:
	if label.isAge:
		m = AgeTriggerMatcher(label.ageTemplate)
		for age in generateAgeValues(label, originalAge(case, label), ageDraws):
			yield str(age), m.render(age)
	else:
		for v in label.values:
			yield v, label.triggerTemplates[v]


def buildQuerySet(case: CaseDocument, label: LabelSpec, template: PromptTemplate, ageDraws: int = defaults.ageDraws) -> typing.List[QuerySpec]:
	template.validate()
	if case.crimeCategories & label.excludedCrimeCategories:
		raise CorpusError("Case " + repr(case.id) + " is excluded for label " + repr(label.name))
	body = caseBody(case)
	original = case.originalTriggers.get(label.name)
	res = []
	for valueName, replacement in counterfactualValues(case, label, ageDraws):
		newBody, mode = substituteTrigger(body, original, replacement, template.conflictNote)
		res.append(QuerySpec(case.id, label.name, valueName, renderPrompt(template, case, "", newBody), mode))
	return res


def buildQueries(cases: CaseSet, catalog: typing.Iterable[LabelSpec], template: PromptTemplate, ageDraws: int = defaults.ageDraws) -> typing.List[QuerySpec]:
	res = []
	for label in catalog:
		for case in applyExclusions(cases, label):
			res.extend(buildQuerySet(case, label, template, ageDraws))

	seen = {}
	dups = 0
	for q in res:
		first = seen.setdefault(q.promptHash, q.key)
		if first != q.key:
			dups += 1
	if dups:
		warnings.warn(str(dups) + " queries render to a prompt identical to an earlier query; they share one cached response", DataQualityWarning)
	return res


def countQueries(queries: typing.Iterable[QuerySpec]) -> "OrderedDict[str, int]":
	res = OrderedDict()
	for q in queries:
		res[q.labelName] = res.get(q.labelName, 0) + 1
	return res


def writeQuerySet(path: Path, queries: typing.Iterable[QuerySpec]) -> int:
	return writeJSONLines(path, (q.toJSON() for q in queries))


def readQuerySet(path: Path) -> typing.List[QuerySpec]:
	return [QuerySpec.fromJSON(r) for r in readJSONLines(path)]
