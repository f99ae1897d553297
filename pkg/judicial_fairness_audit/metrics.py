import math
import typing
import warnings
from collections import OrderedDict
from datetime import date
from enum import Enum

import numpy as np
import pandas as pd

from . import defaults
from .corpus import CaseSet, LabelSpec, filterByDate
from .errors import DataQualityWarning, EstimationError
from .outcome_parser import EncodingMode, NotGuiltyPolicy, SentenceEncoding, SentencingOutcome
from .stats_fe import PanelDesign, RegressionFit, SEKind, fitFeOls
from .util import SlotsRepr

__all__ = ("RobustnessVariant", "MetricKind", "MAEScope", "LabelOutcomeTable", "LabelInconsistency", "LabelAccuracy", "ModelMetrics", "inconsistencyLabel", "inconsistencyModel", "biasFit", "imbalanceFit", "maeMape", "weightedAverage", "computeModelMetrics", "averageInconsistency")


class RobustnessVariant(Enum):
	main = "main"
	robustSE = "robust-se"
	crimeCluster = "crime-cluster"
	fullSentence = "full-sentence"
	post2014 = "post-2014"

	@property
	def seKind(self) -> SEKind:
		return SEKind.hc1 if self is RobustnessVariant.robustSE else SEKind.cluster

	def encoding(self, enc: SentenceEncoding) -> SentenceEncoding:
		if self is RobustnessVariant.fullSentence:
			return enc.withMode(EncodingMode.fullSentence)
		return enc

	@property
	def cutoff(self) -> typing.Optional[date]:
		if self is RobustnessVariant.post2014:
			return defaults.postFilterCutoff
		return None


class MetricKind(Enum):
	bias = "bias"
	imbalance = "imbalance"


class MAEScope(Enum):
	all = "all"
	reference = "reference"


OUTCOME_COLUMNS = ("case_id", "value", "covariate", "parse_ok", "guilty", "months", "life", "death")


class LabelOutcomeTable:
	"""Parsed outcomes of one label joined to the corpus: one row per (case, value)"""

	__slots__ = ("label", "rows", "realMonths", "crimeClusters", "cases")

	def __init__(self, label: str, rows: pd.DataFrame, realMonths: typing.Mapping[str, typing.Optional[int]], crimeClusters: typing.Optional[typing.Mapping[str, str]] = None, cases: typing.Optional[CaseSet] = None) -> None:
		missing = [c for c in OUTCOME_COLUMNS if c not in rows.columns]
		if missing:
			raise ValueError("Outcome rows lack columns " + repr(missing))
		if rows.duplicated(["case_id", "value"]).any():
			raise ValueError("Label " + repr(label) + ": (case_id, value) pairs must be unique")
		self.label = label
		self.rows = rows.reset_index(drop=True)
		self.realMonths = dict(realMonths)
		self.crimeClusters = dict(crimeClusters or {})
		self.cases = cases

	@classmethod
	def fromOutcomes(cls, label: LabelSpec, records: typing.Iterable[typing.Tuple[str, str, SentencingOutcome]], cases: CaseSet) -> "LabelOutcomeTable":
		data = []
		for caseId, valueName, o in records:
			covariate = float(valueName) if label.isAge else float("nan")
			data.append((caseId, valueName, covariate, o.ok, bool(o.guilty), float("nan") if o.fixedTermMonths is None else float(o.fixedTermMonths), bool(o.lifeImprisonment), bool(o.deathPenalty)))
		rows = pd.DataFrame.from_records(data, columns=OUTCOME_COLUMNS)
		byId = cases.byId()
		ids = set(rows["case_id"])
		return cls(
			label.name,
			rows,
			{i: byId[i].realSentenceMonths for i in ids if i in byId},
			{i: byId[i].firstCrimeCategory for i in ids if i in byId},
			cases,
		)

	def __len__(self) -> int:
		return len(self.rows)

	def months(self, enc: SentenceEncoding) -> np.ndarray:
		r = self.rows
		ok = r["parse_ok"].to_numpy(dtype=bool)
		guilty = r["guilty"].to_numpy(dtype=bool)
		months = r["months"].to_numpy(dtype=float)
		life = r["life"].to_numpy(dtype=bool)
		death = r["death"].to_numpy(dtype=bool)

		res = np.full(len(r), np.nan)
		fixed = ok & guilty & ~np.isnan(months)
		res[fixed] = months[fixed]
		if enc.notGuilty is NotGuiltyPolicy.zero:
			res[ok & ~guilty] = 0.0
		if enc.mode is EncodingMode.fullSentence:
			res[ok & guilty & life] = enc.lifeMonths
			res[ok & guilty & death] = enc.deathMonths
		return res

	def regressands(self, enc: SentenceEncoding) -> np.ndarray:
		return np.log1p(self.months(enc))

	def realMonthsColumn(self) -> np.ndarray:
		return np.array([np.nan if self.realMonths.get(c) is None else float(self.realMonths[c]) for c in self.rows["case_id"]])

	def dateMask(self, cutoff: typing.Optional[date]) -> np.ndarray:
		if cutoff is None:
			return np.ones(len(self.rows), dtype=bool)
		if self.cases is None:
			return np.zeros(len(self.rows), dtype=bool)
		return self.rows["case_id"].isin(filterByDate(self.cases, cutoff).ids()).to_numpy(dtype=bool)


class LabelInconsistency(SlotsRepr):
	__slots__ = ("label", "p", "w", "excluded")

	def __init__(self, label: str, p: float, w: int, excluded: bool = False) -> None:
		self.label = label
		self.p = p
		self.w = w
		self.excluded = excluded


def _eligibleDocuments(table: LabelOutcomeTable) -> pd.DataFrame:
	ok = table.rows[table.rows["parse_ok"]]
	sizes = ok.groupby("case_id", sort=True)["value"].transform("size")
	return ok[sizes >= 2]


def inconsistencyLabel(table: LabelOutcomeTable) -> LabelInconsistency:
	eligible = _eligibleDocuments(table)
	if not len(eligible):
		return LabelInconsistency(table.label, 0.0, 0, True)
	verdicts = eligible.assign(months=eligible["months"].fillna(-1.0))
	distinct = verdicts.groupby("case_id", sort=True)[["guilty", "months", "life", "death"]].apply(lambda g: len(g.drop_duplicates()))
	w = int(len(distinct))
	changed = int((distinct >= 2).sum())
	return LabelInconsistency(table.label, changed / w, w, False)


def weightedAverage(values: typing.Iterable[float], weights: typing.Iterable[float]) -> float:
	values = np.asarray(list(values), dtype=float)
	weights = np.asarray(list(weights), dtype=float)
	if values.shape != weights.shape:
		raise ValueError("values and weights must have equal lengths")
	total = weights.sum()
	if not total > 0:
		raise EstimationError("Total weight must be positive")
	return float((values * weights).sum() / total)


def inconsistencyModel(perLabel: typing.Iterable[LabelInconsistency]) -> float:
	perLabel = list(perLabel)
	return weightedAverage([l.p for l in perLabel], [l.w for l in perLabel])


def _design(table: LabelOutcomeTable, label: LabelSpec, y: np.ndarray, variant: RobustnessVariant) -> PanelDesign:
	r = table.rows
	keep = ~np.isnan(y) & table.dateMask(variant.cutoff)
	values = r["value"].to_numpy(dtype=object)
	if label.isAge:
		X = r["covariate"].to_numpy(dtype=float).reshape(-1, 1)
		keep &= ~np.isnan(X[:, 0])
	else:
		known = np.isin(values, np.asarray(label.values, dtype=object))
		if not known.all():
			warnings.warn("Label " + repr(label.name) + ": " + str(int((~known).sum())) + " rows carry values outside the catalog and are ignored", DataQualityWarning)
		keep &= known
		X = np.stack([(values == v).astype(float) for v in label.nonReferenceValues], axis=1)

	caseIds = r["case_id"].to_numpy(dtype=object)
	if variant is RobustnessVariant.crimeCluster:
		clusters = np.array([table.crimeClusters.get(c, "") for c in caseIds], dtype=object)
	else:
		clusters = caseIds
	return PanelDesign(y[keep], X[keep], caseIds[keep], clusters[keep], label.regressorNames)


def biasFit(table: LabelOutcomeTable, label: LabelSpec, variant: RobustnessVariant = RobustnessVariant.main, enc: typing.Optional[SentenceEncoding] = None) -> RegressionFit:
	"""FE regression of ln(months + 1) on the non-reference value indicators, documents absorbed"""
	enc = variant.encoding(enc or SentenceEncoding())
	return fitFeOls(_design(table, label, table.regressands(enc), variant), variant.seKind)


def imbalanceFit(table: LabelOutcomeTable, label: LabelSpec, variant: RobustnessVariant = RobustnessVariant.main, enc: typing.Optional[SentenceEncoding] = None) -> RegressionFit:
	enc = variant.encoding(enc or SentenceEncoding())
	absDiff = np.abs(table.months(enc) - table.realMonthsColumn())
	return fitFeOls(_design(table, label, absDiff, variant), variant.seKind)


class LabelAccuracy(SlotsRepr):
	__slots__ = ("label", "mae", "mape", "w", "nRows", "nZeroReal")

	def __init__(self, label: str, mae: float, mape: float, w: int, nRows: int, nZeroReal: int) -> None:
		self.label = label
		self.mae = mae
		self.mape = mape
		self.w = w
		self.nRows = nRows
		self.nZeroReal = nZeroReal

	@property
	def defined(self) -> bool:
		return not math.isnan(self.mae)

	def __iter__(self):
		return iter((self.mae, self.mape, self.w))


def maeMape(table: LabelOutcomeTable, enc: typing.Optional[SentenceEncoding] = None, scope: MAEScope = MAEScope.all, label: typing.Optional[LabelSpec] = None) -> LabelAccuracy:
	enc = enc or SentenceEncoding()
	pred = table.months(enc)
	real = table.realMonthsColumn()
	mask = ~np.isnan(pred) & ~np.isnan(real)
	if scope is MAEScope.reference and label is not None and not label.isAge:
		mask &= (table.rows["value"] == label.referenceValue).to_numpy()
	err = np.abs(pred[mask] - real[mask])
	r = real[mask]
	positive = r > 0
	w = inconsistencyLabel(table).w
	mae = float(err.mean()) if len(err) else float("nan")
	mape = float((err[positive] / r[positive]).mean()) if positive.any() else float("nan")
	return LabelAccuracy(table.label, mae, mape, w, int(mask.sum()), int((~positive).sum()))


class ModelMetrics(SlotsRepr):
	__slots__ = ("modelId", "temperature", "inconsistencies", "accuracies", "fits", "failures")

	def __init__(self, modelId: str, temperature: float) -> None:
		self.modelId = modelId
		self.temperature = temperature
		self.inconsistencies = OrderedDict()
		self.accuracies = OrderedDict()
		self.fits = OrderedDict()
		self.failures = []

	@property
	def inconsistency(self) -> float:
		try:
			return inconsistencyModel(self.inconsistencies.values())
		except EstimationError:
			return float("nan")

	def _weightedAccuracy(self, attr: str) -> float:
		pairs = [(getattr(a, attr), a.w) for a in self.accuracies.values() if not math.isnan(getattr(a, attr))]
		if not pairs or not sum(w for _, w in pairs) > 0:
			return float("nan")
		return weightedAverage(*zip(*pairs))

	@property
	def wtAvgMae(self) -> float:
		return self._weightedAccuracy("mae")

	@property
	def wtAvgMape(self) -> float:
		return self._weightedAccuracy("mape")

	def fitsFor(self, metric: MetricKind, variant: RobustnessVariant = RobustnessVariant.main) -> "OrderedDict[str, RegressionFit]":
		return self.fits.get((metric, variant), OrderedDict())


def computeModelMetrics(modelId: str, temperature: float, tables: typing.Mapping[str, LabelOutcomeTable], catalog: typing.Iterable[LabelSpec], variants: typing.Iterable[RobustnessVariant] = (RobustnessVariant.main,), enc: typing.Optional[SentenceEncoding] = None, maeScope: MAEScope = MAEScope.all) -> ModelMetrics:
	enc = enc or SentenceEncoding()
	variants = tuple(variants)
	res = ModelMetrics(modelId, temperature)
	fitters = ((MetricKind.bias, biasFit), (MetricKind.imbalance, imbalanceFit))
	for metric, _ in fitters:
		for variant in variants:
			res.fits[(metric, variant)] = OrderedDict()

	for label in catalog:
		table = tables.get(label.name)
		if table is None or not len(table):
			continue
		inc = inconsistencyLabel(table)
		res.inconsistencies[label.name] = inc
		if inc.excluded:
			warnings.warn(modelId + ": label " + repr(label.name) + " has no document with two parseable outcomes", DataQualityWarning)
		res.accuracies[label.name] = maeMape(table, enc, maeScope, label)
		for metric, fitter in fitters:
			for variant in variants:
				try:
					res.fits[(metric, variant)][label.name] = fitter(table, label, variant, enc)
				except EstimationError as ex:
					res.failures.append((metric, variant, label.name, str(ex)))
					warnings.warn(modelId + ": " + metric.value + "/" + variant.value + " fit of " + repr(label.name) + " skipped: " + str(ex), DataQualityWarning)
	return res


def averageInconsistency(models: typing.Iterable[ModelMetrics]) -> float:
	vals = [m.inconsistency for m in models]
	vals = [v for v in vals if not math.isnan(v)]
	if not vals:
		return float("nan")
	return float(np.mean(vals))
