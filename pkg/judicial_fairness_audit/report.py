import io
import json
import math
import typing
from collections import OrderedDict
from enum import Enum
from pathlib import Path

import matplotlib
import numpy as np
import pandas as pd
from matplotlib.colors import BoundaryNorm, ListedColormap
from matplotlib.figure import Figure

from . import defaults
from .aggregate import Correlation, Granularity, categoryVerdicts, correlationTable, crossModelTest, metadataCorrelations, modelUnfairnessTest, temperatureCorrelations
from .corpus import LabelCatalog
from .llm_client import ModelConfig
from .metrics import LabelAccuracy, LabelInconsistency, MetricKind, ModelMetrics, RobustnessVariant, averageInconsistency
from .stats_fe import FIT_DUMP_COLUMNS, RegressionFit, fitDump, fitFromDump
from .util import SlotsRepr, atomicWriteBytes

__all__ = ("SignificanceBucket", "ModelSummaryRow", "HeatmapCell", "summaryTable", "heatmapCells", "heatmapSvg", "labelDetailTable", "verdictTable", "robustnessTable", "categoryTable", "correlationCSV", "fitsTable", "metricsTable", "writeReportDir", "loadModelMetrics", "modelColumnName", "REPORT_FILES")

SUMMARY_COLUMNS = ("model_id", "inconsistency", "bias_count", "bias_p_10", "bias_p_05", "wt_avg_mae", "wt_avg_mape", "imbalance_count", "imbalance_p_10", "imbalance_p_05", "temperature")
DETAIL_COLUMNS = ("Model Name", "Label Name", "Label Value", "Reference", "Regression Coefficient", "P-Value", "Temperature")
VERDICT_COLUMNS = ("model", "metric", "granularity", "trials", "successes", "tau", "p_bernoulli", "temperature", "variant")
ROBUSTNESS_COLUMNS = ("model_id", "temperature", "metric", "variant", "coefficients", "significant_10", "p_bernoulli_10")
CATEGORY_COLUMNS = ("model_id", "temperature", "metric", "category", "coefficients", "significant_10", "p_bernoulli_10")
CORRELATION_COLUMNS = ("temperature", "left", "right", "r", "p", "n")
METRICS_COLUMNS = ("model_id", "temperature", "label", "inconsistency", "w", "excluded", "mae", "mape", "n_rows", "n_zero_real")
FITS_COLUMNS = ("model_id", "temperature", "metric", "variant", "label") + FIT_DUMP_COLUMNS

REPORT_FILES = ("summary.csv", "detail.csv", "verdicts.csv", "heatmap_bias.svg", "heatmap_imbalance.svg", "run_manifest.json")

POOLED_MODEL = "ALL"


class SignificanceBucket(Enum):
	p01 = "p<0.01"
	p05 = "p<0.05"
	p10 = "p<0.1"
	ns = "ns"
	notEstimated = "not-estimated"

	@classmethod
	def of(cls, p: typing.Optional[float]) -> "SignificanceBucket":
		if p is None or math.isnan(p):
			return cls.notEstimated
		if p <= 0.01:
			return cls.p01
		if p <= 0.05:
			return cls.p05
		if p <= 0.1:
			return cls.p10
		return cls.ns


def _csv(df: pd.DataFrame, floatFormat: typing.Optional[str] = "%.3f") -> bytes:
	return df.to_csv(index=False, float_format=floatFormat, lineterminator="\n", na_rep="").encode("utf-8")


def _frame(rows: typing.Iterable[typing.Sequence], columns: typing.Sequence[str]) -> pd.DataFrame:
	return pd.DataFrame.from_records(list(rows), columns=list(columns))


def modelColumnName(m: ModelMetrics, multiTemperature: bool) -> str:
	if multiTemperature:
		return m.modelId + " (T=" + format(m.temperature, "g") + ")"
	return m.modelId


def _finiteMean(vals: typing.Iterable[float]) -> float:
	vals = [v for v in vals if not math.isnan(v)]
	return float(np.mean(vals)) if vals else float("nan")


class ModelSummaryRow(SlotsRepr):
	__slots__ = SUMMARY_COLUMNS

	def __init__(self, model_id: str, inconsistency: float, bias_count: int, bias_p_10: float, bias_p_05: float, wt_avg_mae: float, wt_avg_mape: float, imbalance_count: int, imbalance_p_10: float, imbalance_p_05: float, temperature: float) -> None:  # pylint:disable=too-many-arguments
		if bias_count < 0 or imbalance_count < 0:
			raise ValueError("Counts must be non-negative")
		self.model_id = model_id
		self.inconsistency = inconsistency
		self.bias_count = bias_count
		self.bias_p_10 = bias_p_10
		self.bias_p_05 = bias_p_05
		self.wt_avg_mae = wt_avg_mae
		self.wt_avg_mape = wt_avg_mape
		self.imbalance_count = imbalance_count
		self.imbalance_p_10 = imbalance_p_10
		self.imbalance_p_05 = imbalance_p_05
		self.temperature = temperature

	@classmethod
	def fromMetrics(cls, m: ModelMetrics) -> "ModelSummaryRow":
		verdicts = {}
		for metric in MetricKind:
			fits = list(m.fitsFor(metric).values())
			for tau in (0.1, 0.05):
				verdicts[(metric, tau)] = modelUnfairnessTest(fits, tau)
		return cls(
			m.modelId,
			m.inconsistency,
			verdicts[(MetricKind.bias, 0.1)].successes,
			verdicts[(MetricKind.bias, 0.1)].pBernoulli,
			verdicts[(MetricKind.bias, 0.05)].pBernoulli,
			m.wtAvgMae,
			m.wtAvgMape,
			verdicts[(MetricKind.imbalance, 0.1)].successes,
			verdicts[(MetricKind.imbalance, 0.1)].pBernoulli,
			verdicts[(MetricKind.imbalance, 0.05)].pBernoulli,
			m.temperature,
		)

	@classmethod
	def pooled(cls, models: typing.Sequence[ModelMetrics], temperature: float) -> "ModelSummaryRow":
		verdicts = {}
		for metric in MetricKind:
			for tau in (0.1, 0.05):
				verdicts[(metric, tau)] = crossModelTest([modelUnfairnessTest(m.fitsFor(metric).values(), tau) for m in models], tau)
		return cls(
			POOLED_MODEL,
			averageInconsistency(models),
			verdicts[(MetricKind.bias, 0.1)].successes,
			verdicts[(MetricKind.bias, 0.1)].pBernoulli,
			verdicts[(MetricKind.bias, 0.05)].pBernoulli,
			_finiteMean(m.wtAvgMae for m in models),
			_finiteMean(m.wtAvgMape for m in models),
			verdicts[(MetricKind.imbalance, 0.1)].successes,
			verdicts[(MetricKind.imbalance, 0.1)].pBernoulli,
			verdicts[(MetricKind.imbalance, 0.05)].pBernoulli,
			temperature,
		)

	def astuple(self) -> tuple:
		return tuple(getattr(self, k) for k in SUMMARY_COLUMNS)


def summaryTable(rows: typing.Iterable[ModelSummaryRow]) -> bytes:
	rows = sorted(rows, key=lambda r: (r.model_id == POOLED_MODEL, r.model_id, r.temperature))
	return _csv(_frame((r.astuple() for r in rows), SUMMARY_COLUMNS))


class HeatmapCell(SlotsRepr):
	__slots__ = ("modelId", "label", "bestValue", "coefficient", "bucket")

	def __init__(self, modelId: str, label: str, bestValue: typing.Optional[str], coefficient: float, bucket: SignificanceBucket) -> None:
		self.modelId = modelId
		self.label = label
		self.bestValue = bestValue
		self.coefficient = coefficient
		self.bucket = bucket

	@classmethod
	def fromFit(cls, modelId: str, label: str, fit: typing.Optional[RegressionFit]) -> "HeatmapCell":
		if fit is None:
			return cls(modelId, label, None, float("nan"), SignificanceBucket.notEstimated)
		best, p = fit.minP
		if best is None:
			return cls(modelId, label, None, float("nan"), SignificanceBucket.notEstimated)
		return cls(modelId, label, best, fit.coefficients[best], SignificanceBucket.of(p))


def _reportLabels(models: typing.Sequence[ModelMetrics], catalog: LabelCatalog) -> typing.List[str]:
	seen = set()
	for m in models:
		seen.update(m.inconsistencies)
	return [n for n in catalog.names() if n in seen]


def heatmapCells(models: typing.Sequence[ModelMetrics], labels: typing.Sequence[str], metric: MetricKind) -> typing.List[HeatmapCell]:
	multi = len({m.temperature for m in models}) > 1
	res = []
	for m in models:
		fits = m.fitsFor(metric)
		col = modelColumnName(m, multi)
		for l in labels:
			if l in m.inconsistencies or l in fits:
				res.append(HeatmapCell.fromFit(col, l, fits.get(l)))
	return res


CELL_W = 0.7
CELL_H = 0.22
LABEL_W = 2.6
HEADER_H = 1.4
FONT_SIZE = 7
SVG_SETTINGS = {"svg.hashsalt": "judicial_fairness_audit", "svg.fonttype": "none"}


def heatmapSvg(cells: typing.Iterable[HeatmapCell], models: typing.Sequence[str], labels: typing.Sequence[str], title: str = "") -> bytes:
	"""Labels as rows, models as columns; fill by significance, text is the minimal-p coefficient"""
	buckets = list(SignificanceBucket)
	byPos = {(c.label, c.modelId): c for c in cells}
	codes = np.full((len(labels), len(models)), buckets.index(SignificanceBucket.notEstimated), dtype=int)
	for i, label in enumerate(labels):
		for j, model in enumerate(models):
			c = byPos.get((label, model))
			if c is not None:
				codes[i, j] = buckets.index(c.bucket)

	with matplotlib.rc_context(SVG_SETTINGS):
		fig = Figure(figsize=(LABEL_W + CELL_W * max(len(models), 1), HEADER_H + CELL_H * max(len(labels), 1)))
		ax = fig.subplots()
		if codes.size:
			cmap = ListedColormap([defaults.heatmapColors[b.value] for b in buckets])
			mesh = ax.pcolormesh(codes, cmap=cmap, norm=BoundaryNorm(np.arange(len(buckets) + 1) - 0.5, len(buckets)), edgecolors="white", linewidth=1.0)
			mesh.set_gid("cells")
		for (label, model), c in sorted(byPos.items()):
			if label in labels and model in models and not math.isnan(c.coefficient):
				ax.text(models.index(model) + 0.5, labels.index(label) + 0.5, format(c.coefficient, ".3f"), ha="center", va="center", fontsize=FONT_SIZE, color=defaults.heatmapTextColors[c.bucket.value])

		ax.set_xlim(0, max(len(models), 1))
		ax.set_ylim(max(len(labels), 1), 0)
		ax.xaxis.tick_top()
		ax.set_xticks(np.arange(len(models)) + 0.5)
		ax.set_xticklabels(models, rotation=45, ha="left", fontsize=FONT_SIZE)
		ax.set_yticks(np.arange(len(labels)) + 0.5)
		ax.set_yticklabels(labels, fontsize=FONT_SIZE)
		ax.tick_params(length=0)
		for spine in ax.spines.values():
			spine.set_visible(False)
		if title:
			ax.set_xlabel(title, fontsize=FONT_SIZE + 2)

		buf = io.BytesIO()
		fig.savefig(buf, format="svg", bbox_inches="tight", metadata={"Date": None})
	return buf.getvalue()


def _detailRows(models: typing.Sequence[ModelMetrics], catalog: LabelCatalog, metric: MetricKind) -> typing.Iterator[tuple]:
	for m in models:
		for labelName, fit in m.fitsFor(metric).items():
			label = catalog.byName(labelName)
			reference = "" if label.isAge else label.referenceValue
			for value, coef in fit.coefficients.items():
				yield (m.modelId, labelName, value, reference, coef, fit.pValues[value], m.temperature)


def labelDetailTable(models: typing.Sequence[ModelMetrics], catalog: LabelCatalog, metric: MetricKind = MetricKind.bias) -> bytes:
	rows = sorted(_detailRows(models, catalog, metric), key=lambda r: (r[0], r[1], r[2], r[6]))
	return _csv(_frame(rows, DETAIL_COLUMNS))


def _verdictRows(models: typing.Sequence[ModelMetrics], taus: typing.Sequence[float], variants: typing.Sequence[RobustnessVariant]) -> typing.Iterator[tuple]:
	temperatures = sorted({m.temperature for m in models})
	for temperature in temperatures:
		group = sorted((m for m in models if m.temperature == temperature), key=lambda m: m.modelId)
		for variant in variants:
			for metric in MetricKind:
				for granularity in Granularity:
					for tau in taus:
						verdicts = []
						for m in group:
							v = modelUnfairnessTest(m.fitsFor(metric, variant).values(), tau, granularity)
							verdicts.append(v)
							yield (m.modelId, metric.value, granularity.value, v.trials, v.successes, tau, v.pBernoulli, temperature, variant.value)
						if verdicts:
							v = crossModelTest(verdicts, tau)
							yield (POOLED_MODEL, metric.value, granularity.value, v.trials, v.successes, tau, v.pBernoulli, temperature, variant.value)


def verdictTable(models: typing.Sequence[ModelMetrics], taus: typing.Sequence[float] = defaults.taus, variants: typing.Sequence[RobustnessVariant] = (RobustnessVariant.main,)) -> bytes:
	return _csv(_frame(_verdictRows(models, taus, variants), VERDICT_COLUMNS), "%.6g")


def robustnessTable(models: typing.Sequence[ModelMetrics], variants: typing.Sequence[RobustnessVariant]) -> bytes:
	rows = []
	for m in sorted(models, key=lambda m: (m.modelId, m.temperature)):
		for metric in MetricKind:
			for variant in variants:
				v = modelUnfairnessTest(m.fitsFor(metric, variant).values(), 0.1)
				rows.append((m.modelId, m.temperature, metric.value, variant.value, v.trials, v.successes, v.pBernoulli))
	return _csv(_frame(rows, ROBUSTNESS_COLUMNS))


def categoryTable(models: typing.Sequence[ModelMetrics], catalog: LabelCatalog) -> bytes:
	rows = []
	for m in sorted(models, key=lambda m: (m.modelId, m.temperature)):
		for metric in MetricKind:
			for group, v in categoryVerdicts(m, catalog, metric).items():
				rows.append((m.modelId, m.temperature, metric.value, group, v.trials, v.successes, v.pBernoulli))
	return _csv(_frame(rows, CATEGORY_COLUMNS))


def correlationCSV(correlations: typing.Iterable[typing.Tuple[float, Correlation]]) -> bytes:
	return _csv(_frame(((t, c.left, c.right, c.r, c.p, c.n) for t, c in correlations), CORRELATION_COLUMNS))


def fitsTable(models: typing.Sequence[ModelMetrics]) -> bytes:
	rows = []
	for m in sorted(models, key=lambda m: (m.modelId, m.temperature)):
		for (metric, variant), fits in m.fits.items():
			for labelName, fit in fits.items():
				for r in fitDump(fit):
					rows.append((m.modelId, m.temperature, metric.value, variant.value, labelName) + tuple(r.values()))
	return _csv(_frame(rows, FITS_COLUMNS), None)


def metricsTable(m: ModelMetrics) -> bytes:
	rows = []
	for labelName, inc in m.inconsistencies.items():
		acc = m.accuracies.get(labelName)
		if acc is None:
			acc = LabelAccuracy(labelName, float("nan"), float("nan"), inc.w, 0, 0)
		rows.append((m.modelId, m.temperature, labelName, inc.p, inc.w, int(inc.excluded), acc.mae, acc.mape, acc.nRows, acc.nZeroReal))
	return _csv(_frame(rows, METRICS_COLUMNS), None)


def _metricsFileName(m: ModelMetrics) -> str:
	return "".join(ch if ch.isalnum() or ch in "._-" else "_" for ch in m.modelId) + "_T" + format(m.temperature, "g") + ".csv"


def writeReportDir(outDir: Path, models: typing.Sequence[ModelMetrics], catalog: LabelCatalog, manifest: typing.Mapping[str, typing.Any], taus: typing.Sequence[float] = defaults.taus, variants: typing.Sequence[RobustnessVariant] = (RobustnessVariant.main,), modelInfo: typing.Optional[typing.Mapping[str, ModelConfig]] = None) -> typing.List[Path]:
	outDir = Path(outDir)
	models = sorted(models, key=lambda m: (m.modelId, m.temperature))
	labels = _reportLabels(models, catalog)
	multi = len({m.temperature for m in models}) > 1
	columns = [modelColumnName(m, multi) for m in models]

	files = OrderedDict()
	temperatures = sorted({m.temperature for m in models})
	groups = OrderedDict((t, [m for m in models if m.temperature == t]) for t in temperatures)

	summary = [ModelSummaryRow.fromMetrics(m) for m in models]
	summary.extend(ModelSummaryRow.pooled(group, t) for t, group in groups.items() if len(group) > 1)
	files["summary.csv"] = summaryTable(summary)
	files["detail.csv"] = labelDetailTable(models, catalog, MetricKind.bias)
	files["detail_imbalance.csv"] = labelDetailTable(models, catalog, MetricKind.imbalance)
	files["verdicts.csv"] = verdictTable(models, taus, variants)
	files["robustness.csv"] = robustnessTable(models, variants)
	files["categories.csv"] = categoryTable(models, catalog)
	files["fits.csv"] = fitsTable(models)
	files["heatmap_bias.svg"] = heatmapSvg(heatmapCells(models, labels, MetricKind.bias), columns, labels, "bias")
	files["heatmap_imbalance.svg"] = heatmapSvg(heatmapCells(models, labels, MetricKind.imbalance), columns, labels, "imbalanced inaccuracy")

	correlations = []
	for temperature, group in groups.items():
		if len(group) >= 3:
			correlations.extend((temperature, c) for c in correlationTable(group))
			if modelInfo:
				correlations.extend((temperature, c) for c in metadataCorrelations(group, modelInfo))
	correlations.extend((float("nan"), c) for c in temperatureCorrelations(models))
	if correlations:
		files["correlations.csv"] = correlationCSV(correlations)

	for m in models:
		files["metrics/" + _metricsFileName(m)] = metricsTable(m)
	files["run_manifest.json"] = (json.dumps(manifest, indent="\t", sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")

	res = []
	for name, data in files.items():
		p = outDir / name
		atomicWriteBytes(p, data)
		res.append(p)
	return res


def _readCSV(path: Path) -> pd.DataFrame:
	return pd.read_csv(path, dtype=str, keep_default_na=False)


def _float(s: str) -> float:
	return float(s) if s != "" else float("nan")


def loadModelMetrics(reportDir: Path) -> typing.List[ModelMetrics]:
	reportDir = Path(reportDir)
	models = OrderedDict()

	def get(modelId: str, temperature: str) -> ModelMetrics:
		key = (modelId, float(temperature))
		if key not in models:
			models[key] = ModelMetrics(modelId, float(temperature))
		return models[key]

	for p in sorted((reportDir / "metrics").glob("*.csv")):
		for r in _readCSV(p).to_dict("records"):
			m = get(r["model_id"], r["temperature"])
			m.inconsistencies[r["label"]] = LabelInconsistency(r["label"], _float(r["inconsistency"]), int(r["w"]), bool(int(r["excluded"])))
			m.accuracies[r["label"]] = LabelAccuracy(r["label"], _float(r["mae"]), _float(r["mape"]), int(r["w"]), int(r["n_rows"]), int(r["n_zero_real"]))

	fitsPath = reportDir / "fits.csv"
	if fitsPath.exists():
		df = _readCSV(fitsPath)
		groups = OrderedDict()
		for r in df.to_dict("records"):
			groups.setdefault((r["model_id"], r["temperature"], r["metric"], r["variant"], r["label"]), []).append(r)
		for (modelId, temperature, metric, variant, labelName), rows in groups.items():
			m = get(modelId, temperature)
			m.fits.setdefault((MetricKind(metric), RobustnessVariant(variant)), OrderedDict())[labelName] = fitFromDump(rows)

	for m in models.values():
		for key in list(m.fits):
			m.fits[key] = OrderedDict(sorted(m.fits[key].items(), key=lambda kv: list(m.inconsistencies).index(kv[0]) if kv[0] in m.inconsistencies else np.inf))
	return list(models.values())
