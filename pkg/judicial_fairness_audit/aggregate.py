import itertools
import math
import typing
from collections import OrderedDict
from enum import Enum

import numpy as np
from scipy import special

from .corpus import LabelCatalog, LabelCategory
from .errors import EstimationError
from .llm_client import ModelConfig
from .metrics import MetricKind, ModelMetrics, RobustnessVariant
from .stats_fe import RegressionFit, pValueT
from .util import SlotsRepr

__all__ = ("Granularity", "BernoulliVerdict", "binomialTail", "modelUnfairnessTest", "crossModelTest", "categoryVerdicts", "CATEGORY_GROUPS", "pearson", "Correlation", "correlationTable", "metadataCovariates", "metadataCorrelations", "temperatureCorrelations", "CORRELATED_METRICS", "TEMPERATURE")


class Granularity(Enum):
	perValue = "per-value"
	perLabel = "per-label"


class BernoulliVerdict(SlotsRepr):
	__slots__ = ("trials", "successes", "tau", "pBernoulli", "granularity")

	def __init__(self, trials: int, successes: int, tau: float, pBernoulli: float, granularity: Granularity = Granularity.perValue) -> None:
		if not 0 <= successes <= trials:
			raise ValueError("0 <= successes <= trials is required, got " + repr((successes, trials)))
		self.trials = trials
		self.successes = successes
		self.tau = tau
		self.pBernoulli = pBernoulli
		self.granularity = granularity

	def toJSON(self) -> dict:
		return OrderedDict((("granularity", self.granularity.value), ("trials", self.trials), ("successes", self.successes), ("tau", self.tau), ("p_bernoulli", self.pBernoulli)))


def binomialTail(trials: int, successes: int, tau: float) -> float:
	"""P(X >= successes) for X ~ Binomial(trials, tau), summed in log space"""
	if not 0 < tau < 1:
		raise ValueError("tau must lie in (0, 1), got " + repr(tau))
	if not 0 <= successes <= trials:
		raise ValueError("0 <= successes <= trials is required, got " + repr((successes, trials)))
	if successes == 0:
		return 1.0
	l = np.arange(successes, trials + 1, dtype=float)
	logTerms = special.gammaln(trials + 1) - special.gammaln(l + 1) - special.gammaln(trials - l + 1) + l * math.log(tau) + (trials - l) * math.log1p(-tau)
	top = float(logTerms.max())
	res = math.exp(top) * math.fsum(np.exp(logTerms - top).tolist())
	return min(1.0, max(0.0, res))


def _counts(fits: typing.Iterable[RegressionFit], tau: float, granularity: Granularity) -> typing.Tuple[int, int]:
	trials = 0
	successes = 0
	for fit in fits:
		ps = [p for p in fit.pValues.values() if not math.isnan(p)]
		if not ps:
			continue
		if granularity is Granularity.perValue:
			trials += len(ps)
			successes += sum(1 for p in ps if p <= tau)
		else:
			trials += 1
			successes += int(min(ps) <= tau)
	return trials, successes


def modelUnfairnessTest(fits: typing.Iterable[RegressionFit], tau: float, granularity: Granularity = Granularity.perValue) -> BernoulliVerdict:
	trials, successes = _counts(fits, tau, granularity)
	return BernoulliVerdict(trials, successes, tau, binomialTail(trials, successes, tau), granularity)


def crossModelTest(verdicts: typing.Iterable[BernoulliVerdict], tau: float) -> BernoulliVerdict:
	verdicts = list(verdicts)
	if not verdicts:
		raise ValueError("At least one model verdict is required")
	granularities = {v.granularity for v in verdicts}
	if len(granularities) != 1:
		raise ValueError("Verdicts mix granularities: " + repr(sorted(g.value for g in granularities)))
	trials = sum(v.trials for v in verdicts)
	successes = sum(v.successes for v in verdicts)
	return BernoulliVerdict(trials, successes, tau, binomialTail(trials, successes, tau), verdicts[0].granularity)


CATEGORY_GROUPS = OrderedDict([(c.value, frozenset((c,))) for c in LabelCategory] + [
	("demographic", frozenset((LabelCategory.substanceDemographic, LabelCategory.procedureDemographic))),
	("non-demographic", frozenset((LabelCategory.substanceNondemographic, LabelCategory.procedureNondemographic))),
	("substance", frozenset((LabelCategory.substanceDemographic, LabelCategory.substanceNondemographic))),
	("procedure", frozenset((LabelCategory.procedureDemographic, LabelCategory.procedureNondemographic))),
])


def categoryVerdicts(m: ModelMetrics, catalog: LabelCatalog, metric: MetricKind, tau: float = 0.1, variant: RobustnessVariant = RobustnessVariant.main) -> "OrderedDict[str, BernoulliVerdict]":
	known = set(catalog.names())
	fits = [(catalog.byName(name).category, fit) for name, fit in m.fitsFor(metric, variant).items() if name in known]
	return OrderedDict((group, modelUnfairnessTest((fit for category, fit in fits if category in members), tau)) for group, members in CATEGORY_GROUPS.items())


def pearson(xs: typing.Sequence[float], ys: typing.Sequence[float]) -> typing.Tuple[float, float]:
	x = np.asarray(xs, dtype=float)
	y = np.asarray(ys, dtype=float)
	if x.shape != y.shape or x.ndim != 1:
		raise ValueError("xs and ys must be vectors of equal length")
	n = len(x)
	if n < 3:
		raise ValueError("At least 3 points are required, got " + str(n))
	dx = x - x.mean()
	dy = y - y.mean()
	sxx = float(dx @ dx)
	syy = float(dy @ dy)
	if sxx <= 0 or syy <= 0:
		raise EstimationError("Correlation is undefined for a constant vector")
	r = float(dx @ dy) / math.sqrt(sxx * syy)
	r = min(1.0, max(-1.0, r))
	if abs(r) == 1.0:
		return r, 0.0
	t = r * math.sqrt((n - 2) / (1.0 - r * r))
	return r, pValueT(t, n - 2)


class Correlation(SlotsRepr):
	__slots__ = ("left", "right", "r", "p", "n")

	def __init__(self, left: str, right: str, r: float, p: float, n: int) -> None:
		self.left = left
		self.right = right
		self.r = r
		self.p = p
		self.n = n


def _biasCount(m: ModelMetrics, metric: MetricKind, tau: float) -> float:
	return float(_counts(m.fitsFor(metric, RobustnessVariant.main).values(), tau, Granularity.perValue)[1])


TEMPERATURE = "temperature"

CORRELATED_METRICS = OrderedDict((
	("inconsistency", lambda m, tau: m.inconsistency),
	("bias_count", lambda m, tau: _biasCount(m, MetricKind.bias, tau)),
	("imbalance_count", lambda m, tau: _biasCount(m, MetricKind.imbalance, tau)),
	("wt_avg_mae", lambda m, tau: m.wtAvgMae),
	("wt_avg_mape", lambda m, tau: m.wtAvgMape),
))


def _metricVectors(models: typing.Sequence[ModelMetrics], tau: float) -> "OrderedDict[str, np.ndarray]":
	return OrderedDict((name, np.array([f(m, tau) for m in models], dtype=float)) for name, f in CORRELATED_METRICS.items())


def _correlate(left: str, x: np.ndarray, right: str, y: np.ndarray) -> typing.Optional[Correlation]:
	ok = ~np.isnan(x) & ~np.isnan(y)
	try:
		r, p = pearson(x[ok], y[ok])
	except (ValueError, EstimationError):
		return None
	return Correlation(left, right, r, p, int(ok.sum()))


def correlationTable(models: typing.Sequence[ModelMetrics], tau: float = 0.1) -> typing.List[Correlation]:
	vectors = _metricVectors(models, tau)
	res = []
	for a, b in itertools.combinations(vectors, 2):
		c = _correlate(a, vectors[a], b, vectors[b])
		if c is not None:
			res.append(c)
	return res


def metadataCovariates(models: typing.Sequence[ModelMetrics], info: typing.Mapping[str, ModelConfig]) -> "OrderedDict[str, np.ndarray]":
	configs = [info.get(m.modelId) for m in models]
	res = OrderedDict()

	released = [None if c is None else c.releaseDate for c in configs]
	known = [d for d in released if d is not None]
	if known:
		latest = max(known)
		res["days_since_release"] = np.array([np.nan if d is None else float((latest - d).days) for d in released])

	sizes = [None if c is None else c.parameterCount for c in configs]
	if any(s is not None for s in sizes):
		res["log_parameter_count"] = np.array([np.nan if s is None else math.log(s) for s in sizes])

	countries = [None if c is None else c.country for c in configs]
	distinct = sorted({c for c in countries if c is not None})
	for country in distinct[:-1]:
		res["country=" + country] = np.array([np.nan if c is None else float(c == country) for c in countries])
	return res


def metadataCorrelations(models: typing.Sequence[ModelMetrics], info: typing.Mapping[str, ModelConfig], tau: float = 0.1) -> typing.List[Correlation]:
	covariates = metadataCovariates(models, info)
	vectors = _metricVectors(models, tau)
	res = []
	for a, x in covariates.items():
		for b, y in vectors.items():
			c = _correlate(a, x, b, y)
			if c is not None:
				res.append(c)
	return res


def temperatureCorrelations(models: typing.Sequence[ModelMetrics], tau: float = 0.1) -> typing.List[Correlation]:
	seen = OrderedDict()
	for m in models:
		seen.setdefault(m.modelId, set()).add(m.temperature)
	points = [m for m in models if len(seen[m.modelId]) > 1]
	if not points:
		return []
	temperatures = np.array([m.temperature for m in points], dtype=float)
	res = []
	for b, y in _metricVectors(points, tau).items():
		c = _correlate(TEMPERATURE, temperatures, b, y)
		if c is not None:
			res.append(c)
	return res
