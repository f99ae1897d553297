import math
import warnings

import numpy as np
import pytest

from judicial_fairness_audit import defaults
from judicial_fairness_audit.corpus import filterByDate
from judicial_fairness_audit.errors import DataQualityWarning, EstimationError
from judicial_fairness_audit.metrics import LabelInconsistency, LabelOutcomeTable, MAEScope, MetricKind, ModelMetrics, RobustnessVariant, biasFit, computeModelMetrics, imbalanceFit, inconsistencyLabel, inconsistencyModel, maeMape, weightedAverage
from judicial_fairness_audit.outcome_parser import ParseStatus, SentenceEncoding, SentencingOutcome
from judicial_fairness_audit.stats_fe import SEKind


def sentenced(months: int) -> SentencingOutcome:
	return SentencingOutcome(True, months)


def makeTable(cases, label, outcomes) -> LabelOutcomeTable:
	return LabelOutcomeTable.fromOutcomes(label, [(c, v, o) for (c, v), o in outcomes.items()], cases)


# (Male, Female) months per case; real months are c1 36, c2 12, c3 0, c4 unknown, c5 60
GENDER_MONTHS = {"c1": (30, 40), "c2": (12, 18), "c3": (6, 6), "c4": (10, 10), "c5": (60, 66)}


@pytest.fixture
def gender(catalog):
	return catalog.byName("Defendant_gender")


@pytest.fixture
def genderTable(cases, gender):
	outcomes = {}
	for c, (m, f) in GENDER_MONTHS.items():
		outcomes[(c, "Male")] = sentenced(m)
		outcomes[(c, "Female")] = sentenced(f)
	return makeTable(cases, gender, outcomes)


def meanLogDiff(caseIds) -> float:
	return float(np.mean([math.log1p(GENDER_MONTHS[c][1]) - math.log1p(GENDER_MONTHS[c][0]) for c in caseIds]))


def test_inconsistency_share_of_changed_documents(genderTable):
	inc = inconsistencyLabel(genderTable)
	assert inc.p == pytest.approx(0.6)
	assert inc.w == 5
	assert not inc.excluded


def test_inconsistency_two_of_five(cases, gender):
	outcomes = {}
	for c in ("c1", "c2", "c3", "c4", "c5"):
		outcomes[(c, "Male")] = sentenced(24)
		outcomes[(c, "Female")] = sentenced(24)
	outcomes[("c1", "Female")] = sentenced(25)
	outcomes[("c2", "Female")] = SentencingOutcome(False)
	inc = inconsistencyLabel(makeTable(cases, gender, outcomes))
	assert inc.p == pytest.approx(0.4)
	assert inc.w == 5


def test_inconsistency_counts_life_flag(cases, gender):
	outcomes = {
		("c1", "Male"): SentencingOutcome(True, None, True, False),
		("c1", "Female"): SentencingOutcome(True, None, False, True),
		("c2", "Male"): SentencingOutcome(True, None, True, False),
		("c2", "Female"): SentencingOutcome(True, None, True, False),
	}
	inc = inconsistencyLabel(makeTable(cases, gender, outcomes))
	assert inc.p == pytest.approx(0.5)
	assert inc.w == 2


def test_inconsistency_skips_documents_with_failures(cases, gender):
	outcomes = {
		("c1", "Male"): sentenced(10),
		("c1", "Female"): SentencingOutcome.failed(ParseStatus.noJSON),
		("c2", "Male"): sentenced(10),
		("c2", "Female"): sentenced(11),
	}
	inc = inconsistencyLabel(makeTable(cases, gender, outcomes))
	assert (inc.p, inc.w) == (1.0, 1)


def test_inconsistency_all_failed(cases, gender):
	outcomes = {(c, v): SentencingOutcome.failed(ParseStatus.noJSON) for c in ("c1", "c2") for v in ("Male", "Female")}
	inc = inconsistencyLabel(makeTable(cases, gender, outcomes))
	assert inc.excluded
	assert inc.w == 0
	with pytest.raises(EstimationError):
		inconsistencyModel([inc])


def test_weighted_average():
	assert weightedAverage([0.1, 0.3], [1, 3]) == pytest.approx(0.25)
	assert inconsistencyModel([LabelInconsistency("a", 0.5, 2), LabelInconsistency("b", 0.0, 6)]) == pytest.approx(0.125)
	with pytest.raises(EstimationError):
		weightedAverage([1.0], [0])
	with pytest.raises(ValueError):
		weightedAverage([1.0, 2.0], [1])


def test_mae_mape(genderTable):
	acc = maeMape(genderTable)
	assert acc.mae == pytest.approx(4.25)
	assert acc.mape == pytest.approx((6 / 36 + 4 / 36 + 0 + 6 / 12 + 0 + 6 / 60) / 6)
	assert acc.w == 5
	assert acc.nRows == 8
	assert acc.nZeroReal == 2
	mae, mape, w = acc
	assert w == 5


def test_mae_mape_reference_scope(genderTable, gender):
	acc = maeMape(genderTable, scope=MAEScope.reference, label=gender)
	assert acc.mae == pytest.approx(3.0)
	assert acc.mape == pytest.approx((6 / 36) / 3)


def test_bias_fit_is_mean_within_difference(genderTable, gender):
	fit = biasFit(genderTable, gender)
	assert list(fit.coefficients) == ["Female"]
	assert fit.coefficients["Female"] == pytest.approx(meanLogDiff(GENDER_MONTHS))
	assert (fit.nObs, fit.nGroups) == (10, 5)
	assert fit.seKind is SEKind.cluster


def test_imbalance_fit(genderTable, gender):
	fit = imbalanceFit(genderTable, gender)
	assert fit.coefficients["Female"] == pytest.approx(2.5)
	assert fit.nObs == 8


def test_variants(genderTable, gender):
	main = biasFit(genderTable, gender)
	robust = biasFit(genderTable, gender, RobustnessVariant.robustSE)
	assert robust.seKind is SEKind.hc1
	assert robust.coefficients == main.coefficients

	crime = biasFit(genderTable, gender, RobustnessVariant.crimeCluster)
	assert crime.nClusters == 5
	assert crime.stdErrors["Female"] == pytest.approx(main.stdErrors["Female"])

	recent = biasFit(genderTable, gender, RobustnessVariant.post2014)
	assert recent.nGroups == 3
	assert recent.coefficients["Female"] == pytest.approx(meanLogDiff(["c1", "c3", "c5"]))


def test_date_mask_follows_corpus_filter(cases, genderTable):
	recentIds = set(filterByDate(cases, defaults.postFilterCutoff).ids())
	mask = genderTable.dateMask(defaults.postFilterCutoff)
	assert set(genderTable.rows["case_id"][mask]) == recentIds & set(GENDER_MONTHS)
	assert genderTable.dateMask(None).all()

	detached = LabelOutcomeTable(genderTable.label, genderTable.rows, genderTable.realMonths)
	assert not detached.dateMask(defaults.postFilterCutoff).any()


def test_full_sentence_variant_keeps_life(cases, gender):
	outcomes = {}
	for c, (m, f) in GENDER_MONTHS.items():
		outcomes[(c, "Male")] = sentenced(m)
		outcomes[(c, "Female")] = sentenced(f)
	outcomes[("c5", "Female")] = SentencingOutcome(True, None, True, False)
	table = makeTable(cases, gender, outcomes)

	main = biasFit(table, gender)
	assert main.droppedSingletons == 1
	assert main.nObs == 8

	full = biasFit(table, gender, RobustnessVariant.fullSentence)
	assert full.nObs == 10
	assert full.coefficients["Female"] > main.coefficients["Female"]


def test_age_fit_is_slope(cases, catalog):
	judgeAge = catalog.byName("Judge_age")
	outcomes = {}
	for i, c in enumerate(("c1", "c2", "c3", "c4", "c5")):
		outcomes[(c, "27")] = sentenced(10 + i)
		outcomes[(c, "60")] = sentenced(20 + i)
	fit = biasFit(makeTable(cases, judgeAge, outcomes), judgeAge)
	assert list(fit.coefficients) == ["age"]
	expected = np.mean([math.log1p(20 + i) - math.log1p(10 + i) for i in range(5)]) / 33
	assert fit.coefficients["age"] == pytest.approx(expected)


def test_unknown_values_ignored(cases, genderTable, gender):
	outcomes = {}
	for c, (m, f) in GENDER_MONTHS.items():
		outcomes[(c, "Male")] = sentenced(m)
		outcomes[(c, "Female")] = sentenced(f)
	outcomes[("c1", "Other")] = sentenced(500)
	with warnings.catch_warnings(record=True) as caught:
		warnings.simplefilter("always")
		fit = biasFit(makeTable(cases, gender, outcomes), gender)
	assert any(issubclass(w.category, DataQualityWarning) for w in caught)
	assert fit.coefficients == biasFit(genderTable, gender).coefficients


def test_compute_model_metrics(cases, catalog, genderTable):
	occupation = catalog.byName("Defendant_occupation")
	single = makeTable(cases, occupation, {("c1", "Worker"): sentenced(5), ("c1", "Farmer"): sentenced(5)})
	tables = {"Defendant_gender": genderTable, "Defendant_occupation": single}
	variants = (RobustnessVariant.main, RobustnessVariant.robustSE)
	with warnings.catch_warnings(record=True) as caught:
		warnings.simplefilter("always")
		m = computeModelMetrics("judge-a", 0.0, tables, catalog, variants)
	assert any(issubclass(w.category, DataQualityWarning) for w in caught)

	assert list(m.inconsistencies) == ["Defendant_gender", "Defendant_occupation"]
	assert m.inconsistency == pytest.approx((0.6 * 5 + 0.0 * 1) / 6)
	assert list(m.fitsFor(MetricKind.bias)) == ["Defendant_gender"]
	assert list(m.fitsFor(MetricKind.imbalance, RobustnessVariant.robustSE)) == ["Defendant_gender"]
	assert m.fitsFor(MetricKind.bias, RobustnessVariant.post2014) == {}
	failedLabels = {f[2] for f in m.failures}
	assert failedLabels == {"Defendant_occupation"}
	assert len(m.failures) == 4


def test_weighted_accuracy_ignores_undefined(cases, catalog, genderTable):
	occupation = catalog.byName("Defendant_occupation")
	noReal = makeTable(cases, occupation, {("c4", "Worker"): sentenced(5), ("c4", "Farmer"): sentenced(7)})
	with warnings.catch_warnings():
		warnings.simplefilter("ignore")
		m = computeModelMetrics("judge-a", 0.0, {"Defendant_gender": genderTable, "Defendant_occupation": noReal}, catalog)
	assert math.isnan(m.accuracies["Defendant_occupation"].mae)
	assert m.wtAvgMae == pytest.approx(4.25)


def test_empty_metrics_are_nan():
	m = ModelMetrics("x", 0.0)
	assert math.isnan(m.inconsistency)
	assert math.isnan(m.wtAvgMae)


def test_months_defined_for_fixed_terms(genderTable):
	assert not np.isnan(genderTable.months(SentenceEncoding())).any()
