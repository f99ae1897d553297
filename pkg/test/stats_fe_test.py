import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from judicial_fairness_audit.aggregate import modelUnfairnessTest
from judicial_fairness_audit.errors import EstimationError
from judicial_fairness_audit.stats_fe import PanelDesign, SEKind, demeanWithin, dropSingletons, fitDump, fitFeOls, fitFromDump, pValueT


def twoDocs() -> PanelDesign:
	return PanelDesign([1.0, 1.5, 2.0, 2.2], [0, 1, 0, 1], ["d1", "d1", "d2", "d2"], columnNames=["v"])


def test_two_documents_cluster():
	fit = fitFeOls(twoDocs(), SEKind.cluster)
	assert fit.coefficients["v"] == pytest.approx(0.35, abs=1e-12)
	assert fit.stdErrors["v"] == pytest.approx(0.18371, abs=1e-5)
	assert fit.tStats["v"] == pytest.approx(1.9052, abs=1e-4)
	assert fit.dof == 1
	assert fit.pValues["v"] == pytest.approx(0.3082, abs=1e-4)
	assert (fit.nObs, fit.nGroups, fit.nClusters) == (4, 2, 2)


def test_two_documents_hc1():
	fit = fitFeOls(twoDocs(), SEKind.hc1)
	assert fit.coefficients["v"] == pytest.approx(0.35, abs=1e-12)
	assert fit.stdErrors["v"] == pytest.approx(0.15, abs=1e-12)
	assert fit.dof == 1


def test_exact_fit_gives_zero_se():
	d = PanelDesign([1.0, 1.2, 3.0, 3.2, 0.5, 0.7], [0, 1, 0, 1, 0, 1], ["a", "a", "b", "b", "c", "c"], columnNames=["v"])
	fit = fitFeOls(d)
	assert fit.coefficients["v"] == pytest.approx(0.2)
	assert fit.stdErrors["v"] == 0.0
	assert math.isinf(fit.tStats["v"])
	assert fit.pValues["v"] == 0.0


def test_singletons_dropped():
	d = PanelDesign([1.0, 1.5, 2.0, 2.2, 9.0], [0, 1, 0, 1, 1], ["d1", "d1", "d2", "d2", "d3"], columnNames=["v"])
	assert dropSingletons(d).n == 4
	fit = fitFeOls(d)
	assert fit.droppedSingletons == 1
	assert fit.coefficients["v"] == pytest.approx(0.35)


def test_collinear_column_is_named():
	d = PanelDesign([1.0, 2.0, 3.0, 4.0, 5.0, 7.0], [[0, 0], [1, 0], [0, 0], [1, 0], [0, 0], [1, 0]], ["a", "a", "b", "b", "c", "c"], columnNames=["Farmer", "Unemployed"])
	with pytest.raises(EstimationError) as ex:
		fitFeOls(d)
	assert ex.value.column == "Unemployed"


def test_single_group_fails():
	d = PanelDesign([1.0, 2.0, 3.0], [0, 1, 2], ["a", "a", "a"], columnNames=["age"])
	with pytest.raises(EstimationError):
		fitFeOls(d)


def test_empty_design_fails():
	with pytest.raises(EstimationError):
		fitFeOls(PanelDesign([1.0, 2.0], [0, 1], ["a", "b"], columnNames=["v"]))


def test_mismatched_lengths():
	with pytest.raises(ValueError):
		PanelDesign([1.0, 2.0], [0, 1, 1], ["a", "a"])


def test_demean_within():
	res = demeanWithin([1.0, 3.0, 10.0, 20.0, 30.0], ["a", "a", "b", "b", "b"])
	assert res == pytest.approx([-1.0, 1.0, -10.0, 0.0, 10.0])


def test_p_value_t():
	assert pValueT(0.0, 5) == pytest.approx(1.0)
	assert pValueT(1.96, 1e7) == pytest.approx(0.05, abs=1e-4)
	assert pValueT(float("inf"), 3) == 0.0
	assert pValueT(1.0, 1) == pytest.approx(0.5)
	with pytest.raises(ValueError):
		pValueT(1.0, 0)


def test_fit_dump_reloads():
	fit = fitFeOls(twoDocs())
	assert fitFromDump(fitDump(fit)) == fit


def randomDesign(rng: np.random.RandomState, maxDocs: int = 12, maxValues: int = 4):
	nDocs = rng.randint(2, maxDocs + 1)
	nValues = rng.randint(2, maxValues + 1)
	ys, xs, groups = [], [], []
	for d in range(nDocs):
		present = np.flatnonzero(rng.rand(nValues) < 0.7)
		if not len(present):
			present = np.array([rng.randint(nValues)])
		base = rng.normal(3.0, 1.0)
		for v in present:
			row = np.zeros(nValues - 1)
			if v:
				row[v - 1] = 1.0
			xs.append(row)
			ys.append(base + 0.1 * v + rng.normal(0.0, 0.3))
			groups.append("d" + str(d))
	return PanelDesign(ys, np.array(xs), groups, columnNames=["v" + str(i) for i in range(1, nValues)])


def denseOracle(design: PanelDesign, seKind: SEKind):
	"""Explicit-dummy OLS with the sandwich evaluated on the full design; documents must nest in clusters"""
	d = dropSingletons(design)
	if not d.n:
		return None
	groups = sorted(set(d.groupIds))
	D = np.array([[1.0 if g == h else 0.0 for h in groups] for g in d.groupIds])
	Z = np.hstack([d.X, D])
	p = d.X.shape[1]
	N = d.n
	G = len(groups)
	if G < 2 or np.linalg.matrix_rank(Z) < Z.shape[1]:
		return None
	AInv = np.linalg.inv(Z.T @ Z)
	coef = AInv @ Z.T @ d.y
	e = d.y - Z @ coef
	influence = (Z * e[:, None]) @ AInv.T
	if seKind is SEKind.cluster:
		clusters = sorted(set(d.clusterIds))
		C = len(clusters)
		K = p + 1
		if N - K <= 0 or C < 2:
			return None
		sums = np.zeros((C, Z.shape[1]))
		for i, c in enumerate(d.clusterIds):
			sums[clusters.index(c)] += influence[i]
		V = sums.T @ sums * (N - 1) / (N - K) * C / (C - 1)
	else:
		K = p + G
		if N - K <= 0:
			return None
		V = influence.T @ influence * N / (N - K)
	return coef[:p], np.sqrt(np.diag(V)[:p])


@pytest.mark.parametrize("seKind", list(SEKind))
def test_matches_dense_dummy_ols(seKind):
	checked = 0
	for seed in range(200):
		design = randomDesign(np.random.RandomState(seed))
		expected = denseOracle(design, seKind)
		if expected is None:
			with pytest.raises(EstimationError):
				fitFeOls(design, seKind)
			continue
		fit = fitFeOls(design, seKind)
		coef, se = expected
		assert np.allclose(list(fit.coefficients.values()), coef, rtol=1e-8, atol=1e-10)
		assert np.allclose(list(fit.stdErrors.values()), se, rtol=1e-8, atol=1e-10)
		checked += 1
	assert checked > 80


def withCoarseClusters(design: PanelDesign, size: int) -> PanelDesign:
	clusterIds = ["c" + str(int(g[1:]) // size) for g in design.groupIds]
	return PanelDesign(design.y, design.X, design.groupIds, clusterIds, design.columnNames)


def test_matches_dense_dummy_ols_coarse_clusters():
	checked = 0
	for seed in range(200):
		design = withCoarseClusters(randomDesign(np.random.RandomState(seed), maxDocs=24), 3)
		expected = denseOracle(design, SEKind.cluster)
		if expected is None:
			with pytest.raises(EstimationError):
				fitFeOls(design, SEKind.cluster)
			continue
		fit = fitFeOls(design, SEKind.cluster)
		coef, se = expected
		assert fit.nClusters == len(set(dropSingletons(design).clusterIds))
		assert fit.dof == fit.nClusters - 1
		assert np.allclose(list(fit.coefficients.values()), coef, rtol=1e-8, atol=1e-10)
		assert np.allclose(list(fit.stdErrors.values()), se, rtol=1e-8, atol=1e-10)
		checked += 1
	assert checked > 80


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=10000), st.floats(min_value=-100, max_value=100).filter(lambda c: abs(c) > 0.01))
def test_scale_equivariance(seed, c):
	design = randomDesign(np.random.RandomState(seed))
	try:
		base = fitFeOls(design)
	except EstimationError:
		return
	fit = fitFeOls(PanelDesign(design.y * c, design.X, design.groupIds, columnNames=design.columnNames))
	assert np.allclose(list(fit.coefficients.values()), [c * b for b in base.coefficients.values()], rtol=1e-6, atol=1e-9)
	assert np.allclose(list(fit.stdErrors.values()), [abs(c) * s for s in base.stdErrors.values()], rtol=1e-6, atol=1e-9)
	assert np.allclose(list(fit.tStats.values()), [math.copysign(1.0, c) * t for t in base.tStats.values()], rtol=1e-6, atol=1e-9)


def nullDesign(seed: int, nDocs: int = 100, nValues: int = 3) -> PanelDesign:
	rng = np.random.RandomState(seed)
	docs = np.repeat(np.array(["d" + str(i) for i in range(nDocs)], dtype=object), nValues)
	values = np.tile(np.arange(nValues), nDocs)
	y = np.repeat(rng.uniform(math.log(7.0), math.log(240.0), nDocs), nValues) + rng.normal(0.0, 0.2, nDocs * nValues)
	X = np.stack([(values == v).astype(float) for v in range(1, nValues)], axis=1)
	return PanelDesign(y, X, docs, columnNames=["v" + str(v) for v in range(1, nValues)])


def test_null_calibration():
	fits = [fitFeOls(nullDesign(seed)) for seed in range(1000)]
	ps = np.array([p for f in fits for p in f.pValues.values()])
	assert 0.07 <= (ps <= 0.1).mean() <= 0.13
	models = [modelUnfairnessTest(fits[i:i + 10], 0.1) for i in range(0, len(fits), 10)]
	assert np.mean([m.pBernoulli < 0.05 for m in models]) <= 0.10


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=10000), st.lists(st.floats(min_value=-50, max_value=50), min_size=12, max_size=12))
def test_invariant_to_document_shifts(seed, shifts):
	design = randomDesign(np.random.RandomState(seed))
	try:
		base = fitFeOls(design)
	except EstimationError:
		return
	shiftOf = {"d" + str(i): s for i, s in enumerate(shifts)}
	shifted = PanelDesign(design.y + np.array([shiftOf[g] for g in design.groupIds]), design.X, design.groupIds, columnNames=design.columnNames)
	fit = fitFeOls(shifted)
	assert np.allclose(list(fit.coefficients.values()), list(base.coefficients.values()), rtol=1e-6, atol=1e-7)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=10000), st.randoms(use_true_random=False))
def test_invariant_to_row_order(seed, rnd):
	design = randomDesign(np.random.RandomState(seed))
	try:
		base = fitFeOls(design)
	except EstimationError:
		return
	order = list(range(design.n))
	rnd.shuffle(order)
	fit = fitFeOls(design.subset(np.array(order)))
	assert np.allclose(list(fit.coefficients.values()), list(base.coefficients.values()), rtol=1e-8, atol=1e-10)
	assert np.allclose(list(fit.stdErrors.values()), list(base.stdErrors.values()), rtol=1e-8, atol=1e-10)
