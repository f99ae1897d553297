import typing
from collections import OrderedDict
from enum import Enum

import numpy as np
from scipy import linalg, special

from . import defaults
from .errors import EstimationError
from .util import SlotsRepr

__all__ = ("SEKind", "PanelDesign", "RegressionFit", "dropSingletons", "demeanWithin", "fitFeOls", "pValueT", "fitDump", "fitFromDump", "FIT_DUMP_COLUMNS")


class SEKind(Enum):
	cluster = "cluster"
	hc1 = "hc1"


class PanelDesign(SlotsRepr):
	__slots__ = ("y", "X", "groupIds", "clusterIds", "columnNames")

	def __init__(self, y, X, groupIds, clusterIds=None, columnNames: typing.Optional[typing.Sequence[str]] = None) -> None:
		y = np.asarray(y, dtype=float).reshape(-1)
		X = np.asarray(X, dtype=float)
		if X.ndim == 1:
			X = X.reshape(-1, 1)
		if X.size == 0:
			X = X.reshape(len(y), -1)
		groupIds = np.asarray(groupIds, dtype=object).reshape(-1)
		clusterIds = groupIds if clusterIds is None else np.asarray(clusterIds, dtype=object).reshape(-1)
		if not (len(y) == X.shape[0] == len(groupIds) == len(clusterIds)):
			raise ValueError("y, X, group ids and cluster ids must have equal lengths: " + repr((len(y), X.shape[0], len(groupIds), len(clusterIds))))
		if columnNames is None:
			columnNames = ["x" + str(i) for i in range(X.shape[1])]
		columnNames = tuple(columnNames)
		if len(columnNames) != X.shape[1]:
			raise ValueError("Need one name per column")
		self.y = y
		self.X = X
		self.groupIds = groupIds
		self.clusterIds = clusterIds
		self.columnNames = columnNames

	@property
	def n(self) -> int:
		return len(self.y)

	def subset(self, mask: np.ndarray) -> "PanelDesign":
		return self.__class__(self.y[mask], self.X[mask], self.groupIds[mask], self.clusterIds[mask], self.columnNames)

	def __eq__(self, other) -> bool:
		if other.__class__ is not self.__class__:
			return NotImplemented
		return self.columnNames == other.columnNames and np.array_equal(self.y, other.y) and np.array_equal(self.X, other.X) and list(self.groupIds) == list(other.groupIds) and list(self.clusterIds) == list(other.clusterIds)


class RegressionFit(SlotsRepr):
	__slots__ = ("coefficients", "stdErrors", "tStats", "pValues", "nObs", "nGroups", "nClusters", "dof", "seKind", "droppedSingletons", "droppedGroups")

	def __init__(self, coefficients, stdErrors, tStats, pValues, nObs: int, nGroups: int, nClusters: int, dof: float, seKind: SEKind, droppedSingletons: int, droppedGroups: int = 0) -> None:
		self.coefficients = OrderedDict(coefficients)
		self.stdErrors = OrderedDict(stdErrors)
		self.tStats = OrderedDict(tStats)
		self.pValues = OrderedDict(pValues)
		self.nObs = nObs
		self.nGroups = nGroups
		self.nClusters = nClusters
		self.dof = dof
		self.seKind = seKind
		self.droppedSingletons = droppedSingletons
		self.droppedGroups = droppedGroups

	@property
	def minP(self) -> typing.Tuple[typing.Optional[str], float]:
		best = None
		bestP = float("inf")
		for k, p in self.pValues.items():
			if p < bestP:
				best, bestP = k, p
		return best, bestP


def _groupIndex(ids: np.ndarray) -> typing.Tuple[np.ndarray, int]:
	_, inv = np.unique(np.asarray([str(i) for i in ids]), return_inverse=True)
	inv = inv.reshape(-1)
	return inv, int(inv.max()) + 1 if len(inv) else 0


def dropSingletons(design: PanelDesign) -> PanelDesign:
	inv, g = _groupIndex(design.groupIds)
	if not g:
		return design
	counts = np.bincount(inv, minlength=g)
	keep = counts[inv] > 1
	if keep.all():
		return design
	return design.subset(keep)


def demeanWithin(values, groupIds) -> np.ndarray:
	values = np.asarray(values, dtype=float)
	inv, g = _groupIndex(np.asarray(groupIds, dtype=object).reshape(-1))
	if values.shape[0] != len(inv):
		raise ValueError("values and group ids must have equal lengths")
	if not g:
		return values.copy()
	counts = np.bincount(inv, minlength=g).astype(float)
	if values.ndim == 1:
		means = np.bincount(inv, weights=values, minlength=g) / counts
		return values - means[inv]
	res = np.empty_like(values)
	for j in range(values.shape[1]):
		means = np.bincount(inv, weights=values[:, j], minlength=g) / counts
		res[:, j] = values[:, j] - means[inv]
	return res


def _dropZeroVariation(design: PanelDesign, Xt: np.ndarray) -> np.ndarray:
	inv, g = _groupIndex(design.groupIds)
	if not Xt.shape[1]:
		return np.ones(design.n, dtype=bool)
	rowEnergy = np.abs(Xt).sum(axis=1)
	groupEnergy = np.bincount(inv, weights=rowEnergy, minlength=g)
	scale = max(1.0, float(np.abs(design.X).max())) if design.X.size else 1.0
	return groupEnergy[inv] > defaults.pivotTolerance * scale


def pValueT(t: float, dof: float) -> float:
	"""Two-sided Student-t tail `2 * (1 - F_dof(|t|))` through the regularized incomplete beta function"""
	if dof <= 0:
		raise ValueError("dof must be positive")
	if np.isnan(t):
		return float("nan")
	if np.isinf(t):
		return 0.0
	t2 = float(t) * float(t)
	return float(min(1.0, max(0.0, special.betainc(dof / 2.0, 0.5, dof / (dof + t2)))))


def fitFeOls(design: PanelDesign, seKind: SEKind = SEKind.cluster) -> RegressionFit:
	names = design.columnNames
	p = len(names)
	if not p:
		raise EstimationError("No regressors to estimate")

	d = dropSingletons(design)
	droppedSingletons = design.n - d.n
	if not d.n:
		raise EstimationError("Design is empty after dropping singleton groups")

	Xt = demeanWithin(d.X, d.groupIds)
	keep = _dropZeroVariation(d, Xt)
	groupsBefore = _groupIndex(d.groupIds)[1]
	if not keep.all():
		d = d.subset(keep)
		Xt = Xt[keep]
	droppedGroups = groupsBefore - _groupIndex(d.groupIds)[1]
	if not d.n:
		raise EstimationError("No group has within variation in the regressors", names[0])

	yt = demeanWithin(d.y, d.groupIds)
	gInv, nGroups = _groupIndex(d.groupIds)
	cInv, nClusters = _groupIndex(d.clusterIds)
	N = d.n
	if nGroups < 2:
		raise EstimationError("At least 2 groups are required, got " + str(nGroups))

	Q, R, piv = linalg.qr(Xt, mode="economic", pivoting=True)
	tol = defaults.pivotTolerance * max(np.linalg.norm(Xt), 1.0)
	diag = np.abs(np.diag(R))
	for i in range(p):
		if i >= len(diag) or diag[i] <= tol:
			col = names[piv[i]] if i < len(piv) else names[-1]
			raise EstimationError("Regressor " + repr(col) + " is collinear with the others or has no within variation", col)

	betaPiv = linalg.solve_triangular(R, Q.T @ yt)
	beta = np.empty(p)
	beta[piv] = betaPiv
	Rinv = linalg.solve_triangular(R, np.eye(p))
	breadPiv = Rinv @ Rinv.T
	bread = np.empty((p, p))
	bread[np.ix_(piv, piv)] = breadPiv

	resid = yt - Xt @ beta

	if seKind is SEKind.cluster:
		if nClusters < 2:
			raise EstimationError("At least 2 clusters are required, got " + str(nClusters))
		clustersPerGroup = np.zeros(nGroups, dtype=int)
		pairs = np.unique(np.stack([gInv, cInv], axis=1), axis=0)
		np.add.at(clustersPerGroup, pairs[:, 0], 1)
		nested = bool((clustersPerGroup == 1).all())
		K = p + 1 if nested else p + nGroups
		if N - K <= 0:
			raise EstimationError("Non-positive residual degrees of freedom: N=" + str(N) + ", K=" + str(K))
		scores = np.zeros((nClusters, p))
		np.add.at(scores, cInv, Xt * resid[:, None])
		meat = scores.T @ scores
		c = (N - 1) / (N - K) * nClusters / (nClusters - 1)
		dof = float(nClusters - 1)
	elif seKind is SEKind.hc1:
		K = p + nGroups
		if N - K <= 0:
			raise EstimationError("Non-positive residual degrees of freedom: N=" + str(N) + ", K=" + str(K))
		scores = Xt * resid[:, None]
		meat = scores.T @ scores
		c = N / (N - K)
		dof = float(N - K)
	else:
		raise ValueError(seKind)

	V = c * bread @ meat @ bread
	se = np.sqrt(np.clip(np.diag(V), 0.0, None))

	scale = max(1.0, float(np.abs(d.y).max()))
	zeroTol = 1e-12 * scale
	coefs, ses, ts, ps = OrderedDict(), OrderedDict(), OrderedDict(), OrderedDict()
	for j, name in enumerate(names):
		b = float(beta[j])
		s = float(se[j])
		if abs(b) <= zeroTol:
			b = 0.0
		if s <= zeroTol:
			s = 0.0
		if s > 0:
			t = b / s
		elif b == 0.0:
			t = 0.0
		else:
			t = float(np.sign(b)) * float("inf")
		coefs[name] = b
		ses[name] = s
		ts[name] = t
		ps[name] = pValueT(t, dof)

	return RegressionFit(coefs, ses, ts, ps, N, nGroups, nClusters, dof, seKind, droppedSingletons, droppedGroups)


FIT_DUMP_COLUMNS = ("value", "coefficient", "std_error", "t_stat", "p_value", "n_obs", "n_groups", "n_clusters", "dof", "se_kind", "dropped_singletons", "dropped_groups")


def fitDump(fit: RegressionFit) -> typing.List["OrderedDict[str, typing.Any]"]:
	return [
		OrderedDict(zip(FIT_DUMP_COLUMNS, (name, fit.coefficients[name], fit.stdErrors[name], fit.tStats[name], fit.pValues[name], fit.nObs, fit.nGroups, fit.nClusters, fit.dof, fit.seKind.value, fit.droppedSingletons, fit.droppedGroups)))
		for name in fit.coefficients
	]


def fitFromDump(rows: typing.Sequence[typing.Mapping[str, typing.Any]]) -> RegressionFit:
	if not rows:
		raise ValueError("A fit needs at least one coefficient row")
	first = rows[0]
	names = [r["value"] for r in rows]
	return RegressionFit(
		zip(names, (float(r["coefficient"]) for r in rows)),
		zip(names, (float(r["std_error"]) for r in rows)),
		zip(names, (float(r["t_stat"]) for r in rows)),
		zip(names, (float(r["p_value"]) for r in rows)),
		int(first["n_obs"]), int(first["n_groups"]), int(first["n_clusters"]), float(first["dof"]), SEKind(first["se_kind"]), int(first["dropped_singletons"]), int(first["dropped_groups"]),
	)
