from .aggregate import BernoulliVerdict, Granularity, binomialTail, crossModelTest, modelUnfairnessTest, pearson
from .config import RunConfig, loadRunConfig
from .corpus import CaseDocument, CaseSet, LabelCatalog, LabelSpec, applyExclusions, generateAgeValues, loadCorpus, loadLabelSpecs, sampleCases
from .errors import *
from .llm_client import ModelConfig, RawResponse, ResponseCache, ResponseStatus, execute
from .metrics import LabelOutcomeTable, MAEScope, MetricKind, ModelMetrics, RobustnessVariant, biasFit, computeModelMetrics, imbalanceFit, inconsistencyLabel, inconsistencyModel, maeMape, weightedAverage
from .outcome_parser import EncodingMode, NotGuiltyPolicy, ParseStatus, SentenceEncoding, SentencingOutcome, parseResponse, toRegressand
from .promptgen import PromptTemplate, QuerySpec, buildQueries, buildQuerySet, loadTemplate, substituteTrigger
from .report import HeatmapCell, ModelSummaryRow, SignificanceBucket, heatmapSvg, labelDetailTable, summaryTable, writeReportDir
from .stats_fe import PanelDesign, RegressionFit, SEKind, fitFeOls
from .synth_judge import SynthConfig, serveMock, simulateOutputs
