import traceback
import typing
import warnings
from collections import OrderedDict
from pathlib import Path

from plumbum import cli

from RichConsole import groups

from .config import RunConfig, loadRunConfig, toolVersion
from .errors import AuditError, MissingResponsesError
from .metrics import averageInconsistency
from .pipeline import EvalResult, cmdEval, cmdGen, cmdReport, cmdRun, cmdSimulate
from .report import ModelSummaryRow


class ExitCode:
	ok = 0
	config = 1
	partial = 2
	internal = 3


class style:
	# pylint:disable=no-member
	green = groups.Fore.green
	red = groups.Fore.red
	warn = groups.Fore.yellow

	label = groups.Fore.cyan
	ordinal = groups.Fore.yellow
	path = groups.Fore.magenta


class CLI(cli.Application):
	"""Counterfactual fairness audit of LLM judges"""

	PROGNAME = "judicial_fairness_audit"
	VERSION = toolVersion()


def printWarningSummary(caught: typing.List[warnings.WarningMessage]) -> None:
	if not caught:
		return
	byCategory = OrderedDict()
	for w in caught:
		byCategory.setdefault(w.category.__name__, []).append(str(w.message))
	print(style.warn("Warnings:"))
	for cat, msgs in byCategory.items():
		print("\t" + style.warn(cat) + "\t" + style.ordinal(str(len(msgs))))
		for m in msgs[:5]:
			print("\t\t" + m)
		if len(msgs) > 5:
			print("\t\t... and " + str(len(msgs) - 5) + " more")


class ConfigCommandCLI(cli.Application):
	models = cli.SwitchAttr(["-m", "--model"], str, list=True, help="Restrict to these configured model ids")
	temperatures = cli.SwitchAttr(["-t", "--temperature"], float, list=True, help="Override the temperatures")
	variants = cli.SwitchAttr(["-V", "--variant"], str, list=True, help="Override the robustness variants")
	taus = cli.SwitchAttr(["--tau"], float, list=True, help="Override the significance thresholds")

	def loadConfig(self, configPath: str) -> RunConfig:
		return loadRunConfig(Path(configPath)).withOverrides(self.models, self.temperatures, self.variants, self.taus)

	def execute(self, cfg: RunConfig) -> int:
		raise NotImplementedError

	def main(self, configPath: str):  # pylint:disable=arguments-differ
		with warnings.catch_warnings(record=True) as caught:
			warnings.simplefilter("always")
			try:
				code = self.execute(self.loadConfig(configPath))
			except MissingResponsesError as ex:
				print(style.red(str(ex)))
				code = ExitCode.partial
			except AuditError as ex:
				print(style.red(ex.__class__.__name__ + ": " + str(ex)))
				code = ExitCode.config
			except Exception:  # pylint:disable=broad-except
				traceback.print_exc()
				code = ExitCode.internal
		printWarningSummary(caught)
		return code


def printReport(res: EvalResult) -> None:
	for m in res.models:
		row = ModelSummaryRow.fromMetrics(m)
		print(style.label(m.modelId) + "\tT=" + format(m.temperature, "g") + "\tinconsistency " + format(row.inconsistency, ".3f") + "\tbias " + style.ordinal(str(row.bias_count)) + " (p=" + format(row.bias_p_10, ".3f") + ")\timbalance " + style.ordinal(str(row.imbalance_count)) + " (p=" + format(row.imbalance_p_10, ".3f") + ")")
	for t in sorted({m.temperature for m in res.models}):
		group = [m for m in res.models if m.temperature == t]
		if len(group) > 1:
			print(style.label("all models") + "\tT=" + format(t, "g") + "\taverage inconsistency " + format(averageInconsistency(group), ".3f"))
	print("Report:", style.path(str(res.reportDir)))


@CLI.subcommand("gen")
class GenCLI(ConfigCommandCLI):
	"""Builds the counterfactual query set"""

	def execute(self, cfg: RunConfig) -> int:
		path, counts = cmdGen(cfg)
		for label, n in counts.items():
			print(style.label(label) + "\t" + style.ordinal(str(n)))
		print(style.green(str(sum(counts.values())) + " queries") + " written to " + style.path(str(path)))
		return ExitCode.ok


@CLI.subcommand("run")
class RunCLI(ConfigCommandCLI):
	"""Queries every configured model; failed queries are summarized, not fatal"""

	def execute(self, cfg: RunConfig) -> int:
		for (modelId, temperature), summary in cmdRun(cfg).items():
			failed = sum(n for k, n in summary.items() if k not in ("ok", "cached"))
			print(style.label(modelId) + "\tT=" + format(temperature, "g") + "\t" + style.green("ok " + str(summary["ok"])) + "\tcached " + str(summary["cached"]) + "\t" + (style.red("failed " + str(failed)) if failed else "failed 0"))
		return ExitCode.ok


@CLI.subcommand("eval")
class EvalCLI(ConfigCommandCLI):
	"""Parses the cached responses and writes the report"""

	def execute(self, cfg: RunConfig) -> int:
		res = cmdEval(cfg)
		printReport(res)
		if res.partial:
			print(style.red(str(res.missing) + " responses missing; the report is partial"))
			return ExitCode.partial
		return ExitCode.ok


@CLI.subcommand("simulate")
class SimulateCLI(ConfigCommandCLI):
	"""Runs the evaluation on synthetic judges, without network"""

	def execute(self, cfg: RunConfig) -> int:
		printReport(cmdSimulate(cfg))
		return ExitCode.ok


@CLI.subcommand("report")
class ReportCLI(ConfigCommandCLI):
	"""Re-renders a report directory from its fit and metric dumps"""

	reportDir = cli.SwitchAttr(["-d", "--dir"], str, default=None, help="Report directory; the config's run directory by default")

	def execute(self, cfg: RunConfig) -> int:
		printReport(cmdReport(cfg, Path(self.reportDir) if self.reportDir else None))
		return ExitCode.ok


if __name__ == "__main__":
	CLI.run()
