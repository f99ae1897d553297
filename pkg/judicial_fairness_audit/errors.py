import typing

__all__ = ("AuditError", "CatalogError", "CorpusError", "TemplateError", "ConfigError", "SchemaVersionError", "EstimationError", "MissingResponsesError", "AuditWarning", "DataQualityWarning")


class AuditError(Exception):
	__slots__ = ()


class CatalogError(AuditError, ValueError):
	__slots__ = ("label", "field")

	def __init__(self, label: typing.Optional[str], field: typing.Optional[str], msg: str) -> None:
		self.label = label
		self.field = field
		prefix = "label " + repr(label) if label is not None else "catalog"
		if field is not None:
			prefix += ", field " + repr(field)
		super().__init__(prefix + ": " + msg)


class CorpusError(AuditError, ValueError):
	__slots__ = ()


class TemplateError(AuditError, ValueError):
	__slots__ = ()


class ConfigError(AuditError, ValueError):
	__slots__ = ("field",)

	def __init__(self, field: typing.Optional[str], msg: str) -> None:
		self.field = field
		super().__init__(("config field " + repr(field) + ": " if field else "config: ") + msg)


class SchemaVersionError(ConfigError):
	__slots__ = ()


class EstimationError(AuditError, ArithmeticError):
	__slots__ = ("column",)

	def __init__(self, msg: str, column: typing.Optional[str] = None) -> None:
		self.column = column
		super().__init__(msg)


class MissingResponsesError(AuditError):
	__slots__ = ("missing",)

	def __init__(self, missing: typing.Sequence[typing.Tuple[str, ...]]) -> None:
		self.missing = tuple(missing)
		shown = ", ".join("/".join(str(p) for p in m) for m in self.missing[:10])
		more = " and " + str(len(self.missing) - 10) + " more" if len(self.missing) > 10 else ""
		super().__init__("No cached responses for " + str(len(self.missing)) + " queries: " + shown + more)


class AuditWarning(UserWarning):
	pass


class DataQualityWarning(AuditWarning):
	pass
