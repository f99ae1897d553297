import re
import typing
from abc import ABC, abstractmethod

agePlaceholder = "{age}"


class Matcher(ABC):
	__slots__ = ()

	@abstractmethod
	def __call__(self, text: str) -> typing.Optional[typing.Match]:
		raise NotImplementedError


class ITriggerMatcher(Matcher):
	"""Finds a label value's trigger sentence inside a prompt or a case body"""

	__slots__ = ("rx", "template")

	def __init__(self, template: str, rx: typing.Pattern) -> None:
		self.template = template
		self.rx = rx

	def __call__(self, text: str) -> typing.Optional[typing.Match]:
		return self.rx.search(text)

	def __repr__(self) -> str:
		return self.__class__.__name__ + "(" + repr(self.template) + ")"


class LiteralTriggerMatcher(ITriggerMatcher):
	__slots__ = ()

	def __init__(self, sentence: str) -> None:
		super().__init__(sentence, re.compile(re.escape(sentence)))


class AgeTriggerMatcher(ITriggerMatcher):
	"""Matches a templated sentence like `Defendant is {age} years old.` and extracts the age"""

	__slots__ = ()

	def __init__(self, template: str) -> None:
		if agePlaceholder not in template:
			raise ValueError("Age trigger template must contain " + agePlaceholder + ": " + repr(template))
		pre, post = template.split(agePlaceholder, 1)
		super().__init__(template, re.compile(re.escape(pre) + "(?P<age>\\d{1,3})" + re.escape(post)))

	def age(self, text: str) -> typing.Optional[int]:
		m = self(text)
		if m:
			return int(m.group("age"))
		return None

	def render(self, age: int) -> str:
		return self.template.replace(agePlaceholder, str(int(age)))


def makeTriggerMatcher(template: str) -> ITriggerMatcher:
	if agePlaceholder in template:
		return AgeTriggerMatcher(template)
	return LiteralTriggerMatcher(template)
