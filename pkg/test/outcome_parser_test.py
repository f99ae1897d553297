import math
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from judicial_fairness_audit import defaults
from judicial_fairness_audit.errors import ConfigError
from judicial_fairness_audit.outcome_parser import EncodingMode, NotGuiltyPolicy, ParseStatus, SentenceEncoding, SentencingOutcome, findFirstJSONObject, parseResponse, toRegressand


def test_fixed_term():
	o = parseResponse('{"guilty": true, "imprisonment_months": 36, "life_imprisonment": false, "death_penalty": false}')
	assert o == SentencingOutcome(True, 36, False, False)


def test_json_embedded_in_prose():
	o = parseResponse('Verdict follows.\n```json\n{"guilty": true, "imprisonment_months": 18.0, "life_imprisonment": false, "death_penalty": false}\n``` Done {not json}')
	assert o.ok
	assert o.fixedTermMonths == 18


def test_not_guilty():
	o = parseResponse('{"guilty": false, "imprisonment_months": null, "life_imprisonment": false, "death_penalty": false}')
	assert o.ok
	assert not o.guilty
	assert o.verdict == (False, None, False, False)


def test_life_and_death():
	assert parseResponse('{"guilty": true, "imprisonment_months": null, "life_imprisonment": true, "death_penalty": false}').lifeImprisonment
	assert parseResponse('{"guilty": true, "imprisonment_months": null, "life_imprisonment": false, "death_penalty": true}').deathPenalty


def test_braces_inside_strings():
	assert findFirstJSONObject('x {"note": "a } brace", "guilty": false} y') == {"note": "a } brace", "guilty": False}
	assert findFirstJSONObject('{"a": "\\"}"} {"b": 1}') == {"a": '"}'}
	assert findFirstJSONObject("see {this part] {\"guilty\": false}") == {"guilty": False}
	assert findFirstJSONObject("{[}") is None


def test_statuses():
	assert parseResponse("The defendant should get three years.").parseStatus is ParseStatus.noJSON
	assert parseResponse('{"sentence": 36}').parseStatus is ParseStatus.schemaMismatch
	assert parseResponse('{"guilty": "maybe"}').parseStatus is ParseStatus.schemaMismatch
	assert parseResponse('{"guilty": true, "imprisonment_months": -3}').parseStatus is ParseStatus.schemaMismatch
	assert parseResponse('{"guilty": true, "imprisonment_months": 2.5}').parseStatus is ParseStatus.schemaMismatch
	assert parseResponse('{"guilty": true, "imprisonment_months": 24, "life_imprisonment": true}').parseStatus is ParseStatus.inconsistentFields
	assert parseResponse('{"guilty": true}').parseStatus is ParseStatus.inconsistentFields
	assert parseResponse('{"guilty": false, "imprisonment_months": 12}').parseStatus is ParseStatus.inconsistentFields


def test_months_out_of_range():
	huge = "9" * 400
	for months in (huge, '"' + huge + '"', str(defaults.maxTermMonths + 1), "1e400"):
		o = parseResponse('{"guilty": true, "imprisonment_months": ' + months + "}")
		assert o.parseStatus is ParseStatus.schemaMismatch, months
		assert toRegressand(o, SentenceEncoding()) is None
	assert parseResponse('{"guilty": true, "imprisonment_months": ' + str(defaults.maxTermMonths) + "}").fixedTermMonths == defaults.maxTermMonths


def test_deep_nesting():
	assert parseResponse("{" + "[" * 100000 + "]" * 100000 + "}").parseStatus is ParseStatus.noJSON
	assert parseResponse('{"a": ' * 50000 + "1" + "}" * 50000).parseStatus is ParseStatus.schemaMismatch
	deep = '{"guilty": true, "imprisonment_months": 7, "x": ' + "[" * 5000 + "]" * 5000 + "}"
	assert parseResponse(deep + ' {"guilty": false}').verdict == (False, None, False, False)


@pytest.mark.parametrize("body", [
	"{" * 100000,
	'{"guilty": ' * 20000,
	"{{}" * 30000,
	'{"a": "' + "{" * 100000,
])
def test_scan_is_not_quadratic(body):
	started = time.perf_counter()
	parseResponse(body)
	assert time.perf_counter() - started < 2.0


def test_bytes_input():
	assert parseResponse(b'{"guilty": true, "imprisonment_months": 7}').fixedTermMonths == 7
	assert parseResponse(b"\xff\xfe\x00").parseStatus is ParseStatus.noJSON


@settings(max_examples=10000, deadline=None)
@given(st.binary(max_size=200))
def test_fuzz_bytes_never_crash(data):
	o = parseResponse(data)
	assert isinstance(o.parseStatus, ParseStatus)
	if b"{" not in data:
		assert o.parseStatus is ParseStatus.noJSON


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet=st.characters(blacklist_characters="{"), max_size=200))
def test_fuzz_text_without_braces(text):
	assert parseResponse(text).parseStatus is ParseStatus.noJSON


def test_encoding_fixed_term_only():
	enc = SentenceEncoding()
	assert enc.months(SentencingOutcome(True, 36)) == 36
	assert enc.months(SentencingOutcome(True, None, True, False)) is None
	assert enc.months(SentencingOutcome(False)) == 0
	assert enc.months(SentencingOutcome.failed(ParseStatus.noJSON)) is None


def test_encoding_full_sentence():
	enc = SentenceEncoding(EncodingMode.fullSentence)
	assert enc.months(SentencingOutcome(True, None, True, False)) == 300
	assert enc.months(SentencingOutcome(True, None, False, True)) == 400


def test_encoding_drop_not_guilty():
	enc = SentenceEncoding(notGuilty=NotGuiltyPolicy.drop)
	assert enc.months(SentencingOutcome(False)) is None


def test_encoding_validation():
	with pytest.raises(ConfigError):
		SentenceEncoding(lifeMonths=500, deathMonths=400)
	with pytest.raises(ConfigError):
		SentenceEncoding.fromJSON({"mode": "whatever"})
	assert SentenceEncoding.fromJSON(SentenceEncoding(EncodingMode.fullSentence).toJSON()) == SentenceEncoding(EncodingMode.fullSentence)


def test_regressand():
	enc = SentenceEncoding()
	assert toRegressand(SentencingOutcome(True, 0), enc) == 0.0
	assert toRegressand(SentencingOutcome(True, 36), enc) == pytest.approx(math.log(37))
	assert toRegressand(SentencingOutcome(True, None, True, False), enc) is None


@given(st.integers(min_value=0, max_value=10000), st.integers(min_value=0, max_value=10000))
def test_regressand_monotone(a, b):
	enc = SentenceEncoding()
	ra = toRegressand(SentencingOutcome(True, a), enc)
	rb = toRegressand(SentencingOutcome(True, b), enc)
	assert (a <= b) == (ra <= rb)
