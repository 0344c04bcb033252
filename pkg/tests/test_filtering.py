import random

import pytest

from seqforge.errors import AgentParseError
from seqforge.filtering import (
    AGENT_INSUFFICIENT,
    DERIVED_FROM_OTHER,
    NO_MATH_OR_PROGRAM_FIELD,
    TOO_FEW_TERMS,
    RuleConfig,
    agent_sufficiency_check,
    apply_rule_filter,
    run_filter,
    sufficiency_bindings,
)
from seqforge.oeis import SequenceEntry

from conftest import make_client
from seqforge.agents import MockBackend


def entry_with(terms=None, name="A plain sequence.", formulas=("a(n) = n",),
               programs=(), seq_id="A000001"):
    return SequenceEntry(
        id=seq_id,
        terms=list(terms if terms is not None else range(1, 21)),
        name=name,
        formulas=list(formulas),
        programs=list(programs),
    )


SUFFICIENT_REPLY = """```
STEP 1: identify the generating rule -- SUFFICIENT
STEP 2: choose example and test indexes -- SUFFICIENT
OVERALL: SUFFICIENT
```"""

INSUFFICIENT_REPLY = """```
STEP 1: identify the generating rule -- SUFFICIENT
STEP 2: verify terms beyond the listed prefix -- INSUFFICIENT
OVERALL: INSUFFICIENT
```"""


def test_too_few_terms():
    verdict = apply_rule_filter(entry_with(terms=[1, 2, 3]), RuleConfig(min_terms=8))
    assert TOO_FEW_TERMS in verdict.reason_codes
    assert not verdict.passed


def test_no_math_or_program_field():
    verdict = apply_rule_filter(entry_with(formulas=(), programs=()), RuleConfig())
    assert NO_MATH_OR_PROGRAM_FIELD in verdict.reason_codes


def test_clean_entry_passes():
    verdict = apply_rule_filter(entry_with(), RuleConfig())
    assert verdict.passed
    assert verdict.reason_codes == []


def test_derived_from_other_heuristic():
    derived = entry_with(name="Partial sums of A000045.", formulas=())
    verdict = apply_rule_filter(derived, RuleConfig())
    assert DERIVED_FROM_OTHER in verdict.reason_codes

    # A formula rescues it in the default (non-strict) mode.
    with_formula = entry_with(name="Partial sums of A000045.", formulas=("a(n)=...",))
    assert DERIVED_FROM_OTHER not in apply_rule_filter(with_formula, RuleConfig()).reason_codes

    # Strict mode rejects on any foreign A-number in the name.
    strict = RuleConfig(strict_crossref=True)
    assert DERIVED_FROM_OTHER in apply_rule_filter(with_formula, strict).reason_codes


def test_own_id_in_name_is_not_derivation():
    entry = entry_with(name="A000001 itself.", formulas=())
    verdict = apply_rule_filter(entry, RuleConfig(strict_crossref=True))
    assert DERIVED_FROM_OTHER not in verdict.reason_codes


def test_collects_every_violated_rule():
    bad = entry_with(terms=[1, 2], name="Evolves from A000045.", formulas=(), programs=())
    verdict = apply_rule_filter(bad, RuleConfig(min_terms=8))
    assert set(verdict.reason_codes) == {
        TOO_FEW_TERMS, DERIVED_FROM_OTHER, NO_MATH_OR_PROGRAM_FIELD,
    }


def test_rule_filter_is_pure():
    entry = entry_with(terms=[1, 2, 3])
    config = RuleConfig(min_terms=8)
    first = apply_rule_filter(entry, config)
    for _ in range(5):
        again = apply_rule_filter(entry, config)
        assert again.reason_codes == first.reason_codes


def test_monotonicity_adding_terms_never_introduces_too_few():
    rng = random.Random(7)
    config = RuleConfig(min_terms=8)
    for _ in range(100):
        base_len = rng.randint(0, 15)
        terms = [rng.randint(-5, 5) for _ in range(base_len)] or [1]
        entry = entry_with(terms=terms)
        before = TOO_FEW_TERMS in apply_rule_filter(entry, config).reason_codes
        extended = entry_with(terms=terms + [rng.randint(-5, 5) for _ in range(rng.randint(1, 10))])
        after = TOO_FEW_TERMS in apply_rule_filter(extended, config).reason_codes
        assert not (after and not before)


def test_sufficiency_all_steps_ok():
    entry = entry_with()
    backend = MockBackend().add("sufficiency", sufficiency_bindings(entry), SUFFICIENT_REPLY)
    report = agent_sufficiency_check(entry, make_client(backend), RuleConfig())
    assert report.overall
    assert report.per_step_sufficient == [True, True]
    assert len(report.planned_steps) == 2


def test_sufficiency_one_insufficient_step():
    entry = entry_with()
    backend = MockBackend().add("sufficiency", sufficiency_bindings(entry), INSUFFICIENT_REPLY)
    report = agent_sufficiency_check(entry, make_client(backend), RuleConfig())
    assert not report.overall
    assert report.per_step_sufficient == [True, False]


def test_sufficiency_unparseable_after_retries():
    entry = entry_with()
    backend = MockBackend().add(
        "sufficiency", sufficiency_bindings(entry), "free prose", "still no verdict"
    )
    with pytest.raises(AgentParseError):
        agent_sufficiency_check(entry, make_client(backend), RuleConfig(parse_retries=2))


def test_run_filter_maps_parse_failure_to_agent_insufficient():
    entry = entry_with()
    backend = MockBackend().add(
        "sufficiency", sufficiency_bindings(entry), "nope", "still nope"
    )
    verdict = run_filter(entry, make_client(backend), RuleConfig(parse_retries=2))
    assert verdict.reason_codes == [AGENT_INSUFFICIENT]
    assert verdict.raw_agent_reply  # raw reply logged for the reject


def test_run_filter_skips_agent_when_rules_fail():
    entry = entry_with(terms=[1, 2])
    backend = MockBackend()  # any agent call would ScriptMiss
    verdict = run_filter(entry, make_client(backend), RuleConfig(min_terms=8))
    assert not verdict.passed
    assert backend.calls == 0
