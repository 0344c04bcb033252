"""Sequence filtering: manual rules, then an agent sufficiency check.

The rule filter is a total, pure function; it collects every violated rule,
not just the first. The agent check asks the working agent to plan the
problem-generation steps and reflect per step on whether the record carries
enough information, and parses the structured verdict out of the reply.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .agents import AgentClient, AgentRole, extract_fenced_blocks
from .errors import AgentParseError
from .oeis import SequenceEntry

# Reason codes carried by FilterVerdict.
TOO_FEW_TERMS = "TooFewTerms"
DERIVED_FROM_OTHER = "DerivedFromOther"
NO_MATH_OR_PROGRAM_FIELD = "NoMathOrProgramField"
AGENT_INSUFFICIENT = "AgentInsufficient"
CORRUPT = "Corrupt"

_A_NUMBER_RE = re.compile(r"A\d{6}")


@dataclass
class RuleConfig:
    min_terms: int = 8
    strict_crossref: bool = False
    parse_retries: int = 2


@dataclass
class SufficiencyReport:
    planned_steps: list[str]
    per_step_sufficient: list[bool]

    def __post_init__(self):
        if len(self.planned_steps) != len(self.per_step_sufficient):
            raise ValueError("steps and flags must align")

    @property
    def overall(self) -> bool:
        return all(self.per_step_sufficient) and bool(self.per_step_sufficient)


@dataclass
class FilterVerdict:
    reason_codes: list[str] = field(default_factory=list)
    agent_report: SufficiencyReport | None = None
    raw_agent_reply: str = ""

    @property
    def passed(self) -> bool:
        return not self.reason_codes


def apply_rule_filter(entry: SequenceEntry, config: RuleConfig) -> FilterVerdict:
    """Deterministic manual rules; collects every violated rule."""
    reasons = []
    if len(entry.terms) < config.min_terms:
        reasons.append(TOO_FEW_TERMS)

    other_ids = [a for a in _A_NUMBER_RE.findall(entry.name) if a != entry.id]
    if config.strict_crossref:
        if other_ids:
            reasons.append(DERIVED_FROM_OTHER)
    elif other_ids and not entry.formulas:
        reasons.append(DERIVED_FROM_OTHER)

    if not entry.formulas and not entry.programs:
        reasons.append(NO_MATH_OR_PROGRAM_FIELD)
    return FilterVerdict(reason_codes=reasons)


_STEP_RE = re.compile(
    r"^STEP\s+\d+\s*:\s*(?P<text>.*?)\s*--\s*(?P<flag>SUFFICIENT|INSUFFICIENT)\s*$",
    re.IGNORECASE,
)


def _parse_sufficiency_reply(reply: str) -> SufficiencyReport:
    blocks = extract_fenced_blocks(reply)
    candidates = blocks if blocks else [reply]
    for candidate in candidates:
        steps, flags = [], []
        for line in candidate.splitlines():
            m = _STEP_RE.match(line.strip())
            if m:
                steps.append(m.group("text"))
                flags.append(m.group("flag").upper() == "SUFFICIENT")
        if steps:
            return SufficiencyReport(planned_steps=steps, per_step_sufficient=flags)
    raise AgentParseError("no STEP lines with SUFFICIENT/INSUFFICIENT markers found")


def sufficiency_bindings(entry: SequenceEntry) -> dict:
    return {
        "sequence_id": entry.id,
        "name": entry.name,
        "terms": ", ".join(str(t) for t in entry.terms),
        "offset": entry.offset,
        "formulas": "\n".join(entry.formulas) or "(none)",
        "examples": "\n".join(entry.examples) or "(none)",
        "programs": "\n".join(entry.programs) or "(none)",
        "keywords": ", ".join(entry.keywords) or "(none)",
    }


def agent_sufficiency_check(entry: SequenceEntry, client: AgentClient,
                            config: RuleConfig) -> SufficiencyReport:
    """Ask the working agent to self-plan and self-reflect; parse the verdict.

    Re-asks on an unparseable reply up to config.parse_retries times, then
    raises AgentParseError (the caller rejects the sequence and logs the raw
    reply).
    """
    bindings = sufficiency_bindings(entry)
    last_reply = ""
    for _ in range(max(1, config.parse_retries)):
        last_reply = client.complete(AgentRole.WORKING, "sufficiency", bindings)
        try:
            return _parse_sufficiency_reply(last_reply)
        except AgentParseError:
            continue
    raise AgentParseError(
        f"{entry.id}: sufficiency reply unparseable after "
        f"{config.parse_retries} attempts; last reply: {last_reply[:500]!r}"
    )


def run_filter(entry: SequenceEntry, client: AgentClient | None,
               config: RuleConfig) -> FilterVerdict:
    """Rule filter, then (only for rule-passing entries) the agent check."""
    verdict = apply_rule_filter(entry, config)
    if not verdict.passed or client is None:
        return verdict
    try:
        report = agent_sufficiency_check(entry, client, config)
    except AgentParseError as exc:
        return FilterVerdict(reason_codes=[AGENT_INSUFFICIENT], raw_agent_reply=str(exc))
    if not report.overall:
        return FilterVerdict(reason_codes=[AGENT_INSUFFICIENT], agent_report=report)
    return FilterVerdict(agent_report=report)
