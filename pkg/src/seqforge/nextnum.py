"""Next-number prediction harness over held-out sequences.

Builds a seeded evaluation set disjoint from the training corpus, renders
k-shot prompts (demonstrations drawn from the other eval items), extracts an
integer prediction from each reply, and scores exact matches.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field

from .agents import load_templates
from .errors import InsufficientHeldOut, ShotOverlap

DEFAULT_PREFIX_LEN = 10


@dataclass(frozen=True)
class EvalItem:
    sequence_id: str
    shown_prefix: tuple[int, ...]
    true_next: int

    def __post_init__(self):
        if not self.shown_prefix:
            raise ValueError("shown_prefix must be non-empty")


@dataclass
class ItemOutcome:
    sequence_id: str
    raw_reply: str
    extracted: int | None
    correct: bool
    error: str = ""


@dataclass
class EvalReport:
    k_shot: int
    n_items: int
    n_correct: int
    per_item: list[ItemOutcome] = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.n_items if self.n_items else 0.0


def build_eval_set(corpus, training_ids, n: int, rng_seed: int,
                   prefix_len: int = DEFAULT_PREFIX_LEN) -> list[EvalItem]:
    """Seeded sample of n held-out items; each needs prefix_len+1 known terms."""
    held_out = sorted(
        (e for e in corpus
         if e.id not in training_ids and len(e.terms) >= prefix_len + 1),
        key=lambda e: e.id,
    )
    if len(held_out) < n:
        raise InsufficientHeldOut(
            f"need {n} held-out sequences with >= {prefix_len + 1} terms, "
            f"have {len(held_out)}"
        )
    rng = random.Random(rng_seed)
    chosen = rng.sample(held_out, n)
    return [
        EvalItem(
            sequence_id=e.id,
            shown_prefix=tuple(e.terms[:prefix_len]),
            true_next=e.terms[prefix_len],
        )
        for e in chosen
    ]


def render_prompt(item: EvalItem, shots: list[EvalItem], k: int,
                  templates=None) -> str:
    if len(shots) != k:
        raise ValueError(f"expected {k} shots, got {len(shots)}")
    if any(s.sequence_id == item.sequence_id for s in shots):
        raise ShotOverlap(f"shot set contains the target {item.sequence_id}")
    templates = templates or load_templates()
    demos = []
    for shot in shots:
        demos.append(
            "Here is the beginning of an integer sequence:\n"
            f"{', '.join(str(t) for t in shot.shown_prefix)}\n"
            f"The next number in the sequence is {shot.true_next}.\n"
        )
    return templates["next_number"].render({
        "demonstrations": "\n".join(demos) + ("\n" if demos else ""),
        "prefix": ", ".join(str(t) for t in item.shown_prefix),
    })


_MARKER_RE = re.compile(r"answer\s*[:=]\s*(-?\d+)", re.IGNORECASE)
_INT_RE = re.compile(r"-?\d+")


def extract_prediction(reply: str) -> int | None:
    """Marker-tagged integer if present, else the last standalone integer."""
    m = _MARKER_RE.search(reply)
    if m:
        return int(m.group(1))
    matches = _INT_RE.findall(reply)
    return int(matches[-1]) if matches else None


def evaluate(model_fn, items: list[EvalItem], k: int, rng_seed: int,
             templates=None) -> EvalReport:
    """Query `model_fn(prompt) -> reply` per item; exact-match scoring.

    Shots are sampled (seeded) from the other items. Transport errors mark
    the item incorrect with an annotation; the report stays complete.
    """
    if not items:
        raise ValueError("items must be non-empty")
    templates = templates or load_templates()
    rng = random.Random(rng_seed)
    outcomes = []
    for item in items:
        pool = [other for other in items if other.sequence_id != item.sequence_id]
        shots = rng.sample(pool, k) if k else []
        prompt = render_prompt(item, shots, k, templates=templates)
        try:
            reply = model_fn(prompt)
        except Exception as exc:
            outcomes.append(ItemOutcome(
                sequence_id=item.sequence_id, raw_reply="", extracted=None,
                correct=False, error=f"{type(exc).__name__}: {exc}",
            ))
            continue
        predicted = extract_prediction(reply)
        outcomes.append(ItemOutcome(
            sequence_id=item.sequence_id,
            raw_reply=reply,
            extracted=predicted,
            correct=predicted is not None and predicted == item.true_next,
        ))
    return EvalReport(
        k_shot=k,
        n_items=len(items),
        n_correct=sum(1 for o in outcomes if o.correct),
        per_item=outcomes,
    )


def report_to_json(report: EvalReport) -> str:
    payload = {
        "k_shot": report.k_shot,
        "n_items": report.n_items,
        "n_correct": report.n_correct,
        "accuracy": report.accuracy,
        "per_item": [o.__dict__ for o in report.per_item],
    }
    return json.dumps(payload, ensure_ascii=False, indent=2) + "\n"


def report_table(report: EvalReport) -> str:
    lines = [
        f"k-shot        {report.k_shot}",
        f"items         {report.n_items}",
        f"correct       {report.n_correct}",
        f"accuracy      {report.accuracy:.3f}",
    ]
    return "\n".join(lines)
