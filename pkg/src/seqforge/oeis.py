"""Parsing of OEIS-style internal-format records and b-files.

The internal exchange format tags each line with a field code and the
sequence id, e.g.::

    %I A000045
    %S A000045 0,1,1,2,3,5,8,13,21,34,55
    %N A000045 Fibonacci numbers.
    %O A000045 0,4

``%S``/``%T``/``%U`` carry the terms (concatenated in that order), ``%N``
the name, ``%O`` the offset pair, ``%F`` formulas, ``%e`` worked examples,
``%o`` programs, ``%K`` keywords and ``%Y`` cross-references. Any other tag
is preserved verbatim so nothing is lost to format drift.

All term values are Python ints (arbitrary precision); no float appears
anywhere in this module.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field

from .errors import MalformedLine, MalformedPair, MissingTerms, NonContiguousIndex, OverlapMismatch

SEQUENCE_ID_RE = re.compile(r"\AA\d{6}\Z")
_CROSSREF_RE = re.compile(r"A\d{6}")
_TAG_LINE_RE = re.compile(r"\A%([A-Za-z])\s+(A\d{6})(?:\s(.*))?\Z")

# Tags parsed into structured fields; everything else lands in raw_lines only.
TERM_TAGS = ("S", "T", "U")
KNOWN_TAGS = frozenset(TERM_TAGS) | {"I", "N", "F", "e", "o", "Y", "K", "O"}

OEIS_URL_PREFIX = "https://oeis.org/"


def is_sequence_id(text: str) -> bool:
    return bool(SEQUENCE_ID_RE.match(text))


@dataclass(frozen=True)
class BfileEntry:
    """One "index value" pair from a b-file."""
    index: int
    value: int


@dataclass
class SequenceEntry:
    """One parsed sequence record.

    ``raw_lines`` maps every tag seen in the record to its payload strings in
    input order (including the tags that were parsed into structured fields),
    which makes serialization lossless and lets downstream filters inspect
    fields this module does not model.
    """
    id: str
    terms: list[int]
    offset: int = 0
    name: str = ""
    formulas: list[str] = field(default_factory=list)
    examples: list[str] = field(default_factory=list)
    programs: list[str] = field(default_factory=list)
    keywords: list[str] = field(default_factory=list)
    crossrefs: list[str] = field(default_factory=list)
    source_url: str = ""
    raw_lines: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        if not is_sequence_id(self.id):
            raise ValueError(f"invalid sequence id {self.id!r}")
        for ref in self.crossrefs:
            if not is_sequence_id(ref):
                raise ValueError(f"invalid crossref {ref!r} in {self.id}")

    def term_at(self, index: int) -> int:
        """Term at sequence index ``index`` (offset-aware). IndexError if unscraped."""
        pos = index - self.offset
        if pos < 0 or pos >= len(self.terms):
            raise IndexError(f"{self.id}: index {index} outside scraped range")
        return self.terms[pos]

    def has_index(self, index: int) -> bool:
        return 0 <= index - self.offset < len(self.terms)

    def tagged_line_count(self) -> int:
        return sum(len(v) for v in self.raw_lines.values())


def _parse_terms(payload: str, line_number: int) -> list[int]:
    values = []
    for token in payload.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            values.append(int(token))
        except ValueError:
            raise MalformedLine(f"unparseable integer token {token!r}", line_number) from None
    return values


def parse_internal_format(text: str) -> SequenceEntry:
    """Parse one internal-format record into a SequenceEntry.

    Raises MalformedLine for a tag carrying the wrong id or an unparseable
    integer (with the offending line number), MissingTerms when no %S line
    is present. Comment lines (leading '#') and blank lines are ignored.
    Records without an %O line get offset 0.
    """
    raw_lines: dict[str, list[str]] = {}
    entry_id = None
    term_parts: dict[str, list[tuple[str, int]]] = {t: [] for t in TERM_TAGS}
    name = ""
    offset = 0
    formulas: list[str] = []
    examples: list[str] = []
    programs: list[str] = []
    keywords: list[str] = []
    crossrefs: list[str] = []

    for line_number, line in enumerate(text.splitlines(), start=1):
        stripped = line.rstrip()
        if not stripped or stripped.startswith("#"):
            continue
        m = _TAG_LINE_RE.match(stripped)
        if not m:
            raise MalformedLine(f"not a tagged record line: {stripped!r}", line_number)
        tag, line_id, payload = m.group(1), m.group(2), m.group(3) or ""
        if entry_id is None:
            entry_id = line_id
        elif line_id != entry_id:
            raise MalformedLine(f"tag %{tag} carries id {line_id}, expected {entry_id}", line_number)

        raw_lines.setdefault(tag, []).append(payload)
        if tag in TERM_TAGS:
            term_parts[tag].append((payload, line_number))
        elif tag == "N":
            name = payload
        elif tag == "O":
            first = payload.split(",")[0].strip()
            try:
                offset = int(first)
            except ValueError:
                raise MalformedLine(f"unparseable offset {first!r}", line_number) from None
        elif tag == "F":
            formulas.append(payload)
        elif tag == "e":
            examples.append(payload)
        elif tag == "o":
            programs.append(payload)
        elif tag == "K":
            keywords.extend(k.strip().lower() for k in payload.split(",") if k.strip())
        elif tag == "Y":
            crossrefs.extend(_CROSSREF_RE.findall(payload))
        # %I and unknown tags: preserved in raw_lines only.

    if entry_id is None:
        raise MissingTerms("empty record: no tagged lines")
    if not raw_lines.get("S"):
        raise MissingTerms(f"{entry_id}: no %S line")

    terms: list[int] = []
    for tag in TERM_TAGS:
        for payload, line_number in term_parts[tag]:
            terms.extend(_parse_terms(payload, line_number))
    if not terms:
        raise MissingTerms(f"{entry_id}: %S present but carries no terms")

    return SequenceEntry(
        id=entry_id,
        terms=terms,
        offset=offset,
        name=name,
        formulas=formulas,
        examples=examples,
        programs=programs,
        keywords=keywords,
        crossrefs=crossrefs,
        source_url=OEIS_URL_PREFIX + entry_id,
        raw_lines=raw_lines,
    )


def split_records(text: str) -> list[str]:
    """Split a concatenated internal-format file into per-record chunks.

    Records are separated by blank lines; '#' comment lines are dropped.
    """
    chunks: list[str] = []
    current: list[str] = []
    for line in text.splitlines():
        if line.strip().startswith("#"):
            continue
        if not line.strip():
            if current:
                chunks.append("\n".join(current))
                current = []
            continue
        current.append(line)
    if current:
        chunks.append("\n".join(current))
    return chunks


def parse_records(text: str) -> list[SequenceEntry]:
    """Parse a file of one or more blank-line-separated records."""
    return [parse_internal_format(chunk) for chunk in split_records(text)]


# OEIS wraps term lines at roughly this payload width.
_TERM_LINE_WIDTH = 64

_SERIALIZE_TAG_ORDER = ("I", "S", "T", "U", "N", "F", "e", "o", "Y", "K", "O")


def _wrap_terms(terms: list[int]) -> list[str]:
    """Split a term list into at most three %S/%T/%U payload strings."""
    text = ",".join(str(t) for t in terms)
    lines: list[str] = []
    while len(text) > _TERM_LINE_WIDTH and len(lines) < 2:
        cut = text.rfind(",", 0, _TERM_LINE_WIDTH + 1)
        if cut <= 0:
            break
        lines.append(text[:cut])
        text = text[cut + 1:]
    lines.append(text)
    return lines


def _terms_from_raw(raw_lines: dict[str, list[str]]) -> list[int]:
    terms: list[int] = []
    for tag in TERM_TAGS:
        for payload in raw_lines.get(tag, []):
            for token in payload.split(","):
                token = token.strip()
                if token:
                    terms.append(int(token))
    return terms


def serialize_entry(entry: SequenceEntry) -> str:
    """Render an entry back to internal-format text.

    Raw lines are re-emitted verbatim (in canonical tag order), so
    parse(serialize(parse(t))) equals parse(t) exactly. When the entry's
    terms no longer match its raw term lines (programmatic construction or
    a b-file merge) the term lines are re-synthesized, and missing field
    lines are synthesized from the structured fields.
    """
    effective = {tag: list(payloads) for tag, payloads in entry.raw_lines.items()}
    try:
        raw_terms = _terms_from_raw(effective)
    except ValueError:
        raw_terms = []
    if raw_terms != entry.terms:
        # Entry was built or extended programmatically: synthesize term lines
        # and any field lines the raw map never carried.
        for tag in TERM_TAGS:
            effective.pop(tag, None)
        for tag, seg in zip(TERM_TAGS, _wrap_terms(entry.terms)):
            effective[tag] = [seg]
        if "N" not in effective and entry.name:
            effective["N"] = [entry.name]
        if "O" not in effective and entry.offset != 0:
            effective["O"] = [str(entry.offset)]
        if "F" not in effective and entry.formulas:
            effective["F"] = list(entry.formulas)
        if "e" not in effective and entry.examples:
            effective["e"] = list(entry.examples)
        if "o" not in effective and entry.programs:
            effective["o"] = list(entry.programs)
        if "K" not in effective and entry.keywords:
            effective["K"] = [",".join(entry.keywords)]
        if "Y" not in effective and entry.crossrefs:
            effective["Y"] = ["Cf. " + ", ".join(entry.crossrefs) + "."]

    out: list[str] = []
    for tag in _SERIALIZE_TAG_ORDER:
        for payload in effective.get(tag, []):
            out.append(f"%{tag} {entry.id} {payload}".rstrip())
    for tag, payloads in effective.items():
        if tag in _SERIALIZE_TAG_ORDER:
            continue
        for payload in payloads:
            out.append(f"%{tag} {entry.id} {payload}".rstrip())
    return "\n".join(out) + "\n"


def entry_to_json(entry: SequenceEntry) -> str:
    """One canonical JSON line per entry (the `dump` subcommand format)."""
    record = {
        "id": entry.id,
        "terms": entry.terms,
        "offset": entry.offset,
        "name": entry.name,
        "formulas": entry.formulas,
        "examples": entry.examples,
        "programs": entry.programs,
        "keywords": entry.keywords,
        "crossrefs": entry.crossrefs,
        "source_url": entry.source_url,
        "raw_lines": entry.raw_lines,
    }
    return json.dumps(record, ensure_ascii=False, sort_keys=False)


def entry_from_json(line: str) -> SequenceEntry:
    record = json.loads(line)
    return SequenceEntry(**record)


def parse_bfile(text: str) -> list[BfileEntry]:
    """Parse b-file text into (index, value) pairs.

    Lines are "index value"; '#' comments and blank lines are skipped.
    Indexes must increase by exactly 1 from the first pair onward.
    """
    pairs: list[BfileEntry] = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 2:
            raise MalformedPair(f"expected 'index value', got {stripped!r}", line_number)
        try:
            index, value = int(parts[0]), int(parts[1])
        except ValueError:
            raise MalformedPair(f"unparseable integer in {stripped!r}", line_number) from None
        if pairs and index != pairs[-1].index + 1:
            raise NonContiguousIndex(
                f"line {line_number}: index {index} follows {pairs[-1].index} (must increase by 1)"
            )
        pairs.append(BfileEntry(index=index, value=value))
    return pairs


def merge_bfile(entry: SequenceEntry, pairs: list[BfileEntry]) -> SequenceEntry:
    """Extend an entry's terms with b-file pairs.

    Values on the overlapping index range must match the record's terms and
    the b-file must start at or within the record's range (offset preserved);
    any conflict raises OverlapMismatch and the sequence is treated as
    corrupt downstream. Idempotent: merging the same pairs twice equals once.
    """
    if not pairs:
        raise ValueError("pairs must be non-empty")
    first, last = pairs[0].index, pairs[-1].index
    if first < entry.offset:
        raise OverlapMismatch(
            f"{entry.id}: b-file starts at {first}, before record offset {entry.offset}"
        )
    if first > entry.offset + len(entry.terms):
        raise OverlapMismatch(
            f"{entry.id}: gap between record terms (end {entry.offset + len(entry.terms) - 1}) "
            f"and b-file start {first}"
        )
    for pair in pairs:
        if entry.has_index(pair.index) and entry.term_at(pair.index) != pair.value:
            raise OverlapMismatch(
                f"{entry.id}: b-file value {pair.value} at index {pair.index} "
                f"conflicts with record term {entry.term_at(pair.index)}"
            )
    if last < entry.offset + len(entry.terms):
        return entry  # b-file adds nothing new
    merged = list(entry.terms)
    for pair in pairs:
        pos = pair.index - entry.offset
        if pos == len(merged):
            merged.append(pair.value)
    raw_lines = {k: list(v) for k, v in entry.raw_lines.items()}
    for tag in TERM_TAGS:
        raw_lines.pop(tag, None)
    for tag, seg in zip(TERM_TAGS, _wrap_terms(merged)):
        raw_lines[tag] = [seg]
    return SequenceEntry(
        id=entry.id,
        terms=merged,
        offset=entry.offset,
        name=entry.name,
        formulas=list(entry.formulas),
        examples=list(entry.examples),
        programs=list(entry.programs),
        keywords=list(entry.keywords),
        crossrefs=list(entry.crossrefs),
        source_url=entry.source_url,
        raw_lines=raw_lines,
    )


def fetch_records(ids, out_path, http_get=None, delay_s: float = 1.0):
    """Thin fetch layer: write raw internal-format records for `ids` to disk.

    `http_get` takes a URL and returns response text; defaults to requests.
    A politeness delay separates consecutive fetches. The parser itself only
    ever reads local files, so tests inject a fake `http_get`.
    """
    if http_get is None:
        import requests

        def http_get(url):
            resp = requests.get(url, timeout=30)
            resp.raise_for_status()
            return resp.text

    chunks = []
    for i, seq_id in enumerate(ids):
        if not is_sequence_id(seq_id):
            raise ValueError(f"invalid sequence id {seq_id!r}")
        if i > 0 and delay_s > 0:
            time.sleep(delay_s)
        chunks.append(http_get(f"{OEIS_URL_PREFIX}search?q=id:{seq_id}&fmt=text"))
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("\n\n".join(chunk.strip("\n") for chunk in chunks) + "\n")
    return out_path
