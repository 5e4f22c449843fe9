"""Grant and publication records: parsing, collaborative merging, and linkage.

Canonical interchange is JSON lines.  ``grants.jsonl`` rows carry ``award_id``,
``title``, ``abstract``, ``amount``, ``program_codes`` and ``start_year``;
``pubs.jsonl`` rows carry ``pub_id``, ``title``, ``year`` and ``award_ids``.
NSF API responses and tab-delimited Web of Science exports are adapted into
the same records.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation
from typing import IO, Iterable

log = logging.getLogger(__name__)

GRANT_FORMATS = ("canonical-jsonl", "nsf-api-json", "csv")
PUB_FORMATS = ("canonical-jsonl", "wos-tab-delimited")

AWARD_ID_RE = re.compile(r"^\d{7}$")
_AWARD_IN_TEXT_RE = re.compile(r"(?<![0-9])([0-9]{7})(?![0-9])")
_ATTACHED_PREFIX_RE = re.compile(r"([A-Za-z]+)-?$")
# NSF directorate/division codes that may be glued to an award number ("AST-1615960")
NSF_PREFIXES = frozenset("""
    NSF AST PHY DMS CHE DMR OAC ACI CCF CNS IIS DGE DUE DRL HRD EHR EAR OCE AGS ATM OPP PLR ANT ARC
    GEO MPS CISE ENG SBE BIO DEB IOS MCB DBI EF EEC ECCS CBET CMMI SES BCS SMA OISE OIA EPS ITR TIP
    ITE DMI IBN EIA
""".split())
_WS_RE = re.compile(r"\s+")


class RecordError(ValueError):
    """A malformed input record; the message names the record and field."""


class LinkError(ValueError):
    pass


def collapse_ws(text) -> str:
    return _WS_RE.sub(" ", str(text or "")).strip()


def round_dollars(value) -> int:
    """Whole dollars, halves rounded up."""
    if isinstance(value, bool):
        raise ValueError("boolean is not an amount")
    if isinstance(value, int):
        return value
    text = str(value).strip().replace(",", "").lstrip("$")
    if not text:
        raise ValueError("empty amount")
    try:
        d = Decimal(text)
    except InvalidOperation:
        raise ValueError(f"not a number: {value!r}") from None
    if not d.is_finite():
        raise ValueError(f"not a finite amount: {value!r}")
    return int(d.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def normalize_award_id(value) -> str:
    """Seven-digit award number; prefixes like ``AST-`` are stripped, zeros kept."""
    text = str(value).strip()
    m = re.fullmatch(r"(?:[A-Za-z]+[- ]?)?#?\s*(\d{1,7})", text)
    if not m:
        raise ValueError(f"not an NSF award number: {value!r}")
    return m.group(1).zfill(7)


@dataclass
class GrantRecord:
    grant_key: str
    award_ids: list[str]
    title: str
    abstract: str
    dollars_awarded: int
    program_codes: set[str] = field(default_factory=set)
    start_year: int | None = None

    def __post_init__(self):
        if self.dollars_awarded < 0:
            raise ValueError(f"grant {self.grant_key}: negative dollars_awarded")
        if not self.award_ids:
            raise ValueError(f"grant {self.grant_key}: no award ids")
        if len(set(self.award_ids)) != len(self.award_ids):
            raise ValueError(f"grant {self.grant_key}: repeated award ids")
        for a in self.award_ids:
            if not AWARD_ID_RE.match(a):
                raise ValueError(f"grant {self.grant_key}: malformed award id {a!r}")

    @property
    def merge_key(self) -> tuple[str, str]:
        return collapse_ws(self.title).casefold(), collapse_ws(self.abstract).casefold()

    def to_json(self) -> dict:
        return {
            "grant_key": self.grant_key,
            "award_ids": list(self.award_ids),
            "title": self.title,
            "abstract": self.abstract,
            "amount": self.dollars_awarded,
            "program_codes": sorted(self.program_codes),
            "start_year": self.start_year,
        }


@dataclass
class PublicationRecord:
    pub_key: str
    title: str
    year: int | None
    acknowledged_award_ids: list[str]

    def __post_init__(self):
        if len(set(self.acknowledged_award_ids)) != len(self.acknowledged_award_ids):
            raise ValueError(f"publication {self.pub_key}: repeated award ids")

    def to_json(self) -> dict:
        return {
            "pub_id": self.pub_key,
            "title": self.title,
            "year": self.year,
            "award_ids": list(self.acknowledged_award_ids),
        }


@dataclass
class LinkTable:
    links: dict[str, set[str]]
    unmatched_pub_keys: set[str]

    def pubs_for(self, grant_key: str) -> set[str]:
        try:
            return self.links[grant_key]
        except KeyError:
            raise LinkError(f"unknown grant_key {grant_key!r}") from None

    @property
    def linked_pub_keys(self) -> set[str]:
        out = set()
        for pubs in self.links.values():
            out |= pubs
        return out

    def to_json(self) -> dict:
        return {
            "links": {g: sorted(p) for g, p in self.links.items()},
            "unmatched_pub_keys": sorted(self.unmatched_pub_keys),
        }

    @classmethod
    def from_json(cls, data: dict) -> "LinkTable":
        return cls({g: set(p) for g, p in data["links"].items()}, set(data["unmatched_pub_keys"]))


def _read_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    elif isinstance(source, str):
        return source
    else:
        data = source.read()
        if isinstance(data, str):
            return data
    try:
        return data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise RecordError(f"input is not valid UTF-8: {exc}") from exc


def _optional_year(value, where: str) -> int | None:
    if value in (None, ""):
        return None
    try:
        return int(str(value).strip())
    except ValueError:
        raise RecordError(f"{where}: field 'year': not an integer: {value!r}") from None


def _grant_from_fields(where: str, award, title, abstract, amount, codes, year) -> GrantRecord:
    if isinstance(award, list) and not award:
        raise RecordError(f"{where}: field 'award_id': empty list")
    try:
        if isinstance(award, list):
            award_ids = [normalize_award_id(a) for a in award]
        else:
            award_ids = [normalize_award_id(award)]
    except ValueError as exc:
        raise RecordError(f"{where}: field 'award_id': {exc}") from None
    try:
        dollars = round_dollars(amount)
    except ValueError as exc:
        raise RecordError(f"{where}: field 'amount': {exc}") from None
    if dollars < 0:
        raise RecordError(f"{where}: field 'amount': negative amount {amount!r}")
    if codes is None:
        codes = []
    elif isinstance(codes, str):
        codes = [c for c in re.split(r"[;,|]", codes)]
    elif not isinstance(codes, list):
        raise RecordError(f"{where}: field 'program_codes': expected a list, got {type(codes).__name__}")
    start_year = _optional_year(year, where)
    try:
        return GrantRecord(
            grant_key=award_ids[0],
            award_ids=list(dict.fromkeys(award_ids)),
            title=collapse_ws(title),
            abstract=collapse_ws(abstract),
            dollars_awarded=dollars,
            program_codes={collapse_ws(c) for c in codes if collapse_ws(c)},
            start_year=start_year,
        )
    except ValueError as exc:
        raise RecordError(f"{where}: {exc}") from None


def _parse_canonical_grants(text: str) -> list[GrantRecord]:
    grants = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        where = f"line {lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordError(f"{where}: invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise RecordError(f"{where}: expected a JSON object")
        award = obj.get("award_ids", obj.get("award_id"))
        for name, value in (("award_id", award), ("amount", obj.get("amount"))):
            if value is None:
                raise RecordError(f"{where}: field '{name}' is missing")
        grant = _grant_from_fields(where, award, obj.get("title", ""), obj.get("abstract", ""),
                                   obj["amount"], obj.get("program_codes"), obj.get("start_year"))
        if obj.get("grant_key"):
            grant.grant_key = str(obj["grant_key"])
        grants.append(grant)
    return grants


def _nsf_year(award: dict):
    for key in ("startDate", "date"):
        value = award.get(key)
        if value:
            m = re.search(r"(\d{4})\s*$", str(value))
            if m:
                return int(m.group(1))
    return None


def _nsf_awards(data) -> list[dict]:
    if isinstance(data, list):
        awards = []
        for page in data:
            awards.extend(_nsf_awards(page))
        return awards
    if isinstance(data, dict):
        if "response" in data:
            return list((data.get("response") or {}).get("award") or [])
        if "award" in data:
            return list(data["award"] or [])
    raise RecordError("nsf-api-json: expected an object with response.award or a list of pages")


def _parse_nsf_grants(text: str) -> list[GrantRecord]:
    if not text.strip():
        return []
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RecordError(f"nsf-api-json: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    grants = []
    for i, aw in enumerate(_nsf_awards(data)):
        where = f"record {i}"
        if not isinstance(aw, dict):
            raise RecordError(f"{where}: expected an object")
        if aw.get("id") in (None, ""):
            raise RecordError(f"{where}: field 'id' is missing")
        amount = aw.get("fundsObligatedAmt")
        if amount in (None, ""):
            amount = aw.get("estimatedTotalAmt")
        if amount in (None, ""):
            raise RecordError(f"{where}: field 'fundsObligatedAmt' is missing")
        codes = aw.get("progEleCode") or []
        if isinstance(codes, str):
            codes = [codes]
        grants.append(_grant_from_fields(where, aw["id"], aw.get("title", ""), aw.get("abstractText", ""),
                                         amount, codes, _nsf_year(aw)))
    return grants


def _parse_csv_grants(text: str) -> list[GrantRecord]:
    if not text.strip():
        return []
    reader = csv.DictReader(io.StringIO(text))
    missing = {"award_id", "amount"} - set(reader.fieldnames or [])
    if missing:
        raise RecordError(f"csv header: missing column(s) {sorted(missing)}")
    grants = []
    for row in reader:
        where = f"line {reader.line_num}"
        grants.append(_grant_from_fields(where, row["award_id"], row.get("title", ""), row.get("abstract", ""),
                                         row["amount"], row.get("program_codes") or "", row.get("start_year")))
    return grants


def parse_grants(source, format: str = "canonical-jsonl") -> list[GrantRecord]:
    """One (unmerged) GrantRecord per award in ``source`` (bytes, text or a stream)."""
    if format not in GRANT_FORMATS:
        raise ValueError(f"unknown grant format {format!r}; expected one of {GRANT_FORMATS}")
    text = _read_text(source)
    if format == "canonical-jsonl":
        return _parse_canonical_grants(text)
    if format == "nsf-api-json":
        return _parse_nsf_grants(text)
    return _parse_csv_grants(text)


def merge_collaborative(grants: Iterable[GrantRecord]) -> list[GrantRecord]:
    """Collapse records sharing (title, abstract) into one, summing dollars.

    Titles and abstracts are compared after whitespace collapsing and case
    folding.  The merged record keeps the first record's key, text and start
    year, and the position of its first appearance.
    """
    merged: dict[tuple[str, str], GrantRecord] = {}
    for g in grants:
        key = g.merge_key
        if key not in merged:
            merged[key] = GrantRecord(
                grant_key=g.grant_key,
                award_ids=list(g.award_ids),
                title=g.title,
                abstract=g.abstract,
                dollars_awarded=g.dollars_awarded,
                program_codes=set(g.program_codes),
                start_year=g.start_year,
            )
            continue
        m = merged[key]
        m.dollars_awarded += g.dollars_awarded
        m.award_ids.extend(a for a in g.award_ids if a not in m.award_ids)
        m.program_codes |= g.program_codes
    return list(merged.values())


def extract_award_ids(funding_text: str) -> list[str]:
    """Distinct seven-digit award numbers in order of first occurrence.

    A number counts only if it is not part of a longer digit run.  Letters glued
    to it must be an NSF division code, so ``AST-1615960``, ``NSF1615960`` and
    ``#1615960`` all yield ``1615960`` while ``DE-SC0011726`` yields nothing.
    """
    text = funding_text or ""
    seen = {}
    for m in _AWARD_IN_TEXT_RE.finditer(text):
        glued = _ATTACHED_PREFIX_RE.search(text, 0, m.start())
        if glued and glued.end() == m.start() and glued.group(1).upper() not in NSF_PREFIXES:
            continue
        seen.setdefault(m.group(1), None)
    return list(seen)


def _parse_canonical_pubs(text: str) -> list[PublicationRecord]:
    pubs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        where = f"line {lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordError(f"{where}: invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise RecordError(f"{where}: expected a JSON object")
        if obj.get("pub_id") in (None, ""):
            raise RecordError(f"{where}: field 'pub_id' is missing")
        raw_ids = obj.get("award_ids") or []
        if not isinstance(raw_ids, list):
            raise RecordError(f"{where}: field 'award_ids': expected a list")
        try:
            ids = list(dict.fromkeys(normalize_award_id(a) for a in raw_ids))
        except ValueError as exc:
            raise RecordError(f"{where}: field 'award_ids': {exc}") from None
        pubs.append(PublicationRecord(str(obj["pub_id"]), collapse_ws(obj.get("title", "")),
                                      _optional_year(obj.get("year"), where), ids))
    return pubs


def _parse_wos(text: str, funding_column: str, warnings: list | None) -> list[PublicationRecord]:
    if not text.strip():
        return []
    reader = csv.DictReader(io.StringIO(text), delimiter="\t", quoting=csv.QUOTE_NONE)
    columns = set(reader.fieldnames or [])
    id_col = "UT" if "UT" in columns else None
    has_funding = funding_column in columns
    pubs, n_missing = [], 0
    for i, row in enumerate(reader):
        where = f"line {reader.line_num}"
        key = (row.get(id_col) or "").strip() if id_col else ""
        if not key:
            key = f"row{i + 1}"
        funding = row.get(funding_column) if has_funding else None
        if funding is None:
            n_missing += 1
            ids = []
        else:
            ids = extract_award_ids(funding)
        pubs.append(PublicationRecord(key, collapse_ws(row.get("TI", "")),
                                      _optional_year(row.get("PY"), where), ids))
    if n_missing:
        msg = f"{n_missing} row(s) lack funding column {funding_column!r}; kept with no acknowledgments"
        log.warning(msg)
        if warnings is not None:
            warnings.append(msg)
    return pubs


def parse_publications(source, format: str = "canonical-jsonl", *, funding_column: str = "FU",
                       warnings: list | None = None) -> list[PublicationRecord]:
    """One PublicationRecord per row.

    For tab-delimited Web of Science exports the record key comes from ``UT``,
    title from ``TI``, year from ``PY`` and acknowledged awards from the
    funding column.  Rows without that column are kept and counted in
    ``warnings``.
    """
    if format not in PUB_FORMATS:
        raise ValueError(f"unknown publication format {format!r}; expected one of {PUB_FORMATS}")
    text = _read_text(source)
    if format == "canonical-jsonl":
        return _parse_canonical_pubs(text)
    return _parse_wos(text, funding_column, warnings)


def link_publications(grants: list[GrantRecord], pubs: list[PublicationRecord]) -> LinkTable:
    """Attach each publication to every grant owning one of its acknowledged awards."""
    links: dict[str, set[str]] = {}
    owner: dict[str, str] = {}
    for g in grants:
        if g.grant_key in links:
            raise LinkError(f"duplicate grant_key {g.grant_key!r}")
        links[g.grant_key] = set()
        for a in g.award_ids:
            owner.setdefault(a, g.grant_key)
    unmatched = set()
    for p in pubs:
        hits = {owner[a] for a in p.acknowledged_award_ids if a in owner}
        for g in hits:
            links[g].add(p.pub_key)
        if not hits:
            unmatched.add(p.pub_key)
    return LinkTable(links, unmatched)


def write_jsonl(records, stream: IO[str]) -> None:
    for r in records:
        stream.write(json.dumps(r.to_json(), ensure_ascii=False, sort_keys=True) + "\n")
