"""Praat long-format TextGrid parsing and serialization.

Forced aligners emit word and phone alignments as Praat "long" text
TextGrids.  This module parses that grammar into immutable tier/interval
values, validates the timing invariants, and serializes back (round-trip
safe, including Praat's doubled-quote escaping and labels that span
lines).  Short-format and binary TextGrids are rejected.

Point tiers (Praat ``TextTier``) are parsed and round-tripped but carry
``kind="point"``; the word/phone lookup helpers only operate on interval
tiers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import (
    MalformedBody,
    MalformedHeader,
    NonMonotoneIntervals,
    TruncatedFile,
    UnknownTier,
)

# Ordering/bounds comparisons allow this much float fuzz (aligner output
# occasionally has 1-sample jitter at interval joins).
TIME_TOL = 1e-9

# Labels treated as non-speech by default; MFA acoustic models differ, so
# callers may pass their own set.
DEFAULT_SILENCE_LABELS = frozenset({"", "sil", "sp", "spn"})


@dataclass(frozen=True)
class Interval:
    """A labelled time span; ``label`` may be empty (silence)."""

    xmin: float
    xmax: float
    label: str

    @property
    def duration(self) -> float:
        return self.xmax - self.xmin

    @property
    def center(self) -> float:
        return 0.5 * (self.xmin + self.xmax)


@dataclass(frozen=True)
class Tier:
    """An ordered, non-overlapping sequence of intervals.

    ``kind`` is ``"interval"`` for IntervalTiers and ``"point"`` for
    TextTiers; point marks are stored as zero-length intervals.
    """

    name: str
    xmin: float
    xmax: float
    intervals: tuple[Interval, ...]
    kind: str = "interval"


@dataclass(frozen=True)
class TextGrid:
    xmin: float
    xmax: float
    tiers: tuple[Tier, ...] = field(default_factory=tuple)

    def tier(self, name: str) -> Tier:
        for t in self.tiers:
            if t.name == name:
                return t
        raise UnknownTier(f"no tier named {name!r} "
                          f"(have: {[t.name for t in self.tiers]})")


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _check_time(value: float, what: str) -> None:
    if not (value == value and abs(value) != float("inf")):
        raise NonMonotoneIntervals(f"{what} is not finite: {value!r}")
    if value < 0:
        raise NonMonotoneIntervals(f"{what} is negative: {value!r}")


def validate_textgrid(tg: TextGrid) -> None:
    """Raise a typed error if ``tg`` violates any structural invariant."""
    _check_time(tg.xmin, "file xmin")
    _check_time(tg.xmax, "file xmax")
    if tg.xmin > tg.xmax + TIME_TOL:
        raise NonMonotoneIntervals("file xmin > xmax")
    seen: set[str] = set()
    for tier in tg.tiers:
        if tier.name in seen:
            raise MalformedBody(f"duplicate tier name {tier.name!r}")
        seen.add(tier.name)
        _check_time(tier.xmin, f"tier {tier.name!r} xmin")
        _check_time(tier.xmax, f"tier {tier.name!r} xmax")
        if tier.xmin < tg.xmin - TIME_TOL or tier.xmax > tg.xmax + TIME_TOL:
            raise NonMonotoneIntervals(
                f"tier {tier.name!r} extends outside the file time range")
        prev_end = None
        for iv in tier.intervals:
            _check_time(iv.xmin, "interval xmin")
            _check_time(iv.xmax, "interval xmax")
            if iv.xmin > iv.xmax:
                raise NonMonotoneIntervals(
                    f"interval ({iv.xmin}, {iv.xmax}) has xmin > xmax")
            if iv.xmin < tier.xmin - TIME_TOL or iv.xmax > tier.xmax + TIME_TOL:
                raise NonMonotoneIntervals(
                    f"interval ({iv.xmin}, {iv.xmax}) outside tier "
                    f"{tier.name!r} range [{tier.xmin}, {tier.xmax}]")
            if prev_end is not None and prev_end > iv.xmin + TIME_TOL:
                raise NonMonotoneIntervals(
                    f"intervals overlap in tier {tier.name!r}: previous ends "
                    f"at {prev_end}, next starts at {iv.xmin}")
            prev_end = iv.xmax


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_HEADER_1 = 'File type = "ooTextFile"'
_HEADER_2 = 'Object class = "TextGrid"'

_TIERS_RE = re.compile(r"^tiers\? <(exists|absent)>$")
_ITEM_RE = re.compile(r"^item \[(\d*)\]:$")
_INTERVALS_RE = re.compile(r"^intervals \[(\d+)\]:$")
_POINTS_RE = re.compile(r"^points \[(\d+)\]:$")


class _Reader:
    """Line cursor over the normalized file text."""

    def __init__(self, text: str):
        self.lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
        self.pos = 0

    def next_raw(self) -> str | None:
        """Next line verbatim (trailing whitespace preserved), or None at EOF."""
        if self.pos >= len(self.lines):
            return None
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def next_content(self) -> str | None:
        """Next non-blank line, stripped of surrounding whitespace."""
        while True:
            line = self.next_raw()
            if line is None:
                return None
            if line.strip():
                return line.strip()

    def next_content_raw(self) -> str | None:
        """Next non-blank line with only the trailing newline removed."""
        while True:
            line = self.next_raw()
            if line is None:
                return None
            if line.strip():
                return line


def _expect_number(reader: _Reader, key: str) -> float:
    line = reader.next_content()
    if line is None:
        raise TruncatedFile(f"expected '{key} = <number>', got end of file")
    m = re.match(rf"^{re.escape(key)} = (\S+)\s*$", line)
    if not m:
        raise MalformedBody(f"expected '{key} = <number>', got {line!r}")
    try:
        return float(m.group(1))
    except ValueError:
        raise MalformedBody(f"bad number for {key}: {m.group(1)!r}") from None


def _expect_count(reader: _Reader, key: str) -> int:
    line = reader.next_content()
    if line is None:
        raise TruncatedFile(f"expected '{key} = <count>', got end of file")
    m = re.match(rf"^{re.escape(key)} = (\d+)$", line)
    if not m:
        raise MalformedBody(f"expected '{key} = <count>', got {line!r}")
    return int(m.group(1))


def _expect_string(reader: _Reader, key: str) -> str:
    """Parse ``key = "..."`` where the value may contain doubled quotes and
    may continue across lines (embedded newlines in labels)."""
    line = reader.next_content_raw()
    if line is None:
        raise TruncatedFile(f"expected '{key} = \"...\"', got end of file")
    stripped = line.lstrip()
    prefix = f"{key} = "
    if not stripped.startswith(prefix) or not stripped[len(prefix):].startswith('"'):
        raise MalformedBody(f"expected '{key} = \"...\"', got {stripped.strip()!r}")
    chunk = stripped[len(prefix) + 1:]
    out: list[str] = []
    while True:
        i = 0
        n = len(chunk)
        closed = False
        while i < n:
            ch = chunk[i]
            if ch == '"':
                if i + 1 < n and chunk[i + 1] == '"':
                    out.append('"')
                    i += 2
                    continue
                if chunk[i + 1:].strip():
                    raise MalformedBody(
                        f"unexpected content after closing quote: {chunk[i+1:]!r}")
                closed = True
                break
            out.append(ch)
            i += 1
        if closed:
            return "".join(out)
        nxt = reader.next_raw()
        if nxt is None:
            raise TruncatedFile(f"unterminated string value for {key}")
        out.append("\n")
        chunk = nxt


def _expect_block_header(reader: _Reader, regex: re.Pattern, desc: str) -> str:
    line = reader.next_content()
    if line is None:
        raise TruncatedFile(f"expected {desc}, got end of file")
    m = regex.match(line)
    if not m:
        raise MalformedBody(f"expected {desc}, got {line!r}")
    return m.group(1)


def parse_textgrid(text: str) -> TextGrid:
    """Parse the full contents of a long-format TextGrid file.

    Raises :class:`MalformedHeader` if the two-line header is absent (this
    covers short-format and binary files), :class:`TruncatedFile` when
    declared counts exceed the content present, and
    :class:`NonMonotoneIntervals` for timing-invariant violations.
    """
    if text.startswith("﻿"):
        text = text[1:]
    reader = _Reader(text)
    line1 = reader.next_content()
    if line1 != _HEADER_1:
        raise MalformedHeader(f"first header line must be {_HEADER_1!r}, "
                              f"got {line1!r}")
    line2 = reader.next_content()
    if line2 != _HEADER_2:
        raise MalformedHeader(f"second header line must be {_HEADER_2!r}, "
                              f"got {line2!r}")

    xmin = _expect_number(reader, "xmin")
    xmax = _expect_number(reader, "xmax")

    line = reader.next_content()
    if line is None:
        raise TruncatedFile("expected 'tiers? <exists>' line, got end of file")
    m = _TIERS_RE.match(line)
    if not m:
        raise MalformedBody(f"expected 'tiers? <exists|absent>', got {line!r}")
    if m.group(1) == "absent":
        tg = TextGrid(xmin=xmin, xmax=xmax, tiers=())
        validate_textgrid(tg)
        return tg

    n_tiers = _expect_count(reader, "size")
    header = _expect_block_header(reader, _ITEM_RE, "'item []:'")
    if header != "":
        raise MalformedBody("expected 'item []:' before the first tier")

    tiers: list[Tier] = []
    for k in range(1, n_tiers + 1):
        idx = _expect_block_header(reader, _ITEM_RE, f"'item [{k}]:'")
        if idx != str(k):
            raise MalformedBody(f"expected 'item [{k}]:', got index {idx!r}")
        tiers.append(_parse_tier(reader))

    trailing = reader.next_content()
    if trailing is not None:
        raise MalformedBody(f"unexpected content after last tier: {trailing!r}")

    tg = TextGrid(xmin=xmin, xmax=xmax, tiers=tuple(tiers))
    validate_textgrid(tg)
    return tg


def _parse_tier(reader: _Reader) -> Tier:
    klass = _expect_string(reader, "class")
    if klass not in ("IntervalTier", "TextTier"):
        raise MalformedBody(f"unsupported tier class {klass!r}")
    name = _expect_string(reader, "name")
    xmin = _expect_number(reader, "xmin")
    xmax = _expect_number(reader, "xmax")

    if klass == "IntervalTier":
        size = _expect_count(reader, "intervals: size")
        intervals = []
        for j in range(1, size + 1):
            idx = _expect_block_header(reader, _INTERVALS_RE,
                                       f"'intervals [{j}]:'")
            if idx != str(j):
                raise MalformedBody(
                    f"expected 'intervals [{j}]:', got index {idx!r}")
            i_min = _expect_number(reader, "xmin")
            i_max = _expect_number(reader, "xmax")
            label = _expect_string(reader, "text")
            intervals.append(Interval(i_min, i_max, label))
        return Tier(name=name, xmin=xmin, xmax=xmax,
                    intervals=tuple(intervals), kind="interval")

    size = _expect_count(reader, "points: size")
    points = []
    for j in range(1, size + 1):
        idx = _expect_block_header(reader, _POINTS_RE, f"'points [{j}]:'")
        if idx != str(j):
            raise MalformedBody(f"expected 'points [{j}]:', got index {idx!r}")
        number = _expect_number(reader, "number")
        mark = _expect_string(reader, "mark")
        points.append(Interval(number, number, mark))
    return Tier(name=name, xmin=xmin, xmax=xmax,
                intervals=tuple(points), kind="point")


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _fmt_time(x: float) -> str:
    # ">= 6 decimal digits" where that is lossless, full precision otherwise;
    # float() of the result always reproduces x exactly.
    s = f"{x:.6f}"
    if float(s) == x:
        return s
    return repr(x)


def _quote(s: str) -> str:
    return '"' + s.replace('"', '""') + '"'


def serialize_textgrid(tg: TextGrid) -> str:
    """Render as long-format text; ``parse_textgrid`` round-trips the result.

    Labels survive byte-for-byte with one exception inherent to the
    line-oriented format: carriage returns read back as line feeds.
    """
    out: list[str] = [
        _HEADER_1,
        _HEADER_2,
        "",
        f"xmin = {_fmt_time(tg.xmin)}",
        f"xmax = {_fmt_time(tg.xmax)}",
        "tiers? <exists>",
        f"size = {len(tg.tiers)}",
        "item []:",
    ]
    for k, tier in enumerate(tg.tiers, start=1):
        out.append(f"    item [{k}]:")
        if tier.kind == "point":
            out.append('        class = "TextTier"')
            out.append(f"        name = {_quote(tier.name)}")
            out.append(f"        xmin = {_fmt_time(tier.xmin)}")
            out.append(f"        xmax = {_fmt_time(tier.xmax)}")
            out.append(f"        points: size = {len(tier.intervals)}")
            for j, pt in enumerate(tier.intervals, start=1):
                out.append(f"        points [{j}]:")
                out.append(f"            number = {_fmt_time(pt.xmin)}")
                out.append(f"            mark = {_quote(pt.label)}")
        else:
            out.append('        class = "IntervalTier"')
            out.append(f"        name = {_quote(tier.name)}")
            out.append(f"        xmin = {_fmt_time(tier.xmin)}")
            out.append(f"        xmax = {_fmt_time(tier.xmax)}")
            out.append(f"        intervals: size = {len(tier.intervals)}")
            for j, iv in enumerate(tier.intervals, start=1):
                out.append(f"        intervals [{j}]:")
                out.append(f"            xmin = {_fmt_time(iv.xmin)}")
                out.append(f"            xmax = {_fmt_time(iv.xmax)}")
                out.append(f"            text = {_quote(iv.label)}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# file reading and alignment lookups
# ---------------------------------------------------------------------------

def read_textgrid_file(path) -> TextGrid:
    """Read and parse a TextGrid file; UTF-8 only, UTF-16 BOMs rejected."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] in (b"\xfe\xff", b"\xff\xfe"):
        raise MalformedHeader("UTF-16 TextGrid input; transcode to UTF-8 first")
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedHeader(f"not valid UTF-8: {exc}") from None
    return parse_textgrid(text)


def _interval_tier(tg: TextGrid, tier_name: str) -> Tier:
    tier = tg.tier(tier_name)
    if tier.kind != "interval":
        raise UnknownTier(f"tier {tier_name!r} is a point tier, "
                          "not an interval tier")
    return tier


def word_intervals(tg: TextGrid, tier_name: str,
                   silence_labels=DEFAULT_SILENCE_LABELS) -> tuple[Interval, ...]:
    """Non-silence intervals of the named tier, order preserved."""
    tier = _interval_tier(tg, tier_name)
    return tuple(iv for iv in tier.intervals if iv.label not in silence_labels)


def phones_for_word(tg: TextGrid, phone_tier: str, word: Interval,
                    silence_labels=DEFAULT_SILENCE_LABELS) -> tuple[Interval, ...]:
    """Phones whose center time lies in ``[word.xmin, word.xmax)``.

    Center-time half-open containment is robust to 1-sample boundary
    jitter in aligner output.
    """
    tier = _interval_tier(tg, phone_tier)
    return tuple(
        ph for ph in tier.intervals
        if ph.label not in silence_labels
        and word.xmin <= ph.center < word.xmax
    )
