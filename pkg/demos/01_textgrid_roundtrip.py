"""
Reading, validating and writing Praat TextGrid alignments
=========================================================

Builds an alignment in code, writes it in the long text format, parses
it back, and shows what the parser does with broken input.
"""

from msfser import (
    Interval,
    TextGrid,
    Tier,
    parse_textgrid,
    serialize_textgrid,
    word_intervals,
)
from msfser.errors import MalformedHeader, NonMonotoneIntervals, TruncatedFile

# An alignment is a set of tiers over one time axis.  Interval tiers
# partition the axis; gaps get empty labels.  Labels can hold anything,
# including quotes and newlines.
grid = TextGrid(xmin=0.0, xmax=1.2, tiers=(
    Tier(name="words", xmin=0.0, xmax=1.2, intervals=(
        Interval(0.0, 0.25, ""),
        Interval(0.25, 0.55, "hello"),
        Interval(0.55, 0.90, 'say "hi"'),
        Interval(0.90, 1.2, ""),
    )),
    Tier(name="notes", xmin=0.0, xmax=1.2, intervals=(
        Interval(0.40, 0.40, "beep"),
    ), kind="point"),
))

text = serialize_textgrid(grid)
print("serialized form, first lines:")
print("\n".join(text.splitlines()[:8]))
print("...")

# The round trip is structural equality, not just similar numbers.
back = parse_textgrid(text)
assert back == grid
print("\nround trip gives back an equal object:", back == grid)

# Silence-labelled and empty intervals are dropped by the word lookup.
print("\nspoken words:", [iv.label for iv in word_intervals(back, "words")])

# Malformed input raises a typed error instead of returning junk.
for description, mangle in [
    ("wrong header", lambda t: t.replace("ooTextFile", "ooBinaryFile")),
    ("cut off mid-tier", lambda t: t[: len(t) // 2]),
    ("overlapping interval",
     lambda t: t.replace("xmin = 0.250000", "xmin = 0.150000", 1)),
]:
    try:
        parse_textgrid(mangle(text))
        print(f"{description:>20}: unexpectedly parsed")
    except (MalformedHeader, TruncatedFile, NonMonotoneIntervals) as exc:
        print(f"{description:>20}: {type(exc).__name__}")
