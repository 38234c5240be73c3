"""Label algebra for rate-bounded timing information flow control.

A label pairs a set of *content tags* (which users' bits may be mixed into
an object's state) with a map of *timing tags* (which users' information may
leak through the timing of events on the object, and at what maximum rate).
Rates are exact rationals in bits per simulated tick, with a distinguished
infinity for "unbounded"; all comparisons are exact, never floating point.

The flow order, join, declassification and the pacing downgrade defined here
are pure functions over immutable values, safe to share freely.
"""

from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping, Optional, Tuple, Union


class LabelParseError(ValueError):
    """Malformed label/frequency/capability text; carries the offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


@functools.total_ordering
@dataclass(frozen=True)
class Frequency:
    """Exact information rate in bits per simulated tick.

    Stored in lowest terms; ``denominator == 0`` encodes the single
    canonical infinity (numerator forced to 1). The order is total with
    infinity greatest.
    """

    numerator: int
    denominator: int = 1

    def __post_init__(self) -> None:
        num, den = self.numerator, self.denominator
        if not isinstance(num, int) or not isinstance(den, int):
            raise ValueError("frequency parts must be integers")
        if den == 0:
            object.__setattr__(self, "numerator", 1)
            return
        if den < 0 or num < 0:
            raise ValueError("frequency must be non-negative with positive denominator")
        g = math.gcd(num, den)
        if g > 1:
            object.__setattr__(self, "numerator", num // g)
            object.__setattr__(self, "denominator", den // g)

    @property
    def is_infinite(self) -> bool:
        return self.denominator == 0

    def as_fraction(self):
        from fractions import Fraction

        if self.is_infinite:
            raise ValueError("infinite frequency has no finite value")
        return Fraction(self.numerator, self.denominator)

    def __lt__(self, other: "Frequency") -> bool:
        if not isinstance(other, Frequency):
            return NotImplemented
        if self.is_infinite:
            return False
        if other.is_infinite:
            return True
        return self.numerator * other.denominator < other.numerator * self.denominator

    def __str__(self) -> str:
        if self.is_infinite:
            return "inf"
        if self.denominator == 1:
            return str(self.numerator)
        return f"{self.numerator}/{self.denominator}"

    def __repr__(self) -> str:
        return f"Frequency({self})"

    @classmethod
    def parse(cls, text: str, offset: int = 0) -> "Frequency":
        """Parse ``inf``, a decimal integer, or ``NUM/DEN``."""
        if text == "inf":
            return INFINITY
        m = re.fullmatch(r"(\d+)(?:/(\d+))?", text)
        if not m:
            raise LabelParseError(f"bad frequency {text!r}", offset)
        num = int(m.group(1))
        den = int(m.group(2)) if m.group(2) else 1
        if den == 0:
            raise LabelParseError("zero denominator", offset)
        return cls(num, den)


INFINITY = Frequency(1, 0)
ZERO = Frequency(0)

# Tag ids must stay clear of the label grammar's punctuation.
_TAG_RE = re.compile(r"[A-Za-z0-9_]+\Z")


def _check_tag(tag: str) -> str:
    if not isinstance(tag, str) or not _TAG_RE.match(tag):
        raise ValueError(f"bad user tag {tag!r}: need [A-Za-z0-9_]+")
    return tag


class Label:
    """Immutable pair of content-tag set and per-user timing-tag map.

    At most one timing entry per user; constructing with duplicates keeps
    the maximum frequency, so taint never silently shrinks.
    """

    __slots__ = ("_content", "_timing", "_hash")

    def __init__(
        self,
        content: Iterable[str] = (),
        timing: Union[Mapping[str, Frequency], Iterable[Tuple[str, Frequency]]] = (),
    ):
        self._content = frozenset(_check_tag(t) for t in content)
        merged: dict = {}
        items = timing.items() if isinstance(timing, Mapping) else timing
        for user, freq in items:
            _check_tag(user)
            if not isinstance(freq, Frequency):
                raise ValueError(f"timing entry for {user!r} is not a Frequency")
            if user not in merged or merged[user] < freq:
                merged[user] = freq
        self._timing = dict(sorted(merged.items()))
        self._hash = hash((self._content, tuple(self._timing.items())))

    @property
    def content(self) -> frozenset:
        return self._content

    @property
    def timing(self) -> Mapping[str, Frequency]:
        return MappingProxyType(self._timing)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Label):
            return NotImplemented
        return self._content == other._content and self._timing == other._timing

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Label.parse({str(self)!r})"

    # -- the flow order and its join --------------------------------------

    def flows_to(self, other: "Label") -> bool:
        """True iff information labeled ``self`` may move to ``other``.

        Content must be a subset; every timing entry must be present in the
        destination at an equal or higher frequency.
        """
        if not self._content <= other._content:
            return False
        for user, freq in self._timing.items():
            bound = other._timing.get(user)
            if bound is None or bound < freq:
                return False
        return True

    def join(self, other: "Label") -> "Label":
        """Least upper bound: content union, pointwise max of timing."""
        timing = dict(self._timing)
        for user, freq in other._timing.items():
            if user not in timing or timing[user] < freq:
                timing[user] = freq
        return Label(self._content | other._content, timing)

    # -- transforms --------------------------------------------------------

    def lift_to_timing(self) -> "Label":
        """Convert to pure timing taint: content tags become unbounded
        timing tags, existing timing entries are kept (pointwise max)."""
        timing = dict(self._timing)
        for user in self._content:
            timing[user] = INFINITY
        return Label((), timing)

    def pace_down(self, limit: Frequency) -> "Label":
        """Cap every timing entry at ``limit`` (the pacer downgrade).

        Content is unchanged. ``limit`` must be finite: a pacer has a real
        tick rate.
        """
        if limit.is_infinite:
            raise ValueError("pacer frequency must be finite")
        timing = {u: (limit if limit < f else f) for u, f in self._timing.items()}
        return Label(self._content, timing)

    def declassify(self, caps: "CapabilitySet") -> "Label":
        """Smallest label reachable by applying every held capability.

        A content-strength capability for U removes U's content tag and any
        timing tag; a timing capability at limit f removes U's timing tag
        only when its frequency is at most f. Missing capabilities leave
        tags in place.
        """
        content = frozenset(u for u in self._content if not caps.removes_content(u))
        timing = {}
        for user, freq in self._timing.items():
            strength = caps.strength(user)
            if strength is not None and strength >= freq:
                continue
            timing[user] = freq
        return Label(content, timing)

    # -- serialization -----------------------------------------------------

    def __str__(self) -> str:
        content = ",".join(sorted(self._content)) or "-"
        timing = ",".join(f"{u}:{f}" for u, f in self._timing.items()) or "-"
        return "{" + content + "/" + timing + "}"

    canonical = __str__

    @classmethod
    def parse(cls, text: str) -> "Label":
        """Inverse of ``str``; raises LabelParseError with a position."""
        if not text or text[0] != "{":
            raise LabelParseError("expected '{'", 0)
        if text[-1] != "}":
            raise LabelParseError("expected '}'", max(len(text) - 1, 0))
        body = text[1:-1]
        content_part, sep, timing_part = body.partition("/")
        if not sep:
            raise LabelParseError("expected '/' separator", 1)
        content = []
        pos = 1
        if content_part != "-":
            for piece in content_part.split(","):
                if not _TAG_RE.match(piece):
                    raise LabelParseError(f"bad content tag {piece!r}", pos)
                content.append(piece)
                pos += len(piece) + 1
        timing = []
        pos = 2 + len(content_part)
        if timing_part != "-":
            for piece in timing_part.split(","):
                user, sep, freq_text = piece.partition(":")
                if not sep or not _TAG_RE.match(user):
                    raise LabelParseError(f"bad timing tag {piece!r}", pos)
                timing.append((user, Frequency.parse(freq_text, pos + len(user) + 1)))
                pos += len(piece) + 1
        return cls(content, timing)


EMPTY_LABEL = Label()


@dataclass(frozen=True)
class Capability:
    """Authority to strip one user's tags before a flow.

    ``limit is None`` is the content declassifier: it removes the user's
    content tag and any timing tag. A finite ``limit`` removes only timing
    tags with frequency at most ``limit``; an infinite ``limit`` behaves
    exactly like the content declassifier while remaining a distinct value.
    """

    user: str
    limit: Optional[Frequency] = None

    def __post_init__(self) -> None:
        _check_tag(self.user)

    @property
    def is_content(self) -> bool:
        return self.limit is None

    @property
    def strength(self) -> Frequency:
        return INFINITY if self.limit is None else self.limit

    @property
    def removes_content(self) -> bool:
        return self.limit is None or self.limit.is_infinite

    def apply(self, label: Label) -> Label:
        """Explicit single-capability use (mostly a test surface)."""
        return label.declassify(CapabilitySet((self,)))

    def __str__(self) -> str:
        if self.limit is None:
            return f"{self.user}-"
        return f"{self.user}-:{self.limit}"

    @classmethod
    def parse(cls, text: str) -> "Capability":
        m = re.fullmatch(r"([A-Za-z0-9_]+)-(?::(.+))?", text)
        if not m:
            raise LabelParseError(f"bad capability {text!r}", 0)
        limit = Frequency.parse(m.group(2), len(m.group(1)) + 2) if m.group(2) else None
        return cls(m.group(1), limit)


class CapabilitySet:
    """Redundancy-free set of capabilities, at most one per user.

    Construction keeps only the strongest capability per user; a content
    declassifier subsumes every timing one for the same user.
    """

    __slots__ = ("_caps",)

    def __init__(self, caps: Iterable[Capability] = ()):
        best: dict = {}
        for cap in caps:
            cur = best.get(cap.user)
            if cur is None or cap.strength > cur.strength or (
                cap.strength == cur.strength and cap.is_content and not cur.is_content
            ):
                best[cap.user] = cap
        self._caps = dict(sorted(best.items()))

    def strength(self, user: str) -> Optional[Frequency]:
        """Max timing frequency this set can scrub for ``user``; None if none."""
        cap = self._caps.get(user)
        return cap.strength if cap is not None else None

    def removes_content(self, user: str) -> bool:
        cap = self._caps.get(user)
        return cap is not None and cap.removes_content

    def __iter__(self):
        return iter(self._caps.values())

    def __len__(self) -> int:
        return len(self._caps)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CapabilitySet):
            return NotImplemented
        return self._caps == other._caps

    def __hash__(self) -> int:
        return hash(tuple(self._caps.items()))

    def __repr__(self) -> str:
        return f"CapabilitySet({sorted(map(str, self))})"


EMPTY_CAPS = CapabilitySet()
