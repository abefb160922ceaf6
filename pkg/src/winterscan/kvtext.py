"""Sectioned ``key = value`` text format used by road registries and synthetic specs.

A document is a sequence of sections. Each section starts with a bracketed
header line such as ``[segment]`` and holds ``key = value`` lines. ``#``
starts a comment, blank lines are ignored.
"""
from dataclasses import dataclass, field


@dataclass
class Section:
    name: str
    line: int
    values: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)


class KVSyntaxError(ValueError):
    def __init__(self, message, line):
        super().__init__(message)
        self.line = line


def parse_sections(text):
    """Split ``text`` into a list of :class:`Section` objects.

    Raises KVSyntaxError on key/value lines before the first header,
    lines without ``=``, or duplicate keys inside one section.
    """
    sections = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise KVSyntaxError(f"bad section header {raw.strip()!r}", lineno)
            current = Section(line[1:-1].strip(), lineno)
            sections.append(current)
            continue
        if current is None:
            raise KVSyntaxError("key/value line outside of any section", lineno)
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise KVSyntaxError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if key in current.values:
            raise KVSyntaxError(f"duplicate key {key!r}", lineno)
        current.values[key] = value.strip()
        current.lines[key] = lineno
    return sections
