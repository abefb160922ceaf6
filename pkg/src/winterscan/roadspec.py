"""Road cross-section notation and per-segment road metadata.

Cross-sections are written the way Finnish road design documents label them::

    2 x (11.75/7.5) + KA
    (8/7.5)
    (8/7.5) + TK + R(4.5,30)

The figure before the slash is the roadway width of one carriageway (travel
lanes plus shoulders), the figure after it is the combined travel-lane width.
The optional ``R(apron,diameter)`` suffix is this toolkit's own notation for
roundabout truck apron width and diameter.

Widths are held as integer centimetres so that formatting is exact.
"""
import enum
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from pathlib import Path

from .errors import MalformedNotation, MalformedRegistry
from .kvtext import KVSyntaxError, parse_sections


class Separator(enum.Enum):
    NONE = ""
    CENTRAL_AREA = "KA"
    STEEL_GUARDRAIL = "TK"
    CONCRETE_RAILING = "BK"


class RoadClass(enum.Enum):
    STATE = "state"
    MUNICIPAL = "municipal"


def _to_cm(text):
    try:
        value = Decimal(text)
    except InvalidOperation:
        raise MalformedNotation(f"not a decimal width: {text!r}") from None
    if not value.is_finite():
        raise MalformedNotation(f"not a decimal width: {text!r}")
    cm = value * 100
    if cm != cm.to_integral_value():
        raise MalformedNotation(f"width {text!r} finer than centimetre resolution")
    return int(cm)


def _fmt_cm(cm):
    text = format(Decimal(cm) / 100, "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text


@dataclass(frozen=True)
class Roundabout:
    apron_cm: int
    diameter_cm: int

    @property
    def apron_width_m(self):
        return self.apron_cm / 100

    @property
    def diameter_m(self):
        return self.diameter_cm / 100


@dataclass(frozen=True)
class DesignCrossSection:
    """Parsed design cross-section; widths in centimetres."""

    carriageways: int
    roadway_cm: int
    lanes_cm: int
    separator: Separator = Separator.NONE
    lane_count: int = 0
    roundabout: Roundabout | None = None

    def __post_init__(self):
        if self.lane_count == 0:
            # the notation does not carry lane count; assume two-lane carriageways
            object.__setattr__(self, "lane_count", 2 * self.carriageways)
        if self.carriageways not in (1, 2):
            raise MalformedNotation(f"carriageways must be 1 or 2, got {self.carriageways}")
        if not self.lanes_cm > 0:
            raise MalformedNotation("travel lane width must be positive")
        if self.roadway_cm < self.lanes_cm:
            raise MalformedNotation(
                f"roadway width {_fmt_cm(self.roadway_cm)} is smaller than "
                f"lane width {_fmt_cm(self.lanes_cm)}"
            )
        if self.separator is Separator.CENTRAL_AREA and self.carriageways != 2:
            raise MalformedNotation("central area (KA) needs two carriageways")
        if self.lane_count < 1:
            raise MalformedNotation("lane_count must be at least 1")
        if self.roundabout is not None and (
            self.roundabout.apron_cm <= 0 or self.roundabout.diameter_cm <= 0
        ):
            raise MalformedNotation("roundabout apron and diameter must be positive")

    @property
    def roadway_width_m(self):
        return self.roadway_cm / 100

    @property
    def lanes_width_m(self):
        return self.lanes_cm / 100

    def __str__(self):
        return format_cross_section(self)


_DEC = r"(\d+(?:\.\d+)?)"
_NOTATION = re.compile(
    r"(?:(\d+)[xX×])?"
    rf"\({_DEC}/{_DEC}\)"
    r"(?:\+(KA|TK|BK))?"
    rf"(?:\+R\({_DEC},{_DEC}\))?"
)


def parse_cross_section(text, lane_count=0):
    """Parse cross-section notation into a :class:`DesignCrossSection`.

    Whitespace is ignored. ``lane_count`` overrides the default of two lanes
    per carriageway.
    """
    if not text or not text.strip():
        raise MalformedNotation("empty cross-section notation")
    compact = re.sub(r"\s+", "", text)
    m = _NOTATION.fullmatch(compact)
    if m is None:
        raise MalformedNotation(f"cannot parse cross-section notation {text!r}")
    count, roadway, lanes, sep, apron, diameter = m.groups()
    roundabout = None
    if apron is not None:
        roundabout = Roundabout(_to_cm(apron), _to_cm(diameter))
    return DesignCrossSection(
        carriageways=int(count) if count is not None else 1,
        roadway_cm=_to_cm(roadway),
        lanes_cm=_to_cm(lanes),
        separator=Separator(sep or ""),
        lane_count=lane_count,
        roundabout=roundabout,
    )


def format_cross_section(spec):
    text = f"({_fmt_cm(spec.roadway_cm)}/{_fmt_cm(spec.lanes_cm)})"
    if spec.carriageways != 1:
        text = f"{spec.carriageways} x {text}"
    if spec.separator is not Separator.NONE:
        text += f" + {spec.separator.value}"
    if spec.roundabout is not None:
        r = spec.roundabout
        text += f" + R({_fmt_cm(r.apron_cm)},{_fmt_cm(r.diameter_cm)})"
    return text


def design_roadway_width(spec):
    """Roadway width of one carriageway in metres (the pre-slash figure)."""
    return spec.roadway_width_m


@dataclass(frozen=True)
class RoadSegmentRecord:
    name: str
    cross_section: DesignCrossSection
    design_speed_kmh: float
    aadt: int
    heavy_aadt: int
    road_class: RoadClass
    lane_count: int
    # lower bound when the source gives heavy traffic as a range, e.g. 215-430
    heavy_aadt_low: int | None = None

    @property
    def heavy_share(self):
        return self.heavy_aadt / self.aadt if self.aadt else 0.0


_REQUIRED = ("name", "cross_section", "design_speed_kmh", "aadt", "heavy_aadt", "class", "lanes")


def _count(text, key, line, segment):
    try:
        value = int(text.replace(" ", "").replace("_", ""))
    except ValueError:
        raise MalformedRegistry(f"{key} must be an integer, got {text!r}",
                                line=line, segment=segment) from None
    if value < 0:
        raise MalformedRegistry(f"{key} must be non-negative", line=line, segment=segment)
    return value


def _record_from_section(section):
    values = section.values
    lines = section.lines
    name = values.get("name")
    if section.name != "segment":
        raise MalformedRegistry(f"unknown section [{section.name}]", line=section.line)
    for key in _REQUIRED:
        if key not in values:
            raise MalformedRegistry(f"missing key {key!r}", line=section.line, segment=name)
    unknown = set(values) - set(_REQUIRED)
    if unknown:
        key = sorted(unknown)[0]
        raise MalformedRegistry(f"unknown key {key!r}", line=lines[key], segment=name)

    lanes = _count(values["lanes"], "lanes", lines["lanes"], name)
    if lanes < 1:
        raise MalformedRegistry("lanes must be at least 1", line=lines["lanes"], segment=name)
    try:
        cross_section = parse_cross_section(values["cross_section"], lane_count=lanes)
    except MalformedNotation as exc:
        raise MalformedRegistry(str(exc), line=lines["cross_section"], segment=name) from None
    try:
        speed = float(values["design_speed_kmh"])
    except ValueError:
        speed = float("nan")
    if not speed > 0:
        raise MalformedRegistry("design_speed_kmh must be a positive number",
                                line=lines["design_speed_kmh"], segment=name)
    try:
        road_class = RoadClass(values["class"].lower())
    except ValueError:
        raise MalformedRegistry(f"class must be 'state' or 'municipal', got {values['class']!r}",
                                line=lines["class"], segment=name) from None

    aadt = _count(values["aadt"], "aadt", lines["aadt"], name)
    low, dash, high = values["heavy_aadt"].partition("-")
    heavy_line = lines["heavy_aadt"]
    if dash:
        heavy_low = _count(low, "heavy_aadt", heavy_line, name)
        heavy = _count(high, "heavy_aadt", heavy_line, name)
        if heavy_low > heavy:
            raise MalformedRegistry("heavy_aadt range is reversed", line=heavy_line, segment=name)
    else:
        heavy = _count(low, "heavy_aadt", heavy_line, name)
        heavy_low = None
    if heavy > aadt:
        raise MalformedRegistry("heavy_aadt exceeds aadt", line=heavy_line, segment=name)

    return RoadSegmentRecord(
        name=name,
        cross_section=cross_section,
        design_speed_kmh=speed,
        aadt=aadt,
        heavy_aadt=heavy,
        road_class=road_class,
        lane_count=lanes,
        heavy_aadt_low=heavy_low,
    )


def parse_road_registry(text):
    try:
        sections = parse_sections(text)
    except KVSyntaxError as exc:
        raise MalformedRegistry(str(exc), line=exc.line) from None
    return [_record_from_section(s) for s in sections]


def load_road_registry(source):
    """Load a registry from a path or an open text stream."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text(encoding="utf-8")
    return parse_road_registry(text)


def default_registry_path():
    return Path(__file__).with_name("data") / "roads.reg"
