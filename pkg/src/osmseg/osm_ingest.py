"""OSM XML parsing and building footprint extraction."""
from __future__ import annotations

import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import (
    DanglingReference,
    DegenerateFootprint,
    MalformedXml,
    SkippedRelation,
    UnclosedWay,
)
from .geometry import ring_is_simple


@dataclass(frozen=True)
class OsmWay:
    id: int
    node_refs: tuple[int, ...]
    tags: Mapping[str, str] = field(default_factory=dict)

    @property
    def is_closed(self) -> bool:
        return len(self.node_refs) > 1 and self.node_refs[0] == self.node_refs[-1]


@dataclass(frozen=True)
class OsmRelation:
    id: int
    members: tuple[tuple[str, int, str], ...]  # (type, ref, role)
    tags: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class OsmDocument:
    """Nodes keyed by id as (lon, lat), plus ways and relations in file order."""

    nodes: Mapping[int, tuple[float, float]]
    ways: tuple[OsmWay, ...] = ()
    relations: tuple[OsmRelation, ...] = ()

    def __eq__(self, other):
        if not isinstance(other, OsmDocument):
            return NotImplemented
        return (
            dict(self.nodes) == dict(other.nodes)
            and [(w.id, w.node_refs, dict(w.tags)) for w in self.ways]
            == [(w.id, w.node_refs, dict(w.tags)) for w in other.ways]
            and [(r.id, r.members, dict(r.tags)) for r in self.relations]
            == [(r.id, r.members, dict(r.tags)) for r in other.relations]
        )


@dataclass(frozen=True)
class GeoFootprint:
    """A named building perimeter as an open ring of (lon, lat) vertices."""

    name: str
    ring: tuple[tuple[float, float], ...]
    way_id: Optional[int] = None


def _int_attr(elem, key):
    try:
        return int(elem.attrib[key])
    except (KeyError, ValueError) as exc:
        raise MalformedXml(f"<{elem.tag}> has bad or missing {key!r} attribute") from exc


def _tags(elem) -> Mapping[str, str]:
    return MappingProxyType({t.attrib["k"]: t.attrib.get("v", "") for t in elem.findall("tag")})


def parse_osm(xml_text: Union[bytes, str]) -> OsmDocument:
    """Parse an OSM XML extract.

    Raises:
        MalformedXml: the input is not parseable, or an element lacks required attributes.
        DanglingReference: a way references a node not present in the file.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from exc

    nodes: dict[int, tuple[float, float]] = {}
    ways: list[OsmWay] = []
    relations: list[OsmRelation] = []
    for elem in root:
        if elem.tag == "node":
            nid = _int_attr(elem, "id")
            try:
                lon = float(elem.attrib["lon"])
                lat = float(elem.attrib["lat"])
            except (KeyError, ValueError) as exc:
                raise MalformedXml(f"node {nid} has bad coordinates") from exc
            if not (-180.0 <= lon <= 180.0 and -90.0 < lat < 90.0):
                raise MalformedXml(f"node {nid} coordinates out of range: {lon}, {lat}")
            nodes[nid] = (lon, lat)
        elif elem.tag == "way":
            refs = tuple(_int_attr(nd, "ref") for nd in elem.findall("nd"))
            ways.append(OsmWay(_int_attr(elem, "id"), refs, _tags(elem)))
        elif elem.tag == "relation":
            members = tuple(
                (m.attrib.get("type", ""), _int_attr(m, "ref"), m.attrib.get("role", ""))
                for m in elem.findall("member")
            )
            relations.append(OsmRelation(_int_attr(elem, "id"), members, _tags(elem)))

    for way in ways:
        for ref in way.node_refs:
            if ref not in nodes:
                raise DanglingReference(way.id, ref)
    return OsmDocument(MappingProxyType(nodes), tuple(ways), tuple(relations))


def write_osm(doc: OsmDocument, precision: Optional[int] = None) -> bytes:
    """Serialize a document back to OSM XML v0.6 (nodes, ways, relations in order).

    Coordinates are written losslessly unless ``precision`` decimals are given.
    """
    fmt = repr if precision is None else (lambda v: f"{v:.{precision}f}")
    root = ET.Element("osm", version="0.6", generator="osmseg")
    for nid, (lon, lat) in doc.nodes.items():
        ET.SubElement(root, "node", id=str(nid), lat=fmt(lat), lon=fmt(lon))
    for way in doc.ways:
        w = ET.SubElement(root, "way", id=str(way.id))
        for ref in way.node_refs:
            ET.SubElement(w, "nd", ref=str(ref))
        for k, v in way.tags.items():
            ET.SubElement(w, "tag", k=k, v=v)
    for rel in doc.relations:
        r = ET.SubElement(root, "relation", id=str(rel.id))
        for typ, ref, role in rel.members:
            ET.SubElement(r, "member", type=typ, ref=str(ref), role=role)
        for k, v in rel.tags.items():
            ET.SubElement(r, "tag", k=k, v=v)
    ET.indent(root)
    return ET.tostring(root, encoding="utf-8", xml_declaration=True) + b"\n"


WayFilter = Union[None, Sequence[str], Callable[[Mapping[str, str]], bool]]


def _matcher(filter: WayFilter) -> Callable[[Mapping[str, str]], bool]:
    if filter is None:
        return lambda tags: "building" in tags
    if callable(filter):
        return filter
    names = set(filter)
    return lambda tags: tags.get("name") in names


def _footprint(doc: OsmDocument, way: OsmWay) -> GeoFootprint:
    name = way.tags.get("name", f"way {way.id}")
    refs = list(way.node_refs)
    if way.is_closed:
        refs = refs[:-1]
    elif len(refs) >= 3:
        warnings.warn(f"way {way.id} ({name}) is not closed; closing implicitly", UnclosedWay, stacklevel=3)

    ring: list[tuple[float, float]] = []
    for ref in refs:
        pt = doc.nodes[ref]
        if not ring or ring[-1] != pt:
            ring.append(pt)
    while len(ring) > 1 and ring[0] == ring[-1]:
        ring.pop()
    if len(ring) < 3:
        raise DegenerateFootprint(f"way {way.id} ({name}) has {len(ring)} distinct vertices")
    if not ring_is_simple(np.array(ring)):
        raise DegenerateFootprint(f"way {way.id} ({name}) is self-intersecting")
    return GeoFootprint(name, tuple(ring), way.id)


def extract_footprints(
    doc: OsmDocument, filter: WayFilter = None, on_error: str = "raise"
) -> list[GeoFootprint]:
    """Materialize footprints for matching ways, ordered by ascending way id.

    ``filter`` is a list of exact names, a predicate over the tag map, or None
    for "any way carrying a building tag". With ``on_error="skip"`` degenerate
    ways are dropped with a warning instead of raising.
    """
    match = _matcher(filter)
    for rel in doc.relations:
        if match(rel.tags):
            warnings.warn(
                f"relation {rel.id} ({rel.tags.get('type', '?')}) matches the filter; relations are not supported",
                SkippedRelation,
                stacklevel=2,
            )

    out = []
    for way in sorted(doc.ways, key=lambda w: w.id):
        if not match(way.tags):
            continue
        try:
            out.append(_footprint(doc, way))
        except DegenerateFootprint as exc:
            if on_error != "skip":
                raise
            warnings.warn(f"skipping: {exc}", UserWarning, stacklevel=2)
    return out


def footprints_to_json(footprints: Iterable[GeoFootprint]) -> list[dict]:
    return [
        {"name": f.name, "way_id": f.way_id, "ring": [list(v) for v in f.ring]}
        for f in footprints
    ]


def footprints_from_json(data: list[dict]) -> list[GeoFootprint]:
    return [
        GeoFootprint(d["name"], tuple((float(x), float(y)) for x, y in d["ring"]), d.get("way_id"))
        for d in data
    ]
