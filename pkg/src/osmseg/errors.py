"""Exception and warning types raised across the package."""


class OsmSegError(Exception):
    """Base class for all hard errors."""


# osm ingest
class MalformedXml(OsmSegError):
    pass


class DanglingReference(OsmSegError):
    def __init__(self, way_id, node_id):
        self.way_id = way_id
        self.node_id = node_id
        super().__init__(f"way {way_id} references missing node {node_id}")


class DegenerateFootprint(OsmSegError):
    pass


# projection
class LatitudeOutOfRange(OsmSegError):
    pass


class NoConvergence(OsmSegError):
    pass


# cloud ingest
class UnsupportedFormat(OsmSegError):
    pass


class MalformedRecord(OsmSegError):
    def __init__(self, line_no, message="malformed record"):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class EmptyCloud(OsmSegError):
    pass


# geometry
class InvalidPolygon(OsmSegError):
    pass


class NumericalDegeneracy(OsmSegError):
    pass


# registration
class InsufficientPairs(OsmSegError):
    pass


class CollinearSources(OsmSegError):
    pass


# adjustment / evaluation
class WindowTooSmall(OsmSegError):
    pass


class EmptyInput(OsmSegError):
    pass


class SkippedRelation(UserWarning):
    pass


class UnclosedWay(UserWarning):
    pass


class AllPointsRemoved(UserWarning):
    pass
