import json
import statistics
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import REGISTERED_IOU, ADJUSTED_R12_IOU, square
from osmseg.errors import EmptyInput
from osmseg.evaluation import (
    BuildingMetrics,
    ReportConfig,
    aggregate,
    evaluate_building,
    parse_report,
    polygons_from_json,
    polygons_to_json,
    read_metrics,
    render_report,
)

FIXTURES = Path(__file__).parent / "fixtures"


def metrics(values):
    return [BuildingMetrics(f"b{k}", v) for k, v in enumerate(values)]


def test_evaluate_identical():
    m = evaluate_building(square(name="A"), square(name="A"))
    assert (m.name, m.iou, m.centroid_dist) == ("A", 1.0, 0.0)


def test_evaluate_disjoint():
    assert evaluate_building(square(), square(4, 0)).iou == 0.0


def test_evaluate_half_offset():
    m = evaluate_building(square(0.5), square())
    assert m.iou == pytest.approx(1 / 3, abs=1e-12)
    assert m.centroid_dist == pytest.approx(0.5, abs=1e-12)


def test_metric_validation():
    with pytest.raises(ValueError):
        BuildingMetrics("x", 1.5)
    with pytest.raises(ValueError):
        BuildingMetrics("x", 0.5, -1.0)


def test_registered_aggregates():
    rep = aggregate(metrics(REGISTERED_IOU))
    assert rep.mean_iou == pytest.approx(0.567, abs=0.001)
    assert rep.median_iou == pytest.approx(0.607, abs=0.001)
    assert rep.mean_dist is None


def test_adjusted_r12_aggregates():
    rep = aggregate(metrics(ADJUSTED_R12_IOU))
    assert rep.mean_iou == pytest.approx(0.791, abs=0.001)
    assert rep.median_iou == pytest.approx(0.787, abs=0.001)


def test_single_element():
    rep = aggregate([BuildingMetrics("a", 0.42, 3.0)])
    assert rep.mean_iou == rep.median_iou == 0.42
    assert rep.mean_dist == rep.median_dist == 3.0


def test_even_median_is_midpoint():
    assert aggregate(metrics([0.1, 0.2, 0.6, 0.9])).median_iou == pytest.approx(0.4)


def test_empty():
    with pytest.raises(EmptyInput):
        aggregate([])


def _report():
    ms = [BuildingMetrics("Chapel", 0.6231, 4.25), BuildingMetrics("O'Reilly, annex", 0.7278, 1.0 / 3)]
    return aggregate(ms, ReportConfig(12.0, 0.8, 1.0, 3))


@pytest.mark.parametrize("fmt", ["json", "csv"])
def test_round_trip(fmt):
    rep = _report()
    assert parse_report(render_report(rep, fmt), fmt) == rep


def test_round_trip_without_config_or_distances():
    rep = aggregate(metrics(REGISTERED_IOU))
    for fmt in ("json", "csv"):
        assert parse_report(render_report(rep, fmt), fmt) == rep


def test_csv_rows():
    text = render_report(_report(), "csv").decode()
    data_lines = [line for line in text.splitlines() if not line.startswith("#")]
    # header plus one row per building; aggregates ride on '#' lines
    assert len(data_lines) == 2 + 1
    assert data_lines[0] == "name,iou,centroid_dist"
    assert any(line.startswith("#MEAN,") for line in text.splitlines())
    assert any(line.startswith("#MEDIAN,") for line in text.splitlines())


def test_json_aggregates_recompute():
    doc = json.loads(render_report(_report(), "json"))
    ious = [b["iou"] for b in doc["buildings"]]
    dists = [b["centroid_dist"] for b in doc["buildings"]]
    assert doc["mean_iou"] == pytest.approx(statistics.fmean(ious), abs=1e-9)
    assert doc["median_iou"] == pytest.approx(statistics.median(ious), abs=1e-9)
    assert doc["mean_dist"] == pytest.approx(statistics.fmean(dists), abs=1e-9)
    assert doc["config"] == {"radius": 12.0, "step": 0.8, "cell_size": 1.0, "min_points": 3}


def test_render_is_deterministic():
    assert render_report(_report(), "json") == render_report(_report(), "json")


def test_read_metrics_fixture():
    rows = read_metrics((FIXTURES / "registered_iou.csv").read_bytes())
    assert tuple(r.iou for r in rows) == REGISTERED_IOU
    assert rows[0].name == "Chapel"
    assert all(r.centroid_dist is None for r in rows)


def test_read_metrics_json():
    rows = read_metrics(json.dumps([{"name": "a", "iou": 0.5, "centroid_dist": 1.0}]), "json")
    assert rows == [BuildingMetrics("a", 0.5, 1.0)]


def test_polygon_json_round_trip():
    polys = [square(0, 0, 2, "A"), square(5, 5, 1, "B")]
    again = polygons_from_json(json.loads(json.dumps(polygons_to_json(polys))))
    assert [p.name for p in again] == ["A", "B"]
    assert all((p.ring == q.ring).all() for p, q in zip(polys, again))


unit = st.floats(0.0, 1.0, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.lists(unit, min_size=1, max_size=40), st.randoms(use_true_random=False))
def test_aggregates_permutation_invariant(values, rnd):
    rep = aggregate(metrics(values))
    shuffled = list(values)
    rnd.shuffle(shuffled)
    rev = aggregate(metrics(values[::-1]))
    perm = aggregate(metrics(shuffled))
    assert rep.median_iou == rev.median_iou == perm.median_iou
    assert rep.mean_iou == rev.mean_iou == perm.mean_iou


@settings(max_examples=200, deadline=None)
@given(st.lists(unit, min_size=2, max_size=40).filter(lambda v: len(v) % 2 == 0))
def test_even_median_between_middle_order_statistics(values):
    s = sorted(values)
    n = len(s)
    med = aggregate(metrics(values)).median_iou
    assert s[n // 2 - 1] <= med <= s[n // 2]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(unit, st.floats(0, 100)), min_size=1, max_size=20), st.sampled_from(["json", "csv"]))
def test_report_round_trip_property(rows, fmt):
    rep = aggregate([BuildingMetrics(f"b{k}", i, d) for k, (i, d) in enumerate(rows)])
    back = parse_report(render_report(rep, fmt), fmt)
    assert back == rep
    assert back.mean_iou == statistics.fmean(m.iou for m in back.buildings)
