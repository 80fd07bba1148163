from deskdet.metrics.ap import (
    average_precision,
    greedy_match,
    interpolated_precision,
    match_detections,
    precision_recall,
)
from deskdet.metrics.summary import ClassMetrics, MetricsReport, map_summary, render_report, write_report

__all__ = [
    "ClassMetrics",
    "MetricsReport",
    "average_precision",
    "greedy_match",
    "interpolated_precision",
    "map_summary",
    "match_detections",
    "precision_recall",
    "render_report",
    "write_report",
]
