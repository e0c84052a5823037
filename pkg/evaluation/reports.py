# evaluation/reports.py
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from evaluation.exceptions import MetricError
from evaluation.serializers import MetricReportSerializer

logger = logging.getLogger(__name__)


def write_reports(reports, out_dir) -> tuple:
    """metrics.csv with one row per report and metrics.json with the window values."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out_dir / 'metrics.csv', out_dir / 'metrics.json'
    pd.DataFrame([report.row() for report in reports]).to_csv(csv_path, index=False, float_format='%.9g')
    data = MetricReportSerializer(reports, many=True).data
    json_path.write_text(json.dumps(data, indent=2, sort_keys=True) + '\n')
    return csv_path, json_path


def read_reports(path) -> list:
    """Reports from a metrics.json, or from the run directory holding one."""
    path = Path(path)
    if path.is_dir():
        path = path / 'metrics.json'
    if not path.exists():
        raise MetricError(f"no metrics report at {path}")
    serializer = MetricReportSerializer(data=json.loads(path.read_text()), many=True)
    if not serializer.is_valid():
        raise MetricError(f"{path} is not a metrics report: {serializer.errors}")
    return serializer.save()


def compare_reports(runs) -> pd.DataFrame:
    """Side-by-side means of ``(name, reports)`` runs with percent deltas against the first run.

    Metrics missing from a run are left as NaN.
    """
    runs = list(runs)
    if len(runs) < 2:
        raise MetricError("comparison needs at least two runs")
    columns = {}
    units = {}
    for name, reports in runs:
        columns[name] = {report.key: report.mean for report in reports}
        units.update({report.key: report.units for report in reports})
    table = pd.DataFrame(columns)
    table = table.loc[sorted(table.index)]
    baseline = runs[0][0]
    for name, _ in runs[1:]:
        with np.errstate(divide='ignore', invalid='ignore'):
            table[f'delta_{name}_%'] = (table[name] - table[baseline]) / table[baseline].abs() * 100.0
    table.insert(0, 'units', pd.Series(units))
    gaps = int(table[[name for name, _ in runs]].isna().sum().sum())
    if gaps:
        logger.warning("%d metric values missing across the compared runs", gaps)
    return table
