# runner/compare.py
import logging
from pathlib import Path

import pandas as pd

from evaluation.reports import compare_reports, read_reports

logger = logging.getLogger(__name__)


def _run_name(path: Path) -> str:
    return path.parent.name if path.name == 'metrics.json' else path.name


def compare_runs(paths) -> pd.DataFrame:
    """Comparison table of the runs stored at ``paths`` (run directories or metrics.json files).

    Runs are named after their directory; repeated names get a ``#n`` suffix.
    """
    runs, seen = [], {}
    for path in map(Path, paths):
        name = _run_name(path)
        seen[name] = seen.get(name, 0) + 1
        if seen[name] > 1:
            name = f'{name}#{seen[name]}'
        runs.append((name, read_reports(path)))
        logger.debug("loaded %d reports of run %s from %s", len(runs[-1][1]), name, path)
    return compare_reports(runs)
