"""
Report writers

Every scenario writes plain files into its output directory:
- summary.csv with a fixed header per scenario
- trace.jsonl with one JSON record per line
- extra CSVs (samples, rounds, roc, overhead)
Numbers are pre-formatted by the producers so reruns are byte-identical.
"""

import csv
import logging
import os
from typing import Dict, Iterable, List, Sequence

logger = logging.getLogger(__name__)


def output_path(output_dir: str, filename: str) -> str:
    os.makedirs(output_dir, exist_ok=True)
    return os.path.join(output_dir, filename)


def export_to_csv(rows: Sequence[Dict], output_file: str, fieldnames: List[str]) -> int:
    """
    Write rows to a CSV file with a fixed column order.

    Args:
        rows: Row dictionaries keyed by field name
        output_file: Path to the CSV file
        fieldnames: Column order; written even when there are no rows

    Returns:
        Number of rows written

    Raises:
        OSError: If the file cannot be written
    """
    with open(output_file, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator='\n')
        writer.writeheader()
        writer.writerows(rows)
    logger.info("Wrote %d rows to %s", len(rows), output_file)
    return len(rows)


def export_to_jsonl(lines: Iterable[str], output_file: str) -> int:
    """Write pre-serialized JSON records, one per line."""
    count = 0
    with open(output_file, 'w', encoding='utf-8', newline='\n') as f:
        for line in lines:
            f.write(line)
            f.write('\n')
            count += 1
    logger.info("Wrote %d records to %s", count, output_file)
    return count


class RowCollector:
    """Accumulates rows for one CSV; passed around as a row sink."""

    def __init__(self, fieldnames: List[str]):
        self.fieldnames = fieldnames
        self.rows: List[Dict] = []

    def __call__(self, row: Dict) -> None:
        self.rows.append(row)

    def write(self, output_file: str) -> int:
        return export_to_csv(self.rows, output_file, self.fieldnames)
