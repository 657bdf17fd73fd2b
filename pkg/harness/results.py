import csv
from dataclasses import dataclass, field
from typing import Optional

from django.utils import timezone

CSV_LINE_END = '\r\n'


def format_cell(value):
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, '.9g')
    return str(value)


@dataclass
class SweepResult:
    """Rows of one experiment plus the metadata that regenerates them."""
    experiment: str
    columns: list
    rows: list
    metadata: dict
    passed: Optional[bool] = None
    mismatches: list = field(default_factory=list)

    def metadata_lines(self):
        lines = [f'# {key}={self.metadata[key]}' for key in ('experiment', 'version', 'seed')]
        lines.extend(f'# config.{key}={value}' for key, value in sorted(self.metadata['config'].items()))
        return lines

    def write_csv(self, stream, reproducible=False):
        for line in self.metadata_lines():
            stream.write(line + CSV_LINE_END)
        if not reproducible:
            stream.write(f'# generated_at={timezone.now().isoformat()}' + CSV_LINE_END)
        writer = csv.writer(stream, lineterminator=CSV_LINE_END)
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([format_cell(value) for value in row])
