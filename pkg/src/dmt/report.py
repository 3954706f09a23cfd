"""CSV reports with a fixed column order and a provenance comment line."""

from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, fields

from . import __version__

REPORT_SCHEMA_VERSION = 1
EMPIRICAL_SUP_NOTE = "empirical sup over alternatives (lower bounds the true sup)"


@dataclass(frozen=True)
class ReportRow:
    """One (test, true member, alternative) cell.

    ``rejections`` and ``rate`` always count rejections of the null. For rows
    under an alternative, the acceptance rate is ``1 - rate``. ``gate`` is
    ``PASS``/``FAIL`` when a bound applies to the row and ``-`` otherwise.
    """

    run_id: str
    test_name: str
    regime: str
    b_true_index: int
    alpha: float
    beta: float
    epsilon: float
    m: int
    dict_size: int
    n_reps: int
    rejections: int
    rate: float
    ci_low: float
    ci_high: float
    seed: int
    notes: str
    gate: str = "-"


COLUMNS = tuple(f.name for f in fields(ReportRow))


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def header_comment(config_sha256: str, seed: int) -> str:
    return (
        f"# dmt-report schema={REPORT_SCHEMA_VERSION} version={__version__} "
        f"config_sha256={config_sha256} seed={seed}"
    )


def render_csv(rows, config_sha256: str, seed: int, columns=COLUMNS) -> str:
    """Comment line, header row, then one line per row; LF line endings."""
    buf = io.StringIO()
    buf.write(header_comment(config_sha256, seed) + "\n")
    w = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in (astuple(r) if isinstance(r, ReportRow) else r)])
    return buf.getvalue()


def read_csv(text: str) -> tuple[str, list[dict[str, str]]]:
    """Inverse of :func:`render_csv`: the comment line and the rows as dicts."""
    first, _, body = text.partition("\n")
    return first, list(csv.DictReader(io.StringIO(body)))
