"""Result tables: one row per (method, parameter).

Two formats share the same columns.  ``table`` is aligned for reading;
``delimited`` is tab-separated with a documented header and parses back via
:func:`parse_report`.  All numbers are formatted to 3 decimals; the scores
column holds the three retained seeds' win rates (or mean returns for
environments without a win condition) in ascending order.
"""

from __future__ import annotations

COLUMNS = ("method", "parameter", "retained", "scores", "win_rate",
           "mean_return", "attacked_per_total", "config_hash", "degraded")

_HEADER_DOC = """\
# experiment report: one row per (method, parameter)
# columns (tab-separated): method, parameter, retained, scores, win_rate, \
mean_return, attacked_per_total, config_hash, degraded
# retained: indices of the three seeds kept after dropping the best and worst
# scores: retained win rates (mean returns when there is no win condition), \
ascending, 3 decimals
# attacked_per_total: per attacked agent "attacked/total" mean steps over \
the retained seeds, 3 decimals; "-" when nothing was aggregated"""


def _row_of(record) -> dict[str, str]:
    a = record.aggregate
    if a is None:
        retained = scores = win = ret = attacked = "-"
    else:
        retained = ",".join(map(str, a.retained))
        scores = ";".join(f"{s:.3f}" for s in a.retained_scores)
        win = "-" if a.win_rate is None else f"{a.win_rate:.3f}"
        ret = f"{a.mean_return:.3f}"
        attacked = ";".join(f"{x:.3f}/{a.total_steps:.3f}"
                            for x in a.attacked_steps) or "-"
    return {
        "method": record.method,
        "parameter": record.parameter,
        "retained": retained,
        "scores": scores,
        "win_rate": win,
        "mean_return": ret,
        "attacked_per_total": attacked,
        "config_hash": record.config_hash,
        "degraded": "yes" if record.degraded else "no",
    }


def emit_report(records, format: str = "table") -> str:
    """Render records; ``delimited`` output round-trips through
    :func:`parse_report` at 3-decimal precision."""
    if format not in ("table", "delimited"):
        raise ValueError(f"unknown report format {format!r}")
    rows = [_row_of(r) for r in records]
    if format == "delimited":
        lines = [_HEADER_DOC, "\t".join(COLUMNS)]
        lines.extend("\t".join(row[c] for c in COLUMNS) for row in rows)
        return "\n".join(lines) + "\n"

    widths = {c: max(len(c), *(len(row[c]) for row in rows)) if rows else len(c)
              for c in COLUMNS}
    header = "  ".join(c.ljust(widths[c]) for c in COLUMNS)
    ruler = "  ".join("-" * widths[c] for c in COLUMNS)
    lines = [header, ruler]
    lines.extend("  ".join(row[c].ljust(widths[c]) for c in COLUMNS).rstrip()
                 for row in rows)
    return "\n".join(lines) + "\n"


def _parse_opt_float(text: str) -> float | None:
    return None if text == "-" else float(text)


def parse_report(text: str) -> list[dict]:
    """Parse delimited output back into typed row dictionaries."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError("report has no column header")
    names = tuple(lines[0].split("\t"))
    if names != COLUMNS:
        raise ValueError(f"unexpected report columns {names}")
    rows = []
    for line in lines[1:]:
        parts = line.split("\t")
        if len(parts) != len(COLUMNS):
            raise ValueError(f"malformed report row {line!r}")
        raw = dict(zip(COLUMNS, parts))
        attacked = []
        if raw["attacked_per_total"] != "-":
            for pair in raw["attacked_per_total"].split(";"):
                a, _, t = pair.partition("/")
                attacked.append((float(a), float(t)))
        rows.append({
            "method": raw["method"],
            "parameter": raw["parameter"],
            "retained": () if raw["retained"] == "-" else
                        tuple(int(v) for v in raw["retained"].split(",")),
            "scores": () if raw["scores"] == "-" else
                      tuple(float(v) for v in raw["scores"].split(";")),
            "win_rate": _parse_opt_float(raw["win_rate"]),
            "mean_return": _parse_opt_float(raw["mean_return"]),
            "attacked_per_total": tuple(attacked),
            "config_hash": raw["config_hash"],
            "degraded": raw["degraded"] == "yes",
        })
    return rows
