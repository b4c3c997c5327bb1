"""Serialization of run reports and replay transcripts.

Formats
-------
json-lines
    One ``{"record": "trial", ...}`` object per trial with the fields of
    :data:`TRIAL_FIELDS` in order, then one ``{"record": "aggregate", ...}``
    object holding the version stamp, aggregate statistics and config echo.
csv
    Header row :data:`TRIAL_FIELDS`, one row per trial. Missing values are
    empty cells.
human
    Fixed-width table for reading in a terminal.

Measured floats are written with 12 significant digits. The config echo is
written at full precision so that it re-parses to an identical config.
"""
from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .config import basis_string
from .experiment import AGGREGATED_METRICS, TRIAL_FIELDS, RunReport
from .protocols.record import NO_BIT, SessionRecord

FLOAT_DIGITS = 12

REPLAY_FIELDS = (
    "slot",
    "alice_bit",
    "alice_basis",
    "eve_basis",
    "eve_bit",
    "forced_error",
    "bob_basis",
    "bob_outcome",
    "basis_match",
    "alice_key_bit",
    "bob_key_bit",
)

SIFTED_QBER_LABEL = "sifted QBER"
AGGREGATE_LABEL = "aggregate error rate (discarded + erroneous slots / all slots)"


def _clean(value: Any, digits: Optional[int] = FLOAT_DIGITS) -> Any:
    """Plain-Python value with floats rounded to ``digits`` significant digits."""
    if isinstance(value, dict):
        return {k: _clean(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v, digits) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(f"{value:.{digits}g}") if digits else value
    return value


def _dumps(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, allow_nan=False)


def _cell(value: Any) -> str:
    value = _clean(value)
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.{FLOAT_DIGITS}g}"
    return str(value)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(row.get(k)) for k in header])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# run reports


def _fmt(value: Any, spec: str = ".4f") -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return format(value, spec)
    return str(value)


def _human_report(report: RunReport) -> str:
    cfg = report.config
    ch, adv = cfg["channel"], cfg["adversary"]
    lines = [
        f"qkdsim {report.version}  protocol={cfg['protocol']}  slots={cfg['n_slots']}  "
        f"trials={cfg['trials']}  seed={cfg['seed']}",
        f"channel: flip={ch['flip_probability']} loss={ch['loss_probability']} source={ch['source_mode']}"
        + (f" mu={ch['mean_photon_number']}" if ch["mean_photon_number"] is not None else ""),
        f"adversary: {adv['strategy']}",
        f"decision: abort if {cfg['decision']['metric']} > {cfg['decision']['threshold']}",
        "",
        f"{'trial':>5}  {'sift':>7}  {'sQBER':>7}  {'aggr':>7}  {'S':>8}  {'key rate':>9}  decision",
    ]
    for t in report.trials:
        lines.append(
            f"{t['trial']:>5}  {_fmt(t['sift_fraction']):>7}  {_fmt(t['qber']):>7}  "
            f"{_fmt(t['aggregate_error_rate']):>7}  {_fmt(t['chsh_s']):>8}  "
            f"{_fmt(t['final_key_rate'], '.5f'):>9}  {t['decision']}"
            + (f" ({t['abort_reason']})" if t["abort_reason"] else "")
        )
    agg = report.aggregate
    labels = {
        "sift_fraction": "sift fraction",
        "qber": SIFTED_QBER_LABEL,
        "qber_estimate": "sampled QBER estimate",
        "aggregate_error_rate": AGGREGATE_LABEL,
        "chsh_s": "CHSH S",
        "final_key_rate": "final key rate (bits/slot)",
    }
    lines.append("")
    for key in AGGREGATED_METRICS:
        mean, std = agg[f"{key}_mean"], agg[f"{key}_std"]
        if mean is None:
            continue
        lines.append(f"{labels[key]}: {mean:.6f} +/- {std:.6f}")
    lines.append(f"key established in {agg['n_continue']}/{agg['n_trials']} trials; aborted {agg['n_abort']}")
    return "\n".join(lines) + "\n"


def emit_report(report: RunReport, fmt: str) -> str:
    """Serialize a :class:`RunReport` as json-lines, csv or human text."""
    if fmt == "json-lines":
        lines = [_dumps(_clean({"record": "trial", **t})) for t in report.trials]
        tail = {"record": "aggregate", "version": report.version, **_clean(report.aggregate)}
        tail["config"] = _clean(report.config, digits=None)
        lines.append(_dumps(tail))
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        return _csv_text(TRIAL_FIELDS, report.trials)
    if fmt == "human":
        return _human_report(report)
    raise ValueError(f"unknown format {fmt!r}")


# ---------------------------------------------------------------------------
# replay transcripts


def replay_rows(record: SessionRecord) -> list[dict[str, Any]]:
    """Per-slot transcript of a replayed BB84 session."""
    n = record.n_slots
    eve_bases = record.public.get("eve_bases")
    errors = set(int(s) for s in record.public.get("error_slots", ()))
    sifted_pos = {int(s): k for k, s in enumerate(record.sifted_indices)}
    rows = []
    for i in range(n):
        eb = None if eve_bases is None or eve_bases[i] < 0 else int(eve_bases[i])
        eve_bit = None
        if record.eve_bits is not None and record.eve_bits[i] != NO_BIT:
            eve_bit = int(record.eve_bits[i])
        detected = bool(record.detected[i])
        k = sifted_pos.get(i)
        rows.append(
            {
                "slot": i,
                "alice_bit": int(record.alice_bits[i]),
                "alice_basis": basis_string([record.alice_bases[i]]),
                "eve_basis": None if eb is None else basis_string([eb]),
                "eve_bit": eve_bit,
                "forced_error": i in errors,
                "bob_basis": basis_string([record.bob_bases[i]]),
                "bob_outcome": int(record.bob_outcomes[i]) if detected else None,
                "basis_match": ("C" if record.alice_bases[i] == record.bob_bases[i] else "W") if detected else None,
                "alice_key_bit": None if k is None else int(record.sifted_key_a[k]),
                "bob_key_bit": None if k is None else int(record.sifted_key_b[k]),
            }
        )
    return rows


def replay_summary(record: SessionRecord) -> dict[str, Any]:
    s = record.stats
    n_correct = s["n_sifted"] - s["n_errors"]
    return {
        "n_slots": s["n_slots"],
        "n_sifted": s["n_sifted"],
        "n_errors": s["n_errors"],
        "n_correct": n_correct,
        "sift_fraction": s["sift_fraction"],
        "qber": s["qber"],
        "aggregate_error_rate": s["aggregate_error_rate"],
        "aggregate_fraction": f"{s['n_slots'] - n_correct}/{s['n_slots']}",
        "decision_metric": s.get("decision_metric"),
        "threshold": s.get("threshold"),
        "decision": s.get("decision"),
    }


def _human_replay(record: SessionRecord) -> str:
    rows = replay_rows(record)
    has_eve = any(r["eve_basis"] is not None for r in rows)

    def line(label: str, key: str, mark=None) -> str:
        cells = []
        for r in rows:
            v = r[key]
            if mark is not None:
                v = mark(v)
            cells.append("-" if v is None else str(v))
        return f"{label:<22}" + " ".join(f"{c:>2}" for c in cells)

    out = [line("slot", "slot")]
    out.append(line("Alice bit", "alice_bit"))
    out.append(line("Alice basis", "alice_basis"))
    if has_eve:
        out.append(line("Eve basis", "eve_basis"))
        out.append(line("Eve bit", "eve_bit"))
    out.append(line("forced error", "forced_error", lambda v: "E" if v else "."))
    out.append(line("Bob basis", "bob_basis"))
    out.append(line("Bob outcome", "bob_outcome"))
    out.append(line("basis check", "basis_match"))
    out.append(line("Alice sifted key", "alice_key_bit"))
    out.append(line("Bob sifted key", "bob_key_bit"))
    summ = replay_summary(record)
    qber = summ["qber"]
    out += [
        "",
        f"sifted bits: {summ['n_sifted']}  errors: {summ['n_errors']}  sift fraction: {_fmt(summ['sift_fraction'])}",
        f"{SIFTED_QBER_LABEL}: {_fmt(qber)}",
        f"{AGGREGATE_LABEL}: {summ['aggregate_fraction']} = {_fmt(summ['aggregate_error_rate'])}",
        f"decision ({summ['decision_metric']} > {summ['threshold']} aborts): {summ['decision']}",
    ]
    return "\n".join(out) + "\n"


def emit_replay(record: SessionRecord, fmt: str) -> str:
    """Serialize a replay transcript (per-slot rows plus a summary)."""
    if fmt == "json-lines":
        lines = [_dumps(_clean({"record": "slot", **r})) for r in replay_rows(record)]
        lines.append(_dumps(_clean({"record": "summary", **replay_summary(record)})))
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        return _csv_text(REPLAY_FIELDS, replay_rows(record))
    if fmt == "human":
        return _human_replay(record)
    raise ValueError(f"unknown format {fmt!r}")


def write_output(text: str, out: Optional[Union[str, Path]]) -> None:
    """Write to ``out``, or stdout when ``out`` is None. Raises OSError if unwritable."""
    if out is None:
        sys.stdout.write(text)
        return
    Path(out).write_text(text)
