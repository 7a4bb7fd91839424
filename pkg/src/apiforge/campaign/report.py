"""Campaign report document: build, write atomically, summarize.

Reports are plain JSON with a fixed key order so that identical seeded runs
produce byte-identical files apart from the timing fields.
"""
from __future__ import annotations

import json
import os
import tempfile

from ..errors import IoFailure

TIMING_FIELDS = ("wall_time_ms",)


def build_report(
    config_echo: dict,
    seed: int,
    operations: list[dict],
    coverage_blocks: list[str] | None,
    wall_time_ms: int,
) -> dict:
    totals = {
        "requests": sum(op["requests"] for op in operations),
        "status_2xx": sum(op["status_2xx"] for op in operations),
        "status_4xx": sum(op["status_4xx"] for op in operations),
        "status_5xx": sum(op["status_5xx"] for op in operations),
        "unique_bugs": sum(len(op["bugs"]) for op in operations),
    }
    return {
        "format_version": 1,
        "config": config_echo,
        "seed": seed,
        "operations": operations,
        "totals": totals,
        "coverage_blocks": coverage_blocks,
        "wall_time_ms": wall_time_ms,
    }


def write_report(report: dict, path: str) -> None:
    """Serialize with a stable layout and rename into place."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    try:
        fd, tmp = tempfile.mkstemp(prefix=".report-", dir=directory)
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write report {path}: {exc}") from exc


def load_report(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def strip_timing(report: dict) -> dict:
    out = dict(report)
    for key in TIMING_FIELDS:
        out.pop(key, None)
    return out


def summarize_report(report: dict) -> str:
    lines = []
    cfg = report.get("config", {})
    lines.append(
        f"mode={cfg.get('mode')} target={cfg.get('base_url')} "
        f"seed={report.get('seed')} agent={cfg.get('agent')}"
    )
    lines.append(
        f"{'operation':44s} {'reqs':>5s} {'2xx':>5s} {'4xx':>5s} {'5xx':>5s} {'bugs':>5s}"
    )
    for op in report.get("operations", []):
        name = f"{op['method']} {op['path']}"
        lines.append(
            f"{name:44s} {op['requests']:5d} {op['status_2xx']:5d} "
            f"{op['status_4xx']:5d} {op['status_5xx']:5d} {len(op['bugs']):5d}"
        )
    t = report.get("totals", {})
    lines.append(
        f"{'totals':44s} {t.get('requests', 0):5d} {t.get('status_2xx', 0):5d} "
        f"{t.get('status_4xx', 0):5d} {t.get('status_5xx', 0):5d} "
        f"{t.get('unique_bugs', 0):5d}"
    )
    for op in report.get("operations", []):
        for bug in op["bugs"]:
            fault = f" fault={bug['fault_id']}" if bug.get("fault_id") else ""
            lines.append(
                f"bug {bug['method']} {bug['path']} status={bug['status']} "
                f"sig={bug['signature'][:12]} steps={len(bug['reproduction'])}{fault}"
            )
    blocks = report.get("coverage_blocks")
    if blocks is not None:
        lines.append(f"coverage blocks: {len(blocks)}")
    lines.append(f"wall time: {report.get('wall_time_ms', 0)} ms")
    return "\n".join(lines)
