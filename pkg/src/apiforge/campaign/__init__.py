"""Campaign orchestration: training runs, fuzzing runs, dedup, reports."""

from .config import CampaignConfig
from .dedup import BugRecord, bug_signature, dedup, normalize_body
from .report import TIMING_FIELDS, summarize_report, write_report
from .runner import (
    TrainResult,
    attach_fault_ids,
    load_agent,
    replay_requests,
    run_fuzz,
    run_train,
)

__all__ = [
    "CampaignConfig",
    "BugRecord",
    "bug_signature",
    "dedup",
    "normalize_body",
    "write_report",
    "summarize_report",
    "TIMING_FIELDS",
    "run_train",
    "run_fuzz",
    "TrainResult",
    "load_agent",
    "replay_requests",
    "attach_fault_ids",
]
