"""Black-box bug deduplication via normalized response signatures.

Two 5XX responses are the same bug when they come from the same operation
with the same status and their bodies match after masking volatile content
(decimal runs, long hex runs, UUIDs) and whitespace. Validated against the
lab's ground-truth fault ids in the test suite rather than assumed exact.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

_UUID_RE = re.compile(
    r"[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}"
)
_HEX_RE = re.compile(r"[0-9a-f]{8,}")
_NUM_RE = re.compile(r"\d+")
_WS_RE = re.compile(r"\s+")


def normalize_body(body: bytes | str) -> str:
    text = body.decode("utf-8", errors="replace") if isinstance(body, bytes) else body
    text = text.lower()
    text = _UUID_RE.sub("#", text)
    text = _HEX_RE.sub("#", text)
    text = _NUM_RE.sub("#", text)
    text = _WS_RE.sub(" ", text)
    return text.strip()


def bug_signature(method: str, path: str, status: int, body: bytes | str) -> str:
    payload = f"{method} {path}|{status}|{normalize_body(body)}"
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class BugRecord:
    method: str
    path: str
    status: int
    signature: str
    first_seen: int  # global request index within the run
    reproduction: list[dict] = field(default_factory=list)
    fault_id: str | None = None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "path": self.path,
            "status": self.status,
            "signature": self.signature,
            "first_seen": self.first_seen,
            "fault_id": self.fault_id,
            "reproduction": self.reproduction,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BugRecord":
        return cls(
            method=data["method"],
            path=data["path"],
            status=int(data["status"]),
            signature=data["signature"],
            first_seen=int(data["first_seen"]),
            reproduction=list(data.get("reproduction", [])),
            fault_id=data.get("fault_id"),
        )


def dedup(candidates: list[BugRecord]) -> list[BugRecord]:
    """Keep the first occurrence of each signature, in first-seen order."""
    seen: set[str] = set()
    out: list[BugRecord] = []
    for bug in sorted(candidates, key=lambda b: b.first_seen):
        if bug.signature in seen:
            continue
        seen.add(bug.signature)
        out.append(bug)
    return out
