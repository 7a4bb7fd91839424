"""The 23-action mutation space over an episode-local working request.

Every episode starts from a request template; each step applies one numbered
action to the working copy and the (possibly unchanged) request is rendered
and sent. Actions that cannot apply in the current state report
applied=False without touching the request.
"""
from __future__ import annotations

import copy
import json
import re
import urllib.parse
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .ingest import (
    ParameterSpec,
    RequestTemplate,
    ValuePool,
    default_value,
    value_kind,
)

ACTION_NAMES = {
    1: "refresh-token",
    2: "switch-token",
    3: "next-parameter",
    4: "change-type",
    5: "duplicate-value",
    6: "remove-parameter",
    7: "append-ext-txt",
    8: "append-ext-pdf",
    9: "append-ext-doc",
    10: "append-related",
    11: "swap-method",
    12: "add-related-parameter",
    13: "append-star",
    14: "append-dot-star",
    15: "append-percent",
    16: "increment-int",
    17: "decrement-int",
    18: "set-admin-string",
    19: "set-minus-one",
    20: "set-big-int",
    21: "set-empty-string",
    22: "set-related-value",
    23: "set-admin-flag",
}
NUM_ACTIONS = 23
BODY_METHODS = ("POST", "PUT", "PATCH")

_INT_RE = re.compile(r"^[+-]?\d+$")


@dataclass
class LiveParam:
    spec: ParameterSpec
    value: Any


@dataclass
class MutationStep:
    step: int
    action: int
    applied: bool


@dataclass
class WorkingRequest:
    template: RequestTemplate
    params: list[LiveParam]
    method: str
    cursor: int = 0
    token_slot: str = "primary"
    mutation_log: list[MutationStep] = field(default_factory=list)

    @property
    def current(self) -> LiveParam | None:
        if not self.params:
            return None
        return self.params[self.cursor]

    def param_names(self) -> set[str]:
        return {p.spec.name for p in self.params}


@dataclass(frozen=True)
class ConcreteHttpRequest:
    method: str
    url: str
    headers: tuple[tuple[str, str], ...]
    body: str | None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "url": self.url,
            "headers": [list(h) for h in self.headers],
            "body": self.body,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConcreteHttpRequest":
        return cls(
            method=data["method"],
            url=data["url"],
            headers=tuple((str(n), str(v)) for n, v in data.get("headers", [])),
            body=data.get("body"),
        )


def reset_episode(template: RequestTemplate) -> WorkingRequest:
    """Fresh working copy of a template at the start of an episode."""
    params = [
        LiveParam(spec=p, value=copy.deepcopy(template.initial_values[p.name]))
        for p in template.operation.parameters
        if p.name in template.initial_values
    ]
    return WorkingRequest(
        template=template, params=params, method=template.operation.method
    )


def string_form(value: Any) -> str:
    """Stable textual form of a value for appends and URL placement."""
    if isinstance(value, str):
        return value
    return json.dumps(value, separators=(",", ":"), sort_keys=False)


def _parse_int(value: Any) -> int | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return value
    if isinstance(value, str) and _INT_RE.match(value.strip() or "x"):
        return int(value)
    return None


def _cast_value(kind: str, old: Any, rng: np.random.Generator) -> Any:
    if kind == "integer":
        return int(rng.integers(0, 1001))
    if kind == "string":
        return ""
    if kind == "boolean":
        return True
    if kind == "array":
        return [old]
    if kind == "object":
        return {"value": old}
    raise ValueError(kind)


def _related_candidates(w: WorkingRequest, pool: ValuePool) -> list:
    cp = w.current
    if cp is None:
        return []
    present = w.param_names()
    return [p for p in pool.related_pairs(cp.spec.name) if p.key not in present]


def _synthetic_spec(name: str, location: str, value: Any) -> ParameterSpec:
    return ParameterSpec(
        name=name,
        location=location,
        value_type=value_kind(value),
        required=location == "path",
    )


def apply_action(
    w: WorkingRequest,
    action: int,
    pool: ValuePool,
    session,
    rng: np.random.Generator,
) -> tuple[WorkingRequest, bool]:
    """Apply one numbered action, returning the new request and whether the
    action had an effect. The step always proceeds either way.

    `session` only needs try_refresh() and has_alternate(); see
    httpexec.AuthSession.
    """
    if not 1 <= action <= NUM_ACTIONS:
        raise ValueError(f"action id {action} out of range")
    w = copy.deepcopy(w)
    cp = w.current
    applied = False

    if action == 1:
        applied = bool(session.try_refresh()) if session is not None else False
    elif action == 2:
        if session is not None and session.has_alternate():
            w.token_slot = "alternate" if w.token_slot == "primary" else "primary"
            applied = True
    elif action == 3:
        if w.params:
            w.cursor = (w.cursor + 1) % len(w.params)
            applied = True
    elif action == 4:
        if cp is not None:
            kinds = [
                k
                for k in ("integer", "string", "boolean", "array", "object")
                if k != value_kind(cp.value)
            ]
            kind = kinds[int(rng.integers(0, len(kinds)))]
            cp.value = _cast_value(kind, cp.value, rng)
            applied = True
    elif action == 5:
        if cp is not None:
            cp.value = [copy.deepcopy(cp.value), copy.deepcopy(cp.value)]
            applied = True
    elif action == 6:
        if cp is not None:
            del w.params[w.cursor]
            w.cursor = w.cursor % len(w.params) if w.params else 0
            applied = True
    elif action in (7, 8, 9):
        if cp is not None:
            ext = {7: ".txt", 8: ".pdf", 9: ".doc"}[action]
            cp.value = string_form(cp.value) + ext
            applied = True
    elif action == 10:
        if cp is not None:
            related = pool.related_values(cp.spec.name)
            extra = (
                copy.deepcopy(related[0])
                if related
                else default_value(cp.spec.value_type, rng)
            )
            cp.value = [copy.deepcopy(cp.value), extra]
            applied = True
    elif action == 11:
        if w.method in ("POST", "PUT"):
            w.method = "PUT" if w.method == "POST" else "POST"
            applied = True
    elif action == 12:
        candidates = _related_candidates(w, pool)
        if candidates:
            pick = candidates[int(rng.integers(0, len(candidates)))]
            location = "body" if w.method in BODY_METHODS else "query"
            w.params.append(
                LiveParam(
                    spec=_synthetic_spec(pick.key, location, pick.value),
                    value=copy.deepcopy(pick.value),
                )
            )
            applied = True
    elif action in (13, 14, 15):
        if cp is not None:
            suffix = {13: "*", 14: ".*", 15: "%"}[action]
            cp.value = string_form(cp.value) + suffix
            applied = True
    elif action in (16, 17):
        if cp is not None:
            delta = 1 if action == 16 else -1
            n = _parse_int(cp.value)
            if n is not None:
                cp.value = str(n + delta) if isinstance(cp.value, str) else n + delta
            else:
                cp.value = 1 if action == 16 else -1
            applied = True
    elif action in (18, 19, 20, 21):
        if cp is not None:
            cp.value = {18: "admin", 19: -1, 20: 999999999, 21: ""}[action]
            applied = True
    elif action == 22:
        if cp is not None:
            related = pool.related_values(cp.spec.name)
            if related:
                cp.value = copy.deepcopy(related[0])
                applied = True
    elif action == 23:
        if cp is not None and isinstance(cp.value, dict):
            cp.value["admin"] = True
            applied = True
        elif _body_exists(w):
            existing = next(
                (p for p in w.params if p.spec.name == "admin" and p.spec.location == "body"),
                None,
            )
            if existing is not None:
                existing.value = True
            else:
                w.params.append(
                    LiveParam(spec=_synthetic_spec("admin", "body", True), value=True)
                )
            applied = True

    w.mutation_log.append(
        MutationStep(step=len(w.mutation_log) + 1, action=action, applied=applied)
    )
    return w, applied


def _body_exists(w: WorkingRequest) -> bool:
    if w.method in BODY_METHODS:
        return True
    return any(p.spec.location == "body" for p in w.params)


_HEADER_BAD = re.compile(r"[\r\n\x00]")


def render(w: WorkingRequest, session) -> ConcreteHttpRequest:
    """Render the working request to a concrete HTTP request.

    Path parameters that were removed leave their placeholder literally in
    the URL so the server sees the malformed segment. `session` provides
    token_for(slot); pass None for unauthenticated rendering.
    """
    url = w.template.operation.url_template
    query_items: list[tuple[str, str]] = []
    body_obj: dict[str, Any] = {}
    headers: list[tuple[str, str]] = []

    for p in w.params:
        loc = p.spec.location
        if loc == "path":
            url = url.replace(
                "{%s}" % p.spec.name,
                urllib.parse.quote(string_form(p.value), safe=""),
            )
        elif loc == "query":
            if isinstance(p.value, (list, tuple)):
                query_items.extend((p.spec.name, string_form(v)) for v in p.value)
            else:
                query_items.append((p.spec.name, string_form(p.value)))
        elif loc == "header":
            headers.append((p.spec.name, _HEADER_BAD.sub(" ", string_form(p.value))))
        else:
            body_obj[p.spec.name] = p.value

    if query_items:
        url = url + "?" + urllib.parse.urlencode(query_items)

    body: str | None = None
    if w.method in BODY_METHODS or body_obj:
        body = json.dumps(body_obj, separators=(",", ":"))
        headers.append(("Content-Type", "application/json"))

    if w.template.operation.auth_required and session is not None:
        token = session.token_for(w.token_slot)
        if token:
            headers.append(("Authorization", f"Bearer {token}"))

    return ConcreteHttpRequest(
        method=w.method, url=url, headers=tuple(headers), body=body
    )
