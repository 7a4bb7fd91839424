"""OpenAPI ingestion: operations, request templates, and the observed value pool.

Parses the supported OpenAPI 3.x subset into flat operation records, builds
well-formed starting requests for each operation, and maintains the pool of
key/value pairs harvested from live responses together with their relatedness
clusters.
"""
from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

import numpy as np
import yaml

from .errors import IoFailure, MalformedDocument, MissingPaths

HTTP_METHODS = ("get", "post", "put", "patch", "delete")
PARAM_LOCATIONS = ("path", "query", "header", "body")
VALUE_KINDS = ("string", "integer", "number", "boolean", "array", "object")

_PLACEHOLDER_RE = re.compile(r"\{([^{}/]+)\}")
_LOWER_ALNUM = string.ascii_lowercase + string.digits


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    location: str
    value_type: str
    required: bool
    example: Any = None

    def __post_init__(self):
        if not self.name:
            raise ValueError("parameter name must be non-empty")
        if self.location not in PARAM_LOCATIONS:
            raise ValueError(f"bad parameter location {self.location!r}")
        if self.value_type not in VALUE_KINDS:
            raise ValueError(f"bad value type {self.value_type!r}")
        if self.location == "path" and not self.required:
            raise ValueError("path parameters must be required")


@dataclass(frozen=True)
class OperationSpec:
    method: str
    url_template: str
    parameters: tuple[ParameterSpec, ...]
    auth_required: bool = False

    def __post_init__(self):
        placeholders = set(_PLACEHOLDER_RE.findall(self.url_template))
        path_names = [p.name for p in self.parameters if p.location == "path"]
        if sorted(placeholders) != sorted(path_names):
            raise ValueError(
                f"{self.method} {self.url_template}: placeholders {sorted(placeholders)} "
                f"do not match path parameters {sorted(path_names)}"
            )
        for loc in PARAM_LOCATIONS:
            names = [p.name for p in self.parameters if p.location == loc]
            if len(names) != len(set(names)):
                raise ValueError(f"duplicate parameter names in {loc}")

    @property
    def key(self) -> str:
        return f"{self.method} {self.url_template}"


@dataclass(frozen=True)
class RequestTemplate:
    operation: OperationSpec
    initial_values: dict[str, Any]


def value_kind(value: Any) -> str:
    """Map a concrete JSON value to one of the six declared kinds."""
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        return "number"
    if isinstance(value, str):
        return "string"
    if isinstance(value, (list, tuple)):
        return "array"
    return "object"


def random_string(rng: np.random.Generator, n: int = 6) -> str:
    return "".join(_LOWER_ALNUM[int(i)] for i in rng.integers(0, len(_LOWER_ALNUM), n))


def default_value(kind: str, rng: np.random.Generator) -> Any:
    """Generated default for a parameter with no example and no pool match."""
    if kind == "string":
        return random_string(rng)
    if kind == "integer":
        return int(rng.integers(0, 1001))
    if kind == "number":
        return round(float(rng.uniform(0.0, 1000.0)), 2)
    if kind == "boolean":
        return True
    if kind == "array":
        return [random_string(rng)]
    if kind == "object":
        return {"value": random_string(rng)}
    raise ValueError(f"unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# OpenAPI parsing


def _resolve_ref(root: dict, obj: Any, depth: int = 0) -> Any:
    """Inline local $ref pointers (shallow, cycle-tolerant)."""
    if depth > 8:
        return obj
    if isinstance(obj, dict):
        ref = obj.get("$ref")
        if isinstance(ref, str) and ref.startswith("#/"):
            target: Any = root
            for part in ref[2:].split("/"):
                if not isinstance(target, dict) or part not in target:
                    return {}
                target = target[part]
            return _resolve_ref(root, target, depth + 1)
        return {k: _resolve_ref(root, v, depth + 1) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_resolve_ref(root, v, depth + 1) for v in obj]
    return obj


def _schema_kind(schema: Any) -> str:
    if not isinstance(schema, dict):
        return "object"
    t = schema.get("type")
    if t in VALUE_KINDS:
        return t
    if "properties" in schema:
        return "object"
    if "items" in schema:
        return "array"
    # oneOf/anyOf/allOf and anything else degrades to object
    return "object"


def _schema_example(param: dict, schema: Any) -> Any:
    for source in (param, schema if isinstance(schema, dict) else {}):
        for key in ("example", "default"):
            if key in source:
                return source[key]
    return None


def _parse_parameters(root: dict, raw_params: Iterable[Any]) -> list[ParameterSpec]:
    out: list[ParameterSpec] = []
    for raw in raw_params:
        raw = _resolve_ref(root, raw)
        if not isinstance(raw, dict):
            continue
        name = raw.get("name")
        loc = raw.get("in")
        if not name or loc not in ("path", "query", "header"):
            continue
        schema = _resolve_ref(root, raw.get("schema", {}))
        required = bool(raw.get("required", False)) or loc == "path"
        out.append(
            ParameterSpec(
                name=str(name),
                location=loc,
                value_type=_schema_kind(schema),
                required=required,
                example=_schema_example(raw, schema),
            )
        )
    return out


def _parse_body(root: dict, request_body: Any) -> list[ParameterSpec]:
    request_body = _resolve_ref(root, request_body)
    if not isinstance(request_body, dict):
        return []
    content = request_body.get("content")
    if not isinstance(content, dict):
        return []
    schema = None
    for ctype, spec in content.items():
        if "json" in ctype and isinstance(spec, dict):
            schema = _resolve_ref(root, spec.get("schema"))
            break
    if not isinstance(schema, dict):
        return []
    if _schema_kind(schema) != "object" or "properties" not in schema:
        # non-object JSON body: keep it as a single opaque parameter
        return [
            ParameterSpec(
                name="body",
                location="body",
                value_type=_schema_kind(schema),
                required=bool(request_body.get("required", False)),
                example=_schema_example({}, schema),
            )
        ]
    required_names = set(schema.get("required", []) or [])
    out = []
    for prop, prop_schema in schema.get("properties", {}).items():
        prop_schema = _resolve_ref(root, prop_schema)
        out.append(
            ParameterSpec(
                name=str(prop),
                location="body",
                value_type=_schema_kind(prop_schema),
                required=prop in required_names,
                example=_schema_example({}, prop_schema),
            )
        )
    return out


def _dedupe(params: list[ParameterSpec]) -> list[ParameterSpec]:
    seen: set[tuple[str, str]] = set()
    out = []
    for p in params:
        key = (p.location, p.name)
        if key in seen:
            continue
        seen.add(key)
        out.append(p)
    return out


def parse_spec(document: str, format: str = "json") -> list[OperationSpec]:
    """Parse an OpenAPI 3.x document into one OperationSpec per (path, method)."""
    try:
        if format == "json":
            root = json.loads(document)
        elif format == "yaml":
            root = yaml.safe_load(document)
        else:
            raise ValueError(f"unknown format {format!r}")
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise MalformedDocument(f"cannot parse document: {exc}") from exc
    if not isinstance(root, dict):
        raise MalformedDocument("document root is not a mapping")

    paths = root.get("paths")
    if not isinstance(paths, dict) or not paths:
        raise MissingPaths("document has no paths")

    global_auth = bool(root.get("security"))
    ops: list[OperationSpec] = []
    for path, item in paths.items():
        if not isinstance(item, dict):
            continue
        item = _resolve_ref(root, item)
        shared = _parse_parameters(root, item.get("parameters", []) or [])
        for method in HTTP_METHODS:
            op = item.get(method)
            if not isinstance(op, dict):
                continue
            params = _parse_parameters(root, op.get("parameters", []) or [])
            merged = _dedupe(params + shared)
            body = _parse_body(root, op.get("requestBody"))
            placeholders = _PLACEHOLDER_RE.findall(path)
            path_names = {p.name for p in merged if p.location == "path"}
            for ph in placeholders:
                if ph not in path_names:
                    merged.append(ParameterSpec(ph, "path", "string", True))
                    path_names.add(ph)
            # drop declared path params that have no placeholder in the URL
            merged = [
                p for p in merged if p.location != "path" or p.name in set(placeholders)
            ]
            if "security" in op:
                auth = bool(op["security"])
            else:
                auth = global_auth
            ops.append(
                OperationSpec(
                    method=method.upper(),
                    url_template=str(path),
                    parameters=tuple(merged + body),
                    auth_required=auth,
                )
            )
    return ops


# ---------------------------------------------------------------------------
# Value pool


def _value_key(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


@dataclass
class PoolPair:
    key: str
    value: Any
    last_seen: int


class ValuePool:
    """Key/value pairs observed in responses, clustered by relatedness.

    Two merge rules build the clusters: all pairs extracted from one response
    body belong together, and identical (key, value) pairs observed in
    different responses are a single pool entry (so their response-mates end
    up in the same cluster). Implemented as union-find over pair ids.
    """

    def __init__(self):
        self.pairs: list[PoolPair] = []
        self._index: dict[tuple[str, str], int] = {}
        self._parent: list[int] = []
        self._clock = 0

    def __len__(self) -> int:
        return len(self.pairs)

    def _find(self, i: int) -> int:
        while self._parent[i] != i:
            self._parent[i] = self._parent[self._parent[i]]
            i = self._parent[i]
        return i

    def _union(self, a: int, b: int) -> None:
        ra, rb = self._find(a), self._find(b)
        if ra != rb:
            self._parent[max(ra, rb)] = min(ra, rb)

    def _observe(self, key: str, value: Any) -> int:
        self._clock += 1
        ident = (key, _value_key(value))
        idx = self._index.get(ident)
        if idx is None:
            idx = len(self.pairs)
            self.pairs.append(PoolPair(key, value, self._clock))
            self._index[ident] = idx
            self._parent.append(idx)
        else:
            self.pairs[idx].last_seen = self._clock
        return idx

    def record_response(self, body: Any, max_depth: int = 5) -> int:
        """Harvest every (key, value) pair from one JSON response body.

        Recurses into nested objects and arrays down to max_depth. All pairs
        of the response are merged into one cluster. Returns the number of
        pairs observed.
        """
        found: list[tuple[str, Any]] = []

        def walk(node: Any, depth: int) -> None:
            if depth > max_depth:
                return
            if isinstance(node, dict):
                for k, v in node.items():
                    found.append((str(k), v))
                    walk(v, depth + 1)
            elif isinstance(node, list):
                for v in node:
                    walk(v, depth + 1)

        walk(body, 1)
        ids = [self._observe(k, v) for k, v in found]
        for other in ids[1:]:
            self._union(ids[0], other)
        return len(ids)

    def clusters(self) -> list[list[int]]:
        groups: dict[int, list[int]] = {}
        for i in range(len(self.pairs)):
            groups.setdefault(self._find(i), []).append(i)
        return [groups[root] for root in sorted(groups)]

    def related_values(self, key: str) -> list[Any]:
        """Values of every pair sharing a cluster with `key`, newest first."""
        members = self.related_pairs(key)
        return [p.value for p in members]

    def related_pairs(self, key: str) -> list[PoolPair]:
        roots = {self._find(i) for i, p in enumerate(self.pairs) if p.key == key}
        if not roots:
            return []
        members = [
            p for i, p in enumerate(self.pairs) if self._find(i) in roots
        ]
        members.sort(key=lambda p: -p.last_seen)
        return members

    def latest_value(self, key: str, kind: str | None = None) -> Any | None:
        """Most recently seen value stored under exactly this key."""
        best: PoolPair | None = None
        for p in self.pairs:
            if p.key == key and (kind is None or value_kind(p.value) == kind):
                if best is None or p.last_seen > best.last_seen:
                    best = p
        return None if best is None else best.value

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "pairs": [
                {"key": p.key, "value": p.value, "last_seen": p.last_seen}
                for p in self.pairs
            ],
            "clusters": self.clusters(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ValuePool":
        pool = cls()
        for raw in data.get("pairs", []):
            idx = pool._observe(raw["key"], raw["value"])
            pool.pairs[idx].last_seen = int(raw["last_seen"])
        pool._clock = max((p.last_seen for p in pool.pairs), default=0)
        for cluster in data.get("clusters", []):
            for other in cluster[1:]:
                pool._union(cluster[0], other)
        return pool

    def save(self, path: str) -> None:
        try:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(self.to_dict(), fh, indent=2)
        except OSError as exc:
            raise IoFailure(f"cannot write pool file {path}: {exc}") from exc

    @classmethod
    def load(cls, path: str) -> "ValuePool":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def related_values(pool: ValuePool, key: str) -> list[Any]:
    return pool.related_values(key)


# ---------------------------------------------------------------------------
# Templates and harvesting


def _initial_value(
    param: ParameterSpec, pool: ValuePool, rng: np.random.Generator
) -> Any:
    if param.example is not None and value_kind(param.example) == param.value_type:
        return param.example
    pooled = pool.latest_value(param.name, kind=param.value_type)
    if pooled is not None:
        return pooled
    return default_value(param.value_type, rng)


def build_templates(
    ops: list[OperationSpec], pool: ValuePool, rng: np.random.Generator
) -> list[RequestTemplate]:
    """One starting request per operation: example > pool match > default."""
    if not ops:
        raise ValueError("no operations to build templates for")
    templates = []
    for op in ops:
        values = {p.name: _initial_value(p, pool, rng) for p in op.parameters}
        templates.append(RequestTemplate(operation=op, initial_values=values))
    return templates


# A send callable returns the decoded JSON response body for one template
# (None when the response is not JSON), raising TargetUnreachable on
# transport failure. Keeps this module free of HTTP details.
SendFn = Callable[[RequestTemplate], Any]


def harvest_value_pool(templates: list[RequestTemplate], send: SendFn) -> ValuePool:
    """Two passes over all operations collecting related key-value pairs.

    Pass 1 sends every template as built and records response pairs. Pass 2
    re-sends each template with its parameter values replaced by pool values
    under the same key, so follow-up requests are better formed, and records
    the new responses too.
    """
    pool = ValuePool()
    for template in templates:
        body = send(template)
        if body is not None:
            pool.record_response(body)
    for template in templates:
        values = dict(template.initial_values)
        for param in template.operation.parameters:
            if param.location == "header":
                continue
            pooled = pool.latest_value(param.name, kind=param.value_type)
            if pooled is not None:
                values[param.name] = pooled
        body = send(RequestTemplate(template.operation, values))
        if body is not None:
            pool.record_response(body)
    return pool
