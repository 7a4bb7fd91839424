"""Observation vectors: response embedding plus four functional features.

The functional features are ordinal codes in [0, 1]: current HTTP method,
normalized status code, declared type of the parameter under the cursor,
and the cursor's normalized index.
"""
from __future__ import annotations

import numpy as np

from ..httpexec import HttpExchange
from ..mutation import WorkingRequest

OBS_EXTRA = 4

METHOD_CODES = {"GET": 0.0, "POST": 0.25, "PUT": 0.5, "PATCH": 0.75, "DELETE": 1.0}
TYPE_CODES = {
    "string": 0.0,
    "integer": 0.2,
    "number": 0.4,
    "boolean": 0.6,
    "array": 0.8,
    "object": 1.0,
}


def _functional_features(status: int, w: WorkingRequest) -> list[float]:
    method_code = METHOD_CODES.get(w.method, 0.0)
    status_norm = status / 599 if 0 <= status <= 599 else 1.0
    if w.params:
        param_type = TYPE_CODES[w.params[w.cursor].spec.value_type]
        count = len(w.params)
        index_norm = w.cursor / (count - 1) if count > 1 else 0.0
    else:
        param_type = 0.0
        index_norm = 0.0
    return [method_code, status_norm, param_type, index_norm]


def build_observation(x: HttpExchange, w: WorkingRequest, embedder) -> np.ndarray:
    emb = np.asarray(embedder(x), dtype=np.float64)
    return np.concatenate([emb, _functional_features(x.status, w)])


def _pre_request_exchange() -> HttpExchange:
    from ..mutation import ConcreteHttpRequest

    return HttpExchange(
        request=ConcreteHttpRequest("GET", "", (), None),
        status=0,
        headers=(),
        body=b"",
        protocol="",
        redirects=0,
        elapsed_ms=0,
    )


def initial_observation(w: WorkingRequest, embedder) -> np.ndarray:
    """First observation of an episode, before any request has been sent:
    the embedding of a synthetic empty exchange (status 0). Keeps the input
    scale comparable to mid-episode observations, which zero-padding does
    not."""
    emb = np.asarray(embedder(_pre_request_exchange()), dtype=np.float64)
    return np.concatenate([emb, _functional_features(0, w)])
