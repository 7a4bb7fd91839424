"""Pretraining corpus generation and the JSONL exchange format.

One line per exchange:

    {"request": {"method", "url", "headers", "body"},
     "response": {"status", "protocol", "redirects", "headers", "body_b64",
                  "charset"}}

generate_corpus drives a running target with randomized valid and invalid
requests (the same mutation space the fuzzer uses) and records everything.
Reset the target first if byte-identical reruns are needed.
"""
from __future__ import annotations

import base64
import json

import numpy as np

from ..errors import TargetUnreachable
from ..httpexec import AuthSession, HttpExchange, HttpExecutor
from ..ingest import ValuePool, build_templates, parse_spec
from ..mutation import ConcreteHttpRequest, apply_action, render, reset_episode
from .serialize import _charset, serialize_response


def exchange_to_record(x: HttpExchange) -> dict:
    return {
        "request": x.request.to_dict(),
        "response": {
            "status": x.status,
            "protocol": x.protocol,
            "redirects": x.redirects,
            "headers": [list(h) for h in x.headers],
            "body_b64": base64.b64encode(x.body).decode("ascii"),
            "charset": _charset(x)[0],
        },
    }


def record_to_exchange(record: dict) -> HttpExchange:
    resp = record["response"]
    return HttpExchange(
        request=ConcreteHttpRequest.from_dict(record["request"]),
        status=int(resp["status"]),
        headers=tuple((str(n), str(v)) for n, v in resp.get("headers", [])),
        body=base64.b64decode(resp.get("body_b64", "")),
        protocol=str(resp.get("protocol", "")),
        redirects=int(resp.get("redirects", 0)),
        elapsed_ms=0,
    )


def generate_corpus(
    base_url: str,
    n: int,
    seed: int,
    out_path: str,
    token: str | None = None,
    spec_path: str = "/openapi.json",
    max_mutations: int = 4,
) -> str:
    """Collect n request/response records from the target at base_url."""
    rng = np.random.default_rng(seed)
    executor = HttpExecutor(base_url)
    session = AuthSession(primary_token=token)
    spec_exchange = executor.get(spec_path)
    if spec_exchange.status == 0:
        raise TargetUnreachable(f"{base_url}{spec_path}: {spec_exchange.transport_error}")
    ops = parse_spec(spec_exchange.body.decode("utf-8"), "json")
    templates = build_templates(ops, ValuePool(), rng)
    pool = ValuePool()

    with open(out_path, "w", encoding="utf-8") as fh:
        for _ in range(n):
            template = templates[int(rng.integers(0, len(templates)))]
            w = reset_episode(template)
            for _ in range(int(rng.integers(0, max_mutations + 1))):
                action = int(rng.integers(1, 24))
                w, _applied = apply_action(w, action, pool, session, rng)
            exchange = executor.execute(render(w, session), session)
            if exchange.status == 0:
                raise TargetUnreachable(
                    f"target dropped mid-run: {exchange.transport_error}"
                )
            pool.record_response(exchange.json_body())
            fh.write(json.dumps(exchange_to_record(exchange)) + "\n")
    return out_path


def load_corpus_exchanges(path: str) -> list[HttpExchange]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(record_to_exchange(json.loads(line)))
    return out


def load_corpus_sentences(path: str) -> list[str]:
    return [serialize_response(x) for x in load_corpus_exchanges(path)]
