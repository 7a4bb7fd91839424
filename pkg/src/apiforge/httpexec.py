"""HTTP execution: send concrete requests, manage auth, capture exchanges.

Transport failures are values (status 0 + transport_error), never
exceptions, so reward and observation code stays total. Exactly one request
is in flight per campaign; the executor itself keeps no shared mutable
state beyond configuration.
"""
from __future__ import annotations

import http.client
import json
import socket
import time
import urllib.parse
from dataclasses import dataclass, field, replace
from typing import Any

from .errors import ConfigError
from .mutation import ConcreteHttpRequest

REDIRECT_LIMIT = 5
_REDIRECT_CODES = {301, 302, 303, 307, 308}


@dataclass(frozen=True)
class RefreshConfig:
    url: str
    method: str = "POST"
    credentials: dict = field(default_factory=dict)
    token_path: str = "token"


@dataclass
class AuthSession:
    primary_token: str | None = None
    alternate_token: str | None = None
    refresh: RefreshConfig | None = None
    _executor: Any = None

    def __post_init__(self):
        if self.primary_token == "":
            self.primary_token = None
        if self.alternate_token == "":
            self.alternate_token = None

    def token_for(self, slot: str) -> str | None:
        return self.alternate_token if slot == "alternate" else self.primary_token

    def has_alternate(self) -> bool:
        return self.alternate_token is not None

    def attach_executor(self, executor: "HttpExecutor") -> None:
        self._executor = executor

    def try_refresh(self) -> bool:
        """Refresh the primary token in place; False when not configured."""
        if self.refresh is None or self._executor is None:
            return False
        updated, ok = refresh_token(self, self._executor)
        if ok:
            self.primary_token = updated.primary_token
        return ok


@dataclass(frozen=True)
class HttpExchange:
    request: ConcreteHttpRequest
    status: int
    headers: tuple[tuple[str, str], ...]
    body: bytes
    protocol: str
    redirects: int
    elapsed_ms: int
    transport_error: str | None = None

    def json_body(self) -> Any:
        try:
            return json.loads(self.body.decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            return None

    @property
    def status_class(self) -> str:
        if 200 <= self.status <= 299:
            return "2xx"
        if 400 <= self.status <= 499:
            return "4xx"
        if 500 <= self.status <= 599:
            return "5xx"
        return "other"


def _transport_exchange(req: ConcreteHttpRequest, kind: str, elapsed_ms: int) -> HttpExchange:
    return HttpExchange(
        request=req,
        status=0,
        headers=(),
        body=b"",
        protocol="",
        redirects=0,
        elapsed_ms=elapsed_ms,
        transport_error=kind,
    )


class HttpExecutor:
    """Sends rendered requests against a base URL, one connection each."""

    def __init__(
        self,
        base_url: str,
        connect_timeout: float = 2.0,
        total_timeout: float = 10.0,
    ):
        parsed = urllib.parse.urlsplit(base_url)
        if parsed.scheme not in ("http", "https") or not parsed.hostname:
            raise ConfigError(f"malformed base URL {base_url!r}")
        self.base_url = base_url.rstrip("/")
        self.scheme = parsed.scheme
        self.host = parsed.hostname
        self.port = parsed.port or (443 if parsed.scheme == "https" else 80)
        self.prefix = parsed.path.rstrip("/")
        self.connect_timeout = connect_timeout
        self.total_timeout = total_timeout

    def _connection(self, deadline: float) -> http.client.HTTPConnection:
        timeout = max(0.05, min(self.connect_timeout, deadline - time.monotonic()))
        if self.scheme == "https":
            import ssl

            return http.client.HTTPSConnection(
                self.host,
                self.port,
                timeout=timeout,
                context=ssl._create_unverified_context(),
            )
        return http.client.HTTPConnection(self.host, self.port, timeout=timeout)

    def execute(self, req: ConcreteHttpRequest, session: AuthSession | None = None) -> HttpExchange:
        """Send one request, following up to five redirects. Total function:
        every outcome, including connection resets mid-body, becomes an
        HttpExchange."""
        started = time.monotonic()
        deadline = started + self.total_timeout
        method = req.method
        url = self.prefix + req.url if req.url.startswith("/") else req.url
        body = req.body
        headers = list(req.headers)
        redirects = 0

        while True:
            conn = None
            payload = body.encode("utf-8") if isinstance(body, str) else body
            try:
                conn = self._connection(deadline)
                conn.connect()
                conn.sock.settimeout(max(0.05, deadline - time.monotonic()))
                conn.putrequest(method, url, skip_accept_encoding=True)
                for name, value in headers:
                    conn.putheader(name, value)
                conn.putheader("Accept", "*/*")
                conn.putheader("Connection", "close")
                conn.putheader("Content-Length", str(len(payload or b"")))
                conn.endheaders()
                if payload:
                    conn.send(payload)
                resp = conn.getresponse()
                raw = resp.read()
                resp_headers = tuple((n, v) for n, v in resp.getheaders())
                protocol = {10: "HTTP/1.0", 11: "HTTP/1.1"}.get(resp.version, "HTTP/1.1")
                status = resp.status
            except (ConnectionRefusedError,) as _:
                return _transport_exchange(req, "refused", _ms(started))
            except (socket.timeout, TimeoutError):
                return _transport_exchange(req, "timeout", _ms(started))
            except (OSError, http.client.HTTPException):
                return _transport_exchange(req, "reset", _ms(started))
            finally:
                if conn is not None:
                    conn.close()

            if status in _REDIRECT_CODES and redirects < REDIRECT_LIMIT:
                location = next(
                    (v for n, v in resp_headers if n.lower() == "location"), None
                )
                if location:
                    redirects += 1
                    url = urllib.parse.urljoin(url, location)
                    if status in (301, 302, 303) and method not in ("GET", "HEAD"):
                        method, body = "GET", None
                        headers = [
                            (n, v)
                            for n, v in headers
                            if n.lower() not in ("content-type", "content-length")
                        ]
                    continue
            return HttpExchange(
                request=req,
                status=status,
                headers=resp_headers,
                body=raw,
                protocol=protocol,
                redirects=redirects,
                elapsed_ms=_ms(started),
            )

    def get(self, path: str) -> HttpExchange:
        return self.execute(ConcreteHttpRequest("GET", path, (), None))

    def post_json(self, path: str, payload: Any) -> HttpExchange:
        return self.execute(
            ConcreteHttpRequest(
                "POST",
                path,
                (("Content-Type", "application/json"),),
                json.dumps(payload),
            )
        )


def dict_headers(headers: list[tuple[str, str]]) -> dict[str, str]:
    return {n: v for n, v in headers}


def _ms(started: float) -> int:
    return int((time.monotonic() - started) * 1000)


def _json_path(data: Any, path: str) -> Any:
    node = data
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            return None
        node = node[part]
    return node


def refresh_token(
    session: AuthSession, executor: HttpExecutor
) -> tuple[AuthSession, bool]:
    """POST the configured credentials and swap in the extracted token.

    Any non-2XX response, transport failure, or missing token leaves the
    session unchanged and reports failure.
    """
    cfg = session.refresh
    if cfg is None:
        return session, False
    req = ConcreteHttpRequest(
        method=cfg.method,
        url=cfg.url,
        headers=(("Content-Type", "application/json"),),
        body=json.dumps(cfg.credentials),
    )
    exchange = executor.execute(req)
    if not 200 <= exchange.status <= 299:
        return session, False
    token = _json_path(exchange.json_body(), cfg.token_path)
    if not isinstance(token, str) or not token:
        return session, False
    return replace(session, primary_token=token, _executor=session._executor), True
