"""A self-describing vulnerable REST API for training and evaluation.

Serves two resource families (users, books) plus token auth, publishes its
own OpenAPI document at /openapi.json, and carries a catalog of seeded
faults that answer with realistic 500 pages. Every handler records the
basic blocks it executes; two side-channel endpoints expose cumulative
coverage and state reset. Removing those two endpoints leaves an ordinary
black-box API.
"""
from __future__ import annotations

import copy
import json
import re
import threading
import urllib.parse
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable

from .errors import PortInUse

# ---------------------------------------------------------------------------
# Fixtures

FIXTURE_USERS = {
    "alice1": {
        "username": "alice1",
        "name": "Alice",
        "user_id": 1,
        "email": "alice@example.test",
        "password": 4831,
        "admin": True,
    },
    "bob2": {
        "username": "bob2",
        "name": "Bob",
        "user_id": 2,
        "email": "bob@example.test",
        "password": 9177,
        "admin": False,
    },
    "carol3": {
        "username": "carol3",
        "name": "Carol",
        "user_id": 3,
        "email": "carol@example.test",
        "password": 2645,
        "admin": False,
    },
}

FIXTURE_BOOKS = {
    1: {"book_id": 1, "title": "Infinite Loop", "username": "alice1", "pages": 212},
    2: {"book_id": 2, "title": "Garbage Collected", "username": "bob2", "pages": 340},
    3: {"book_id": 3, "title": "Null and Void", "username": "carol3", "pages": 129},
}

FIXTURE_TOKENS = {"tok-alice1-0": "alice1", "tok-bob2-0": "bob2"}

ALL_FAULTS = ("f1", "f2", "f3", "f4", "f5", "f6", "f7", "f8")


@dataclass(frozen=True)
class FaultSpec:
    fault_id: str
    method: str
    path: str
    trigger: str
    source_block: str


FAULT_CATALOG: tuple[FaultSpec, ...] = (
    FaultSpec(
        "f1",
        "GET",
        "/books/v1",
        "query parameter 'all' supplied more than once; the list of values is "
        "cast as a single boolean flag",
        "books_list:2",
    ),
    FaultSpec(
        "f2",
        "POST",
        "/users/v1/register",
        "registering a username that already exists hits an unhandled unique "
        "constraint",
        "user_register:4",
    ),
    FaultSpec(
        "f3",
        "GET",
        "/books/v1/{book_id}",
        "any query parameter is interpolated into the lookup query as a column "
        "name that does not exist",
        "book_detail:2",
    ),
    FaultSpec(
        "f4",
        "PATCH",
        "/users/v1/{username}/account",
        "three-step chain: store an invalid attribute selection (list value), "
        "mark the account cleared (empty string), then send a wildcard string; "
        "the wildcard expansion dereferences the stored selection and crashes",
        "user_account:10",
    ),
    FaultSpec(
        "f5",
        "POST",
        "/books/v1",
        "a non-string 'password' field reaches the lock-verification digest",
        "book_create:3",
    ),
    FaultSpec(
        "f6",
        "PUT",
        "/users/v1/{username}/email",
        "missing required 'email' body field skips validation and is "
        "dereferenced",
        "user_email:4",
    ),
    FaultSpec(
        "f7",
        "POST",
        "/books/v1",
        "'pages' of a non-numeric type reaches shelf-index arithmetic",
        "book_create:5",
    ),
    FaultSpec(
        "f8",
        "PUT",
        "/books/v1",
        "legacy bulk-replace route (undocumented) reached by a method swap "
        "reads body['books'] without checking",
        "books_bulk:2",
    ),
)

FAULTS_BY_ID = {f.fault_id: f for f in FAULT_CATALOG}


class LabFault(Exception):
    def __init__(self, fault_id: str, body: str):
        super().__init__(fault_id)
        self.fault_id = fault_id
        self.body = body


def _trace(module: str, line: int, func: str, code: str, exc: str) -> str:
    return (
        "Internal Server Error\n"
        "Traceback (most recent call last):\n"
        f'  File "/srv/lab/handlers/{module}.py", line {line}, in {func}\n'
        f"    {code}\n"
        f"{exc}\n"
    )


# ---------------------------------------------------------------------------
# Config and state


@dataclass
class LabConfig:
    port: int = 0
    host: str = "127.0.0.1"
    faults: tuple[str, ...] = ALL_FAULTS

    def __post_init__(self):
        unknown = set(self.faults) - set(ALL_FAULTS)
        if unknown:
            raise ValueError(f"unknown fault ids: {sorted(unknown)}")

    @classmethod
    def from_file(cls, path: str) -> "LabConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls(
            port=int(raw.get("port", 0)),
            host=str(raw.get("host", "127.0.0.1")),
            faults=tuple(raw.get("faults", ALL_FAULTS)),
        )


class CoverageTracker:
    def __init__(self):
        self.cumulative: set[str] = set()
        self.last: list[str] = []

    def begin(self) -> None:
        self.last = []

    def hit(self, handler: str, block: int) -> None:
        block_id = f"{handler}:{block}"
        self.last.append(block_id)
        self.cumulative.add(block_id)

    def reset(self) -> None:
        self.cumulative = set()
        self.last = []


def _default_account(user: dict) -> dict:
    attrs = {
        "email": user["email"],
        "first_name": user["name"],
        "last_name": user["name"] + "son",
        "theme": "dark",
    }
    return {"attrs": attrs, "selected": list(attrs.keys()), "cleared": False}


class LabState:
    """Fixture data plus runtime state; reset() restores the initial snapshot."""

    def __init__(self, config: LabConfig):
        self.config = config
        self.enabled = set(config.faults)
        self.cov = CoverageTracker()
        self.lock = threading.RLock()
        self._initial = {
            "users": copy.deepcopy(FIXTURE_USERS),
            "books": copy.deepcopy(FIXTURE_BOOKS),
            "tokens": dict(FIXTURE_TOKENS),
            "accounts": {
                name: _default_account(user) for name, user in FIXTURE_USERS.items()
            },
            "token_counter": 0,
        }
        self.reset()

    def reset(self) -> None:
        snap = copy.deepcopy(self._initial)
        self.users: dict[str, dict] = snap["users"]
        self.books: dict[int, dict] = snap["books"]
        self.tokens: dict[str, str] = snap["tokens"]
        self.accounts: dict[str, dict] = snap["accounts"]
        self.token_counter: int = snap["token_counter"]
        self.cov.reset()

    def fault_on(self, fault_id: str) -> bool:
        return fault_id in self.enabled

    def issue_token(self, username: str) -> str:
        self.token_counter += 1
        token = f"tok-{username}-{self.token_counter}"
        self.tokens[token] = username
        return token


class Ctx:
    """Per-request view handed to handlers."""

    def __init__(
        self,
        state: LabState,
        handler_name: str,
        path_vars,
        query,
        body,
        auth_user,
        headers=None,
    ):
        self.state = state
        self.handler_name = handler_name
        self.path_vars = path_vars
        self.query = query
        self.body = body
        self.auth_user = auth_user
        self.headers = headers or {}

    def hit(self, block: int) -> None:
        self.state.cov.hit(self.handler_name, block)

    def fail(self, fault_id: str, block: int, body: str) -> None:
        self.hit(block)
        raise LabFault(fault_id, body)


# ---------------------------------------------------------------------------
# Handlers. Block numbers are stable; faults raise from the block named in
# FAULT_CATALOG.


def users_list(ctx: Ctx):
    ctx.hit(0)
    rows = [
        {"username": u["username"], "name": u["name"], "user_id": u["user_id"]}
        for u in sorted(ctx.state.users.values(), key=lambda u: u["user_id"])
    ]
    ctx.hit(1)
    return 200, rows


def users_debug(ctx: Ctx):
    ctx.hit(0)
    rows = [
        {
            "username": u["username"],
            "name": u["name"],
            "password": u["password"],
            "admin": u["admin"],
        }
        for u in sorted(ctx.state.users.values(), key=lambda u: u["user_id"])
    ]
    ctx.hit(1)
    return 200, rows


def user_register(ctx: Ctx):
    ctx.hit(0)
    body = ctx.body
    if not isinstance(body, dict) or not isinstance(body.get("username"), str) or not body["username"]:
        ctx.hit(1)
        return 400, {"error": "username is required"}
    username = body["username"]
    ctx.hit(2)
    if username in ctx.state.users:
        if ctx.state.fault_on("f2"):
            ctx.fail(
                "f2",
                4,
                _trace(
                    "users",
                    87,
                    "user_register",
                    'db.execute("INSERT INTO users (username) VALUES (?)", row)',
                    "sqlite3.IntegrityError: UNIQUE constraint failed: users.username",
                ),
            )
        ctx.hit(5)
        return 409, {"error": "username already exists"}
    ctx.hit(3)
    user_id = max((u["user_id"] for u in ctx.state.users.values()), default=0) + 1
    email = body.get("email") if isinstance(body.get("email"), str) else None
    record = {
        "username": username,
        "name": username.capitalize(),
        "user_id": user_id,
        "email": email or f"{username}@example.test",
        "password": body.get("password", 0),
        "admin": False,
    }
    ctx.state.users[username] = record
    ctx.state.accounts[username] = _default_account(record)
    return 201, {"username": username, "user_id": user_id}


def user_detail(ctx: Ctx):
    ctx.hit(0)
    user = ctx.state.users.get(ctx.path_vars["username"])
    if user is None:
        ctx.hit(2)
        return 404, {"error": "user not found"}
    ctx.hit(1)
    return 200, {
        "username": user["username"],
        "name": user["name"],
        "user_id": user["user_id"],
        "email": user["email"],
    }


def user_email(ctx: Ctx):
    ctx.hit(0)
    if ctx.auth_user is None:
        ctx.hit(1)
        return 401, {"error": "authentication required"}
    ctx.hit(2)
    user = ctx.state.users.get(ctx.path_vars["username"])
    if user is None:
        ctx.hit(3)
        return 404, {"error": "user not found"}
    body = ctx.body if isinstance(ctx.body, dict) else {}
    if "email" not in body:
        if ctx.state.fault_on("f6"):
            ctx.fail(
                "f6",
                4,
                _trace(
                    "users",
                    132,
                    "user_email",
                    "normalized = email.lower()",
                    "AttributeError: 'NoneType' object has no attribute 'lower'",
                ),
            )
        ctx.hit(5)
        return 400, {"error": "email is required"}
    email = body["email"]
    if not isinstance(email, str):
        ctx.hit(6)
        return 400, {"error": "email must be a string"}
    ctx.hit(7)
    user["email"] = email.lower()
    return 204, None


def user_delete(ctx: Ctx):
    ctx.hit(0)
    if ctx.auth_user is None:
        ctx.hit(1)
        return 401, {"error": "authentication required"}
    if not ctx.auth_user.get("admin"):
        ctx.hit(2)
        return 403, {"error": "admin privileges required"}
    username = ctx.path_vars["username"]
    if username not in ctx.state.users:
        ctx.hit(3)
        return 404, {"error": "user not found"}
    ctx.hit(4)
    del ctx.state.users[username]
    ctx.state.accounts.pop(username, None)
    return 204, None


def user_account(ctx: Ctx):
    ctx.hit(0)
    if ctx.auth_user is None:
        ctx.hit(1)
        return 401, {"error": "authentication required"}
    username = ctx.path_vars["username"]
    account = ctx.state.accounts.get(username)
    if username not in ctx.state.users or account is None:
        ctx.hit(2)
        return 404, {"error": "user not found"}
    body = ctx.body
    if not isinstance(body, dict) or "user" not in body:
        ctx.hit(3)
        return 400, {"error": "user field is required"}
    value = body["user"]

    if isinstance(value, dict):
        ctx.hit(4)
        account["attrs"] = dict(value)
        account["selected"] = list(value.keys())
        account["cleared"] = False
        return 200, {"account": "updated", "fields": len(value)}

    if isinstance(value, list):
        if not ctx.state.fault_on("f4") and not all(
            isinstance(v, str) for v in value
        ):
            ctx.hit(6)
            return 400, {"error": "selection entries must be strings"}
        # buggy partial-update path stores the selection unvalidated
        ctx.hit(5)
        account["selected"] = list(value)
        return 200, {"account": "selection updated", "count": len(value)}

    if isinstance(value, str):
        if value == "":
            ctx.hit(7)
            account["cleared"] = True
            return 200, {"account": "cleared, update pending"}
        if "*" in value and ctx.state.fault_on("f4") and account["cleared"]:
            ctx.hit(9)
            try:
                selected = account["selected"]
                primary = selected[0]
                expanded = {key: account["attrs"][key] for key in selected}
                _ = primary, expanded
            except (IndexError, TypeError, KeyError):
                ctx.fail(
                    "f4",
                    10,
                    _trace(
                        "accounts",
                        203,
                        "user_account",
                        "expanded = {key: attrs[key] for key in selected}",
                        "TypeError: unhashable type in attribute selection",
                    ),
                )
            return 200, {"account": "expanded", "fields": len(account["attrs"])}
        ctx.hit(8)
        return 400, {"error": "unsupported account payload"}

    ctx.hit(8)
    return 400, {"error": "unsupported account payload"}


def books_list(ctx: Ctx):
    ctx.hit(0)
    include_all = False
    if "all" in ctx.query:
        ctx.hit(1)
        raw = ctx.query["all"]
        if len(raw) > 1:
            if ctx.state.fault_on("f1"):
                ctx.fail(
                    "f1",
                    2,
                    _trace(
                        "books",
                        58,
                        "books_list",
                        'include_all = flag.lower() == "true"',
                        "AttributeError: 'list' object has no attribute 'lower'",
                    ),
                )
            ctx.hit(3)
            raw = raw[:1]
        flag = raw[0]
        include_all = flag.lower() == "true"
        ctx.hit(4)
    rows = sorted(ctx.state.books.values(), key=lambda b: b["book_id"])
    if "q" in ctx.query and ctx.query["q"]:
        ctx.hit(5)
        needle = ctx.query["q"][0].lower()
        rows = [b for b in rows if needle in str(b["title"]).lower()]
    if "x-api-version" in ctx.headers:
        ctx.hit(6)
    ctx.hit(7)
    if include_all:
        return 200, rows
    return 200, [{"book_id": b["book_id"], "title": b["title"]} for b in rows]


def book_create(ctx: Ctx):
    ctx.hit(0)
    if ctx.auth_user is None:
        ctx.hit(1)
        return 401, {"error": "authentication required"}
    body = ctx.body
    if not isinstance(body, dict):
        ctx.hit(2)
        return 400, {"error": "json object body required"}
    if "password" in body:
        password = body["password"]
        if ctx.state.fault_on("f5"):
            if not isinstance(password, str):
                ctx.fail(
                    "f5",
                    3,
                    _trace(
                        "books",
                        114,
                        "book_create",
                        "digest = hashlib.sha1(password.encode()).hexdigest()",
                        "AttributeError: 'int' object has no attribute 'encode'",
                    ),
                )
        else:
            password = str(password)
        ctx.hit(4)
        return 403, {"error": "shelf lock password rejected"}
    if "title" not in body:
        ctx.hit(6)
        return 400, {"error": "title is required"}
    title = body["title"]
    pages = body.get("pages", 0)
    if not isinstance(pages, (int, float)) or isinstance(pages, bool):
        if ctx.state.fault_on("f7"):
            ctx.fail(
                "f7",
                5,
                _trace(
                    "books",
                    131,
                    "book_create",
                    "shelf_index = pages // 50",
                    "TypeError: unsupported operand type(s) for //: 'str' and 'int'",
                ),
            )
        ctx.hit(7)
        return 400, {"error": "pages must be a number"}
    owner = body.get("username")
    if not isinstance(owner, str) or owner not in ctx.state.users:
        owner = ctx.auth_user["username"]
    ctx.hit(8)
    book_id = max(ctx.state.books.keys(), default=0) + 1
    ctx.state.books[book_id] = {
        "book_id": book_id,
        "title": title if isinstance(title, str) else json.dumps(title),
        "username": owner,
        "pages": pages,
    }
    ctx.hit(9)
    return 201, {"book_id": book_id, "title": ctx.state.books[book_id]["title"]}


def book_detail(ctx: Ctx):
    ctx.hit(0)
    if ctx.query:
        if ctx.state.fault_on("f3"):
            ctx.fail(
                "f3",
                2,
                _trace(
                    "books",
                    162,
                    "book_detail",
                    'row = db.execute(f"SELECT {columns} FROM books WHERE id=?").fetchone()',
                    "sqlite3.OperationalError: no such column",
                ),
            )
        ctx.hit(3)
    raw_id = ctx.path_vars["book_id"]
    try:
        book_id = int(raw_id)
    except (TypeError, ValueError):
        ctx.hit(1)
        return 404, {"error": "book not found"}
    book = ctx.state.books.get(book_id)
    if book is None:
        ctx.hit(4)
        return 404, {"error": "book not found"}
    ctx.hit(5)
    return 200, book


def book_update(ctx: Ctx):
    ctx.hit(0)
    if ctx.auth_user is None:
        ctx.hit(1)
        return 401, {"error": "authentication required"}
    try:
        book_id = int(ctx.path_vars["book_id"])
    except (TypeError, ValueError):
        ctx.hit(2)
        return 404, {"error": "book not found"}
    book = ctx.state.books.get(book_id)
    if book is None:
        ctx.hit(2)
        return 404, {"error": "book not found"}
    body = ctx.body
    if not isinstance(body, dict):
        ctx.hit(3)
        return 400, {"error": "json object body required"}
    if "title" in body and not isinstance(body["title"], str):
        ctx.hit(4)
        return 400, {"error": "title must be a string"}
    if "pages" in body and (
        not isinstance(body["pages"], (int, float)) or isinstance(body["pages"], bool)
    ):
        ctx.hit(4)
        return 400, {"error": "pages must be a number"}
    ctx.hit(5)
    if "title" in body:
        book["title"] = body["title"]
    if "pages" in body:
        book["pages"] = body["pages"]
    return 200, book


def book_delete(ctx: Ctx):
    ctx.hit(0)
    if ctx.auth_user is None:
        ctx.hit(1)
        return 401, {"error": "authentication required"}
    try:
        book_id = int(ctx.path_vars["book_id"])
    except (TypeError, ValueError):
        ctx.hit(2)
        return 404, {"error": "book not found"}
    if book_id not in ctx.state.books:
        ctx.hit(2)
        return 404, {"error": "book not found"}
    ctx.hit(3)
    del ctx.state.books[book_id]
    return 204, None


def books_bulk(ctx: Ctx):
    # legacy bulk-replace route; deliberately absent from the OpenAPI document
    ctx.hit(0)
    if ctx.auth_user is None:
        ctx.hit(1)
        return 401, {"error": "authentication required"}
    body = ctx.body if isinstance(ctx.body, dict) else {}
    if "books" not in body:
        if ctx.state.fault_on("f8"):
            ctx.fail(
                "f8",
                2,
                _trace(
                    "books",
                    188,
                    "books_bulk",
                    'incoming = payload["books"]',
                    "KeyError: 'books'",
                ),
            )
        ctx.hit(3)
        return 400, {"error": "books field is required"}
    incoming = body["books"]
    if not isinstance(incoming, list) or not all(
        isinstance(b, dict) and isinstance(b.get("title"), str) for b in incoming
    ):
        ctx.hit(3)
        return 400, {"error": "books must be a list of objects with titles"}
    ctx.hit(4)
    ctx.state.books = {
        i + 1: {
            "book_id": i + 1,
            "title": b["title"],
            "username": str(b.get("username", "alice1")),
            "pages": b.get("pages", 0) if isinstance(b.get("pages", 0), (int, float)) else 0,
        }
        for i, b in enumerate(incoming)
    }
    return 200, {"replaced": len(incoming)}


def _check_credentials(ctx: Ctx) -> dict | None:
    body = ctx.body
    if not isinstance(body, dict):
        return None
    username = body.get("username")
    password = body.get("password")
    if not isinstance(username, str):
        return None
    user = ctx.state.users.get(username)
    if user is None or str(password) != str(user["password"]):
        return None
    return user


def auth_login(ctx: Ctx):
    ctx.hit(0)
    user = _check_credentials(ctx)
    if user is None:
        ctx.hit(1)
        return 401, {"error": "invalid credentials"}
    ctx.hit(2)
    token = ctx.state.issue_token(user["username"])
    return 200, {"token": token, "user_id": user["user_id"]}


def auth_refresh(ctx: Ctx):
    ctx.hit(0)
    user = _check_credentials(ctx)
    if user is None:
        ctx.hit(1)
        return 401, {"error": "invalid credentials"}
    ctx.hit(2)
    token = ctx.state.issue_token(user["username"])
    return 200, {"token": token}


ROUTES: tuple[tuple[str, re.Pattern, Callable, str], ...] = (
    ("GET", re.compile(r"^/users/v1$"), users_list, "users_list"),
    ("GET", re.compile(r"^/users/v1/_debug$"), users_debug, "users_debug"),
    ("POST", re.compile(r"^/users/v1/register$"), user_register, "user_register"),
    ("GET", re.compile(r"^/users/v1/(?P<username>[^/]+)$"), user_detail, "user_detail"),
    ("PUT", re.compile(r"^/users/v1/(?P<username>[^/]+)/email$"), user_email, "user_email"),
    ("DELETE", re.compile(r"^/users/v1/(?P<username>[^/]+)$"), user_delete, "user_delete"),
    ("PATCH", re.compile(r"^/users/v1/(?P<username>[^/]+)/account$"), user_account, "user_account"),
    ("GET", re.compile(r"^/books/v1$"), books_list, "books_list"),
    ("POST", re.compile(r"^/books/v1$"), book_create, "book_create"),
    ("PUT", re.compile(r"^/books/v1$"), books_bulk, "books_bulk"),
    ("GET", re.compile(r"^/books/v1/(?P<book_id>[^/]+)$"), book_detail, "book_detail"),
    ("PUT", re.compile(r"^/books/v1/(?P<book_id>[^/]+)$"), book_update, "book_update"),
    ("DELETE", re.compile(r"^/books/v1/(?P<book_id>[^/]+)$"), book_delete, "book_delete"),
    ("POST", re.compile(r"^/auth/login$"), auth_login, "auth_login"),
    ("POST", re.compile(r"^/auth/refresh$"), auth_refresh, "auth_refresh"),
)

# routes documented in /openapi.json (books_bulk stays off the books)
DECLARED_OPERATION_COUNT = 14


# ---------------------------------------------------------------------------
# OpenAPI document


def _param(name, loc, type_, required=True, example=None):
    schema: dict[str, Any] = {"type": type_}
    if example is not None:
        schema["example"] = example
    return {"name": name, "in": loc, "required": required, "schema": schema}


def _body(properties: dict, required: list[str]):
    return {
        "required": True,
        "content": {
            "application/json": {
                "schema": {
                    "type": "object",
                    "properties": properties,
                    "required": required,
                }
            }
        },
    }


_AUTH = [{"bearerAuth": []}]
_OK = {"200": {"description": "ok"}}


def build_openapi() -> dict:
    username_path = _param("username", "path", "string", example="alice1")
    book_id_path = _param("book_id", "path", "integer", example=1)
    return {
        "openapi": "3.0.3",
        "info": {"title": "Lab API", "version": "1.0"},
        "paths": {
            "/users/v1": {"get": {"summary": "List users", "responses": _OK}},
            "/users/v1/_debug": {
                "get": {"summary": "Debug dump of user records", "responses": _OK}
            },
            "/users/v1/register": {
                "post": {
                    "summary": "Register a user",
                    "requestBody": _body(
                        {
                            "username": {"type": "string", "example": "wanda7"},
                            "email": {"type": "string", "example": "wanda7@example.test"},
                            "password": {"type": "string", "example": "pw-wanda"},
                        },
                        ["username"],
                    ),
                    "responses": {"201": {"description": "created"}},
                }
            },
            "/users/v1/{username}": {
                "get": {
                    "summary": "User detail",
                    "parameters": [username_path],
                    "responses": _OK,
                },
                "delete": {
                    "summary": "Delete a user",
                    "parameters": [username_path],
                    "security": _AUTH,
                    "responses": {"204": {"description": "deleted"}},
                },
            },
            "/users/v1/{username}/email": {
                "put": {
                    "summary": "Update a user's email",
                    "parameters": [username_path],
                    "requestBody": _body(
                        {"email": {"type": "string", "example": "alice@example.test"}},
                        ["email"],
                    ),
                    "security": _AUTH,
                    "responses": {"204": {"description": "updated"}},
                }
            },
            "/users/v1/{username}/account": {
                "patch": {
                    "summary": "Update account attributes",
                    "parameters": [username_path],
                    "requestBody": _body(
                        {
                            "user": {
                                "type": "object",
                                "example": {
                                    "email": "alice@example.test",
                                    "first_name": "Alice",
                                    "last_name": "Liddell",
                                },
                            }
                        },
                        ["user"],
                    ),
                    "security": _AUTH,
                    "responses": _OK,
                }
            },
            "/books/v1": {
                "get": {
                    "summary": "List books",
                    "parameters": [
                        _param("all", "query", "boolean", required=False, example=True),
                        _param(
                            "X-Api-Version",
                            "header",
                            "string",
                            required=False,
                            example="1",
                        ),
                    ],
                    "responses": _OK,
                },
                "post": {
                    "summary": "Create a book",
                    "requestBody": _body(
                        {
                            "title": {"type": "string", "example": "Desk Fuzzing"},
                            "pages": {"type": "integer", "example": 180},
                            "username": {"type": "string", "example": "alice1"},
                        },
                        ["title"],
                    ),
                    "security": _AUTH,
                    "responses": {"201": {"description": "created"}},
                },
            },
            "/books/v1/{book_id}": {
                "get": {
                    "summary": "Book detail",
                    "parameters": [book_id_path],
                    "responses": _OK,
                },
                "put": {
                    "summary": "Update a book",
                    "parameters": [book_id_path],
                    "requestBody": _body(
                        {
                            "title": {"type": "string", "example": "Desk Fuzzing II"},
                            "pages": {"type": "integer", "example": 200},
                        },
                        [],
                    ),
                    "security": _AUTH,
                    "responses": _OK,
                },
                "delete": {
                    "summary": "Delete a book",
                    "parameters": [book_id_path],
                    "security": _AUTH,
                    "responses": {"204": {"description": "deleted"}},
                },
            },
            "/auth/login": {
                "post": {
                    "summary": "Obtain a bearer token",
                    "requestBody": _body(
                        {
                            "username": {"type": "string", "example": "alice1"},
                            "password": {"type": "string", "example": "4831"},
                        },
                        ["username", "password"],
                    ),
                    "responses": _OK,
                }
            },
            "/auth/refresh": {
                "post": {
                    "summary": "Refresh a bearer token",
                    "requestBody": _body(
                        {
                            "username": {"type": "string", "example": "alice1"},
                            "password": {"type": "string", "example": "4831"},
                        },
                        ["username", "password"],
                    ),
                    "responses": _OK,
                }
            },
        },
        "components": {
            "securitySchemes": {"bearerAuth": {"type": "http", "scheme": "bearer"}}
        },
    }


# ---------------------------------------------------------------------------
# HTTP layer


class _LabHTTPHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "LabAPI/1.0"
    sys_version = ""

    def log_message(self, *args):  # quiet
        pass

    # -- plumbing -----------------------------------------------------------

    def _send(self, status: int, payload, content_type="application/json", extra=()):
        if payload is None:
            raw = b""
        elif isinstance(payload, (bytes, bytearray)):
            raw = bytes(payload)
        elif isinstance(payload, str):
            raw = payload.encode("utf-8")
        else:
            raw = json.dumps(payload).encode("utf-8")
            content_type = "application/json"
        self.send_response_only(status)
        self.send_header("Server", self.server_version)
        if raw or status not in (204, 304):
            self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(raw)))
        for name, value in extra:
            self.send_header(name, value)
        self.end_headers()
        if raw:
            self.wfile.write(raw)

    def _read_body(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return None
        try:
            return json.loads(raw.decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            return None

    def _auth_user(self, state: LabState):
        header = self.headers.get("Authorization") or ""
        if not header.startswith("Bearer "):
            return None
        username = state.tokens.get(header[len("Bearer "):].strip())
        return state.users.get(username) if username else None

    # -- dispatch -----------------------------------------------------------

    def _dispatch(self, method: str):
        state: LabState = self.server.lab_state  # type: ignore[attr-defined]
        split = urllib.parse.urlsplit(self.path)
        path = urllib.parse.unquote(split.path)
        query = urllib.parse.parse_qs(split.query, keep_blank_values=True)
        body = self._read_body()

        with state.lock:
            if method == "GET" and path == "/openapi.json":
                state.cov.begin()
                return self._send(200, json.dumps(build_openapi(), indent=2))
            if method == "GET" and path == "/__lab__/coverage":
                scope = (query.get("scope") or ["all"])[0]
                blocks = (
                    list(state.cov.last)
                    if scope == "last"
                    else sorted(state.cov.cumulative)
                )
                return self._send(200, blocks)
            if method == "POST" and path == "/__lab__/reset":
                state.reset()
                return self._send(200, {"reset": True})

            state.cov.begin()
            for route_method, pattern, handler, name in ROUTES:
                if route_method != method:
                    continue
                match = pattern.match(path)
                if match is None:
                    continue
                path_vars = {
                    k: urllib.parse.unquote(v) for k, v in match.groupdict().items()
                }
                ctx = Ctx(
                    state,
                    name,
                    path_vars,
                    query,
                    body,
                    self._auth_user(state),
                    headers={k.lower(): v for k, v in self.headers.items()},
                )
                try:
                    result = handler(ctx)
                except LabFault as fault:
                    return self._send(500, fault.body, content_type="text/plain")
                except Exception:
                    return self._send(
                        500,
                        _trace(
                            "wsgi",
                            31,
                            "dispatch",
                            "response = handler(request)",
                            "RuntimeError: unhandled application error",
                        ),
                        content_type="text/plain",
                    )
                status, payload = result
                return self._send(status, payload)

            return self._send(404, {"error": "not found"})

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PUT(self):
        self._dispatch("PUT")

    def do_PATCH(self):
        self._dispatch("PATCH")

    def do_DELETE(self):
        self._dispatch("DELETE")


class LabServer:
    """Runs the lab in a background thread; use as a context manager in code
    and tests, or serve_forever() from the CLI."""

    def __init__(self, config: LabConfig | None = None):
        self.config = config or LabConfig()
        self.state = LabState(self.config)
        try:
            self._httpd = ThreadingHTTPServer(
                (self.config.host, self.config.port), _LabHTTPHandler
            )
        except OSError as exc:
            raise PortInUse(
                f"cannot bind {self.config.host}:{self.config.port}: {exc}"
            ) from exc
        self._httpd.lab_state = self.state  # type: ignore[attr-defined]
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def base_url(self) -> str:
        return f"http://{self.config.host}:{self.port}"

    def start(self) -> "LabServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "LabServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.close()


def serve(config: LabConfig | None = None) -> LabServer:
    """Start the lab on a background thread and return its handle."""
    return LabServer(config).start()
