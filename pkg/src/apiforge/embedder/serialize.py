"""Deterministic textual form of an HTTP exchange for the tokenizer.

One exchange becomes one sentence:

    STATUS 200 PROTO HTTP/1.1 REDIRECTS 0 ENC utf-8 | ct:val | ... | BODY ...

Headers keep their received order; a small noise set (Date, etag,
report-to, Last-Modified) is dropped because those vary without carrying
signal. Bodies are decoded when the charset is known, otherwise replaced by
a binary marker.
"""
from __future__ import annotations

import re

from ..httpexec import HttpExchange

NOISE_HEADERS = frozenset({"date", "etag", "report-to", "last-modified"})

_TEXTUAL_TYPES = re.compile(r"^(text/|application/(json|xml|x-www-form-urlencoded))|[+](json|xml)$")
_CHARSET_RE = re.compile(r"charset=\"?([A-Za-z0-9_.:-]+)\"?", re.IGNORECASE)


def _content_type(x: HttpExchange) -> str:
    for name, value in x.headers:
        if name.lower() == "content-type":
            return value
    return ""


def _charset(x: HttpExchange) -> tuple[str, bool]:
    """(effective charset, whether it is actually known)."""
    ctype = _content_type(x)
    match = _CHARSET_RE.search(ctype)
    if match:
        return match.group(1).lower(), True
    media = ctype.split(";")[0].strip().lower()
    if not x.body:
        return "utf-8", True
    if media and (_TEXTUAL_TYPES.match(media) or media.endswith(("+json", "+xml"))):
        return "utf-8", True
    return "utf-8", False


def _body_text(x: HttpExchange) -> str:
    charset, known = _charset(x)
    if not x.body:
        return ""
    if known:
        try:
            return x.body.decode(charset, errors="strict")
        except (UnicodeDecodeError, LookupError):
            pass
    return f"<binary:{len(x.body)}>"


def serialize_response(x: HttpExchange) -> str:
    charset, _ = _charset(x)
    head = (
        f"STATUS {x.status} PROTO {x.protocol or '-'} "
        f"REDIRECTS {x.redirects} ENC {charset}"
    )
    parts = [head]
    for name, value in x.headers:
        if name.lower() in NOISE_HEADERS:
            continue
        parts.append(f"{name}:{value}")
    parts.append(f"BODY {_body_text(x)}")
    return " | ".join(parts)
