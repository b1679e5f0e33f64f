"""Message preprocessing: trailing structured-payload extraction and tokenization.

Many services append machine-readable context to free-text messages, e.g.
``Send 42 bytes to 121.13.4.26 {user_id=125, service_name=dart_vader}``.
Splitting that payload off before template mining shortens messages and turns
the payload into structured fields that ride along with the parsed line.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Sequence
from xml.etree import ElementTree

PAYLOAD_NONE = "none"
PAYLOAD_JSON = "json"
PAYLOAD_XML = "xml"
PAYLOAD_KV = "kv-braces"

_XML_CLOSE_RE = re.compile(r"</([A-Za-z_][\w.\-]*)>\s*$")


@dataclass(frozen=True)
class Token:
    text: str
    index: int


@dataclass(frozen=True)
class PreprocessedMessage:
    free_text_tokens: tuple[Token, ...]
    payload: tuple[tuple[str, str], ...]
    payload_kind: str
    free_text: str = ""


def tokenize(free_text: str) -> list[Token]:
    """Split on runs of whitespace; indices are consecutive from 0."""
    return [Token(text, i) for i, text in enumerate(free_text.split())]


def _scalar_to_str(value: object) -> str:
    if isinstance(value, str):
        return value
    return json.dumps(value)


def _flatten_json(obj: dict, prefix: str = "") -> list[tuple[str, str]]:
    pairs: list[tuple[str, str]] = []
    for key, value in obj.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            pairs.extend(_flatten_json(value, dotted + "."))
        elif isinstance(value, list):
            for i, item in enumerate(value):
                if isinstance(item, dict):
                    pairs.extend(_flatten_json(item, f"{dotted}.{i}."))
                else:
                    pairs.append((f"{dotted}.{i}", _scalar_to_str(item)))
        else:
            pairs.append((dotted, _scalar_to_str(value)))
    return pairs


def _flatten_xml(element: ElementTree.Element, prefix: str = "") -> list[tuple[str, str]]:
    pairs: list[tuple[str, str]] = []
    for name, value in element.attrib.items():
        pairs.append((f"{prefix}{name}" if prefix else name, value))
    children = list(element)
    if not children:
        text = (element.text or "").strip()
        if text:
            pairs.append((prefix.rstrip(".") or element.tag, text))
        return pairs
    for child in children:
        pairs.extend(_flatten_xml(child, f"{prefix}{child.tag}."))
    return pairs


def _find_balanced_brace_start(text: str) -> int | None:
    """Index of the '{' matching a trailing '}', or None.

    Tracks double-quoted strings so braces inside JSON string values do not
    break the scan.
    """
    depth = 0
    in_string = False
    for i in range(len(text) - 1, -1, -1):
        ch = text[i]
        if in_string:
            if ch == '"' and (i == 0 or text[i - 1] != "\\"):
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "}":
            depth += 1
        elif ch == "{":
            depth -= 1
            if depth == 0:
                return i
    return None


def _parse_kv_block(body: str) -> list[tuple[str, str]] | None:
    """Parse 'k=v, k2=v2' (top-level commas only); None when any part lacks '='."""
    parts: list[str] = []
    depth = 0
    current: list[str] = []
    for ch in body:
        if ch in "{[(":
            depth += 1
        elif ch in "}])":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
    parts.append("".join(current))
    pairs: list[tuple[str, str]] = []
    for part in parts:
        if "=" not in part:
            return None
        key, _, value = part.partition("=")
        key = key.strip()
        if not key:
            return None
        pairs.append((key, value.strip()))
    return pairs


def _extract_trailing_block(message: str) -> tuple[str, list[tuple[str, str]], str] | None:
    """Split one structured block off the message tail.

    Returns (remaining free text, pairs, kind) or None when the tail carries
    no recognizable payload.
    """
    stripped = message.rstrip()
    if stripped.endswith("}"):
        start = _find_balanced_brace_start(stripped)
        if start is None:
            return None
        block = stripped[start:]
        head = stripped[:start].rstrip()
        try:
            parsed = json.loads(block)
        except json.JSONDecodeError:
            parsed = None
        if isinstance(parsed, dict):
            return head, _flatten_json(parsed), PAYLOAD_JSON
        pairs = _parse_kv_block(block[1:-1])
        if pairs is not None:
            return head, pairs, PAYLOAD_KV
        return None
    close = _XML_CLOSE_RE.search(stripped)
    if close:
        tag = close.group(1)
        # Find the opening tag that balances the trailing close.
        opens = [m.start() for m in re.finditer(rf"<{re.escape(tag)}(?=[\s/>])|<{re.escape(tag)}>", stripped)]
        for start in reversed(opens):
            candidate = stripped[start:]
            try:
                element = ElementTree.fromstring(candidate)
            except ElementTree.ParseError:
                continue
            return stripped[:start].rstrip(), _flatten_xml(element), PAYLOAD_XML
    return None


def extract_structured_payload(message: str) -> PreprocessedMessage:
    """Detect a trailing {...} or <tag>...</tag> payload and flatten it.

    Detection failure is not an error; the whole message stays free text.
    Stacked trailing blocks are consumed until the remaining tail is plain,
    which keeps the operation idempotent on its own free-text output.
    """
    free_text = message
    pairs: list[tuple[str, str]] = []
    kind = PAYLOAD_NONE
    while True:
        extracted = _extract_trailing_block(free_text)
        if extracted is None:
            break
        free_text, block_pairs, block_kind = extracted
        pairs = block_pairs + pairs
        if kind == PAYLOAD_NONE:
            kind = block_kind
    return PreprocessedMessage(
        free_text_tokens=(),
        payload=tuple(pairs),
        payload_kind=kind,
        free_text=free_text,
    )


def apply_masks(text: str, masks: Sequence[tuple[str, str]] | None) -> str:
    """Apply optional (pattern, placeholder) substitutions before tokenization."""
    if not masks:
        return text
    for pattern, placeholder in masks:
        text = re.sub(pattern, placeholder, text)
    return text


def preprocess_message(
    message: str, masks: Sequence[tuple[str, str]] | None = None
) -> PreprocessedMessage:
    """Full preprocessing: payload split, optional masks, then tokenization."""
    split = extract_structured_payload(message)
    free_text = apply_masks(split.free_text, masks)
    return PreprocessedMessage(
        free_text_tokens=tuple(tokenize(free_text)),
        payload=split.payload,
        payload_kind=split.payload_kind,
        free_text=free_text,
    )
