"""Online template mining over tokenized messages.

Templates are mined with a fixed-depth search tree: the first level is keyed
by token count, the next levels by leading tokens (digit-bearing tokens route
to a wildcard branch), and leaves hold candidate templates compared by
positional similarity.  Matching lines generalize differing positions to the
wildcard; unmatched lines start a new template.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .ingest import iso_to_ms, ms_to_iso

WILDCARD = "<*>"
EMPTY_TEMPLATE_ID = 0


def _has_digit(token: str) -> bool:
    return any(ch.isdigit() for ch in token)


@dataclass(frozen=True)
class ParserParams:
    """Tuning knobs for the mining tree.

    tree_depth counts the levels spent on leading tokens plus the length
    level; descent consumes the first (tree_depth - 1) tokens.
    """

    tree_depth: int = 4
    sim_threshold: float = 0.4
    max_children: int = 100

    def __post_init__(self) -> None:
        if self.tree_depth < 2:
            raise ValueError("tree_depth must be >= 2")
        if not 0.0 < self.sim_threshold <= 1.0:
            raise ValueError("sim_threshold must be in (0, 1]")
        if self.max_children < 2:
            raise ValueError("max_children must be >= 2")


@dataclass(frozen=True)
class Template:
    """Immutable snapshot of a mined template."""

    id: int
    tokens: tuple[str, ...]
    support: int

    @property
    def wildcard_positions(self) -> tuple[int, ...]:
        return tuple(i for i, tok in enumerate(self.tokens) if tok == WILDCARD)

    def render(self) -> str:
        return " ".join(self.tokens)


@dataclass
class _MutableTemplate:
    id: int
    tokens: list[str]
    support: int = 0


@dataclass
class _Node:
    children: dict = field(default_factory=dict)
    templates: list = field(default_factory=list)


def template_similarity(tokens: Sequence[str], template_tokens: Sequence[str]) -> float:
    """Fraction of positions where the token equals the template literal.

    Wildcard positions count as matches; a length mismatch is similarity 0.
    """
    if len(tokens) != len(template_tokens):
        return 0.0
    if not tokens:
        return 1.0
    matched = sum(
        1
        for tok, lit in zip(tokens, template_tokens)
        if lit == WILDCARD or tok == lit
    )
    return matched / len(tokens)


class TemplateMiner:
    """Single-writer online template mining state.

    Horizontal scaling partitions the stream (e.g. by source) across
    independent miners; exported snapshots are immutable and shareable.
    """

    def __init__(self, params: ParserParams | None = None) -> None:
        self.params = params or ParserParams()
        self._root: dict[int, _Node] = {}
        self._templates: dict[int, _MutableTemplate] = {
            EMPTY_TEMPLATE_ID: _MutableTemplate(EMPTY_TEMPLATE_ID, [], 0)
        }
        self._next_id = 1

    # -- tree walk -------------------------------------------------------

    def _descend_tokens(self, tokens: Sequence[str]) -> Iterable[str]:
        limit = min(self.params.tree_depth - 1, len(tokens))
        for i in range(limit):
            yield WILDCARD if _has_digit(tokens[i]) else tokens[i]

    def _search_leaf(self, tokens: Sequence[str]) -> _Node | None:
        node = self._root.get(len(tokens))
        if node is None:
            return None
        for key in self._descend_tokens(tokens):
            if key in node.children:
                node = node.children[key]
            elif WILDCARD in node.children:
                node = node.children[WILDCARD]
            else:
                return None
        return node

    def _insert_leaf(self, tokens: Sequence[str]) -> _Node:
        node = self._root.setdefault(len(tokens), _Node())
        for key in self._descend_tokens(tokens):
            children = node.children
            if key in children:
                node = children[key]
                continue
            if key == WILDCARD:
                node = children.setdefault(WILDCARD, _Node())
                continue
            if len(children) + 1 < self.params.max_children:
                node = children.setdefault(key, _Node())
            else:
                # Branch cap reached: overflow tokens share a catch-all child.
                node = children.setdefault(WILDCARD, _Node())
        return node

    # -- parsing ---------------------------------------------------------

    def _best_match(self, leaf: _Node | None, tokens: Sequence[str]) -> _MutableTemplate | None:
        if leaf is None:
            return None
        best: _MutableTemplate | None = None
        best_sim = -1.0
        for tpl in leaf.templates:
            sim = template_similarity(tokens, tpl.tokens)
            if sim > best_sim or (sim == best_sim and best is not None and tpl.id < best.id):
                best = tpl
                best_sim = sim
        if best is not None and best_sim >= self.params.sim_threshold:
            return best
        return None

    def parse_tokens(self, tokens: Sequence[str]) -> tuple[int, list[tuple[int, str]]]:
        """Assign the token list to a template, mutating the mining state.

        Returns (template_id, bindings) where bindings pair each wildcard
        slot's token position with the bound token text.  Empty token lists
        take the reserved empty template.
        """
        tokens = [t.text if hasattr(t, "text") else t for t in tokens]
        if not tokens:
            self._templates[EMPTY_TEMPLATE_ID].support += 1
            return EMPTY_TEMPLATE_ID, []
        match = self._best_match(self._search_leaf(tokens), tokens)
        if match is None:
            # Digit-bearing tokens become slots right away; everything else
            # is kept verbatim until a differing line generalizes it.
            tpl = _MutableTemplate(
                self._next_id,
                [WILDCARD if _has_digit(tok) else tok for tok in tokens],
            )
            self._next_id += 1
            self._templates[tpl.id] = tpl
            self._insert_leaf(tokens).templates.append(tpl)
            match = tpl
        else:
            for i, tok in enumerate(tokens):
                if match.tokens[i] != WILDCARD and match.tokens[i] != tok:
                    match.tokens[i] = WILDCARD
        match.support += 1
        bindings = [
            (i, tokens[i]) for i, lit in enumerate(match.tokens) if lit == WILDCARD
        ]
        return match.id, bindings

    # -- snapshots -------------------------------------------------------

    def export_templates(self) -> list[Template]:
        """Immutable template snapshot, sorted by id."""
        return [
            Template(tpl.id, tuple(tpl.tokens), tpl.support)
            for tpl in sorted(self._templates.values(), key=lambda t: t.id)
        ]

    def template(self, template_id: int) -> Template:
        tpl = self._templates.get(template_id)
        if tpl is None:
            raise KeyError(f"unknown template id {template_id}")
        return Template(tpl.id, tuple(tpl.tokens), tpl.support)

    @property
    def template_count(self) -> int:
        return len(self._templates)

    def to_state_dict(self) -> dict:
        return {
            "params": {
                "tree_depth": self.params.tree_depth,
                "sim_threshold": self.params.sim_threshold,
                "max_children": self.params.max_children,
            },
            "next_id": self._next_id,
            "templates": [
                {"id": t.id, "tokens": list(t.tokens), "support": t.support}
                for t in sorted(self._templates.values(), key=lambda t: t.id)
            ],
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "TemplateMiner":
        miner = cls(ParserParams(**state["params"]))
        for entry in state["templates"]:
            tpl = _MutableTemplate(entry["id"], list(entry["tokens"]), entry["support"])
            miner._templates[tpl.id] = tpl
            if tpl.id != EMPTY_TEMPLATE_ID:
                miner._insert_leaf(tpl.tokens).templates.append(tpl)
        miner._next_id = state["next_id"]
        return miner


@dataclass(frozen=True)
class ParsedLog:
    """A raw record's binding to a mined template."""

    seq_no: int
    timestamp: int
    source: str
    template_id: int
    bindings: tuple[tuple[int, str], ...]
    payload: tuple[tuple[str, str], ...] = ()

    def to_wire(self) -> dict:
        return {
            "seq_no": self.seq_no,
            "ts": ms_to_iso(self.timestamp),
            "source": self.source,
            "template_id": self.template_id,
            "bindings": [text for _, text in self.bindings],
            "slots": [pos for pos, _ in self.bindings],
            "payload": {k: v for k, v in self.payload},
        }


def parsed_log_from_wire(row: dict) -> ParsedLog:
    slots = [int(s) for s in row.get("slots", [])]
    bindings = tuple(zip(slots, row.get("bindings", [])))
    return ParsedLog(
        seq_no=int(row["seq_no"]),
        timestamp=iso_to_ms(row["ts"]) if "ts" in row else int(row["seq_no"]),
        source=row["source"],
        template_id=int(row["template_id"]),
        bindings=bindings,
        payload=tuple(sorted(row.get("payload", {}).items())),
    )


def write_templates(templates: Iterable[Template], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tpl in templates:
            fh.write(
                json.dumps(
                    {"id": tpl.id, "template": tpl.render(), "support": tpl.support}
                )
                + "\n"
            )


def read_templates(path) -> dict[int, Template]:
    templates: dict[int, Template] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        tpl = Template(
            id=int(row["id"]),
            tokens=tuple(row["template"].split()),
            support=int(row["support"]),
        )
        templates[tpl.id] = tpl
    return templates
