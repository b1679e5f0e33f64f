"""Parsing/detection quality metrics and unsupervised parser calibration."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence

from .ingest import RawLogRecord
from .parsing import WILDCARD, ParserParams, Template, TemplateMiner
from .preprocess import preprocess_message

LABEL_STATIC = "S"
LABEL_VARIABLE = "V"

DEFAULT_CALIBRATION_GRID: tuple[ParserParams, ...] = tuple(
    ParserParams(tree_depth=depth, sim_threshold=sim)
    for depth in (3, 4, 5)
    for sim in (0.2, 0.3, 0.4, 0.5, 0.6, 0.7)
)
DEFAULT_CALIBRATION_SAMPLE_SIZE = 10_000


@dataclass(frozen=True)
class EvalCounts:
    tp: int
    fp: int
    fn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("counts must be non-negative")


def detection_metrics(counts: EvalCounts) -> tuple[float, float, float]:
    """(precision, recall, f1); any 0/0 ratio is defined as 0."""
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return precision, recall, f1


def grouping_accuracy(
    predicted: Mapping[Hashable, Hashable], truth: Mapping[Hashable, Hashable]
) -> float:
    """Fraction of lines whose predicted group's member set equals the true one.

    Group identifiers are irrelevant; only the induced line partitions are
    compared, so the metric is invariant under relabeling.
    """
    if set(predicted) != set(truth):
        raise ValueError("predicted and truth cover different line sets")
    if not predicted:
        return 1.0
    pred_groups: dict[Hashable, set] = {}
    true_groups: dict[Hashable, set] = {}
    for line, gid in predicted.items():
        pred_groups.setdefault(gid, set()).add(line)
    for line, gid in truth.items():
        true_groups.setdefault(gid, set()).add(line)
    correct = 0
    for members in pred_groups.values():
        line = next(iter(members))
        if true_groups[truth[line]] == members:
            correct += len(members)
    return correct / len(predicted)


LabeledToken = tuple[str, str]  # (label, literal)


def token_accuracy(
    predicted: Sequence[Sequence[LabeledToken]],
    truth: Sequence[Sequence[LabeledToken]],
) -> float:
    """Mean over lines of the per-line fraction of correctly labeled tokens.

    A position whose ground truth is static matches only when the predicted
    label is static and the literal is identical; a ground-truth variable
    position needs just the variable label.
    """
    if len(predicted) != len(truth):
        raise ValueError(
            f"line count mismatch: {len(predicted)} predicted vs {len(truth)} truth"
        )
    if not truth:
        return 1.0
    total = 0.0
    for line_no, (pred_line, true_line) in enumerate(zip(predicted, truth)):
        if len(pred_line) != len(true_line):
            raise ValueError(
                f"token count mismatch on line {line_no}: "
                f"{len(pred_line)} predicted vs {len(true_line)} truth"
            )
        if not true_line:
            total += 1.0
            continue
        hits = 0
        for (p_label, p_text), (t_label, t_text) in zip(pred_line, true_line):
            if t_label == LABEL_VARIABLE:
                hits += p_label == LABEL_VARIABLE
            else:
                hits += p_label == LABEL_STATIC and p_text == t_text
        total += hits / len(true_line)
    return total / len(truth)


def template_token_labels(template: Template) -> list[str]:
    return [LABEL_VARIABLE if tok == WILDCARD else LABEL_STATIC for tok in template.tokens]


def unsupervised_score(
    lines: Sequence[tuple[int, Sequence[str]]],
    templates: Mapping[int, Template] | Iterable[Template],
) -> float:
    """Label-free parse quality: homogeneity times parsimony, both in [0, 1].

    Homogeneity is the support-weighted fraction of template positions that
    are either static or wildcards whose member values actually vary; a
    wildcard covering a single repeated value signals over-generalization.
    Parsimony is 1 - (template_count - 1) / line_count, punishing the
    one-template-per-line degenerate regime.
    """
    if not lines:
        raise ValueError("cannot score an empty corpus")
    if not isinstance(templates, Mapping):
        templates = {t.id: t for t in templates}
    members: dict[int, list[Sequence[str]]] = {}
    for template_id, tokens in lines:
        if template_id not in templates:
            raise ValueError(f"line references unknown template {template_id}")
        members.setdefault(template_id, []).append(tokens)

    weighted = 0.0
    total_weight = 0
    for template_id, token_lists in members.items():
        template = templates[template_id]
        length = len(template.tokens)
        support = len(token_lists)
        if length == 0:
            good = 1.0
        else:
            good_positions = 0
            for pos, literal in enumerate(template.tokens):
                if literal != WILDCARD:
                    good_positions += 1
                else:
                    values = {tokens[pos] for tokens in token_lists}
                    good_positions += len(values) > 1
            good = good_positions / length
        weighted += support * good
        total_weight += support
    homogeneity = weighted / total_weight
    parsimony = 1.0 - (len(members) - 1) / len(lines)
    score = max(0.0, min(1.0, homogeneity)) * max(0.0, min(1.0, parsimony))
    return score


@dataclass(frozen=True)
class CalibrationResult:
    chosen: ParserParams
    grid_scores: tuple[tuple[ParserParams, float], ...]
    sample_size: int

    def to_wire(self) -> dict:
        return {
            "chosen": {
                "tree_depth": self.chosen.tree_depth,
                "sim_threshold": self.chosen.sim_threshold,
                "max_children": self.chosen.max_children,
            },
            "grid_scores": [
                {
                    "tree_depth": params.tree_depth,
                    "sim_threshold": params.sim_threshold,
                    "max_children": params.max_children,
                    "score": score,
                }
                for params, score in self.grid_scores
            ],
            "sample_size": self.sample_size,
        }


def parse_sample(
    token_lines: Sequence[Sequence[str]], params: ParserParams
) -> tuple[list[int], list[Template]]:
    """Parse tokenized lines in a fresh miner; returns per-line ids and templates."""
    miner = TemplateMiner(params)
    assignments = [miner.parse_tokens(tokens)[0] for tokens in token_lines]
    return assignments, miner.export_templates()


def score_params(
    token_lines: Sequence[Sequence[str]], params: ParserParams
) -> tuple[float, int]:
    """Unsupervised score and template count for one grid point."""
    assignments, templates = parse_sample(token_lines, params)
    lines = list(zip(assignments, token_lines))
    score = unsupervised_score(lines, templates)
    return score, len(set(assignments))


def calibrate(
    sample: Sequence[RawLogRecord],
    grid: Sequence[ParserParams] | None = None,
    sample_size: int = DEFAULT_CALIBRATION_SAMPLE_SIZE,
    masks: Sequence[tuple[str, str]] | None = None,
) -> CalibrationResult:
    """Pick parser parameters by unsupervised score over a bootstrap sample.

    Ties break toward fewer templates, then lower sim_threshold, then lower
    tree_depth; deterministic for a fixed sample and grid.
    """
    grid = DEFAULT_CALIBRATION_GRID if grid is None else tuple(grid)
    if not sample:
        raise ValueError("calibration sample must not be empty")
    if not grid:
        raise ValueError("calibration grid must not be empty")
    sample = sample[:sample_size]
    token_lines = [
        [t.text for t in preprocess_message(rec.message, masks).free_text_tokens]
        for rec in sample
    ]
    scored: list[tuple[ParserParams, float, int]] = []
    for params in grid:
        score, template_count = score_params(token_lines, params)
        scored.append((params, score, template_count))
    chosen = min(
        scored,
        key=lambda item: (-item[1], item[2], item[0].sim_threshold, item[0].tree_depth),
    )[0]
    return CalibrationResult(
        chosen=chosen,
        grid_scores=tuple((params, score) for params, score, _ in scored),
        sample_size=len(sample),
    )
