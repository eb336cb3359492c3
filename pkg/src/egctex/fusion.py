"""Late fusion of per-fold posterior tables by the max, sum and product rules."""

from __future__ import annotations

import csv
import enum
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import CLASSES, ProbabilityMatrix
from .evaluation import f_measure


class Rule(str, enum.Enum):
    MAX = "max"
    SUM = "sum"
    PRODUCT = "product"


class AlignmentError(ValueError):
    pass


def combine(stack: np.ndarray, rule: Rule) -> np.ndarray:
    """Reduce a (members, samples, classes) stack over the member axis."""
    rule = Rule(rule)
    if rule is Rule.MAX:
        return stack.max(axis=0)
    if rule is Rule.SUM:
        return stack.sum(axis=0)
    return stack.prod(axis=0)


def decide(scores: np.ndarray) -> np.ndarray:
    """Column index of the best class per row; exact ties go to C."""
    return np.argmax(scores, axis=1)


@dataclass
class Member:
    """One classifier's matrices over every fold, keyed by fold id."""

    member_id: str
    matrices: dict[int, ProbabilityMatrix]
    kind: str = "H"   # H handcrafted, N imported / non-handcrafted

    @classmethod
    def from_matrices(cls, member_id: str, matrices, kind: str = "H") -> "Member":
        by_fold = {}
        for m in matrices:
            if m.fold_id in by_fold:
                raise AlignmentError(f"{member_id}: fold {m.fold_id} appears twice")
            by_fold[m.fold_id] = m
        return cls(member_id, by_fold, kind)


@dataclass
class FusionEnsemble:
    members: list[Member]
    rule: Rule

    def __post_init__(self):
        self.rule = Rule(self.rule)
        if not self.members:
            raise ValueError("ensemble needs at least one member")

    @property
    def n(self) -> int:
        return len(self.members)

    def aligned(self):
        """Yield ``(fold, sample_ids, stack)`` with rows ordered like the first member."""
        ref = self.members[0]
        folds = sorted(ref.matrices)
        for m in self.members[1:]:
            if sorted(m.matrices) != folds:
                raise AlignmentError(f"{m.member_id} covers folds {sorted(m.matrices)}, expected {folds}")
        for fold in folds:
            ids = ref.matrices[fold].sample_ids
            layers = []
            for m in self.members:
                mat = m.matrices[fold]
                if len(mat.sample_ids) != len(ids) or set(mat.sample_ids) != set(ids):
                    raise AlignmentError(f"{m.member_id}: sample ids of fold {fold} differ from {ref.member_id}")
                pos = {s: i for i, s in enumerate(mat.sample_ids)}
                layers.append(mat.probs[[pos[s] for s in ids]])
            yield fold, list(ids), np.stack(layers)


@dataclass
class FusionOutput:
    sample_ids: list[str]
    folds: list[int]
    scores: np.ndarray       # raw fused scores, not renormalized
    labels: list[str]

    def display_scores(self) -> np.ndarray:
        s = self.scores.sum(axis=1, keepdims=True)
        return np.divide(self.scores, s, out=np.full_like(self.scores, 0.5), where=s > 0)


def fuse(ensemble: FusionEnsemble) -> FusionOutput:
    ids, folds, scores = [], [], []
    for fold, fold_ids, stack in ensemble.aligned():
        ids += fold_ids
        folds += [fold] * len(fold_ids)
        scores.append(combine(stack, ensemble.rule))
    scores = np.vstack(scores)
    return FusionOutput(ids, folds, scores, [CLASSES[k] for k in decide(scores)])


def enumerate_combinations(members, min_size: int = 2) -> list[tuple]:
    """Every subset with at least two members, by size then input order (2**m - m - 1 of them)."""
    members = list(members)
    if len(members) < 2:
        raise ValueError("need at least 2 members to combine")
    return [c for r in range(min_size, len(members) + 1) for c in itertools.combinations(members, r)]


@dataclass
class SweepRow:
    members: tuple[str, ...]
    kinds: tuple[str, ...]
    rule: Rule
    f_measure: float

    @property
    def types(self) -> str:
        ks = set(self.kinds)
        if ks == {"H"}:
            return "H"
        if ks == {"N"}:
            return "N"
        return "N and H"


def sweep(members: list[Member], truth: dict[str, str], rules=(Rule.SUM, Rule.MAX, Rule.PRODUCT),
          executor=None) -> list[SweepRow]:
    """Score every (subset, rule) cell by pooled F-measure, best first."""
    cells = [(combo, Rule(r)) for combo in enumerate_combinations(members) for r in rules]

    def score(cell):
        combo, rule = cell
        out = fuse(FusionEnsemble(list(combo), rule))
        f = f_measure(out.labels, [truth[s] for s in out.sample_ids]).f_measure
        return SweepRow(tuple(m.member_id for m in combo), tuple(m.kind for m in combo), rule, f)

    rows = list(executor.map(score, cells)) if executor else [score(c) for c in cells]
    rule_order = {r: i for i, r in enumerate(Rule)}
    rows.sort(key=lambda r: (-r.f_measure, len(r.members), r.members, rule_order[r.rule]))
    return rows


def write_sweep_csv(rows: list[SweepRow], path, header_comment: str | None = None):
    with Path(path).open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "classifiers", "types", "rule", "f_measure"])
        for i, r in enumerate(rows, start=1):
            w.writerow([i, " ".join(r.members), r.types, r.rule.value, f"{r.f_measure:.6f}"])


def format_sweep(rows: list[SweepRow], top: int | None = None) -> str:
    rows = rows[:top] if top else rows
    width = max([len("Classifiers")] + [len(", ".join(r.members)) for r in rows])
    lines = [f"{'Classifiers':<{width}}  {'Type(s)':<8} {'Rule':<8} F-Measure"]
    for r in rows:
        lines.append(f"{', '.join(r.members):<{width}}  {r.types:<8} {r.rule.value.capitalize():<8} {r.f_measure:.4f}")
    return "\n".join(lines)
