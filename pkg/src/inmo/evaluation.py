"""Top-k ranking metrics and scenario evaluation."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .backbones import top_k_batch
from .data import InductiveScenario, InteractionDataset, ScenarioKind

__all__ = [
    "recall_precision_ndcg",
    "GroupMetrics",
    "EvalReport",
    "PopularRanker",
    "popular_baseline",
    "evaluate",
    "evaluate_scenario",
    "as_percent",
    "GROUP_LABELS",
]


def recall_precision_ndcg(ranked, targets, k: int = 20) -> tuple[float, float, float]:
    """Recall, precision and NDCG of ``ranked[:k]`` against ``targets``.

    Ranks are 1-indexed: a hit at rank p gains ``1 / log2(p + 1)``. The ideal
    DCG assumes ``min(k, |targets|)`` hits at the top. Empty targets raise,
    since such users are left out of averages rather than scored 0.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    targets = set(int(t) for t in targets)
    if not targets:
        raise ValueError("targets must be non-empty")
    top = [int(x) for x in list(ranked)[:k]]
    if len(set(top)) != len(top):
        raise ValueError("ranked list contains duplicates")
    hit_ranks = [p for p, item in enumerate(top, start=1) if item in targets]
    dcg = sum(1.0 / math.log2(p + 1) for p in hit_ranks)
    idcg = sum(1.0 / math.log2(p + 1) for p in range(1, min(k, len(targets)) + 1))
    hits = len(hit_ranks)
    return hits / len(targets), hits / k, dcg / idcg


GROUP_LABELS = {"all": "Over All", "new_user": "New User", "new_item": "New Item"}


def as_percent(x: float) -> str:
    """Metrics are displayed multiplied by 100 with two decimals."""
    return f"{100.0 * x:.2f}"


@dataclass
class GroupMetrics:
    recall: float
    precision: float
    ndcg: float
    n_users: int
    per_user: np.ndarray | None = field(default=None, repr=False)


@dataclass
class EvalReport:
    scenario: str
    k: int
    groups: dict[str, GroupMetrics]

    def __getitem__(self, group: str) -> GroupMetrics:
        return self.groups[group]

    @property
    def recall(self) -> float:
        return self.groups["all"].recall

    @property
    def precision(self) -> float:
        return self.groups["all"].precision

    @property
    def ndcg(self) -> float:
        return self.groups["all"].ndcg

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "k": self.k,
            "groups": {
                g: {"recall": v.recall, "precision": v.precision, "ndcg": v.ndcg, "n_users": v.n_users}
                for g, v in self.groups.items()
            },
        }

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def csv_rows(self) -> list[list[str]]:
        rows = [["scenario", "group", "k", "recall", "precision", "ndcg", "n_users"]]
        for g, v in self.groups.items():
            rows.append([self.scenario, GROUP_LABELS.get(g, g), str(self.k), as_percent(v.recall), as_percent(v.precision), as_percent(v.ndcg), str(v.n_users)])
        return rows

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(self.csv_rows())

    def format(self) -> str:
        lines = [f"{self.scenario} @{self.k}"]
        for g, v in self.groups.items():
            lines.append(
                f"  {GROUP_LABELS.get(g, g):<9} recall {as_percent(v.recall)}  precision {as_percent(v.precision)}  "
                f"ndcg {as_percent(v.ndcg)}  ({v.n_users} users)"
            )
        return "\n".join(lines)


class PopularRanker:
    """Ranks every item by its training degree, the same list for all users."""

    def __init__(self, train_view: InteractionDataset):
        self.degree = train_view.item_degree.astype(np.float64)

    def scores(self, users) -> np.ndarray:
        return np.broadcast_to(self.degree, (len(users), self.degree.size))

    def ranking(self) -> np.ndarray:
        return np.argsort(-self.degree, kind="stable")


def popular_baseline(train_view: InteractionDataset) -> PopularRanker:
    return PopularRanker(train_view)


def _group(values: list[tuple[float, float, float]]) -> GroupMetrics:
    if not values:
        return GroupMetrics(0.0, 0.0, 0.0, 0, np.empty((0, 3)))
    arr = np.asarray(values, dtype=np.float64)
    r, p, n = arr.mean(axis=0)
    return GroupMetrics(float(r), float(p), float(n), len(values), arr)


def evaluate(
    scorer,
    targets: InteractionDataset,
    exclude: InteractionDataset | None = None,
    k: int = 20,
    users=None,
    target_items=None,
    batch_size: int = 1024,
) -> GroupMetrics:
    """Mean metrics over users with at least one target.

    ``scorer.scores(users)`` must return a ``len(users) x m`` matrix.
    ``exclude`` edges are removed from each user's candidates.
    ``target_items`` restricts every user's targets to that item subset.
    """
    if users is None:
        users = np.arange(targets.n)
    users = np.asarray(users, dtype=np.int64)
    keep_item = None
    if target_items is not None:
        keep_item = np.zeros(targets.m, dtype=bool)
        keep_item[np.asarray(target_items, dtype=np.int64)] = True

    def user_targets(u):
        t = targets.user_items(u)
        return t[keep_item[t]] if keep_item is not None else t

    users = np.array([u for u in users if user_targets(u).size > 0], dtype=np.int64)
    mask = exclude.matrix() if exclude is not None else None
    values = []
    for start in range(0, users.size, batch_size):
        chunk = users[start : start + batch_size]
        ranked = top_k_batch(scorer.scores(chunk), None if mask is None else mask[chunk], k)
        for u, items in zip(chunk, ranked):
            values.append(recall_precision_ndcg(items, user_targets(u), k))
    return _group(values)


def evaluate_scenario(model, scenario: InductiveScenario, k: int = 20, use_new: bool = True, exclude_observed: bool = True) -> EvalReport:
    """Evaluate an :class:`~inmo.model.InmoModel` (or a ranker) on a scenario.

    The inference graph is ``test_observed`` (``train_view`` when
    ``use_new`` is off); candidates exclude every observed edge either way
    so the two settings differ only in what the model sees. For the
    new-users/items scenario the report adds ``new_user`` (new users' rows)
    and ``new_item`` (targets restricted to new items) groups.
    """
    graph = scenario.test_observed if use_new else scenario.train_view
    scorer = model.representations(graph) if hasattr(model, "representations") else model
    exclude = scenario.test_observed if exclude_observed else None
    groups = {"all": evaluate(scorer, scenario.test_targets, exclude, k)}
    if scenario.kind == ScenarioKind.NEW_USERS_ITEMS:
        groups["new_user"] = evaluate(scorer, scenario.test_targets, exclude, k, users=scenario.new_user_ids)
        groups["new_item"] = evaluate(scorer, scenario.test_targets, exclude, k, target_items=scenario.new_item_ids)
    name = scenario.kind.value if use_new or scenario.kind == ScenarioKind.TRANSDUCTIVE else f"{scenario.kind.value}-nonew"
    return EvalReport(name, k, groups)
