"""Interaction data: loading, preprocessing, per-user splits and the
inductive evaluation scenarios.

All index spaces are dense (``0..n-1`` users, ``0..m-1`` items). A view
(train / valid / test, scenario graphs) shares the index space of the
dataset it was cut from, so entities with zero degree are allowed in views.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DataFormatError",
    "Record",
    "RawInteractions",
    "InteractionDataset",
    "DatasetSplit",
    "ScenarioKind",
    "InductiveScenario",
    "load_interactions",
    "preprocess",
    "split_per_user",
    "split_counts",
    "make_new_interactions_scenario",
    "make_new_users_items_scenario",
    "synthetic_block_dataset",
    "write_interactions",
]


class DataFormatError(ValueError):
    """Raised for malformed input files or datasets that filter to nothing."""


@dataclass(frozen=True)
class Record:
    user: str
    item: str
    rating: float | None = None
    timestamp: int | None = None


@dataclass(frozen=True)
class RawInteractions:
    records: tuple[Record, ...]

    def __len__(self) -> int:
        return len(self.records)

    @property
    def n_users(self) -> int:
        return len({r.user for r in self.records})

    @property
    def n_items(self) -> int:
        return len({r.item for r in self.records})


def load_interactions(path, format: str = "triple-tsv") -> RawInteractions:
    """Parse ``user<sep>item[<sep>rating[<sep>timestamp]]`` lines.

    ``format`` is ``"triple-tsv"`` or ``"triple-csv"``. Lines starting with
    ``#`` and blank lines are skipped. TSV lines are split on any run of
    whitespace, which also accepts the space-separated dumps some public
    datasets ship with.
    """
    if format not in ("triple-tsv", "triple-csv"):
        raise ValueError(f"unknown format {format!r}")
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc

    records = []
    lines = text.splitlines()
    if format == "triple-csv":
        rows: Iterable[list[str]] = csv.reader(lines)
    else:
        rows = (line.split() for line in lines)
    for lineno, (line, fields) in enumerate(zip(lines, rows), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = [f.strip() for f in fields]
        if len(fields) < 2 or not fields[0] or not fields[1]:
            raise DataFormatError(f"{path}:{lineno}: expected at least 2 fields, got {len(fields)}")
        rating = None
        timestamp = None
        try:
            if len(fields) >= 3 and fields[2]:
                rating = float(fields[2])
            if len(fields) >= 4 and fields[3]:
                timestamp = int(float(fields[3]))
        except ValueError as exc:
            raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
        records.append(Record(fields[0], fields[1], rating, timestamp))
    return RawInteractions(tuple(records))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class InteractionDataset:
    """Immutable bipartite 0/1 interaction store.

    Holds the interaction matrix in CSR (user -> items) and CSC-as-CSR
    (item -> users) form; both are built from the same edge list so they are
    exact transposes. Construct with :meth:`from_edges`.
    """

    n: int
    m: int
    user_indptr: np.ndarray
    user_indices: np.ndarray
    item_indptr: np.ndarray
    item_indices: np.ndarray
    user_keys: tuple[str, ...] | None = None
    item_keys: tuple[str, ...] | None = None

    @classmethod
    def from_edges(cls, n, m, users, items, user_keys=None, item_keys=None) -> "InteractionDataset":
        users = np.asarray(users, dtype=np.int64).ravel()
        items = np.asarray(items, dtype=np.int64).ravel()
        if users.shape != items.shape:
            raise ValueError("users and items must have the same length")
        if users.size and (users.min() < 0 or users.max() >= n or items.min() < 0 or items.max() >= m):
            raise ValueError("edge index out of range")
        code = np.unique(users * m + items)
        users, items = np.divmod(code, m) if m else (code, code)
        # ``code`` is sorted, so (users, items) is already in row-major order.
        user_indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(users, minlength=n), out=user_indptr[1:])
        order = np.lexsort((users, items))
        item_indptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(np.bincount(items, minlength=m), out=item_indptr[1:])
        return cls(
            int(n),
            int(m),
            _readonly(user_indptr),
            _readonly(items),
            _readonly(item_indptr),
            _readonly(users[order]),
            None if user_keys is None else tuple(user_keys),
            None if item_keys is None else tuple(item_keys),
        )

    @classmethod
    def from_matrix(cls, Y) -> "InteractionDataset":
        """Build from a dense or sparse 0/1 matrix (nonzeros are edges)."""
        coo = sp.coo_matrix(Y)
        return cls.from_edges(coo.shape[0], coo.shape[1], coo.row, coo.col)

    @property
    def n_edges(self) -> int:
        return int(self.user_indices.size)

    def user_items(self, u: int) -> np.ndarray:
        return self.user_indices[self.user_indptr[u] : self.user_indptr[u + 1]]

    def item_users(self, i: int) -> np.ndarray:
        return self.item_indices[self.item_indptr[i] : self.item_indptr[i + 1]]

    @property
    def user_degree(self) -> np.ndarray:
        return np.diff(self.user_indptr)

    @property
    def item_degree(self) -> np.ndarray:
        return np.diff(self.item_indptr)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Edge list ``(users, items)`` sorted by user then item."""
        users = np.repeat(np.arange(self.n, dtype=np.int64), self.user_degree)
        return users, self.user_indices.copy()

    def edge_codes(self) -> np.ndarray:
        """Sorted ``u * m + i`` codes, handy for set operations on edges."""
        users, items = self.edges()
        return users * self.m + items

    def matrix(self, dtype=np.float64) -> sp.csr_matrix:
        """The n x m interaction matrix Y."""
        data = np.ones(self.n_edges, dtype=dtype)
        return sp.csr_matrix((data, self.user_indices, self.user_indptr), shape=(self.n, self.m))

    def dense(self) -> np.ndarray:
        return self.matrix().toarray()

    def transpose(self) -> "InteractionDataset":
        return InteractionDataset(
            self.m,
            self.n,
            self.item_indptr,
            self.item_indices,
            self.user_indptr,
            self.user_indices,
            self.item_keys,
            self.user_keys,
        )

    def with_edges(self, users, items) -> "InteractionDataset":
        """A view on the same index space with a different edge set."""
        return InteractionDataset.from_edges(self.n, self.m, users, items, self.user_keys, self.item_keys)

    def union(self, other: "InteractionDataset") -> "InteractionDataset":
        self._check_space(other)
        u1, i1 = self.edges()
        u2, i2 = other.edges()
        return self.with_edges(np.concatenate([u1, u2]), np.concatenate([i1, i2]))

    def difference(self, other: "InteractionDataset") -> "InteractionDataset":
        self._check_space(other)
        keep = ~np.isin(self.edge_codes(), other.edge_codes())
        u, i = self.edges()
        return self.with_edges(u[keep], i[keep])

    def _check_space(self, other: "InteractionDataset") -> None:
        if (self.n, self.m) != (other.n, other.m):
            raise ValueError(f"index spaces differ: {(self.n, self.m)} vs {(other.n, other.m)}")

    def check_invariants(self, require_nonempty: bool = False) -> None:
        """Raise AssertionError if the two adjacency directions disagree."""
        assert self.user_indptr[-1] == self.item_indptr[-1] == self.n_edges
        for u in range(self.n):
            row = self.user_items(u)
            assert np.all(np.diff(row) > 0), f"user {u} adjacency not strictly sorted"
        for i in range(self.m):
            col = self.item_users(i)
            assert np.all(np.diff(col) > 0), f"item {i} adjacency not strictly sorted"
        fwd = set(zip(*(a.tolist() for a in self.edges())))
        items = np.repeat(np.arange(self.m), self.item_degree)
        bwd = set(zip(self.item_indices.tolist(), items.tolist()))
        assert fwd == bwd, "user_adj and item_adj are not transposes"
        if require_nonempty:
            assert self.user_degree.min(initial=1) >= 1 and self.item_degree.min(initial=1) >= 1

    def dump(self, path) -> None:
        """Write one ``user<TAB>item`` line per edge, dense indices."""
        users, items = self.edges()
        with open(path, "w") as fh:
            for u, i in zip(users.tolist(), items.tolist()):
                fh.write(f"{u}\t{i}\n")

    def summary(self) -> dict:
        density = self.n_edges / (self.n * self.m) if self.n and self.m else 0.0
        return {"users": self.n, "items": self.m, "interactions": self.n_edges, "density": density}

    def __repr__(self) -> str:
        return f"InteractionDataset(n={self.n}, m={self.m}, edges={self.n_edges})"


def preprocess(raw: RawInteractions, rating_threshold: float = 3, min_degree: int = 10) -> InteractionDataset:
    """Threshold ratings, deduplicate, k-core filter and densely reindex.

    Records with a rating keep only ``rating > rating_threshold``; records
    without a rating (check-in data) are all kept. Users and items with fewer
    than ``min_degree`` interactions are removed repeatedly until no such
    entity remains. Dense indices follow order of first appearance.
    """
    if len(raw) == 0:
        raise DataFormatError("no interactions to preprocess")
    kept = [r for r in raw.records if r.rating is None or r.rating > rating_threshold]
    user_keys: dict[str, int] = {}
    item_keys: dict[str, int] = {}
    users = np.fromiter((user_keys.setdefault(r.user, len(user_keys)) for r in kept), dtype=np.int64, count=len(kept))
    items = np.fromiter((item_keys.setdefault(r.item, len(item_keys)) for r in kept), dtype=np.int64, count=len(kept))
    n, m = len(user_keys), len(item_keys)
    if users.size:
        code = np.unique(users * m + items)
        users, items = np.divmod(code, m)

    while users.size:
        udeg = np.bincount(users, minlength=n)
        ideg = np.bincount(items, minlength=m)
        keep = (udeg[users] >= min_degree) & (ideg[items] >= min_degree)
        if keep.all():
            break
        users, items = users[keep], items[keep]
    if users.size == 0:
        raise DataFormatError("no interactions left after rating threshold and degree filtering")

    # Reindex survivors densely, preserving first-appearance order.
    ukeys = np.array(list(user_keys), dtype=object)
    ikeys = np.array(list(item_keys), dtype=object)
    live_u = np.unique(users)
    live_i = np.unique(items)
    new_u = np.searchsorted(live_u, users)
    new_i = np.searchsorted(live_i, items)
    return InteractionDataset.from_edges(
        live_u.size, live_i.size, new_u, new_i, ukeys[live_u].tolist(), ikeys[live_i].tolist()
    )


def write_interactions(ds: InteractionDataset, path, sep: str = "\t") -> None:
    """Write the dataset back out in the raw triple format (keys, no ratings)."""
    users, items = ds.edges()
    ukeys = ds.user_keys or tuple(str(u) for u in range(ds.n))
    ikeys = ds.item_keys or tuple(str(i) for i in range(ds.m))
    with open(path, "w") as fh:
        for u, i in zip(users.tolist(), items.tolist()):
            fh.write(f"{ukeys[u]}{sep}{ikeys[i]}\n")


@dataclass(frozen=True, eq=False)
class DatasetSplit:
    train: InteractionDataset
    valid: InteractionDataset
    test: InteractionDataset
    seed: int
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)

    @property
    def full(self) -> InteractionDataset:
        return self.train.union(self.valid).union(self.test)

    def manifest(self) -> dict:
        def edges(ds):
            u, i = ds.edges()
            return np.stack([u, i], axis=1).tolist()

        return {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "n_users": self.train.n,
            "n_items": self.train.m,
            "train": edges(self.train),
            "valid": edges(self.valid),
            "test": edges(self.test),
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.manifest(), fh, separators=(",", ":"))

    @classmethod
    def load(cls, path) -> "DatasetSplit":
        with open(path) as fh:
            doc = json.load(fh)
        n, m = doc["n_users"], doc["n_items"]

        def view(rows):
            arr = np.asarray(rows, dtype=np.int64).reshape(-1, 2)
            return InteractionDataset.from_edges(n, m, arr[:, 0], arr[:, 1])

        return cls(view(doc["train"]), view(doc["valid"]), view(doc["test"]), doc["seed"], tuple(doc["ratios"]))


def split_counts(degree: int, ratios: Sequence[float]) -> tuple[int, ...]:
    """Per-part edge counts: floor of each share, leftovers handed out
    round-robin starting with train."""
    counts = [math.floor(degree * r + 1e-9) for r in ratios]
    leftover = degree - sum(counts)
    j = 0
    while leftover > 0:
        counts[j % len(counts)] += 1
        leftover -= 1
        j += 1
    return tuple(counts)


def split_per_user(ds: InteractionDataset, ratios=(0.7, 0.1, 0.2), seed: int = 0) -> DatasetSplit:
    """Randomly partition every user's interactions into train/valid/test."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or not math.isclose(sum(ratios), 1.0):
        raise ValueError(f"ratios must be three positive numbers summing to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    parts: list[list[np.ndarray]] = [[], [], []]
    owners: list[list[np.ndarray]] = [[], [], []]
    for u in range(ds.n):
        items = rng.permutation(ds.user_items(u))
        start = 0
        for k, c in enumerate(split_counts(items.size, ratios)):
            parts[k].append(items[start : start + c])
            owners[k].append(np.full(c, u, dtype=np.int64))
            start += c
    views = [
        ds.with_edges(np.concatenate(owners[k] or [np.empty(0, np.int64)]), np.concatenate(parts[k] or [np.empty(0, np.int64)]))
        for k in range(3)
    ]
    return DatasetSplit(views[0], views[1], views[2], seed, ratios)


class ScenarioKind(str, Enum):
    TRANSDUCTIVE = "transductive"
    NEW_INTERACTIONS = "new-interactions"
    NEW_USERS_ITEMS = "new-users-items"


@dataclass(frozen=True, eq=False)
class InductiveScenario:
    """Training view plus what becomes observable at test time.

    ``test_observed`` is the interaction graph available at inference
    (training edges plus the post-training ones); ``test_targets`` are the
    held-out edges to rank.
    """

    kind: ScenarioKind
    train_view: InteractionDataset
    valid_view: InteractionDataset
    test_observed: InteractionDataset
    test_targets: InteractionDataset
    new_user_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    new_item_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    seed: int | None = None

    @property
    def new_interactions(self) -> InteractionDataset:
        return self.test_observed.difference(self.train_view)

    @classmethod
    def transductive(cls, split: DatasetSplit) -> "InductiveScenario":
        return cls(ScenarioKind.TRANSDUCTIVE, split.train, split.valid, split.train, split.test, seed=split.seed)


def make_new_interactions_scenario(split: DatasetSplit, hold_frac: float = 0.2, seed: int = 0) -> InductiveScenario:
    """Hold out ``floor(hold_frac * |N_u^train|)`` training edges per user;
    they reappear at test time as new interactions."""
    if not 0 < hold_frac < 1:
        raise ValueError(f"hold_frac must lie in (0, 1), got {hold_frac}")
    rng = np.random.default_rng(seed)
    train = split.train
    keep_u, keep_i = [], []
    for u in range(train.n):
        items = rng.permutation(train.user_items(u))
        n_new = math.floor(items.size * hold_frac + 1e-9)
        rest = items[n_new:]
        keep_u.append(np.full(rest.size, u, dtype=np.int64))
        keep_i.append(rest)
    train_view = train.with_edges(np.concatenate(keep_u), np.concatenate(keep_i))
    return InductiveScenario(
        ScenarioKind.NEW_INTERACTIONS, train_view, split.valid, train, split.test, seed=seed
    )


def make_new_users_items_scenario(split: DatasetSplit, entity_frac: float = 0.2, seed: int = 0) -> InductiveScenario:
    """Mark ``floor(entity_frac * n)`` users and ``floor(entity_frac * m)``
    items as new and strip all their train/valid edges from training.

    At test time the stripped edges come back as observed interactions; the
    test edges are the same as in the transductive split.
    """
    if not 0 < entity_frac < 1:
        raise ValueError(f"entity_frac must lie in (0, 1), got {entity_frac}")
    rng = np.random.default_rng(seed)
    n, m = split.train.n, split.train.m
    new_users = np.sort(rng.choice(n, size=math.floor(n * entity_frac + 1e-9), replace=False))
    new_items = np.sort(rng.choice(m, size=math.floor(m * entity_frac + 1e-9), replace=False))
    is_new_u = np.zeros(n, dtype=bool)
    is_new_u[new_users] = True
    is_new_i = np.zeros(m, dtype=bool)
    is_new_i[new_items] = True

    def strip(view: InteractionDataset) -> InteractionDataset:
        u, i = view.edges()
        keep = ~(is_new_u[u] | is_new_i[i])
        return view.with_edges(u[keep], i[keep])

    train_view = strip(split.train)
    if train_view.n_edges == 0:
        raise ValueError("removing new users/items leaves an empty training graph")
    valid_view = strip(split.valid)
    observed = split.train.union(split.valid).difference(valid_view)
    return InductiveScenario(
        ScenarioKind.NEW_USERS_ITEMS,
        train_view,
        valid_view,
        observed,
        split.test,
        _readonly(new_users),
        _readonly(new_items),
        seed=seed,
    )


def synthetic_block_dataset(
    n_users: int = 200,
    n_items: int = 150,
    n_blocks: int = 4,
    mean_degree: float = 40.0,
    concentration: float | None = 0.5,
    p_out: float = 0.01,
    popularity_skew: float = 0.0,
    activity_sigma: float = 0.0,
    seed: int = 0,
) -> InteractionDataset:
    """Items are split into ``n_blocks`` communities and every user draws a
    block preference vector ``theta_u``. With ``concentration=None`` each
    user belongs to a single block; otherwise ``theta_u`` is
    Dirichlet(``concentration``) so users mix several blocks. User u picks
    item i with probability ``theta_u[block(i)] * mean_degree / |block| +
    p_out``, so a user's expected in-block degree is ``mean_degree``.

    ``popularity_skew > 0`` tilts item probabilities by ``(rank + 1) **
    -skew`` (renormalized to mean 1), and ``activity_sigma > 0`` scales each
    user's row by a mean-1 lognormal factor. Entities left without edges
    are dropped.
    """
    rng = np.random.default_rng(seed)
    iblock = np.arange(n_items) % n_blocks
    if concentration is None:
        theta = np.eye(n_blocks)[np.arange(n_users) % n_blocks]
    else:
        theta = rng.dirichlet(np.full(n_blocks, float(concentration)), size=n_users)
    per_block = np.bincount(iblock, minlength=n_blocks)
    prob = theta[:, iblock] * mean_degree / per_block[iblock] + p_out
    if popularity_skew > 0:
        tilt = (rng.permutation(n_items) + 1.0) ** -popularity_skew
        prob = prob * (tilt / tilt.mean())[None, :]
    if activity_sigma > 0:
        prob = prob * rng.lognormal(-0.5 * activity_sigma**2, activity_sigma, size=n_users)[:, None]
    Y = rng.random((n_users, n_items)) < np.clip(prob, 0.0, 1.0)
    while not (Y.any(axis=1).all() and Y.any(axis=0).all()):
        Y = Y[Y.any(axis=1)][:, Y.any(axis=0)]
    ds = InteractionDataset.from_matrix(Y)
    keys_u = tuple(f"u{u}" for u in range(ds.n))
    keys_i = tuple(f"i{i}" for i in range(ds.m))
    return InteractionDataset.from_edges(ds.n, ds.m, *ds.edges(), keys_u, keys_i)
