"""Interaction datasets, leave-one-out splitting and positional removal.

Raw MovieLens / Foursquare files are grouped per user, ordered by timestamp
and densely re-indexed. Training prefixes can then be perturbed by dropping
``n`` items from the beginning, middle or end before a model sees them.
"""

from __future__ import annotations

import enum
import io
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

MIN_LENGTH = 11


class Scenario(str, enum.Enum):
    BEGINNING = "beginning"
    MIDDLE = "middle"
    END = "end"


@dataclass(frozen=True)
class UserSequence:
    user_id: int
    items: tuple[int, ...]
    timestamps: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(int(i) for i in self.items))
        if not self.items:
            raise ValueError(f"user {self.user_id} has no interactions")
        if self.timestamps is not None:
            ts = tuple(int(t) for t in self.timestamps)
            if len(ts) != len(self.items):
                raise ValueError(f"user {self.user_id}: timestamps and items differ in length")
            if any(b < a for a, b in zip(ts, ts[1:])):
                raise ValueError(f"user {self.user_id}: timestamps are not sorted")
            object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class Dataset:
    users: tuple[UserSequence, ...]
    n_items: int
    name: str = "dataset"

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        ids = [u.user_id for u in self.users]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate user ids in dataset")

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_interactions(self) -> int:
        return sum(len(u) for u in self.users)


@dataclass(frozen=True)
class PerturbationSpec:
    scenario: Scenario = Scenario.END
    n: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        if self.n < 0:
            raise ValueError(f"removal count must be non-negative, got {self.n}")


@dataclass(frozen=True)
class UserSplit:
    user_id: int
    train_items: tuple[int, ...]
    valid_target: int
    test_target: int
    test_context: tuple[int, ...]

    @property
    def items(self) -> tuple[int, ...]:
        """The full, unperturbed interaction sequence."""
        return self.test_context + (self.test_target,)


@dataclass(frozen=True)
class SplitDataset:
    users: tuple[UserSplit, ...]
    n_items: int
    spec: PerturbationSpec = field(default_factory=PerturbationSpec)
    name: str = "dataset"


# ---------------------------------------------------------------------------
# construction helpers


def _reindex(keys: Iterable) -> dict:
    keys = set(keys)
    try:
        ordered = sorted(keys, key=int)
    except (TypeError, ValueError):
        ordered = sorted(keys)
    return {k: i for i, k in enumerate(ordered)}


def build_dataset(records: Sequence[tuple], name: str) -> Dataset:
    """Group ``(user, item, timestamp)`` records into a densely indexed dataset.

    Each user's interactions are sorted by timestamp; ties keep record order.
    Integer-like user ids are kept, anything else is replaced by a dense index.
    """
    if not records:
        raise ValueError(f"{name}: no interactions")
    item_index = _reindex(r[1] for r in records)
    raw_users = {r[0] for r in records}
    try:
        user_index = {u: int(u) for u in raw_users}
        if len(set(user_index.values())) != len(raw_users) or min(user_index.values()) < 0:
            raise ValueError
    except ValueError:
        user_index = _reindex(raw_users)

    grouped: dict = {}
    for user, item, ts in records:
        grouped.setdefault(user_index[user], []).append((ts, item_index[item]))
    users = []
    for uid in sorted(grouped):
        events = sorted(grouped[uid], key=lambda e: e[0])  # stable on ties
        users.append(
            UserSequence(uid, tuple(i for _, i in events), tuple(t for t, _ in events))
        )
    return Dataset(tuple(users), len(item_index), name)


def reindex_items(ds: Dataset) -> Dataset:
    index = _reindex(i for u in ds.users for i in u.items)
    users = tuple(
        UserSequence(u.user_id, tuple(index[i] for i in u.items), u.timestamps)
        for u in ds.users
    )
    return Dataset(users, len(index), ds.name)


# ---------------------------------------------------------------------------
# parsers


def _read_lines(path: str | os.PathLike) -> list[str]:
    with open(path, encoding="utf-8", errors="replace") as fh:
        lines = [ln.rstrip("\r\n") for ln in fh]
    if not any(ln.strip() for ln in lines):
        raise ValueError(f"{path}: file is empty")
    return lines


def parse_movielens(path: str | os.PathLike, variant: str = "ml100k") -> Dataset:
    """Read ``u.data`` (ML-100K, tab separated) or ``ratings.dat`` (ML-1M, ``::``)."""
    if variant == "ml100k":
        sep = "\t"
    elif variant == "ml1m":
        sep = "::"
    else:
        raise ValueError(f"unknown MovieLens variant {variant!r}")
    records = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        parts = line.split(sep)
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
        try:
            user, item, _, ts = (int(p) for p in parts)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-integer field in {line!r}") from None
        records.append((user, item, ts))
    ds = build_dataset(records, variant)
    logger.info("%s: %d users, %d items, %d interactions", variant, ds.n_users, ds.n_items, ds.n_interactions)
    return ds


_FOURSQUARE_TIME = "%a %b %d %H:%M:%S %z %Y"


def _parse_time(raw: str) -> int:
    raw = raw.strip()
    try:
        return int(float(raw))
    except ValueError:
        return int(datetime.strptime(raw, _FOURSQUARE_TIME).timestamp())


def parse_foursquare(
    path: str | os.PathLike,
    user_col: int = 0,
    venue_col: int = 1,
    time_col: int = -1,
    name: str = "foursquare",
) -> Dataset:
    """Read a Foursquare check-in TSV (``dataset_TSMC2014_{NYC,TKY}.txt`` layout).

    The timestamp column may hold epoch seconds or the
    ``Tue Apr 03 18:00:09 +0000 2012`` form used by the public dumps.
    """
    records = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        try:
            user, venue, ts = parts[user_col], parts[venue_col], _parse_time(parts[time_col])
        except (IndexError, ValueError):
            raise ValueError(f"{path}:{lineno}: malformed check-in row {line!r}") from None
        records.append((user.strip(), venue.strip(), ts))
    ds = build_dataset(records, name)
    logger.info("%s: %d users, %d items, %d interactions", name, ds.n_users, ds.n_items, ds.n_interactions)
    return ds


# canonical form: ``user_id,item_id,timestamp`` sorted by (user, timestamp)


def dumps_canonical(ds: Dataset) -> str:
    buf = io.StringIO()
    for u in ds.users:
        ts = u.timestamps if u.timestamps is not None else range(len(u.items))
        for item, t in zip(u.items, ts):
            buf.write(f"{u.user_id},{item},{t}\n")
    return buf.getvalue()


def write_canonical(ds: Dataset, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_canonical(ds))


def read_canonical(path: str | os.PathLike, name: str | None = None) -> Dataset:
    records = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            user, item, ts = (int(p) for p in line.split(","))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: malformed canonical row {line!r}") from None
        records.append((user, item, ts))
    if name is None:
        name = os.path.splitext(os.path.basename(path))[0]
    return build_dataset(records, name)


# ---------------------------------------------------------------------------
# filtering, perturbation, splitting


def filter_min_length(ds: Dataset, min_len: int = MIN_LENGTH) -> Dataset:
    """Keep users with at least ``min_len`` interactions and re-index items."""
    kept = tuple(u for u in ds.users if len(u) >= min_len)
    if not kept:
        raise ValueError(f"{ds.name}: no user has at least {min_len} interactions")
    out = reindex_items(Dataset(kept, ds.n_items, ds.name))
    logger.info(
        "%s after filtering (L_u >= %d): %d users, %d items, %d interactions",
        ds.name, min_len, out.n_users, out.n_items, out.n_interactions,
    )
    return out


def perturb(seq: Sequence[int], spec: PerturbationSpec) -> tuple[int, ...]:
    """Drop ``spec.n`` items from a training prefix at the scenario's position."""
    seq = tuple(seq)
    n = spec.n
    if n >= len(seq):
        raise ValueError(
            f"cannot remove {n} items from a training prefix of length {len(seq)}"
        )
    if n == 0:
        return seq
    if spec.scenario is Scenario.BEGINNING:
        return seq[n:]
    if spec.scenario is Scenario.END:
        return seq[: len(seq) - n]
    start = (len(seq) - n) // 2
    return seq[:start] + seq[start + n :]


def split_leave_one_out(ds: Dataset, spec: PerturbationSpec) -> SplitDataset:
    """Reserve each user's last item for testing and perturb the rest.

    The validation target is the last item of the perturbed training
    sequence; the test context is always the full unperturbed prefix.
    """
    users = []
    for u in ds.users:
        if len(u) < 2:
            raise ValueError(f"user {u.user_id} has fewer than 2 interactions")
        prefix = u.items[:-1]
        train = perturb(prefix, spec)
        users.append(UserSplit(u.user_id, train, train[-1], u.items[-1], prefix))
    return SplitDataset(tuple(users), ds.n_items, spec, ds.name)


# ---------------------------------------------------------------------------
# synthetic data


def gen_synthetic(
    n_users: int = 500,
    n_items: int = 200,
    seq_len_range: tuple[int, int] = (20, 60),
    n_phases: int = 4,
    drift: float = 0.2,
    seed: int = 0,
    clusters_per_phase: int = 5,
) -> Dataset:
    """Users whose interests move through ``n_phases`` item clusters over time.

    The catalogue is split into one block per phase, each block into
    ``clusters_per_phase`` clusters. A user's timeline is cut into contiguous
    phases; in phase ``j`` they pick one cluster of block ``j`` and draw items
    from it, except with probability ``drift * u`` (``u`` uniform per user)
    when they draw uniformly from the whole catalogue. Later items therefore
    come from clusters that only appear late in timelines.
    """
    lo, hi = seq_len_range
    if not MIN_LENGTH <= lo <= hi:
        raise ValueError(f"sequence lengths must satisfy {MIN_LENGTH} <= min <= max, got {seq_len_range}")
    if n_phases < 1 or clusters_per_phase < 1:
        raise ValueError("n_phases and clusters_per_phase must be positive")
    if n_items < 2 * n_phases * clusters_per_phase:
        raise ValueError(f"n_items={n_items} too small for {n_phases} phases of {clusters_per_phase} clusters")
    if not 0.0 <= drift <= 1.0:
        raise ValueError(f"drift must lie in [0, 1], got {drift}")
    if n_users < 1:
        raise ValueError("n_users must be positive")

    rng = np.random.default_rng(seed)
    blocks = np.array_split(np.arange(n_items), n_phases)
    clusters = [np.array_split(b, clusters_per_phase) for b in blocks]
    users = []
    for uid in range(n_users):
        length = int(rng.integers(lo, hi + 1))
        noise = drift * rng.random()
        bounds = np.linspace(0, length, n_phases + 1).round().astype(int)
        items = np.empty(length, dtype=np.int64)
        for j in range(n_phases):
            a, b = bounds[j], bounds[j + 1]
            cluster = clusters[j][rng.integers(clusters_per_phase)]
            pick = rng.choice(cluster, size=b - a)
            stray = rng.random(b - a) < noise
            pick[stray] = rng.integers(0, n_items, size=int(stray.sum()))
            items[a:b] = pick
        users.append(UserSequence(uid, tuple(items.tolist()), tuple(range(length))))
    return reindex_items(Dataset(tuple(users), n_items, f"synthetic-{seed}"))
