"""Train/test splitting strategies.

Seeded strategies (random, stratified, cluster) are reproducible from
``(inputs, seed)``; adversarial, CADEX (Kennard-Stone) and DUPLEX are fully
deterministic. Partition sizes use ``round_half_up(fraction * n)`` for train.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import (
    CATEGORICAL,
    ColumnSelection,
    Dataset,
    DatasetError,
    SplitIndices,
    round_half_up,
    select_columns,
    view,
)

logger = logging.getLogger(__name__)

STRATEGIES = ("random", "stratified", "adversarial", "cluster", "cadex", "duplex")
SEEDED = ("random", "stratified", "cluster")
KEYED = ("stratified", "adversarial", "cluster")

MAX_STRATA = 50
# upper bound on floats held by one chunk of the pairwise-distance search
_PAIR_BUDGET = 8_000_000


class SplitError(DatasetError):
    pass


def train_size(n: int, fraction: float) -> int:
    """Number of training rows for ``fraction`` of ``n``; raises if a side would be empty."""
    if not 0 < fraction < 1:
        raise SplitError(f"fraction must lie in (0, 1), got {fraction}")
    k = round_half_up(fraction * n)
    if k < 1 or k > n - 1:
        raise SplitError(f"fraction {fraction} of {n} rows leaves an empty partition")
    return k


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def random_split(n: int, fraction: float, seed: int) -> SplitIndices:
    """Uniform random subset of ``round(fraction * n)`` rows as train."""
    if n < 2:
        raise SplitError("need at least 2 rows")
    k = train_size(n, fraction)
    return random_split_k(n, k, make_rng(seed))


def random_split_k(n: int, k: int, rng: np.random.Generator) -> SplitIndices:
    # Generator.permutation is a Fisher-Yates shuffle; the first k slots are train.
    mask = np.zeros(n, dtype=bool)
    mask[rng.permutation(n)[:k]] = True
    return SplitIndices.from_mask(mask)


def _stratum_codes(ds: Dataset, column: str) -> np.ndarray:
    if ds.kind(column) == CATEGORICAL:
        return ds.categorical[column][0]
    values = ds.numeric[column]
    uniq, codes = np.unique(values, return_inverse=True)
    if uniq.size > MAX_STRATA:
        raise SplitError(
            f"numeric stratum column {column!r} has {uniq.size} distinct values (max {MAX_STRATA})"
        )
    return codes


def stratified_split(ds: Dataset, column: str, fraction: float, seed: int) -> SplitIndices:
    """Random split of ``round(fraction * n_s)`` rows within each stratum.

    A stratum whose rounded share would leave one side empty goes wholly to
    the larger side (train when ``fraction >= 0.5``).
    """
    train_size(ds.n_rows, fraction)
    codes = _stratum_codes(ds, column)
    rng = make_rng(seed)
    mask = np.zeros(ds.n_rows, dtype=bool)
    to_train_if_degenerate = fraction >= 0.5
    for code in np.unique(codes):
        rows = np.flatnonzero(codes == code)
        k = round_half_up(fraction * rows.size)
        if k < 1 or k > rows.size - 1:
            logger.warning(
                "stratum %r of %r has %d row(s); assigned wholly to %s",
                code, column, rows.size, "train" if to_train_if_degenerate else "test",
            )
            mask[rows] = to_train_if_degenerate
            continue
        mask[rows[rng.permutation(rows.size)[:k]]] = True
    if mask.all() or not mask.any():
        raise SplitError("stratified split produced an empty partition")
    return SplitIndices.from_mask(mask)


def adversarial_split(ds: Dataset, column: str, fraction: float) -> SplitIndices:
    """Sort rows ascending on ``column`` (stable) and put the first share in train."""
    if ds.kind(column) == CATEGORICAL:
        raise SplitError(f"sort column {column!r} must be numeric")
    k = train_size(ds.n_rows, fraction)
    order = np.argsort(ds.numeric[column], kind="stable")
    mask = np.zeros(ds.n_rows, dtype=bool)
    mask[order[:k]] = True
    return SplitIndices.from_mask(mask)


def cluster_split(ds: Dataset, column: str, fraction: float, seed: int) -> SplitIndices:
    """Assign whole groups to train, in random order, until train holds >= fraction * n rows.

    The last remaining group always goes to test so neither side is empty.
    """
    if not 0 < fraction < 1:
        raise SplitError(f"fraction must lie in (0, 1), got {fraction}")
    if ds.kind(column) == CATEGORICAL:
        codes = ds.categorical[column][0]
    else:
        codes = np.unique(ds.numeric[column], return_inverse=True)[1]
    groups = np.unique(codes)
    if groups.size < 2:
        raise SplitError(f"group column {column!r} has a single group; cannot form two sides")
    order = make_rng(seed).permutation(groups)
    target = fraction * ds.n_rows
    mask = np.zeros(ds.n_rows, dtype=bool)
    for g in order[:-1]:
        mask |= codes == g
        if mask.sum() >= target:
            break
    return SplitIndices.from_mask(mask)


def standardize(block: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-variance columns; constant columns are only centered."""
    block = np.asarray(block, dtype=float)
    if block.ndim == 1:
        block = block[:, None]
    sd = block.std(axis=0, ddof=1) if block.shape[0] > 1 else np.ones(block.shape[1])
    sd = np.where(sd > 0, sd, 1.0)
    return (block - block.mean(axis=0)) / sd


def _sq_dist_rows(z: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances from each row in ``rows`` to every row of ``z``."""
    diff = z[None, :, :] - z[rows][:, None, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def farthest_pair(z: np.ndarray, available: np.ndarray | None = None) -> tuple[int, int, float]:
    """Pair (i < j) of available rows with maximal Euclidean distance.

    Ties go to the lexicographically smallest ``(i, j)``. Memory is bounded by
    processing rows in chunks.
    """
    n = z.shape[0]
    avail = np.ones(n, dtype=bool) if available is None else available
    idx = np.flatnonzero(avail)
    if idx.size < 2:
        raise SplitError("need at least two available rows")
    sub = z[idx]
    chunk = max(1, _PAIR_BUDGET // (idx.size * max(1, z.shape[1])))
    best = (-1.0, 0, 0)
    for start in range(0, idx.size, chunk):
        rows = np.arange(start, min(start + chunk, idx.size))
        d2 = _sq_dist_rows(sub, rows)
        # keep only j > i
        d2[np.arange(d2.shape[1])[None, :] <= rows[:, None]] = -1.0
        flat = int(np.argmax(d2))
        val = float(d2.flat[flat])
        if val > best[0]:
            r, c = divmod(flat, d2.shape[1])
            best = (val, int(rows[r]), c)
    val, i, j = best
    return int(idx[i]), int(idx[j]), float(np.sqrt(max(val, 0.0)))


def _min_dist_update(z: np.ndarray, current: np.ndarray, new_row: int) -> np.ndarray:
    diff = z - z[new_row]
    return np.minimum(current, np.einsum("ij,ij->i", diff, diff))


def _distance_block(ds: Dataset, sel: ColumnSelection | None) -> np.ndarray:
    # default: every numeric column, categoricals skipped silently
    sel = sel if sel is not None else ColumnSelection(tuple(ds.numeric_columns))
    return standardize(view(ds, sel))


def kennard_stone(z: np.ndarray, k: int) -> np.ndarray:
    """Indices (in selection order) of ``k`` rows chosen by Kennard-Stone."""
    n = z.shape[0]
    if not 2 <= k <= n:
        raise SplitError(f"Kennard-Stone needs 2 <= k <= n, got k={k}, n={n}")
    i, j, dist = farthest_pair(z)
    if dist == 0:
        raise SplitError("all rows coincide; Kennard-Stone is undefined")
    chosen = [i, j]
    taken = np.zeros(n, dtype=bool)
    taken[chosen] = True
    mind = _min_dist_update(z, np.full(n, np.inf), i)
    mind = _min_dist_update(z, mind, j)
    while len(chosen) < k:
        c = int(np.argmax(np.where(taken, -1.0, mind)))
        chosen.append(c)
        taken[c] = True
        mind = _min_dist_update(z, mind, c)
    return np.array(chosen, dtype=np.int64)


def cadex_split(ds: Dataset, sel: ColumnSelection | None, fraction: float) -> SplitIndices:
    """Kennard-Stone (CADEX) selection of the training set on standardized columns."""
    k = train_size(ds.n_rows, fraction)
    z = _distance_block(ds, sel)
    if k < 2:
        # one training row: take the lower-index end of the farthest pair
        i, _, dist = farthest_pair(z)
        if dist == 0:
            raise SplitError("all rows coincide; Kennard-Stone is undefined")
        return SplitIndices.from_train([i], ds.n_rows)
    return SplitIndices.from_train(kennard_stone(z, k), ds.n_rows)


def duplex(z: np.ndarray, n_train: int) -> np.ndarray:
    """DUPLEX partition; returns a boolean train mask.

    The farthest pair seeds train, the farthest remaining pair seeds test,
    then each side in turn takes the remaining row farthest from itself
    until test is full. Leftover rows go to train.
    """
    n = z.shape[0]
    n_test = n - n_train
    if n_train < 1 or n_test < 1:
        raise SplitError("DUPLEX needs both sides non-empty")
    avail = np.ones(n, dtype=bool)
    side = np.zeros(n, dtype=np.int8)  # 1 train, 2 test
    mind = {1: np.full(n, np.inf), 2: np.full(n, np.inf)}
    counts = {1: 0, 2: 0}
    target = {1: n_train, 2: n_test}

    def take(s: int, row: int) -> None:
        avail[row] = False
        side[row] = s
        counts[s] += 1
        mind[s] = _min_dist_update(z, mind[s], row)

    i, j, dist = farthest_pair(z)
    if dist == 0:
        raise SplitError("all rows coincide; DUPLEX is undefined")
    take(1, i)
    if n_train >= 2:
        take(1, j)
    if n_test >= 2 and avail.sum() >= 2:
        i, j, _ = farthest_pair(z, avail)
        take(2, i)
        take(2, j)
    turn = 1
    while counts[2] < n_test and avail.any():
        if counts[turn] >= target[turn]:
            turn = 3 - turn
        # an empty side picks the row farthest from the other side
        dist = mind[turn] if counts[turn] else mind[3 - turn]
        c = int(np.argmax(np.where(avail, dist, -1.0)))
        take(turn, c)
        turn = 3 - turn
    return (side == 1) | avail


def duplex_split(ds: Dataset, sel: ColumnSelection | None, fraction: float) -> SplitIndices:
    k = train_size(ds.n_rows, fraction)
    return SplitIndices.from_mask(duplex(_distance_block(ds, sel), k))


@dataclass(frozen=True)
class SplitSpec:
    strategy: str
    fraction: float = 0.8
    seed: int = 0
    key_column: str | None = None
    distance_columns: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise SplitError(f"unknown strategy {self.strategy!r}; choose from {', '.join(STRATEGIES)}")
        if self.strategy in KEYED and not self.key_column:
            raise SplitError(f"strategy {self.strategy!r} needs a key column")
        if not 0 < self.fraction < 1:
            raise SplitError(f"fraction must lie in (0, 1), got {self.fraction}")
        if not 0 <= int(self.seed) < 2**64:
            raise SplitError("seed must be a 64-bit unsigned integer")


def make_split(ds: Dataset, spec: SplitSpec) -> SplitIndices:
    """Dispatch ``spec`` to the matching splitter."""
    s = spec.strategy
    if s == "random":
        return random_split(ds.n_rows, spec.fraction, spec.seed)
    if s == "stratified":
        return stratified_split(ds, spec.key_column, spec.fraction, spec.seed)
    if s == "adversarial":
        return adversarial_split(ds, spec.key_column, spec.fraction)
    if s == "cluster":
        return cluster_split(ds, spec.key_column, spec.fraction, spec.seed)
    sel = select_columns(ds, spec.distance_columns) if spec.distance_columns else None
    if s == "cadex":
        return cadex_split(ds, sel, spec.fraction)
    return duplex_split(ds, sel, spec.fraction)


def write_split_csv(split: SplitIndices, path: str | Path) -> None:
    labels = np.where(split.mask(), "train", "test")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_index", "partition"])
        for i, lab in enumerate(labels):
            w.writerow([i, lab])


def read_split_csv(path: str | Path, n_rows: int | None = None) -> SplitIndices:
    """Read a ``row_index,partition`` file; every row must appear exactly once."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip().lower() for h in next(reader, [])]
            if header != ["row_index", "partition"]:
                raise SplitError(f"{path}: expected header 'row_index,partition', got {header}")
            entries = []
            for line_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    idx = int(row[0])
                except (ValueError, IndexError):
                    raise SplitError(f"{path}:{line_no}: bad row index") from None
                part = row[1].strip().lower() if len(row) > 1 else ""
                if part not in ("train", "test"):
                    raise SplitError(f"{path}:{line_no}: partition must be train or test")
                entries.append((idx, part == "train"))
    except OSError as exc:
        raise SplitError(f"cannot read split file {path}: {exc}") from exc
    n = n_rows if n_rows is not None else len(entries)
    if len(entries) != n:
        raise SplitError(f"{path}: {len(entries)} entries for {n} rows")
    mask = np.zeros(n, dtype=bool)
    seen = np.zeros(n, dtype=bool)
    for idx, is_train in entries:
        if not 0 <= idx < n or seen[idx]:
            raise SplitError(f"{path}: row index {idx} out of range or repeated")
        seen[idx] = True
        mask[idx] = is_train
    return SplitIndices.from_mask(mask)

