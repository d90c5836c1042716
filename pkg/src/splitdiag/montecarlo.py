"""Monte Carlo test of a train/test split against random re-splits.

The observed split's metric is compared with ``N`` metrics from uniform
random splits of the same rows at the same training size. Simulation ``j``
draws from ``SeedSequence(master_seed, spawn_key=(j,))`` so the null sample
does not depend on how the work is spread over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import ColumnSelection, Dataset, SplitIndices, view
from .metric import DegenerateDataError, lambda_metric
from .splitters import train_size

ACCEPT = "accept"
REJECT = "reject"
# p above this marks a suspiciously representative test set; it never rejects.
OVER_REPRESENTATIVE_P = 0.99
RNG_PROVENANCE = "numpy PCG64; simulation j seeded by SeedSequence(master_seed, spawn_key=(j,)), j=1..N"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TestConfig:
    alpha: float = 0.05
    n_sims: int = 1000
    master_seed: int = 0
    include_observed: bool = False
    workers: int = 1

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.n_sims < 100:
            raise ConfigError(f"n_sims must be >= 100, got {self.n_sims}")
        if self.alpha * (self.n_sims + 1) < 1 - 1e-12:
            raise ConfigError(
                f"n_sims={self.n_sims} cannot resolve alpha={self.alpha}; need alpha*(N+1) >= 1"
            )
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


@dataclass(frozen=True)
class Decision:
    threshold_c: float
    p_value: float
    decision: str


@dataclass
class SimulationResult:
    lambda_obs: float
    d_xy_obs: float
    d_yx_obs: float
    null_sample: list[float]
    threshold_c: float
    p_value: float
    decision: str
    fraction: float
    n_train: int
    n_test: int
    columns: list[str]
    alpha: float
    n_sims: int
    master_seed: int
    include_observed: bool
    observed_ridge: float = 0.0
    ridge_count: int = 0
    over_representative: bool = False
    rng: str = RNG_PROVENANCE

    @property
    def accepted(self) -> bool:
        return self.decision == ACCEPT

    def to_dict(self, include_null: bool = True) -> dict:
        out = asdict(self)
        if not include_null:
            out["null_sample"] = None
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationResult":
        data = dict(data)
        if data.get("null_sample") is None:
            data["null_sample"] = []
        return cls(**data)


def simulation_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(int(index),)))


def _simulate_range(block: np.ndarray, n_train: int, master_seed: int, lo: int, hi: int):
    n = block.shape[0]
    values = np.empty(hi - lo)
    ridged = 0
    for pos, j in enumerate(range(lo, hi)):
        perm = simulation_rng(master_seed, j).permutation(n)
        try:
            stat = lambda_metric(block[perm[:n_train]], block[perm[n_train:]])
        except DegenerateDataError as exc:
            raise DegenerateDataError(f"simulation {j}: {exc}") from exc
        values[pos] = stat.lam
        ridged += stat.regularization_used > 0
    return values, ridged


def simulate_block(block: np.ndarray, n_train: int, n_sims: int, master_seed: int,
                   workers: int = 1) -> tuple[np.ndarray, int]:
    """Metric values for simulations ``1..n_sims`` and how many needed a ridge."""
    if n_sims == 0:
        return np.empty(0), 0
    if workers <= 1 or n_sims < 2 * workers:
        return _simulate_range(block, n_train, master_seed, 1, n_sims + 1)
    bounds = np.linspace(1, n_sims + 1, workers + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(
            lambda lh: _simulate_range(block, n_train, master_seed, lh[0], lh[1]),
            zip(bounds[:-1], bounds[1:]),
        ))
    return np.concatenate([p[0] for p in parts]), sum(p[1] for p in parts)


def simulate_null(ds: Dataset, sel: ColumnSelection, fraction: float, cfg: TestConfig) -> np.ndarray:
    """Null sample of the metric over ``cfg.n_sims`` random splits at ``fraction``."""
    block = view(ds, sel)
    values, _ = simulate_block(block, train_size(ds.n_rows, fraction), cfg.n_sims,
                               cfg.master_seed, cfg.workers)
    return values


def critical_rank(alpha: float, size: int) -> int:
    """1-based order statistic used as the threshold: ceil((1 - alpha)(size + 1))."""
    # tolerance keeps 0.95 * 500 = 475.00000000000006 at 475
    return math.ceil((1 - alpha) * (size + 1) - 1e-9)


def decide(null_sample, lambda_obs: float, alpha: float, include_observed: bool = False) -> Decision:
    """Threshold, add-one p-value and verdict for an observed metric.

    ``p = (1 + #{null >= obs}) / (N + 1)``; rejection iff ``p <= alpha``.
    With ``include_observed`` the observed value joins the sample used for
    the threshold (the p-value is the same either way).
    """
    null = np.sort(np.asarray(null_sample, dtype=float))
    if null.size == 0:
        raise ValueError("null sample is empty")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    n = null.size
    exceed = n - int(np.searchsorted(null, lambda_obs, side="left"))
    p = (1 + exceed) / (n + 1)
    if include_observed:
        pooled = np.sort(np.append(null, lambda_obs))
        rank = min(critical_rank(alpha, pooled.size - 1), pooled.size)
        c = float(pooled[rank - 1])
    else:
        rank = min(critical_rank(alpha, n), n)
        c = float(null[rank - 1])
    return Decision(threshold_c=c, p_value=p, decision=REJECT if p <= alpha else ACCEPT)


def run_test(ds: Dataset, sel: ColumnSelection, split: SplitIndices, cfg: TestConfig,
             null_sample: np.ndarray | None = None, ridge_count: int = 0) -> SimulationResult:
    """Diagnose ``split``: observed metric, simulated null, threshold, p-value and verdict.

    A precomputed ``null_sample`` (from the same dataset, selection, training
    size and config) may be passed to compare several splits against one null.
    """
    split.validate(ds.n_rows)
    block = view(ds, sel)
    mask = split.mask()
    obs = lambda_metric(block[mask], block[~mask])
    n_train = int(split.train.size)
    ridged = ridge_count
    if null_sample is None:
        null_sample, ridged = simulate_block(block, n_train, cfg.n_sims, cfg.master_seed, cfg.workers)
    elif len(null_sample) != cfg.n_sims:
        raise ConfigError(f"null sample has {len(null_sample)} values, config says {cfg.n_sims}")
    dec = decide(null_sample, obs.lam, cfg.alpha, cfg.include_observed)
    return SimulationResult(
        lambda_obs=obs.lam,
        d_xy_obs=obs.d_xy,
        d_yx_obs=obs.d_yx,
        null_sample=[float(v) for v in null_sample],
        threshold_c=dec.threshold_c,
        p_value=dec.p_value,
        decision=dec.decision,
        fraction=n_train / ds.n_rows,
        n_train=n_train,
        n_test=int(split.test.size),
        columns=list(sel.selected),
        alpha=cfg.alpha,
        n_sims=cfg.n_sims,
        master_seed=int(cfg.master_seed),
        include_observed=cfg.include_observed,
        observed_ridge=obs.regularization_used,
        ridge_count=int(ridged),
        over_representative=dec.p_value > OVER_REPRESENTATIVE_P,
    )
