"""Ordinary least squares fits scored by normalized AIC.

Formulas look like ``y ~ a + b:c + d^2``: an intercept plus one column per
term, where a term is a product of numeric columns with optional integer
powers. For a partition of ``n`` rows::

    aicn = log(rss / n) + 2 K / n

with ``K`` the number of regression coefficients including the intercept.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .dataset import ColumnSelection, Dataset, DatasetError, SplitIndices, parse_expression, view
from .metric import lambda_metric
from .montecarlo import simulation_rng
from .splitters import train_size

logger = logging.getLogger(__name__)

# RSS below RSS_EPS * n counts as a perfect fit; aicn is then -inf.
RSS_EPS = 1e-12


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelFormula:
    response: str
    terms: tuple[str, ...]

    @classmethod
    def parse(cls, text: str) -> "ModelFormula":
        if text.count("~") != 1:
            raise ModelError(f"formula must contain exactly one '~': {text!r}")
        lhs, rhs = (part.strip() for part in text.split("~"))
        if not lhs or not rhs:
            raise ModelError(f"formula needs a response and at least one term: {text!r}")
        terms = tuple(t.strip() for t in rhs.split("+"))
        if any(not t for t in terms):
            raise ModelError(f"empty term in {text!r}")
        try:
            parse_expression(lhs)
            for t in terms:
                parse_expression(t)
        except DatasetError as exc:
            raise ModelError(str(exc)) from None
        if lhs in terms:
            raise ModelError(f"response {lhs!r} also appears as a term")
        if len(set(terms)) != len(terms):
            raise ModelError(f"repeated term in {text!r}")
        return cls(response=lhs, terms=terms)

    @property
    def n_coefficients(self) -> int:
        return len(self.terms) + 1

    def selection(self) -> ColumnSelection:
        """Response followed by each term, the default metric columns for this model."""
        return ColumnSelection((self.response,) + self.terms)

    def __str__(self) -> str:
        return f"{self.response} ~ {' + '.join(self.terms)}"


@dataclass(frozen=True)
class ModelFit:
    coefficients: np.ndarray
    k: int
    n_train: int
    n_test: int
    rss_train: float
    rss_test: float
    aicn_train: float
    aicn_test: float
    r2_train: float
    r2_test: float


def design_matrix(ds: Dataset, formula: ModelFormula, rows=None) -> np.ndarray:
    """Intercept column followed by one evaluated column per term."""
    terms = ColumnSelection(formula.terms)
    block = view(ds, terms, rows)
    return np.column_stack([np.ones(block.shape[0]), block])


def response(ds: Dataset, formula: ModelFormula, rows=None) -> np.ndarray:
    return view(ds, ColumnSelection((formula.response,)), rows)[:, 0]


def normalized_aic(rss: float, n: int, k: int) -> float:
    if rss < RSS_EPS * n:
        logger.warning("residual sum of squares %.3g is ~0 (perfect fit); aicn = -inf", rss)
        return -math.inf
    return math.log(rss / n) + 2 * k / n


def r_squared(rss: float, y: np.ndarray) -> float:
    tss = float(np.sum((y - y.mean()) ** 2))
    if tss == 0:
        return 1.0 if rss < RSS_EPS * y.size else -math.inf
    return 1 - rss / tss


def least_squares(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Coefficients minimizing ||y - x b|| via column-pivoted QR.

    Raises :class:`ModelError` when ``x`` is numerically rank deficient.
    """
    n, p = x.shape
    if n < p:
        raise ModelError(f"{n} rows cannot identify {p} coefficients")
    q, r, piv = linalg.qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(n, p) * np.finfo(float).eps * diag[0]
    if diag[0] == 0 or np.any(diag <= tol):
        raise ModelError("design matrix is rank deficient (collinear terms?)")
    beta = np.empty(p)
    beta[piv] = linalg.solve_triangular(r, q.T @ y, lower=False)
    return beta


def _fit_arrays(x: np.ndarray, y: np.ndarray, mask: np.ndarray) -> ModelFit:
    xt, yt = x[mask], y[mask]
    xv, yv = x[~mask], y[~mask]
    beta = least_squares(xt, yt)
    rss_train = float(np.sum((yt - xt @ beta) ** 2))
    rss_test = float(np.sum((yv - xv @ beta) ** 2))
    k = x.shape[1]
    return ModelFit(
        coefficients=beta,
        k=k,
        n_train=int(yt.size),
        n_test=int(yv.size),
        rss_train=rss_train,
        rss_test=rss_test,
        aicn_train=normalized_aic(rss_train, yt.size, k),
        aicn_test=normalized_aic(rss_test, yv.size, k),
        r2_train=r_squared(rss_train, yt),
        r2_test=r_squared(rss_test, yv),
    )


def fit_ols(ds: Dataset, formula: ModelFormula, split: SplitIndices) -> ModelFit:
    """Fit on the training rows, then score both partitions."""
    split.validate(ds.n_rows)
    return _fit_arrays(design_matrix(ds, formula), response(ds, formula), split.mask())


@dataclass(frozen=True)
class SweepRow:
    sim_index: int
    lam: float
    aicn_train: float
    aicn_test: float
    flag: str = ""


def _sweep_range(block, x, y, n_train, master_seed, lo, hi):
    n = block.shape[0]
    rows = []
    for j in range(lo, hi):
        perm = simulation_rng(master_seed, j).permutation(n)
        mask = np.zeros(n, dtype=bool)
        mask[perm[:n_train]] = True
        flags = []
        try:
            # permutation row order, so lam is bit-identical to the test's null sample
            lam = lambda_metric(block[perm[:n_train]], block[perm[n_train:]]).lam
        except ValueError as exc:
            lam = math.nan
            flags.append(f"metric: {exc}")
        try:
            fit = _fit_arrays(x, y, mask)
            a_train, a_test = fit.aicn_train, fit.aicn_test
            if math.isinf(a_train) or math.isinf(a_test):
                flags.append("perfect fit")
        except ValueError as exc:
            a_train = a_test = math.nan
            flags.append(f"fit: {exc}")
        rows.append(SweepRow(j, lam, a_train, a_test, "; ".join(flags)))
    return rows


def association_sweep(ds: Dataset, sel: ColumnSelection, formula: ModelFormula, fraction: float,
                      n_sims: int, master_seed: int, workers: int = 1) -> list[SweepRow]:
    """Metric and train/test normalized AIC for ``n_sims`` seeded random splits.

    Simulation ``j`` uses the same random split as simulation ``j`` of the
    Monte Carlo test with the same master seed, so the sweep's metric column
    reproduces that test's null sample. Failing simulations become flagged
    rows instead of aborting the sweep.
    """
    if n_sims <= 0:
        return []
    block = view(ds, sel)
    x = design_matrix(ds, formula)
    y = response(ds, formula)
    n_train = train_size(ds.n_rows, fraction)
    if workers <= 1 or n_sims < 2 * workers:
        return _sweep_range(block, x, y, n_train, master_seed, 1, n_sims + 1)
    bounds = np.linspace(1, n_sims + 1, workers + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(lambda lh: _sweep_range(block, x, y, n_train, master_seed, *lh),
                         zip(bounds[:-1], bounds[1:]))
        return [row for part in parts for row in part]
