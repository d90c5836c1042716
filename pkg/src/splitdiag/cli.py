"""Command-line interface: ``splitdiag diagnose | split | compare | sweep``.

Settings come from three layers, highest first: command-line flags, a
``--config`` file of ``key = value`` lines (keys are flag names without the
leading dashes, e.g. ``sims = 1000``), then built-in defaults.

Exit status: 0 when the split is accepted (or the command succeeded),
2 when ``diagnose`` rejects the split, 1 on any error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from .dataset import Dataset, DatasetError, load_csv, select_columns, view
from .metric import lambda_metric
from .model import ModelFormula, association_sweep, fit_ols
from .montecarlo import REJECT, TestConfig, run_test, simulate_block
from .report import (
    Verdict,
    format_table,
    simulation_svg,
    sweep_svg,
    write_comparison_csv,
    write_json,
    write_null_csv,
    write_sweep_csv,
)
from .splitters import (
    SEEDED,
    STRATEGIES,
    SplitSpec,
    make_split,
    read_split_csv,
    train_size,
    write_split_csv,
)

logger = logging.getLogger("splitdiag")

EXIT_ACCEPT, EXIT_ERROR, EXIT_REJECT = 0, 1, 2


class CLIError(ValueError):
    pass


@dataclass
class RunConfig:
    data: str | None = None
    delimiter: str = ","
    columns: list[str] | None = None
    formula: str | None = None
    derive: list[str] = field(default_factory=list)
    strategy: list[str] | None = None
    fraction: float = 0.8
    split_seed: int | None = None
    key_column: str | None = None
    split_columns: list[str] | None = None
    split_file: str | None = None
    alpha: float = 0.05
    sims: int = 1000
    seed: int = 0
    include_observed: bool = False
    out: str = "."
    plot: bool = False
    workers: int = 1
    elide_null: bool = False

    def test_config(self) -> TestConfig:
        return TestConfig(alpha=self.alpha, n_sims=self.sims, master_seed=self.seed,
                          include_observed=self.include_observed, workers=self.workers)

    @property
    def effective_split_seed(self) -> int:
        return self.seed if self.split_seed is None else self.split_seed


_LIST_KEYS = {"columns", "strategy", "split_columns"}
_BOOL_KEYS = {"include_observed", "plot", "elide_null"}


def _coerce(key: str, value):
    types = {f.name: f.type for f in fields(RunConfig)}
    if key not in types:
        raise CLIError(f"unknown setting {key!r}")
    if value is None:
        return None
    if key in _LIST_KEYS:
        if isinstance(value, str):
            value = value.split(",")
        return [v.strip() for v in value if v.strip()]
    if key == "derive":
        return [value] if isinstance(value, str) else list(value)
    if key in _BOOL_KEYS:
        if isinstance(value, bool):
            return value
        return str(value).strip().lower() in ("1", "true", "yes", "on")
    if key in ("fraction", "alpha"):
        return float(value)
    if key in ("sims", "seed", "split_seed", "workers"):
        return int(value)
    return str(value)


def read_config_file(path: str | Path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    settings: dict = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CLIError(f"cannot read config file {path}: {exc}") from exc
    for no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CLIError(f"{path}:{no}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if key == "derive":
            settings.setdefault("derive", []).append(value.strip())
        else:
            settings[key] = value.strip()
    return settings


def build_config(args: argparse.Namespace) -> RunConfig:
    layered: dict = {}
    if getattr(args, "config", None):
        layered.update(read_config_file(args.config))
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        layered[key] = value
    try:
        return RunConfig(**{k: _coerce(k, v) for k, v in layered.items()})
    except (TypeError, ValueError) as exc:
        raise CLIError(f"bad setting: {exc}") from exc


# --- shared pipeline ---------------------------------------------------------

def load_dataset(cfg: RunConfig) -> Dataset:
    if not cfg.data:
        raise CLIError("no dataset given; pass --data PATH")
    if not Path(cfg.data).exists():
        raise CLIError(f"dataset {cfg.data} does not exist")
    ds = load_csv(cfg.data, delimiter=cfg.delimiter)
    for item in cfg.derive:
        name, sep, expr = item.partition("=")
        if not sep or not name.strip() or not expr.strip():
            raise CLIError(f"--derive expects NAME=EXPR, got {item!r}")
        ds = ds.with_derived(name.strip(), expr.strip())
    return ds


def resolve_formula(cfg: RunConfig) -> ModelFormula | None:
    return ModelFormula.parse(cfg.formula) if cfg.formula else None


def resolve_selection(cfg: RunConfig, ds: Dataset, formula: ModelFormula | None):
    if cfg.columns:
        return select_columns(ds, cfg.columns)
    if formula is not None:
        return select_columns(ds, formula.selection().selected)
    return select_columns(ds)


def split_spec(cfg: RunConfig, strategy: str) -> SplitSpec:
    return SplitSpec(
        strategy=strategy,
        fraction=cfg.fraction,
        seed=cfg.effective_split_seed,
        key_column=cfg.key_column,
        distance_columns=tuple(cfg.split_columns) if cfg.split_columns else None,
    )


def single_split(cfg: RunConfig, ds: Dataset):
    """The one split a diagnose/split run works on, and its label and seed."""
    strategies = cfg.strategy or []
    if cfg.split_file and strategies:
        raise CLIError("give either --strategy or --split-file, not both")
    if cfg.split_file:
        return read_split_csv(cfg.split_file, ds.n_rows), "external", None
    if len(strategies) != 1:
        raise CLIError("give exactly one split source: --strategy NAME or --split-file PATH")
    spec = split_spec(cfg, strategies[0])
    seed = spec.seed if spec.strategy in SEEDED else None
    return make_split(ds, spec), spec.strategy, seed


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model_scores(ds, formula, split):
    if formula is None:
        return None, None
    fit = fit_ols(ds, formula, split)
    return fit.aicn_train, fit.aicn_test


# --- commands ----------------------------------------------------------------

def cmd_diagnose(cfg: RunConfig) -> tuple[Verdict, int]:
    ds = load_dataset(cfg)
    formula = resolve_formula(cfg)
    sel = resolve_selection(cfg, ds, formula)
    split, label, seed = single_split(cfg, ds)
    result = run_test(ds, sel, split, cfg.test_config())
    aicn_train, aicn_test = _model_scores(ds, formula, split)
    verdict = Verdict.from_result(label, seed, result, aicn_train, aicn_test)

    out = _out_dir(cfg)
    write_json(result, out / "report.json", include_null=not cfg.elide_null)
    write_null_csv(result.null_sample, out / "null_sample.csv")
    if cfg.plot:
        title = f"{ds.name}: {label} split ({verdict.conclusion})"
        (out / "simulation.svg").write_text(
            simulation_svg(result.null_sample, result.lambda_obs, result.threshold_c, title),
            encoding="utf-8")

    print(format_table([verdict]))
    word = "Reject" if result.decision == REJECT else "Accept"
    print(f"{word} Null Hypothesis (p = {result.p_value:.4g}, alpha = {cfg.alpha:g})")
    if result.over_representative:
        print("note: the test set is unusually close to the training set (p > 0.99); "
              "performance measured on it may be optimistic")
    if result.ridge_count or result.observed_ridge:
        print(f"note: ridge regularization used in {result.ridge_count} simulation(s)"
              f"{' and the observed split' if result.observed_ridge else ''}")
    return verdict, EXIT_REJECT if result.decision == REJECT else EXIT_ACCEPT


def cmd_split(cfg: RunConfig) -> Path:
    ds = load_dataset(cfg)
    if cfg.split_file:
        raise CLIError("split writes a new split; --split-file is not accepted here")
    split, label, _ = single_split(cfg, ds)
    path = _out_dir(cfg) / "split.csv"
    write_split_csv(split, path)
    print(f"{label}: train {split.train.size} rows, test {split.test.size} rows -> {path}")
    return path


def cmd_compare(cfg: RunConfig) -> list[Verdict]:
    ds = load_dataset(cfg)
    formula = resolve_formula(cfg)
    sel = resolve_selection(cfg, ds, formula)
    tcfg = cfg.test_config()
    block = view(ds, sel)
    nulls: dict[int, tuple] = {}

    def null_for(n_train: int):
        if n_train not in nulls:
            nulls[n_train] = simulate_block(block, n_train, tcfg.n_sims, tcfg.master_seed, tcfg.workers)
        return nulls[n_train]

    sources = [(s, None) for s in (cfg.strategy or [])]
    if cfg.split_file:
        sources.append(("external", cfg.split_file))
    if not sources:
        raise CLIError("compare needs --strategy NAME[,NAME...] and/or --split-file PATH")
    null_for(train_size(ds.n_rows, cfg.fraction))

    verdicts = []
    for label, path in sources:
        seed = cfg.effective_split_seed if label in SEEDED else None
        try:
            if path:
                split = read_split_csv(path, ds.n_rows)
            else:
                split = make_split(ds, split_spec(cfg, label))
            values, ridged = null_for(int(split.train.size))
            result = run_test(ds, sel, split, tcfg, null_sample=values, ridge_count=ridged)
            aicn_train, aicn_test = _model_scores(ds, formula, split)
            verdicts.append(Verdict.from_result(label, seed, result, aicn_train, aicn_test))
        except ValueError as exc:
            verdicts.append(Verdict.failed(label, seed, str(exc)))

    out = _out_dir(cfg)
    write_comparison_csv(verdicts, out / "comparison.csv")
    print(format_table(verdicts))
    return verdicts


def cmd_sweep(cfg: RunConfig):
    ds = load_dataset(cfg)
    formula = resolve_formula(cfg)
    if formula is None:
        raise CLIError("sweep needs a model: pass --formula 'y ~ a + b'")
    sel = resolve_selection(cfg, ds, formula)
    rows = association_sweep(ds, sel, formula, cfg.fraction, cfg.sims, cfg.seed, cfg.workers)
    out = _out_dir(cfg)
    write_sweep_csv(rows, out / "sweep.csv")

    observed = None
    if cfg.strategy or cfg.split_file:
        split, _, _ = single_split(cfg, ds)
        mask = split.mask()
        block = view(ds, sel)
        lam = lambda_metric(block[mask], block[~mask]).lam
        observed = (lam, fit_ols(ds, formula, split).aicn_test)
    if cfg.plot:
        (out / "sweep.svg").write_text(
            sweep_svg(rows, observed, title=f"{ds.name}: {formula}"), encoding="utf-8")
    flagged = sum(1 for r in rows if r.flag)
    print(f"{len(rows)} simulations written to {out / 'sweep.csv'}"
          + (f" ({flagged} flagged)" if flagged else ""))
    return rows


# --- argument parsing --------------------------------------------------------

def _add_shared(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", help="key = value settings file (flags override it)")
    p.add_argument("--data", default=S, metavar="PATH", help="input CSV (optionally .gz)")
    p.add_argument("--delimiter", default=S, help="field delimiter (default ',')")
    p.add_argument("--columns", default=S, metavar="A,B,C",
                   help="metric columns; 'a:b' is a product, 'a^2' a power "
                        "(default: formula columns, else all numeric)")
    p.add_argument("--formula", default=S, help="OLS model, e.g. 'Rings ~ LongestShell + Diameter'")
    p.add_argument("--derive", action="append", default=S, metavar="NAME=EXPR",
                   help="add a derived column, e.g. volume=x:y:z (repeatable)")
    p.add_argument("--strategy", default=S, metavar="NAME[,NAME]",
                   help=f"split strategy: {', '.join(STRATEGIES)}")
    p.add_argument("--fraction", type=float, default=S, help="training fraction (default 0.8)")
    p.add_argument("--split-seed", type=int, default=S, help="seed for the split (default: --seed)")
    p.add_argument("--key-column", default=S,
                   help="stratum / sort / group column for stratified, adversarial, cluster")
    p.add_argument("--split-columns", default=S, metavar="A,B",
                   help="distance columns for cadex/duplex (default: all numeric)")
    p.add_argument("--split-file", default=S, metavar="PATH", help="split CSV (row_index,partition)")
    p.add_argument("--alpha", type=float, default=S, help="significance level (default 0.05)")
    p.add_argument("--sims", type=int, default=S, help="number of simulations N (default 1000)")
    p.add_argument("--seed", type=int, default=S, help="master seed for simulations (default 0)")
    p.add_argument("--include-observed", action="store_true", default=S,
                   help="pool the observed metric into the threshold sample")
    p.add_argument("--elide-null", action="store_true", default=S,
                   help="leave the null sample out of report.json (null_sample.csv keeps it)")
    p.add_argument("--out", default=S, metavar="DIR", help="output directory (default .)")
    p.add_argument("--plot", action="store_true", default=S, help="write SVG plots")
    p.add_argument("--workers", type=int, default=S, help="threads for simulations (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splitdiag",
        description="Diagnose train/test splits with a Mahalanobis-distance Monte Carlo test.",
        epilog="Precedence: command-line flags > --config file > defaults. "
               "Exit status: 0 accepted/success, 2 rejected (diagnose), 1 error.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [
        ("diagnose", "test one split; writes report.json, null_sample.csv[, simulation.svg]"),
        ("split", "produce a split; writes split.csv"),
        ("compare", "test several splits against one null sample; writes comparison.csv"),
        ("sweep", "metric vs model performance over random splits; writes sweep.csv[, sweep.svg]"),
    ]:
        _add_shared(sub.add_parser(name, help=text, description=text))
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="warning: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        if args.command == "diagnose":
            return cmd_diagnose(cfg)[1]
        if args.command == "split":
            cmd_split(cfg)
        elif args.command == "compare":
            verdicts = cmd_compare(cfg)
            if all(v.conclusion == "Error" for v in verdicts):
                return EXIT_ERROR
        else:
            cmd_sweep(cfg)
        return EXIT_ACCEPT
    except (CLIError, DatasetError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
