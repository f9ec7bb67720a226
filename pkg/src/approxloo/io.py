"""CSV ingestion, run configuration files and report emission.

Config grammar
--------------
A config file is a list of ``key = value`` lines followed by one block per
model::

    # comments start with '#' or ';'
    dataset = wcgs.csv            # relative paths resolve against the config file
    outcome = chd
    estimators = psis_loo, waic, is_loo, kfold10, loo_exact, dic
    inference = mcmc              # or: laplace
    chains = 4
    iterations = 4000
    warmup = 2000
    laplace_draws = 8000
    subsample_m = 0.1             # fraction of n, or an absolute count; omit for none
    pps_source = auto             # auto | laplace | lppd
    pps_model = average           # average over models, or one model's name
    kfold_k = 10
    seed = 2021
    standardize = false
    refit_high_khat = false
    loo_pit = true
    pit_replicates = 100
    threads = 1                   # parallel refits for loo_exact / kfold
    output = results

    [model M1]
    predictors = age, height, weight

    [model M2]
    predictors = age, height, weight, sdp, dbp, chol

Model blocks may also set ``prior_scale`` and ``prior_location``. Estimator
names are loo_exact, kfold (or kfoldK to set K), is_loo, psis_loo, waic and
dic; setting ``subsample_m`` adds the subsampled PSIS-LOO estimate. Outcomes
must be 0/1 or yes/no; recode any other binary covariate to 0/1 before
ingestion.
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError
from .model import Dataset

MISSING_TOKENS = {"", "na", "nan", "null", "none", "."}
_TRUE = {"1", "yes", "true"}
_FALSE = {"0", "no", "false"}
BASE_ESTIMATORS = ("loo_exact", "kfold", "is_loo", "psis_loo", "waic", "dic")


def _coerce_outcome(raw: str, row: int):
    token = raw.strip().lower()
    if token in MISSING_TOKENS:
        return None
    if token in ("yes",):
        return 1.0
    if token in ("no",):
        return 0.0
    try:
        val = float(token)
    except ValueError:
        raise ConfigError(f"outcome value {raw!r} in data row {row} is not binary") from None
    if val not in (0.0, 1.0):
        raise ConfigError(f"outcome value {raw!r} in data row {row} is not binary")
    return val


def ingest_csv(path, outcome_column: str, predictor_columns):
    """Read a CSV into a :class:`Dataset`.

    Rows with a missing or non-numeric value in any selected predictor, or a
    missing outcome, are dropped. Outcomes may be 0/1 or yes/no (any case).

    Returns
    -------
    (Dataset, int)
        The dataset and the number of dropped rows.
    """
    path = Path(path)
    predictor_columns = list(predictor_columns)
    try:
        fh = open(path, newline="", encoding="utf-8-sig")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ConfigError(f"{path} is empty") from None
        missing = [c for c in [outcome_column, *predictor_columns] if c not in header]
        if missing:
            raise ConfigError(f"unknown column(s) {missing} in {path}")
        y_col = header.index(outcome_column)
        x_cols = [header.index(c) for c in predictor_columns]
        X, y, dropped = [], [], 0
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            outcome = _coerce_outcome(row[y_col] if y_col < len(row) else "", row_no)
            values = []
            for j in x_cols:
                cell = row[j].strip() if j < len(row) else ""
                try:
                    val = float(cell) if cell.lower() not in MISSING_TOKENS else math.nan
                except ValueError:
                    val = math.nan
                values.append(val)
            if outcome is None or not all(math.isfinite(v) for v in values):
                dropped += 1
                continue
            X.append(values)
            y.append(outcome)
    if not y:
        raise ConfigError(f"no complete rows left in {path} ({dropped} dropped)")
    X = np.asarray(X, dtype=float).reshape(len(y), len(predictor_columns))
    return Dataset(X, np.asarray(y), tuple(predictor_columns)), dropped


@dataclass
class ModelDefinition:
    name: str
    predictors: list
    prior_scale: float = 2.5
    prior_location: float = 0.0


@dataclass
class RunConfig:
    dataset_path: str
    outcome_column: str
    models: list
    estimators: tuple = ("psis_loo",)
    inference: str = "mcmc"
    chains: int = 4
    iterations: int = 4000
    warmup: int = 2000
    laplace_draws: int = 8000
    subsample_m: Optional[float] = None
    pps_source: str = "auto"
    pps_model: str = "average"
    kfold_k: int = 10
    seed: int = 0
    standardize: bool = False
    refit_high_khat: bool = False
    loo_pit: bool = True
    pit_replicates: int = 100
    output_dir: str = "results"
    n_jobs: int = 1

    def validate(self):
        if not self.models:
            raise ConfigError("at least one model is required")
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate model names {names}")
        if not self.estimators and self.subsample_m is None:
            raise ConfigError("at least one estimator is required")
        for est in self.estimators:
            if est not in BASE_ESTIMATORS:
                raise ConfigError(f"unknown estimator {est!r}")
        if self.inference not in ("mcmc", "laplace"):
            raise ConfigError(f"inference must be mcmc or laplace, got {self.inference!r}")
        if self.pps_source not in ("auto", "laplace", "lppd"):
            raise ConfigError("pps_source must be auto, laplace or lppd")
        if self.pps_model != "average" and self.pps_model not in names:
            raise ConfigError(f"pps_model must be 'average' or a model name, got {self.pps_model!r}")
        if self.iterations <= self.warmup:
            raise ConfigError("iterations must exceed warmup")
        if self.subsample_m is not None and self.subsample_m <= 0:
            raise ConfigError("subsample_m must be positive")
        return self

    def subsample_size(self, n: int) -> Optional[int]:
        """``subsample_m`` below 1 is a fraction of ``n``; otherwise a count."""
        if self.subsample_m is None:
            return None
        if self.subsample_m < 1:
            return max(1, int(round(self.subsample_m * n)))
        return int(self.subsample_m)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["estimators"] = list(self.estimators)
        return d


def _parse_bool(value: str, key: str) -> bool:
    token = value.strip().lower()
    if token in _TRUE:
        return True
    if token in _FALSE:
        return False
    raise ConfigError(f"{key} must be true/false, got {value!r}")


def _parse_number(value: str, key: str, kind=int):
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"{key} must be a {kind.__name__}, got {value!r}") from None


def _split_list(value: str):
    return [v.strip() for v in re.split(r"[,\s]+", value.strip()) if v.strip()]


def parse_config(text: str, base_dir=".") -> RunConfig:
    """Parse the flat key/value + model-block config format (see module docs)."""
    parser = configparser.ConfigParser(
        inline_comment_prefixes=("#", ";"), interpolation=None, default_section="__none__"
    )
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    run = dict(parser["run"])
    models = []
    for section in parser.sections():
        if section == "run":
            continue
        m = re.fullmatch(r"model\s+(\S+)", section)
        if not m:
            raise ConfigError(f"unknown section [{section}]")
        body = parser[section]
        if "predictors" not in body:
            raise ConfigError(f"model {m.group(1)} has no predictors line")
        models.append(
            ModelDefinition(
                m.group(1),
                _split_list(body["predictors"]),
                _parse_number(body.get("prior_scale", "2.5"), "prior_scale", float),
                _parse_number(body.get("prior_location", "0"), "prior_location", float),
            )
        )
    for key in ("dataset", "outcome"):
        if key not in run:
            raise ConfigError(f"missing required key {key!r}")

    estimators, kfold_k = [], _parse_number(run.get("kfold_k", "10"), "kfold_k")
    for est in _split_list(run.get("estimators", "psis_loo")):
        k = re.fullmatch(r"kfold(\d+)", est)
        if k:
            kfold_k = int(k.group(1))
            est = "kfold"
        if est not in estimators:
            estimators.append(est)

    sub = run.get("subsample_m", "").strip().lower()
    subsample_m = None
    if sub and sub != "none":
        subsample_m = _parse_number(sub, "subsample_m", float)
        if subsample_m >= 1:
            if not subsample_m.is_integer():
                raise ConfigError(f"subsample_m must be a fraction below 1 or a whole count, got {sub}")
            subsample_m = int(subsample_m)

    dataset = Path(run["dataset"])
    if not dataset.is_absolute():
        dataset = Path(base_dir) / dataset
    known = {
        "dataset", "outcome", "estimators", "inference", "chains", "iterations", "warmup",
        "laplace_draws", "subsample_m", "pps_source", "pps_model", "kfold_k", "seed", "standardize",
        "refit_high_khat", "loo_pit", "pit_replicates", "output", "threads",
    }
    unknown = sorted(set(run) - known)
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}")
    output = run.get("output", "results")
    return RunConfig(
        dataset_path=str(dataset),
        outcome_column=run["outcome"].strip(),
        models=models,
        estimators=tuple(estimators),
        inference=run.get("inference", "mcmc").strip().lower(),
        chains=_parse_number(run.get("chains", "4"), "chains"),
        iterations=_parse_number(run.get("iterations", "4000"), "iterations"),
        warmup=_parse_number(run.get("warmup", "2000"), "warmup"),
        laplace_draws=_parse_number(run.get("laplace_draws", "8000"), "laplace_draws"),
        subsample_m=subsample_m,
        pps_source=run.get("pps_source", "auto").strip().lower(),
        pps_model=run.get("pps_model", "average").strip(),
        kfold_k=kfold_k,
        seed=_parse_number(run.get("seed", "0"), "seed"),
        standardize=_parse_bool(run.get("standardize", "false"), "standardize"),
        refit_high_khat=_parse_bool(run.get("refit_high_khat", "false"), "refit_high_khat"),
        loo_pit=_parse_bool(run.get("loo_pit", "true"), "loo_pit"),
        pit_replicates=_parse_number(run.get("pit_replicates", "100"), "pit_replicates"),
        output_dir=str(Path(base_dir) / output) if not Path(output).is_absolute() else output,
        n_jobs=_parse_number(run.get("threads", "1"), "threads"),
    ).validate()


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


# -- emission -----------------------------------------------------------------


def _num(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


def _write_csv(path: Path, header, rows):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"failed to write {path}: {exc}") from exc
    return path


ELPD_HEADER = [
    "model", "estimator", "elpd_sum", "elpd_avg", "se_loo", "subsampling_se",
    "n", "n_pointwise", "n_refits", "n_high_khat", "penalty",
]


def emit_reports(bundle, outdir):
    """Write the CSV tables and ``run_manifest.json`` for a report bundle.

    Returns the list of written paths.
    """
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {outdir}: {exc}") from exc
    written = []
    rows = [
        [
            model, est, _num(r.elpd_sum), _num(r.elpd_avg), _num(r.se_loo),
            _num(r.subsampling_se), str(r.n), str(len(r.pointwise)), str(r.n_refits),
            str(r.n_high_khat), _num(r.penalty),
        ]
        for model, by_est in bundle.reports.items()
        for est, r in by_est.items()
    ]
    if rows:
        written.append(_write_csv(outdir / "elpd_table.csv", ELPD_HEADER, rows))
    comp = [
        [est, c.model_a, c.model_b, _num(c.elpd_diff), _num(c.se_diff), _num(c.subsampling_se_diff)]
        for est, table in bundle.comparisons.items()
        for c in table
    ]
    if comp:
        written.append(
            _write_csv(
                outdir / "comparison.csv",
                ["estimator", "model_a", "model_b", "elpd_diff", "se_diff", "subsampling_se_diff"],
                comp,
            )
        )
    for model, (index, khat) in bundle.khat.items():
        written.append(
            _write_csv(
                outdir / f"khat_{_safe(model)}.csv",
                ["observation_index", "khat"],
                [[str(int(i)), _num(k)] for i, k in zip(index, khat)],
            )
        )
    for model, pit in bundle.loo_pit.items():
        body = [["pit", str(i), "", _num(u), "", ""] for i, u in enumerate(pit.result.pit)]
        bands = bundle.reference_bands
        for g, x in enumerate(pit.grid):
            lo = bands.lower[g] if bands is not None else None
            hi = bands.upper[g] if bands is not None else None
            body.append(["density", str(g), _num(x), _num(pit.density[g]), _num(lo), _num(hi)])
        written.append(
            _write_csv(
                outdir / f"loopit_{_safe(model)}.csv",
                ["kind", "index", "x", "value", "envelope_lower", "envelope_upper"],
                body,
            )
        )
    manifest = outdir / "run_manifest.json"
    try:
        manifest.write_text(json.dumps(bundle.manifest(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"failed to write {manifest}: {exc}") from exc
    written.append(manifest)
    return written


def read_elpd_table(path):
    """Parse ``elpd_table.csv`` back into ``{(model, estimator): row dict}``."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for k, v in row.items():
                if k in ("model", "estimator"):
                    parsed[k] = v
                elif v == "":
                    parsed[k] = None
                else:
                    parsed[k] = float(v)
            out[(row["model"], row["estimator"])] = parsed
    return out
