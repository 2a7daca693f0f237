"""CSV ingestion, analysis configuration and report writing.

Config files are flat ``key = value`` text; list values are comma
separated and ``#`` starts a comment. See README for the key list.
"""

from __future__ import annotations

import configparser
import json
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .data import DataError, Dataset
from .estimators import METHODS, ModelSpec, estimate_acd, prepare
from .inference import IID, LONELY_POLICIES, STRATIFIED, SurveyDesign
from .selection import KNOWN, MODELED, PROB_FLOOR

log = logging.getLogger(__name__)

NA_VALUES = ["", "NA"]


class ConfigError(ValueError):
    pass


def _list(v) -> tuple:
    if isinstance(v, (list, tuple)):
        return tuple(v)
    return tuple(s.strip() for s in str(v).split(",") if s.strip())


def _opt_list(v):
    return None if v is None else _list(v)


def _opt_float(v):
    return None if v in (None, "", "none", "None") else float(v)


def _opt_int(v):
    return None if v in (None, "", "none", "None") else int(float(v))


def _opt_str(v):
    return None if v in (None, "", "none", "None") else str(v)


@dataclass
class AnalysisConfig:
    outcome: str
    group: str
    weight: str
    covariates: tuple = ()
    ps_covariates: Optional[tuple] = None
    om_covariates: Optional[tuple] = None
    sel_covariates: Optional[tuple] = None
    categorical: tuple = ()
    group_level: Optional[str] = None
    stratum: Optional[str] = None
    psu: Optional[str] = None
    pop_size: Optional[int] = None
    pi_bar: Optional[float] = None
    methods: tuple = METHODS
    om_form: str = "interacted"
    selection_mode: str = KNOWN
    variance: str = IID
    lonely_psu: str = "error"
    alpha: float = 0.05
    clamp: float = PROB_FLOOR
    max_clamped_frac: float = 0.05
    trim: Optional[float] = None
    sample_size: str = "fixed"
    out_dir: Optional[str] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method tags: {', '.join(bad)}; valid: {', '.join(METHODS)}")
        if self.selection_mode not in (KNOWN, MODELED):
            raise ConfigError("selection_mode must be 'known' or 'modeled'")
        if self.variance not in (IID, STRATIFIED):
            raise ConfigError("variance must be 'iid' or 'stratified'")
        if self.variance == STRATIFIED and self.stratum is None:
            raise ConfigError("stratified variance needs a stratum column")
        if self.sample_size not in ("fixed", "random"):
            raise ConfigError("sample_size must be 'fixed' or 'random'")
        if self.sample_size == "random" and self.variance != IID:
            raise ConfigError("sample_size = random requires variance = iid")
        if self.lonely_psu not in LONELY_POLICIES:
            raise ConfigError(f"lonely_psu must be one of {', '.join(LONELY_POLICIES)}")
        for name in ("ps_covariates", "om_covariates", "sel_covariates"):
            sub = getattr(self, name)
            if sub is not None:
                missing = [c for c in sub if c not in self.covariates]
                if missing:
                    raise ConfigError(f"{name} lists columns not in covariates: {', '.join(missing)}")
        missing = [c for c in self.categorical if c not in self.covariates]
        if missing:
            raise ConfigError(f"categorical columns must be covariates: {', '.join(missing)}")

    @property
    def bound_columns(self) -> list:
        cols = [self.outcome, self.group, self.weight, *self.covariates]
        cols += [c for c in (self.stratum, self.psu) if c]
        return list(dict.fromkeys(cols))


_CONVERT = {
    "covariates": _list, "categorical": _list, "methods": _list,
    "ps_covariates": _opt_list, "om_covariates": _opt_list, "sel_covariates": _opt_list,
    "pop_size": _opt_int, "pi_bar": _opt_float, "trim": _opt_float,
    "alpha": float, "clamp": float, "max_clamped_frac": float,
    "stratum": _opt_str, "psu": _opt_str, "group_level": _opt_str, "out_dir": _opt_str,
}


def read_kv(path) -> dict:
    """Parse a flat key = value file into a dict of strings."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    text = Path(path).read_text(encoding="utf-8")
    parser.read_string("[main]\n" + text)
    return dict(parser["main"])


def parse_config(raw: dict) -> AnalysisConfig:
    known = {f.name for f in fields(AnalysisConfig)} - {"extra"}
    kwargs, extra = {}, {}
    for k, v in raw.items():
        if k in known:
            kwargs[k] = _CONVERT.get(k, str)(v)
        else:
            extra[k] = v
    for req in ("outcome", "group", "weight"):
        if req not in kwargs:
            raise ConfigError(f"config is missing required key {req!r}")
    if extra:
        log.warning("ignoring unknown config keys: %s", ", ".join(sorted(extra)))
    return AnalysisConfig(**kwargs, extra=extra)


def load_config(path) -> AnalysisConfig:
    return parse_config(read_kv(path))


# -- CSV ----------------------------------------------------------------------

def _to_float(v):
    try:
        return float(v)
    except (TypeError, ValueError):
        return None


def _numeric(series: pd.Series, name: str) -> np.ndarray:
    # python float() round-trips 17-digit text exactly
    out = series.map(_to_float)
    bad = out.isna() & series.notna()
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataError(f"column {name!r}: cannot parse {series.iloc[row]!r} as a number (data row {row + 1})")
    return out.to_numpy(dtype=float)


def _code_group(series: pd.Series, name: str, level: Optional[str]) -> np.ndarray:
    if level is not None:
        vals = series.astype(str)
        if not (vals == level).any():
            raise DataError(f"group column {name!r} has no rows equal to group_level {level!r}")
        a = (vals == level).astype(int).to_numpy()
        if np.unique(a).size != 2:
            raise DataError(f"group column {name!r} is not binary after coding")
        return a
    num = pd.to_numeric(series, errors="coerce")
    if num.notna().all():
        levels = set(np.unique(num.to_numpy()))
        if levels <= {0.0, 1.0} and len(levels) == 2:
            return num.to_numpy().astype(int)
        raise DataError(f"group column {name!r} is not binary after coding: levels {sorted(levels)}")
    levels = sorted(series.astype(str).unique())
    if len(levels) != 2:
        raise DataError(f"group column {name!r} is not binary after coding: levels {levels}")
    return (series.astype(str) == levels[1]).astype(int).to_numpy()


def dummy_code(series: pd.Series, name: str):
    """Reference-coded indicators; levels sorted lexicographically, first is the reference."""
    vals = series.astype(str)
    levels = sorted(vals.unique())
    cols = {f"{name}[{lev}]": (vals == lev).astype(float).to_numpy() for lev in levels[1:]}
    return cols, levels[0]


def load_dataset_csv(path, config: AnalysisConfig) -> Dataset:
    """Read a CSV, drop incomplete rows among bound columns and build a Dataset.

    ``Dataset.meta`` records rows read and dropped, categorical reference
    levels and the mapping from configured covariates to design columns.
    """
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, na_values=NA_VALUES, encoding="utf-8")
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    missing = [c for c in config.bound_columns if c not in df.columns]
    if missing:
        raise DataError(f"columns not found in {path}: {', '.join(missing)}")
    n_read = len(df)
    complete = df[config.bound_columns].notna().all(axis=1)
    df = df[complete].reset_index(drop=True)
    dropped = n_read - len(df)
    if dropped:
        log.info("dropped %d (complete-case)", dropped)
    if len(df) == 0:
        raise DataError("no rows remain after complete-case filtering")

    y = _numeric(df[config.outcome], config.outcome)
    a = _code_group(df[config.group], config.group, config.group_level)
    w = _numeric(df[config.weight], config.weight)
    columns, mats, expanded, references = [], [], {}, {}
    for c in config.covariates:
        if c in config.categorical:
            cols, ref = dummy_code(df[c], c)
            references[c] = ref
            expanded[c] = list(cols)
            for k, v in cols.items():
                columns.append(k)
                mats.append(v)
        else:
            expanded[c] = [c]
            columns.append(c)
            mats.append(_numeric(df[c], c))
    x = np.column_stack(mats) if mats else np.empty((len(df), 0))
    stratum = df[config.stratum].to_numpy() if config.stratum else None
    psu = df[config.psu].to_numpy() if config.psu else None
    meta = {"n_read": n_read, "dropped": dropped, "expanded": expanded, "reference_levels": references}
    return Dataset(y=y, a=a, x=x, sel_weight=w, columns=tuple(columns), stratum_id=stratum,
                   psu_id=psu, pop_size=config.pop_size, meta=meta)


def write_dataset_csv(data: Dataset, path) -> None:
    """Write bound columns with 17 significant digits so reloading is bit-exact."""
    cols = {"y": data.y, "a": data.a, **{c: data.x[:, j] for j, c in enumerate(data.columns)},
            "sel_weight": data.sel_weight}
    if data.stratum_id is not None:
        cols["stratum"] = data.stratum_id
    if data.psu_id is not None:
        cols["psu"] = data.psu_id
    pd.DataFrame(cols).to_csv(path, index=False, float_format="%.17g")


def expand_names(names, data: Dataset):
    if names is None:
        return None
    mapping = data.meta.get("expanded", {})
    out = []
    for n in names:
        out.extend(mapping.get(n, [n]))
    return tuple(out)


# -- running ------------------------------------------------------------------

def model_spec(config: AnalysisConfig, data: Dataset) -> ModelSpec:
    return ModelSpec(
        om_form=config.om_form,
        ps_covariates=expand_names(config.ps_covariates, data),
        om_covariates=expand_names(config.om_covariates, data),
        sel_covariates=expand_names(config.sel_covariates, data),
        selection_mode=config.selection_mode,
        pi_bar=config.pi_bar,
        max_clamped_frac=config.max_clamped_frac,
        trim=config.trim,
        clamp=config.clamp,
        random_n=config.sample_size == "random",
    )


def run_analysis(data: Dataset, config: AnalysisConfig) -> dict:
    """Run the configured method battery; failures are reported per method."""
    spec = model_spec(config, data)
    design = SurveyDesign.from_dataset(data) if config.variance == STRATIFIED else None
    rows, failed = [], []
    try:
        analysis = prepare(data, spec)
    except Exception as exc:
        analysis = None
        setup_error = f"{type(exc).__name__}: {exc}"
    for method in config.methods:
        if analysis is None:
            rows.append({"method": method, "error": setup_error})
            failed.append(method)
            continue
        try:
            est = estimate_acd(method, analysis, True, design, config.alpha, config.lonely_psu)
            rows.append({**est.as_row(), "error": ""})
        except Exception as exc:
            rows.append({"method": method, "error": f"{type(exc).__name__}: {exc}"})
            failed.append(method)
    return {
        "n": data.n,
        "n_read": data.meta.get("n_read", data.n),
        "dropped": data.meta.get("dropped", 0),
        "selection_mode": config.selection_mode,
        "variance": config.variance,
        "alpha": config.alpha,
        "results": rows,
        "failed": failed,
    }


REPORT_COLUMNS = ["method", "acd", "se", "ci_low", "ci_high", "mu1", "mu0"]


def _clean(v):
    if isinstance(v, (np.floating, float)):
        return None if not math.isfinite(float(v)) else float(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def canonical_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def report_frame(report: dict) -> pd.DataFrame:
    df = pd.DataFrame(report["results"])
    lead = [c for c in REPORT_COLUMNS if c in df.columns]
    rest = sorted(c for c in df.columns if c not in lead and c != "error")
    return df[lead + rest + (["error"] if "error" in df.columns else [])]


def write_report(report: dict, out_dir) -> tuple:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / "report.csv", out / "report.json"
    report_frame(report).to_csv(csv_path, index=False, float_format="%.17g")
    json_path.write_text(canonical_json(report), encoding="utf-8")
    return csv_path, json_path


def run_config(config: AnalysisConfig, data_path, out_dir=None) -> dict:
    data = load_dataset_csv(data_path, config)
    report = run_analysis(data, config)
    out_dir = out_dir or config.out_dir
    if out_dir:
        write_report(report, out_dir)
    return report


def validate(config: AnalysisConfig, data_path) -> dict:
    """Load and check a dataset against the config without estimating anything."""
    data = load_dataset_csv(data_path, config)
    info = {
        "n": data.n,
        "n_read": data.meta["n_read"],
        "dropped": data.meta["dropped"],
        "group_counts": np.bincount(data.a, minlength=2).tolist(),
        "design_columns": list(data.columns),
        "reference_levels": data.meta["reference_levels"],
        "weight_range": [float(data.sel_weight.min()), float(data.sel_weight.max())],
        "pop_size": data.pop_size,
    }
    if data.stratum_id is not None:
        design = SurveyDesign.from_dataset(data)
        groups = design.groups()
        info["strata"] = len(groups)
        info["lonely_psu_strata"] = sorted(str(k) for k, g in groups.items() if len(g) < 2)
    if data.pop_size is None and config.pi_bar is None:
        info["warning"] = "neither pop_size nor pi_bar set; proposed estimators will fail"
    return info
