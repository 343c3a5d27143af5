"""Pipeline stages. Each writes into ``<output>/<stage>/`` with a manifest."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from importlib import metadata
from pathlib import Path

import numpy as np
import pandas as pd

from . import connectedness as cn
from . import forest as rf
from .config import RunConfig, stage_seed
from .emd import EnsembleConfig, IMFSet, SiftConfig, iceemdan
from .ingest import DataError, align_forward_fill, frame_returns, load_csv
from .network import build_network, export
from .reconstruct import classify_components, mode_measures
from .report import write_heatmap
from .stats import describe_table, write_stats

logger = logging.getLogger(__name__)

STAGES = ("stats", "decompose", "reconstruct", "connect", "network", "drivers")
REQUIRES = {
    "decompose": "stats",
    "reconstruct": "decompose",
    "connect": "reconstruct",
    "network": "connect",
    "drivers": "connect",
}
SCHEMA_VERSION = 1
GRAIN_NAMES = {"W": "Wheat", "M": "Maize", "S": "Soybean", "R": "Rice"}


class StageError(RuntimeError):
    """A stage cannot run, e.g. because an earlier stage has not been run."""


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _stage_dir(root, stage, create=True):
    d = Path(root) / stage
    if create:
        d.mkdir(parents=True, exist_ok=True)
    return d


def _require(root, stage):
    prior = REQUIRES[stage]
    manifest = Path(root) / prior / "manifest.json"
    if not manifest.is_file():
        raise StageError(f"`{stage}` needs the outputs of `{prior}`; run `grainspill {prior}` first (looked in {manifest.parent})")
    return manifest


def _write_manifest(directory, stage, cfg: RunConfig, inputs):
    directory = Path(directory)
    outputs = {
        p.name: sha256(p) for p in sorted(directory.iterdir()) if p.is_file() and p.name != "manifest.json"
    }
    manifest = {
        "stage": stage,
        "schema": SCHEMA_VERSION,
        "version": _version(),
        "seed": cfg.seed,
        "stage_seed": stage_seed(cfg.seed, stage),
        "config": cfg.section(stage),
        "inputs": {str(k): sha256(v) for k, v in inputs.items()},
        "outputs": outputs,
    }
    with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _read_dated(path):
    frame = pd.read_csv(path, index_col=0, parse_dates=True, float_precision="round_trip")
    frame.index.name = "date"
    return frame


def _to_csv(frame, path):
    frame.to_csv(path, float_format="%.17g", date_format="%Y-%m-%d")


# -- stages -------------------------------------------------------------------


def run_stats(cfg: RunConfig, root):
    path = cfg.resolve(cfg.prices)
    frame = load_csv(path, value_columns=list(cfg.series) or None, frequency="daily")
    prices = align_forward_fill([frame])
    returns = frame_returns(prices)
    d = _stage_dir(root, "stats")
    _to_csv(returns, d / "returns.csv")
    write_stats(returns, d / "table1.csv", d / "stats.json")
    return _write_manifest(d, "stats", cfg, {"prices": path})


def run_decompose(cfg: RunConfig, root):
    _require(root, "decompose")
    src = Path(root) / "stats" / "returns.csv"
    returns = _read_dated(src)
    ens = EnsembleConfig(n_ensemble=cfg.ensemble, noise_scale=cfg.noise, seed=stage_seed(cfg.seed, "decompose"),
                         max_modes=cfg.max_modes)
    d = _stage_dir(root, "decompose")
    counts = {}
    for name in returns.columns:
        x = returns[name].to_numpy(dtype=float)
        imfs = iceemdan(x, SiftConfig(), ens, n_jobs=cfg.threads)
        imfs.to_csv(d / f"imfs_{name}.csv", dates=returns.index.strftime("%Y-%m-%d"))
        counts[name] = imfs.n_modes
    with open(d / "modes.json", "w", encoding="utf-8") as fh:
        json.dump({"series": list(returns.columns), "n_modes": counts}, fh, indent=2)
    return _write_manifest(d, "decompose", cfg, {"returns": src})


def _load_imfs(path):
    frame = pd.read_csv(path, index_col=0, float_precision="round_trip")
    modes = frame[[c for c in frame.columns if c.startswith("imf")]].to_numpy(dtype=float).T
    return IMFSet(modes.reshape(-1, len(frame)), frame["residue"].to_numpy(dtype=float)), frame.index


def run_reconstruct(cfg: RunConfig, root):
    _require(root, "reconstruct")
    returns = _read_dated(Path(root) / "stats" / "returns.csv")
    d = _stage_dir(root, "reconstruct")
    seed = stage_seed(cfg.seed, "reconstruct")
    comps, table2, groups, inputs = {}, [], {}, {}
    for name in returns.columns:
        src = Path(root) / "decompose" / f"imfs_{name}.csv"
        inputs[name] = src
        imfs, _ = _load_imfs(src)
        x = returns[name].to_numpy(dtype=float)
        cs = classify_components(imfs, k=cfg.k, scale=cfg.scale, restarts=cfg.restarts, seed=seed,
                                 residue_to_last=cfg.residue_to_ltc)
        meas = mode_measures(imfs, x).to_frame(groups=cs.membership + ([cs.names[-1]] if cs.residue_in_last else []))
        meas.insert(0, "series", name)
        table2.append(meas)
        groups[name] = {"membership": cs.membership, "method": cs.method, "run_lengths": cs.run_lengths.tolist()}
        for comp, suffix in zip(cs.names, component_suffixes(cfg.k)):
            comps[name + suffix] = cs[comp]
    comp_frame = pd.DataFrame(comps, index=returns.index)
    _to_csv(comp_frame, d / "components.csv")
    _to_csv(pd.concat(table2), d / "table2.csv")
    write_stats(comp_frame, d / "table3.csv", d / "table3.json")
    with open(d / "groups.json", "w", encoding="utf-8") as fh:
        json.dump(groups, fh, indent=2, sort_keys=True)
    return _write_manifest(d, "reconstruct", cfg, inputs)


def component_suffixes(k):
    return ["S", "M", "L"] if k == 3 else [f"C{j + 1}" for j in range(k)]


def panels(series, k=3):
    """Cross-grain panels per timescale and cross-timescale panels per grain.

    Series codes are a grain prefix plus a one-letter market code, e.g. ``WF``.
    """
    suffixes = component_suffixes(k)
    names = {"S": "STC", "M": "MTC", "L": "LTC"}
    out = {f"scale_{names.get(s, s)}": [c + s for c in series] for s in suffixes}
    for g in dict.fromkeys(c[:-1] for c in series):
        members = [c for c in series if c[:-1] == g]
        out[f"grain_{GRAIN_NAMES.get(g, g)}"] = [m + s for s in suffixes for m in members]
    return out


def run_connect(cfg: RunConfig, root):
    _require(root, "connect")
    src = Path(root) / "reconstruct" / "components.csv"
    comps = _read_dated(src)
    series = list(_read_dated(Path(root) / "stats" / "returns.csv").columns)
    T = len(comps)
    if cfg.window > T:
        raise StageError(f"rolling window {cfg.window} is longer than the series (T={T})")
    d = _stage_dir(root, "connect")
    tci = {}
    static_tci = {}
    for pname, cols in panels(series, cfg.k).items():
        sub = comps[cols]
        table = cn.connectedness_table(sub, lags=cfg.lags, method=cfg.mode, horizon=cfg.horizon, var_lags=cfg.var_lags)
        table.to_csv(d / f"static_{pname}.csv")
        static_tci[pname] = table.tci
        roll = cn.rolling_connectedness(sub, cfg.window, cfg.step, n_jobs=cfg.threads, method=cfg.mode,
                                        horizon=cfg.horizon, var_lags=cfg.var_lags)
        roll.to_csv(d / f"rolling_{pname}.csv")
        if len(roll):
            cn.average_connectedness(roll).to_csv(d / f"average_{pname}.csv")
        tci[pname] = roll.tci
    _to_csv(pd.DataFrame(tci), d / "tci.csv")
    whole = cn.connectedness_table(comps, method=cfg.mode, horizon=cfg.horizon, var_lags=cfg.var_lags)
    _to_csv(whole.matrix_frame(), d / "heatmap_matrix.csv")
    write_heatmap(whole.matrix_frame(), d / "heatmap.svg", title="static spillovers across all components")
    with open(d / "static_tci.json", "w", encoding="utf-8") as fh:
        json.dump(static_tci, fh, indent=2, sort_keys=True)
    return _write_manifest(d, "connect", cfg, {"components": src})


def run_network(cfg: RunConfig, root):
    _require(root, "network")
    cdir = Path(root) / "connect"
    d = _stage_dir(root, "network")
    inputs = {}
    prefix = "static_" if cfg.network_source == "static" else "average_"
    sources = sorted(p for p in cdir.glob(f"{prefix}*.csv"))
    if not sources:
        raise StageError(f"no {prefix}*.csv tables in {cdir}; run `grainspill connect` first")
    for src in sources:
        pname = src.stem[len(prefix):]
        net = build_network(cn.ConnectednessTable.read_csv(src), cfg.edge_threshold)
        for fmt in ("dot", "json", "csv"):
            export(net, d / f"network_{pname}.{fmt}")
        inputs[pname] = src
    return _write_manifest(d, "network", cfg, inputs)


def load_factors(cfg: RunConfig, calendar):
    frames = [load_csv(cfg.resolve(f.path), frequency=f.frequency) for f in cfg.factors]
    if not frames:
        raise StageError("no factor files configured ([data] factors)")
    return align_forward_fill(frames, target_calendar=calendar).data


def run_drivers(cfg: RunConfig, root):
    _require(root, "drivers")
    src = Path(root) / "connect" / "tci.csv"
    tci = _read_dated(src).dropna()
    factors = load_factors(cfg, tci.index)
    tci = tci.loc[factors.index]
    d = _stage_dir(root, "drivers")
    seed = stage_seed(cfg.seed, "drivers")
    metrics, importance, summary = {}, {}, {}
    other = "chronological" if cfg.split == "random" else "random"
    for target in tci.columns:
        ds = rf.standardize_split(factors, tci[target].to_numpy(), cfg.ratio, cfg.split, seed)
        search = rf.grid_search(ds.X_train, ds.y_train, cfg.grid, cv=cfg.cv, seed=seed,
                                shuffle=cfg.split == "random", min_samples_leaf=cfg.min_leaf, n_jobs=cfg.threads)
        model = rf.fit_forest(ds.X_train, ds.y_train, {**search.best_params, "n_jobs": cfg.threads}, seed=seed)
        info = rf.model_summary(model, ds, permutation=cfg.permutation, seed=seed)
        info["grid"] = search.results.to_dict(orient="records")
        # the same hyperparameters under the other split mode
        ds2 = rf.standardize_split(factors, tci[target].to_numpy(), cfg.ratio, other, seed)
        m2 = rf.fit_forest(ds2.X_train, ds2.y_train, {**search.best_params, "n_jobs": cfg.threads}, seed=seed)
        info[f"{other}_split"] = rf.model_summary(m2, ds2)
        summary[target] = info
        for mode, s in ((cfg.split, info), (other, info[f"{other}_split"])):
            metrics[(mode, target, "Training")] = [s["train"]["mae"], s["train"]["mse"]]
            metrics[(mode, target, "Test")] = [s["test"]["mae"], s["test"]["mse"]]
        importance[target] = dict(zip(ds.feature_names, model.feature_importances_.tolist()))
        pd.DataFrame(info["importance"]).to_csv(d / f"importance_{target}.csv", index=False, float_format="%.17g")
    table8 = pd.DataFrame(metrics, index=["MAE", "MSE"])
    table8.columns.names = ["split", "target", "set"]
    table8.to_csv(d / "table8.csv", float_format="%.17g")
    pd.DataFrame(importance).to_csv(d / "importance.csv", float_format="%.17g")
    with open(d / "drivers.json", "w", encoding="utf-8") as fh:
        json.dump(_clean(summary), fh, indent=2, sort_keys=True)
    inputs = {"tci": src, **{f.path: cfg.resolve(f.path) for f in cfg.factors}}
    return _write_manifest(d, "drivers", cfg, inputs)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


RUNNERS = {
    "stats": run_stats,
    "decompose": run_decompose,
    "reconstruct": run_reconstruct,
    "connect": run_connect,
    "network": run_network,
    "drivers": run_drivers,
}


def run_stage(stage, cfg: RunConfig, root):
    try:
        return RUNNERS[stage](cfg, root)
    except DataError as exc:
        raise StageError(str(exc)) from exc


def run_all(cfg: RunConfig, root):
    return {stage: run_stage(stage, cfg, root) for stage in STAGES}


__all__ = ["STAGES", "StageError", "run_stage", "run_all", "panels", "describe_table"]
