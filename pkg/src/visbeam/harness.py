"""Run configuration, experiment execution and report files."""

from __future__ import annotations

import csv
import dataclasses
import fnmatch
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import suites as bundled
from .pipeline import PipelineParams, run_scenario
from .scene import Scenario, ScenarioError, load_scenario

logger = logging.getLogger(__name__)

REPORT_FILE = "report.json"


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


_TOP_KEYS = {"scenarios", "suites", "params", "out", "seed", "workers", "scenario_glob"}
_PARAM_KEYS = {
    "m_frames", "topn", "S_max", "iou_threshold", "tau_match", "history_len", "max_age",
    "link_m_frames", "sigma_scale", "clearance_db", "power_noise_db", "detection_noise", "zero_power",
}


@dataclass
class RunConfig:
    scenario_paths: list = field(default_factory=list)
    suites: list = field(default_factory=list)
    params: PipelineParams = field(default_factory=PipelineParams)
    power_noise_db: float | None = None  # overrides every scenario when set
    detection_noise: float | None = None
    out: str = "out"
    seed: int = 0
    workers: int = 1
    scenario_glob: str | None = None
    # paths as written in the config, echoed so reports do not depend on the checkout location
    scenario_sources: list = field(default_factory=list)

    def echo(self) -> dict:
        p = dataclasses.asdict(self.params)
        p["m_frames"] = list(p["m_frames"])
        p["topn"] = list(p["topn"])
        return {
            "scenarios": list(self.scenario_sources or [str(s) for s in self.scenario_paths]),
            "suites": list(self.suites),
            "params": p,
            "power_noise_db": self.power_noise_db,
            "detection_noise": self.detection_noise,
            "seed": self.seed,
            "scenario_glob": self.scenario_glob,
        }


def _int_list(value, key, problems):
    if isinstance(value, int) and not isinstance(value, bool):
        value = [value]
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    try:
        out = tuple(int(v) for v in value)
    except (TypeError, ValueError):
        problems.append(f"params.{key}: expected a list of integers, got {value!r}")
        return None
    if not out or any(v < 1 for v in out):
        problems.append(f"params.{key}: values must be >= 1")
        return None
    return out


def config_from_dict(data: dict, base_dir: Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Validate a config mapping; every problem found is reported at once."""
    if not isinstance(data, dict):
        raise ConfigError(["config must be a mapping"])
    data = dict(data)
    params_in = dict(data.get("params") or {})
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k in _PARAM_KEYS:
            params_in[k] = v
        else:
            data[k] = v
    problems = [f"unknown key: {k}" for k in sorted(set(data) - _TOP_KEYS)]
    problems += [f"unknown key: params.{k}" for k in sorted(set(params_in) - _PARAM_KEYS)]

    paths, sources = [], []
    for raw in data.get("scenarios") or []:
        p = Path(raw)
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        if p in paths:
            problems.append(f"scenarios: duplicate path {raw}")
            continue
        paths.append(p)
        sources.append(str(raw))
    suite_names = list(data.get("suites") or [])
    known = sorted(bundled.SUITE_BUILDERS)
    for s in suite_names:
        if s not in bundled.SUITE_BUILDERS:
            problems.append(f"suites: unknown suite {s!r} (known: {', '.join(known)})")
    if len(set(suite_names)) != len(suite_names):
        problems.append("suites: duplicate suite name")
    if not paths and not suite_names:
        problems.append("scenarios: at least one scenario path or suite is required")

    defaults = PipelineParams()
    kw = {}
    for key in ("m_frames", "topn"):
        if key in params_in:
            v = _int_list(params_in[key], key, problems)
            if v is not None:
                kw[key] = v
    scalar = {
        "S_max": ("s_max", int),
        "iou_threshold": ("iou_threshold", float),
        "tau_match": ("tau_match", float),
        "history_len": ("history_len", int),
        "max_age": ("max_age", int),
        "link_m_frames": ("link_m_frames", int),
        "sigma_scale": ("sigma_scale", float),
        "clearance_db": ("clearance_db", float),
    }
    for key, (attr, typ) in scalar.items():
        if key in params_in:
            try:
                kw[attr] = typ(params_in[key])
            except (TypeError, ValueError):
                problems.append(f"params.{key}: expected {typ.__name__}, got {params_in[key]!r}")
    if "zero_power" in params_in:
        kw["zero_power"] = bool(params_in["zero_power"])
    params = dataclasses.replace(defaults, **kw)
    if not 1 <= params.s_max <= 3:
        problems.append(f"params.S_max: must be in 1..3, got {params.s_max}")
    if not 0 < params.iou_threshold <= 1:
        problems.append("params.iou_threshold: must be in (0, 1]")
    if not 0 < params.tau_match < 1:
        problems.append("params.tau_match: must be in (0, 1)")
    if params.history_len < 2:
        problems.append("params.history_len: must be >= 2")
    if params.sigma_scale <= 0:
        problems.append("params.sigma_scale: must be > 0")

    noise = {}
    for key in ("power_noise_db", "detection_noise"):
        v = params_in.get(key)
        if v is not None:
            try:
                noise[key] = float(v)
            except (TypeError, ValueError):
                problems.append(f"params.{key}: expected a number")
                continue
            if noise[key] < 0:
                problems.append(f"params.{key}: must be >= 0")

    try:
        seed = int(data.get("seed", 0))
        if not 0 <= seed < 2**64:
            raise ValueError
    except (TypeError, ValueError):
        problems.append("seed: expected an unsigned 64-bit integer")
        seed = 0
    try:
        workers = int(data.get("workers", 1))
        if workers < 1:
            raise ValueError
    except (TypeError, ValueError):
        problems.append("workers: expected an integer >= 1")
        workers = 1

    cfg = RunConfig(
        scenario_paths=paths,
        suites=suite_names,
        params=params,
        power_noise_db=noise.get("power_noise_db"),
        detection_noise=noise.get("detection_noise"),
        out=str(Path(base_dir or ".") / str(data.get("out", "out"))),
        seed=seed,
        workers=workers,
        scenario_glob=data.get("scenario_glob"),
        scenario_sources=sources,
    )
    if not problems:
        try:
            scenarios = load_scenarios(cfg)
        except (OSError, ScenarioError, ValueError, KeyError, TypeError) as exc:
            problems.append(f"scenarios: {exc}")
        else:
            names = [s.name for s in scenarios]
            dup = sorted({n for n in names if names.count(n) > 1})
            if dup:
                problems.append(f"scenarios: duplicate scenario names {dup}")
            for sc in scenarios:
                too_big = [n for n in params.topn if n > sc.codebook.size]
                if too_big:
                    problems.append(
                        f"params.topn: N={too_big} exceeds codebook size Q={sc.codebook.size} of {sc.name!r}"
                    )
    if problems:
        raise ConfigError(problems)
    return cfg


def parse_config(path, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: invalid YAML: {exc}"]) from exc
    return config_from_dict(data or {}, base_dir=path.parent, overrides=overrides)


def load_scenarios(cfg: RunConfig) -> list[Scenario]:
    """Scenarios in config order (files, then bundled suites), filtered by the name glob."""
    out = [load_scenario(p) for p in cfg.scenario_paths]
    for name in cfg.suites:
        out.extend(bundled.SUITE_BUILDERS[name]())
    if cfg.scenario_glob:
        out = [s for s in out if fnmatch.fnmatchcase(s.name, cfg.scenario_glob)]
    for s in out:
        if cfg.power_noise_db is not None:
            s.power_noise_db = cfg.power_noise_db
        if cfg.detection_noise is not None:
            s.detection_noise = cfg.detection_noise
    return out


def scenario_seed(master: int, sc: Scenario) -> int:
    """Per-scenario seed from the master seed and the scenario's own name and seed."""
    digest = hashlib.sha256(f"{master}:{sc.name}:{sc.rng_seed}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


# -- running ----------------------------------------------------------------------


def _stringify_keys(obj):
    if isinstance(obj, dict):
        return {str(k): _stringify_keys(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_stringify_keys(v) for v in obj]
    return obj


def _run_one(args):
    sc, seed, params = args
    try:
        return sc.name, _stringify_keys(run_scenario(sc, seed, params)), None
    except Exception as exc:  # recorded per scenario; the run goes on
        logger.exception("scenario %s failed", sc.name)
        return sc.name, None, f"{type(exc).__name__}: {exc}"


@dataclass
class MetricsReport:
    config: dict
    seed: int
    scenarios: dict  # name -> result
    failures: dict  # name -> error message

    def to_dict(self) -> dict:
        return {"config": self.config, "seed": self.seed, "scenarios": self.scenarios, "failures": self.failures}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> MetricsReport:
        return cls(d["config"], d["seed"], d["scenarios"], d.get("failures", {}))


def run_experiment(cfg: RunConfig) -> MetricsReport:
    scenarios = load_scenarios(cfg)
    jobs = [(sc, scenario_seed(cfg.seed, sc), cfg.params) for sc in scenarios]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    done = {name: res for name, res, err in results if err is None}
    failed = {name: err for name, _, err in results if err is not None}
    return MetricsReport(cfg.echo(), cfg.seed, done, failed)


# -- report files -----------------------------------------------------------------


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def report_tables(report: MetricsReport) -> dict:
    """File name -> CSV text for every table and confusion matrix."""
    files = {}
    ident, beam, block, rec, trans = [], [], [], [], []
    for name in sorted(report.scenarios):
        res = report.scenarios[name]
        for m, v in sorted(res["identification"].items(), key=lambda kv: int(kv[0])):
            ident.append([name, int(m), v["accuracy"], v["samples"]])
        bs = res["beam_selection"]
        for n, acc in sorted(bs["topn"].items(), key=lambda kv: int(kv[0])):
            beam.append([name, int(n), acc, bs["candidate_containment"], bs["samples"]])
        for s, m in sorted(res["blockage"].items(), key=lambda kv: int(kv[0])):
            block.append(
                [name, int(s), m["accuracy"], m["precision"], m["recall"], m["fpr"], m["fnr"],
                 m["tp"], m["fp"], m["tn"], m["fn"]]
            )
            rows = []
            for kind, mat in (("raw", m["confusion"]), ("normalized", m["confusion_normalized"])):
                for label, row in zip(("negative", "positive"), mat):
                    rows.append([kind, label, *(row if row is not None else [None, None])])
            files[f"confusion/{name}_S{int(s)}.csv"] = _csv_text(
                ["matrix", "truth", "predicted_negative", "predicted_positive"], rows
            )
        for s, items in sorted(res["recovery"].items(), key=lambda kv: int(kv[0])):
            for r in items:
                rec.append([name, int(s), r["blocked_frame"], r["confirmed_frame"], r["provisional_object"],
                            r["confirmed_object"], r["kept"], r["correct"]])
        for s, items in sorted(res["transitions"].items(), key=lambda kv: int(kv[0])):
            for f, a, b in items:
                trans.append([name, int(s), f, a, b])
    files["table_tx_identification.csv"] = _csv_text(["scenario", "m_frames", "accuracy", "samples"], ident)
    files["table_beam_prediction.csv"] = _csv_text(
        ["scenario", "top_n", "accuracy", "candidate_containment", "samples"], beam
    )
    files["table_blockage.csv"] = _csv_text(
        ["scenario", "S", "accuracy", "precision", "recall", "fpr", "fnr", "tp", "fp", "tn", "fn"], block
    )
    files["table_recovery.csv"] = _csv_text(
        ["scenario", "S", "blocked_frame", "confirmed_frame", "provisional_object", "confirmed_object", "kept",
         "correct"],
        rec,
    )
    files["transitions.csv"] = _csv_text(["scenario", "S", "frame", "from", "to"], trans)
    return files


def emit_report(report: MetricsReport, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    files = {REPORT_FILE: report.to_json(), **report_tables(report)}
    written = []
    for rel, text in sorted(files.items()):
        path = out_dir / rel
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        written.append(path)
    return written


def load_report(path) -> MetricsReport:
    return MetricsReport.from_dict(json.loads(Path(path).read_text()))
