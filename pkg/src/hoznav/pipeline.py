"""Batch pipelines behind the command line: gen, build-graph, run, ablate and report.

Everything lives under one workspace directory::

    dataset/manifest.json, dataset/rooms/*.json
    graphs/rooms/*.json, graphs/scenes/*.json, graphs/global.json,
    graphs/cooccurrence.json, graphs/params.json
    runs/<modes>/episodes.jsonl, runs/<modes>/report.json
    ablation/ablation.json, ablation/*.csv
    report/report.json, report/report.txt, report/series.csv

Every output is a pure function of the inputs on disk, the config and the
root seed.  Per-episode seeds come from ``derive_seed(root, "episode",
room, target, trial)`` so they do not depend on scheduling or on the mode
being run (all modes see the same spawn poses).
"""

from __future__ import annotations

import csv
import io
import json
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .construction import HozGraph, build_room_graph, save_graph
from .core import NUM_CATEGORIES, SCENES, GridEnvironment, derive_seed, load_environment, make_rng, save_environment
from .embedding import GcnParams, co_occurrence_counts, init_params, load_params, save_params
from .merging import GlobalGraph, build_global_graph, build_scene_graph, load_global, save_global
from .metrics import EmptySubset, aggregate_trials, evaluate
from .policy import MODES, PolicyConfig, run_episode
from .rooms import DEFAULT_SIZE_RANGE, generate_environment
from .simulator import EpisodeRecord, read_episode_log, sweep_observations, write_episode_log

CONFIG_VERSION = 1
MANIFEST_VERSION = 1
REPORT_VERSION = 1
SUBSETS = ("all", "L>=5")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    k: int = 8
    epsilon: float = 0.25
    alpha: float = 0.1
    beta: float = 0.6
    lam: float = 0.5
    k_sweep: tuple = (2, 4, 8, 16)
    lambda_sweep: tuple = (0.0, 0.5, 1.0)
    modes: tuple = ("hoz",)
    budget: int = 100
    trials: int = 5
    splits: tuple = (20, 5, 5)
    scenes: tuple = SCENES
    size_range: tuple = DEFAULT_SIZE_RANGE
    shuffle_merge_order: bool = False
    merge_shuffles: int = 20
    scene_recognition: str = "oracle"
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.k < 1 or any(k < 1 for k in self.k_sweep):
            raise ValueError("K must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if len(self.splits) != 3 or any(n < 1 for n in self.splits):
            raise ValueError("splits must be three positive room counts (train, val, test)")
        unknown = [m for m in self.modes if m not in MODES]
        if unknown or not self.modes:
            raise ValueError(f"unknown policy mode(s) {unknown}; choose from {MODES}")
        unknown = [s for s in self.scenes if s not in SCENES]
        if unknown:
            raise ValueError(f"unknown scene(s) {unknown}")
        if self.scene_recognition not in ("oracle", "nearest"):
            raise ValueError("scene recognition must be 'oracle' or 'nearest'")
        if self.budget < 0 or self.jobs < 1:
            raise ValueError("budget must be >= 0 and jobs >= 1")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d = {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
        d["version"] = CONFIG_VERSION
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return resolve_config(d)


def resolve_config(*layers: Optional[dict]) -> RunConfig:
    """Defaults, then each layer in turn; later layers win.  ``None`` values are skipped."""
    known = {f.name for f in fields(RunConfig)}
    merged = {}
    for layer in layers:
        for key, value in (layer or {}).items():
            if key == "version":
                if value != CONFIG_VERSION:
                    raise ValueError(f"unsupported config version {value}")
                continue
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            if value is not None:
                merged[key] = tuple(value) if isinstance(value, list) else value
    return RunConfig(**merged)


def load_config(path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data


@dataclass(frozen=True)
class Workspace:
    root: Path

    def __post_init__(self) -> None:
        object.__setattr__(self, "root", Path(self.root))

    @property
    def dataset(self) -> Path:
        return self.root / "dataset"

    @property
    def manifest(self) -> Path:
        return self.dataset / "manifest.json"

    @property
    def graphs(self) -> Path:
        return self.root / "graphs"

    @property
    def runs(self) -> Path:
        return self.root / "runs"

    @property
    def ablation(self) -> Path:
        return self.root / "ablation"

    @property
    def report(self) -> Path:
        return self.root / "report"

    def room_file(self, room_id: str) -> Path:
        return self.dataset / "rooms" / f"{room_id}.json"


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dumps(obj), encoding="utf-8")


def _claim(directory: Path, force: bool) -> None:
    if directory.exists() and any(directory.iterdir()):
        if not force:
            raise FileExistsError(f"{directory} already exists; pass --force to overwrite")
        shutil.rmtree(directory)
    directory.mkdir(parents=True, exist_ok=True)


# ---------------------------------------------------------------- gen

def generate_dataset(cfg: RunConfig) -> tuple[dict, list[GridEnvironment]]:
    n_train, n_val, n_test = cfg.splits
    total = n_train + n_val + n_test
    splits, envs = {}, []
    for scene in cfg.scenes:
        ids = []
        for i in range(total):
            room_id = f"{scene}_{i:02d}"
            rng = make_rng(derive_seed(cfg.seed, "room", scene, i))
            envs.append(generate_environment(scene, rng, tuple(cfg.size_range), room_id=room_id))
            ids.append(room_id)
        splits[scene] = {"train": ids[:n_train], "val": ids[n_train:n_train + n_val], "test": ids[n_train + n_val:]}
    manifest = {
        "version": MANIFEST_VERSION,
        "seed": cfg.seed,
        "size_range": list(cfg.size_range),
        "splits": splits,
    }
    return manifest, envs


def cmd_gen(cfg: RunConfig, ws: Workspace, force: bool = False) -> dict:
    _claim(ws.dataset, force)
    manifest, envs = generate_dataset(cfg)
    (ws.dataset / "rooms").mkdir(parents=True, exist_ok=True)
    for env in envs:
        save_environment(env, ws.room_file(env.room_id))
    _write_json(ws.manifest, manifest)
    return manifest


def load_manifest(ws: Workspace) -> dict:
    if not ws.manifest.exists():
        raise FileNotFoundError(f"no dataset manifest at {ws.manifest}; run gen first")
    return json.loads(ws.manifest.read_text(encoding="utf-8"))


def load_split(ws: Workspace, split: str, scenes: Optional[Sequence[str]] = None) -> dict[str, list[GridEnvironment]]:
    """Environments of one split keyed by scene name, rooms in id order."""
    manifest = load_manifest(ws)
    out = {}
    for scene, parts in sorted(manifest["splits"].items()):
        if scenes is not None and scene not in scenes:
            continue
        if split not in parts or not parts[split]:
            raise FileNotFoundError(f"split {split!r} missing for scene {scene}")
        out[scene] = [load_environment(ws.room_file(rid)) for rid in sorted(parts[split])]
    if not out:
        raise FileNotFoundError(f"split {split!r} is empty")
    return out


# ---------------------------------------------------------------- build-graph

class SampleCache(dict):
    """room id -> sweep observations, so sweeps are not repeated across builds."""

    def get_samples(self, env: GridEnvironment):
        if env.room_id not in self:
            self[env.room_id] = sweep_observations(env)
        return self[env.room_id]


def build_room_graphs(cfg: RunConfig, envs: Sequence[GridEnvironment], k: int,
                      cache: Optional[SampleCache] = None, use_location: bool = False) -> list[HozGraph]:
    cache = SampleCache() if cache is None else cache
    graphs = []
    for env in envs:
        seed = derive_seed(cfg.seed, "kmeans", env.room_id, k)
        graphs.append(build_room_graph(cache.get_samples(env), k, cfg.epsilon, make_rng(seed),
                                       use_location=use_location, scene_label=env.scene_label,
                                       room_id=env.room_id, seed=seed))
    return graphs


def merge_order(room_graphs: Sequence[HozGraph], cfg: RunConfig, shuffle: Optional[int] = None) -> list[HozGraph]:
    """Rooms in id order, or a seeded permutation of it when ``shuffle`` is an index."""
    ordered = sorted(room_graphs, key=lambda g: g.metadata["room_id"])
    if shuffle is None:
        return ordered
    perm = make_rng(derive_seed(cfg.seed, "merge-order", shuffle)).permutation(len(ordered))
    return [ordered[i] for i in perm]


def build_global(cfg: RunConfig, rooms_by_scene: dict[str, list[HozGraph]],
                 shuffle: Optional[int] = None) -> GlobalGraph:
    return build_global_graph(build_scene_graph(merge_order(rooms, cfg, shuffle), cfg.alpha)
                              for _, rooms in sorted(rooms_by_scene.items()))


def gcn_params(cfg: RunConfig, envs: Iterable[GridEnvironment], cache: Optional[SampleCache] = None
               ) -> tuple[np.ndarray, GcnParams]:
    cache = SampleCache() if cache is None else cache
    feats = [s.feature for env in envs for s in cache.get_samples(env)]
    counts = co_occurrence_counts(feats, NUM_CATEGORIES)
    return counts, init_params(NUM_CATEGORIES, derive_seed(cfg.seed, "gcn"), counts)


def cmd_build_graph(cfg: RunConfig, ws: Workspace, force: bool = False) -> GlobalGraph:
    train = load_split(ws, "train", cfg.scenes)
    _claim(ws.graphs, force)
    cache = SampleCache()
    rooms_by_scene = {scene: build_room_graphs(cfg, envs, cfg.k, cache) for scene, envs in train.items()}
    (ws.graphs / "rooms").mkdir(parents=True, exist_ok=True)
    for rooms in rooms_by_scene.values():
        for g in rooms:
            save_graph(g, ws.graphs / "rooms" / f"{g.metadata['room_id']}.json")
    shuffle = 0 if cfg.shuffle_merge_order else None
    global_graph = build_global(cfg, rooms_by_scene, shuffle)
    (ws.graphs / "scenes").mkdir(parents=True, exist_ok=True)
    for label in global_graph.labels():
        save_graph(global_graph.get(label), ws.graphs / "scenes" / f"{SCENES[label]}.json")
    save_global(global_graph, ws.graphs / "global.json")
    counts, params = gcn_params(cfg, (e for envs in train.values() for e in envs), cache)
    _write_json(ws.graphs / "cooccurrence.json", {"version": 1, "counts": counts.tolist()})
    save_params(params, ws.graphs / "params.json")
    return global_graph


def load_graphs(ws: Workspace) -> tuple[GlobalGraph, GcnParams]:
    path = ws.graphs / "global.json"
    if not path.exists():
        raise FileNotFoundError(f"no graphs at {ws.graphs}; run build-graph first")
    return load_global(path), load_params(ws.graphs / "params.json")


# ---------------------------------------------------------------- run

@dataclass(frozen=True)
class _RoomJob:
    env: GridEnvironment
    graphs: GlobalGraph
    params: Optional[GcnParams]
    modes: tuple
    trials: int
    cfg: RunConfig
    lam: float


def _run_room(job: _RoomJob) -> list[EpisodeRecord]:
    cfg = job.cfg
    out = []
    for mode in job.modes:
        policy = PolicyConfig(beta=cfg.beta, mode=mode)
        for target in job.env.categories_present:
            for trial in range(job.trials):
                seed = derive_seed(cfg.seed, "episode", job.env.room_id, target, trial)
                rec = run_episode(job.env, target, job.graphs, job.params, policy, make_rng(seed),
                                  budget=cfg.budget, lam=job.lam, alpha=cfg.alpha,
                                  scene_recognition=cfg.scene_recognition, seed=seed)
                out.append(replace(rec, trial=trial))
    return out


def run_episodes(cfg: RunConfig, envs: Sequence[GridEnvironment], graphs: GlobalGraph,
                 params: Optional[GcnParams], modes: Optional[Sequence[str]] = None,
                 trials: Optional[int] = None, lam: Optional[float] = None) -> list[EpisodeRecord]:
    """Every (room, present target, trial) episode for each mode, in a fixed order."""
    jobs = [_RoomJob(env, graphs, params, tuple(modes or cfg.modes), trials or cfg.trials, cfg,
                     cfg.lam if lam is None else lam) for env in envs]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            chunks = list(pool.map(_run_room, jobs))
    else:
        chunks = [_run_room(j) for j in jobs]
    records = [r for chunk in chunks for r in chunk]
    order = {m: i for i, m in enumerate(modes or cfg.modes)}
    records.sort(key=lambda r: (order[r.mode], r.env_id, r.target, r.trial))
    return records


def summarize(records: Sequence[EpisodeRecord]) -> list[dict]:
    """One row per (mode, subset): per-trial metrics, then mean and sample variance over trials."""
    if not records:
        raise ValueError("no episode records to summarize")
    rows = []
    modes = sorted({r.mode for r in records}, key=lambda m: MODES.index(m) if m in MODES else len(MODES))
    for mode in modes:
        mine = [r for r in records if r.mode == mode]
        trials = sorted({r.trial for r in mine})
        for subset in SUBSETS:
            try:
                per_trial = [evaluate([r for r in mine if r.trial == t], subset) for t in trials]
            except EmptySubset:
                rows.append({"mode": mode, "subset": subset, "n_episodes": 0, "trials": len(trials),
                             "sr": None, "spl": None, "sae": None, "variance": {}})
                continue
            report = aggregate_trials(per_trial) if len(per_trial) >= 2 else per_trial[0]
            rows.append({"mode": mode, **report.as_dict()})
    return rows


def make_report(rows: list[dict], cfg: Optional[RunConfig] = None) -> dict:
    out = {"version": REPORT_VERSION, "rows": rows}
    if cfg is not None:
        out["config"] = cfg.to_dict()
    return out


def cmd_run(cfg: RunConfig, ws: Workspace, force: bool = False) -> dict:
    test = load_split(ws, "test", cfg.scenes)
    graphs, params = load_graphs(ws)
    out_dir = ws.runs / "+".join(cfg.modes)
    _claim(out_dir, force)
    records = run_episodes(cfg, [e for envs in test.values() for e in envs], graphs, params)
    write_episode_log(records, out_dir / "episodes.jsonl")
    report = make_report(summarize(records), cfg)
    _write_json(out_dir / "report.json", report)
    return report


# ---------------------------------------------------------------- ablate

def _row(sweep: str, value, rows: list[dict]) -> list[dict]:
    return [{"sweep": sweep, "value": value, **r} for r in rows]


def run_ablation(cfg: RunConfig, train: dict[str, list[GridEnvironment]],
                 test: dict[str, list[GridEnvironment]], params: Optional[GcnParams] = None,
                 sweeps: Sequence[str] = ("K", "lambda", "mode", "clustering", "merge-order")) -> list[dict]:
    """Rows for the zone-count, lambda, guidance-mode, clustering-input and merge-order sweeps."""
    cache = SampleCache()
    test_envs = [e for envs in test.values() for e in envs]
    if params is None:
        _, params = gcn_params(cfg, (e for envs in train.values() for e in envs), cache)
    rooms_at = {}

    def rooms(k: int, use_location: bool = False):
        key = (k, use_location)
        if key not in rooms_at:
            rooms_at[key] = {s: build_room_graphs(cfg, envs, k, cache, use_location) for s, envs in train.items()}
        return rooms_at[key]

    memo = {}

    def evaluate_cell(k: int, mode: str, lam: float, use_location: bool = False) -> list[dict]:
        key = (k, mode, lam, use_location)
        if key not in memo:
            graphs = build_global(cfg, rooms(k, use_location))
            memo[key] = summarize(run_episodes(cfg, test_envs, graphs, params, (mode,), lam=lam))
        return memo[key]

    out = []
    if "K" in sweeps:
        for k in cfg.k_sweep:
            out += _row("K", k, evaluate_cell(k, "hoz", cfg.lam))
    if "lambda" in sweeps:
        for lam in cfg.lambda_sweep:
            out += _row("lambda", lam, evaluate_cell(cfg.k, "hoz", lam))
    if "mode" in sweeps:
        for mode in ("hoz", "target-zone"):
            out += _row("mode", mode, evaluate_cell(cfg.k, mode, cfg.lam))
    if "clustering" in sweeps:
        out += _row("clustering", "visual", evaluate_cell(cfg.k, "hoz", cfg.lam))
        out += _row("clustering", "visual+location", evaluate_cell(cfg.k, "hoz", cfg.lam, True))
    if "merge-order" in sweeps:
        srs = []
        for i in range(cfg.merge_shuffles):
            graphs = build_global(cfg, rooms(cfg.k), shuffle=i)
            rows = summarize(run_episodes(cfg, test_envs, graphs, params, ("hoz",)))
            out += _row("merge-order", i, rows)
            srs.append(next(r["sr"] for r in rows if r["subset"] == "all"))
        values = np.array(srs)
        out.append({"sweep": "merge-order-summary", "value": cfg.merge_shuffles, "mode": "hoz",
                    "subset": "all", "sr": float(values.mean()),
                    "sr_std": float(values.std(ddof=1)) if len(values) > 1 else 0.0,
                    "variance": {"sr": float(values.var(ddof=1)) if len(values) > 1 else 0.0}})
    return out


def series_csv(rows: Sequence[dict]) -> str:
    """Flat plot-ready table: one line per row, metric means and variances as columns."""
    lead = ["sweep", "value"] if any("sweep" in r for r in rows) else []
    cols = lead + ["mode", "subset", "n_episodes", "trials", "sr", "spl", "sae"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols + ["var_sr", "var_spl", "var_sae"])
    for r in rows:
        var = r.get("variance") or {}
        line = [r.get(c) for c in cols] + [var.get(m) for m in ("sr", "spl", "sae")]
        w.writerow(["" if v is None else v for v in line])
    return buf.getvalue()


def cmd_ablate(cfg: RunConfig, ws: Workspace, force: bool = False) -> dict:
    train = load_split(ws, "train", cfg.scenes)
    test = load_split(ws, "test", cfg.scenes)
    _claim(ws.ablation, force)
    rows = run_ablation(cfg, train, test)
    report = make_report(rows, cfg)
    _write_json(ws.ablation / "ablation.json", report)
    for sweep in sorted({r["sweep"] for r in rows}):
        (ws.ablation / f"{sweep}.csv").write_text(series_csv([r for r in rows if r["sweep"] == sweep]),
                                                  encoding="utf-8")
    return report


# ---------------------------------------------------------------- report

def _fmt(mean, var) -> str:
    if mean is None:
        return "n/a"
    if var is None:
        return f"{mean:.4f}"
    return f"{mean:.4f} ± {var:.4f}"


def render_table(rows: Sequence[dict]) -> str:
    """Fixed-width text table, metric columns as mean ± variance."""
    lead = ["sweep", "value"] if any("sweep" in r for r in rows) else []
    head = lead + ["mode", "subset", "n", "trials", "SR", "SPL", "SAE"]
    lines = []
    for r in rows:
        var = r.get("variance") or {}
        cells = [str(r.get(c, "")) for c in lead]
        cells += [str(r.get("mode", "")), str(r.get("subset", "")), str(r.get("n_episodes", "")),
                  str(r.get("trials", ""))]
        cells += [_fmt(r.get(m), var.get(m)) for m in ("sr", "spl", "sae")]
        lines.append(cells)
    widths = [max([len(h)] + [len(c[i]) for c in lines]) for i, h in enumerate(head)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    return "\n".join(fmt.format(*c).rstrip() for c in [head] + lines) + "\n"


def _read_rows(path: Path) -> list[dict]:
    if path.suffix == ".jsonl":
        return summarize(read_episode_log(path))
    data = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict) or "rows" not in data:
        raise ValueError(f"{path}: neither an episode log nor a report")
    return data["rows"]


def collect_rows(paths: Sequence[Path]) -> list[dict]:
    """Rows from episode logs (``.jsonl``) and/or earlier report files.

    All episode logs are pooled before summarizing so that one mode spread
    over several files is aggregated once.
    """
    logs = [p for p in paths if Path(p).suffix == ".jsonl"]
    others = [p for p in paths if Path(p).suffix != ".jsonl"]
    rows = []
    if logs:
        records = [r for p in logs for r in read_episode_log(p)]
        if not records:
            raise ValueError("episode logs contain no records")
        rows += summarize(records)
    for p in others:
        rows += _read_rows(Path(p))
    if not rows:
        raise ValueError("no report rows found in the given inputs")
    return rows


def cmd_report(ws: Workspace, inputs: Sequence[Path] = (), force: bool = False) -> dict:
    paths = [Path(p) for p in inputs] or sorted(ws.runs.glob("*/episodes.jsonl"))
    if not paths:
        raise ValueError(f"no episode logs under {ws.runs} and no inputs given")
    rows = collect_rows(paths)
    _claim(ws.report, force)
    report = make_report(rows)
    _write_json(ws.report / "report.json", report)
    (ws.report / "report.txt").write_text(render_table(rows), encoding="utf-8")
    (ws.report / "series.csv").write_text(series_csv(rows), encoding="utf-8")
    return report
