"""Command-line pipeline: prepare, select-templates, train, eval,
theory-check and error-curve.

Each command rebuilds whatever upstream state it needs from the config
(loading, preprocessing, splitting and scenario construction are all
seeded), so a command is a function of the config file and its input
files. Results land in ``--out DIR`` next to ``manifest.json`` (sha256 of
every result file) and ``metadata.json`` (timestamps and timings, which are
the only non-reproducible output).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import time
import warnings
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import BUILTIN_TOY, SCENARIOS, ConfigError, RunConfig, load_config
from .data import (
    DataFormatError,
    DatasetSplit,
    InductiveScenario,
    InteractionDataset,
    load_interactions,
    make_new_interactions_scenario,
    make_new_users_items_scenario,
    preprocess,
    split_per_user,
)
from .embedding import load_model, save_model
from .evaluation import evaluate_scenario, popular_baseline
from .linalg import SizeCapError, check_dense_cap
from .model import InmoModel
from .templates import (
    TemplateSet,
    _ceil_count,
    degree_indicator,
    error_curve,
    error_sort_exact,
    select_top,
    templates_for_view,
    write_error_curve_csv,
)
from .theory import indicator_faithfulness, random_binary_matrix, theorem1_check, theorem2_check
from .training import TrainingDivergedError, train

__all__ = ["main", "build_parser"]

_log = logging.getLogger("inmo.cli")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2
USAGE_ERRORS = (ConfigError, DataFormatError, SizeCapError)


class Outputs:
    """Result files under one directory plus the hash manifest."""

    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self.written: list[str] = []

    def path(self, name: str) -> Path:
        self.written.append(name)
        return self.root / name

    def write_text(self, name: str, text: str) -> None:
        self.path(name).write_text(text)

    def write_json(self, name: str, doc) -> None:
        self.write_text(name, json.dumps(doc, indent=2, sort_keys=True) + "\n")

    def finish(self, command: str, started: datetime, elapsed: float, extra: dict | None = None) -> None:
        manifest_path = self.root / "manifest.json"
        files = {}
        if manifest_path.exists():
            files = json.loads(manifest_path.read_text()).get("files", {})
        for name in self.written:
            data = (self.root / name).read_bytes()
            files[name] = {"sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}
        files = {k: v for k, v in sorted(files.items()) if (self.root / k).exists()}
        manifest_path.write_text(json.dumps({"files": files}, indent=2, sort_keys=True) + "\n")

        meta_path = self.root / "metadata.json"
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        meta[command] = {
            "started": started.isoformat(timespec="seconds"),
            "elapsed_seconds": round(elapsed, 3),
            "inmo_version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            **(extra or {}),
        }
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


# -- pipeline steps shared by the commands ----------------------------------


def load_dataset(cfg: RunConfig) -> InteractionDataset:
    path = cfg.data_path()
    if path == BUILTIN_TOY:
        with resources.as_file(resources.files("inmo") / "resources" / "toy200.tsv") as p:
            raw = load_interactions(p, "triple-tsv")
    else:
        if not Path(path).is_file():
            raise DataFormatError(f"data file not found: {path}")
        raw = load_interactions(path, cfg.data.format)
    return preprocess(raw, cfg.data.rating_threshold, cfg.data.min_degree)


def make_split(cfg: RunConfig, ds: InteractionDataset | None = None) -> DatasetSplit:
    ds = load_dataset(cfg) if ds is None else ds
    try:
        return split_per_user(ds, cfg.split.ratios, cfg.split.seed)
    except ValueError as exc:
        raise ConfigError(f"[split]: {exc}") from exc


def make_scenario(cfg: RunConfig, kind: str, split: DatasetSplit | None = None) -> InductiveScenario:
    split = make_split(cfg) if split is None else split
    sc = cfg.scenario
    if kind == "transductive":
        return InductiveScenario.transductive(split)
    if kind == "new-interactions":
        return make_new_interactions_scenario(split, sc.hold_frac, sc.seed)
    return make_new_users_items_scenario(split, sc.entity_frac, sc.seed)


def pick_templates(cfg: RunConfig, view: InteractionDataset) -> TemplateSet:
    """Select templates among entities that have training interactions."""
    t = cfg.templates
    if t.indicator == "error_sort_exact":
        check_dense_cap(view.n, view.m, cfg.theory.dense_cap, hint="error_sort_exact needs a dense SVD")
    try:
        return templates_for_view(view, t.indicator, t.user_frac, t.item_frac, cfg.train.d)
    except ValueError as exc:
        raise ConfigError(f"[templates]: {exc}") from exc


# -- commands ---------------------------------------------------------------


def cmd_prepare(cfg: RunConfig, out: Outputs, args) -> dict:
    ds = load_dataset(cfg)
    split = make_split(cfg, ds)
    ds.dump(out.path("dataset.tsv"))
    with open(out.path("keys.json"), "w") as fh:
        json.dump({"users": list(ds.user_keys), "items": list(ds.item_keys)}, fh)
    split.save(out.path("split.json"))
    stats = {
        **ds.summary(),
        "train": split.train.n_edges,
        "valid": split.valid.n_edges,
        "test": split.test.n_edges,
        "split_seed": split.seed,
    }
    out.write_json("stats.json", stats)
    out.write_text(f"config-{args.command}.json", cfg.to_json())
    print(f"users {stats['users']}  items {stats['items']}  interactions {stats['interactions']}  density {stats['density']:.5f}")
    print(f"train {stats['train']}  valid {stats['valid']}  test {stats['test']}")
    return {}


def cmd_select_templates(cfg: RunConfig, out: Outputs, args) -> dict:
    scenario = make_scenario(cfg, cfg.scenario.kind)
    templates = pick_templates(cfg, scenario.train_view)
    templates.save(out.path("templates.json"))
    out.write_text(f"config-{args.command}.json", cfg.to_json())
    print(f"{templates.indicator_name}: {templates.n_t}/{templates.n} template users, {templates.m_t}/{templates.m} template items")
    return {}


def cmd_train(cfg: RunConfig, out: Outputs, args) -> dict:
    kind = cfg.scenario.kind
    scenario = make_scenario(cfg, kind)
    templates = pick_templates(cfg, scenario.train_view)

    def progress(rec):
        _log.info("epoch %d  loss %.5f  val ndcg %.4f", rec["epoch"], rec["train_loss"], rec[f"val_ndcg@{cfg.train.eval_k}"])

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = train(scenario, templates, cfg.train, callback=progress)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)

    extra = {
        "scenario": kind,
        "backbone": cfg.train.backbone,
        "K": cfg.train.K_layers,
        "best_epoch": result.best_epoch,
        "best_val_ndcg": result.best_ndcg,
        "train_config": cfg.train.to_dict(),
    }
    save_model(out.path("model.json"), result.params, templates, extra)
    templates.save(out.path("templates.json"))
    with open(out.path("train_log.jsonl"), "w") as fh:
        for rec in result.log:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    out.write_text(f"config-{args.command}.json", cfg.to_json())
    print(
        f"{kind}: {len(result.log)} epochs, best epoch {result.best_epoch}, "
        f"val ndcg@{cfg.train.eval_k} {100 * result.best_ndcg:.2f}, {result.params.n_parameters} parameters"
    )
    return {"epoch_seconds": [round(t, 4) for t in result.timings]}


def cmd_eval(cfg: RunConfig, out: Outputs, args) -> dict:
    model_path = Path(args.model) if args.model else out.root / "model.json"
    if not model_path.is_file():
        raise ConfigError(f"model file not found: {model_path}")
    params, templates, extra = load_model(model_path)
    trained_on = extra.get("scenario", "transductive")
    kind = args.scenario or trained_on
    if trained_on != kind:
        raise ConfigError(
            f"model was trained for scenario {trained_on!r}; retrain with --set scenario.kind={kind} to evaluate {kind!r}"
        )
    scenario = make_scenario(cfg, kind)
    if (templates.n, templates.m) != (scenario.train_view.n, scenario.train_view.m):
        raise ConfigError("model does not match the dataset in the config")
    model = InmoModel(params, templates, extra.get("backbone", "mf"), extra.get("K", 3))
    k = cfg.eval.k

    reports = [evaluate_scenario(model, scenario, k)]
    if kind == "new-interactions":
        reports.append(evaluate_scenario(model, scenario, k, use_new=False))
    if kind == "new-users-items":
        pop = evaluate_scenario(popular_baseline(scenario.train_view), scenario, k)
        pop.scenario = f"{kind}-popular"
        reports.append(pop)
    for rep in reports:
        rep.save_json(out.path(f"eval-{rep.scenario}.json"))
        rep.save_csv(out.path(f"eval-{rep.scenario}.csv"))
        print(rep.format())
    return {}


def cmd_theory_check(cfg: RunConfig, out: Outputs, args) -> dict:
    th = cfg.theory
    check_dense_cap(th.n_users, th.n_items, th.dense_cap, hint="theory checks use dense matrices")
    t1, t2, faith = [], [], []
    wins = comparisons = 0
    for seed in th.seeds:
        rng = np.random.default_rng(seed)
        Y = random_binary_matrix(th.n_users, th.n_items, th.density, rng)
        ds = InteractionDataset.from_matrix(Y)
        for d in th.dims:
            if d > min(Y.shape):
                raise ConfigError(f"theory.dims: d={d} exceeds min(n_users, n_items)")
            t1.append(theorem1_check(Y, d, seed, th.dense_cap).to_dict())
            exact = error_sort_exact(ds, d, "user", th.dense_cap)
            degree = degree_indicator(ds, "user")
            for frac in th.template_fracs:
                count = _ceil_count(frac, ds.n)
                reps = {}
                for name, scores in (("error_sort_exact", exact), ("degree", degree)):
                    try:
                        rep = theorem2_check(Y, d, select_top(scores, count), seed, th.dense_cap)
                    except ValueError as exc:
                        _log.warning("seed %d d %d: %s", seed, d, exc)
                        continue
                    row = rep.to_dict()
                    row.update(selection=name, template_frac=frac)
                    t2.append(row)
                    reps[name] = rep
                if len(reps) == 2:
                    comparisons += 1
                    wins += reps["error_sort_exact"].bound <= reps["degree"].bound
        f = indicator_faithfulness(Y, max(th.dims), th.dense_cap)
        faith.append({"seed": seed, "d": f["d"], "spearman": f["spearman"], "degenerate": f["degenerate"]})

    summary = {
        "theorem1": {"passed": sum(r["passed"] for r in t1), "total": len(t1)},
        "theorem2": {"passed": sum(r["passed"] for r in t2), "total": len(t2)},
        "error_sort_bound_le_degree_bound": {"wins": wins, "total": comparisons},
    }
    out.write_json("theorem1.json", t1)
    out.write_json("theorem2.json", t2)
    out.write_json("indicator_faithfulness.json", faith)
    out.write_json("theory_summary.json", summary)
    out.write_text(f"config-{args.command}.json", cfg.to_json())
    for name, s in summary.items():
        if name.startswith("theorem"):
            print(f"{name}: {s['passed']}/{s['total']} checks passed")
    print(f"error-sort bound <= degree bound: {wins}/{comparisons}")
    ok = summary["theorem1"]["passed"] == len(t1) and summary["theorem2"]["passed"] == len(t2)
    return {"_exit": EXIT_OK if ok else EXIT_INTERNAL}


def cmd_error_curve(cfg: RunConfig, out: Outputs, args) -> dict:
    th = cfg.theory
    ds = load_dataset(cfg)
    check_dense_cap(ds.n, ds.m, th.dense_cap, hint="error curves use a dense SVD")
    if th.curve_d > min(ds.n, ds.m):
        raise ConfigError(f"theory.curve_d={th.curve_d} exceeds min(users, items)={min(ds.n, ds.m)}")
    curves = {name: error_curve(ds, th.curve_d, name, th.curve_fractions, th.dense_cap) for name in th.curve_indicators}
    write_error_curve_csv(out.path("error_curve.csv"), curves)
    out.write_text(f"config-{args.command}.json", cfg.to_json())
    print(f"d={th.curve_d} on {ds.n} users x {ds.m} items")
    print("indicator          fraction  user_ratio  item_ratio")
    for name, rows in curves.items():
        for f, u, i in rows:
            if abs(f - 0.7) < 1e-9:
                print(f"{name:<18} {f:8.2f}  {u:10.4f}  {i:10.4f}")
    return {}


COMMANDS = {
    "prepare": (cmd_prepare, "load, preprocess and split a dataset"),
    "select-templates": (cmd_select_templates, "choose template users and items"),
    "train": (cmd_train, "train a model and write the artifact and JSONL log"),
    "eval": (cmd_eval, "evaluate a trained model on a scenario"),
    "theory-check": (cmd_theory_check, "run the closed-form expressiveness checks on random matrices"),
    "error-curve": (cmd_error_curve, "additional-error curves per template indicator"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="inmo", description="Inductive template-embedding recommender pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("-c", "--config", help="TOML run config (defaults apply to anything left out)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value, e.g. --set train.lr=0.01 (repeatable)")
        p.add_argument("--out", help="output directory (overrides 'out' in the config)")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        if name == "eval":
            p.add_argument("--scenario", choices=SCENARIOS, help="defaults to the scenario the model was trained for")
            p.add_argument("--model", help="model artifact (default: OUT/model.json)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    fn = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config, args.overrides)
        out_dir = args.out or cfg.out
        if not out_dir:
            raise ConfigError("no output directory: pass --out DIR or set 'out' in the config")
        if cfg.out and not args.out and args.config:
            out_dir = str(cfg.base_dir / cfg.out)
        out = Outputs(Path(out_dir))
        started = datetime.now(timezone.utc)
        t0 = time.perf_counter()
        extra = fn(cfg, out, args) or {}
        code = extra.pop("_exit", EXIT_OK)
        out.finish(args.command, started, time.perf_counter() - t0, extra)
        return code
    except USAGE_ERRORS as exc:
        print(f"inmo {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergedError as exc:
        print(f"inmo {args.command}: training diverged: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        print(f"inmo {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
