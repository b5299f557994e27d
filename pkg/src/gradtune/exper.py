"""Experiment orchestration: Task-A training, Task-B transfer, reports.

An experiment is described by a key = value spec file (# starts a comment):

    task_a = acl              one task id, or a comma list for multi-task
    task_b = ac
    hidden = 500,500
    reg = none                none | l1 | dropout
    l1_lambda = 1e-4          only used when reg = l1
    repetitions = 5
    seed = 1
    sizes = 20000,5000,5000   per-task train,valid,test sizes
    learning_rate = 0.01
    batch_size = 20
    patience = 20
    plateau_threshold = 0.1
    max_epochs = 1000
    out = runs/acl_to_ac      output directory
    data_dir = data           cache for generated synthetic datasets
    mnist_dir = data/mnist    IDX files for mnist04 / mnist59 tasks
    generate = true           allow generating missing synthetic datasets

Task ids: the eight synthetic tasks plus mnist04 and mnist59.  Phase A
trains the body and Task-A head(s) from scratch; phase B reloads the
phase-A checkpoint, attaches a fresh Task-B head per repetition, and
trains it with either plain fine tuning or gradual tuning while the
Task-A heads are monitored on their test sets (eval mode, never trained).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import LabeledDataset, read_gtds, write_gtds
from .datasynth import TASKS, generate_dataset
from .mnist import DigitRangeSpec, build_split, locate_training_pair, read_idx_images, read_idx_labels
from .net import Architecture, RegConfig, attach_head, init_network, network_from_checkpoint, save_checkpoint
from .numerics import SeededRng, derive_seed
from .train import TrainConfig, evaluate, train_multitask, train_single, write_history_csv

MODES = ("fine", "gradual")
MODE_TITLES = {"fine": "Fine Tuning", "gradual": "Gradual Tuning"}
REPORT_FORMATS = ("csv", "json", "text", "png")

_MNIST_RANGES = {"mnist04": DigitRangeSpec(0, 4), "mnist59": DigitRangeSpec(5, 9)}
_INT_RE = re.compile(r"^-?\d+$")


class ConfigError(Exception):
    """Bad spec file, option, or argument (CLI exit code 2)."""


class DataError(Exception):
    """Missing or unreadable dataset / artifact (CLI exit code 3)."""


def task_classes(task: str) -> int:
    return 5 if task in _MNIST_RANGES else 2


def task_input_dim(task: str) -> int:
    return 28 * 28 if task in _MNIST_RANGES else 32 * 32


@dataclass
class ExperimentSpec:
    task_a: tuple[str, ...]
    task_b: str
    hidden: tuple[int, ...] = (500, 500)
    reg: str = "none"
    l1_lambda: float = 1e-4
    repetitions: int = 5
    seed: int = 1
    sizes: tuple[int, int, int] = (20_000, 5_000, 5_000)
    learning_rate: float = 0.01
    batch_size: int = 20
    patience: int = 20
    plateau_threshold: float = 0.1
    max_epochs: int = 1000
    out: str = "runs/experiment"
    data_dir: str = "data"
    mnist_dir: str = "data/mnist"
    generate: bool = True

    def __post_init__(self):
        if isinstance(self.task_a, str):
            self.task_a = (self.task_a,)
        self.task_a = tuple(self.task_a)
        known = set(TASKS) | set(_MNIST_RANGES)
        for task in self.task_a + (self.task_b,):
            if task not in known:
                raise ConfigError(f"unknown task {task!r}; choose from {sorted(known)}")
        if not self.task_a:
            raise ConfigError("task_a must name at least one task")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.reg not in ("none", "l1", "dropout"):
            raise ConfigError(f"unknown reg {self.reg!r}")
        dims = {task_input_dim(t) for t in self.task_a + (self.task_b,)}
        if len(dims) != 1:
            raise ConfigError("mnist and synthetic tasks cannot share one network body")
        if len(self.sizes) != 3 or any(n < 1 for n in self.sizes):
            raise ConfigError(f"sizes must be three positive counts, got {self.sizes}")

    @property
    def input_dim(self) -> int:
        return task_input_dim(self.task_b)

    def reg_config(self) -> RegConfig:
        if self.reg == "l1":
            return RegConfig.l1(self.l1_lambda)
        if self.reg == "dropout":
            return RegConfig.dropout()
        return RegConfig.none()

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            patience=self.patience,
            plateau_threshold=self.plateau_threshold,
            reg=self.reg_config(),
            max_epochs=self.max_epochs,
            seed=seed,
        )


_SPEC_PARSERS = {
    "task_a": lambda v: tuple(s.strip() for s in v.split(",") if s.strip()),
    "task_b": str,
    "hidden": lambda v: tuple(int(s) for s in v.split(",") if s.strip()),
    "reg": str,
    "l1_lambda": float,
    "repetitions": int,
    "seed": int,
    "sizes": lambda v: tuple(int(s) for s in v.split(",") if s.strip()),
    "learning_rate": float,
    "batch_size": int,
    "patience": int,
    "plateau_threshold": float,
    "max_epochs": int,
    "out": str,
    "data_dir": str,
    "mnist_dir": str,
    "generate": lambda v: {"true": True, "false": False}[v.lower()],
}


def parse_spec_file(path) -> ExperimentSpec:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"spec file not found: {path}")
    values = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _SPEC_PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _SPEC_PARSERS[key](value)
        except (ValueError, KeyError) as e:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from e
    for required in ("task_a", "task_b"):
        if required not in values:
            raise ConfigError(f"{path}: missing required key {required!r}")
    try:
        return ExperimentSpec(**values)
    except ValueError as e:
        raise ConfigError(str(e)) from e


# --- datasets ----------------------------------------------------------------


def load_task_dataset(spec: ExperimentSpec, task: str) -> LabeledDataset:
    dseed = derive_seed(spec.seed, "data", task)
    if task in _MNIST_RANGES:
        pair = locate_training_pair(spec.mnist_dir)
        if pair is None:
            raise DataError(
                f"MNIST training IDX files not found in {spec.mnist_dir!r} "
                "(set mnist_dir or GRADTUNE_MNIST_DIR)"
            )
        images = read_idx_images(pair[0])
        labels = read_idx_labels(pair[1])
        try:
            return build_split(images, labels, _MNIST_RANGES[task], spec.sizes, dseed)
        except ValueError as e:
            raise DataError(str(e)) from e
    tr, va, te = spec.sizes
    path = Path(spec.data_dir) / f"{task}-{tr}-{va}-{te}-{dseed:016x}.gtds"
    if path.is_file():
        return read_gtds(path)
    if not spec.generate:
        raise DataError(f"dataset file {path} is missing and generation is disabled")
    ds = generate_dataset(task, spec.sizes, dseed)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_gtds(ds, path)
    return ds


# --- phase A / phase B -------------------------------------------------------


def run_phase_a(spec: ExperimentSpec) -> dict:
    """Train body + Task-A head(s) from scratch; persist checkpoint and errors."""
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    datasets = [load_task_dataset(spec, task) for task in spec.task_a]
    rng = SeededRng(derive_seed(spec.seed, "init"))
    net = init_network(Architecture(spec.input_dim, spec.hidden), rng)
    head_ids = {task: attach_head(net, task_classes(task), rng) for task in spec.task_a}
    cfg = spec.train_config(derive_seed(spec.seed, "train-a"))
    if len(spec.task_a) == 1:
        task = spec.task_a[0]
        net, state = train_single(net, head_ids[task], datasets[0], cfg, mode="fine")
    else:
        pairs = [(head_ids[task], ds) for task, ds in zip(spec.task_a, datasets)]
        net, state = train_multitask(net, pairs, cfg)
    test_errs = {
        task: evaluate(net, head_ids[task], ds.test) for task, ds in zip(spec.task_a, datasets)
    }
    save_checkpoint(net, out / "phase_a.gtck")
    write_history_csv(state.history, out / "history_a.csv")
    meta = {
        "task_a": list(spec.task_a),
        "task_b": spec.task_b,
        "reg": spec.reg,
        "hidden": list(spec.hidden),
        "input_dim": spec.input_dim,
        "head_ids": head_ids,
        "classes_b": task_classes(spec.task_b),
        "a_test_errs": test_errs,
        "epochs": len(state.history),
        "capped": state.capped,
        "seed": spec.seed,
    }
    (out / "phase_a.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta


def _load_phase_a(out: Path) -> tuple[dict, bytes]:
    meta_path = out / "phase_a.json"
    ck_path = out / "phase_a.gtck"
    if not meta_path.is_file() or not ck_path.is_file():
        raise DataError(f"phase-A artifacts not found in {out} (run train-a first)")
    return json.loads(meta_path.read_text()), ck_path.read_bytes()


def run_phase_b(spec: ExperimentSpec, mode: str) -> tuple[list[dict], bool]:
    """Repetitions of Task-B training from the stored phase-A checkpoint.

    Returns (rows, any_capped); also writes rows_<mode>.csv and one
    history CSV per repetition into the spec's output directory.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    out = Path(spec.out)
    meta, checkpoint = _load_phase_a(out)
    ds_b = load_task_dataset(spec, spec.task_b)
    a_sets = {task: load_task_dataset(spec, task) for task in meta["task_a"]}
    rows = []
    any_capped = False
    for r in range(spec.repetitions):
        net = network_from_checkpoint(checkpoint)
        rep_seed = derive_seed(spec.seed, mode, r)
        head_b = attach_head(net, meta["classes_b"], SeededRng(derive_seed(rep_seed, "head")))
        cfg = spec.train_config(derive_seed(rep_seed, "sgd"))
        track = [(meta["head_ids"][task], a_sets[task]) for task in meta["task_a"]]
        net, state = train_single(net, head_b, ds_b, cfg, mode=mode, track=track)
        any_capped |= state.capped
        row = {
            "mode": mode,
            "repetition": r,
            "task_b_err": evaluate(net, head_b, ds_b.test),
            "epochs": len(state.history),
            "best_epoch": state.best_epoch,
            "capped": int(state.capped),
        }
        for task in meta["task_a"]:
            row[f"task_a_err_{task}"] = evaluate(net, meta["head_ids"][task], a_sets[task].test)
        rows.append(row)
        write_history_csv(state.history, out / f"history_{mode}_rep{r}.csv")
    write_rows_csv(rows, out / f"rows_{mode}.csv")
    return rows, any_capped


# --- rows CSV (full precision, machine-readable) ------------------------------


def write_rows_csv(rows: list[dict], path) -> None:
    if not rows:
        raise ValueError("no rows to write")
    cols = list(rows[0].keys())
    with open(path, "w", newline="") as f:
        f.write(",".join(cols) + "\n")
        for row in rows:
            f.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in cols) + "\n")


def read_rows_csv(path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise DataError(f"empty rows file {path}")
    cols = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        row = {}
        for key, cell in zip(cols, cells):
            if _INT_RE.match(cell):
                row[key] = int(cell)
            else:
                try:
                    row[key] = float(cell)
                except ValueError:
                    row[key] = cell
        rows.append(row)
    return rows


def read_history_csv(path) -> list[dict]:
    return read_rows_csv(path)


# --- aggregation and report ----------------------------------------------------


def aggregate(rows: list[dict]) -> dict[str, dict[str, float]]:
    """Mean and sample standard deviation (n-1) per numeric column."""
    if not rows:
        raise ValueError("cannot aggregate zero rows")
    out: dict[str, dict[str, float]] = {}
    for key in rows[0]:
        values = [row[key] for row in rows]
        if not all(isinstance(v, (int, float)) for v in values):
            continue
        arr = np.asarray(values, dtype=np.float64)
        std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        out[key] = {"mean": float(arr.mean()), "std": std}
    return out


@dataclass
class ExperimentReport:
    reg: str
    task_b: str
    task_a: tuple[str, ...]
    a_before: dict[str, float]  # test error per Task-A task after phase A
    rows: dict[str, list[dict]] = field(default_factory=dict)  # mode -> raw rows
    aggregates: dict[str, dict[str, dict[str, float]]] = field(default_factory=dict)

    def __post_init__(self):
        self.task_a = tuple(self.task_a)

    def to_json(self) -> str:
        payload = {
            "reg": self.reg,
            "task_b": self.task_b,
            "task_a": list(self.task_a),
            "a_before": self.a_before,
            "rows": self.rows,
            "aggregates": self.aggregates,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @staticmethod
    def from_json(text: str) -> "ExperimentReport":
        data = json.loads(text)
        return ExperimentReport(
            reg=data["reg"],
            task_b=data["task_b"],
            task_a=tuple(data["task_a"]),
            a_before=data["a_before"],
            rows=data["rows"],
            aggregates=data["aggregates"],
        )


def build_report(out_dir) -> ExperimentReport:
    """Assemble a report from the artifacts in an experiment directory."""
    out = Path(out_dir)
    meta, _ = _load_phase_a(out)
    rows = {}
    for mode in MODES:
        path = out / f"rows_{mode}.csv"
        if path.is_file():
            rows[mode] = read_rows_csv(path)
    if not rows:
        raise DataError(f"no rows_<mode>.csv files in {out} (run transfer first)")
    return ExperimentReport(
        reg=meta["reg"],
        task_b=meta["task_b"],
        task_a=tuple(meta["task_a"]),
        a_before=meta["a_test_errs"],
        rows=rows,
        aggregates={mode: aggregate(mode_rows) for mode, mode_rows in rows.items()},
    )


def format_text_table(report: ExperimentReport) -> str:
    """Plain-text results table: Reg | Task-B | Task-A before -> after | Epochs."""
    lines = [f"Transfer report: {'+'.join(report.task_a)} -> {report.task_b}", ""]
    for mode in MODES:
        if mode not in report.aggregates:
            continue
        agg = report.aggregates[mode]
        lines.append(f"== {MODE_TITLES[mode]} ==")
        lines.append(f"{'Reg':<6} {'Task-B':<16} {'Task-A':<34} Epochs")
        b = agg["task_b_err"]
        e = agg["epochs"]
        task_b_cell = f"{b['mean']:.2f} ± {b['std']:.2f}"
        epoch_cell = f"{e['mean']:.0f} ± {e['std']:.0f}"
        for i, task in enumerate(report.task_a):
            a = agg[f"task_a_err_{task}"]
            before = report.a_before[task]
            label = f"{task}: " if len(report.task_a) > 1 else ""
            a_cell = f"{label}{before:.1f} → {a['mean']:.2f} ± {a['std']:.2f}"
            if i == 0:
                lines.append(f"{report.reg:<6} {task_b_cell:<16} {a_cell:<34} {epoch_cell}")
            else:
                lines.append(f"{'':<6} {'':<16} {a_cell:<34}")
        lines.append("")
    return "\n".join(lines)


def write_summary_csv(report: ExperimentReport, path) -> None:
    with open(path, "w", newline="") as f:
        f.write("mode,column,mean,std\n")
        for mode in MODES:
            if mode not in report.aggregates:
                continue
            for column, stats in report.aggregates[mode].items():
                f.write(f"{mode},{column},{stats['mean']!r},{stats['std']!r}\n")


def emit_report(report: ExperimentReport, out_dir, formats=REPORT_FORMATS) -> list[Path]:
    """Write the report files; returns the created paths.

    csv: raw rows + aggregate summary; json: the full report; text: a
    plain-text table; png: matplotlib figures (learning curves per mode
    when history files are present, plus a forgetting bar chart).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    unknown = set(formats) - set(REPORT_FORMATS)
    if unknown:
        raise ConfigError(f"unknown report formats: {sorted(unknown)}")
    written: list[Path] = []
    if "csv" in formats:
        all_rows = [row for mode in MODES for row in report.rows.get(mode, [])]
        rows_path = out / "report_rows.csv"
        write_rows_csv(all_rows, rows_path)
        summary_path = out / "report_summary.csv"
        write_summary_csv(report, summary_path)
        written += [rows_path, summary_path]
    if "json" in formats:
        path = out / "report.json"
        path.write_text(report.to_json())
        written.append(path)
    if "text" in formats:
        path = out / "report.txt"
        path.write_text(format_text_table(report))
        written.append(path)
    if "png" in formats:
        from . import figures  # matplotlib import deferred until needed

        written += figures.render_report_figures(report, out)
    return written
