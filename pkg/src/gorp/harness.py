"""Sequential training over a task sequence, baselines, and run comparison."""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gorp.config import RunConfig, config_to_dict
from gorp.errors import UsageError
from gorp.metrics import MetricsReport, compute_metrics, write_report
from gorp.net import LORA, Model, backward, evaluate, forward, init_model
from gorp.optimizer import GorpOptimizer
from gorp.subspace import save_space
from gorp.tasks import TaskSequence, gen_permuted, gen_rotated, load_dataset

log = logging.getLogger(__name__)


def build_sequence(cfg: RunConfig) -> TaskSequence:
    data = cfg.data.resolved(cfg.seed)
    if data.kind == "files":
        tasks = [load_dataset(p) for p in data.paths]
        return TaskSequence(tasks, order="files")
    if data.kind == "permuted":
        if data.base_path:
            base = load_dataset(data.base_path)
        else:
            base = gen_rotated(
                1, data.samples_per_task, data.dim, data.classes, 0.0, data.noise_sigma, data.seed,
                test_samples=data.test_samples, radius=data.radius,
            ).tasks[0]
        return gen_permuted(base, data.num_tasks, data.seed)
    return gen_rotated(
        data.num_tasks, data.samples_per_task, data.dim, data.classes, data.angle_step, data.noise_sigma,
        data.seed, test_samples=data.test_samples, radius=data.radius, holdout=data.holdout,
    )


def make_optimizer(model: Model, cfg: RunConfig) -> GorpOptimizer:
    if cfg.method == "gorp":
        return GorpOptimizer(model, cfg.optimizer)
    if cfg.method == "seq_adam":
        return GorpOptimizer(model, cfg.optimizer, plain=True)
    lora_keys = [k for k in model.parameters() if model.layer(k.rsplit(".", 1)[0]).kind == LORA]
    return GorpOptimizer(model, cfg.optimizer, keys=lora_keys, plain=True)


@dataclass
class RunResult:
    report: MetricsReport
    model: Model
    optimizer: GorpOptimizer
    sequence: TaskSequence
    lora_params: list[dict[str, np.ndarray]] = field(default_factory=list)
    snapshots: list[dict[str, np.ndarray]] = field(default_factory=list)


def train_sequence(cfg: RunConfig, seq: TaskSequence | None = None, on_step=None) -> RunResult:
    """Train through every task in order and fill the accuracy matrix.

    `on_step(task_index, step_index, optimizer)` runs after every update.
    """
    cfg.validate()
    seq = build_sequence(cfg) if seq is None else seq
    spec = cfg.model.build(seq.dim, seq.num_classes, cfg.seed)
    model = init_model(spec, cfg.seed)
    opt = make_optimizer(model, cfg)
    rng = np.random.default_rng([cfg.seed, 2])
    lora_layers = [layer.name for layer in model.layers if layer.kind == LORA]

    t_count = len(seq)
    acc = np.full((t_count, t_count), np.nan)
    lora_params, snapshots, traces, seconds = [], [], [], []
    for k, task in enumerate(seq.tasks):
        start = time.perf_counter()
        trace = []
        n = len(task.y_train)
        step_index = 0
        for _ in range(cfg.epochs):
            order = rng.permutation(n)
            for lo in range(0, n, cfg.batch_size):
                idx = order[lo : lo + cfg.batch_size]
                loss, cache = forward(model, task.x_train[idx], task.y_train[idx])
                opt.step(backward(model, cache))
                trace.append(loss)
                if on_step is not None:
                    on_step(k, step_index, opt)
                step_index += 1
        for i in range(k + 1):
            acc[i, k] = evaluate(model, seq.tasks[i].x_test, seq.tasks[i].y_test)
        moments = opt.first_moments()
        lora_params.append({name: model.layer(name).A.copy() for name in lora_layers})
        snapshots.append({name: moments[f"{name}.A"] for name in lora_layers if f"{name}.A" in moments})
        opt.finalize_task()
        traces.append(trace)
        seconds.append(time.perf_counter() - start)
        log.info("%s task %d/%d: acc %s", cfg.method, k + 1, t_count, np.round(acc[: k + 1, k], 4))

    m = compute_metrics(acc, lora_params, snapshots)
    gen_acc = None
    if seq.holdout is not None:
        gen_acc = evaluate(model, seq.holdout.x_test, seq.holdout.y_test)
    report = MetricsReport(
        method=cfg.method, seed=cfg.seed, acc_matrix=acc, acc=m["ACC"], bwt=m["BWT"], po=m["PO"], go=m["GO"],
        mean_po=m["mean_PO"], mean_go=m["mean_GO"], gen_acc=gen_acc, loss_trace=traces, task_seconds=seconds,
    )
    return RunResult(report, model, opt, seq, lora_params, snapshots)


def run_continual(cfg: RunConfig, out_dir=None, seq: TaskSequence | None = None) -> MetricsReport:
    result = train_sequence(cfg, seq)
    out_dir = out_dir or cfg.out_dir
    if out_dir is not None:
        out = Path(out_dir)
        write_report(result.report, out)
        if result.optimizer.spaces:
            (out / "spaces").mkdir(parents=True, exist_ok=True)
            for key, space in result.optimizer.spaces.items():
                save_space(space, out / "spaces" / f"{key}.txt")
    return result.report


COMPARE_COLUMNS = ("label", "method", "seed", "ACC", "BWT", "mean_PO", "mean_GO")


def compare(cfgs: list[RunConfig], out_dir=None, labels: list[str] | None = None) -> list[dict]:
    """Run each config and tabulate ACC, BWT and mean pairwise PO/GO."""
    if len(cfgs) < 2:
        raise UsageError("compare needs at least two configs")
    data = [config_to_dict(c)["data"] | {"seed": c.data.resolved(c.seed).seed} for c in cfgs]
    if any(d != data[0] for d in data[1:]):
        raise UsageError("configs do not share the same task sequence (data sections differ)")
    labels = labels or [f"{c.method}-seed{c.seed}" for c in cfgs]
    rows = []
    reports = []
    for label, cfg in zip(labels, cfgs):
        report = train_sequence(cfg).report
        reports.append(report)
        rows.append({
            "label": label, "method": cfg.method, "seed": cfg.seed, "ACC": report.acc, "BWT": report.bwt,
            "mean_PO": report.mean_po, "mean_GO": report.mean_go,
        })
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_table(rows, out / "comparison.tsv")
        for label, report in zip(labels, reports):
            np.savetxt(out / f"go_{label}.txt", report.go, delimiter="\t")
            np.savetxt(out / f"po_{label}.txt", report.po, delimiter="\t")
    return rows


def write_table(rows: list[dict], path, columns=COMPARE_COLUMNS) -> None:
    lines = ["\t".join(columns)]
    for row in rows:
        lines.append("\t".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n")


SWEEP_COLUMNS = ("rank", "method", "seed", "ACC", "BWT", "mean_GO")


def rank_sweep(cfg: RunConfig, ranks=(4, 8, 16, 32), out_dir=None) -> list[dict]:
    """Rerun `cfg` once per projector rank on the same sequence; no ordering is implied."""
    seq = build_sequence(cfg)
    rows = []
    for r in ranks:
        run_cfg = dataclasses.replace(cfg, optimizer=dataclasses.replace(cfg.optimizer, rank=r))
        report = train_sequence(run_cfg, seq).report
        rows.append({
            "rank": r, "method": cfg.method, "seed": cfg.seed, "ACC": report.acc, "BWT": report.bwt,
            "mean_GO": report.mean_go,
        })
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_table(rows, Path(out_dir) / "rank_sweep.tsv", SWEEP_COLUMNS)
    return rows
