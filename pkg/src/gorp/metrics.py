"""Continual-learning metrics and the run report file.

acc_matrix[i, j] is the test accuracy on task i after training through task
j (0-based); cells with i > j are undefined and stored as NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gorp.errors import ParseError, UsageError

HEADER_KEYS = ("method", "seed", "num_tasks", "ACC", "BWT", "mean_PO", "mean_GO", "GEN_ACC")
SECTIONS = ("ACC_MATRIX", "PO_MATRIX", "GO_MATRIX")


def _check_acc_matrix(acc: np.ndarray) -> int:
    acc = np.asarray(acc, dtype=np.float64)
    if acc.ndim != 2 or acc.shape[0] != acc.shape[1] or acc.shape[0] == 0:
        raise UsageError(f"accuracy matrix must be square and nonempty, got shape {acc.shape}")
    upper = np.triu(np.ones(acc.shape, dtype=bool))
    if not np.all(np.isfinite(acc[upper])):
        raise UsageError("accuracy matrix is missing cells a[i, j] with i <= j")
    return acc.shape[0]


def average_accuracy(acc) -> float:
    acc = np.asarray(acc, dtype=np.float64)
    t = _check_acc_matrix(acc)
    return float(sum(acc[i, t - 1] for i in range(t)) / t)


def backward_transfer(acc) -> float:
    """Mean change of each earlier task's accuracy from just-learned to the end; 0 for one task."""
    acc = np.asarray(acc, dtype=np.float64)
    t = _check_acc_matrix(acc)
    if t == 1:
        return 0.0
    return float(sum(acc[i, t - 1] - acc[i, i] for i in range(t - 1)) / (t - 1))


def overlap_matrix(per_task: list[dict[str, np.ndarray]]) -> np.ndarray:
    """out[i, j] = sum over layers of ||X_i^T X_j||_F^2."""
    t = len(per_task)
    out = np.zeros((t, t))
    for i in range(t):
        for j in range(t):
            for name, xi in per_task[i].items():
                xj = per_task[j][name]
                c = xi.T @ xj
                out[i, j] += float(np.sum(c * c))
    return out


def mean_pairwise(mat: np.ndarray) -> float:
    t = mat.shape[0]
    if t < 2:
        return 0.0
    iu = np.triu_indices(t, k=1)
    return float(np.mean(mat[iu]))


def compute_metrics(acc_matrix, lora_params_per_task=None, snapshots=None) -> dict:
    acc_matrix = np.asarray(acc_matrix, dtype=np.float64)
    t = _check_acc_matrix(acc_matrix)
    lora_params_per_task = lora_params_per_task or [{} for _ in range(t)]
    snapshots = snapshots or [{} for _ in range(t)]
    if len(lora_params_per_task) != t or len(snapshots) != t:
        raise UsageError("need one LoRA parameter set and one gradient snapshot per task")
    po = overlap_matrix(lora_params_per_task)
    go = overlap_matrix(snapshots)
    return {
        "ACC": average_accuracy(acc_matrix),
        "BWT": backward_transfer(acc_matrix),
        "PO": po,
        "GO": go,
        "mean_PO": mean_pairwise(po),
        "mean_GO": mean_pairwise(go),
    }


@dataclass
class MetricsReport:
    method: str
    seed: int
    acc_matrix: np.ndarray
    acc: float
    bwt: float
    po: np.ndarray
    go: np.ndarray
    mean_po: float = 0.0
    mean_go: float = 0.0
    gen_acc: float | None = None
    loss_trace: list[list[float]] = field(default_factory=list)
    task_seconds: list[float] = field(default_factory=list)

    @property
    def num_tasks(self) -> int:
        return self.acc_matrix.shape[0]

    def header(self) -> dict[str, str]:
        h = {
            "method": self.method,
            "seed": str(self.seed),
            "num_tasks": str(self.num_tasks),
            "ACC": repr(self.acc),
            "BWT": repr(self.bwt),
            "mean_PO": repr(self.mean_po),
            "mean_GO": repr(self.mean_go),
        }
        if self.gen_acc is not None:
            h["GEN_ACC"] = repr(self.gen_acc)
        return h


def _fmt_row(row: np.ndarray) -> str:
    return " ".join("-" if np.isnan(v) else repr(float(v)) for v in row)


def format_report(report: MetricsReport) -> str:
    lines = [f"{k} = {v}" for k, v in report.header().items()]
    for name, mat in (("ACC_MATRIX", report.acc_matrix), ("PO_MATRIX", report.po), ("GO_MATRIX", report.go)):
        lines += ["", name] + [_fmt_row(r) for r in mat]
    return "\n".join(lines) + "\n"


def write_report(report: MetricsReport, out_dir) -> Path:
    """Write report.txt plus the non-contract side files (loss traces, timings)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "report.txt"
    path.write_text(format_report(report))
    (out_dir / "loss_trace.txt").write_text(
        "".join(" ".join(repr(v) for v in trace) + "\n" for trace in report.loss_trace)
    )
    (out_dir / "timing.txt").write_text(
        "".join(f"task_{i + 1} = {s:.6f}\n" for i, s in enumerate(report.task_seconds))
    )
    return path


def _parse_matrix(lines: list[str], start: int, t: int, path: str) -> np.ndarray:
    mat = np.full((t, t), np.nan)
    for i in range(t):
        lineno = start + i
        if lineno >= len(lines):
            raise ParseError("matrix section ended early", lineno + 1, path)
        fields = lines[lineno].split()
        if len(fields) != t:
            raise ParseError(f"expected {t} values, got {len(fields)}", lineno + 1, path)
        try:
            mat[i] = [np.nan if f == "-" else float(f) for f in fields]
        except ValueError:
            raise ParseError("bad number", lineno + 1, path) from None
    return mat


def read_report(path) -> MetricsReport:
    path = Path(path)
    lines = path.read_text().split("\n")
    header: dict[str, str] = {}
    i = 0
    while i < len(lines) and lines[i].strip():
        if " = " not in lines[i]:
            raise ParseError("header lines must be 'key = value'", i + 1, str(path))
        k, v = lines[i].split(" = ", 1)
        header[k.strip()] = v.strip()
        i += 1
    for k in ("method", "seed", "num_tasks", "ACC", "BWT"):
        if k not in header:
            raise ParseError(f"missing header key {k!r}", i + 1, str(path))
    t = int(header["num_tasks"])
    mats = {}
    while i < len(lines):
        name = lines[i].strip()
        if name in SECTIONS:
            mats[name] = _parse_matrix(lines, i + 1, t, str(path))
            i += t + 1
        elif name:
            raise ParseError(f"unexpected line {name!r}", i + 1, str(path))
        else:
            i += 1
    for s in SECTIONS:
        if s not in mats:
            raise ParseError(f"missing section {s}", len(lines), str(path))
    return MetricsReport(
        method=header["method"],
        seed=int(header["seed"]),
        acc_matrix=mats["ACC_MATRIX"],
        acc=float(header["ACC"]),
        bwt=float(header["BWT"]),
        po=mats["PO_MATRIX"],
        go=mats["GO_MATRIX"],
        mean_po=float(header.get("mean_PO", "nan")),
        mean_go=float(header.get("mean_GO", "nan")),
        gen_acc=float(header["GEN_ACC"]) if "GEN_ACC" in header else None,
    )
