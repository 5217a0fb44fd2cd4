"""Synthetic continual-learning task sequences and their text file format.

File layout: a header line "d C n_train n_test", then one record per line
("label f_1 ... f_d"), train records first and test records after them.
Floats are written with repr() so a save/load round trip is bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gorp.errors import DataError, ParseError, SpecError


@dataclass
class TaskDataset:
    name: str
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    num_classes: int
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self) -> int:
        return self.x_train.shape[1]

    def validate(self) -> None:
        if len(self.y_train) == 0 or len(self.y_test) == 0:
            raise DataError(f"{self.name}: train and test splits must be nonempty")
        for split, x, y in (("train", self.x_train, self.y_train), ("test", self.x_test, self.y_test)):
            if x.ndim != 2 or x.shape[0] != y.shape[0]:
                raise DataError(f"{self.name}: {split} inputs {x.shape} do not match labels {y.shape}")
            if not np.all(np.isfinite(x)):
                raise DataError(f"{self.name}: {split} features must be finite")
            if y.min() < 0 or y.max() >= self.num_classes:
                raise DataError(f"{self.name}: {split} labels outside [0, {self.num_classes})")
        if self.x_test.shape[1] != self.x_train.shape[1]:
            raise DataError(f"{self.name}: train and test feature dims differ")

    def equals(self, other: "TaskDataset") -> bool:
        """Bitwise equality of every array plus matching class count."""
        return (
            self.num_classes == other.num_classes
            and all(
                a.shape == b.shape and a.dtype == b.dtype and a.tobytes() == b.tobytes()
                for a, b in (
                    (self.x_train, other.x_train),
                    (self.y_train, other.y_train),
                    (self.x_test, other.x_test),
                    (self.y_test, other.y_test),
                )
            )
        )


@dataclass
class TaskSequence:
    tasks: list[TaskDataset]
    order: str = "order-1"
    holdout: TaskDataset | None = None

    def __post_init__(self):
        if not self.tasks:
            raise SpecError("a task sequence needs at least one task")
        d, c = self.tasks[0].dim, self.tasks[0].num_classes
        for t in self.tasks[1:] + ([self.holdout] if self.holdout else []):
            if t.dim != d or t.num_classes != c:
                raise SpecError(f"task {t.name!r} has dim/classes ({t.dim}, {t.num_classes}); expected ({d}, {c})")

    def __len__(self) -> int:
        return len(self.tasks)

    @property
    def dim(self) -> int:
        return self.tasks[0].dim

    @property
    def num_classes(self) -> int:
        return self.tasks[0].num_classes


def _balanced_labels(n: int, num_classes: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.arange(n) % num_classes)


def rotated_class_means(
    plane: np.ndarray, num_classes: int, task_index: int, angle_step: float, radius: float
) -> np.ndarray:
    """Class means on a circle in span(plane), rotated by task_index * angle_step degrees."""
    phi = 2.0 * np.pi * np.arange(num_classes) / num_classes + np.deg2rad(angle_step) * task_index
    return radius * (np.outer(np.cos(phi), plane[:, 0]) + np.outer(np.sin(phi), plane[:, 1]))


def gen_rotated(
    num_tasks: int = 3,
    samples_per_task: int = 1000,
    d: int = 32,
    C: int = 4,
    angle_step: float = 30.0,
    noise_sigma: float = 0.4,
    seed: int = 0,
    test_samples: int | None = None,
    radius: float = 1.0,
    holdout: bool = False,
) -> TaskSequence:
    """Gaussian classes around a circle in a random 2-plane of R^d.

    Task k (0-based) rotates every class mean by k * angle_step degrees.
    With holdout=True one extra, never-trained task follows the sequence.
    """
    if d < 2 or C < 2:
        raise SpecError(f"need d >= 2 and C >= 2, got d={d}, C={C}")
    if num_tasks < 1 or samples_per_task < 1:
        raise SpecError("num_tasks and samples_per_task must be positive")
    if noise_sigma < 0:
        raise SpecError("noise_sigma must be nonnegative")
    n_test = samples_per_task // 2 if test_samples is None else test_samples
    if n_test < 1:
        raise SpecError("test split would be empty")

    plane, _ = np.linalg.qr(np.random.default_rng([seed, 0]).normal(size=(d, 2)))
    made = []
    for k in range(num_tasks + (1 if holdout else 0)):
        rng = np.random.default_rng([seed, 1, k])
        means = rotated_class_means(plane, C, k, angle_step, radius)
        splits = []
        for n in (samples_per_task, n_test):
            y = _balanced_labels(n, C, rng)
            x = means[y] + noise_sigma * rng.normal(size=(n, d))
            splits.append((x, y))
        (xtr, ytr), (xte, yte) = splits
        made.append(
            TaskDataset(f"rotated-{k + 1}", xtr, ytr, xte, yte, C, meta={"class_means": means, "plane": plane})
        )
    extra = made.pop() if holdout else None
    return TaskSequence(made, order=f"rotated-seed{seed}", holdout=extra)


def gen_permuted(base: TaskDataset, num_tasks: int, seed: int = 0) -> TaskSequence:
    """Task 1 is `base`; task k > 1 shuffles the feature columns with a fixed permutation."""
    base.validate()
    if num_tasks < 1:
        raise SpecError("num_tasks must be positive")
    rng = np.random.default_rng(seed)
    tasks = [base]
    for k in range(1, num_tasks):
        perm = rng.permutation(base.dim)
        tasks.append(
            TaskDataset(
                f"{base.name}-perm{k + 1}",
                base.x_train[:, perm],
                base.y_train.copy(),
                base.x_test[:, perm],
                base.y_test.copy(),
                base.num_classes,
                meta={"permutation": perm},
            )
        )
    return TaskSequence(tasks, order=f"permuted-seed{seed}")


def save_dataset(ds: TaskDataset, path) -> None:
    ds.validate()
    lines = [f"{ds.dim} {ds.num_classes} {len(ds.y_train)} {len(ds.y_test)}"]
    for x, y in ((ds.x_train, ds.y_train), (ds.x_test, ds.y_test)):
        for row, label in zip(x, y):
            lines.append(f"{int(label)} " + " ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path, name: str | None = None) -> TaskDataset:
    path = Path(path)
    text = path.read_text()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty file", 1, str(path))
    try:
        d, c, n_train, n_test = (int(v) for v in lines[0].split())
    except ValueError:
        raise ParseError("header must be 'd C n_train n_test'", 1, str(path)) from None
    if d < 1 or c < 1 or n_train < 0 or n_test < 0:
        raise ParseError("header values out of range", 1, str(path))
    if len(lines) - 1 != n_train + n_test:
        raise ParseError(
            f"header declares {n_train + n_test} records, file has {len(lines) - 1}", len(lines), str(path)
        )
    x = np.empty((n_train + n_test, d))
    y = np.empty(n_train + n_test, dtype=np.int64)
    for i, line in enumerate(lines[1:]):
        lineno = i + 2
        fields = line.split()
        if len(fields) != d + 1:
            raise ParseError(f"expected label and {d} features, got {len(fields)} fields", lineno, str(path))
        try:
            label = int(fields[0])
            x[i] = [float(v) for v in fields[1:]]
        except ValueError as exc:
            raise ParseError(f"bad number ({exc})", lineno, str(path)) from None
        if not 0 <= label < c:
            raise DataError(f"{path}:line {lineno}: label {label} outside [0, {c})")
        y[i] = label
    ds = TaskDataset(name or path.stem, x[:n_train], y[:n_train], x[n_train:], y[n_train:], c)
    ds.validate()
    return ds


def save_sequence(seq: TaskSequence, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, task in enumerate(seq.tasks):
        p = directory / f"task_{i + 1:02d}.txt"
        save_dataset(task, p)
        paths.append(p)
    if seq.holdout is not None:
        p = directory / "holdout.txt"
        save_dataset(seq.holdout, p)
        paths.append(p)
    return paths
