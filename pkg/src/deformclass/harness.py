"""Experiment harness: sample-size sweeps with repetition medians.

For every repetition and every training-set size, a fresh balanced train
set and a fresh test set are drawn from the task distribution, each
requested classifier is fitted (or built) and scored, and the empirical
misclassification risk is recorded.  Aggregation takes the median across
repetitions.  Every random draw derives from the experiment seed through
named substreams, so reports are byte-identical across runs and across
worker counts.
"""
from __future__ import annotations

import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .align import (align_transform, build_gallery, classify_1nn,
                    classify_1nn_flips)
from .cnn import FilterBank, build_filter_bank, classify_bank
from .datagen import (Dataset, DeformDistribution, LabeledImage,
                      generate_dataset)
from .errors import (ConfigError, DataError, InvalidDistribution,
                     InvalidParams)
from .io import load_idx_pair
from .model import GrayImage, TemplateFunction, normalize_l2
from .train import ArchSpec, OptSpec, train_least_squares

CLASSIFIERS = ("IAC", "IAC_FLIPS", "CNN_EXPLICIT", "CNN_TRAINED")

THREADS_ENV = "DEFORMCLASS_THREADS"


# ---------------------------------------------------------------------------
# Tasks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TwoTemplates:
    f0: TemplateFunction
    f1: TemplateFunction

    def template_lists(self) -> tuple[tuple, tuple]:
        return (self.f0,), (self.f1,)


@dataclass(frozen=True)
class MultiTemplate:
    class0: tuple[TemplateFunction, ...]
    class1: tuple[TemplateFunction, ...]

    def template_lists(self) -> tuple[tuple, tuple]:
        if not self.class0 or not self.class1:
            raise ConfigError("each class needs at least one template")
        return tuple(self.class0), tuple(self.class1)


@dataclass(frozen=True)
class MnistPair:
    class_a: int
    class_b: int
    images_path: str
    labels_path: str


Task = TwoTemplates | MultiTemplate | MnistPair


@dataclass(frozen=True)
class ExperimentConfig:
    task: Task
    q: DeformDistribution | None = None
    n_list: tuple[int, ...] = (2, 4, 8, 16, 32, 64)
    n_test: int = 100
    repetitions: int = 30
    d: int = 64
    classifiers: tuple[str, ...] = ("IAC",)
    seed: int = 0
    align_m: int | None = None
    bank_xi_max: int = 2
    bank_beta: float | None = None
    cnn_arch: ArchSpec = field(default_factory=ArchSpec)
    cnn_opt: OptSpec = field(default_factory=OptSpec)

    def validate(self) -> None:
        if not self.n_list or any(n < 1 for n in self.n_list):
            raise ConfigError("n_list must be non-empty with entries >= 1")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.n_test < 1:
            raise ConfigError("n_test must be >= 1")
        for c in self.classifiers:
            if c not in CLASSIFIERS:
                raise ConfigError(f"unknown classifier {c!r}; valid: {CLASSIFIERS}")
        if isinstance(self.task, MnistPair):
            if "CNN_EXPLICIT" in self.classifiers:
                raise ConfigError("CNN_EXPLICIT needs template functions, "
                                  "not an image corpus")
        elif self.q is None:
            raise ConfigError("template tasks need a deformation distribution q")
        if isinstance(self.task, MultiTemplate) and "CNN_EXPLICIT" in self.classifiers:
            raise ConfigError("CNN_EXPLICIT supports single-template classes only")


@dataclass(frozen=True)
class RiskRow:
    classifier: str
    n: int
    repetition: int
    risk: float
    error: str = ""


@dataclass(frozen=True)
class RiskReport:
    rows: tuple[RiskRow, ...]
    n_test: int

    def aggregates(self) -> list[tuple[str, int, float]]:
        """Median risk across repetitions per (classifier, n)."""
        groups: dict[tuple[str, int], list[float]] = {}
        for row in self.rows:
            if not row.error:
                groups.setdefault((row.classifier, row.n), []).append(row.risk)
        return [(c, n, float(np.median(vals)))
                for (c, n), vals in sorted(groups.items())]


# ---------------------------------------------------------------------------
# Data drawing
# ---------------------------------------------------------------------------

def _derived_seed(*key: int) -> int:
    return int(np.random.SeedSequence(key).generate_state(1)[0])


def _draw_template_sets(cfg: ExperimentConfig, rep: int, n: int
                        ) -> tuple[Dataset, Dataset]:
    t0, t1 = cfg.task.template_lists()
    q_train = replace(cfg.q, seed=_derived_seed(cfg.seed, rep, n, 0))
    q_test = replace(cfg.q, seed=_derived_seed(cfg.seed, rep, n, 1))
    train = generate_dataset(t0, t1, q_train, n, cfg.d)
    test = generate_dataset(t0, t1, q_test, cfg.n_test, cfg.d)
    return train, test


class _MnistPool:
    """MNIST-style corpus restricted to two digit classes, drawn without
    replacement per repetition."""

    def __init__(self, task: MnistPair):
        pairs = load_idx_pair(_read(task.images_path), _read(task.labels_path))
        self.by_class: dict[int, list[GrayImage]] = {task.class_a: [], task.class_b: []}
        for img, lab in pairs:
            if lab in self.by_class:
                self.by_class[lab].append(img)
        for cls, items in self.by_class.items():
            if not items:
                raise ConfigError(f"class {cls} absent from the label file")
        self.classes = (task.class_a, task.class_b)

    def draw(self, seed: int, n: int, n_test: int, d: int) -> tuple[Dataset, Dataset]:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        half_tr = [n - n // 2, n // 2]
        half_te = [n_test - n_test // 2, n_test // 2]
        items: list[list[LabeledImage]] = [[], []]
        for k, cls in enumerate(self.classes):
            pool = self.by_class[cls]
            need = half_tr[k] + half_te[k]
            if need > len(pool):
                raise ConfigError(f"class {cls} has {len(pool)} images, "
                                  f"needs {need}")
            chosen = rng.choice(len(pool), size=need, replace=False)
            for pos, j in enumerate(chosen):
                split = 0 if pos < half_tr[k] else 1
                items[split].append(LabeledImage(image=pool[j], label=k,
                                                 template_index=0, params=None))
        out = []
        for group in items:
            order = rng.permutation(len(group))
            out.append(Dataset(items=tuple(group[i] for i in order),
                               d=group[0].image.d, meta={"origin": "idx"}))
        return out[0], out[1]


def _read(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}")


# ---------------------------------------------------------------------------
# Classifier runners
# ---------------------------------------------------------------------------

def _risk_iac(train: Dataset, test: Dataset, m: int | None, flips: bool) -> float:
    images = [item.image for item in train.items]
    labels = [item.label for item in train.items]
    gallery = build_gallery(images, labels, m=m)
    wrong = 0
    for item in test.items:
        if flips:
            label, _, _, _ = classify_1nn_flips(gallery, item.image, m=m)
        else:
            label, _, _ = classify_1nn(gallery, align_transform(item.image, m=m))
        wrong += int(label != item.label)
    return wrong / len(test.items)


def _risk_bank(bank: FilterBank, test: Dataset, beta: float | None) -> float:
    wrong = 0
    for item in test.items:
        decision = classify_bank(bank, normalize_l2(item.image), beta=beta)
        wrong += int(decision.label != item.label)
    return wrong / len(test.items)


def _normalized(data: Dataset) -> Dataset:
    items = tuple(LabeledImage(image=normalize_l2(it.image), label=it.label,
                               template_index=it.template_index, params=it.params)
                  for it in data.items)
    return Dataset(items=items, d=data.d, meta=data.meta)


def _risk_trained(train: Dataset, test: Dataset, arch: ArchSpec, opt: OptSpec,
                  seed: int) -> float:
    net = train_least_squares(_normalized(train), arch, replace(opt, seed=seed))
    wrong = 0
    for item in _normalized(test).items:
        wrong += int(net.predict(item.image) != item.label)
    return wrong / len(test.items)


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

def _worker_count() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}")
    return min(os.cpu_count() or 1, 8)


def run_experiment(cfg: ExperimentConfig) -> RiskReport:
    """Run the full sweep; returns one row per (classifier, n, repetition)."""
    cfg.validate()
    if not cfg.classifiers:
        print("warning: no classifiers requested; report will be empty",
              file=sys.stderr)
        return RiskReport(rows=(), n_test=cfg.n_test)

    bank = None
    if "CNN_EXPLICIT" in cfg.classifiers:
        f0, f1 = cfg.task.template_lists()
        bank = build_filter_bank(f0[0], f1[0], cfg.bank_xi_max, cfg.d)
    pool = _MnistPool(cfg.task) if isinstance(cfg.task, MnistPair) else None

    def run_item(rep: int, n: int) -> list[RiskRow]:
        try:
            if pool is not None:
                seed = _derived_seed(cfg.seed, rep, n, 2)
                train, test = pool.draw(seed, n, cfg.n_test, cfg.d)
            else:
                train, test = _draw_template_sets(cfg, rep, n)
            rows = []
            for name in cfg.classifiers:
                if name == "IAC":
                    risk = _risk_iac(train, test, cfg.align_m, flips=False)
                elif name == "IAC_FLIPS":
                    risk = _risk_iac(train, test, cfg.align_m, flips=True)
                elif name == "CNN_EXPLICIT":
                    risk = _risk_bank(bank, test, cfg.bank_beta)
                else:
                    risk = _risk_trained(train, test, cfg.cnn_arch, cfg.cnn_opt,
                                         seed=_derived_seed(cfg.seed, rep, n, 3))
                rows.append(RiskRow(classifier=name, n=n, repetition=rep,
                                    risk=risk))
            return rows
        except Exception as exc:  # noqa: BLE001 - per-item isolation
            traceback.print_exc(file=sys.stderr)
            return [RiskRow(classifier=name, n=n, repetition=rep,
                            risk=float("nan"), error=str(exc))
                    for name in cfg.classifiers]

    items = [(rep, n) for rep in range(cfg.repetitions) for n in cfg.n_list]
    workers = _worker_count()
    if workers == 1:
        results = [run_item(rep, n) for rep, n in items]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(lambda rn: run_item(*rn), items))

    rows = [row for batch in results for row in batch]
    rows.sort(key=lambda r: (r.classifier, r.n, r.repetition))
    return RiskReport(rows=tuple(rows), n_test=cfg.n_test)


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

def emit_report(report: RiskReport, fmt: str = "csv", view: str = "raw") -> bytes:
    """Render the report; raw rows or per-(classifier, n) aggregates."""
    if fmt not in ("csv", "pretty"):
        raise ConfigError(f"unknown format {fmt!r}")
    if view not in ("raw", "aggregate"):
        raise ConfigError(f"unknown view {view!r}")
    if view == "raw":
        header = ["classifier", "n", "repetition", "R_N"]
        body = [[r.classifier, str(r.n), str(r.repetition), f"{r.risk:.6f}"]
                for r in report.rows]
    else:
        header = ["classifier", "n", "median_R_N"]
        body = [[c, str(n), f"{med:.6f}"] for c, n, med in report.aggregates()]

    if fmt == "csv":
        lines = [",".join(header)] + [",".join(row) for row in body]
        return ("\n".join(lines) + "\n").encode("utf-8")
    widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h)
              for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
    lines.append("  ".join("-" * w for w in widths))
    for row in body:
        lines.append("  ".join(row[i].ljust(widths[i]) for i in range(len(row))))
    return ("\n".join(lines) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# Config-file parsing
# ---------------------------------------------------------------------------

_KNOWN_KEYS = {
    "experiment.task", "experiment.n_list", "experiment.n_test",
    "experiment.repetitions", "experiment.d", "experiment.classifiers",
    "experiment.seed", "task.template0", "task.template1",
    "task.mnist_images", "task.mnist_labels", "task.class_a", "task.class_b",
    "q.eta_range", "q.xi_range", "q.xi_prime_range", "q.flip_prob",
    "align.m", "bank.xi_max", "bank.beta", "cnn.n_filters", "cnn.filter_size",
    "cnn.dense_widths", "cnn.beta", "cnn.learning_rate", "cnn.epochs",
    "cnn.batch_size",
}


def parse_template_spec(spec: str) -> TemplateFunction:
    """Template from a spec string like ``tent:delta=0.25`` or ``cone:radius=0.2``."""
    from .model import cone, cross, tent

    name, _, rest = spec.partition(":")
    kwargs = {}
    if rest:
        for part in rest.split(","):
            key, _, value = part.partition("=")
            if not value:
                raise ConfigError(f"template spec part {part!r} is not key=value")
            kwargs[key.strip()] = float(value)
    try:
        if name == "tent":
            center = (kwargs.pop("cx", 0.5), kwargs.pop("cy", 0.5))
            return tent(kwargs.pop("delta", 0.25), center=center, **kwargs)
        if name == "cone":
            center = (kwargs.pop("cx", 0.5), kwargs.pop("cy", 0.5))
            return cone(kwargs.pop("radius", 0.2), center=center, **kwargs)
        if name == "cross":
            return cross(kwargs.pop("arm", 1 / 16), kwargs.pop("taper", 1 / 16),
                         **kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad arguments for template {name!r}: {exc}")
    except InvalidParams as exc:
        raise ConfigError(f"invalid template {spec!r}: {exc}")
    raise ConfigError(f"unknown template kind {name!r} (tent, cone, cross)")


def _parse_pair(value: str, key: str) -> tuple[float, float]:
    parts = value.split(",")
    if len(parts) != 2:
        raise ConfigError(f"{key} needs two comma-separated numbers, got {value!r}")
    return _num(parts[0], key), _num(parts[1], key)


def _num(value: str, key: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key} must be numeric, got {value!r}")


def _int(value: str, key: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {value!r}")


def _int_list(value: str, key: str) -> tuple[int, ...]:
    return tuple(_int(part, key) for part in value.split(","))


def parse_config(text: str) -> ExperimentConfig:
    """Flat key=value config; keys are namespaced; unknown keys are errors."""
    kv: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key = key.strip()
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        kv[key] = value.strip()

    task_kind = kv.get("experiment.task", "two_templates")
    if task_kind == "two_templates":
        if "task.template0" not in kv or "task.template1" not in kv:
            raise ConfigError("two_templates task needs task.template0 and "
                              "task.template1")
        task = TwoTemplates(parse_template_spec(kv["task.template0"]),
                            parse_template_spec(kv["task.template1"]))
    elif task_kind == "mnist_pair":
        for need in ("task.mnist_images", "task.mnist_labels"):
            if need not in kv:
                raise ConfigError(f"mnist_pair task needs {need}")
        task = MnistPair(class_a=_int(kv.get("task.class_a", "0"), "task.class_a"),
                         class_b=_int(kv.get("task.class_b", "1"), "task.class_b"),
                         images_path=kv["task.mnist_images"],
                         labels_path=kv["task.mnist_labels"])
    else:
        raise ConfigError(f"unknown task kind {task_kind!r}")

    q = None
    if not isinstance(task, MnistPair):
        try:
            q = DeformDistribution(
                eta_range=_parse_pair(kv.get("q.eta_range", "1,1"), "q.eta_range"),
                xi_range=_parse_pair(kv.get("q.xi_range", "1,1"), "q.xi_range"),
                xi_prime_range=(_parse_pair(kv["q.xi_prime_range"],
                                            "q.xi_prime_range")
                                if "q.xi_prime_range" in kv else None),
                flip_prob=_num(kv.get("q.flip_prob", "0"), "q.flip_prob"))
            q.validate()
        except (InvalidParams, InvalidDistribution) as exc:
            raise ConfigError(f"invalid distribution: {exc}")

    try:
        arch = ArchSpec(
            n_filters=_int(kv.get("cnn.n_filters", "28"), "cnn.n_filters"),
            filter_size=_int(kv.get("cnn.filter_size", "3"), "cnn.filter_size"),
            dense_widths=_int_list(kv.get("cnn.dense_widths", "128"),
                                   "cnn.dense_widths"),
            beta=_num(kv.get("cnn.beta", "1.0"), "cnn.beta"))
        opt = OptSpec(
            learning_rate=_num(kv.get("cnn.learning_rate", "0.01"),
                               "cnn.learning_rate"),
            epochs=_int(kv.get("cnn.epochs", "20"), "cnn.epochs"),
            batch_size=_int(kv.get("cnn.batch_size", "16"), "cnn.batch_size"))
        arch.validate()
        opt.validate()
    except InvalidParams as exc:
        raise ConfigError(f"invalid network spec: {exc}")

    cfg = ExperimentConfig(
        task=task,
        q=q,
        n_list=_int_list(kv.get("experiment.n_list", "2,4,8,16,32,64"),
                         "experiment.n_list"),
        n_test=_int(kv.get("experiment.n_test", "100"), "experiment.n_test"),
        repetitions=_int(kv.get("experiment.repetitions", "30"),
                         "experiment.repetitions"),
        d=_int(kv.get("experiment.d", "64"), "experiment.d"),
        classifiers=tuple(kv.get("experiment.classifiers", "IAC").split(",")),
        seed=_int(kv.get("experiment.seed", "0"), "experiment.seed"),
        align_m=_int(kv["align.m"], "align.m") if "align.m" in kv else None,
        bank_xi_max=_int(kv.get("bank.xi_max", "2"), "bank.xi_max"),
        bank_beta=_num(kv["bank.beta"], "bank.beta") if "bank.beta" in kv else None,
        cnn_arch=arch,
        cnn_opt=opt)
    cfg.validate()
    return cfg
