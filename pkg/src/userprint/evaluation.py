"""Evaluation protocol: coverage-constrained split, confusion matrices,
the seven-way source-combination study, and the correlation summary.

The holdout split is random but must leave every user, computer, and
browser represented in the training side; all seven source combinations
are evaluated against one shared split and one stats vocabulary built from
training records only, so accuracy differences reflect the feature
sources rather than split luck.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .events import InvariantViolation, SessionRecord
from .featurize import (
    MissingSource,
    Source,
    StatsVocabulary,
    ZeroVariance,
    assemble_features,
    build_heatmap,
    pearson_correlation,
)
from .forest import Forest, ForestConfig, predict, train_forest


class InfeasibleSplit(ValueError):
    """No coverage-satisfying split of the requested size was found."""


class EmptyValidation(ValueError):
    """Evaluation requires at least one validation row."""


#: The seven source subsets of the combination study, in report order.
COMBINATIONS: tuple[tuple[Source, ...], ...] = (
    (Source.STATS,),
    (Source.MOUSE,),
    (Source.GAZE,),
    (Source.STATS, Source.MOUSE),
    (Source.STATS, Source.GAZE),
    (Source.MOUSE, Source.GAZE),
    (Source.STATS, Source.MOUSE, Source.GAZE),
)


def combination_name(selection: Sequence[Source]) -> str:
    order = {Source.STATS: 0, Source.MOUSE: 1, Source.GAZE: 2}
    return "+".join(s.value for s in sorted(selection, key=order.__getitem__))


#: Overall accuracies reported by the original six-user human study on real
#: recordings. Embedded for side-by-side display only; synthetic corpora are
#: not expected to reproduce them numerically.
REFERENCE_STUDY_ACCURACIES: Mapping[str, float] = {
    "stats": 0.1666,
    "mouse": 0.694,
    "gaze": 0.806,
    "stats+mouse": 0.639,
    "stats+gaze": 0.833,
    "mouse+gaze": 0.833,
    "stats+mouse+gaze": 0.806,
}


@dataclass(frozen=True, eq=False)
class Dataset:
    """A corpus of session records with derived id indexes."""

    records: tuple[SessionRecord, ...]
    users: tuple[str, ...] = ()
    computers: tuple[str, ...] = ()
    browsers: tuple[str, ...] = ()

    def __post_init__(self):
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        if not records:
            raise InvariantViolation("dataset must contain at least one record")
        metas = [r.meta for r in records]
        session_ids = [m.session_id for m in metas]
        if len(set(session_ids)) != len(session_ids):
            raise InvariantViolation("session ids must be unique within a dataset")
        keys = [m.recording_key for m in metas]
        if len(set(keys)) != len(keys):
            raise InvariantViolation(
                "(user, computer, browser, recording_index) must be unique within a dataset"
            )
        object.__setattr__(self, "users", tuple(sorted({m.user_id for m in metas})))
        object.__setattr__(self, "computers", tuple(sorted({m.computer_id for m in metas})))
        object.__setattr__(self, "browsers", tuple(sorted({m.browser_id for m in metas})))
        if len(self.users) < 2:
            raise InvariantViolation("dataset must contain at least two distinct users")

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self, session_id: str) -> SessionRecord:
        for r in self.records:
            if r.meta.session_id == session_id:
                return r
        raise KeyError(session_id)


@dataclass(frozen=True)
class Split:
    train: tuple[str, ...]
    validation: tuple[str, ...]


def split_satisfies_coverage(dataset: Dataset, split: Split) -> bool:
    """True iff the split partitions the dataset and train covers every
    user, computer, and browser."""
    all_ids = {r.meta.session_id for r in dataset.records}
    train = set(split.train)
    val = set(split.validation)
    if train & val or train | val != all_ids:
        return False
    if len(train) + len(val) != len(all_ids):
        return False
    metas = [dataset.by_id(sid).meta for sid in train]
    return (
        {m.user_id for m in metas} == set(dataset.users)
        and {m.computer_id for m in metas} == set(dataset.computers)
        and {m.browser_id for m in metas} == set(dataset.browsers)
    )


def constrained_split(
    dataset: Dataset, ratio: float, seed: int, max_attempts: int = 10_000
) -> Split:
    """Seeded random holdout split whose training side covers every user,
    computer, and browser.

    Rejection-samples seeded shuffles until the coverage constraint holds;
    after ``max_attempts`` failures the requested size is declared
    infeasible.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be strictly between 0 and 1")
    ids = [r.meta.session_id for r in dataset.records]
    n_train = round(ratio * len(ids))
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        perm = rng.permutation(len(ids))
        train = tuple(sorted(ids[i] for i in perm[:n_train]))
        validation = tuple(sorted(ids[i] for i in perm[n_train:]))
        split = Split(train=train, validation=validation)
        if split_satisfies_coverage(dataset, split):
            return split
    raise InfeasibleSplit(
        f"no split with |train|={n_train} covering all users/computers/browsers "
        f"found in {max_attempts} attempts"
    )


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """U x U counts, rows = true user, columns = predicted user."""

    labels: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64, copy=True)
        if counts.shape != (len(self.labels), len(self.labels)):
            raise ValueError("counts must be square and match the label count")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ConfusionMatrix)
            and self.labels == other.labels
            and np.array_equal(self.counts, other.counts)
        )


def confusion_from_predictions(
    y_true: Sequence[int], y_pred: Sequence[int], labels: Sequence[str]
) -> ConfusionMatrix:
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        counts[t, p] += 1
    return ConfusionMatrix(tuple(labels), counts)


def evaluate(
    forest: Forest,
    X: np.ndarray,
    y: Sequence[int],
    labels: Sequence[str],
) -> tuple[ConfusionMatrix, float]:
    """Predict every validation row and tabulate the confusion matrix."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise EmptyValidation("validation set is empty")
    preds = [predict(forest, row)[0] for row in X]
    cm = confusion_from_predictions(y, preds, labels)
    return cm, cm.accuracy


@dataclass(frozen=True)
class CombinationResult:
    selection: tuple[Source, ...]
    matrix: ConfusionMatrix
    accuracy: float


@dataclass(frozen=True)
class CombinationStudy:
    split: Split
    vocabulary: StatsVocabulary
    results: dict[tuple[Source, ...], CombinationResult]


def _features_for(
    records: Sequence[SessionRecord],
    selection: tuple[Source, ...],
    grid_size: int,
    vocab: StatsVocabulary,
) -> np.ndarray:
    return np.stack(
        [assemble_features(r, selection, grid_size, vocab).values for r in records]
    )


def combination_study(
    dataset: Dataset,
    grid_size: int = 10,
    forest_config: ForestConfig = ForestConfig(),
    seed: int = 0,
    ratio: float = 0.5,
    split: Split | None = None,
) -> CombinationStudy:
    """Train and evaluate one forest per source subset on a shared split.

    The stats vocabulary is built from training records only, so no
    (key, value) pair seen only in validation can leak into the features.
    """
    if split is None:
        split = constrained_split(dataset, ratio, seed)
    train_records = [dataset.by_id(sid) for sid in split.train]
    val_records = [dataset.by_id(sid) for sid in split.validation]
    vocab = StatsVocabulary.build([r.stats for r in train_records])
    labels = dataset.users
    label_index = {u: i for i, u in enumerate(labels)}
    y_train = np.array([label_index[r.meta.user_id] for r in train_records], dtype=np.int64)
    y_val = np.array([label_index[r.meta.user_id] for r in val_records], dtype=np.int64)

    results: dict[tuple[Source, ...], CombinationResult] = {}
    for selection in COMBINATIONS:
        X_train = _features_for(train_records, selection, grid_size, vocab)
        X_val = _features_for(val_records, selection, grid_size, vocab)
        forest = train_forest(
            X_train, y_train, forest_config, seed=seed, num_classes=len(labels)
        )
        cm, acc = evaluate(forest, X_val, y_val, labels)
        results[selection] = CombinationResult(selection, cm, acc)
    return CombinationStudy(split=split, vocabulary=vocab, results=results)


@dataclass(frozen=True)
class CorrelationSummary:
    """Distribution summary of per-session mouse vs gaze heatmap correlations.

    Quartiles use linear interpolation between closest ranks; whiskers
    extend at most 1.5 IQR beyond the quartiles and are clamped to the data
    extremes.
    """

    coefficients: tuple[float, ...]
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float

    def __post_init__(self):
        if not (self.q1 <= self.median <= self.q3):
            raise ValueError("quartiles must be ordered q1 <= median <= q3")


def summarize_coefficients(coefficients: Sequence[float]) -> CorrelationSummary:
    if not len(coefficients):
        raise ValueError("need at least one coefficient")
    arr = np.asarray(coefficients, dtype=np.float64)
    q1, median, q3 = (float(np.percentile(arr, p, method="linear")) for p in (25, 50, 75))
    iqr = q3 - q1
    whisker_low = max(float(arr.min()), q1 - 1.5 * iqr)
    whisker_high = min(float(arr.max()), q3 + 1.5 * iqr)
    return CorrelationSummary(
        coefficients=tuple(float(c) for c in coefficients),
        median=median,
        q1=q1,
        q3=q3,
        whisker_low=whisker_low,
        whisker_high=whisker_high,
    )


def correlation_study(dataset: Dataset, grid_size: int = 10) -> CorrelationSummary:
    """One mouse-vs-gaze heatmap correlation per record, summarized."""
    coefficients = []
    for record in dataset.records:
        mouse_hm = build_heatmap(record.mouse, grid_size)
        if record.gaze is None:
            raise MissingSource(Source.GAZE, record.meta.session_id)
        gaze_hm = build_heatmap(record.gaze, grid_size)
        try:
            coefficients.append(pearson_correlation(mouse_hm, gaze_hm))
        except ZeroVariance as exc:
            raise ZeroVariance(f"session {record.meta.session_id!r}: {exc}") from exc
    return summarize_coefficients(coefficients)


def render_confusion_text(cm: ConfusionMatrix, accuracy: float) -> str:
    """Plain-text confusion matrix with the overall accuracy in the
    bottom-right corner."""
    labels = cm.labels
    width = max(6, max(len(l) for l in labels) + 1)
    header = " " * width + "".join(f"{l:>{width}}" for l in labels)
    lines = [header]
    for i, label in enumerate(labels):
        row = f"{label:>{width}}" + "".join(f"{int(c):>{width}}" for c in cm.counts[i])
        lines.append(row)
    corner = f"accuracy {accuracy:.4f}"
    lines.append(" " * width + corner.rjust(width * len(labels)))
    return "\n".join(lines)


def study_report(
    study: CombinationStudy,
    correlation: CorrelationSummary | None,
    config_echo: dict,
    seed: int,
    correlation_error: str | None = None,
) -> dict:
    """Assemble the JSON-ready study report (deterministic key order)."""
    combos = {}
    for selection in COMBINATIONS:
        result = study.results[selection]
        combos[combination_name(selection)] = {
            "accuracy": result.accuracy,
            "labels": list(result.matrix.labels),
            "matrix": result.matrix.counts.tolist(),
        }
    if correlation is not None:
        corr_section: dict = {
            "median": correlation.median,
            "q1": correlation.q1,
            "q3": correlation.q3,
            "whisker_low": correlation.whisker_low,
            "whisker_high": correlation.whisker_high,
            "coefficients": list(correlation.coefficients),
        }
    else:
        corr_section = {"error": correlation_error or "unavailable"}
    return {
        "config": config_echo,
        "seed": seed,
        "split": {"train": list(study.split.train), "validation": list(study.split.validation)},
        "combinations": combos,
        "correlation": corr_section,
        "reference_study": {
            "description": (
                "overall accuracies reported by the original six-user study on "
                "real recordings; shown for side-by-side comparison only"
            ),
            "accuracies": dict(REFERENCE_STUDY_ACCURACIES),
        },
    }


def render_report_text(report: dict) -> str:
    lines = []
    lines.append("source combination study")
    lines.append(f"seed: {report['seed']}")
    lines.append("")
    ref = report["reference_study"]["accuracies"]
    for name, combo in report["combinations"].items():
        lines.append(f"[{name}]  accuracy {combo['accuracy']:.4f}  "
                     f"(reference study, real data: {ref[name]:.4f})")
        cm = ConfusionMatrix(tuple(combo["labels"]), np.array(combo["matrix"]))
        lines.append(render_confusion_text(cm, combo["accuracy"]))
        lines.append("")
    corr = report["correlation"]
    if "error" in corr:
        lines.append(f"mouse-gaze correlation: unavailable ({corr['error']})")
    else:
        lines.append(
            "mouse-gaze correlation: "
            f"median {corr['median']:.4f}, IQR [{corr['q1']:.4f}, {corr['q3']:.4f}], "
            f"whiskers [{corr['whisker_low']:.4f}, {corr['whisker_high']:.4f}]"
        )
    lines.append("")
    return "\n".join(lines)
