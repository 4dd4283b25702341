"""Dataset generation, train/test protocols, cross-evaluation, and reports.

Every random choice (sweeps, splits, forests, reservoir) descends from one
root seed through tagged child streams, so a rerun with the same seeds is
bitwise identical.  Evaluation always uses the normalized squared-error ratio
sum(p - t)^2 / sum(p + t)^2, never the conventional mean of squared errors.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .forest import ForestConfig, ForestModel, fit, mse_metric, predict
from .reservoir import (
    LAYOUT_BASELINE,
    LAYOUT_RESERVOIR,
    FeatureVector,
    ReservoirConfig,
    ReservoirInstance,
    baseline_features,
    prepump,
    run_cascade,
    sample_reservoir,
)
from .seeding import derive_rng
from .sources import (
    CV_MIXTURE,
    COHERENT_TLS_MIX,
    EMITTER_CAVITY,
    PHOTON_ADDED,
    CoherentTlsMixSpec,
    CvMixtureSpec,
    EmitterCavitySpec,
    PhotonAddedSpec,
    SweepSpec,
    sweep_source,
)

WITH_RESERVOIR = "with_reservoir"
BASELINE = "baseline"


@dataclass(frozen=True)
class Sample:
    id: int
    source_id: str
    params: dict
    features_reservoir: FeatureVector
    features_baseline: FeatureVector
    label: float

    def __post_init__(self):
        if not (math.isfinite(self.label) and self.label >= 0):
            raise ValueError("label must be finite and nonnegative")


@dataclass(frozen=True)
class Dataset:
    samples: tuple[Sample, ...]
    reservoir_fingerprint: str
    generation_seed: int
    skipped: tuple[tuple[int, str], ...] = ()

    def __post_init__(self):
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValueError("sample ids must be unique")

    def __len__(self) -> int:
        return len(self.samples)

    def features(self, mode: str) -> np.ndarray:
        if mode == WITH_RESERVOIR:
            return np.array([s.features_reservoir.values for s in self.samples])
        if mode == BASELINE:
            return np.array([s.features_baseline.values for s in self.samples])
        raise ValueError(f"unknown mode {mode!r}")

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples])


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")


@dataclass(frozen=True)
class EvalReport:
    mse: float
    n_test: int
    per_sample: tuple[tuple[int, float, float], ...]  # (id, truth, prediction)
    mode: str

    def __post_init__(self):
        if self.mse < 0:
            raise ValueError("mse must be nonnegative")


@dataclass(frozen=True)
class CrossEvalMatrix:
    """Rows index the test family, columns the training family."""

    source_ids: tuple[str, ...]
    entries: np.ndarray

    def entry(self, test_id: str, train_id: str) -> float:
        return float(self.entries[self.source_ids.index(test_id),
                                  self.source_ids.index(train_id)])


def reservoir_fingerprint(instance: ReservoirInstance) -> str:
    h = hashlib.sha256()
    h.update(repr(instance.config).encode())
    h.update(instance.coupling.tobytes())
    h.update(instance.input_weights.tobytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# Default desk-scale sweeps per source family

def default_sweep(family: str) -> tuple[object, SweepSpec, float]:
    """(base spec, sweep, test fraction) reproducing the reference figures."""
    if family == CV_MIXTURE:
        half_pi = math.pi / 2
        return (CvMixtureSpec(theta=half_pi / 2, phi=half_pi / 2),
                SweepSpec("random", {"theta": (0.0, half_pi),
                                     "phi": (0.0, half_pi)}, 1024),
                0.25)
    if family == EMITTER_CAVITY:
        return (EmitterCavitySpec(),
                SweepSpec("grid", {"delta_a": (-1.0, 4.0)}, 2000),
                0.20)
    if family == PHOTON_ADDED:
        return (PhotonAddedSpec(r=0.5, m=1),
                SweepSpec("grid", {"r": (0.1, 0.8)}, 1000),
                0.20)
    if family == COHERENT_TLS_MIX:
        return (CoherentTlsMixSpec(),
                SweepSpec("grid", {"delta_a": (-3.0, 3.0)}, 1000),
                0.20)
    raise ValueError(f"unknown source family {family!r}")


def photon_added_mixed_parts(n_total: int = 999,
                             m_values: tuple[int, ...] = (1, 3, 5),
                             r_range: tuple[float, float] = (0.1, 0.6)):
    """Per-m sweep parts whose union is the mixed photon-number dataset."""
    base = n_total // len(m_values)
    counts = [base + (1 if i < n_total % len(m_values) else 0)
              for i in range(len(m_values))]
    return [(PhotonAddedSpec(r=0.5, m=m),
             SweepSpec("grid", {"r": r_range}, c))
            for m, c in zip(m_values, counts)]


# ---------------------------------------------------------------------------
# Dataset generation

def _child_seed(seed: int, tag: str, index: int) -> int:
    return int(derive_rng(seed, tag, index).integers(2**31))


def generate_dataset_multi(family: str, parts,
                           reservoir_config: ReservoirConfig,
                           seed: int) -> Dataset:
    """Build one dataset from several (base_spec, sweep) parts.

    All parts share one sampled reservoir; ids are contiguous across parts in
    order.  Sources whose preparation fails are skipped and reported in
    Dataset.skipped with their global index.
    """
    instance = sample_reservoir(reservoir_config)
    pumped = prepump(instance)
    fingerprint = reservoir_fingerprint(instance)
    samples = []
    skipped = []
    offset = 0
    for k, (base_spec, sweep) in enumerate(parts):
        result = sweep_source(family, base_spec, sweep,
                              _child_seed(seed, "dataset:part", k))
        for i, msg in result.skipped:
            skipped.append((offset + i, msg))
        for src in result.sources:
            samples.append(Sample(
                id=len(samples),
                source_id=src.source_id,
                params=dict(src.params),
                features_reservoir=run_cascade(instance, src, prepumped=pumped),
                features_baseline=baseline_features(src),
                label=src.label_g2,
            ))
        offset += sweep.n_samples
    return Dataset(tuple(samples), fingerprint, seed, tuple(skipped))


def generate_dataset(family: str, sweep: SweepSpec,
                     reservoir_config: ReservoirConfig, seed: int,
                     base_spec=None) -> Dataset:
    if base_spec is None:
        base_spec = default_sweep(family)[0]
    return generate_dataset_multi(family, [(base_spec, sweep)],
                                  reservoir_config, seed)


def split(dataset: Dataset, test_fraction: float,
          seed: int) -> tuple[Dataset, Dataset]:
    """Seeded random partition into disjoint, exhaustive train/test sets."""
    n = len(dataset)
    n_test = int(round(n * test_fraction))
    if not 1 <= n_test <= n - 1:
        raise ValueError(f"degenerate split: {n} samples at {test_fraction}")
    perm = derive_rng(seed, "split").permutation(n)
    test_ids = set(perm[:n_test].tolist())
    train = tuple(s for i, s in enumerate(dataset.samples) if i not in test_ids)
    test = tuple(s for i, s in enumerate(dataset.samples) if i in test_ids)
    mk = lambda ss: Dataset(ss, dataset.reservoir_fingerprint,
                            dataset.generation_seed, dataset.skipped)
    return mk(train), mk(test)


# ---------------------------------------------------------------------------
# Training and evaluation

def evaluate(model: ForestModel, test: Dataset, mode: str) -> EvalReport:
    preds = predict(model, test.features(mode))
    truth = test.labels()
    per_sample = tuple((s.id, float(t), float(p))
                       for s, t, p in zip(test.samples, truth, preds))
    return EvalReport(mse=mse_metric(preds, truth), n_test=len(test),
                      per_sample=per_sample, mode=mode)


def train_and_eval(dataset: Dataset, mode: str, forest_config: ForestConfig,
                   split_spec: SplitSpec) -> EvalReport:
    train, test = split(dataset, split_spec.test_fraction, split_spec.seed)
    model = fit(train.features(mode), train.labels(), forest_config)
    return evaluate(model, test, mode)


def cross_evaluate(datasets: dict[str, Dataset], forest_config: ForestConfig,
                   split_spec: SplitSpec,
                   mode: str = WITH_RESERVOIR) -> CrossEvalMatrix:
    """Train one model per family, test each on every family's test split."""
    ids = tuple(datasets)
    fingerprints = {d.reservoir_fingerprint for d in datasets.values()}
    if len(fingerprints) != 1:
        raise ValueError("cross-evaluation requires one shared reservoir")
    splits = {sid: split(d, split_spec.test_fraction, split_spec.seed)
              for sid, d in datasets.items()}
    models = {sid: fit(tr.features(mode), tr.labels(), forest_config)
              for sid, (tr, _) in splits.items()}
    entries = np.zeros((len(ids), len(ids)))
    for i, test_id in enumerate(ids):
        _, test = splits[test_id]
        for j, train_id in enumerate(ids):
            entries[i, j] = evaluate(models[train_id], test, mode).mse
    return CrossEvalMatrix(source_ids=ids, entries=entries)


def partition_mse(model: ForestModel, dataset: Dataset, n_parts: int = 4,
                  mode: str = WITH_RESERVOIR) -> list[float]:
    """Per-segment metric over contiguous quartiles in generation order."""
    n = len(dataset)
    if n < n_parts:
        raise ValueError(f"cannot split {n} samples into {n_parts} parts")
    preds = predict(model, dataset.features(mode))
    truth = dataset.labels()
    edges = np.linspace(0, n, n_parts + 1).astype(int)
    return [mse_metric(preds[a:b], truth[a:b])
            for a, b in zip(edges[:-1], edges[1:])]


def generalization_sweep(train_values, test_value,
                         reservoir_config: ReservoirConfig,
                         forest_config: ForestConfig, seed: int,
                         base_spec: EmitterCavitySpec | None = None,
                         delta_a_range: tuple[float, float] = (-1.0, 4.0),
                         n_per_detuning: int = 400,
                         mode: str = WITH_RESERVOIR) -> EvalReport:
    """Train across several cavity detunings, test on a held-out one.

    The swept parameter is the emitter detuning delta_a; each training
    detuning delta_b contributes one grid sweep, and the model is evaluated
    on the full sweep at the held-out delta_b.
    """
    if test_value in train_values:
        raise ValueError("test detuning must not appear in the training set")
    base = base_spec or EmitterCavitySpec()
    sweep = SweepSpec("grid", {"delta_a": delta_a_range}, n_per_detuning)
    parts = [(dataclasses.replace(base, delta_b=v), sweep)
             for v in train_values]
    train = generate_dataset_multi(EMITTER_CAVITY, parts, reservoir_config, seed)
    test = generate_dataset_multi(
        EMITTER_CAVITY, [(dataclasses.replace(base, delta_b=test_value), sweep)],
        reservoir_config, _child_seed(seed, "generalization:test", 0))
    model = fit(train.features(mode), train.labels(), forest_config)
    return evaluate(model, test, mode)


# ---------------------------------------------------------------------------
# File interfaces

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _atomic_write(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_dataset_csv(dataset: Dataset, path: str):
    """CSV: id,source_id,<param columns>,f0..fK-1,b0..bB-1,label_g2."""
    if not dataset.samples:
        raise ValueError("cannot write an empty dataset")
    first = dataset.samples[0]
    param_names = sorted(first.params)
    k = first.features_reservoir.values.size
    b = first.features_baseline.values.size
    header = (["id", "source_id"] + param_names
              + [f"f{i}" for i in range(k)] + [f"b{i}" for i in range(b)]
              + ["label_g2"])
    lines = [",".join(header)]
    for s in dataset.samples:
        if sorted(s.params) != param_names:
            raise ValueError("inconsistent parameter columns across samples")
        row = ([str(s.id), s.source_id]
               + [_fmt(s.params[p]) for p in param_names]
               + [_fmt(v) for v in s.features_reservoir.values]
               + [_fmt(v) for v in s.features_baseline.values]
               + [_fmt(s.label)])
        lines.append(",".join(row))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_dataset_csv(path: str, reservoir_fingerprint: str = "",
                     generation_seed: int = 0) -> Dataset:
    with open(path, encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ValueError(f"empty dataset file {path}")
    header = list(rows[0])
    f_cols = sorted((c for c in header if c[0] == "f" and c[1:].isdigit()),
                    key=lambda c: int(c[1:]))
    b_cols = sorted((c for c in header if c[0] == "b" and c[1:].isdigit()),
                    key=lambda c: int(c[1:]))
    param_cols = [c for c in header
                  if c not in ("id", "source_id", "label_g2")
                  and c not in f_cols and c not in b_cols]
    samples = []
    for r in rows:
        samples.append(Sample(
            id=int(r["id"]),
            source_id=r["source_id"],
            params={p: float(r[p]) for p in param_cols},
            features_reservoir=FeatureVector(
                np.array([float(r[c]) for c in f_cols]), LAYOUT_RESERVOIR),
            features_baseline=FeatureVector(
                np.array([float(r[c]) for c in b_cols]), LAYOUT_BASELINE),
            label=float(r["label_g2"]),
        ))
    return Dataset(tuple(samples), reservoir_fingerprint, generation_seed)


def report_to_dict(report: EvalReport) -> dict:
    return {
        "mse": report.mse,
        "n_test": report.n_test,
        "mode": report.mode,
        "per_sample": [{"id": i, "truth": t, "prediction": p}
                       for i, t, p in report.per_sample],
    }


def matrix_to_dict(matrix: CrossEvalMatrix) -> dict:
    return {
        "source_ids": list(matrix.source_ids),
        "entries": [[float(v) for v in row] for row in matrix.entries],
        "convention": "rows = test family, columns = training family",
    }


def write_json_report(payload: dict, path: str):
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
