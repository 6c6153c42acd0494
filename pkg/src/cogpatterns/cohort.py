"""Cohort data model, CSV ingestion, standardization, and synthetic cohorts.

A cohort is a real-valued score matrix (samples x features) with a binary
diagnostic label per sample and a descriptor per feature naming the source
test and the cognitive domain the feature measures.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CohortFormatError,
    ConfigError,
    LabelError,
    SchemaMismatchError,
)

DOMAINS = ("A", "E", "L", "M", "O", "V")
TESTS = ("MMSE", "LM", "BF", "DS", "CF", "TMT", "WAIS", "BNT", "VF", "MoCA", "MINT")
LABEL_NAMES = ("CN", "MCI")  # internal encoding: CN=0, MCI=1
CN, MCI = 0, 1


@dataclass(frozen=True)
class FeatureDescriptor:
    """One feature column: its id, the test it came from, and its domain."""

    id: str
    test: str
    domain: str

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ConfigError(
                f"feature {self.id!r}: domain {self.domain!r} not in {DOMAINS}"
            )


@dataclass(frozen=True)
class CohortDataset:
    """Immutable cohort: features (n, p), labels (n,), descriptors (p,)."""

    features: np.ndarray
    labels: np.ndarray
    descriptors: tuple[FeatureDescriptor, ...]
    sample_ids: tuple[str, ...]

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int8)
        if X.ndim != 2:
            raise ConfigError("features must be a 2-D matrix")
        n, p = X.shape
        if not np.all(np.isfinite(X)):
            raise ConfigError("features contain NaN/inf after ingestion")
        if y.shape != (n,):
            raise ConfigError("labels length must equal n_samples")
        if len(self.descriptors) != p:
            raise ConfigError("descriptors length must equal n_features")
        if len(self.sample_ids) != n:
            raise ConfigError("sample_ids length must equal n_samples")
        ids = [d.id for d in self.descriptors]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate feature ids in schema")
        if not np.all((y == CN) | (y == MCI)):
            raise ConfigError("labels must be CN (0) or MCI (1)")
        # Classifier fitting requires >= 2 samples per class; ingestion does
        # not, so tiny hand-written fixtures and sliced views stay loadable.
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "descriptors", tuple(self.descriptors))
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def feature_ids(self) -> tuple[str, ...]:
        return tuple(d.id for d in self.descriptors)

    def select_features(self, column_indices) -> "CohortDataset":
        """Return the cohort restricted to the given feature columns."""
        idx = np.asarray(column_indices, dtype=int)
        return CohortDataset(
            features=self.features[:, idx].copy(),
            labels=self.labels.copy(),
            descriptors=tuple(self.descriptors[i] for i in idx),
            sample_ids=self.sample_ids,
        )


@dataclass(frozen=True)
class SyntheticGroundTruth:
    """Planted structure of a synthetic cohort, used as a test oracle."""

    cluster_of: np.ndarray                     # (n,) planted cluster index
    impaired_domains: tuple[frozenset, ...]    # per-cluster domain codes
    shift_magnitude: tuple[float, ...]         # per-cluster shift in sd units

    def to_json(self) -> dict:
        return {
            "cluster_of": [int(c) for c in self.cluster_of],
            "impaired_domains": {
                str(i): sorted(doms) for i, doms in enumerate(self.impaired_domains)
            },
            "shift_magnitude": {
                str(i): float(s) for i, s in enumerate(self.shift_magnitude)
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SyntheticGroundTruth":
        k = len(obj["impaired_domains"])
        return cls(
            cluster_of=np.asarray(obj["cluster_of"], dtype=np.int32),
            impaired_domains=tuple(
                frozenset(obj["impaired_domains"][str(i)]) for i in range(k)
            ),
            shift_magnitude=tuple(
                float(obj["shift_magnitude"][str(i)]) for i in range(k)
            ),
        )


# ---------------------------------------------------------------------------
# Schema and CSV I/O
# ---------------------------------------------------------------------------

def load_schema(path: str | Path) -> tuple[FeatureDescriptor, ...]:
    """Load a JSON schema mapping feature id -> {"test": ..., "domain": ...}.

    The key order of the JSON object defines the canonical column order.
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict) or not raw:
        raise SchemaMismatchError(f"schema file {path} must be a non-empty JSON object")
    descriptors = []
    for fid, entry in raw.items():
        try:
            descriptors.append(
                FeatureDescriptor(id=fid, test=entry["test"], domain=entry["domain"])
            )
        except (KeyError, TypeError) as exc:
            raise SchemaMismatchError(f"schema entry for {fid!r} is malformed") from exc
    return tuple(descriptors)


def save_schema(descriptors, path: str | Path) -> None:
    obj = {d.id: {"test": d.test, "domain": d.domain} for d in descriptors}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _parse_cell(text: str, row: int, column: str) -> float:
    """Parse one feature cell; '' means missing (returned as NaN)."""
    text = text.strip()
    if text == "":
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise CohortFormatError(
            f"row {row}, column {column!r}: cannot parse {text!r} as a number",
            row=row,
            column=column,
        ) from None
    # Literal NaN/inf tokens are treated as missing values, not as scores.
    return value if math.isfinite(value) else math.nan


def load_cohort(
    csv_path: str | Path,
    schema_path: str | Path,
    missing: str = "drop-row",
) -> CohortDataset:
    """Load a cohort CSV against a schema file.

    The CSV header must be ``sample_id,label,<feature ids...>``. Column order
    of the returned dataset follows the schema file, not the CSV. Rows with a
    missing label are rejected (dropped). Missing feature values are handled
    by the ``missing`` policy: ``drop-row`` removes the sample, while
    ``impute-median`` substitutes the per-feature median of same-label rows.
    """
    if missing not in ("drop-row", "impute-median"):
        raise ConfigError(f"unknown missing-value policy {missing!r}")
    descriptors = load_schema(schema_path)
    schema_ids = [d.id for d in descriptors]

    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortFormatError("empty CSV file", row=0) from None
        if len(header) < 3 or header[0] != "sample_id" or header[1] != "label":
            raise CohortFormatError(
                "header must be 'sample_id,label,<feature ids...>'", row=0
            )
        csv_ids = header[2:]
        unknown = [c for c in csv_ids if c not in set(schema_ids)]
        if unknown:
            raise SchemaMismatchError(
                f"CSV feature columns not present in schema: {unknown}"
            )
        missing_cols = [c for c in schema_ids if c not in set(csv_ids)]
        if missing_cols:
            raise SchemaMismatchError(
                f"schema features missing from CSV: {missing_cols}"
            )
        reorder = [csv_ids.index(fid) for fid in schema_ids]

        sample_ids, labels, rows = [], [], []
        for row_num, record in enumerate(reader, start=1):
            if len(record) != len(header):
                raise CohortFormatError(
                    f"row {row_num}: expected {len(header)} fields, got {len(record)}",
                    row=row_num,
                )
            label_text = record[1].strip()
            if label_text == "":
                continue  # rows with a missing label are rejected
            if label_text not in LABEL_NAMES:
                raise LabelError(
                    f"row {row_num}: label {label_text!r} not in {LABEL_NAMES}"
                )
            values = [
                _parse_cell(record[2 + j], row_num, csv_ids[j]) for j in reorder
            ]
            sample_ids.append(record[0])
            labels.append(LABEL_NAMES.index(label_text))
            rows.append(values)

    X = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(schema_ids))
    y = np.asarray(labels, dtype=np.int8)
    ids = sample_ids

    nan_mask = np.isnan(X)
    if nan_mask.any():
        if missing == "drop-row":
            keep = ~nan_mask.any(axis=1)
            X, y = X[keep], y[keep]
            ids = [s for s, k in zip(ids, keep) if k]
        else:
            for j in range(X.shape[1]):
                for cls in (CN, MCI):
                    sel = (y == cls) & ~nan_mask[:, j]
                    hole = (y == cls) & nan_mask[:, j]
                    if not hole.any():
                        continue
                    if not sel.any():
                        raise CohortFormatError(
                            f"column {schema_ids[j]!r}: no observed values to "
                            f"impute for label {LABEL_NAMES[cls]}"
                        )
                    X[hole, j] = np.median(X[sel, j])

    return CohortDataset(
        features=X, labels=y, descriptors=descriptors, sample_ids=tuple(ids)
    )


def save_cohort(ds: CohortDataset, csv_path: str | Path) -> None:
    """Write a cohort CSV that round-trips exactly through load_cohort."""
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "label", *ds.feature_ids])
        for i in range(ds.n_samples):
            writer.writerow(
                [
                    ds.sample_ids[i],
                    LABEL_NAMES[ds.labels[i]],
                    *[repr(float(v)) for v in ds.features[i]],
                ]
            )


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------

def standardize(ds: CohortDataset) -> CohortDataset:
    """Z-score each feature column (sample sd); constant columns map to zeros."""
    X = ds.features
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    out = np.zeros_like(X)
    ok = sd > 0
    out[:, ok] = (X[:, ok] - mean[ok]) / sd[ok]
    return CohortDataset(
        features=out,
        labels=ds.labels.copy(),
        descriptors=ds.descriptors,
        sample_ids=ds.sample_ids,
    )


# ---------------------------------------------------------------------------
# Synthetic cohorts
# ---------------------------------------------------------------------------

def default_descriptors(features_per_domain: int = 2) -> tuple[FeatureDescriptor, ...]:
    """Build a desk-scale schema with the given number of features per domain."""
    if features_per_domain < 1:
        raise ConfigError("features_per_domain must be >= 1")
    descriptors = []
    fid = 0
    for domain in DOMAINS:
        for _ in range(features_per_domain):
            descriptors.append(
                FeatureDescriptor(
                    id=f"F{fid + 1}", test=TESTS[fid % len(TESTS)], domain=domain
                )
            )
            fid += 1
    return tuple(descriptors)


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator configuration for planted-cluster synthetic cohorts."""

    n_samples: int
    n_clusters: int
    descriptors: tuple[FeatureDescriptor, ...]
    impaired_domains: tuple[frozenset, ...]
    shift: float = 1.0
    noise_sd: float = 1.0
    center_spacing_sd: float = 6.0

    def __post_init__(self):
        if not self.descriptors:
            raise ConfigError("descriptor list must be non-empty")
        if self.n_clusters < 1:
            raise ConfigError("n_clusters must be >= 1")
        if len(self.impaired_domains) != self.n_clusters:
            raise ConfigError("impaired_domains must list one domain set per cluster")
        schema_domains = {d.domain for d in self.descriptors}
        for i, doms in enumerate(self.impaired_domains):
            if not doms:
                raise ConfigError(f"cluster {i}: impaired domain set is empty")
            extra = set(doms) - schema_domains
            if extra:
                raise ConfigError(f"cluster {i}: domains {sorted(extra)} not in schema")
        if self.n_clusters > len(self.descriptors):
            raise ConfigError("need n_features >= n_clusters for center placement")
        if self.noise_sd <= 0:
            raise ConfigError("noise_sd must be positive")
        if self.n_samples < 4 * self.n_clusters:
            raise ConfigError("need at least 4 samples per cluster (2 CN + 2 MCI)")
        object.__setattr__(self, "descriptors", tuple(self.descriptors))
        object.__setattr__(
            self, "impaired_domains", tuple(frozenset(d) for d in self.impaired_domains)
        )


def _cluster_centers(k: int, p: int, spacing: float, rng) -> np.ndarray:
    """Place k centers in p-space with exact pairwise distance `spacing`."""
    if k == 1:
        return np.zeros((1, p))
    raw = rng.normal(size=(p, k))
    q, _ = np.linalg.qr(raw)
    # Orthonormal directions: pairwise distance between scaled columns is
    # s*sqrt(2), so scale by spacing/sqrt(2).
    return (q[:, :k] * (spacing / math.sqrt(2.0))).T


def generate_synthetic(spec: SyntheticSpec, seed: int):
    """Generate a planted-cluster cohort and its ground truth.

    Each cluster is an isotropic Gaussian blob. Within a cluster, MCI-labeled
    samples have the features of the cluster's impaired domains shifted down
    by ``shift`` standard deviations (lower scores = impairment), so the
    CN-minus-MCI effect-size convention comes out positive. CN/MCI labels are
    balanced within each cluster to +/-1 sample. Pure function of (spec, seed).
    """
    rng = np.random.default_rng(seed)
    n, k = spec.n_samples, spec.n_clusters
    p = len(spec.descriptors)
    domains = np.array([d.domain for d in spec.descriptors])

    centers = _cluster_centers(k, p, spec.center_spacing_sd * spec.noise_sd, rng)
    sizes = [n // k + (1 if c < n % k else 0) for c in range(k)]

    X = np.empty((n, p))
    y = np.empty(n, dtype=np.int8)
    cluster_of = np.empty(n, dtype=np.int32)
    start = 0
    for c in range(k):
        m = sizes[c]
        block = slice(start, start + m)
        X[block] = centers[c] + rng.normal(0.0, spec.noise_sd, size=(m, p))
        n_mci = m // 2
        y[block] = 0
        y[start : start + n_mci] = MCI
        cluster_of[block] = c
        impaired_cols = np.isin(domains, sorted(spec.impaired_domains[c]))
        mci_rows = np.arange(start, start + n_mci)
        X[np.ix_(mci_rows, np.flatnonzero(impaired_cols))] -= (
            spec.shift * spec.noise_sd
        )
        start += m

    order = rng.permutation(n)
    X, y, cluster_of = X[order], y[order], cluster_of[order]
    sample_ids = tuple(f"S{i + 1:05d}" for i in range(n))

    ds = CohortDataset(
        features=X, labels=y, descriptors=spec.descriptors, sample_ids=sample_ids
    )
    truth = SyntheticGroundTruth(
        cluster_of=cluster_of,
        impaired_domains=spec.impaired_domains,
        shift_magnitude=tuple(float(spec.shift) for _ in range(k)),
    )
    return ds, truth
