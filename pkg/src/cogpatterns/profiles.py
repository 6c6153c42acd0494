"""Per-cluster statistical characterization and subtype labeling.

Within each cluster, every selected feature is compared CN vs MCI with the
Mann-Whitney U test (midranks, tie-corrected normal approximation with
continuity correction; an exact null distribution is available for small
untied samples). Effect sizes use Cohen's d with the pooled standard
deviation, banded as negligible/small/medium/large. A cluster's subtype label
follows from which cognitive domains contain significant large-effect
features: "amnestic" iff memory is affected, "multi-domain" iff at least two
domains are.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cohort import CohortDataset, DOMAINS
from .errors import InsufficientSamplesError, ParameterError
from .segmentation import ClusterAssignment
from .selection import FeatureMask

EFFECT_BANDS = ("negligible", "small", "medium", "large")

SUBTYPE_INDETERMINATE = "indeterminate"


# ---------------------------------------------------------------------------
# Rank statistics
# ---------------------------------------------------------------------------

def _midranks(values: np.ndarray) -> np.ndarray:
    """Ranks starting at 1; tied values share the mean of their ranks."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def mann_whitney_u(a, b) -> tuple[float, float]:
    """Two-sided Mann-Whitney U test; returns (U for sample a, p-value).

    U counts pairs where a exceeds b (ties count 1/2). The p-value uses the
    normal approximation with tie-corrected variance and a 0.5 continuity
    correction. When all pooled values are identical, U = n_a*n_b/2 and p = 1.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 1 or b.size < 1:
        raise ParameterError("both samples must be non-empty")
    na, nb = a.size, b.size
    pooled = np.concatenate([a, b])
    n = na + nb

    ranks = _midranks(pooled)
    u_a = float(ranks[:na].sum()) - na * (na + 1) / 2.0

    _, tie_counts = np.unique(pooled, return_counts=True)
    if tie_counts.max() == n:
        return na * nb / 2.0, 1.0
    tie_term = float((tie_counts.astype(np.float64) ** 3 - tie_counts).sum())
    sigma2 = (na * nb / 12.0) * ((n + 1) - tie_term / (n * (n - 1)))
    if sigma2 <= 0:
        return u_a, 1.0
    mu = na * nb / 2.0
    z = max(abs(u_a - mu) - 0.5, 0.0) / math.sqrt(sigma2)
    p = math.erfc(z / math.sqrt(2.0))
    return u_a, min(max(p, 0.0), 1.0)


def mann_whitney_exact_p(u: float, n_a: int, n_b: int) -> float:
    """Exact two-sided p-value for untied samples: 2 * P(U <= min tail), capped.

    The null distribution is enumerated by counting the subsets of ranks
    {1..n} of size n_a at each rank sum (dynamic program), which is feasible
    for n_a * n_b <= 400.
    """
    if n_a < 1 or n_b < 1:
        raise ParameterError("sample sizes must be >= 1")
    if n_a * n_b > 400:
        raise ParameterError("exact path limited to n_a * n_b <= 400")
    n = n_a + n_b
    max_w = n_a * n + 1
    # counts[k][w] = number of k-subsets of {1..r} with rank sum w
    counts = np.zeros((n_a + 1, max_w), dtype=np.float64)
    counts[0, 0] = 1.0
    for r in range(1, n + 1):
        for k in range(min(r, n_a), 0, -1):
            counts[k, r:] += counts[k - 1, : max_w - r]
    dist = counts[n_a]  # indexed by rank sum w
    offset = n_a * (n_a + 1) // 2  # U = W - offset
    total = dist.sum()
    u_min = min(u, n_a * n_b - u)
    tail = dist[: offset + int(math.floor(u_min)) + 1].sum()
    return min(1.0, 2.0 * tail / total)


# ---------------------------------------------------------------------------
# Effect sizes
# ---------------------------------------------------------------------------

def cohens_d(a, b) -> float:
    """Cohen's d = (mean(a) - mean(b)) / pooled sd (n-1 variances).

    Degenerate samples: equal constants give 0; different constants give a
    signed infinity sentinel (banded as "large").
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ParameterError("both samples need at least 2 values")
    na, nb = a.size, b.size
    va = a.var(ddof=1)
    vb = b.var(ddof=1)
    pooled = math.sqrt(((na - 1) * va + (nb - 1) * vb) / (na + nb - 2))
    diff = float(a.mean() - b.mean())
    if pooled == 0.0:
        if diff == 0.0:
            return 0.0
        return math.copysign(math.inf, diff)
    return diff / pooled


def interpret_effect(d: float) -> str:
    """Band |d| as negligible (<=0.2), small (<=0.5), medium (<=0.8), or large."""
    if math.isnan(d):
        raise ParameterError("effect size is NaN")
    ad = abs(d)
    if ad <= 0.2:
        return "negligible"
    if ad <= 0.5:
        return "small"
    if ad <= 0.8:
        return "medium"
    return "large"


def holm_significant(p_values, alpha: float) -> np.ndarray:
    """Holm step-down correction; True where the corrected test rejects."""
    p = np.asarray(p_values, dtype=np.float64)
    m = p.size
    out = np.zeros(m, dtype=bool)
    order = np.argsort(p, kind="stable")
    for rank, idx in enumerate(order):
        if p[idx] < alpha / (m - rank):
            out[idx] = True
        else:
            break
    return out


# ---------------------------------------------------------------------------
# Cluster profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureStat:
    feature_id: str
    u: float
    p_value: float
    significant: bool
    holm_significant: bool
    d: float
    effect_band: str


@dataclass(frozen=True)
class ClusterProfile:
    cluster_id: int
    n_cn: int
    n_mci: int
    stats: tuple[FeatureStat, ...]
    significant_features: tuple[str, ...]
    large_effect_features: tuple[str, ...]
    affected_domains: frozenset
    subtype: str


def subtype_label(affected_domains) -> str:
    """Subtype from the affected-domain set: {amnestic?} x {single/multi}."""
    domains = set(affected_domains)
    if not domains:
        return SUBTYPE_INDETERMINATE
    unknown = domains - set(DOMAINS)
    if unknown:
        raise ParameterError(f"unknown domain codes: {sorted(unknown)}")
    memory = "amnestic" if "M" in domains else "non-amnestic"
    breadth = "multi-domain" if len(domains) >= 2 else "single-domain"
    return f"{memory} {breadth}"


def characterize_cluster(
    ds: CohortDataset,
    assignment: ClusterAssignment,
    cluster_id: int,
    mask: FeatureMask,
    alpha: float = 0.05,
) -> ClusterProfile:
    """Statistical CN-vs-MCI comparison of one cluster over the masked features.

    Cohen's d is computed for every masked feature, but only features that are
    both significant at ``alpha`` and banded "large" enter the large-effect
    set that drives the domain summary and subtype label.
    """
    if not 0 <= cluster_id < assignment.n_clusters:
        raise ParameterError(f"cluster {cluster_id} does not exist")
    rows = assignment.cluster_of == cluster_id
    y = ds.labels[rows]
    X = ds.features[rows]
    n_cn = int(np.sum(y == 0))
    n_mci = int(np.sum(y == 1))
    if n_cn < 2 or n_mci < 2:
        raise InsufficientSamplesError(
            f"cluster {cluster_id} has {n_cn} CN / {n_mci} MCI samples; "
            f"need at least 2 of each"
        )

    columns = mask.indices
    p_values = []
    stats = []
    for j in columns:
        cn_vals = X[y == 0, j]
        mci_vals = X[y == 1, j]
        u, p = mann_whitney_u(cn_vals, mci_vals)
        d = cohens_d(cn_vals, mci_vals)
        stats.append((ds.descriptors[j], u, p, d))
        p_values.append(p)
    holm = holm_significant(p_values, alpha)

    feature_stats = tuple(
        FeatureStat(
            feature_id=desc.id,
            u=u,
            p_value=p,
            significant=p < alpha,
            holm_significant=bool(h),
            d=d,
            effect_band=interpret_effect(d),
        )
        for (desc, u, p, d), h in zip(stats, holm)
    )
    significant = tuple(s.feature_id for s in feature_stats if s.significant)
    large = tuple(
        s.feature_id
        for s in feature_stats
        if s.significant and s.effect_band == "large"
    )
    domain_of = {d.id: d.domain for d in ds.descriptors}
    affected = frozenset(domain_of[f] for f in large)
    return ClusterProfile(
        cluster_id=cluster_id,
        n_cn=n_cn,
        n_mci=n_mci,
        stats=feature_stats,
        significant_features=significant,
        large_effect_features=large,
        affected_domains=affected,
        subtype=subtype_label(affected),
    )


# ---------------------------------------------------------------------------
# Within-cluster CN/MCI gradation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GradationScore:
    cluster_id: int
    rank_biserial: float
    p_value: float


def gradation_summary(
    coords: np.ndarray, assignment: ClusterAssignment, labels: np.ndarray
) -> tuple[GradationScore, ...]:
    """Quantify the CN-to-MCI gradient inside each cluster.

    Cluster samples are projected onto their first principal axis in embedding
    space; the rank-biserial correlation (from the Mann-Whitney U between CN
    and MCI projections) measures how strongly the label orders along the
    axis: |r| = 1 means complete separation, 0 means none.
    """
    coords = np.asarray(coords, dtype=np.float64)
    labels = np.asarray(labels)
    scores = []
    for cluster in range(assignment.n_clusters):
        rows = assignment.cluster_of == cluster
        pts = coords[rows]
        y = labels[rows]
        n_cn = int(np.sum(y == 0))
        n_mci = int(np.sum(y == 1))
        if n_cn == 0 or n_mci == 0 or len(pts) < 2:
            scores.append(GradationScore(cluster, 0.0, 1.0))
            continue
        centered = pts - pts.mean(axis=0)
        cov = centered.T @ centered / max(len(pts) - 1, 1)
        eigvals, eigvecs = np.linalg.eigh(cov)
        axis = eigvecs[:, int(np.argmax(eigvals))]
        if axis[0] < 0 or (axis[0] == 0 and axis[1] < 0):
            axis = -axis  # deterministic orientation
        proj = centered @ axis
        u, p = mann_whitney_u(proj[y == 0], proj[y == 1])
        r = 2.0 * u / (n_cn * n_mci) - 1.0
        scores.append(GradationScore(cluster, float(r), p))
    return tuple(scores)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def profile_to_json(profile: ClusterProfile, gradation: GradationScore | None) -> dict:
    obj = {
        "cluster": profile.cluster_id,
        "n_cn": profile.n_cn,
        "n_mci": profile.n_mci,
        "subtype": profile.subtype,
        "affected_domains": sorted(profile.affected_domains),
        "significant_features": list(profile.significant_features),
        "large_effect_features": list(profile.large_effect_features),
        "stats": [
            {
                "feature": s.feature_id,
                "u": s.u,
                "p_value": s.p_value,
                "significant": s.significant,
                "holm_significant": s.holm_significant,
                "d": s.d,
                "effect_band": s.effect_band,
            }
            for s in profile.stats
        ],
    }
    if gradation is not None:
        obj["gradation"] = {
            "rank_biserial": gradation.rank_biserial,
            "p_value": gradation.p_value,
        }
    return obj


def render_profile_table(profiles, descriptors) -> str:
    """Human-readable large-effect summary, one row per cluster."""
    domain_of = {d.id: d.domain for d in descriptors}
    lines = ["Large-effect features per cluster", "=" * 34, ""]
    for prof in profiles:
        if isinstance(prof, ClusterProfile):
            feats = ", ".join(
                f"{fid} ({domain_of[fid]})" for fid in prof.large_effect_features
            )
            lines.append(
                f"C{prof.cluster_id + 1} [{prof.subtype}] "
                f"(CN {prof.n_cn} / MCI {prof.n_mci}): {feats or '-'}"
            )
        else:  # undersized cluster recorded as indeterminate
            cluster_id, reason = prof
            lines.append(f"C{cluster_id + 1} [indeterminate]: {reason}")
    return "\n".join(lines) + "\n"
