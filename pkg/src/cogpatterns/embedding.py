"""2-D embedding of the selected features via t-SNE.

High-dimensional affinities are Gaussian with per-point bandwidths calibrated
by binary search to a target perplexity; the low-dimensional kernel is the
Student-t with one degree of freedom. The optimizer is plain gradient descent
with momentum and early exaggeration, returning the recorded iterate with the
lowest KL divergence rather than the last one.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailureError, ParameterError

_BETA_MAX = 0.5e24  # bandwidth floor sigma >= 1e-12  (beta = 1 / (2 sigma^2))


@dataclass(frozen=True)
class TsneParams:
    perplexity: float = 30.0
    n_iter: int = 1000
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    momentum_switch_iter: int = 250
    seed: int = 0
    record_every: int = 1

    def validate(self, n_samples: int) -> None:
        if not 0 < self.perplexity <= n_samples - 1:
            raise ParameterError(
                f"perplexity {self.perplexity} infeasible for n={n_samples}; "
                f"need 0 < perplexity <= n - 1"
            )
        if 3 * self.perplexity >= n_samples:
            warnings.warn(
                f"perplexity {self.perplexity} is large for n={n_samples} "
                f"(recommended 3*perplexity < n)",
                stacklevel=2,
            )
        if self.n_iter < 1 or self.learning_rate <= 0 or self.record_every < 1:
            raise ParameterError("n_iter, learning_rate, record_every must be positive")
        if self.early_exaggeration < 1:
            raise ParameterError("early_exaggeration must be >= 1")
        for m in (self.momentum_early, self.momentum_late):
            if not 0 <= m < 1:
                raise ParameterError("momentum must lie in [0, 1)")


@dataclass(frozen=True)
class Embedding2D:
    coords: np.ndarray      # (n, 2)
    kl_trace: np.ndarray    # (k, 2): [iteration, KL]
    params: TsneParams


def _squared_distances(X: np.ndarray) -> np.ndarray:
    ss = np.einsum("ij,ij->i", X, X)
    d2 = ss[:, None] + ss[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def conditional_affinities(
    X: np.ndarray, perplexity: float, rel_tol: float = 1e-4, max_steps: int = 100
) -> np.ndarray:
    """Per-row conditional Gaussian affinities with calibrated entropies.

    Each row's Gaussian precision is bisected until exp(H(P_i)) matches the
    perplexity within ``rel_tol`` (relative). Rows whose target is unreachable
    (exact duplicates, fully degenerate geometry) keep the closest achievable
    distribution. Row i sums to 1 and has a zero diagonal.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise ParameterError("need at least 2 points")
    if not 0 < perplexity <= n - 1:
        raise ParameterError(
            f"perplexity {perplexity} infeasible for n={n}; need 0 < perplexity <= n - 1"
        )
    d2 = _squared_distances(X)
    target = math.log(perplexity)
    cond = np.zeros((n, n))
    for i in range(n):
        row = np.delete(d2[i], i)
        row = row - row.min()  # exp shift; cancels in the normalized kernel
        beta_lo, beta_hi = 0.0, math.inf
        beta = 1.0
        h_prev = math.inf
        for _ in range(max_steps):
            w = np.exp(-beta * row)
            sw = w.sum()
            # H = log(sum w) + beta * sum(d * w) / sum w  (entropy in nats)
            h = math.log(sw) + beta * float((row * w).sum()) / sw
            if abs(math.exp(h) - perplexity) <= rel_tol * perplexity:
                break
            if h > target:  # too spread out -> raise precision
                if beta_hi == math.inf and abs(h - h_prev) < 1e-12:
                    # Entropy has stopped responding: the target is below the
                    # floor set by tied neighbors. Escalating further would
                    # only amplify float noise in the distances.
                    break
                beta_lo = beta
                beta = beta * 2.0 if beta_hi == math.inf else 0.5 * (beta + beta_hi)
            else:
                beta_hi = beta
                beta = beta / 2.0 if beta_lo == 0.0 else 0.5 * (beta + beta_lo)
            if beta >= _BETA_MAX:
                beta = _BETA_MAX
                break
            h_prev = h
        w = np.exp(-beta * row)
        p_row = w / w.sum()
        cond[i, :i] = p_row[:i]
        cond[i, i + 1 :] = p_row[i:]
    return cond


def pairwise_affinities(
    X: np.ndarray, perplexity: float, rel_tol: float = 1e-4, max_steps: int = 100
) -> np.ndarray:
    """Symmetrized t-SNE input affinities P = (P_cond + P_cond^T) / (2n).

    Symmetric with entries >= 0, total sum 1; see conditional_affinities for
    the per-row entropy calibration.
    """
    cond = conditional_affinities(X, perplexity, rel_tol=rel_tol, max_steps=max_steps)
    return (cond + cond.T) / (2.0 * cond.shape[0])


def _tsne_kernel(Y: np.ndarray):
    d2 = _squared_distances(Y)
    w = 1.0 / (1.0 + d2)
    np.fill_diagonal(w, 0.0)
    return d2, w, float(w.sum())


def kl_divergence(P: np.ndarray, Y: np.ndarray) -> float:
    """KL(P || Q(Y)) with the Student-t low-dimensional kernel."""
    d2, _, sw = _tsne_kernel(Y)
    mask = P > 0
    plogp = float(np.sum(P[mask] * np.log(P[mask])))
    return plogp + float(np.sum(P * np.log1p(d2))) + math.log(sw)


def tsne_gradient(P: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Analytic gradient of KL(P || Q(Y)) with respect to Y."""
    _, w, sw = _tsne_kernel(Y)
    g = (P - w / sw) * w
    return 4.0 * (g.sum(axis=1)[:, None] * Y - g @ Y)


def tsne(X: np.ndarray, params: TsneParams) -> Embedding2D:
    """Embed rows of X into 2-D. Deterministic given (X, params).

    Gradient descent on KL(P||Q) with momentum and early exaggeration; the
    KL divergence against the true (un-exaggerated) P is recorded every
    ``record_every`` iterations and the best recorded iterate is returned.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    params.validate(n)

    P = pairwise_affinities(X, params.perplexity)
    mask = P > 0
    plogp = float(np.sum(P[mask] * np.log(P[mask])))
    P_ex = P * params.early_exaggeration

    rng = np.random.default_rng(params.seed)
    Y = rng.normal(0.0, 1e-4, size=(n, 2))
    velocity = np.zeros_like(Y)

    trace: list[tuple[int, float]] = []
    best_kl = math.inf
    best_it = 0
    best_Y = Y.copy()

    for it in range(params.n_iter):
        p_eff = P_ex if it < params.exaggeration_iters else P
        d2, w, sw = _tsne_kernel(Y)
        g = (p_eff - w / sw) * w
        grad = 4.0 * (g.sum(axis=1)[:, None] * Y - g @ Y)
        if not np.all(np.isfinite(grad)):
            raise NumericalFailureError(
                f"non-finite t-SNE gradient at iteration {it}", iteration=it
            )
        momentum = (
            params.momentum_early
            if it < params.momentum_switch_iter
            else params.momentum_late
        )
        velocity = momentum * velocity - params.learning_rate * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)

        if it % params.record_every == 0 or it == params.n_iter - 1:
            d2, _, sw = _tsne_kernel(Y)
            kl = plogp + float(np.sum(P * np.log1p(d2))) + math.log(sw)
            trace.append((it, kl))
            if kl < best_kl:
                best_kl = kl
                best_it = it
                best_Y = Y.copy()

    # The last trace row repeats the returned (best recorded) iterate, so the
    # trace ends at the KL of the coordinates actually returned.
    trace.append((best_it, best_kl))
    return Embedding2D(
        coords=best_Y,
        kl_trace=np.array(trace, dtype=np.float64),
        params=params,
    )


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def save_embedding_csv(emb: Embedding2D, sample_ids, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("sample_id,x,y\n")
        for sid, (x, y) in zip(sample_ids, emb.coords):
            fh.write(f"{sid},{float(x)!r},{float(y)!r}\n")


def load_embedding_csv(path):
    """Read back a sample_id,x,y file; returns (ids, coords)."""
    ids, xs, ys = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "sample_id,x,y":
            raise ParameterError(f"unexpected embedding header {header!r}")
        for line in fh:
            sid, x, y = line.rstrip("\n").split(",")
            ids.append(sid)
            xs.append(float(x))
            ys.append(float(y))
    return tuple(ids), np.column_stack([xs, ys])


_SVG_COLORS = {0: "#1f77b4", 1: "#d62728"}  # CN blue, MCI red


def scatter_svg(coords: np.ndarray, labels, path, size: int = 640) -> None:
    """Write a label-colored scatter plot with one <circle> per sample."""
    coords = np.asarray(coords, dtype=np.float64)
    labels = np.asarray(labels)
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    margin, radius = 20, 2.5
    scale = (size - 2 * margin) / span
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    for (x, y), lab in zip(coords, labels):
        cx = margin + (x - lo[0]) * scale[0]
        cy = size - margin - (y - lo[1]) * scale[1]
        lines.append(
            f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{radius}" '
            f'fill="{_SVG_COLORS[int(lab)]}" fill-opacity="0.6"/>'
        )
    lines.append(
        f'<text x="{margin}" y="{margin - 6}" font-family="sans-serif" '
        f'font-size="12">CN = blue, MCI = red (n = {len(coords)})</text>'
    )
    lines.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
