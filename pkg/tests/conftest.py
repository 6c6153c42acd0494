import os

# Single-threaded BLAS: faster at desk scale and keeps results identical when
# tests fan out across worker processes.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np
import pytest

from cogpatterns import SyntheticSpec, default_descriptors, generate_synthetic

PAPER_SHAPED_DOMAINS = (
    frozenset({"A", "E", "L", "M", "O", "V"}),
    frozenset({"A", "E"}),
    frozenset({"V", "A", "E"}),
)


def make_cohort(
    n_samples=240,
    n_clusters=3,
    features_per_domain=1,
    impaired=PAPER_SHAPED_DOMAINS,
    shift=1.2,
    seed=11,
    **kwargs,
):
    spec = SyntheticSpec(
        n_samples=n_samples,
        n_clusters=n_clusters,
        descriptors=default_descriptors(features_per_domain),
        impaired_domains=tuple(impaired[:n_clusters]),
        shift=shift,
        **kwargs,
    )
    return generate_synthetic(spec, seed)


@pytest.fixture
def small_cohort():
    ds, truth = make_cohort(n_samples=120, seed=3)
    return ds, truth


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
