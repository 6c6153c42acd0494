import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cogpatterns import (
    CohortDataset,
    FeatureMask,
    characterize_cluster,
    cohens_d,
    default_descriptors,
    gradation_summary,
    interpret_effect,
    mann_whitney_exact_p,
    mann_whitney_u,
    subtype_label,
)
from cogpatterns.errors import InsufficientSamplesError, ParameterError
from cogpatterns.profiles import holm_significant
from cogpatterns.segmentation import ClusterAssignment, ClusterCensus


def brute_force_two_sided_p(a, b):
    """Oracle: enumerate every labeling of the pooled values."""
    pooled = np.concatenate([a, b])
    n, na = len(pooled), len(a)

    def u_of(indices):
        chosen = set(indices)
        xs = [pooled[i] for i in chosen]
        ys = [pooled[i] for i in range(n) if i not in chosen]
        return sum((x > y) + 0.5 * (x == y) for x in xs for y in ys)

    u_obs = u_of(range(na))
    u_min = min(u_obs, na * (n - na) - u_obs)
    total = 0
    tail = 0
    for combo in itertools.combinations(range(n), na):
        total += 1
        if u_of(combo) <= u_min + 1e-9:
            tail += 1
    return u_obs, min(1.0, 2.0 * tail / total)


finite_samples = st.lists(
    st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), min_size=1, max_size=30
)


class TestMannWhitney:
    def test_a_fully_below_b(self):
        u, _ = mann_whitney_u([1, 2, 3], [4, 5, 6])
        assert u == 0.0

    def test_identical_multisets(self):
        u, p = mann_whitney_u([1, 2, 2, 7], [2, 7, 1, 2])
        assert u == 8.0  # n^2 / 2
        assert p == 1.0

    def test_all_values_identical(self):
        u, p = mann_whitney_u([3, 3], [3, 3, 3])
        assert u == 3.0
        assert p == 1.0

    def test_empty_sample_rejected(self):
        with pytest.raises(ParameterError):
            mann_whitney_u([], [1.0])

    def test_normal_approx_close_to_enumeration(self, rng):
        for _ in range(20):
            na, nb = rng.integers(5, 7, size=2)
            a = rng.normal(size=na)
            b = rng.normal(size=nb) + rng.normal() * 0.8
            u, p_norm = mann_whitney_u(a, b)
            u_brute, p_brute = brute_force_two_sided_p(a, b)
            assert u == u_brute
            assert abs(p_norm - p_brute) <= 0.03

    def test_exact_path_matches_enumeration(self, rng):
        for _ in range(20):
            na, nb = rng.integers(2, 7, size=2)
            a = rng.normal(size=na)
            b = rng.normal(size=nb)
            u, _ = mann_whitney_u(a, b)
            _, p_brute = brute_force_two_sided_p(a, b)
            assert mann_whitney_exact_p(u, na, nb) == pytest.approx(p_brute, abs=1e-12)

    def test_exact_path_size_guard(self):
        with pytest.raises(ParameterError):
            mann_whitney_exact_p(10.0, 30, 30)

    @settings(max_examples=60, deadline=None)
    @given(finite_samples, finite_samples)
    def test_u_statistics_sum_to_product(self, a, b):
        u_a, _ = mann_whitney_u(a, b)
        u_b, _ = mann_whitney_u(b, a)
        assert u_a + u_b == pytest.approx(len(a) * len(b), abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(st.floats(min_value=-50, max_value=50, allow_nan=False),
                 min_size=2, max_size=15),
        st.lists(st.floats(min_value=-50, max_value=50, allow_nan=False),
                 min_size=2, max_size=15),
    )
    def test_p_invariant_under_exact_scaling(self, a, b):
        # Power-of-two scaling is exact in binary floating point, so it is
        # strictly increasing on the representable values themselves.
        _, p_raw = mann_whitney_u(a, b)
        _, p_mapped = mann_whitney_u(8.0 * np.asarray(a), 8.0 * np.asarray(b))
        assert p_raw == p_mapped

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(st.integers(min_value=-50_000, max_value=50_000),
                 min_size=2, max_size=15),
        st.lists(st.integers(min_value=-50_000, max_value=50_000),
                 min_size=2, max_size=15),
    )
    def test_p_invariant_under_increasing_transform(self, a, b):
        # Coarse grid keeps exp injective in float64 (no collapsed ties).
        a = np.asarray(a, dtype=np.float64) / 1000.0
        b = np.asarray(b, dtype=np.float64) / 1000.0
        _, p_raw = mann_whitney_u(a, b)
        _, p_mapped = mann_whitney_u(np.exp(a / 25.0), np.exp(b / 25.0))
        assert p_raw == p_mapped


class TestCohensD:
    def test_hand_computed_value(self):
        # a = [0, 2]: mean 1, var 2; b = [-1, 1]: mean 0, var 2.
        # s_pooled = sqrt((2 + 2)/2) = sqrt(2); d = 1/sqrt(2).
        assert cohens_d([0, 2], [-1, 1]) == pytest.approx(1 / math.sqrt(2), abs=1e-15)

    def test_identical_samples(self):
        assert cohens_d([1.5, 2.5, 3.0], [1.5, 2.5, 3.0]) == 0.0

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(st.floats(min_value=-100, max_value=100, allow_nan=False),
                 min_size=2, max_size=12),
        st.lists(st.floats(min_value=-100, max_value=100, allow_nan=False),
                 min_size=2, max_size=12),
    )
    def test_antisymmetry(self, a, b):
        assert cohens_d(a, b) == -cohens_d(b, a)

    def test_scale_and_shift_invariance(self, rng):
        a = rng.normal(size=10)
        b = rng.normal(size=12) + 0.5
        base = cohens_d(a, b)
        assert cohens_d(3.0 * a + 7.0, 3.0 * b + 7.0) == pytest.approx(
            base, abs=1e-12
        )

    def test_degenerate_unequal_constants_is_infinite(self):
        d = cohens_d([2.0, 2.0], [1.0, 1.0])
        assert math.isinf(d) and d > 0
        assert interpret_effect(d) == "large"
        d_neg = cohens_d([1.0, 1.0], [2.0, 2.0])
        assert math.isinf(d_neg) and d_neg < 0

    def test_too_small_samples_rejected(self):
        with pytest.raises(ParameterError):
            cohens_d([1.0], [1.0, 2.0])


class TestEffectBands:
    @pytest.mark.parametrize(
        "d,band",
        [
            (0.2, "negligible"),
            (0.5, "small"),
            (0.8, "medium"),
            (-0.81, "large"),
            (0.0, "negligible"),
            (-0.2, "negligible"),
        ],
    )
    def test_quoted_thresholds(self, d, band):
        assert interpret_effect(d) == band

    @settings(max_examples=100, deadline=None)
    @given(st.floats(min_value=-5, max_value=5, allow_nan=False))
    def test_band_is_step_function_of_absolute_value(self, d):
        band = interpret_effect(d)
        ad = abs(d)
        if ad <= 0.2:
            assert band == "negligible"
        elif ad <= 0.5:
            assert band == "small"
        elif ad <= 0.8:
            assert band == "medium"
        else:
            assert band == "large"

    def test_nan_rejected(self):
        with pytest.raises(ParameterError):
            interpret_effect(float("nan"))


class TestSubtypeRule:
    def test_all_domains_is_amnestic_multi(self):
        assert subtype_label({"A", "E", "L", "M", "O", "V"}) == "amnestic multi-domain"

    def test_attention_executive_is_non_amnestic_multi(self):
        assert subtype_label({"A", "E"}) == "non-amnestic multi-domain"

    def test_visuospatial_attention_executive_is_non_amnestic_multi(self):
        assert subtype_label({"V", "A", "E"}) == "non-amnestic multi-domain"

    def test_memory_only_is_amnestic_single(self):
        assert subtype_label({"M"}) == "amnestic single-domain"

    def test_single_non_memory_domain(self):
        assert subtype_label({"L"}) == "non-amnestic single-domain"

    def test_empty_is_indeterminate(self):
        assert subtype_label(set()) == "indeterminate"

    def test_unknown_domain_rejected(self):
        with pytest.raises(ParameterError):
            subtype_label({"X"})


def planted_cluster_dataset(rng, n=400, effect_domains=("M",), shift=1.5):
    """One cluster; features of effect_domains shifted down for MCI."""
    descriptors = default_descriptors(1)
    labels = np.tile([0, 1], n // 2).astype(np.int8)
    X = rng.normal(size=(n, len(descriptors)))
    for j, desc in enumerate(descriptors):
        if desc.domain in effect_domains:
            X[labels == 1, j] -= shift
    ds = CohortDataset(
        features=X,
        labels=labels,
        descriptors=descriptors,
        sample_ids=tuple(f"s{i}" for i in range(n)),
    )
    assignment = ClusterAssignment(
        cluster_of=np.zeros(n, dtype=np.int32),
        n_clusters=1,
        census=(ClusterCensus(0, int((labels == 0).sum()), int((labels == 1).sum())),),
    )
    return ds, assignment


class TestCharacterizeCluster:
    def full_mask(self, ds):
        return FeatureMask(np.ones(ds.n_features, dtype=bool))

    @pytest.mark.parametrize(
        "domains,label",
        [
            (("A", "E", "L", "M", "O", "V"), "amnestic multi-domain"),
            (("A", "E"), "non-amnestic multi-domain"),
            (("M",), "amnestic single-domain"),
        ],
    )
    def test_planted_domains_yield_expected_subtype(self, rng, domains, label):
        ds, assignment = planted_cluster_dataset(rng, effect_domains=domains)
        profile = characterize_cluster(ds, assignment, 0, self.full_mask(ds))
        assert profile.affected_domains == frozenset(domains)
        assert profile.subtype == label

    def test_large_effects_are_subset_of_significant(self, rng):
        ds, assignment = planted_cluster_dataset(rng, effect_domains=("M", "V"),
                                                 shift=0.6)
        profile = characterize_cluster(ds, assignment, 0, self.full_mask(ds))
        assert set(profile.large_effect_features) <= set(profile.significant_features)
        for stat in profile.stats:
            if stat.feature_id in profile.large_effect_features:
                assert stat.significant and stat.effect_band == "large"

    def test_d_sign_convention_positive_for_impairment(self, rng):
        ds, assignment = planted_cluster_dataset(rng, effect_domains=("M",))
        profile = characterize_cluster(ds, assignment, 0, self.full_mask(ds))
        m_stat = next(s for s in profile.stats
                      if s.feature_id == ds.descriptors[
                          [d.domain for d in ds.descriptors].index("M")].id)
        assert m_stat.d > 0  # CN minus MCI: lower MCI scores give positive d

    def test_mask_restricts_the_analysis(self, rng):
        ds, assignment = planted_cluster_dataset(rng, effect_domains=("M",))
        mask = FeatureMask.from_indices([0, 1], ds.n_features)
        profile = characterize_cluster(ds, assignment, 0, mask)
        assert len(profile.stats) == 2
        reported = {s.feature_id for s in profile.stats}
        assert reported == {ds.descriptors[0].id, ds.descriptors[1].id}

    def test_undersized_cluster_raises_with_cluster_name(self, rng):
        ds, assignment = planted_cluster_dataset(rng, n=10)
        tiny = ClusterAssignment(
            cluster_of=np.where(np.arange(10) < 3, 0, -1).astype(np.int32),
            n_clusters=1,
            census=(ClusterCensus(0, 2, 1),),
        )
        with pytest.raises(InsufficientSamplesError) as err:
            characterize_cluster(ds, tiny, 0, self.full_mask(ds))
        assert "cluster 0" in str(err.value)

    def test_row_permutation_invariance(self, rng):
        ds, assignment = planted_cluster_dataset(rng, n=120, effect_domains=("A",))
        profile = characterize_cluster(ds, assignment, 0, self.full_mask(ds))
        perm = rng.permutation(ds.n_samples)
        shuffled = CohortDataset(
            features=ds.features[perm],
            labels=ds.labels[perm],
            descriptors=ds.descriptors,
            sample_ids=tuple(ds.sample_ids[i] for i in perm),
        )
        profile2 = characterize_cluster(shuffled, assignment, 0, self.full_mask(ds))
        assert profile.subtype == profile2.subtype
        for s1, s2 in zip(profile.stats, profile2.stats):
            assert s1.u == s2.u
            assert s1.p_value == s2.p_value
            assert s1.d == pytest.approx(s2.d, abs=1e-12)

    def test_holm_column_reported_but_not_driving_subtype(self, rng):
        ds, assignment = planted_cluster_dataset(rng, effect_domains=("M",))
        profile = characterize_cluster(ds, assignment, 0, self.full_mask(ds))
        assert all(hasattr(s, "holm_significant") for s in profile.stats)
        holm = holm_significant([s.p_value for s in profile.stats], 0.05)
        for stat, h in zip(profile.stats, holm):
            assert stat.holm_significant == bool(h)


class TestGradation:
    def make_assignment(self, n):
        return ClusterAssignment(
            cluster_of=np.zeros(n, dtype=np.int32),
            n_clusters=1,
            census=(ClusterCensus(0, n // 2, n - n // 2),),
        )

    def test_perfect_separation_gives_unit_rank_biserial(self):
        n = 60
        coords = np.column_stack([np.linspace(0, 10, n), np.zeros(n)])
        labels = (np.arange(n) >= n // 2).astype(np.int8)  # CN left, MCI right
        scores = gradation_summary(coords, self.make_assignment(n), labels)
        assert abs(scores[0].rank_biserial) == pytest.approx(1.0)
        assert scores[0].p_value < 1e-6

    def test_shuffled_labels_calibrate_to_null(self):
        n = 80
        rng = np.random.default_rng(5)
        coords = rng.normal(size=(n, 2))
        p_values, r_values = [], []
        for _ in range(200):
            labels = rng.permutation(np.tile([0, 1], n // 2)).astype(np.int8)
            score = gradation_summary(coords, self.make_assignment(n), labels)[0]
            p_values.append(score.p_value)
            r_values.append(score.rank_biserial)
        from scipy.stats import kstest

        assert kstest(p_values, "uniform").pvalue > 0.01
        assert abs(np.mean(r_values)) < 0.05

    def test_planted_gradient_detected(self):
        rng = np.random.default_rng(9)
        n = 300
        coords = np.column_stack([rng.normal(size=n) * 3, rng.normal(size=n)])
        prob = 1.0 / (1.0 + np.exp(-coords[:, 0]))
        labels = (rng.random(n) < prob).astype(np.int8)
        scores = gradation_summary(coords, self.make_assignment(n), labels)
        assert abs(scores[0].rank_biserial) >= 0.3

    def test_degenerate_identical_points(self):
        n = 20
        coords = np.zeros((n, 2))
        labels = np.tile([0, 1], n // 2).astype(np.int8)
        score = gradation_summary(coords, self.make_assignment(n), labels)[0]
        assert score.rank_biserial == 0.0
        assert score.p_value == 1.0
