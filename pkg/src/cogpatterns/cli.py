"""Pipeline orchestration and command-line interface.

Subcommands: ``generate | select | embed | segment | profile | run``. Every
stage reads and writes files under the configured output directory, all
randomness derives from the single master seed, and ``run`` emits a manifest
with content hashes so identical configurations can be verified to reproduce
identical outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, cohort, embedding, profiles, segmentation, selection
from .classifiers import KINDS, ClassifierKind
from .errors import CogpatternsError, ConfigError
from .util import derive_seed, file_sha256

_PAPER_SHAPED_DOMAINS = (
    ("A", "E", "L", "M", "O", "V"),
    ("A", "E"),
    ("V", "A", "E"),
)


@dataclass
class GenerateConfig:
    n_samples: int = 600
    n_clusters: int = 3
    features_per_domain: int = 2
    impaired_domains: tuple = _PAPER_SHAPED_DOMAINS
    shift: float = 1.0
    noise_sd: float = 1.0
    center_spacing_sd: float = 6.0


@dataclass
class SelectConfig:
    k_folds: int = 10
    min_gain: float = 0.001
    max_subset_size: int | None = None
    standardize: bool = True
    kinds: tuple = KINDS


@dataclass
class EmbedConfig:
    perplexity: float = 30.0
    n_iter: int = 1000
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    momentum_switch_iter: int = 250
    record_every: int = 10


@dataclass
class SegmentConfig:
    resolution: int | None = None  # None: auto-scale as ~3.5*sqrt(n), <= 512
    margin_frac: float = 0.02
    closing_radius: int = 2
    min_cluster_size: int | None = None
    markers: tuple = ()          # ((x, y), ...) in embedding coordinates
    connectivity: int = 8


@dataclass
class ProfileConfig:
    alpha: float = 0.05


@dataclass
class PipelineConfig:
    seed: int = 0
    threads: int = 1
    out_dir: str = "runs/out"
    cohort_csv: str | None = None
    schema: str | None = None
    generate: GenerateConfig = field(default_factory=GenerateConfig)
    select: SelectConfig = field(default_factory=SelectConfig)
    embed: EmbedConfig = field(default_factory=EmbedConfig)
    segment: SegmentConfig = field(default_factory=SegmentConfig)
    profile: ProfileConfig = field(default_factory=ProfileConfig)

    @classmethod
    def from_dict(cls, obj: dict) -> "PipelineConfig":
        sections = {
            "generate": GenerateConfig,
            "select": SelectConfig,
            "embed": EmbedConfig,
            "segment": SegmentConfig,
            "profile": ProfileConfig,
        }
        top_fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - top_fields
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in obj.items():
            if key in sections:
                section_cls = sections[key]
                names = {f.name for f in dataclasses.fields(section_cls)}
                extra = set(value) - names
                if extra:
                    raise ConfigError(f"unknown keys in [{key}]: {sorted(extra)}")
                coerced = {
                    k: tuple(tuple(m) if isinstance(m, list) else m for m in v)
                    if isinstance(v, list)
                    else v
                    for k, v in value.items()
                }
                kwargs[key] = section_cls(**coerced)
            else:
                kwargs[key] = value
        config = cls(**kwargs)
        for path in (config.cohort_csv, config.schema):
            if path is not None and not Path(path).exists():
                raise ConfigError(f"configured input file does not exist: {path}")
        return config

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))


# ---------------------------------------------------------------------------
# Stage implementations
# ---------------------------------------------------------------------------

def _out(config: PipelineConfig, name: str) -> Path:
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / name


def _wrapper_config(config: PipelineConfig) -> selection.WrapperConfig:
    return selection.WrapperConfig(
        k_folds=config.select.k_folds,
        seed=derive_seed(config.seed, "select"),
        min_gain=config.select.min_gain,
        max_subset_size=config.select.max_subset_size,
        kinds=tuple(ClassifierKind(tag) for tag in config.select.kinds),
        n_workers=config.threads,
    )


def _load_cohort(config: PipelineConfig) -> cohort.CohortDataset:
    csv_path = config.cohort_csv or _out(config, "cohort.csv")
    schema_path = config.schema or _out(config, "schema.json")
    for path in (csv_path, schema_path):
        if not Path(path).exists():
            raise ConfigError(
                f"cohort input {path} not found; run `generate` first or point "
                f"cohort_csv/schema at existing files"
            )
    return cohort.load_cohort(csv_path, schema_path)


def stage_generate(config: PipelineConfig) -> dict:
    g = config.generate
    spec = cohort.SyntheticSpec(
        n_samples=g.n_samples,
        n_clusters=g.n_clusters,
        descriptors=cohort.default_descriptors(g.features_per_domain),
        impaired_domains=tuple(frozenset(d) for d in g.impaired_domains),
        shift=g.shift,
        noise_sd=g.noise_sd,
        center_spacing_sd=g.center_spacing_sd,
    )
    ds, truth = cohort.generate_synthetic(spec, derive_seed(config.seed, "generate"))
    paths = {
        "cohort.csv": _out(config, "cohort.csv"),
        "schema.json": _out(config, "schema.json"),
        "ground_truth.json": _out(config, "ground_truth.json"),
    }
    cohort.save_cohort(ds, paths["cohort.csv"])
    cohort.save_schema(ds.descriptors, paths["schema.json"])
    with open(paths["ground_truth.json"], "w", encoding="utf-8") as fh:
        json.dump(truth.to_json(), fh, indent=2)
        fh.write("\n")
    return paths


def stage_select(config: PipelineConfig) -> dict:
    ds = _load_cohort(config)
    if config.select.standardize:
        ds = cohort.standardize(ds)
    report = selection.run_ensemble_selection(ds, _wrapper_config(config))
    if report.consensus.count == 0:
        raise ConfigError("empty consensus: no classifier selected any feature")
    path = _out(config, "selection_report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2)
        fh.write("\n")
    return {"selection_report.json": path}


def _load_selection(config: PipelineConfig) -> selection.SelectionReport:
    path = _out(config, "selection_report.json")
    if not Path(path).exists():
        raise ConfigError(f"selection report {path} not found; run `select` first")
    with open(path, "r", encoding="utf-8") as fh:
        return selection.SelectionReport.from_json(json.load(fh))


def stage_embed(config: PipelineConfig) -> dict:
    ds = _load_cohort(config)
    report = _load_selection(config)
    if report.consensus.count == 0:
        raise ConfigError("consensus mask is empty; cannot embed")
    if tuple(report.feature_ids) != ds.feature_ids:
        raise ConfigError("selection report does not match the cohort schema")
    masked = cohort.standardize(ds.select_features(report.consensus.indices))
    e = config.embed
    params = embedding.TsneParams(
        perplexity=e.perplexity,
        n_iter=e.n_iter,
        learning_rate=e.learning_rate,
        early_exaggeration=e.early_exaggeration,
        exaggeration_iters=e.exaggeration_iters,
        momentum_early=e.momentum_early,
        momentum_late=e.momentum_late,
        momentum_switch_iter=e.momentum_switch_iter,
        seed=derive_seed(config.seed, "embed"),
        record_every=e.record_every,
    )
    emb = embedding.tsne(masked.features, params)
    paths = {
        "embedding.csv": _out(config, "embedding.csv"),
        "scatter.svg": _out(config, "scatter.svg"),
    }
    embedding.save_embedding_csv(emb, ds.sample_ids, paths["embedding.csv"])
    embedding.scatter_svg(emb.coords, ds.labels, paths["scatter.svg"])
    return paths


def stage_segment(config: PipelineConfig) -> dict:
    ds = _load_cohort(config)
    emb_path = _out(config, "embedding.csv")
    if not Path(emb_path).exists():
        raise ConfigError(f"embedding {emb_path} not found; run `embed` first")
    ids, coords = embedding.load_embedding_csv(emb_path)
    if ids != ds.sample_ids:
        raise ConfigError("embedding sample ids do not match the cohort")
    s = config.segment
    resolution = s.resolution
    if resolution is None:
        # Pixel occupancy inside a cluster footprint must stay dense enough
        # for closing to bridge gaps, so the grid scales with sqrt(n); 512
        # suits cohorts of ~20k+ samples.
        resolution = int(min(512, max(32, round(2.0 * np.sqrt(len(coords))))))
    grid, _, regions, assignment = segmentation.segment_embedding(
        coords,
        ds.labels,
        segmentation.RasterConfig(
            resolution=resolution,
            margin_frac=s.margin_frac,
            closing_radius=s.closing_radius,
        ),
        manual_markers_xy=list(s.markers) or None,
        min_cluster_size=s.min_cluster_size,
        connectivity=s.connectivity,
    )
    paths = {
        "clusters.json": _out(config, "clusters.json"),
        "mask.pgm": _out(config, "mask.pgm"),
        "regions.pgm": _out(config, "regions.pgm"),
    }
    payload = {
        "n_clusters": assignment.n_clusters,
        "noise": assignment.noise_count,
        "census": [
            {"cluster": c.cluster, "cn": c.cn, "mci": c.mci, "total": c.total}
            for c in assignment.census
        ],
        "cluster_of": [int(c) for c in assignment.cluster_of],
    }
    with open(paths["clusters.json"], "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    segmentation.write_pgm(segmentation.mask_to_image(grid), paths["mask.pgm"])
    segmentation.write_pgm(
        segmentation.regions_to_image(grid, regions), paths["regions.pgm"]
    )
    return paths


def stage_profile(config: PipelineConfig) -> dict:
    ds = _load_cohort(config)
    report = _load_selection(config)
    clusters_path = _out(config, "clusters.json")
    if not Path(clusters_path).exists():
        raise ConfigError(f"clusters {clusters_path} not found; run `segment` first")
    with open(clusters_path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    assignment = segmentation.ClusterAssignment(
        cluster_of=np.asarray(payload["cluster_of"], dtype=np.int32),
        n_clusters=payload["n_clusters"],
        census=tuple(
            segmentation.ClusterCensus(cluster=c["cluster"], cn=c["cn"], mci=c["mci"])
            for c in payload["census"]
        ),
    )
    _, coords = embedding.load_embedding_csv(_out(config, "embedding.csv"))
    gradations = profiles.gradation_summary(coords, assignment, ds.labels)

    per_cluster = []
    entries = []
    for cluster in range(assignment.n_clusters):
        try:
            prof = profiles.characterize_cluster(
                ds, assignment, cluster, report.consensus, alpha=config.profile.alpha
            )
            per_cluster.append(prof)
            entries.append(profiles.profile_to_json(prof, gradations[cluster]))
        except profiles.InsufficientSamplesError as exc:
            print(f"warning: {exc}; reporting cluster as indeterminate",
                  file=sys.stderr)
            per_cluster.append((cluster, str(exc)))
            entries.append(
                {
                    "cluster": cluster,
                    "subtype": profiles.SUBTYPE_INDETERMINATE,
                    "error": str(exc),
                }
            )
    paths = {
        "profiles.json": _out(config, "profiles.json"),
        "profile_report.txt": _out(config, "profile_report.txt"),
    }
    with open(paths["profiles.json"], "w", encoding="utf-8") as fh:
        json.dump(entries, fh, indent=2)
        fh.write("\n")
    with open(paths["profile_report.txt"], "w", encoding="utf-8") as fh:
        fh.write(profiles.render_profile_table(per_cluster, ds.descriptors))
    return paths


_STAGES = {
    "generate": stage_generate,
    "select": stage_select,
    "embed": stage_embed,
    "segment": stage_segment,
    "profile": stage_profile,
}


def run_pipeline(config: PipelineConfig, skip_select: bool = False) -> dict:
    """Run every stage in order and write a reproducibility manifest."""
    import numba
    import scipy
    import sklearn

    manifest = {
        "config": config.to_dict(),
        "versions": {
            "cogpatterns": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__,
            "numba": numba.__version__,
        },
        "stages": {},
    }
    for name, stage in _STAGES.items():
        if name == "generate" and config.cohort_csv is not None:
            continue  # external cohort supplied
        if name == "select" and skip_select:
            _load_selection(config)  # must already exist
            continue
        started = time.perf_counter()
        try:
            outputs = stage(config)
        except CogpatternsError as exc:
            exc.stage = name
            raise
        manifest["stages"][name] = {
            "seconds": round(time.perf_counter() - started, 3),
            "outputs": {
                key: file_sha256(path) for key, path in sorted(outputs.items())
            },
        }
    path = _out(config, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _parse_marker(text: str) -> tuple[float, float]:
    try:
        x, y = text.split(",")
        return float(x), float(y)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"marker must be 'x,y' in embedding coordinates, got {text!r}"
        ) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cogpatterns",
        description="Cohort pattern discovery: ensemble wrapper feature selection, "
        "2-D embedding, raster segmentation, and per-cluster statistical profiles.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*_STAGES, "run"):
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "run"
                           else "run the full pipeline and write a manifest")
        p.add_argument("--config", type=str, default=None,
                       help="JSON config file (defaults apply when omitted)")
        p.add_argument("--out-dir", type=str, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for candidate evaluation")
        p.add_argument("--cohort-csv", type=str, default=None)
        p.add_argument("--schema", type=str, default=None)
        p.add_argument("--n-samples", type=int, default=None)
        p.add_argument("--shift", type=float, default=None)
        p.add_argument("--k-folds", type=int, default=None)
        p.add_argument("--min-gain", type=float, default=None)
        p.add_argument("--no-standardize", action="store_true")
        p.add_argument("--perplexity", type=float, default=None)
        p.add_argument("--n-iter", type=int, default=None)
        p.add_argument("--resolution", type=int, default=None)
        p.add_argument("--closing-radius", type=int, default=None)
        p.add_argument("--min-cluster-size", type=int, default=None)
        p.add_argument("--marker", type=_parse_marker, action="append", default=None,
                       help="manual marker 'x,y'; repeatable, disables auto markers")
        p.add_argument("--alpha", type=float, default=None)
        if name == "run":
            p.add_argument("--skip-select", action="store_true",
                           help="reuse an existing selection_report.json")
    return parser


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    if args.config:
        config = PipelineConfig.from_file(args.config)
    else:
        config = PipelineConfig()
    overrides = {
        "seed": args.seed,
        "threads": args.threads,
        "out_dir": args.out_dir,
        "cohort_csv": args.cohort_csv,
        "schema": args.schema,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)
    if args.n_samples is not None:
        config.generate.n_samples = args.n_samples
    if args.shift is not None:
        config.generate.shift = args.shift
    if args.k_folds is not None:
        config.select.k_folds = args.k_folds
    if args.min_gain is not None:
        config.select.min_gain = args.min_gain
    if args.no_standardize:
        config.select.standardize = False
    if args.perplexity is not None:
        config.embed.perplexity = args.perplexity
    if args.n_iter is not None:
        config.embed.n_iter = args.n_iter
    if args.resolution is not None:
        config.segment.resolution = args.resolution
    if args.closing_radius is not None:
        config.segment.closing_radius = args.closing_radius
    if args.min_cluster_size is not None:
        config.segment.min_cluster_size = args.min_cluster_size
    if args.marker is not None:
        config.segment.markers = tuple(args.marker)
    if args.alpha is not None:
        config.profile.alpha = args.alpha
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        if args.command == "run":
            run_pipeline(config, skip_select=args.skip_select)
        else:
            _STAGES[args.command](config)
    except CogpatternsError as exc:
        payload = {
            "error": type(exc).__name__,
            "message": str(exc),
            "stage": getattr(exc, "stage", args.command),
        }
        print(json.dumps(payload), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
