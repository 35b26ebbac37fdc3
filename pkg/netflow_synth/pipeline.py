#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
End-to-end commands: fit a model bundle on a reference csv, generate ensembles from it,
generate baseline ensembles, evaluate ensembles against the reference, export node/edge lists.
"""

import glob
import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields, replace
from typing import List, NamedTuple, Optional

import numpy as np
import tqdm
import yaml

from . import CONFIG, ConfigError, DataError, NetflowSynthError, logger
from .alignment import assign_edges, build_targets, descriptor_matrix, train_scorer
from .baselines import BaselineSpec, baseline_member
from .bundle import ModelBundle, dump_yaml, load_yaml, save_atomically
from .features import fit_encoder, fit_sampler, sample_features
from .flowgraph import (
    DynamicMultigraph,
    StaticGraph,
    export_graph,
    ingest_csv,
    read_dataset,
    read_edge_list,
    to_static,
    write_csv,
    write_edge_list,
)
from .kronecker import KronSampleSpec, sample_graph
from .kronfit import fit_candidates, kronfit, pick_by_bic
from .metrics import (
    Ensemble,
    evaluate_ensemble,
    feature_cdfs,
    feature_ks,
    structural_report,
    write_cdfs,
)

ENSEMBLE_MANIFEST = "ensemble.yaml"
MEMBER_FNAME = "member_{:03d}.csv"
EDGES_FNAME = "member_{:03d}_edges.csv"

# Knobs, which define the fitted model; paths and parallelism do not
MODEL_FIELDS = (
    "n1_candidates",
    "fit_iterations",
    "fit_lr",
    "feature_modes",
    "align_threshold",
    "align_trees",
    "align_depth",
    "align_lr",
    "sample_fraction",
    "day_length",
    "master_seed",
)


class StageError(NetflowSynthError):
    def __init__(self, stage, cause):
        super().__init__(f"{stage} stage has failed: {cause}")
        self.stage = stage


@contextmanager
def stage(name):
    logger.debug("Stage %s: started", name)
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        raise StageError(name, e) from e
    logger.debug("Stage %s: done", name)


@dataclass(frozen=True)
class PipelineConfig:  # pylint: disable=too-many-instance-attributes
    input_csv: Optional[str] = None
    model_dir: Optional[str] = None
    output_dir: Optional[str] = None
    n1_candidates: List[int] = field(default_factory=lambda: list(CONFIG["N1_CANDIDATES"]))
    fit_iterations: int = field(default_factory=lambda: CONFIG["KRONFIT_ITERATIONS"])
    fit_lr: float = field(default_factory=lambda: CONFIG["KRONFIT_LR"])
    feature_modes: int = field(default_factory=lambda: CONFIG["FEATURE_MODES"])
    align_threshold: float = field(default_factory=lambda: CONFIG["ALIGN_THRESHOLD"])
    align_trees: int = field(default_factory=lambda: CONFIG["ALIGN_TREES"])
    align_depth: int = field(default_factory=lambda: CONFIG["ALIGN_DEPTH"])
    align_lr: float = field(default_factory=lambda: CONFIG["ALIGN_LR"])
    sample_fraction: float = field(default_factory=lambda: CONFIG["ALIGN_SAMPLE_FRACTION"])
    ensemble_size: int = field(default_factory=lambda: CONFIG["ENSEMBLE_SIZE"])
    day_length: float = field(default_factory=lambda: CONFIG["DAY_LENGTH_S"])
    master_seed: int = field(default_factory=lambda: CONFIG["MASTER_SEED"])
    workers: int = field(default_factory=lambda: CONFIG["WORKERS"])
    target_nodes: Optional[int] = None
    target_edges: Optional[int] = None
    target_flows: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "n1_candidates", sorted({int(n1) for n1 in self.n1_candidates}))
        self.validate()

    @classmethod
    def from_options(cls, **options):
        """
        CONFIG defaults, overridden by options that are not None.
        """
        known = {f.name for f in fields(cls)}
        unknown = set(options) - known
        if unknown:
            raise ConfigError(f"Unknown pipeline options: {sorted(unknown)}")
        return cls(**{key: value for key, value in options.items() if value is not None})

    def validate(self):  # pylint: disable=too-many-branches
        problems = []
        if not self.n1_candidates or min(self.n1_candidates) < 2:
            problems.append(f"n1 candidates should be a nonempty list of sizes >= 2, got {self.n1_candidates}")
        if self.fit_iterations < 1:
            problems.append(f"fit iterations should be >= 1, got {self.fit_iterations}")
        if self.feature_modes < 1:
            problems.append(f"feature modes should be >= 1, got {self.feature_modes}")
        if self.align_threshold < 0:
            problems.append(f"alignment threshold should be >= 0, got {self.align_threshold}")
        if self.align_trees < 0 or self.align_depth < 1:
            problems.append(f"bad scorer shape: {self.align_trees} trees of depth {self.align_depth}")
        for name in ("fit_lr", "align_lr", "sample_fraction"):
            if not 0 < getattr(self, name) <= 1:
                problems.append(f"{name} should lie in (0, 1], got {getattr(self, name)}")
        if self.ensemble_size < 1:
            problems.append(f"ensemble size should be >= 1, got {self.ensemble_size}")
        if self.day_length <= 0:
            problems.append(f"day length should be positive, got {self.day_length}")
        if self.workers < 1:
            problems.append(f"workers should be >= 1, got {self.workers}")
        for name in ("target_nodes", "target_edges", "target_flows"):
            value = getattr(self, name)
            if value is not None and value < (1 if name == "target_nodes" else 0):
                problems.append(f"{name} is out of range: {value}")
        if problems:
            raise ConfigError("Bad pipeline config:\n" + "\n".join(problems))

    def require(self, *names):
        missing = [name for name in names if getattr(self, name) is None]
        if missing:
            raise ConfigError(f"Missing required options: {', '.join(missing)}")

    def digest(self):
        """
        sha256 of the canonical yaml of the model-defining knobs.
        """
        canonical = yaml.safe_dump({name: getattr(self, name) for name in MODEL_FIELDS}, sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def to_dict(self):
        return asdict(self)


def load_reference(config):
    config.require("input_csv")
    with stage("ingest"):
        return ingest_csv(config.input_csv)


def cmd_fit(config):
    """
    Fits structure, feature and alignment models on the reference csv and saves a model bundle.

    :rtype: ModelBundle
    """
    config.require("input_csv", "model_dir")
    ref = load_reference(config)
    static = to_static(ref)
    seed = config.master_seed
    with stage("structure"):
        fits = fit_candidates(
            static, config.n1_candidates, iters=config.fit_iterations, lr=config.fit_lr, seed=seed, workers=config.workers
        )
        initiator = pick_by_bic(fits)
    with stage("features"):
        encoder = fit_encoder(ref, config.feature_modes, seed)
        sampler = fit_sampler(ref, encoder, config.feature_modes, seed)
    with stage("alignment"):
        targets = build_targets(ref, encoder, config.sample_fraction, seed)
        scorer = train_scorer(
            targets,
            descriptor_matrix(static),
            trees=config.align_trees,
            depth=config.align_depth,
            lr=config.align_lr,
            seed=seed,
        )
    manifest = {
        "config_hash": config.digest(),
        "seed": seed,
        "reference": {"nodes": ref.node_count, "edges": static.edge_count, "flows": len(ref)},
        "n1": initiator.n1,
        "bic": float(initiator.bic),
        "candidates": {fit.n1: float(fit.bic) for fit in fits},
        "alignment_pairs": len(targets),
    }
    bundle = ModelBundle(initiator, encoder, sampler, scorer, manifest)
    with stage("save"):
        bundle.save(config.model_dir)
    return bundle


def _targets(config, reference):
    """
    (N, E, M): config overrides or the reference sizes.
    """
    return tuple(
        reference[key] if override is None else override
        for key, override in (
            ("nodes", config.target_nodes),
            ("edges", config.target_edges),
            ("flows", config.target_flows),
        )
    )


class GeneratedMember(NamedTuple):
    flows: DynamicMultigraph
    structure: StaticGraph


def stage_seeds(seed, count):
    """
    Independent integer seeds for <count> consecutive generation steps of one member.
    """
    return [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(seed).spawn(count)]


def generate_member(bundle, sizes, seed, config):
    """
    One synthetic dataset: Kronecker structure, sampled features, aligned onto the structure.
    Each step draws from its own stream, derived from <seed>.

    :rtype: GeneratedMember
    """
    nodes, edges, flows = sizes
    structure_seed, feature_seed, align_seed = stage_seeds(seed, 3)
    spec = KronSampleSpec.for_initiator(bundle.initiator, nodes, edges, structure_seed)
    structure = sample_graph(bundle.initiator, spec)
    features = sample_features(bundle.sampler, bundle.encoder, flows, feature_seed)
    aligned = assign_edges(bundle.scorer, structure, features, config.align_threshold, align_seed)
    return GeneratedMember(aligned, structure)


def _write_ensemble(config, kind, build_member, extra=None):
    """
    Builds config.ensemble_size members concurrently and saves their flows and structural edge lists
    with an ensemble manifest. Member i gets seed master_seed + i; <build_member> returns a GeneratedMember.
    """
    config.require("output_dir")
    seeds = [config.master_seed + i for i in range(config.ensemble_size)]

    def _member(index_seed):
        index, seed = index_seed
        with stage(f"member {index}"):
            return build_member(seed)

    with ThreadPoolExecutor(max_workers=config.workers) as executor:
        members = list(
            tqdm.tqdm(
                executor.map(_member, enumerate(seeds)),
                total=len(seeds),
                desc=f"Generating {kind}",
                ascii=True,
                dynamic_ncols=True,
                disable=not CONFIG["PROGRESS_BARS"],
            )
        )
    entries = [
        {
            "file": MEMBER_FNAME.format(i),
            "edges": EDGES_FNAME.format(i),
            "seed": seed,
            "flows": len(member.flows),
            "edge_count": member.structure.edge_count,
        }
        for i, (seed, member) in enumerate(zip(seeds, members))
    ]
    manifest = dict(extra or {}, kind=kind, node_count=members[0].flows.node_count, members=entries)

    def _write(tmp_dir):
        for entry, member in zip(entries, members):
            write_csv(member.flows, os.path.join(tmp_dir, entry["file"]))
            write_edge_list(member.structure, os.path.join(tmp_dir, entry["edges"]), member.flows)
        dump_yaml(manifest, os.path.join(tmp_dir, ENSEMBLE_MANIFEST))

    with stage("save"):
        out_dir = save_atomically(config.output_dir, _write)
    logger.info("%d %s members have been saved to %s", len(members), kind, out_dir)
    return [member.flows for member in members]


def cmd_generate(config, bundle=None):
    """
    :return: generated members (also saved as csv files + ensemble manifest in config.output_dir)
    """
    if bundle is None:
        config.require("model_dir")
        with stage("load"):
            bundle = ModelBundle.load(config.model_dir)
    sizes = _targets(config, bundle.manifest["reference"])
    with stage("plan"):
        KronSampleSpec.for_initiator(bundle.initiator, sizes[0], sizes[1])
    logger.info("Generating %d members with N=%d, E=%d, M=%d", config.ensemble_size, *sizes)
    return _write_ensemble(
        config,
        "kronecker",
        lambda seed: generate_member(bundle, sizes, seed, config),
        {"model_config_hash": bundle.manifest.get("config_hash")},
    )


def cmd_baseline(config, kind):
    """
    Baseline ensemble of <kind>, sized like the reference unless overridden. rmat2 fits its 2x2
    initiator once for all members.
    """
    ref = load_reference(config)
    static = to_static(ref)
    sizes = _targets(config, {"nodes": ref.node_count, "edges": static.edge_count, "flows": len(ref)})
    initiator = None
    if kind == "rmat2":
        with stage("structure"):
            initiator = kronfit(static, 2, iters=config.fit_iterations, lr=config.fit_lr, seed=config.master_seed)
    with stage("plan"):
        BaselineSpec(kind, *sizes)

    def _member(seed):
        return GeneratedMember(*baseline_member(BaselineSpec(kind, *sizes, seed=seed), ref, initiator))

    return _write_ensemble(config, kind, _member)


def load_ensemble(ensemble_dir, node_count):
    """
    Reads members listed in the ensemble manifest (or every member_NNN.csv when there is none).
    A member's structure comes from its saved edge list, or from its flows when there is none.

    :return: list of GeneratedMember
    """
    manifest_fname = os.path.join(ensemble_dir, ENSEMBLE_MANIFEST)
    if os.path.isfile(manifest_fname):
        manifest = load_yaml(manifest_fname)
        if manifest.get("node_count", node_count) != node_count:
            raise DataError(
                f"Ensemble in {ensemble_dir} has {manifest['node_count']} nodes, the reference has {node_count}: "
                "evaluation needs node correspondence with the reference"
            )
        entries = manifest["members"]
    else:
        paths = sorted(glob.glob(os.path.join(ensemble_dir, "member_[0-9][0-9][0-9].csv")))
        entries = [{"file": os.path.basename(path)} for path in paths]
    if not entries:
        raise DataError(f"No ensemble members found in {ensemble_dir}")
    members = []
    for entry in entries:
        flows = read_dataset(os.path.join(ensemble_dir, entry["file"]), node_count=node_count)
        if entry.get("edges"):
            structure = read_edge_list(os.path.join(ensemble_dir, entry["edges"]), node_count)
        else:
            structure = to_static(flows)
        members.append(GeneratedMember(flows, structure))
    return members


def cmd_evaluate(config, ensemble_dir):
    """
    Writes into config.output_dir:
        ensemble_report.yaml: A, D, R, bias, variability, E, members
        structural_report.yaml: reference row and one row per member
        feature_report.yaml: per member KS distance per feature
        reference_*_cdf.csv, ensemble_*_cdf.csv
    """
    config.require("output_dir")
    ref = load_reference(config)
    with stage("load"):
        loaded = load_ensemble(ensemble_dir, ref.node_count)
        members = [member.flows for member in loaded]
    with stage("evaluate"):
        report = evaluate_ensemble(ref, Ensemble(members, config.day_length, ref.node_count), config.workers)
        ref_static = to_static(ref)
        structure = {
            "reference": structural_report(ref_static, ref_static).to_dict(),
            "members": [structural_report(m.structure, ref_static).to_dict() for m in loaded],
        }
        ks = [feature_ks(m, ref) for m in members]
        pooled = _pool(members)

    def _write(tmp_dir):
        dump_yaml(report.to_dict(), os.path.join(tmp_dir, "ensemble_report.yaml"))
        dump_yaml(structure, os.path.join(tmp_dir, "structural_report.yaml"))
        dump_yaml({"members": ks}, os.path.join(tmp_dir, "feature_report.yaml"))
        write_cdfs(feature_cdfs(ref, ref), tmp_dir, "reference")
        write_cdfs(feature_cdfs(pooled, ref), tmp_dir, "ensemble")

    with stage("save"):
        out_dir = save_atomically(config.output_dir, _write)
    logger.info("Evaluation of %d members has been saved to %s", len(members), out_dir)
    return report


def _pool(members):
    """
    All members' flows as one dataset (for ensemble-wide feature CDFs).
    """
    vocabulary = sorted({label for m in members for label in m.vocabulary})
    index = {label: i for i, label in enumerate(vocabulary)}
    first = members[0]
    return replace(
        first,
        src=np.concatenate([m.src for m in members]),
        dst=np.concatenate([m.dst for m in members]),
        start_time=np.concatenate([m.start_time for m in members]),
        duration=np.concatenate([m.duration for m in members]),
        port_protocol=np.concatenate(
            [np.array([index[label] for label in m.vocabulary], dtype=np.int64)[m.port_protocol] for m in members]
        ),
        vocabulary=vocabulary,
    )


def cmd_export(config):
    """
    Node list (node_id, ip) and aggregated edge list of the reference csv.
    """
    config.require("output_dir")
    ref = load_reference(config)
    with stage("export"):
        export_graph(ref, config.output_dir)
    return ref
