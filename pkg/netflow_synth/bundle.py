#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Model bundle and ensemble artifacts: YAML files written into a temporary directory and moved into place.
"""

import os
import shutil
import tempfile
from dataclasses import dataclass, field

import semantic_version
import yaml

from . import CONFIG, NetflowSynthError, logger
from .features import FeatureEncoder, FeatureSampler
from .kronecker import InitiatorMatrix
from .scorer import BoostedScorer

MANIFEST = "manifest"
ARTIFACTS = {
    "initiator": InitiatorMatrix,
    "encoder": FeatureEncoder,
    "sampler": FeatureSampler,
    "scorer": BoostedScorer,
}


class BundleError(NetflowSynthError):
    pass


def dump_yaml(data, fname):
    with open(fname, "w", encoding="utf-8") as file:
        yaml.safe_dump(data, file, sort_keys=True, allow_unicode=True)
    logger.debug("Has saved %s", fname)


def load_yaml(fname):
    try:
        with open(fname, "r", encoding="utf-8") as file:
            return yaml.safe_load(file)
    except FileNotFoundError as e:
        raise BundleError(f"{fname} not found!") from e
    except yaml.YAMLError as e:
        raise BundleError(f"{fname} is not a valid yaml:\n{e}") from e


def check_format_version(version_str, fname):
    """
    Artifacts of the same major format version are readable.
    """
    try:
        version = semantic_version.Version(str(version_str))
    except ValueError as e:
        raise BundleError(f"Bad format_version {version_str} in {fname}") from e
    supported = semantic_version.Version(CONFIG["BUNDLE_FORMAT_VERSION"])
    if version.major != supported.major:
        raise BundleError(f"{fname} has format {version}; only {supported.major}.x.x is supported")
    return version


def save_atomically(out_dir, writer):
    """
    Runs <writer(tmp_dir)> on a temporary sibling of <out_dir>, which replaces <out_dir> on success.
    Nothing is left behind on failure.
    """
    out_dir = os.path.abspath(os.path.expanduser(out_dir))
    parent = os.path.dirname(out_dir)
    os.makedirs(parent, exist_ok=True)
    tmp_dir = tempfile.mkdtemp(prefix=f".{os.path.basename(out_dir)}-", dir=parent)
    try:
        writer(tmp_dir)
        if os.path.isdir(out_dir):
            logger.debug("Replacing existing %s", out_dir)
            shutil.rmtree(out_dir)
        os.replace(tmp_dir, out_dir)
    except BaseException:
        shutil.rmtree(tmp_dir, ignore_errors=True)
        raise
    return out_dir


@dataclass(frozen=True, eq=False)
class ModelBundle:
    """
    Everything generation needs: the fitted structure, feature and alignment models plus a manifest
    (format version, config hash, seed, reference sizes, initiator selection).
    """

    initiator: InitiatorMatrix
    encoder: FeatureEncoder
    sampler: FeatureSampler
    scorer: BoostedScorer
    manifest: dict = field(default_factory=dict)

    def save(self, out_dir):
        manifest = dict(self.manifest, format_version=CONFIG["BUNDLE_FORMAT_VERSION"])

        def _write(tmp_dir):
            for name in ARTIFACTS:
                dump_yaml(getattr(self, name).to_dict(), os.path.join(tmp_dir, f"{name}.yaml"))
            dump_yaml(manifest, os.path.join(tmp_dir, f"{MANIFEST}.yaml"))

        out_dir = save_atomically(out_dir, _write)
        logger.info("Model bundle has been saved to %s", out_dir)
        return out_dir

    @classmethod
    def load(cls, bundle_dir):
        bundle_dir = os.path.expanduser(bundle_dir)
        if not os.path.isdir(bundle_dir):
            raise BundleError(f"Model bundle {bundle_dir} not found!")
        manifest_fname = os.path.join(bundle_dir, f"{MANIFEST}.yaml")
        manifest = load_yaml(manifest_fname)
        if not isinstance(manifest, dict):
            raise BundleError(f"{manifest_fname} should hold a mapping")
        check_format_version(manifest.get("format_version"), manifest_fname)

        artifacts = {}
        for name, artifact_cls in ARTIFACTS.items():
            fname = os.path.join(bundle_dir, f"{name}.yaml")
            try:
                artifacts[name] = artifact_cls.from_dict(load_yaml(fname))
            except (KeyError, TypeError, ValueError) as e:
                raise BundleError(f"{fname} is malformed: {e}") from e
        logger.debug("Model bundle has been loaded from %s", bundle_dir)
        return cls(manifest=manifest, **artifacts)
