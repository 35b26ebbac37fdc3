#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Flow features: mode-specific normalization of start_time / duration, one-hot port_protocol,
and a category-conditional Gaussian mixture sampler over raw (start_time, duration).

Encoded vector layout:
    [start scalar, start modes one-hot..., duration scalar, duration modes one-hot..., port_protocol one-hot...]
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np
from sklearn.mixture import GaussianMixture
from sklearn.preprocessing import StandardScaler

from . import CONFIG, NetflowSynthError, logger

CONTINUOUS_COLUMNS = ("start_time", "duration")
NORMALIZATION_SPAN = 4.0


class EncodingError(NetflowSynthError):
    pass


class DecodingError(NetflowSynthError):
    pass


def _array(values):
    arr = np.array(values, dtype=np.float64).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ColumnMixture:
    """
    1-D Gaussian mixture of one continuous column; modes are sorted by mean.
    """

    name: str
    means: np.ndarray
    stds: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        for attr in ("means", "stds", "weights"):
            object.__setattr__(self, attr, _array(getattr(self, attr)))
        if not len(self.means) == len(self.stds) == len(self.weights) >= 1:
            raise EncodingError(f"{self.name}: mixture parameters have inconsistent sizes")
        if np.any(self.stds <= 0):
            raise EncodingError(f"{self.name}: mixture stds should be positive, got {self.stds}")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise EncodingError(f"{self.name}: mixture weights sum to {self.weights.sum()}, not 1")

    @property
    def n_modes(self):
        return len(self.means)

    def responsibilities(self, values):
        """
        Posterior mode probabilities, shape (len(values), n_modes).
        """
        values = np.asarray(values, dtype=np.float64).reshape(-1, 1)
        z = (values - self.means) / self.stds
        log_post = np.log(self.weights) - np.log(self.stds) - 0.5 * z * z
        log_post -= log_post.max(axis=1, keepdims=True)
        post = np.exp(log_post)
        return post / post.sum(axis=1, keepdims=True)

    def select_modes(self, values, rng=None):
        """
        Mode per value: sampled proportionally to responsibility with <rng>, most responsible one without.
        """
        post = self.responsibilities(values)
        if rng is None or self.n_modes == 1:
            return post.argmax(axis=1)
        cumulative = post.cumsum(axis=1)
        draws = rng.random(len(post))[:, None] * cumulative[:, -1:]
        return np.minimum((cumulative <= draws).sum(axis=1), self.n_modes - 1)

    def normalize(self, values, modes):
        scalars = (np.asarray(values, dtype=np.float64) - self.means[modes]) / (NORMALIZATION_SPAN * self.stds[modes])
        return np.clip(scalars, -1.0, 1.0)

    def denormalize(self, scalars, modes):
        return np.asarray(scalars, dtype=np.float64) * NORMALIZATION_SPAN * self.stds[modes] + self.means[modes]

    def to_dict(self):
        return {
            "name": self.name,
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["name"], data["means"], data["stds"], data["weights"])


def fit_column_mixture(name, values, modes, seed=None):
    """
    EM fit (k-means++ init on a seeded subsample) of <modes> components; weights below
    MODE_PRUNE_WEIGHT are dropped. Zero-variance columns collapse to a single unit-std mode.
    """
    values = np.asarray(values, dtype=np.float64)
    distinct = np.unique(values)
    if len(distinct) == 1:
        logger.debug("%s has zero variance; single mode at %s", name, distinct[0])
        return ColumnMixture(name, [distinct[0]], [1.0], [1.0])

    rng = np.random.default_rng(seed)
    if len(values) > CONFIG["EM_MAX_ROWS"]:
        values = rng.choice(values, size=CONFIG["EM_MAX_ROWS"], replace=False)
    gmm = GaussianMixture(
        n_components=min(modes, len(distinct)),
        covariance_type="full",
        init_params="k-means++",
        max_iter=CONFIG["EM_MAX_ITER"],
        tol=CONFIG["EM_TOL"],
        random_state=int(rng.integers(2**31 - 1)),
    )
    gmm.fit(values.reshape(-1, 1))
    if not gmm.converged_:
        logger.debug("EM for %s did not converge in %d iterations", name, CONFIG["EM_MAX_ITER"])

    means, stds, weights = gmm.means_.ravel(), np.sqrt(gmm.covariances_.ravel()), gmm.weights_
    keep = weights >= CONFIG["MODE_PRUNE_WEIGHT"]
    if not keep.any():
        keep = weights == weights.max()
    order = np.argsort(means[keep], kind="stable")
    weights = weights[keep][order]
    logger.debug("%s: %d of %d modes kept", name, keep.sum(), len(keep))
    return ColumnMixture(name, means[keep][order], stds[keep][order], weights / weights.sum())


@dataclass(frozen=True, eq=False)
class FeatureEncoder:
    start_time: ColumnMixture
    duration: ColumnMixture
    vocabulary: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise EncodingError("port_protocol vocabulary has duplicates")

    @property
    def widths(self):
        """
        (start modes, duration modes, categories)
        """
        return self.start_time.n_modes, self.duration.n_modes, len(self.vocabulary)

    @property
    def width(self):
        start_modes, duration_modes, categories = self.widths
        return 2 + start_modes + duration_modes + categories

    def category_index(self, label):
        try:
            return self.vocabulary.index(label)
        except ValueError as e:
            raise EncodingError(f'Unknown port_protocol "{label}"') from e

    def category_codes(self, labels):
        index = {label: i for i, label in enumerate(self.vocabulary)}
        unknown = sorted({label for label in labels if label not in index})
        if unknown:
            raise EncodingError(f"Unknown port_protocol values: {unknown}")
        return np.array([index[label] for label in labels], dtype=np.int64)

    def to_dict(self):
        return {
            "start_time": self.start_time.to_dict(),
            "duration": self.duration.to_dict(),
            "vocabulary": list(self.vocabulary),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            ColumnMixture.from_dict(data["start_time"]),
            ColumnMixture.from_dict(data["duration"]),
            data["vocabulary"],
        )


@dataclass(frozen=True, eq=False)
class EncodedFeature:
    """
    Vector form of one flow's features, with the block widths needed to split it.
    """

    vector: np.ndarray
    widths: Tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "vector", _array(self.vector))
        object.__setattr__(self, "widths", tuple(self.widths))
        if len(self.vector) != 2 + sum(self.widths):
            raise DecodingError(f"Vector of length {len(self.vector)} does not match block widths {self.widths}")

    @classmethod
    def from_vector(cls, vector, enc):
        return cls(vector, enc.widths)

    def blocks(self):
        """
        :return: start scalar, start modes one-hot, duration scalar, duration modes one-hot, category one-hot
        """
        start_modes, duration_modes, _ = self.widths
        v = self.vector
        duration_at = 1 + start_modes
        return (
            v[0],
            v[1:duration_at],
            v[duration_at],
            v[duration_at + 1 : duration_at + 1 + duration_modes],
            v[duration_at + 1 + duration_modes :],
        )


def fit_encoder(g, modes=None, seed=None):
    """
    Fits per-column mixtures on the flows of <g>; vocabulary is g's port_protocol vocabulary.
    """
    modes = CONFIG["FEATURE_MODES"] if modes is None else modes
    if modes < 1:
        raise EncodingError(f"Mode count should be >= 1, got {modes}")
    if not len(g):
        raise EncodingError("Can not fit an encoder on a dataset without flows")
    if len(g) < modes:
        logger.warning("Only %d flows for %d modes per column; mode count will be reduced", len(g), modes)
    encoder = FeatureEncoder(
        start_time=fit_column_mixture("start_time", g.start_time, modes, seed),
        duration=fit_column_mixture("duration", g.duration, modes, seed),
        vocabulary=g.vocabulary,
    )
    logger.info(
        "Feature encoder: %d start_time modes, %d duration modes, %d port-protocols",
        *encoder.widths,
    )
    return encoder


def encode_columns(enc, start_time, duration, codes, rng=None):  # pylint: disable=too-many-locals
    """
    Encodes feature columns into a (M, enc.width) matrix. <codes> index enc.vocabulary.
    """
    start_time = np.asarray(start_time, dtype=np.float64)
    duration = np.asarray(duration, dtype=np.float64)
    codes = np.asarray(codes, dtype=np.int64)
    count = len(codes)
    if not len(start_time) == len(duration) == count:
        raise EncodingError("Feature columns have different lengths")
    if count and (codes.min() < 0 or codes.max() >= len(enc.vocabulary)):
        raise EncodingError(f"Category codes should lie in [0, {len(enc.vocabulary)})")
    start_modes, duration_modes, _ = enc.widths
    matrix = np.zeros((count, enc.width))
    rows = np.arange(count)
    offset = 0
    for mixture, values, modes_count in (
        (enc.start_time, start_time, start_modes),
        (enc.duration, duration, duration_modes),
    ):
        modes = mixture.select_modes(values, rng)
        matrix[:, offset] = mixture.normalize(values, modes)
        matrix[rows, offset + 1 + modes] = 1.0
        offset += 1 + modes_count
    matrix[rows, offset + codes] = 1.0
    return matrix


def encode_graph(enc, g, rng=None):
    """
    Encodes every flow of <g>; g's labels are mapped onto enc.vocabulary.
    """
    codes = enc.category_codes(g.vocabulary)[g.port_protocol] if len(g) else np.empty(0, dtype=np.int64)
    return encode_columns(enc, g.start_time, g.duration, codes, rng)


def encode(enc, rec, rng=None):
    """
    :type rec: NetflowRecord
    :rtype: EncodedFeature
    """
    vector = encode_columns(enc, [rec.start_time], [rec.duration], [enc.category_index(rec.port_protocol)], rng)
    return EncodedFeature.from_vector(vector[0], enc)


def _one_hot_index(block, what):
    """
    :return: (M,) active positions; every row should hold exactly one 1 and zeros elsewhere
    """
    active = block == 1.0
    valid = (active.sum(axis=1) == 1) & np.all(active | (block == 0.0), axis=1)
    if not valid.all():
        bad = int(np.flatnonzero(~valid)[0])
        raise DecodingError(f"Malformed {what} one-hot block in row {bad}: {block[bad].tolist()}")
    return active.argmax(axis=1)


def decode_columns(enc, matrix):
    """
    Inverse of encode_columns. Negative start times and durations are clamped to 0.

    :return: (start_time, duration, codes)
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != enc.width:
        raise DecodingError(f"Encoded matrix should have {enc.width} columns, got shape {matrix.shape}")
    start_modes, duration_modes, _ = enc.widths
    values = []
    offset = 0
    for mixture, modes_count in ((enc.start_time, start_modes), (enc.duration, duration_modes)):
        modes = _one_hot_index(matrix[:, offset + 1 : offset + 1 + modes_count], f"{mixture.name} mode")
        values.append(mixture.denormalize(matrix[:, offset], modes))
        offset += 1 + modes_count
    codes = _one_hot_index(matrix[:, offset:], "port_protocol")
    start_time, duration = values
    clamped = int((duration < 0).sum())
    if clamped:
        logger.debug("Clamped %d negative decoded durations to 0", clamped)
    return np.maximum(start_time, 0.0), np.maximum(duration, 0.0), codes


def decode(enc, f):
    """
    :type f: EncodedFeature
    :return: (start_time, duration, port_protocol label)
    """
    if tuple(f.widths) != enc.widths:
        raise DecodingError(f"Feature block widths {f.widths} do not match encoder {enc.widths}")
    start_time, duration, codes = decode_columns(enc, f.vector.reshape(1, -1))
    return float(start_time[0]), float(duration[0]), enc.vocabulary[codes[0]]


class SampledFeatures(NamedTuple):
    """
    M synthetic feature rows: raw columns plus their encoded matrix (row i <-> row i).
    """

    start_time: np.ndarray
    duration: np.ndarray
    port_protocol: np.ndarray
    vocabulary: Tuple[str, ...]
    encoded: np.ndarray

    def __len__(self):  # pylint: disable=invalid-length-returned
        return len(self.port_protocol)

    def rows(self):
        for start, duration, code in zip(self.start_time.tolist(), self.duration.tolist(), self.port_protocol):
            yield start, duration, self.vocabulary[code]

    def encoded_features(self, enc):
        return [EncodedFeature.from_vector(v, enc) for v in self.encoded]

    @classmethod
    def from_encoded(cls, enc, matrix):
        matrix = np.asarray(matrix, dtype=np.float64).reshape(-1, enc.width)
        start_time, duration, codes = decode_columns(enc, matrix)
        return cls(start_time, duration, codes, enc.vocabulary, matrix)


@dataclass(frozen=True, eq=False)
class CategoryMixture:
    """
    2-D full-covariance mixture over raw (start_time, duration) of one category.
    Zero-variance directions have zero covariance rows/columns.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", np.array(self.weights, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "means", np.array(self.means, dtype=np.float64).reshape(-1, 2))
        object.__setattr__(self, "covariances", np.array(self.covariances, dtype=np.float64).reshape(-1, 2, 2))

    def roots(self):
        """
        Symmetric square roots of the covariances (negative eigenvalues clipped).
        """
        eigvals, eigvecs = np.linalg.eigh(self.covariances)
        return np.einsum("mij,mj,mkj->mik", eigvecs, np.sqrt(np.clip(eigvals, 0.0, None)), eigvecs)

    def sample(self, count, rng):
        components = rng.choice(len(self.weights), size=count, p=self.weights)
        noise = rng.standard_normal((count, 2))
        return self.means[components] + np.einsum("nij,nj->ni", self.roots()[components], noise)

    def to_dict(self):
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["weights"], data["means"], data["covariances"])


def fit_category_mixture(rows, modes, seed=None):
    """
    EM runs on standardized columns; means and covariances are mapped back to raw units.

    :param rows: (n, 2) raw (start_time, duration) of one category, n >= 1
    """
    rows = np.asarray(rows, dtype=np.float64).reshape(-1, 2)
    varying = np.ptp(rows, axis=0) > 0
    if len(rows) == 1 or not varying.any():
        return CategoryMixture([1.0], rows[:1], np.zeros((1, 2, 2)))

    data = rows[:, varying]
    distinct = len(np.unique(data, axis=0))
    scaler = StandardScaler().fit(data)
    gmm = GaussianMixture(
        n_components=min(modes, distinct),
        covariance_type="full",
        init_params="k-means++",
        max_iter=CONFIG["EM_MAX_ITER"],
        tol=CONFIG["EM_TOL"],
        random_state=seed,
    )
    gmm.fit(scaler.transform(data))
    components = gmm.n_components
    means = np.repeat(rows[:1], components, axis=0)
    means[:, varying] = scaler.inverse_transform(gmm.means_)
    covariances = np.zeros((components, 2, 2))
    index = np.flatnonzero(varying)
    scale = np.outer(scaler.scale_, scaler.scale_)
    covariances[np.ix_(np.arange(components), index, index)] = gmm.covariances_ * scale
    return CategoryMixture(gmm.weights_ / gmm.weights_.sum(), means, covariances)


@dataclass(frozen=True, eq=False)
class FeatureSampler:
    vocabulary: Tuple[str, ...]
    marginal: np.ndarray
    mixtures: Tuple[Optional[CategoryMixture], ...]

    def __post_init__(self):
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        object.__setattr__(self, "marginal", _array(self.marginal))
        object.__setattr__(self, "mixtures", tuple(self.mixtures))
        if not len(self.vocabulary) == len(self.marginal) == len(self.mixtures):
            raise EncodingError("Sampler vocabulary, marginal and mixtures differ in size")
        if abs(self.marginal.sum() - 1.0) > 1e-9:
            raise EncodingError(f"Category marginal sums to {self.marginal.sum()}, not 1")
        for label, share, mixture in zip(self.vocabulary, self.marginal, self.mixtures):
            if share > 0 and mixture is None:
                raise EncodingError(f'Category "{label}" has positive probability but no mixture')

    def to_dict(self):
        return {
            "vocabulary": list(self.vocabulary),
            "marginal": self.marginal.tolist(),
            "mixtures": [None if m is None else m.to_dict() for m in self.mixtures],
        }

    @classmethod
    def from_dict(cls, data):
        mixtures = [None if m is None else CategoryMixture.from_dict(m) for m in data["mixtures"]]
        return cls(data["vocabulary"], data["marginal"], mixtures)


def fit_sampler(g, enc, modes=None, seed=None):
    """
    Category marginal = empirical frequencies over enc.vocabulary; per observed category,
    a joint (start_time, duration) mixture on raw values.
    """
    modes = CONFIG["FEATURE_MODES"] if modes is None else modes
    codes = enc.category_codes(g.vocabulary)[g.port_protocol]
    counts = np.bincount(codes, minlength=len(enc.vocabulary))
    rows = np.column_stack([g.start_time, g.duration])
    mixtures = []
    for code, count in enumerate(counts.tolist()):
        if count == 0:
            mixtures.append(None)
            continue
        mixtures.append(fit_category_mixture(rows[codes == code], modes, seed))
        logger.debug(
            "Category %s: %d flows, %d components", enc.vocabulary[code], count, len(mixtures[-1].weights)
        )
    return FeatureSampler(enc.vocabulary, counts / counts.sum(), mixtures)


def sample_features(sampler, enc, count, seed=None):
    """
    <count> synthetic rows; negative start times and durations are clamped to 0.

    :rtype: SampledFeatures
    """
    if count < 0:
        raise ValueError(f"Row count should be >= 0, got {count}")
    if tuple(sampler.vocabulary) != tuple(enc.vocabulary):
        raise EncodingError("Sampler and encoder vocabularies differ")
    rng = np.random.default_rng(seed)
    codes = rng.choice(len(sampler.vocabulary), size=count, p=sampler.marginal)
    values = np.zeros((count, 2))
    for code, mixture in enumerate(sampler.mixtures):
        selected = np.flatnonzero(codes == code)
        if len(selected):
            values[selected] = mixture.sample(len(selected), rng)
    values = np.maximum(values, 0.0)
    encoded = encode_columns(enc, values[:, 0], values[:, 1], codes, rng)
    return SampledFeatures(values[:, 0], values[:, 1], codes, sampler.vocabulary, encoded)
