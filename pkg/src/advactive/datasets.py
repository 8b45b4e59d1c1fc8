"""Samples, data pools, the synthetic Gaussian task and MNIST 5-vs-6 ingestion."""

from __future__ import annotations

import enum
import gzip
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, IdxParseError, ValidationError
from .seeding import stream

POSITIVE, NEGATIVE = 1, -1

# digit 5 -> +1, digit 6 -> -1
MNIST_DIGITS = {5: POSITIVE, 6: NEGATIVE}
SYNTHETIC_MEANS = {POSITIVE: (2.0, 0.0), NEGATIVE: (-2.0, 0.0)}


class Provenance(str, enum.Enum):
    NATURAL = "natural"
    ADVERSARIAL = "adversarial"


class Task(str, enum.Enum):
    SYNTHETIC2D = "synthetic2d"
    MNIST56 = "mnist56"


@dataclass(frozen=True, eq=False)
class Sample:
    """A feature vector with an optional label.

    ``truth`` is the generating class and is only read by invariant checks;
    learner, selection and attacker code work from :class:`PoolView`, which
    does not carry it. Equality is identity, so pools are disjoint by ``uid``.
    """

    uid: int
    features: np.ndarray
    label: Optional[int] = None
    provenance: Provenance = Provenance.NATURAL
    truth: Optional[int] = field(default=None, repr=False)

    def with_label(self, label: int) -> "Sample":
        return replace(self, label=int(label))


@dataclass(frozen=True)
class PoolView:
    """Read-only arrays for the learner and the attacker.

    Holds T_l, T_u and V only: no test samples and no hidden labels.
    """

    labeled_X: np.ndarray
    labeled_y: np.ndarray
    unlabeled_X: np.ndarray
    validation_X: np.ndarray
    validation_y: np.ndarray

    @property
    def n(self) -> int:
        return len(self.labeled_X) + len(self.unlabeled_X)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def stack(samples: Sequence[Sample], dim: Optional[int] = None) -> np.ndarray:
    if not samples:
        return np.empty((0, dim or 0))
    return np.stack([s.features for s in samples])


def labels_of(samples: Sequence[Sample]) -> np.ndarray:
    return np.array([s.label for s in samples], dtype=np.float64)


@dataclass(frozen=True)
class DataPools:
    labeled: tuple
    validation: tuple
    unlabeled: tuple
    test: tuple

    def __post_init__(self):
        for name in ("labeled", "validation", "unlabeled", "test"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def n(self) -> int:
        """N = |T_l| + |T_u|."""
        return len(self.labeled) + len(self.unlabeled)

    @property
    def dim(self) -> int:
        return len(self.test[0].features) if self.test else len(self.labeled[0].features)

    @property
    def next_uid(self) -> int:
        every = self.labeled + self.validation + self.unlabeled + self.test
        return max((s.uid for s in every), default=-1) + 1

    def view(self) -> PoolView:
        d = self.dim
        return PoolView(
            labeled_X=_frozen(stack(self.labeled, d)),
            labeled_y=_frozen(labels_of(self.labeled)),
            unlabeled_X=_frozen(stack(self.unlabeled, d)),
            validation_X=_frozen(stack(self.validation, d)),
            validation_y=_frozen(labels_of(self.validation)),
        )

    def inject(self, sample: Sample) -> "DataPools":
        if sample.label is not None or sample.provenance is not Provenance.ADVERSARIAL:
            raise ValidationError("only unlabeled adversarial samples may be injected")
        return replace(self, unlabeled=self.unlabeled + (sample,))

    def transfer(self, index: int, label: int) -> tuple["DataPools", Sample]:
        """Move ``unlabeled[index]`` to T_l with the given oracle label."""
        if not 0 <= index < len(self.unlabeled):
            raise ValidationError(f"index {index} outside T_u of size {len(self.unlabeled)}")
        moved = self.unlabeled[index].with_label(label)
        rest = self.unlabeled[:index] + self.unlabeled[index + 1:]
        return replace(self, labeled=self.labeled + (moved,), unlabeled=rest), moved

    def check_disjoint(self) -> None:
        seen: set[int] = set()
        for pool in (self.labeled, self.validation, self.unlabeled, self.test):
            ids = {s.uid for s in pool}
            if len(ids) != len(pool) or ids & seen:
                raise ValidationError("data pools are not disjoint")
            seen |= ids


@dataclass(frozen=True)
class DatasetSpec:
    """Sizes are per class; ``test_per_class`` is ``(positive, negative)``.

    ``seed`` fixes the pool T_r. ``split_seed`` fixes which pool samples
    become T_l and V, and ``test_seed`` fixes the synthetic test draw; both
    default to ``seed``. MNIST test sets are determined by ``seed`` alone.
    """

    task: Task = Task.SYNTHETIC2D
    pool_per_class: int = 105
    labeled_per_class: int = 5
    validation_per_class: int = 5
    test_per_class: tuple = (200, 200)
    seed: int = 0
    split_seed: Optional[int] = None
    test_seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "task", Task(self.task))
        object.__setattr__(self, "test_per_class", tuple(int(t) for t in self.test_per_class))
        if self.labeled_per_class < 1:
            raise ConfigurationError("need at least one labeled sample per class")
        if self.validation_per_class < 1:
            raise ConfigurationError("need at least one validation sample per class")
        if self.labeled_per_class + self.validation_per_class > self.pool_per_class:
            raise ConfigurationError(
                f"labeled + validation ({self.labeled_per_class} + {self.validation_per_class})"
                f" exceeds pool size {self.pool_per_class} per class"
            )
        if len(self.test_per_class) != 2 or min(self.test_per_class) < 1:
            raise ConfigurationError("test_per_class must be two positive counts")

    @classmethod
    def reference_synthetic(cls, seed: int = 0) -> "DatasetSpec":
        return cls(Task.SYNTHETIC2D, 105, 5, 5, (200, 200), seed)

    @classmethod
    def reference_mnist(cls, seed: int = 0) -> "DatasetSpec":
        return cls(Task.MNIST56, 105, 5, 5, (456, 462), seed)

    def to_dict(self) -> dict:
        return {
            "task": self.task.value,
            "pool_per_class": self.pool_per_class,
            "labeled_per_class": self.labeled_per_class,
            "validation_per_class": self.validation_per_class,
            "test_per_class": list(self.test_per_class),
            "seed": self.seed,
            "split_seed": self.split_seed,
            "test_seed": self.test_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        return cls(**d)


def _split(spec: DatasetSpec, pools_by_class: dict, test: list) -> DataPools:
    """Divide each class's pool into T_l, V and T_u at random under the split stream."""
    rng = stream(spec.seed if spec.split_seed is None else spec.split_seed, "split")
    labeled, validation, unlabeled = [], [], []
    n_lab, n_val = spec.labeled_per_class, spec.validation_per_class
    for cls in (POSITIVE, NEGATIVE):
        members = pools_by_class[cls]
        order = rng.permutation(len(members))
        lab, val = set(order[:n_lab].tolist()), set(order[n_lab:n_lab + n_val].tolist())
        for k, s in enumerate(members):
            if k in lab:
                labeled.append(s)
            elif k in val:
                validation.append(s)
            else:
                unlabeled.append(s)
    labeled = sorted(labeled, key=lambda s: s.uid)
    validation = sorted(validation, key=lambda s: s.uid)
    return DataPools(labeled, validation, unlabeled, test)


def sample_gaussian_class(rng: np.random.Generator, cls: int, n: int) -> np.ndarray:
    """Draw ``n`` points from N(mean of ``cls``, I_2)."""
    return rng.standard_normal((n, 2)) + np.asarray(SYNTHETIC_MEANS[cls])


def generate_synthetic(spec: DatasetSpec) -> DataPools:
    """Two isotropic Gaussians centered at (2, 0) (+1) and (-2, 0) (-1).

    Labels of T_l and V come from the Bayes rule (sign of the first
    coordinate), as the oracle would assign them. Test labels are the
    generating classes. T_u samples are unlabeled.
    """
    if spec.task is not Task.SYNTHETIC2D:
        raise ConfigurationError(f"generate_synthetic needs task synthetic2d, got {spec.task.value}")
    from .oracle import bayes_label

    rng = stream(spec.seed, "data")
    uid = 0
    pools_by_class = {}
    for cls in (POSITIVE, NEGATIVE):
        members = []
        for x in sample_gaussian_class(rng, cls, spec.pool_per_class):
            members.append(Sample(uid, x, None, Provenance.NATURAL, cls))
            uid += 1
        pools_by_class[cls] = members
    test = []
    test_rng = stream(spec.seed if spec.test_seed is None else spec.test_seed, "test")
    for cls, count in zip((POSITIVE, NEGATIVE), spec.test_per_class):
        for x in sample_gaussian_class(test_rng, cls, count):
            test.append(Sample(uid, x, cls, Provenance.NATURAL, cls))
            uid += 1
    pools = _split(spec, pools_by_class, test)
    pools = replace(
        pools,
        labeled=[s.with_label(bayes_label(s.features)) for s in pools.labeled],
        validation=[s.with_label(bayes_label(s.features)) for s in pools.validation],
    )
    if len({s.label for s in pools.labeled}) < 2:
        raise ConfigurationError("initial labeled set has a single class under the Bayes rule")
    return pools


def build_mnist_task(images: np.ndarray, labels: np.ndarray, spec: DatasetSpec) -> DataPools:
    """Select the 5-vs-6 pool and test set from parsed MNIST arrays.

    ``images`` is ``(n, 784)`` scaled to [0, 1]; ``labels`` holds digits. The
    pool and the test set are drawn without overlap under the data stream.
    """
    if spec.task is not Task.MNIST56:
        raise ConfigurationError(f"build_mnist_task needs task mnist56, got {spec.task.value}")
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    if images.ndim != 2 or len(images) != len(labels):
        raise ValidationError(f"images {images.shape} and labels {labels.shape} do not match")
    rng = stream(spec.seed, "data")
    uid = 0
    pools_by_class, test = {}, []
    for (digit, cls), n_test in zip(MNIST_DIGITS.items(), spec.test_per_class):
        idx = np.flatnonzero(labels == digit)
        need = spec.pool_per_class + n_test
        if len(idx) < need:
            raise ConfigurationError(f"need {need} samples of digit {digit}, only {len(idx)} available")
        chosen = rng.permutation(idx)[:need]
        members = []
        for k, src in enumerate(chosen):
            s = Sample(uid, images[src], None, Provenance.NATURAL, cls)
            uid += 1
            if k < spec.pool_per_class:
                members.append(s)
            else:
                test.append(s.with_label(cls))
        pools_by_class[cls] = members
    pools = _split(spec, pools_by_class, test)
    return replace(
        pools,
        labeled=[s.with_label(s.truth) for s in pools.labeled],
        validation=[s.with_label(s.truth) for s in pools.validation],
    )


# IDX ------------------------------------------------------------------------

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

_IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_IDX_CODES = {dt: code for code, dt in _IDX_TYPES.items()}


def decode_idx(data: bytes) -> np.ndarray:
    """Decode an IDX payload into an array with the header's shape and dtype."""
    if len(data) < 4:
        raise IdxParseError(f"need a 4-byte magic number, got {len(data)} bytes", len(data))
    zero, code, ndim = struct.unpack(">HBB", data[:4])
    if zero != 0 or code not in _IDX_TYPES or ndim == 0:
        raise IdxParseError(f"bad magic number 0x{int.from_bytes(data[:4], 'big'):08x}", 0)
    header = 4 + 4 * ndim
    if len(data) < header:
        raise IdxParseError(f"header needs {header} bytes, got {len(data)}", len(data))
    shape = struct.unpack(f">{ndim}I", data[4:header])
    dtype = _IDX_TYPES[code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    actual = len(data) - header
    if actual < expected:
        raise IdxParseError(f"payload truncated: expected {expected} bytes, got {actual}", len(data))
    return np.frombuffer(data, dtype=dtype, count=expected // dtype.itemsize, offset=header).reshape(shape)


def encode_idx(array: np.ndarray) -> bytes:
    """Inverse of :func:`decode_idx`."""
    array = np.asarray(array)
    dtype = array.dtype.newbyteorder(">") if array.dtype.itemsize > 1 else array.dtype
    code = _IDX_CODES.get(np.dtype(dtype))
    if code is None:
        raise ValidationError(f"dtype {array.dtype} has no IDX encoding")
    head = struct.pack(">HBB", 0, code, array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    return head + array.astype(dtype, copy=False).tobytes()


def parse_idx(data: bytes) -> np.ndarray:
    """Parse an MNIST image or label file.

    Images (magic 2051) become ``(n, rows * cols)`` float64 in [0, 1];
    labels (magic 2049) become an int64 vector.
    """
    magic = int.from_bytes(data[:4], "big") if len(data) >= 4 else None
    if magic not in (IMAGE_MAGIC, LABEL_MAGIC):
        if magic is None:
            raise IdxParseError(f"need a 4-byte magic number, got {len(data)} bytes", len(data))
        raise IdxParseError(f"expected magic 2051 or 2049, got {magic}", 0)
    arr = decode_idx(data)
    if magic == LABEL_MAGIC:
        return arr.astype(np.int64)
    return arr.reshape(len(arr), -1).astype(np.float64) / 255.0


def read_idx_bytes(path) -> bytes:
    """Read an IDX file, transparently gunzipping ``.gz`` or gzip-magic files."""
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def load_mnist(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    images = parse_idx(read_idx_bytes(images_path))
    labels = parse_idx(read_idx_bytes(labels_path))
    if labels.ndim != 1 or images.ndim != 2:
        raise ValidationError("image file must hold images and label file labels")
    if len(images) != len(labels):
        raise ValidationError(f"{len(images)} images but {len(labels)} labels")
    return images, labels
