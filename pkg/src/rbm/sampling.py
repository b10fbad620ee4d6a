"""Parameter samples, training sets, and test-set generation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["TrainingSet", "linear_grid", "log_tensor_grid", "random_test_set"]


@dataclass(frozen=True)
class TrainingSet:
    """Ordered list of parameter samples; row index is the sample identity.

    ``samples`` has shape (count, p). ``provenance`` is one of
    ``fine | subsampled | test``. ``source_indices`` maps each row back to
    the fine set it was drawn from (identity mapping for fine sets).
    """

    samples: np.ndarray
    provenance: str = "fine"
    source_indices: np.ndarray = field(default=None)

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if samples.shape[0] == 0:
            raise ValueError("training set must contain at least one sample")
        uniq = np.unique(samples, axis=0)
        if uniq.shape[0] != samples.shape[0]:
            raise ValueError("training set contains duplicate samples")
        object.__setattr__(self, "samples", samples)
        if self.source_indices is None:
            object.__setattr__(self, "source_indices", np.arange(samples.shape[0]))
        else:
            object.__setattr__(self, "source_indices", np.asarray(self.source_indices, dtype=int))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    def take(self, indices, provenance="subsampled"):
        """New set with the given rows, in ascending fine-set order."""
        indices = np.asarray(indices, dtype=int)
        if indices.size == 0:
            raise ValueError("cannot build a training set from an empty index list")
        if indices.min() < 0 or indices.max() >= len(self):
            raise IndexError(f"index out of range for training set of size {len(self)}")
        order = np.sort(np.unique(indices))
        return TrainingSet(self.samples[order], provenance, self.source_indices[order])


def linear_grid(lo: float, hi: float, count: int) -> TrainingSet:
    """Equally spaced one-parameter training set on [lo, hi]."""
    return TrainingSet(np.linspace(lo, hi, count)[:, None], "fine")


def log_tensor_grid(boxes, counts) -> TrainingSet:
    """Tensor grid, logarithmically spaced per dimension.

    ``boxes`` is a list of (lo, hi) pairs with lo > 0; ``counts`` the number
    of samples per dimension. The first dimension varies fastest.
    """
    axes = [np.geomspace(lo, hi, c) for (lo, hi), c in zip(boxes, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    cols = [m.ravel(order="F") for m in mesh]  # first dimension fastest
    return TrainingSet(np.column_stack(cols), "fine")


def random_test_set(boxes, count: int, seed: int, avoid: TrainingSet | None = None,
                    log_scale=False) -> TrainingSet:
    """Uniform random test set over a box, disjoint from ``avoid``.

    Sampling is uniform in linear or log coordinates per ``log_scale``
    (a bool, or one bool per dimension). Any draw that exactly matches a row
    of ``avoid`` is rejected and redrawn.
    """
    boxes = np.asarray(boxes, dtype=float)
    p = boxes.shape[0]
    if np.isscalar(log_scale):
        log_scale = [bool(log_scale)] * p
    rng = np.random.default_rng(seed)
    avoid_rows = set()
    if avoid is not None:
        avoid_rows = {row.tobytes() for row in np.ascontiguousarray(avoid.samples)}
    samples = []
    while len(samples) < count:
        draw = np.empty(p)
        for j in range(p):
            lo, hi = boxes[j]
            if log_scale[j]:
                draw[j] = np.exp(rng.uniform(np.log(lo), np.log(hi)))
            else:
                draw[j] = rng.uniform(lo, hi)
        if draw.tobytes() in avoid_rows:
            continue
        samples.append(draw)
    return TrainingSet(np.array(samples), "test")
