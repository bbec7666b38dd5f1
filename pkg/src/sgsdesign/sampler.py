"""Abstraction-sample designs: SRS, SGS, random oversampling and inverse SGS.

Every draw returns a :class:`Sample` holding cohort row indices and the
inverse inclusion probability of each row. Sampling within a stratum is
without replacement; only ROS and the bootstrap form of inverse SGS repeat
rows.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .design import DesignKind, DesignSpec, sampling_probabilities
from .exceptions import InfeasibleDesignError

__all__ = [
    "Sample",
    "draw_srs",
    "draw_sgs",
    "random_oversample",
    "draw_inverse_sgs",
    "draw",
    "sample_to_csv",
]


@dataclass
class Sample:
    unit_indices: np.ndarray
    weights: np.ndarray
    design: DesignSpec
    seed: int | None = None

    def __post_init__(self):
        self.unit_indices = np.asarray(self.unit_indices, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.unit_indices.shape != self.weights.shape:
            raise ValueError("unit_indices and weights differ in length")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")

    def __len__(self):
        return self.unit_indices.size

    @property
    def n_distinct(self):
        """Abstraction cost: distinct cohort units in the sample."""
        return int(np.unique(self.unit_indices).size)


def _seed_value(seed):
    return seed if isinstance(seed, (int, np.integer)) or seed is None else None


def draw_srs(N, n, seed=None) -> Sample:
    """``n`` distinct units uniformly from ``range(N)``; weights ``N / n``."""
    if n > N:
        raise InfeasibleDesignError(f"SRS budget n={n} exceeds cohort size N={N}")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(N, size=n, replace=False))
    return Sample(idx, np.full(n, N / n), DesignSpec(DesignKind.SRS, n), _seed_value(seed))


def _stratum_counts(n, ratio):
    n1 = int(round(n * ratio))
    return n1, n - n1


def draw_sgs(surrogate, n, ratio, seed=None, *, eligible=None) -> Sample:
    """Surrogate-guided sample: ``round(n R)`` units from ``Z=1``, the rest from ``Z=0``.

    ``surrogate`` is the cohort's binary surrogate column. ``eligible``
    optionally restricts sampling to a subset of rows (e.g. excluding a
    validation hold-out); stratum sizes and weights then refer to that subset.
    """
    z = np.asarray(surrogate).astype(bool)
    rows = np.arange(z.size) if eligible is None else np.asarray(eligible)
    zr = z[rows]
    design = DesignSpec(DesignKind.SGS, n, ratio)
    n1, n0 = _stratum_counts(n, ratio)
    pos, neg = rows[zr], rows[~zr]
    for name, need, have in (("Z=1", n1, pos.size), ("Z=0", n0, neg.size)):
        if need > have:
            raise InfeasibleDesignError(
                f"SGS needs {need} units from the {name} stratum but only {have} exist",
                stratum=name)
    N = rows.size
    pi1, pi0 = sampling_probabilities(design, pos.size / N, N)
    rng = np.random.default_rng(seed)
    take1 = rng.choice(pos, size=n1, replace=False)
    take0 = rng.choice(neg, size=n0, replace=False)
    idx = np.concatenate([take1, take0])
    weights = np.concatenate([np.full(n1, 1 / pi1), np.full(n0, 1 / pi0)])
    order = np.argsort(idx, kind="stable")
    return Sample(idx[order], weights[order], design, _seed_value(seed))


def random_oversample(sample: Sample, outcomes, seed=None) -> Sample:
    """Replicate cases with replacement until they match the control count.

    Weights travel with their units; the design becomes ROS but the
    abstraction cost (``n_distinct``) is unchanged.
    """
    y = np.asarray(outcomes)[sample.unit_indices].astype(bool)
    n_case, n_ctrl = int(y.sum()), int((~y).sum())
    if n_case == 0:
        raise ValueError("cannot balance a sample with zero cases")
    if n_ctrl == 0:
        raise ValueError("cannot balance a sample with zero controls")
    extra = max(n_ctrl - n_case, 0)
    rng = np.random.default_rng(seed)
    case_pos = np.flatnonzero(y)
    pick = case_pos[rng.integers(0, n_case, size=extra)]
    idx = np.concatenate([sample.unit_indices, sample.unit_indices[pick]])
    weights = np.concatenate([sample.weights, sample.weights[pick]])
    design = DesignSpec(DesignKind.ROS, sample.design.budget)
    return Sample(idx, weights, design, _seed_value(seed))


def draw_inverse_sgs(frame: Sample, surrogate, n, ratio, p_z, seed=None, *,
                     replace=True, cohort_size=None) -> Sample:
    """Resample an SGS-collected frame back toward SRS composition.

    Frame units are selected with probability proportional to the inverse of
    the SGS inclusion probability of their stratum, which makes the expected
    share of ``Z=1`` equal ``p_z``. With ``replace=True`` this is a weighted
    bootstrap; otherwise ``round(n p_z)`` units are drawn without
    replacement from the frame's ``Z=1`` units and the rest from ``Z=0``.
    The result carries uniform weights ``N / n``.
    """
    z = np.asarray(surrogate).astype(bool)[frame.unit_indices]
    N = cohort_size if cohort_size is not None else len(surrogate)
    sgs = DesignSpec(DesignKind.SGS, len(frame), ratio)
    pi1, pi0 = sampling_probabilities(sgs, p_z, N)
    design = DesignSpec(DesignKind.INVERSE_SGS, n, ratio)
    rng = np.random.default_rng(seed)
    if replace:
        prob = np.where(z, 1 / pi1, 1 / pi0)
        prob /= prob.sum()
        pick = rng.choice(len(frame), size=n, replace=True, p=prob)
    else:
        n1 = int(round(n * p_z))
        pos, neg = np.flatnonzero(z), np.flatnonzero(~z)
        for name, need, have in (("Z=1", n1, pos.size), ("Z=0", n - n1, neg.size)):
            if need > have:
                raise InfeasibleDesignError(
                    f"inverse SGS needs {need} frame units with {name}, frame has {have}",
                    stratum=name)
        pick = np.concatenate([rng.choice(pos, n1, replace=False),
                               rng.choice(neg, n - n1, replace=False)])
    idx = frame.unit_indices[pick]
    return Sample(idx, np.full(n, N / n), design, _seed_value(seed))


def draw(design: DesignSpec, outcomes, surrogate=None, seed=None, *, eligible=None) -> Sample:
    """Dispatch on ``design.kind`` for SRS, SGS and ROS (SRS then oversample)."""
    rows = np.arange(len(outcomes)) if eligible is None else np.asarray(eligible)
    if design.kind is DesignKind.SGS:
        if surrogate is None:
            raise ValueError("SGS needs a surrogate column")
        return draw_sgs(surrogate, design.budget, design.ratio, seed, eligible=rows)
    if design.kind in (DesignKind.SRS, DesignKind.ROS):
        seeds = np.random.SeedSequence(seed).spawn(2) if design.kind is DesignKind.ROS else [seed]
        s = draw_srs(rows.size, design.budget, seeds[0])
        s = Sample(rows[s.unit_indices], s.weights, s.design, s.seed)
        if design.kind is DesignKind.ROS:
            s = random_oversample(s, outcomes, seeds[1])
            s.seed = _seed_value(seed)
        return s
    raise ValueError("inverse SGS resamples an existing frame; use draw_inverse_sgs")


def sample_to_csv(sample: Sample, outcomes=None, surrogate=None, ids=None) -> str:
    """CSV with header ``unit_id,z,y,weight,design,seed``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["unit_id", "z", "y", "weight", "design", "seed"])
    label = sample.design.label
    seed = "" if sample.seed is None else sample.seed
    for i, w in zip(sample.unit_indices, sample.weights):
        uid = int(ids[i]) if ids is not None else int(i)
        z = "" if surrogate is None else int(surrogate[i])
        y = "" if outcomes is None else int(outcomes[i])
        writer.writerow([uid, z, y, repr(float(w)), label, seed])
    return buf.getvalue()
