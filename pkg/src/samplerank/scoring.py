"""Priority scores and the ranked annotation queue.

Two formulas, both mapping [0,1] features to a [0,1] priority:

    basic      = a*dist + b*(1 - iou)
    multiparty = (a*orph + b*err + c*dist + d*(1 - iou)) * (1 - loop)

The coefficient sets are constrained to sum to 1, which is what keeps the
scores inside [0,1]. The multiparty form suppresses isolated samples via
the outlier probability and rewards membership in orphaned and error
clusters.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

_SUM_TOL = 1e-9

STRATEGY_BPS = "bps"
STRATEGY_MPS = "mps"
_STRATEGIES = (STRATEGY_BPS, STRATEGY_MPS)


@dataclass(frozen=True)
class Coefficients:
    """Importance weights; defaults follow the reference parameterisation."""

    bps_a: float = 0.75
    bps_b: float = 0.25
    mps_a: float = 0.50
    mps_b: float = 0.25
    mps_c: float = 0.20
    mps_d: float = 0.05

    def __post_init__(self) -> None:
        values = (self.bps_a, self.bps_b, self.mps_a, self.mps_b, self.mps_c, self.mps_d)
        if any(v < 0.0 for v in values):
            raise ValueError("coefficients must be nonnegative")
        if abs(self.bps_a + self.bps_b - 1.0) > _SUM_TOL:
            raise ValueError("bps coefficients must sum to 1")
        if abs(self.mps_a + self.mps_b + self.mps_c + self.mps_d - 1.0) > _SUM_TOL:
            raise ValueError("mps coefficients must sum to 1")


def _check_unit(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name}={value} outside [0,1]")
    return value


def bps(dist: float, pred_iou: float, coeffs: Coefficients = Coefficients()) -> float:
    """Basic priority: far from every known cluster and predicted to score poorly."""
    dist = _check_unit("dist", dist)
    pred_iou = _check_unit("pred_iou", pred_iou)
    return coeffs.bps_a * dist + coeffs.bps_b * (1.0 - pred_iou)


def mps(
    orph: float,
    err: float,
    dist: float,
    pred_iou: float,
    loop: float,
    coeffs: Coefficients = Coefficients(),
) -> float:
    """Multiparty priority with outlier suppression."""
    orph = _check_unit("orph", orph)
    err = _check_unit("err", err)
    dist = _check_unit("dist", dist)
    pred_iou = _check_unit("pred_iou", pred_iou)
    loop = _check_unit("loop", loop)
    inner = (
        coeffs.mps_a * orph
        + coeffs.mps_b * err
        + coeffs.mps_c * dist
        + coeffs.mps_d * (1.0 - pred_iou)
    )
    return inner * (1.0 - loop)


@dataclass(frozen=True)
class SampleFeatures:
    """Input bundle for one sample; every field is required and in [0,1]."""

    id: int
    dist: float
    pred_iou: float
    loop: float
    orph: float
    err: float

    def __post_init__(self) -> None:
        for name in ("dist", "pred_iou", "loop", "orph", "err"):
            value = getattr(self, name)
            if value is None:
                raise ValueError(f"sample {self.id}: missing feature {name}")
            object.__setattr__(self, name, _check_unit(name, value))


@dataclass(frozen=True)
class SampleScore:
    id: int
    dist: float
    pred_iou: float
    loop: float
    orph: float
    err: float
    bps: float = field(default=0.0)
    mps: float = field(default=0.0)


def score_all(
    features: list[SampleFeatures], coeffs: Coefficients = Coefficients()
) -> list[SampleScore]:
    """Evaluate both formulas for every sample."""
    out = []
    for f in features:
        out.append(
            SampleScore(
                id=f.id,
                dist=f.dist,
                pred_iou=f.pred_iou,
                loop=f.loop,
                orph=f.orph,
                err=f.err,
                bps=bps(f.dist, f.pred_iou, coeffs),
                mps=mps(f.orph, f.err, f.dist, f.pred_iou, f.loop, coeffs),
            )
        )
    return out


def rank(scores: list[SampleScore], which: str = STRATEGY_BPS) -> list[int]:
    """Ids ordered by descending score; ties break toward the smaller id."""
    if which not in _STRATEGIES:
        raise ValueError(f"unknown strategy {which!r}, expected one of {_STRATEGIES}")
    if not scores:
        raise ValueError("cannot rank an empty score list")
    key = (lambda s: s.bps) if which == STRATEGY_BPS else (lambda s: s.mps)
    return [s.id for s in sorted(scores, key=lambda s: (-key(s), s.id))]


def select_budget(ranked: list[int], n: int) -> list[int]:
    """First n ids of a ranked queue; prefixes nest by construction."""
    if not 1 <= n <= len(ranked):
        raise ValueError(f"budget {n} out of range [1, {len(ranked)}]")
    return list(ranked[:n])


def write_queue_csv(scores: list[SampleScore], which: str, path) -> None:
    """Export the ranked queue for annotation tooling."""
    ordered = rank(scores, which)
    by_id = {s.id: s for s in scores}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "id", "score", "dist", "pred_iou", "loop", "orph", "err"])
        for position, sample_id in enumerate(ordered, start=1):
            s = by_id[sample_id]
            value = s.bps if which == STRATEGY_BPS else s.mps
            writer.writerow(
                [position, sample_id]
                + [f"{x:.9g}" for x in (value, s.dist, s.pred_iou, s.loop, s.orph, s.err)]
            )
