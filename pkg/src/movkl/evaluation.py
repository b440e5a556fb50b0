"""Prediction metrics and one-curve-leave-out cross-validation.

The curve-prediction score is the residual sum of squares integrated over
the output domain (RSSE); movement-state predictions are scored by the
percentage of labels correctly recognized (LCR) after thresholding the
regressed curve.  Hyperparameters (the ridge value and, when integral
operators are in play, their truncation rank) are selected by holding out
one full input-output curve pair per fold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from .errors import DataError, DegenerateModelError, DimensionError, SolverError
from .funcspace import CurveVec
from .learn import FitConfig, movkl_fit, predict

__all__ = ["CvSpec", "CvCandidate", "rsse", "lcr", "loo_cv"]


@dataclass
class CvSpec:
    """Hyperparameter grids for leave-one-curve-out selection.

    ``rank_grid`` entries are integral-operator truncation ranks; ``None``
    keeps whatever rank the stack builder uses by default.  Selection
    minimizes accumulated RSSE over folds.
    """

    lambda_grid: list[float]
    rank_grid: list[int | None] = field(default_factory=lambda: [None])

    def __post_init__(self):
        if not self.lambda_grid:
            raise ValueError("lambda grid must be non-empty")
        if not list(self.rank_grid):
            raise ValueError("rank grid must be non-empty")
        if any(lam <= 0 for lam in self.lambda_grid):
            raise ValueError("lambda candidates must be positive")
        if any(q is not None and q < 1 for q in self.rank_grid):
            raise ValueError("rank candidates must be >= 1")


@dataclass
class CvCandidate:
    lam: float
    rank: int | None
    cv_rsse: float | None
    valid: bool


def rsse(truth: CurveVec, pred: CurveVec) -> float:
    """Integrated residual sum of squares sum_i int (y_i - yhat_i)^2 dt."""
    if truth.grid != pred.grid:
        raise DimensionError("truth and prediction live on different grids")
    if truth.n != pred.n:
        raise DimensionError(
            f"{truth.n} truth curves scored against {pred.n} predictions"
        )
    diff = truth.values - pred.values
    return float(np.sum((diff * diff) @ truth.grid.weights))


def lcr(truth_labels: CurveVec, pred: CurveVec, threshold: float = 0.5) -> float:
    """Percentage of step-label samples recovered by thresholding ``pred``."""
    if truth_labels.grid != pred.grid:
        raise DimensionError("labels and prediction live on different grids")
    if truth_labels.n != pred.n:
        raise DimensionError(
            f"{truth_labels.n} label curves scored against {pred.n} predictions"
        )
    if not np.isfinite(threshold):
        raise ValueError("threshold must be finite")
    labels = truth_labels.values
    off_binary = np.minimum(np.abs(labels), np.abs(labels - 1.0))
    if np.any(off_binary > 1e-9):
        bad = np.argwhere(off_binary > 1e-9)[0]
        raise DataError(
            f"label curve {bad[0]} has non-binary value at sample {bad[1]}"
        )
    predicted = pred.values >= threshold
    actual = labels >= 0.5
    return float(100.0 * np.mean(predicted == actual))


def loo_cv(stack_builder, inputs: CurveVec, targets: CurveVec, spec: CvSpec,
           cfg: FitConfig):
    """Leave-one-curve-out selection of (lambda, rank).

    ``stack_builder`` maps a truncation rank (possibly ``None``) to a
    :class:`KernelStack`; it is the stack template.  Every candidate pair
    is scored by refitting on the n-1 remaining curves and accumulating
    the held-out RSSE over all n folds.  Candidates whose folds fail are
    marked invalid and excluded.  Ties break toward the smallest lambda,
    then the smallest rank.

    Returns ``(best_lambda, best_rank, candidates)``.
    """
    n = inputs.n
    if n < 2:
        raise ValueError("leave-one-out needs at least two curves")
    if targets.n != n:
        raise DimensionError(f"{n} inputs paired with {targets.n} targets")

    candidates: list[CvCandidate] = []
    ranks = list(spec.rank_grid)
    lams = list(spec.lambda_grid)
    for rank in ranks:
        stack = stack_builder(rank)
        for lam in lams:
            fold_cfg = FitConfig(
                lam=lam, r=cfg.r, mkl_tol=cfg.mkl_tol,
                mkl_max_iter=cfg.mkl_max_iter, solve=cfg.solve,
            )
            total = 0.0
            valid = True
            for i in range(n):
                keep = [j for j in range(n) if j != i]
                tr_in = CurveVec(inputs.grid, inputs.values[keep])
                tr_out = CurveVec(targets.grid, targets.values[keep])
                try:
                    model = movkl_fit(stack, tr_in, tr_out, fold_cfg)
                    pred = predict(model, inputs[i])
                except (SolverError, DegenerateModelError, np.linalg.LinAlgError):
                    valid = False
                    break
                held = CurveVec(targets.grid, targets.values[i][None, :])
                total += rsse(held, CurveVec(targets.grid, pred.values[None, :]))
            candidates.append(
                CvCandidate(lam, rank, total if valid else None, valid)
            )

    best = None
    for cand in candidates:
        if not cand.valid:
            continue
        if best is None or cand.cv_rsse < best.cv_rsse:
            best = cand
        elif cand.cv_rsse == best.cv_rsse:
            if (cand.lam, _rank_key(cand.rank)) < (best.lam, _rank_key(best.rank)):
                best = cand
    if best is None:
        raise SolverError("every cross-validation candidate failed")
    return best.lam, best.rank, candidates


def _rank_key(rank):
    return -1 if rank is None else rank
