"""Ordinary least squares validation of precocity against social covariates.

The model regresses a social response (citations, author age, or a
discussed/not-discussed flag) on precocity, precocity squared, novelty,
and publication year.  The squared term is always derived from the same
precocity column.  Fits go through a QR factorization with hand back
substitution; R-squared is 1 - SSR/SST about the response mean.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import DocumentRecord
from .scoring import DocScore

RESPONSE_CITATIONS = "citation_count"
RESPONSE_AUTHOR_AGE = "author_age"
RESPONSE_DISCUSSED = "discussed_flag"
RESPONSES = (RESPONSE_CITATIONS, RESPONSE_AUTHOR_AGE, RESPONSE_DISCUSSED)

PREDICTORS = ("precocity", "precocity_sq", "novelty", "year")

TRANSFORM_LOG1P = "log1p"
TRANSFORM_RAW = "raw"


class CollinearityError(ValueError):
    """Design matrix is rank deficient; names the dependent column."""


@dataclass(frozen=True)
class RegressionSpec:
    response: str
    citation_transform: str = TRANSFORM_LOG1P

    def __post_init__(self):
        if self.response not in RESPONSES:
            raise ValueError(f"unknown response {self.response!r}")
        if self.citation_transform not in (TRANSFORM_LOG1P, TRANSFORM_RAW):
            raise ValueError(f"unknown transform {self.citation_transform!r}")


@dataclass(frozen=True)
class RegressionResult:
    coefficients: dict[str, float]
    intercept: float
    r_squared: float
    n: int


@dataclass(frozen=True)
class GroupSummary:
    group_id: str
    mean_precocity_z: float
    mean_citations_z: float
    n_articles: int


def _back_substitute(r: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    n = r.shape[1]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (rhs[i] - r[i, i + 1 :] @ x[i + 1 :]) / r[i, i]
    return x


def ols(x: np.ndarray, y: np.ndarray, names: Sequence[str]) -> RegressionResult:
    """Least squares with an implicit intercept column.

    Raises :class:`CollinearityError` when a predictor is linearly
    dependent on the intercept and the columns before it.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = x.shape
    if len(names) != p:
        raise ValueError("names must match the number of columns")
    if n <= p + 1:
        raise ValueError(f"need more than {p + 1} observations, got {n}")
    design = np.column_stack([np.ones(n), x])
    q, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    tol = max(n, p + 1) * np.finfo(np.float64).eps * (diag.max() if diag.size else 1.0)
    for j, d in enumerate(diag):
        if d <= tol:
            name = "intercept" if j == 0 else names[j - 1]
            raise CollinearityError(
                f"column '{name}' is collinear with the preceding columns"
            )
    beta = _back_substitute(r, q.T @ y)
    fitted = design @ beta
    ssr = float(np.sum((y - fitted) ** 2))
    sst = float(np.sum((y - y.mean()) ** 2))
    # A constant response has no variance to explain; the threshold
    # absorbs float dust from the mean subtraction.
    if sst <= max(float(np.sum(y * y)), 1.0) * 1e-14:
        r_squared = 0.0
    else:
        r_squared = min(max(1.0 - ssr / sst, 0.0), 1.0)
    return RegressionResult(
        coefficients={name: float(b) for name, b in zip(names, beta[1:])},
        intercept=float(beta[0]),
        r_squared=r_squared,
        n=n,
    )


def _response_value(doc: DocumentRecord, spec: RegressionSpec) -> float | None:
    if spec.response == RESPONSE_CITATIONS:
        if doc.citation_count is None:
            return None
        if spec.citation_transform == TRANSFORM_LOG1P:
            return math.log1p(doc.citation_count)
        return float(doc.citation_count)
    if spec.response == RESPONSE_AUTHOR_AGE:
        if doc.author_birth_year is None:
            return None
        return float(doc.year - doc.author_birth_year)
    if doc.discussed_flag is None:
        return None
    return 1.0 if doc.discussed_flag else 0.0


def build_rows(
    doc_scores: Sequence[DocScore],
    docs: Mapping[str, DocumentRecord],
    spec: RegressionSpec,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Design matrix (precocity, precocity^2, novelty, year) and response.

    Documents with a missing response are dropped; the count of dropped
    rows is returned alongside.
    """
    xs, ys = [], []
    dropped = 0
    for score in doc_scores:
        doc = docs.get(score.doc_id)
        if doc is None:
            dropped += 1
            continue
        y = _response_value(doc, spec)
        if y is None:
            dropped += 1
            continue
        xs.append([score.precocity, score.precocity**2, score.novelty, float(doc.year)])
        ys.append(y)
    return np.array(xs, dtype=np.float64), np.array(ys, dtype=np.float64), dropped


def fit_ols(
    doc_scores: Sequence[DocScore],
    docs: Mapping[str, DocumentRecord],
    spec: RegressionSpec,
    predictors: Sequence[str] = PREDICTORS,
) -> RegressionResult:
    """Fit the standard precocity regression for one response.

    ``predictors`` may drop columns; the normalized perplexity contrast
    makes novelty an exact affine function of precocity, so that method
    refits without the redundant column.
    """
    x, y, _ = build_rows(doc_scores, docs, spec)
    if x.size == 0 or x.shape[0] <= 5:
        raise ValueError(f"too few observations with '{spec.response}' present: {len(y)}")
    if tuple(predictors) != PREDICTORS:
        keep = [PREDICTORS.index(p) for p in predictors]
        x = x[:, keep]
    return ols(x, y, list(predictors))


def zscore(values: Sequence[float]) -> list[float]:
    """Standardize by the mean and population standard deviation."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < 2:
        raise ValueError("need at least 2 values")
    std = float(arr.std())
    if std == 0.0:
        raise ValueError("zero variance")
    return ((arr - arr.mean()) / std).tolist()


def summarize_groups(
    doc_scores: Sequence[DocScore],
    docs: Mapping[str, DocumentRecord],
    group_field: str = "group_tags",
) -> list[GroupSummary]:
    """Per-group means of document precocity and citation z-scores.

    z-scores are computed against the full distribution of scored
    documents with citation counts; a document carrying several group
    tags contributes to each.
    """
    if group_field not in ("group_tags", "author_ids"):
        raise ValueError(f"unknown group field {group_field!r}")
    usable = [
        s for s in doc_scores
        if s.doc_id in docs and docs[s.doc_id].citation_count is not None
    ]
    if len(usable) < 2:
        raise ValueError("need at least 2 scored documents with citation counts")
    prec_z = zscore([s.precocity for s in usable])
    cite_z = zscore([float(docs[s.doc_id].citation_count) for s in usable])
    groups: dict[str, list[int]] = {}
    for i, s in enumerate(usable):
        for tag in getattr(docs[s.doc_id], group_field):
            groups.setdefault(tag, []).append(i)
    return [
        GroupSummary(
            group_id=tag,
            mean_precocity_z=float(np.mean([prec_z[i] for i in members])),
            mean_citations_z=float(np.mean([cite_z[i] for i in members])),
            n_articles=len(members),
        )
        for tag, members in sorted(groups.items())
    ]


def write_results_json(
    results: Mapping[str, Mapping[str, RegressionResult]], path: str | Path
) -> None:
    """results[method_fraction][response] -> RegressionResult, as JSON."""
    payload = {
        combo: {
            response: {
                "coefficients": res.coefficients,
                "intercept": res.intercept,
                "r_squared": res.r_squared,
                "n": res.n,
            }
            for response, res in by_response.items()
        }
        for combo, by_response in results.items()
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")


def write_results_table_csv(
    results: Mapping[str, Mapping[str, RegressionResult]], path: str | Path
) -> None:
    """Flat table: response rows, method x fraction columns of R-squared."""
    combos = sorted(results)
    responses = sorted({r for by_response in results.values() for r in by_response})
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["response"] + combos)
        for response in responses:
            row = [response]
            for combo in combos:
                res = results[combo].get(response)
                row.append("" if res is None else f"{res.r_squared:.6f}")
            writer.writerow(row)


def write_group_summaries_csv(groups: Sequence[GroupSummary], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["group_id", "mean_precocity_z", "mean_citations_z", "n_articles"])
        for g in groups:
            writer.writerow(
                [g.group_id, repr(g.mean_precocity_z), repr(g.mean_citations_z), g.n_articles]
            )
