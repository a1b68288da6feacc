"""Model specification, datasets, parameter sets and individualized grids."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .gauss import Interval


@dataclass(frozen=True)
class EquationSpec:
    response: str
    regressors: tuple[str, ...]
    n_categories: int

    def __post_init__(self):
        object.__setattr__(self, "regressors", tuple(self.regressors))
        if not self.regressors:
            raise ValueError(f"equation {self.response!r} has no regressors")
        if len(set(self.regressors)) != len(self.regressors):
            raise ValueError(f"equation {self.response!r} lists a regressor twice")
        if int(self.n_categories) < 2:
            raise ValueError(f"equation {self.response!r} needs at least 2 categories")


@dataclass(frozen=True)
class ModelSpec:
    """K ordered-response equations plus an optional coefficient-tying map.

    ``ties`` is a sequence of groups; each group is a sequence of
    ``(equation_index, regressor_name)`` pairs sharing one coefficient.
    Coefficients not mentioned in any group are free.
    """

    equations: tuple[EquationSpec, ...]
    ties: tuple[tuple[tuple[int, str], ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "equations", tuple(self.equations))
        object.__setattr__(
            self, "ties", tuple(tuple((int(k), str(r)) for k, r in g) for g in self.ties)
        )
        if not self.equations:
            raise ValueError("a model needs at least one equation")
        seen = set()
        for group in self.ties:
            names = {r for _, r in group}
            if len(names) > 1:
                raise ValueError(f"tie group mixes regressors {sorted(names)}")
            for k, r in group:
                if not 0 <= k < len(self.equations):
                    raise ValueError(f"tie refers to unknown equation {k}")
                if r not in self.equations[k].regressors:
                    raise ValueError(f"tie refers to {r!r}, not a regressor of equation {k}")
                if (k, r) in seen:
                    raise ValueError(f"coefficient ({k}, {r!r}) appears in two tie groups")
                seen.add((k, r))

    @property
    def n_equations(self) -> int:
        return len(self.equations)

    @property
    def n_categories(self) -> tuple[int, ...]:
        return tuple(int(eq.n_categories) for eq in self.equations)

    @property
    def response_names(self) -> tuple[str, ...]:
        return tuple(eq.response for eq in self.equations)

    @property
    def regressor_names(self) -> tuple[str, ...]:
        """Distinct regressors in order of first appearance."""
        out: dict[str, None] = {}
        for eq in self.equations:
            for r in eq.regressors:
                out.setdefault(r, None)
        return tuple(out)

    def coefficient_groups(self) -> tuple[list[list[int]], list[str]]:
        """Map each (equation, regressor) slot to a free coefficient index.

        Returns ``(slot_index, labels)`` where ``slot_index[k][m]`` is the
        free-coefficient position of regressor ``m`` of equation ``k``.
        Free coefficients are numbered in order of first appearance.
        """
        tied = {}
        for gi, group in enumerate(self.ties):
            for k, r in group:
                tied[(k, r)] = gi
        slot_index: list[list[int]] = []
        labels: list[str] = []
        group_pos: dict[int, int] = {}
        for k, eq in enumerate(self.equations):
            row = []
            for r in eq.regressors:
                gi = tied.get((k, r))
                if gi is not None and gi in group_pos:
                    row.append(group_pos[gi])
                    continue
                pos = len(labels)
                if gi is not None:
                    group_pos[gi] = pos
                    labels.append(f"tied: {r}")
                else:
                    labels.append(f"{eq.response}: {r}")
                row.append(pos)
            slot_index.append(row)
        return slot_index, labels

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelSpec":
        eqs = [
            EquationSpec(e["response"], tuple(e["regressors"]), int(e["categories"]))
            for e in doc["equations"]
        ]
        ties = [[(int(k), str(r)) for k, r in group] for group in doc.get("ties", [])]
        return cls(tuple(eqs), tuple(tuple(g) for g in ties))

    def to_dict(self) -> dict:
        return {
            "equations": [
                {"response": e.response, "regressors": list(e.regressors), "categories": e.n_categories}
                for e in self.equations
            ],
            "ties": [[[k, r] for k, r in g] for g in self.ties],
        }


@dataclass(frozen=True)
class Dataset:
    """N observations: named real regressors and named integer responses (1-based)."""

    regressors: np.ndarray
    regressor_names: tuple[str, ...]
    responses: np.ndarray
    response_names: tuple[str, ...]

    def __post_init__(self):
        X = np.array(self.regressors, dtype=float, ndmin=2)
        Y = np.array(self.responses, ndmin=2)
        if X.shape[0] != Y.shape[0]:
            raise ValueError("regressors and responses disagree on the number of rows")
        if X.shape[1] != len(self.regressor_names) or Y.shape[1] != len(self.response_names):
            raise ValueError("column names do not match the data shape")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "regressors", X)
        object.__setattr__(self, "responses", Y)
        object.__setattr__(self, "regressor_names", tuple(self.regressor_names))
        object.__setattr__(self, "response_names", tuple(self.response_names))

    @property
    def n_obs(self) -> int:
        return self.regressors.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.regressors[:, self.regressor_names.index(name)]

    def response(self, name: str) -> np.ndarray:
        return self.responses[:, self.response_names.index(name)]

    def subset(self, rows) -> "Dataset":
        return replace(self, regressors=self.regressors[rows], responses=self.responses[rows])


@dataclass
class ParamSet:
    """Free coefficients, per-equation ascending cut-points and the in-between covariance."""

    beta: np.ndarray
    cutpoints: list[np.ndarray]
    between_cov: np.ndarray

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        self.cutpoints = [np.asarray(c, dtype=float) for c in self.cutpoints]
        self.between_cov = np.asarray(self.between_cov, dtype=float)
        for k, c in enumerate(self.cutpoints):
            if np.any(np.diff(c) <= 0):
                raise ValueError(f"cut-points of equation {k} are not strictly ascending: {c}")

    @property
    def theta(self) -> np.ndarray:
        """Stacked parameter vector: free coefficients then all cut-points."""
        return np.concatenate([self.beta, *self.cutpoints])

    def with_theta(self, theta: np.ndarray) -> "ParamSet":
        theta = np.asarray(theta, dtype=float)
        p = self.beta.size
        cuts, pos = [], p
        for c in self.cutpoints:
            cuts.append(theta[pos : pos + c.size].copy())
            pos += c.size
        return ParamSet(theta[:p].copy(), cuts, self.between_cov.copy())

    def copy(self) -> "ParamSet":
        return ParamSet(self.beta.copy(), [c.copy() for c in self.cutpoints], self.between_cov.copy())


@dataclass
class Design:
    """Per-equation regressor blocks and their coefficient positions.

    Built once per (spec, data); every estimator works from this view.
    """

    blocks: list[np.ndarray]
    slots: list[np.ndarray]
    labels: list[str]
    responses: np.ndarray
    n_categories: tuple[int, ...]
    n_coef: int = field(init=False)

    def __post_init__(self):
        self.n_coef = len(self.labels)

    @classmethod
    def build(cls, spec: ModelSpec, data: Dataset) -> "Design":
        slot_index, labels = spec.coefficient_groups()
        blocks = [
            np.ascontiguousarray(data.regressors[:, [data.regressor_names.index(r) for r in eq.regressors]])
            for eq in spec.equations
        ]
        cols = [data.response_names.index(eq.response) for eq in spec.equations]
        responses = np.asarray(data.responses[:, cols], dtype=np.int64)
        slots = [np.asarray(s, dtype=np.int64) for s in slot_index]
        return cls(blocks, slots, labels, responses, spec.n_categories)

    @property
    def n_obs(self) -> int:
        return self.responses.shape[0]

    @property
    def n_equations(self) -> int:
        return len(self.blocks)

    def index(self, beta: np.ndarray) -> np.ndarray:
        """Structural index x'_{i,k} beta_k as an N x K array."""
        beta = np.asarray(beta, dtype=float)
        return np.column_stack([X @ beta[s] for X, s in zip(self.blocks, self.slots)])

    def grid_bounds(self, beta, cutpoints) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper ends of every observation's individualized interval (N x K)."""
        xb = self.index(beta)
        lo = np.empty_like(xb)
        hi = np.empty_like(xb)
        for k, cuts in enumerate(cutpoints):
            edges = np.concatenate([[-np.inf], cuts, [np.inf]])
            j = self.responses[:, k]
            lo[:, k] = edges[j - 1] - xb[:, k]
            hi[:, k] = edges[j] - xb[:, k]
        return lo, hi

    def scatter(self, per_equation: np.ndarray) -> np.ndarray:
        """Collapse N x K equation weights into N x P coefficient moments.

        Entry (i, g) is the sum over slots (k, m) tied to g of x_{i,k,m} * w_{i,k}.
        """
        out = np.zeros((self.n_obs, self.n_coef))
        for k, (X, s) in enumerate(zip(self.blocks, self.slots)):
            contrib = X * per_equation[:, k : k + 1]
            if len(np.unique(s)) == len(s):
                out[:, s] += contrib
            else:
                for m, g in enumerate(s):
                    out[:, g] += contrib[:, m]
        return out


@dataclass
class ValidationReport:
    issues: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        return "ok" if self.ok else "\n".join(self.issues)


def validate(spec: ModelSpec, data: Dataset) -> ValidationReport:
    """Scan the whole dataset against the spec and list every problem found."""
    report = ValidationReport()
    issues = report.issues
    for name in spec.regressor_names:
        if name not in data.regressor_names:
            issues.append(f"missing regressor column {name!r}")
    for eq in spec.equations:
        if eq.response not in data.response_names:
            issues.append(f"missing response column {eq.response!r}")

    for name in spec.regressor_names:
        if name not in data.regressor_names:
            continue
        col = data.column(name)
        bad = ~np.isfinite(col)
        if bad.any():
            issues.append(f"regressor {name!r}: {int(bad.sum())} non-finite values (first row {int(np.argmax(bad))})")
        elif data.n_obs > 0 and np.ptp(col) == 0.0:
            issues.append(f"regressor {name!r} is constant; intercepts are absorbed by the cut-points")

    for k, eq in enumerate(spec.equations):
        if eq.response not in data.response_names:
            continue
        y = np.asarray(data.response(eq.response))
        if not np.issubdtype(y.dtype, np.integer):
            yf = y.astype(float)
            if np.any(~np.isfinite(yf)) or np.any(yf != np.round(yf)):
                issues.append(f"response {eq.response!r} has non-integer values")
                continue
            y = yf.astype(np.int64)
        out_of_range = (y < 1) | (y > eq.n_categories)
        if out_of_range.any():
            rows = np.flatnonzero(out_of_range)
            issues.append(
                f"response {eq.response!r}: {rows.size} values outside 1..{eq.n_categories}"
                f" (first row {int(rows[0])}, value {int(y[rows[0]])})"
            )
        counts = np.bincount(y[~out_of_range], minlength=eq.n_categories + 1)[1:]
        for j, c in enumerate(counts, start=1):
            if c == 0:
                issues.append(f"response {eq.response!r} (equation {k}): category {j} is empty")
    if data.n_obs == 0:
        issues.append("dataset has no observations")
    return report


def _centering_shift(X: np.ndarray) -> np.ndarray:
    # columns already centered to rounding level are left alone, so demeaning is idempotent
    if X.shape[0] == 0:
        return np.zeros(X.shape[1])
    m = X.mean(axis=0)
    scale = np.maximum(1.0, np.abs(X).max(axis=0))
    return np.where(np.abs(m) <= 1e-14 * scale, 0.0, m)


def demean_regressors(data: Dataset) -> tuple[Dataset, np.ndarray]:
    """Centre every regressor column; returns the new dataset and the removed means."""
    first = _centering_shift(data.regressors)
    centered = data.regressors - first
    # second pass removes the rounding residue of the first
    second = _centering_shift(centered)
    centered = centered - second
    return replace(data, regressors=centered), first + second


def individual_grid(spec: ModelSpec, data: Dataset, params: ParamSet, i: int, k: int) -> Interval:
    """Interval (nu_{j-1} - x'b, nu_j - x'b] of observation i in equation k."""
    slot_index, _ = spec.coefficient_groups()
    eq = spec.equations[k]
    x = np.array([data.regressors[i, data.regressor_names.index(r)] for r in eq.regressors])
    xb = float(x @ params.beta[slot_index[k]])
    j = int(data.response(eq.response)[i])
    edges = np.concatenate([[-np.inf], params.cutpoints[k], [np.inf]])
    return Interval(edges[j - 1] - xb, edges[j] - xb)


def make_dataset(X, regressor_names: Sequence[str], Y, response_names: Sequence[str]) -> Dataset:
    return Dataset(np.asarray(X, float), tuple(regressor_names), np.asarray(Y, np.int64), tuple(response_names))
