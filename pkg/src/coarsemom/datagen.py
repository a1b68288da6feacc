"""Deterministic synthetic data for the coarsened-observation models.

Every random column draws from its own counter-based Philox stream keyed by
``(seed, stream id)``, and normals come from the inverse CDF of those
uniforms. A given seed therefore reproduces the same dataset bit for bit,
whatever order the columns are built in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .model import Dataset, EquationSpec, ModelSpec

_ERROR_STREAM = 1 << 20


def uniform_stream(seed: int, stream: int, n: int) -> np.ndarray:
    """n uniforms in the open interval (0, 1) from stream ``stream`` of ``seed``."""
    if not 0 <= seed < 2**64:
        raise ValueError("seed must fit in 64 bits")
    bits = np.random.Philox(key=int(seed) | (int(stream) << 64)).random_raw(n)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def normal_stream(seed: int, stream: int, n: int) -> np.ndarray:
    return special.ndtri(uniform_stream(seed, stream, n))


@dataclass(frozen=True)
class Column:
    """One step of a regressor recipe.

    kind ``normal``: ``sd * N(0,1)`` plus ``terms``; kind ``discrete``: an
    equiprobable draw from ``values`` plus ``terms``; kind ``combo``: only the
    linear combination ``terms`` of earlier columns. Columns with
    ``keep=False`` are building blocks and are not written to the dataset.
    """

    name: str
    kind: str = "normal"
    sd: float = 1.0
    values: tuple[float, ...] = ()
    terms: tuple[tuple[str, float], ...] = ()
    keep: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "Column":
        terms = d.get("terms", {})
        if isinstance(terms, dict):
            terms = tuple(terms.items())
        return cls(
            name=d["name"],
            kind=d.get("kind", "normal"),
            sd=float(d.get("sd", 1.0)),
            values=tuple(float(v) for v in d.get("values", ())),
            terms=tuple((str(k), float(v)) for k, v in terms),
            keep=bool(d.get("keep", True)),
        )


@dataclass(frozen=True)
class EquationDgp:
    response: str
    regressors: tuple[str, ...]
    coefficients: tuple[float, ...]
    cutpoints: tuple[float, ...]


@dataclass(frozen=True)
class DgpConfig:
    columns: tuple[Column, ...]
    equations: tuple[EquationDgp, ...]
    error_corr: np.ndarray = field(default=None)

    def __post_init__(self):
        K = len(self.equations)
        corr = np.eye(K) if self.error_corr is None else np.asarray(self.error_corr, dtype=float)
        if corr.shape != (K, K) or not np.allclose(corr, corr.T) or not np.allclose(np.diag(corr), 1.0):
            raise ValueError("error correlation must be a symmetric K x K matrix with unit diagonal")
        try:
            np.linalg.cholesky(corr)
        except np.linalg.LinAlgError:
            raise ValueError("error correlation matrix is not positive definite") from None
        object.__setattr__(self, "error_corr", corr)
        names = [c.name for c in self.columns]
        for eq in self.equations:
            if len(eq.regressors) != len(eq.coefficients):
                raise ValueError(f"{eq.response}: regressors and coefficients differ in length")
            if np.any(np.diff(eq.cutpoints) <= 0):
                raise ValueError(f"{eq.response}: cut-points must be ascending")
            for r in eq.regressors:
                if r not in names:
                    raise ValueError(f"{eq.response}: unknown regressor {r!r}")

    def model_spec(self) -> ModelSpec:
        return ModelSpec(
            tuple(EquationSpec(e.response, e.regressors, len(e.cutpoints) + 1) for e in self.equations)
        )

    @property
    def true_theta(self) -> np.ndarray:
        return np.concatenate(
            [np.concatenate([e.coefficients for e in self.equations]), np.concatenate([e.cutpoints for e in self.equations])]
        )

    @classmethod
    def from_dict(cls, doc: dict) -> "DgpConfig":
        cols = tuple(Column.from_dict(c) for c in doc["columns"])
        eqs = tuple(
            EquationDgp(
                e["response"],
                tuple(e["regressors"]),
                tuple(float(v) for v in e["coefficients"]),
                tuple(float(v) for v in e["cutpoints"]),
            )
            for e in doc["equations"]
        )
        corr = doc.get("error_corr")
        return cls(cols, eqs, None if corr is None else np.asarray(corr, float))


@dataclass
class Latent:
    """Values behind the coarsened responses; for oracle checks only."""

    y_star: np.ndarray
    errors: np.ndarray
    index: np.ndarray


def _build_columns(columns: Sequence[Column], n: int, seed: int) -> dict[str, np.ndarray]:
    built: dict[str, np.ndarray] = {}
    for stream, col in enumerate(columns):
        if col.kind == "normal":
            v = col.sd * normal_stream(seed, stream, n)
        elif col.kind == "discrete":
            if not col.values:
                raise ValueError(f"discrete column {col.name!r} needs values")
            u = uniform_stream(seed, stream, n)
            v = np.asarray(col.values)[np.minimum((u * len(col.values)).astype(int), len(col.values) - 1)]
        elif col.kind == "combo":
            v = np.zeros(n)
        else:
            raise ValueError(f"unknown column kind {col.kind!r}")
        for name, coef in col.terms:
            if name not in built:
                raise ValueError(f"column {col.name!r} refers to {name!r} before it is built")
            v = v + coef * built[name]
        built[col.name] = v
    return built


def coarsen(y_star: np.ndarray, cutpoints) -> np.ndarray:
    """Category j (1-based) such that y lies in (nu_{j-1}, nu_j]."""
    return np.searchsorted(np.asarray(cutpoints, float), y_star, side="left") + 1


def generate(config: DgpConfig, n: int, seed: int) -> tuple[Dataset, Latent]:
    if n < 1:
        raise ValueError("n must be at least 1")
    built = _build_columns(config.columns, n, seed)
    K = len(config.equations)
    z = np.column_stack([normal_stream(seed, _ERROR_STREAM + k, n) for k in range(K)])
    errors = z @ np.linalg.cholesky(config.error_corr).T
    index = np.column_stack(
        [sum(c * built[r] for r, c in zip(e.regressors, e.coefficients)) for e in config.equations]
    )
    y_star = index + errors
    Y = np.column_stack([coarsen(y_star[:, k], e.cutpoints) for k, e in enumerate(config.equations)])
    kept = [c.name for c in config.columns if c.keep]
    X = np.column_stack([built[name] for name in kept])
    data = Dataset(X, tuple(kept), Y.astype(np.int64), tuple(e.response for e in config.equations))
    return data, Latent(y_star, errors, index)


SIGMA_5C = np.array(
    [
        [1.0, 0.5, -0.5, 0.2],
        [0.5, 1.0, 0.3, 0.6],
        [-0.5, 0.3, 1.0, -0.1],
        [0.2, 0.6, -0.1, 1.0],
    ]
)
BETA_5C = np.array(
    [
        [1.0, 1.0, 1.0, 1.0],
        [1.0, 2.0, 3.0, 4.0],
        [-1.0, 2.0, -3.0, 4.0],
        [-1.0, 0.5, -1.0, 1.0],
    ]
)
CUTS_5C = ((0.0,), (-1.0, 1.5), (-1.0, 0.5), (-1.5, -0.5, 1.0))


def config_5c(x3_sd: float = 2.0) -> DgpConfig:
    """The four-equation simulation design with J = (2, 3, 3, 4).

    x1 ~ N(0,1); x2 = 0.5 x1 + D1, D1 = +-1; x3 = N(0, sd=x3_sd) + 0.5 x2;
    x4 = -0.5 x3 + D2, D2 in {-1, 0, 1}.
    """
    cols = (
        Column("x1"),
        Column("D1", "discrete", values=(-1.0, 1.0), keep=False),
        Column("x2", "combo", terms=(("x1", 0.5), ("D1", 1.0))),
        Column("x3", "normal", sd=x3_sd, terms=(("x2", 0.5),)),
        Column("D2", "discrete", values=(-1.0, 0.0, 1.0), keep=False),
        Column("x4", "combo", terms=(("x3", -0.5), ("D2", 1.0))),
    )
    regs = ("x1", "x2", "x3", "x4")
    eqs = tuple(
        EquationDgp(f"y{k + 1}", regs, tuple(BETA_5C[k]), CUTS_5C[k]) for k in range(4)
    )
    return DgpConfig(cols, eqs, SIGMA_5C)


def generate_5c(n: int, seed: int, x3_sd: float = 2.0) -> tuple[Dataset, Latent]:
    return generate(config_5c(x3_sd), n, seed)


def config_8eq(n_categories: int = 5, loading_seed: int = 2013) -> DgpConfig:
    """Eight correlated ordinal items on ten shared regressors, 75 coefficients.

    Items 1-3 load on all ten regressors, items 4-8 on the first nine. Errors
    follow a one-factor correlation structure. Coefficients, loadings and
    cut-points are fixed draws from ``loading_seed`` so the design is the same
    for every data seed.
    """
    rng = np.random.Generator(np.random.Philox(loading_seed))
    cols = (
        Column("age", sd=1.0),
        Column("female", "discrete", values=(0.0, 1.0)),
        Column("single", "discrete", values=(0.0, 0.0, 1.0)),
        Column("separated", "discrete", values=(0.0, 0.0, 0.0, 1.0)),
        Column("hh_income", sd=0.8, terms=(("age", 0.3),)),
        Column("children", "discrete", values=(0.0, 1.0, 2.0, 3.0), terms=(("single", -0.5),)),
        Column("education", sd=1.0, terms=(("hh_income", 0.4),)),
        Column("unemployed", "discrete", values=(0.0, 0.0, 0.0, 0.0, 1.0)),
        Column("east", "discrete", values=(0.0, 0.0, 0.0, 1.0)),
        Column("health_index", sd=1.0, terms=(("age", -0.4),)),
    )
    names = [c.name for c in cols]
    edges = np.linspace(-1.5, 1.5, n_categories - 1)
    eqs = []
    for k in range(8):
        regs = tuple(names if k < 3 else names[:9])
        coef = tuple(np.round(rng.uniform(-0.4, 0.4, len(regs)), 2))
        cuts = tuple(np.round(edges + rng.uniform(-0.2, 0.2), 2))
        eqs.append(EquationDgp(f"sat{k + 1}", regs, coef, cuts))
    lam = rng.uniform(0.6, 0.85, 8)
    corr = np.outer(lam, lam)
    np.fill_diagonal(corr, 1.0)
    return DgpConfig(cols, tuple(eqs), corr)
