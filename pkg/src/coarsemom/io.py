"""File formats: dataset CSV, model/config JSON and the results document."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .model import Dataset, ModelSpec

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Malformed input file; the message starts with ``path:line:``."""


class SchemaError(ValueError):
    pass


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


# -- dataset CSV ----------------------------------------------------------------


def _fmt_real(v: float) -> str:
    return "%.17g" % v


def dataset_to_csv(data: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(data.response_names) + list(data.regressor_names))
    Y = np.asarray(data.responses, dtype=np.int64)
    for yrow, xrow in zip(Y, data.regressors):
        w.writerow([str(int(v)) for v in yrow] + [_fmt_real(float(v)) for v in xrow])
    return buf.getvalue()


def write_dataset(data: Dataset, path) -> None:
    Path(path).write_text(dataset_to_csv(data), encoding="utf-8")


def _looks_integer(s: str) -> bool:
    s = s.strip()
    return bool(s) and s.lstrip("+-").isdigit()


def dataset_from_csv(text: str, response_names: Sequence[str] | None = None, source: str = "<csv>") -> Dataset:
    """Parse a dataset CSV.

    Without ``response_names`` the responses are the leading run of columns
    whose values are all written as integers (the layout ``write_dataset``
    produces).
    """
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ConfigError(f"{source}:1: empty file")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise ConfigError(f"{source}:1: duplicate column names")
    body = rows[1:]
    for lineno, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise ConfigError(f"{source}:{lineno}: expected {len(header)} fields, found {len(r)}")

    if response_names is None:
        n_resp = 0
        for c in range(len(header) - 1):
            if body and all(_looks_integer(r[c]) for r in body):
                n_resp += 1
            else:
                break
        response_names = header[:n_resp]
    response_names = list(response_names)
    for name in response_names:
        if name not in header:
            raise ConfigError(f"{source}:1: no column named {name!r}")
    resp_idx = [header.index(n) for n in response_names]
    reg_idx = [i for i in range(len(header)) if i not in resp_idx]

    Y = np.empty((len(body), len(resp_idx)), dtype=np.int64)
    X = np.empty((len(body), len(reg_idx)), dtype=float)
    for lineno, r in enumerate(body, start=2):
        for c, i in enumerate(resp_idx):
            s = r[i].strip()
            try:
                Y[lineno - 2, c] = int(s)
            except ValueError:
                try:
                    f = float(s)
                except ValueError:
                    f = math.nan
                if not f.is_integer():
                    raise ConfigError(f"{source}:{lineno}: response {header[i]!r} is not an integer: {s!r}") from None
                Y[lineno - 2, c] = int(f)
        for c, i in enumerate(reg_idx):
            try:
                X[lineno - 2, c] = float(r[i])
            except ValueError:
                raise ConfigError(f"{source}:{lineno}: column {header[i]!r} is not a number: {r[i]!r}") from None
    return Dataset(X.reshape(len(body), len(reg_idx)), tuple(header[i] for i in reg_idx), Y, tuple(response_names))


def read_dataset(path, response_names: Sequence[str] | None = None) -> Dataset:
    p = Path(path)
    return dataset_from_csv(p.read_text(encoding="utf-8"), response_names, str(p))


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- JSON inputs --------------------------------------------------------------------


def load_json(path) -> Any:
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def _key_line(text: str, key: str) -> int:
    for n, line in enumerate(text.splitlines(), start=1):
        if f'"{key}"' in line:
            return n
    return 1


def read_model(path) -> ModelSpec:
    p = Path(path)
    doc = load_json(p)
    try:
        return ModelSpec.from_dict(doc)
    except KeyError as exc:
        key = exc.args[0]
        raise ConfigError(f"{p}:{_key_line(p.read_text(encoding='utf-8'), 'equations')}: missing key {key!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{p}:1: {exc}") from None


def read_dgp_config(path):
    from .datagen import DgpConfig

    p = Path(path)
    doc = load_json(p)
    text = p.read_text(encoding="utf-8")
    try:
        return DgpConfig.from_dict(doc)
    except KeyError as exc:
        key = exc.args[0]
        raise ConfigError(f"{p}:{_key_line(text, key) if isinstance(key, str) else 1}: missing key {key!r}") from None
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        anchor = 1
        for token in msg.replace("'", '"').split('"'):
            if token and token in text:
                anchor = _key_line(text, token) if f'"{token}"' in text else anchor
                break
        raise ConfigError(f"{p}:{anchor}: {msg}") from None


# -- results document ---------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite reals to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


@dataclass
class ResultsDocument:
    """Everything a fit produced, plus what is needed to re-run it."""

    model: dict
    fit: dict
    between_cov: list
    latent: dict | None = None
    polychoric: dict | None = None
    r2: dict | None = None
    pearson_coded: list | None = None
    timing: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    schema: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return _clean(
            {
                "schema": self.schema,
                "model": self.model,
                "fit": self.fit,
                "between_cov": self.between_cov,
                "latent": self.latent,
                "polychoric": self.polychoric,
                "r2": self.r2,
                "pearson_coded": self.pearson_coded,
                "timing": self.timing,
                "provenance": self.provenance,
            }
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "ResultsDocument":
        version = doc.get("schema")
        if version != SCHEMA_VERSION:
            raise SchemaError(f"results schema {version!r} is not supported (expected {SCHEMA_VERSION})")
        return cls(
            model=doc["model"],
            fit=doc["fit"],
            between_cov=doc["between_cov"],
            latent=doc.get("latent"),
            polychoric=doc.get("polychoric"),
            r2=doc.get("r2"),
            pearson_coded=doc.get("pearson_coded"),
            timing=doc.get("timing", {}),
            provenance=doc.get("provenance", {}),
            schema=version,
        )

    @classmethod
    def loads(cls, text: str) -> "ResultsDocument":
        return cls.from_dict(json.loads(text))

    def write(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def read(cls, path) -> "ResultsDocument":
        return cls.from_dict(load_json(path))


def build_results(spec: ModelSpec, data: Dataset, fit, latent=None, provenance: dict | None = None, pearson: bool = True) -> ResultsDocument:
    """Assemble the document from a fit and (optionally) its latent correlations."""
    from . import post

    rows = [
        {"label": l, "estimate": float(e), "se": float(s), "z": float(z)}
        for l, e, s, z in zip(fit.labels, fit.estimates, fit.se, fit.z)
    ]
    fit_doc = {
        "rows": rows,
        "cutpoints": [np.asarray(c).tolist() for c in fit.params.cutpoints],
        "converged": bool(fit.converged),
        "n_iterations": int(fit.n_iterations),
        "moment_norm": float(fit.moment_norm_final),
        "message": fit.message,
    }
    doc = ResultsDocument(
        model=spec.to_dict(),
        fit=fit_doc,
        between_cov=np.asarray(fit.between_cov).tolist(),
        timing=dict(fit.timing),
        provenance=dict(provenance or {}),
    )
    doc.r2 = {eq.response: post.mckelvey_zavoina_r2(spec, data, fit, k) for k, eq in enumerate(spec.equations)}
    if latent is not None:
        doc.latent = {
            "matrix": latent.matrix.tolist(),
            "min_eigenvalue": latent.min_eigenvalue,
            "psd": latent.is_psd,
            "failures": [list(p) for p in latent.failures],
            "matches": [
                {
                    "pair": [k, kk],
                    "rho": m.rho_hat,
                    "target": m.target_between,
                    "achieved": m.achieved_between,
                    "iterations": m.bracket_iterations,
                    "draws": m.n_draws,
                    "attained": m.attained,
                    "message": m.message,
                }
                for (k, kk), m in sorted(latent.matches.items())
            ],
        }
        if not latent.failures:
            rep = post.polychoric_matrix(spec, data, fit, latent)
            doc.polychoric = {"sigma_yy": rep.sigma_yy.tolist(), "corr_yy": rep.corr_yy.tolist()}
    if pearson:
        try:
            doc.pearson_coded = post.pearson_coded(data, responses=spec.response_names).tolist()
        except ValueError:
            doc.pearson_coded = None
    return doc


# -- rendering ---------------------------------------------------------------------------


def _f4(v) -> str:
    return "nan" if v is None else f"{v:.4f}"


def _matrix_lines(title: str, names: Sequence[str], M) -> list[str]:
    width = max(10, max(len(n) for n in names) + 1)
    lines = [title, " " * width + "".join(f"{n[:9]:>10s}" for n in names)]
    for i, n in enumerate(names):
        lines.append(f"{n:<{width}s}" + "".join(f"{_f4(M[i][j]):>10s}" for j in range(i + 1)))
    return lines


def render_text(doc: ResultsDocument) -> str:
    rows = doc.fit["rows"]
    width = max(12, max(len(r["label"]) for r in rows) + 2)
    lines = [f"{'':<{width}s}{'Coeff.':>10s}{'Std.err.':>10s}{'z':>10s}"]
    for r in rows:
        lines.append(f"{r['label']:<{width}s}{_f4(r['estimate']):>10s}{_f4(r['se']):>10s}{_f4(r['z']):>10s}")
    lines.append("")
    lines.append(
        f"converged: {str(doc.fit['converged']).lower()}   iterations: {doc.fit['n_iterations']}"
        f"   moment norm: {doc.fit['moment_norm']:.3e}"
    )
    names = [e["response"] for e in doc.model["equations"]]
    lines.append("")
    lines += _matrix_lines("In-between covariance", names, doc.between_cov)
    if doc.latent is not None:
        lines.append("")
        lines += _matrix_lines("Full (latent) correlation", names, doc.latent["matrix"])
    if doc.polychoric is not None:
        lines.append("")
        lines += _matrix_lines("Polychoric correlation", names, doc.polychoric["corr_yy"])
    if doc.pearson_coded is not None:
        lines.append("")
        lines += _matrix_lines("Pearson correlation (coded responses)", names, doc.pearson_coded)
    if doc.r2:
        lines.append("")
        lines.append("R-squared (McKelvey-Zavoina)")
        for n in names:
            lines.append(f"  {n:<{width - 2}s}{_f4(doc.r2.get(n)):>10s}")
    return "\n".join(lines) + "\n"


def _r(v) -> str:
    return "" if v is None else repr(v)


def render_csv(doc: ResultsDocument) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["section", "label", "estimate", "se", "z"])
    for r in doc.fit["rows"]:
        w.writerow(["coef", r["label"], _r(r["estimate"]), _r(r["se"]), _r(r["z"])])
    names = [e["response"] for e in doc.model["equations"]]
    mats = [("between_cov", doc.between_cov)]
    if doc.latent is not None:
        mats.append(("latent_corr", doc.latent["matrix"]))
    if doc.polychoric is not None:
        mats.append(("polychoric", doc.polychoric["corr_yy"]))
    if doc.pearson_coded is not None:
        mats.append(("pearson_coded", doc.pearson_coded))
    for section, M in mats:
        for i in range(len(names)):
            for j in range(i + 1):
                w.writerow([section, f"{names[i]}|{names[j]}", _r(M[i][j]), "", ""])
    return buf.getvalue()
