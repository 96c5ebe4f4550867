"""One-parameter density-operator models and their eigenvalue curves."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import jsonschema
import numpy as np

from . import expr
from .expr import Dual2
from .numlin import PSD_ATOL, check_density, check_hermitian, eigh

GRID_POINTS = 101
SPEC_TRACE_ATOL = 1e-10
SPEC_HERMITIAN_ATOL = 1e-10
# two overlaps closer than this make an eigenvector match ambiguous
MATCH_MARGIN = 0.05
FD_REL_STEP = 1e-4
DOMAIN_SLACK = 1e-12
# eigenvalues closer than this (relative) are treated as one degenerate block
DEGENERACY_RTOL = 1e-10


class ModelSpecError(ValueError):
    pass


@dataclass(frozen=True)
class CurvePoint:
    value: float
    d1: float
    d2: float
    reliable: bool = True


@dataclass(frozen=True)
class EigenCurves:
    """Eigenvalue curves at one parameter point.

    ``policy`` is ``"declared"`` when the curves follow the model's own
    eigenvalue expressions and ``"overlap"`` when they were matched across
    neighbouring points by eigenvector overlap.
    """

    theta: float
    curves: tuple
    policy: str

    @property
    def values(self):
        return np.array([c.value for c in self.curves])

    @property
    def reliable(self):
        return all(c.reliable for c in self.curves)


@dataclass(frozen=True)
class ParametricModel:
    """Map theta -> (rho, drho/dtheta) on a closed interval.

    ``drho`` may be omitted, in which case derivatives come from central
    (one-sided at the ends) finite differences of ``rho``. ``eigencurves``
    is a sequence of callables returning :class:`Dual2` for models whose
    eigenvalue curves are known in closed form.
    """

    name: str
    dim: int
    domain: tuple
    rho: Callable[[float], np.ndarray] = field(repr=False)
    drho: Optional[Callable[[float], np.ndarray]] = field(default=None, repr=False)
    eigencurves: Optional[Sequence[Callable[[float], Dual2]]] = field(default=None, repr=False)
    diagonal: bool = False

    @property
    def eigencurve_source(self):
        return "analytic" if self.eigencurves is not None else "numeric"

    @property
    def drho_source(self):
        return "analytic" if self.drho is not None else "numeric"

    def check_theta(self, theta):
        lo, hi = self.domain
        theta = float(theta)
        if not (lo - DOMAIN_SLACK <= theta <= hi + DOMAIN_SLACK) or math.isnan(theta):
            raise expr.DomainError(f"theta={theta!r} outside the domain [{lo!r}, {hi!r}] of {self.name}")
        return min(max(theta, lo), hi)

    def rho_at(self, theta):
        theta = self.check_theta(theta)
        return check_density(self.rho(theta), name=f"rho({theta!r})")

    def drho_at(self, theta):
        theta = self.check_theta(theta)
        if self.drho is not None:
            return check_hermitian(self.drho(theta), atol=SPEC_HERMITIAN_ATOL, name="drho")
        return _fd_first(lambda t: np.asarray(self.rho(t), dtype=complex), theta, self.domain)

    def steps_to_boundary(self, theta):
        lo, hi = self.domain
        return theta - lo, hi - theta


def flush_rounding(d, theta):
    """Zero a first derivative that is below the change caused by rounding theta.

    Representing theta in binary moves it by up to half an ulp, which moves
    d1 by up to ``|d2| * ulp/2``; anything smaller is indistinguishable from 0.
    """
    if d.d1 != 0 and abs(d.d1) <= abs(d.d2) * math.ulp(theta):
        return Dual2(d.v, 0.0, d.d2)
    return d


def _stencil_step(theta):
    return FD_REL_STEP * max(1.0, abs(theta))


def _fd_first(f, theta, domain):
    h = _stencil_step(theta)
    lo, hi = domain
    if theta - h >= lo and theta + h <= hi:
        return (f(theta + h) - f(theta - h)) / (2 * h)
    s = 1.0 if theta + 2 * h <= hi else -1.0
    return s * (-3 * f(theta) + 4 * f(theta + s * h) - f(theta + 2 * s * h)) / (2 * h)


def _fd_second(f, theta, domain):
    h = _stencil_step(theta)
    lo, hi = domain
    if theta - 2 * h >= lo and theta + 2 * h <= hi:
        return (
            -f(theta + 2 * h) + 16 * f(theta + h) - 30 * f(theta) + 16 * f(theta - h) - f(theta - 2 * h)
        ) / (12 * h * h)
    s = 1.0 if theta + 5 * h <= hi else -1.0
    coef = (45, -154, 214, -156, 61, -10)
    return sum(c * f(theta + k * s * h) for k, c in enumerate(coef)) / (12 * h * h)


# -- built-in qubit families ----------------------------------------------------


def builtin_flip():
    """rho_q = diag(1 - q, q) on [0, 1]."""

    def rho(q):
        return np.diag([1.0 - q, q]).astype(complex)

    def drho(q):
        return np.diag([-1.0, 1.0]).astype(complex)

    curves = (
        lambda q: Dual2(1.0 - q, -1.0, 0.0),
        lambda q: Dual2(q, 1.0, 0.0),
    )
    return ParametricModel("flip", 2, (0.0, 1.0), rho, drho, curves, diagonal=True)


def builtin_trig():
    """rho = diag(cos^2 t, sin^2 t) on [0, pi/2]."""

    curves = (
        lambda t: flush_rounding(Dual2(math.cos(t) ** 2, -math.sin(2 * t), -2 * math.cos(2 * t)), t),
        lambda t: flush_rounding(Dual2(math.sin(t) ** 2, math.sin(2 * t), 2 * math.cos(2 * t)), t),
    )

    def rho(t):
        return np.diag([math.cos(t) ** 2, math.sin(t) ** 2]).astype(complex)

    def drho(t):
        return np.diag([c(t).d1 for c in curves]).astype(complex)

    return ParametricModel("trig", 2, (0.0, math.pi / 2), rho, drho, curves, diagonal=True)


BUILTINS = {"flip": builtin_flip, "trig": builtin_trig}


# -- spec files -----------------------------------------------------------------

_ENTRY_SCHEMA = {
    "type": "object",
    "properties": {"re": {"type": "string"}, "im": {"type": "string"}},
    "required": ["re", "im"],
    "additionalProperties": False,
}

MODEL_SPEC_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "dim": {"type": "integer", "minimum": 1},
        "domain": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "kind": {"enum": ["diagonal", "dense"]},
        "eigenvalues": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "entries": {
            "type": "array",
            "items": {"type": "array", "items": _ENTRY_SCHEMA},
        },
    },
    "required": ["name", "dim", "domain", "kind"],
    "additionalProperties": False,
    "oneOf": [
        {"properties": {"kind": {"const": "diagonal"}}, "required": ["eigenvalues"], "not": {"required": ["entries"]}},
        {"properties": {"kind": {"const": "dense"}}, "required": ["entries"], "not": {"required": ["eigenvalues"]}},
    ],
}


@dataclass(frozen=True)
class ModelSpec:
    name: str
    dim: int
    domain: tuple
    kind: str
    eigenvalues: tuple = ()
    entries: tuple = ()

    @classmethod
    def from_dict(cls, data):
        try:
            jsonschema.validate(data, MODEL_SPEC_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ModelSpecError(f"invalid model spec at {where}: {exc.message}") from None
        lo, hi = (float(v) for v in data["domain"])
        if not lo < hi:
            raise ModelSpecError(f"domain must satisfy min < max, got [{lo}, {hi}]")
        dim = data["dim"]
        if data["kind"] == "diagonal":
            if len(data["eigenvalues"]) != dim:
                raise ModelSpecError(f"expected {dim} eigenvalue expressions, got {len(data['eigenvalues'])}")
            return cls(data["name"], dim, (lo, hi), "diagonal", eigenvalues=tuple(data["eigenvalues"]))
        rows = data["entries"]
        if len(rows) != dim or any(len(r) != dim for r in rows):
            raise ModelSpecError(f"entries must be a {dim}x{dim} grid")
        entries = tuple(tuple((e["re"], e["im"]) for e in row) for row in rows)
        return cls(data["name"], dim, (lo, hi), "dense", entries=entries)

    def to_dict(self):
        out = {"name": self.name, "dim": self.dim, "domain": list(self.domain), "kind": self.kind}
        if self.kind == "diagonal":
            out["eigenvalues"] = list(self.eigenvalues)
        else:
            out["entries"] = [[{"re": re, "im": im} for re, im in row] for row in self.entries]
        return out


def load_spec(path):
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelSpecError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return ModelSpec.from_dict(data)


def _parse_all(texts, where):
    asts = []
    for label, text in zip(where, texts):
        try:
            asts.append(expr.parse(text))
        except expr.ExprError as exc:
            raise ModelSpecError(f"{label}: {exc}") from None
    return asts


def from_spec(spec):
    """Build a model from a validated :class:`ModelSpec`.

    The spec is checked on a 101-point grid over its domain: trace one,
    Hermitian, and positive semidefinite. Violations report the worst point.
    """
    lo, hi = spec.domain
    grid = np.linspace(lo, hi, GRID_POINTS)
    if spec.kind == "diagonal":
        asts = _parse_all(spec.eigenvalues, [f"eigenvalues[{k}]" for k in range(spec.dim)])

        def duals(t):
            return [flush_rounding(expr.eval_dual2(a, t), t) for a in asts]

        def rho(t):
            return np.diag([d.v for d in duals(t)]).astype(complex)

        def drho(t):
            return np.diag([d.d1 for d in duals(t)]).astype(complex)

        curves = tuple((lambda a: (lambda t: flush_rounding(expr.eval_dual2(a, t), t)))(a) for a in asts)
        model = ParametricModel(spec.name, spec.dim, (lo, hi), rho, drho, curves, diagonal=True)
    else:
        labels, texts = [], []
        for j, row in enumerate(spec.entries):
            for k, (re, im) in enumerate(row):
                labels += [f"entries[{j}][{k}].re", f"entries[{j}][{k}].im"]
                texts += [re, im]
        asts = _parse_all(texts, labels)
        d = spec.dim

        def _grids(t):
            vals = [flush_rounding(expr.eval_dual2(a, t), t) for a in asts]
            v = np.array([x.v for x in vals]).reshape(d, d, 2)
            d1 = np.array([x.d1 for x in vals]).reshape(d, d, 2)
            return v[..., 0] + 1j * v[..., 1], d1[..., 0] + 1j * d1[..., 1]

        def rho(t):
            return _grids(t)[0]

        def drho(t):
            return _grids(t)[1]

        model = ParametricModel(spec.name, d, (lo, hi), rho, drho, None, diagonal=False)
    _validate_on_grid(model, grid)
    return model


def _validate_on_grid(model, grid):
    worst_trace = (0.0, None)
    worst_herm = (0.0, None)
    worst_neg = (0.0, None)
    for t in map(float, grid):
        try:
            r = np.asarray(model.rho(t), dtype=complex)
            model.drho(t)
        except expr.ExprError as exc:
            raise ModelSpecError(f"expression fails at theta={t!r}: {exc}") from None
        tr_err = abs(np.trace(r) - 1.0)
        herm_err = float(np.max(np.abs(r - r.conj().T)))
        worst_trace = max(worst_trace, (tr_err, t), key=lambda p: p[0])
        worst_herm = max(worst_herm, (herm_err, t), key=lambda p: p[0])
        if herm_err <= SPEC_HERMITIAN_ATOL:
            lam = float(np.linalg.eigvalsh((r + r.conj().T) / 2)[0])
            worst_neg = max(worst_neg, (-lam, t), key=lambda p: p[0])
    if worst_trace[0] > SPEC_TRACE_ATOL:
        raise ModelSpecError(
            f"trace deviates from 1 by {worst_trace[0]:.3e} at theta={worst_trace[1]!r} (worst grid point)"
        )
    if worst_herm[0] > SPEC_HERMITIAN_ATOL:
        raise ModelSpecError(
            f"entries not Hermitian: asymmetry {worst_herm[0]:.3e} at theta={worst_herm[1]!r} (worst grid point)"
        )
    if worst_neg[0] > PSD_ATOL:
        raise ModelSpecError(f"negative eigenvalue {-worst_neg[0]:.3e} at theta={worst_neg[1]!r} (worst grid point)")


def resolve_model(source):
    """A built-in name (``flip``/``trig``), a spec path, a :class:`ModelSpec`, or a model."""
    if isinstance(source, ParametricModel):
        return source
    if isinstance(source, ModelSpec):
        return from_spec(source)
    if isinstance(source, dict):
        return from_spec(ModelSpec.from_dict(source))
    if source in BUILTINS:
        return BUILTINS[source]()
    return from_spec(load_spec(source))


# -- eigenvalue curves ----------------------------------------------------------


def eigencurves(model, theta, rank_tol=None):
    """Eigenvalue curves with first and second derivatives at ``theta``.

    Models with declared curves are evaluated exactly and never re-sorted.
    Otherwise eigenvalues at neighbouring points are matched to those at
    ``theta`` by maximal eigenvector overlap and differentiated with fixed
    finite-difference stencils.
    """
    theta = model.check_theta(theta)
    if model.eigencurves is not None:
        pts = []
        for fn in model.eigencurves:
            d = fn(theta)
            pts.append(CurvePoint(d.v, d.d1, d.d2))
        return EigenCurves(theta, tuple(pts), "declared")
    return _numeric_curves(model, theta, rank_tol)


def split_degenerate(model, theta, ref):
    """Reference eigenvectors with each degenerate eigenspace resolved.

    Inside a degenerate block any basis is an eigenbasis, so the block is
    rotated to diagonalize the neighbouring state projected onto it; these
    are the directions the eigenvectors actually leave along.
    """
    V = ref.eigenvectors.copy()
    w = ref.eigenvalues
    h = _stencil_step(theta)
    t = theta + h if theta + h <= model.domain[1] else theta - h
    nearby = np.asarray(model.rho(t), dtype=complex)
    gap = max(DEGENERACY_RTOL * max(1.0, float(np.max(np.abs(w)))), 1e-3 * h)
    start = 0
    while start < len(w):
        stop = start + 1
        while stop < len(w) and w[stop] - w[start] <= gap:
            stop += 1
        if stop - start > 1:
            block = V[:, start:stop]
            sub = block.conj().T @ nearby @ block
            _, R = np.linalg.eigh((sub + sub.conj().T) / 2)
            V[:, start:stop] = block @ R
        start = stop
    return V


def _numeric_curves(model, theta, rank_tol):
    ref = eigh(model.rho(theta), rank_tol)
    V0 = split_degenerate(model, theta, ref)
    cache = {}
    ambiguous = np.zeros(model.dim, dtype=bool)

    def matched(t):
        key = round((t - theta) / _stencil_step(theta))
        if key in cache:
            return cache[key]
        if key == 0:
            cache[key] = ref.eigenvalues.copy()
            return cache[key]
        dec = eigh(model.rho(t), rank_tol)
        overlap = np.abs(V0.conj().T @ dec.eigenvectors) ** 2
        vals = np.empty(model.dim)
        taken = set()
        for j in range(model.dim):
            order = np.argsort(overlap[j])[::-1]
            best = int(order[0])
            if len(order) > 1 and overlap[j, order[0]] - overlap[j, order[1]] < MATCH_MARGIN:
                ambiguous[j] = True
            if best in taken:
                ambiguous[j] = True
            taken.add(best)
            vals[j] = dec.eigenvalues[best]
        cache[key] = vals
        return vals

    d1 = _fd_first(matched, theta, model.domain)
    d2 = _fd_second(matched, theta, model.domain)
    pts = tuple(
        CurvePoint(float(ref.eigenvalues[j]), float(d1[j]), float(d2[j]), not bool(ambiguous[j]))
        for j in range(model.dim)
    )
    return EigenCurves(theta, pts, "overlap")
