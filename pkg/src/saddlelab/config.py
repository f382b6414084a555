"""Flat key-value experiment configs: `section.key = value` per line.

Vectors are comma lists, matrices are semicolon-separated rows of comma
lists. Parsing validates every key and reports the full error list, not just
the first problem. Configs round-trip losslessly: numbers are serialized
with 17 significant digits.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .functions import (PiecewiseSmoothFunction, SELECTION_RULES, builtin,
                        catalog_names, from_piece_records)
from .geometry import AffineManifold, Manifold, unit_sphere
from .sgd import (NoiseModel, Rademacher, SGDConfig, SphereUniform,
                  StepSchedule, SubspaceRestricted, TruncGaussian, ZeroNoise)
from .center_stable import (AbstractNoise, ConstructedSystem, GraphMap,
                            RSeriesSpec, RTildeSeriesSpec, build_system,
                            quadratic_graph, zero_graph)

NOISE_KINDS = ("zero", "sphere", "trunc_gaussian", "rademacher")

# key -> (kind, validator); kinds: str, int, float, vec, mat, intvec
_SCHEMA: dict[str, tuple] = {
    "function.name": ("str", None),
    "function.a": ("vec", None),
    "function.b": ("vec", None),
    "function.dim": ("int", lambda v: v >= 1 or "must be at least 1"),
    "manifold.kind": ("str", lambda v: v in ("affine", "sphere")
                      or "must be 'affine' or 'sphere'"),
    "manifold.base": ("vec", None),
    "manifold.basis": ("mat", None),
    "manifold.radius": ("float", lambda v: v > 0 or "must be positive"),
    "manifold.reference": ("vec", None),
    "manifold.validity_radius": ("float", lambda v: v > 0 or "must be positive"),
    "sgd.x_star": ("vec", None),
    "sgd.x0": ("vec", None),
    "sgd.horizon": ("int", lambda v: v >= 1 or "must be at least 1"),
    "sgd.radius": ("float", lambda v: v > 0 or "must be positive"),
    "sgd.seed": ("int", None),
    "sgd.selection": ("str", lambda v: v in SELECTION_RULES
                      or f"must be one of {SELECTION_RULES}"),
    "sgd.workers": ("int", lambda v: v >= 1 or "must be at least 1"),
    "schedule.c": ("float", lambda v: v > 0 or "must be positive"),
    "schedule.alpha": ("float", lambda v: 0.5 < v <= 1.0 or
                       "must lie in (0.5, 1] so steps are square-summable "
                       "but not summable"),
    "noise.kind": ("str", lambda v: v in NOISE_KINDS
                   or f"must be one of {NOISE_KINDS}"),
    "noise.sigma": ("float", lambda v: v >= 0 or "must be nonnegative"),
    "noise.bound": ("float", lambda v: v > 0 or "must be positive"),
    "noise.restrict": ("mat", None),
    "mc.runs": ("int", lambda v: v >= 1 or "must be at least 1"),
    "conditions.kind": ("str", lambda v: v in
                        ("sharpness", "angle", "verdier", "weak_convexity")
                        or "unknown condition kind"),
    "conditions.r": ("float", lambda v: v > 0 or "must be positive"),
    "conditions.n_samples": ("int", lambda v: v >= 1 or "must be at least 1"),
    "conditions.rho_grid": ("vec", None),
    "conditions.box_lo": ("vec", None),
    "conditions.box_hi": ("vec", None),
    "conditions.n_segments": ("int", lambda v: v >= 1 or "must be at least 1"),
    "drift.x_grid": ("mat", None),
    "drift.gamma_grid": ("vec", None),
    "drift.n_mc": ("int", lambda v: v >= 1 or "must be at least 1"),
    "drift.beta": ("float", None),
    "drift.c": ("float", None),
    "rates.runs": ("int", lambda v: v >= 1 or "must be at least 1"),
    "rates.a": ("float", None),
    "rates.checkpoints": ("intvec", None),
    "rates.tail_grid": ("intvec", None),
    "cs.j_plus": ("mat", None),
    "cs.j_minus": ("mat", None),
    "cs.g_coeff": ("float", None),
    "cs.delta_scale": ("float", lambda v: v >= 0 or "must be nonnegative"),
    "cs.delta_cap": ("float", lambda v: v > 0 or "must be positive"),
    "cs.steps": ("int", lambda v: v >= 1 or "must be at least 1"),
    "cs.tau_start": ("int", lambda v: v >= 1 or "must be at least 1"),
    "cs.level": ("float", lambda v: v > 0 or "must be positive"),
    "cs.runs": ("int", lambda v: v >= 1 or "must be at least 1"),
    "cs.seed": ("int", None),
    "cs.e_kind": ("str", lambda v: v in NOISE_KINDS
                  or f"must be one of {NOISE_KINDS}"),
    "cs.e_sigma": ("float", lambda v: v >= 0 or "must be nonnegative"),
    "cs.e_bound": ("float", lambda v: v > 0 or "must be positive"),
    "cs.e_restrict": ("mat", None),
    "cs.r_scale": ("float", lambda v: v >= 0 or "must be nonnegative"),
    "cs.r_exponent": ("float", None),
    "cs.rt_scale": ("float", lambda v: v >= 0 or "must be nonnegative"),
    "cs.rt_mode": ("str", lambda v: v in ("gamma", "constant")
                   or "must be 'gamma' or 'constant'"),
    "cs.w0": ("vec", None),
    "cs.eps_converge": ("float", lambda v: v > 0 or "must be positive"),
    "cs.write_runs": ("int", lambda v: v >= 0 or "must be nonnegative"),
    "out.dir": ("str", None),
}

_PIECE_KEY = re.compile(r"^function\.piece\.(\d+)\.(signs|terms)$")

# execution machinery, not experiment identity: kept out of the canonical
# text so hashes and echoes are invariant to worker count and output paths
_EXECUTION_KEYS = frozenset({"sgd.workers", "out.dir", "cs.write_runs"})


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated key-value entries, in canonical order."""

    entries: dict

    def __post_init__(self):
        object.__setattr__(self, "entries", dict(self.entries))

    def get(self, key, default=None):
        return self.entries.get(key, default)

    def require(self, key):
        if key not in self.entries:
            raise ConfigError([f"MissingKey: {key} is required here"])
        return self.entries[key]

    def override(self, **pairs) -> "ExperimentConfig":
        new = dict(self.entries)
        for key, value in pairs.items():
            if value is not None:
                new[key.replace("__", ".")] = value
        return ExperimentConfig(new)

    def to_text(self) -> str:
        lines = []
        for key in sorted(self.entries, key=_key_order):
            if key in _EXECUTION_KEYS:
                continue
            lines.append(f"{key} = {_format_value(self.entries[key])}")
        return "\n".join(lines) + "\n"

    def sha256(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def _key_order(key: str):
    base = list(_SCHEMA)
    if key in base:
        return (0, base.index(key), key)
    return (1, 0, key)


def _fmt17(x: float) -> str:
    return f"{float(x):.17g}"


def _format_value(value) -> str:
    if isinstance(value, bool):
        raise TypeError("booleans are not part of the config format")
    if isinstance(value, str):
        return value
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return _fmt17(value)
    if isinstance(value, (list, tuple)):
        if value and isinstance(value[0], (list, tuple)):
            return "; ".join(", ".join(_fmt17(x) for x in row) for row in value)
        if all(isinstance(x, int) for x in value):
            return ", ".join(str(x) for x in value)
        return ", ".join(_fmt17(x) for x in value)
    raise TypeError(f"cannot serialize config value {value!r}")


def _parse_value(kind: str, raw: str, key: str, errors: list):
    try:
        if kind == "str":
            return raw
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "vec":
            return [float(x) for x in raw.split(",") if x.strip() != ""]
        if kind == "intvec":
            return [int(x) for x in raw.split(",") if x.strip() != ""]
        if kind == "mat":
            return [[float(x) for x in row.split(",") if x.strip() != ""]
                    for row in raw.split(";")]
    except ValueError:
        errors.append(f"TypeError: {key} expects a {kind}, got {raw!r}")
        return None
    raise AssertionError(f"unknown schema kind {kind}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises ConfigError carrying all errors at once."""
    entries = {}
    errors: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            errors.append(f"TypeError: line {lineno} is not 'key = value'")
            continue
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        piece_match = _PIECE_KEY.match(key)
        if piece_match:
            entries[key] = raw  # piece records validated at build time
            continue
        if key not in _SCHEMA:
            errors.append(f"UnknownKey: {key}")
            continue
        kind, validator = _SCHEMA[key]
        value = _parse_value(kind, raw, key, errors)
        if value is None and kind != "str":
            continue
        if validator is not None:
            verdict = validator(value)
            if verdict is not True:
                errors.append(f"RangeError: {key} {verdict}")
                continue
        entries[key] = value
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(entries)


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


# -- builders ---------------------------------------------------------------------


def build_function(cfg: ExperimentConfig) -> PiecewiseSmoothFunction:
    name = cfg.require("function.name")
    if name == "custom":
        dim = cfg.require("function.dim")
        records = _collect_piece_records(cfg, dim)
        return from_piece_records(dim, records)
    if name == "separable":
        return builtin("separable", a=cfg.require("function.a"),
                       b=cfg.require("function.b"))
    if name not in catalog_names():
        raise ConfigError([f"RangeError: function.name unknown catalog entry "
                           f"{name!r}"])
    return builtin(name)


def _collect_piece_records(cfg: ExperimentConfig, dim: int) -> list[dict]:
    by_index: dict[int, dict] = {}
    for key, raw in cfg.entries.items():
        match = _PIECE_KEY.match(key)
        if not match:
            continue
        idx, field_name = int(match.group(1)), match.group(2)
        rec = by_index.setdefault(idx, {})
        if field_name == "signs":
            rec["signs"] = [s.strip() for s in raw.split(",")]
        else:
            terms = []
            for term in raw.split(";"):
                term = term.strip()
                if not term:
                    continue
                coef_part, _, expo_part = term.partition(":")
                expo = [int(e) for e in expo_part.split(",")]
                terms.append((float(coef_part), expo))
            rec["terms"] = terms
    if not by_index:
        raise ConfigError(["MissingKey: custom functions need "
                           "function.piece.<i>.signs/terms records"])
    return [by_index[i] for i in sorted(by_index)]


def build_manifold(cfg: ExperimentConfig,
                   f: PiecewiseSmoothFunction) -> Manifold:
    kind = cfg.get("manifold.kind")
    if kind is None:
        if f.manifold is None:
            raise ConfigError(["MissingKey: manifold.kind (the function has "
                               "no canonical manifold annotation)"])
        return f.manifold
    if kind == "affine":
        base = np.asarray(cfg.require("manifold.base"), dtype=float)
        basis_rows = cfg.get("manifold.basis", [])
        basis = (np.asarray(basis_rows, dtype=float).T
                 if basis_rows else np.zeros((base.size, 0)))
        return AffineManifold(base, basis)
    reference = cfg.get("manifold.reference")
    return unit_sphere(
        f.dim, radius=cfg.get("manifold.radius", 1.0),
        reference_point=None if reference is None else np.asarray(reference),
        validity_radius=cfg.get("manifold.validity_radius"))


def build_noise(cfg: ExperimentConfig, dim: int, prefix: str = "noise"
                ) -> NoiseModel:
    if prefix == "noise":
        kind_key, sigma_key = "noise.kind", "noise.sigma"
        bound_key, restrict_key = "noise.bound", "noise.restrict"
    else:
        kind_key, sigma_key = "cs.e_kind", "cs.e_sigma"
        bound_key, restrict_key = "cs.e_bound", "cs.e_restrict"
    kind = cfg.get(kind_key, "zero")
    restrict = cfg.get(restrict_key)
    inner_dim = dim
    basis = None
    if restrict is not None:
        basis = np.asarray(restrict, dtype=float).T  # rows -> columns
        inner_dim = basis.shape[1]
    sigma = cfg.get(sigma_key, 1.0)
    if kind == "zero":
        model: NoiseModel = ZeroNoise(inner_dim)
    elif kind == "sphere":
        model = SphereUniform(inner_dim, sigma)
    elif kind == "trunc_gaussian":
        model = TruncGaussian(inner_dim, sigma, cfg.get(bound_key, 3.0 * sigma))
    else:
        model = Rademacher(inner_dim, sigma)
    if basis is not None:
        model = SubspaceRestricted(model, basis)
    return model


def build_schedule(cfg: ExperimentConfig) -> StepSchedule:
    return StepSchedule(cfg.require("schedule.c"), cfg.require("schedule.alpha"))


def build_sgd_config(cfg: ExperimentConfig) -> SGDConfig:
    f = build_function(cfg)
    manifold = build_manifold(cfg, f)
    x_star = cfg.get("sgd.x_star")
    if x_star is None:
        if f.critical_point is None:
            raise ConfigError(["MissingKey: sgd.x_star"])
        x_star = f.critical_point
    return SGDConfig(
        f=f, manifold=manifold, x_star=np.asarray(x_star, dtype=float),
        x0=np.asarray(cfg.require("sgd.x0"), dtype=float),
        schedule=build_schedule(cfg),
        noise=build_noise(cfg, f.dim),
        selection=cfg.get("sgd.selection", "active_piece"),
        horizon=cfg.require("sgd.horizon"),
        radius=cfg.require("sgd.radius"),
        master_seed=cfg.get("sgd.seed", 0))


def build_constructed_system(cfg: ExperimentConfig) -> ConstructedSystem:
    j_plus = np.asarray(cfg.require("cs.j_plus"), dtype=float)
    j_minus = np.asarray(cfg.require("cs.j_minus"), dtype=float)
    coeff = cfg.get("cs.g_coeff", 0.0)
    graph: GraphMap
    if coeff == 0.0:
        graph = zero_graph(j_plus.shape[0], j_minus.shape[0])
    else:
        graph = quadratic_graph(j_plus.shape[0], j_minus.shape[0], coeff)
    return build_system(j_plus, j_minus, graph,
                        delta_scale=cfg.get("cs.delta_scale", 0.0),
                        delta_cap=cfg.get("cs.delta_cap", 1.0))


def build_abstract_noise(cfg: ExperimentConfig,
                         system: ConstructedSystem) -> AbstractNoise:
    e_model = build_noise(cfg, system.dim, prefix="cs")
    r_scale = cfg.get("cs.r_scale", 0.0)
    rt_scale = cfg.get("cs.rt_scale", 0.0)
    return AbstractNoise(
        e_model=e_model,
        r_spec=RSeriesSpec(r_scale, cfg.get("cs.r_exponent", 1.0))
        if r_scale else None,
        rt_spec=RTildeSeriesSpec(rt_scale, cfg.get("cs.rt_mode", "gamma"))
        if rt_scale else None)
