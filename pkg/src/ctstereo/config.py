"""Plain-text scene configuration: ``[section]`` headers with ``key = value`` lines.

Example::

    [camera]
    psi_x = 64
    f = 1.0

    [material]
    k_d_r = 0.4
    k_s = 0.3

    [lights]
    light1 = directional 0.8 0.0 1.0 1.0
    light2 = point -0.4 0.7 -1.0 9.0

Unknown sections and keys are rejected with the offending line number.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from .core import CameraIntrinsics, ConfigError, CTStereoError, LightSet, LightSpec, MaterialParams
from .renderer import SURFACE_DEFAULTS
from .ron import INIT_METHODS, RonConfig
from .solver import SOLVERS, SolverConfig

SECTIONS = ("camera", "material", "lights", "surface", "paths", "solver", "ron", "integrator")
_SURFACE_PARAMS = sorted({k for p in SURFACE_DEFAULTS.values() for k in p})
KEYS = {
    "camera": ("psi_x", "psi_y", "delta_x", "delta_y", "f"),
    "material": ("k_d_r", "k_d_g", "k_d_b", "k_s", "m", "f_lambda"),
    "surface": ("name", "size", "depth", "mask", *_SURFACE_PARAMS),
    "paths": ("images", "mask", "output"),
    "solver": ("solver", "init", "eps1", "eps2", "eps3", "k_max", "tau", "delta0",
               "theta_max", "spec_percentile", "curv_window"),
    "ron": ("max_sweeps", "sweep_tol", "initial_depth", "initial_m", "initial_kd"),
    "integrator": ("tol", "maxiter"),
}
_INT_KEYS = {"size", "k_max", "theta_max", "curv_window", "max_sweeps", "maxiter"}
_STR_KEYS = {"name", "depth", "mask", "images", "output", "solver", "init"}


@dataclass
class SceneConfig:
    camera: dict = field(default_factory=dict)
    material: dict = field(default_factory=dict)
    lights: list = field(default_factory=list)  # [(kind, (x, y, z), intensity)]
    surface: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    ron: dict = field(default_factory=dict)
    integrator: dict = field(default_factory=dict)
    # directory that relative paths resolve against
    base: Path = field(default=Path("."), compare=False)
    present: frozenset = field(default=frozenset(), compare=False)

    # -- typed views -------------------------------------------------------
    def camera_for(self, width: int, height: int) -> CameraIntrinsics:
        d = CameraIntrinsics.default(width, height)
        c = self.camera
        return CameraIntrinsics(
            float(c.get("psi_x", d.psi_x)), float(c.get("psi_y", d.psi_y)),
            float(c.get("delta_x", d.delta_x)), float(c.get("delta_y", d.delta_y)),
            float(c.get("f", d.f)),
        )

    def material_params(self) -> MaterialParams:
        m = self.material
        d = MaterialParams()
        kd = (m.get("k_d_r", d.k_d[0]), m.get("k_d_g", d.k_d[1]), m.get("k_d_b", d.k_d[2]))
        return MaterialParams(kd, m.get("k_s", d.k_s), m.get("m", d.m),
                              m.get("f_lambda", d.f_lambda))

    def light_set(self) -> LightSet:
        specs = []
        for kind, vec, intensity in self.lights:
            if kind == "directional":
                specs.append(LightSpec.directional(vec, intensity))
            else:
                specs.append(LightSpec.point(vec, intensity))
        return LightSet(tuple(specs))

    def solver_config(self) -> SolverConfig:
        keys = {f.name for f in fields(SolverConfig)}
        return SolverConfig(**{k: v for k, v in self.solver.items() if k in keys})

    def ron_config(self, **overrides) -> RonConfig:
        mat = self.material_params()
        kw = dict(
            k_s=mat.k_s, f_lambda=mat.f_lambda,
            solver=self.solver.get("solver", "dogleg"), init=self.solver.get("init", "dgmc"),
            solver_cfg=self.solver_config(),
            spec_percentile=self.solver.get("spec_percentile", 95.0),
            curv_window=self.solver.get("curv_window", 5),
            integrator_tol=self.integrator.get("tol", 1e-10),
            integrator_maxiter=self.integrator.get("maxiter", 2000),
        )
        kw.update(self.ron)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return RonConfig(**kw)

    def path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base / p

    def image_paths(self) -> list[Path]:
        raw = self.paths.get("images", "")
        return [self.path(s.strip()) for s in raw.split(",") if s.strip()]

    # -- serialisation -----------------------------------------------------
    def to_text(self) -> str:
        out = []
        for sec in SECTIONS:
            if sec == "lights":
                if not self.lights:
                    continue
                out.append("[lights]")
                for i, (kind, vec, inten) in enumerate(self.lights, 1):
                    out.append(f"light{i} = {kind} " + " ".join(repr(float(v)) for v in vec)
                               + f" {float(inten)!r}")
                out.append("")
                continue
            block = getattr(self, sec)
            if not block:
                continue
            out.append(f"[{sec}]")
            for k in KEYS[sec]:
                if k in block:
                    v = block[k]
                    out.append(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}")
            out.append("")
        return "\n".join(out)


def _line_of(text: str, section: str, key: str | None = None) -> int:
    cur = None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            cur = m.group(1).strip()
            if key is None and cur == section:
                return no
            continue
        if key is not None and cur == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return no
    return 0


def _fail(text, source, msg, section=None, key=None):
    line = _line_of(text, section, key) if section else 0
    where = f"{source}:{line}: " if line else f"{source}: "
    raise ConfigError(where + msg)


def _convert(text, source, sec, key, raw):
    raw = raw.strip()
    if key in _STR_KEYS:
        if not raw:
            _fail(text, source, f"empty value for {key!r}", sec, key)
        return raw
    try:
        return int(raw) if key in _INT_KEYS else float(raw)
    except ValueError:
        kind = "an integer" if key in _INT_KEYS else "a number"
        _fail(text, source, f"{key!r} must be {kind}, got {raw!r}", sec, key)


def _parse_light(text, source, key, raw):
    parts = raw.split()
    if len(parts) not in (4, 5) or parts[0] not in ("directional", "point"):
        _fail(text, source, f"{key}: expected 'directional|point x y z [intensity]'", "lights", key)
    try:
        nums = [float(p) for p in parts[1:]]
    except ValueError:
        _fail(text, source, f"{key}: light coordinates must be numbers", "lights", key)
    intensity = nums[3] if len(nums) == 4 else 1.0
    return parts[0], tuple(nums[:3]), intensity


def parse_config_text(text: str, source: str = "<config>", base=".") -> SceneConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        msg = str(exc).splitlines()[0]
        raise ConfigError(f"{source}:{line}: {msg}" if line else f"{source}: {msg}") from None
    cfg = SceneConfig(base=Path(base), present=frozenset(cp.sections()))
    for sec in cp.sections():
        if sec not in SECTIONS:
            _fail(text, source, f"unknown section [{sec}]", sec)
        if sec == "lights":
            for key, raw in cp[sec].items():
                if not re.fullmatch(r"light\d+", key):
                    _fail(text, source, f"unknown key {key!r} in [lights]", sec, key)
            keys = sorted(cp[sec], key=lambda k: int(k[5:]))
            cfg.lights = [_parse_light(text, source, k, cp[sec][k]) for k in keys]
            continue
        block = getattr(cfg, sec)
        for key, raw in cp[sec].items():
            if key not in KEYS[sec]:
                _fail(text, source, f"unknown key {key!r} in [{sec}]", sec, key)
            block[key] = _convert(text, source, sec, key, raw)
    _validate(cfg, text, source)
    return cfg


def _validate(cfg: SceneConfig, text, source):
    s = cfg.solver
    if "solver" in s and s["solver"] not in SOLVERS:
        _fail(text, source, f"solver must be one of {sorted(SOLVERS)}", "solver", "solver")
    if "init" in s and s["init"] not in INIT_METHODS:
        _fail(text, source, f"init must be one of {list(INIT_METHODS)}", "solver", "init")
    name = cfg.surface.get("name")
    if name is not None:
        if name not in SURFACE_DEFAULTS:
            _fail(text, source, f"unknown surface {name!r}", "surface", "name")
        extra = set(cfg.surface) & set(_SURFACE_PARAMS)
        bad = extra - set(SURFACE_DEFAULTS[name])
        if bad:
            k = sorted(bad)[0]
            _fail(text, source, f"parameter {k!r} does not apply to surface {name!r}", "surface", k)
    # typed views raise on out-of-range values
    for sec, view in (("material", cfg.material_params), ("lights", cfg.light_set),
                      ("solver", cfg.solver_config)):
        try:
            view()
        except (ValueError, TypeError, CTStereoError) as exc:
            _fail(text, source, str(exc), sec)
    try:
        cfg.camera_for(int(cfg.surface.get("size", 64)), int(cfg.surface.get("size", 64)))
    except Exception as exc:
        _fail(text, source, str(exc), "camera")


def load_config(path) -> SceneConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config_text(text, str(path), path.parent)
