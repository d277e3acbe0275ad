"""Command-line entry points: ``render``, ``reconstruct`` and ``evaluate``.

Exit codes: 0 success, 2 usage or configuration error, 3 invalid input
data (e.g. coplanar lights), 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import SceneConfig, load_config
from .core import (
    ConfigError,
    CoplanarError,
    CTStereoError,
    DimensionError,
    EmptyDomain,
    InvalidImage,
    TooFewLights,
    validate_light_set,
)
from .imageio import PFMError, read_image, read_pfm, write_pfm, write_png
from .metrics import maen, msed
from .renderer import Scene, analytic_surfaces, render_dataset, shading_geometry
from .ron import run_ron, status_counts

log = logging.getLogger("ctstereo")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, TooFewLights, PFMError, FileNotFoundError)):
        return EXIT_USAGE
    if isinstance(exc, (CoplanarError, InvalidImage, DimensionError, EmptyDomain)):
        return EXIT_DATA
    return EXIT_NUMERIC


def _out_dir(cfg: SceneConfig, override) -> Path:
    if override:
        out = Path(override)
    elif "output" in cfg.paths:
        out = cfg.path(cfg.paths["output"])
    else:
        out = cfg.base / "out"
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- render ------------------------------------------------------------------

def _scene_from_config(cfg: SceneConfig) -> Scene:
    if "surface" not in cfg.present:
        raise ConfigError("missing [surface] block")
    if "lights" not in cfg.present or not cfg.lights:
        raise ConfigError("missing [lights] block")
    surf = cfg.surface
    if "depth" in surf:
        depth = read_pfm(cfg.path(surf["depth"]))
        if depth.ndim != 2:
            raise ConfigError("surface depth must be a single-channel PFM")
        mask = np.isfinite(depth) & (depth > 0)
        if "mask" in surf:
            mask &= read_image(cfg.path(surf["mask"])) > 0.5
        camera = cfg.camera_for(depth.shape[1], depth.shape[0])
        return Scene(np.where(mask, depth, 1.0), camera, cfg.material_params(), cfg.light_set(), mask)
    if "name" not in surf:
        raise ConfigError("[surface] needs 'name' or 'depth'")
    size = int(surf.get("size", 64))
    params = {k: v for k, v in surf.items() if k not in ("name", "size", "depth", "mask")}
    camera = cfg.camera_for(size, size)
    s = analytic_surfaces(surf["name"], size, params, camera)
    return Scene(s.depth, camera, cfg.material_params(), cfg.light_set(), s.mask, s.gradient)


def cmd_render(config_path, out=None) -> int:
    cfg = load_config(config_path)
    scene = _scene_from_config(cfg)
    out = _out_dir(cfg, out)
    images = render_dataset(scene)
    names = []
    for i, im in enumerate(images, 1):
        write_png(out / f"I{i}.png", im)
        write_pfm(out / f"I{i}.pfm", im)
        names.append(f"I{i}.pfm")
    N, _, _ = shading_geometry(scene.depth, scene.camera, scene.mask, scene.gradient)
    write_pfm(out / "normals_gt.pfm", np.where(scene.mask[..., None], N, np.nan))
    write_pfm(out / "depth_gt.pfm", np.where(scene.mask, scene.depth, np.nan))
    write_png(out / "mask.png", scene.mask.astype(float))

    # a config that reconstructs the rendered images in place
    echo = SceneConfig(camera=dict(psi_x=scene.camera.psi_x, psi_y=scene.camera.psi_y,
                                   delta_x=scene.camera.delta_x, delta_y=scene.camera.delta_y,
                                   f=scene.camera.f),
                       material=dict(cfg.material), lights=list(cfg.lights),
                       paths={"images": ", ".join(names), "mask": "mask.png", "output": "recon"},
                       solver=dict(cfg.solver), ron=dict(cfg.ron), integrator=dict(cfg.integrator))
    echo.ron.setdefault("initial_depth", float(np.mean(scene.depth[scene.mask])))
    (out / "scene.ini").write_text(echo.to_text())
    print(f"rendered {len(images)} images to {out}")
    return EXIT_OK


# -- reconstruct -------------------------------------------------------------

def cmd_reconstruct(config_path, out=None, overrides=None) -> int:
    cfg = load_config(config_path)
    if "lights" not in cfg.present or not cfg.lights:
        raise ConfigError("missing [lights] block")
    paths = cfg.image_paths()
    if len(paths) < 3:
        raise TooFewLights(f"need at least 3 images, got {len(paths)}")
    if len(paths) != len(cfg.lights):
        raise ConfigError(f"{len(paths)} images but {len(cfg.lights)} lights")
    images = [read_image(p) for p in paths]
    H, W = images[0].shape[:2]
    mask = None
    if "mask" in cfg.paths:
        m = read_image(cfg.path(cfg.paths["mask"]))
        mask = (m.mean(axis=-1) if m.ndim == 3 else m) > 0.5
    camera = cfg.camera_for(W, H)
    lights = cfg.light_set()
    rcfg = cfg.ron_config(**(overrides or {}))
    validate_light_set(lights, reference_depth=rcfg.initial_depth)
    state = run_ron(images, lights, camera, rcfg, mask)
    out = _out_dir(cfg, out)
    write_pfm(out / "normals.pfm", state.normals)
    write_pfm(out / "depth.pfm", state.depth)
    write_pfm(out / "albedo.pfm", np.where(state.mask[..., None], state.albedo, np.nan))
    report = {
        "solver": rcfg.solver,
        "init": rcfg.init,
        "m": state.m,
        "sweeps": state.iteration,
        "max_sweeps": rcfg.max_sweeps,
        "stop_reason": state.stop_reason,
        "mean_objective_per_sweep": state.objective_history,
        "solver_status": status_counts(state.status),
        "pixels": int(state.mask.sum()),
        "mean_albedo": [float(v) for v in np.mean(state.albedo[state.mask], axis=0)],
    }
    (out / "report.txt").write_text(json.dumps(report, indent=2) + "\n")
    print(f"reconstructed {report['pixels']} pixels in {state.iteration} sweeps; m = {state.m:.6g}")
    return EXIT_OK


# -- evaluate ----------------------------------------------------------------

def _find(d: Path, *names) -> Path:
    for n in names:
        if (d / n).is_file():
            return d / n
    raise FileNotFoundError(f"{d}: none of {', '.join(names)} found")


def cmd_evaluate(est_dir, gt_dir, align: str = "mean") -> int:
    est_dir, gt_dir = Path(est_dir), Path(gt_dir)
    for d in (est_dir, gt_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"{d}: not a directory")
    pairs = {}
    for kind in ("normals", "depth"):
        pairs[kind] = [read_pfm(_find(d, f"{kind}.pfm", f"{kind}_gt.pfm")) for d in (est_dir, gt_dir)]
    ne, ng = pairs["normals"]
    de, dg = pairs["depth"]
    if ne.shape != ng.shape or de.shape != dg.shape:
        raise DimensionError("estimate and ground truth sizes differ")
    nmask = np.all(np.isfinite(ne), axis=-1) & np.all(np.isfinite(ng), axis=-1)
    dmask = np.isfinite(de) & np.isfinite(dg)
    a = maen(ne, ng, nmask)
    e = msed(de, dg, dmask, align)
    print(f"MAEN_deg={a!r} MSED={e!r}")
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctstereo", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("render", help="synthesize input images from a scene config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: [paths] output or ./out)")

    c = sub.add_parser("reconstruct", help="recover normals, albedo, depth and roughness")
    c.add_argument("config")
    c.add_argument("--out")
    c.add_argument("--solver", choices=["bfgs", "lm", "dogleg"])
    c.add_argument("--init", choices=["dgmc", "flat", "lambertian"])
    c.add_argument("--spec-percentile", type=float)
    c.add_argument("--curv-window", type=int)
    c.add_argument("--integrator-tol", type=float)
    c.add_argument("--integrator-maxiter", type=int)
    c.add_argument("--max-sweeps", type=int)
    c.add_argument("--threads", type=int, default=None, help="worker threads for per-pixel solves")

    e = sub.add_parser("evaluate", help="compare an estimate directory with ground truth")
    e.add_argument("est_dir")
    e.add_argument("gt_dir")
    e.add_argument("--msed-align", choices=["mean", "none"], default="mean")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "render":
            return cmd_render(args.config, args.out)
        if args.command == "reconstruct":
            overrides = dict(
                solver=args.solver, init=args.init, spec_percentile=args.spec_percentile,
                curv_window=args.curv_window, integrator_tol=args.integrator_tol,
                integrator_maxiter=args.integrator_maxiter, max_sweeps=args.max_sweeps,
                threads=args.threads,
            )
            return cmd_reconstruct(args.config, args.out, overrides)
        return cmd_evaluate(args.est_dir, args.gt_dir, args.msed_align)
    except (CTStereoError, OSError, ValueError, FloatingPointError) as exc:
        code = _exit_code(exc)
        print(f"ctstereo {args.command}: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
