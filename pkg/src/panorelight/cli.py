"""Command-line pipeline: synth -> depth -> lightfield -> probe / decompose -> refine -> metrics.

Stages are chained through a JSON manifest (``manifest.json`` in the output
directory) that records every artifact path, the rig and the parameters that
produced each stage. Explicit file flags override the manifest entries.

Numeric options can also be set with ``PANO_<OPTION>`` environment variables
(for example ``PANO_BASELINE=0.3`` or ``PANO_THREADS=2``); flags win.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import DomainError

MANIFEST_NAME = "manifest.json"


# ---------------------------------------------------------------- manifest

class Manifest:
    def __init__(self, path, data=None):
        self.path = os.path.abspath(path)
        self.root = os.path.dirname(self.path)
        self.data = data or {"version": __version__, "rig": {}, "artifacts": {}, "stages": {}}

    @classmethod
    def load(cls, path):
        if os.path.isdir(path):
            path = os.path.join(path, MANIFEST_NAME)
        if not os.path.exists(path):
            raise DomainError(f"manifest not found: {path}")
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as e:
                raise DomainError(f"{path}: not valid JSON ({e.msg})") from None
        m = cls(path, data)
        m.validate()
        return m

    @classmethod
    def open_or_create(cls, manifest, out):
        if manifest:
            m = cls.load(manifest)
            if out and os.path.abspath(out) != m.root:
                # outputs go elsewhere: start a new manifest there that keeps the inputs
                new = cls(os.path.join(out, MANIFEST_NAME), json.loads(json.dumps(m.data)))
                for entry in new.data["artifacts"].values():
                    entry["path"] = os.path.relpath(os.path.join(m.root, entry["path"]), out)
                return new
            return m
        if not out:
            raise DomainError("give --manifest or --out")
        path = os.path.join(out, MANIFEST_NAME)
        return cls.load(path) if os.path.exists(path) else cls(path)

    def validate(self):
        for key in ("artifacts", "stages", "rig"):
            self.data.setdefault(key, {})
        baseline = self.data["rig"].get("baseline")
        if baseline is not None and not baseline > 0:
            raise DomainError(f"{self.path}: rig baseline must be positive")
        for name, entry in self.data["artifacts"].items():
            if not os.path.exists(os.path.join(self.root, entry["path"])):
                raise DomainError(f"{self.path}: artifact {name!r} missing ({entry['path']})")

    def artifact(self, name, override=None):
        if override:
            if not os.path.exists(override):
                raise DomainError(f"input not found: {override}")
            return override
        entry = self.data["artifacts"].get(name)
        if entry is None:
            raise DomainError(f"manifest has no {name!r}; run the stage that produces it")
        return os.path.join(self.root, entry["path"])

    def output(self, filename):
        return os.path.join(self.root, filename)

    def record(self, stage, params, artifacts):
        blob = json.dumps(params, sort_keys=True, default=str).encode()
        self.data["stages"][stage] = {
            "tool_version": __version__,
            "config_hash": hashlib.sha256(blob).hexdigest()[:16],
            "params": params,
        }
        for name, path in artifacts.items():
            self.data["artifacts"][name] = {
                "path": os.path.relpath(path, self.root),
                "stage": stage,
            }

    def save(self):
        from .io import atomic_open

        with atomic_open(self.path, "w") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")

    @property
    def baseline(self):
        return self.data["rig"].get("baseline")


# ---------------------------------------------------------------- helpers

def _read_map(path):
    from .io import read_pfm

    if not os.path.exists(path):
        raise DomainError(f"input not found: {path}")
    return np.asarray(read_pfm(path), dtype=np.float64)


def _read_mask(path):
    from .io import read_mask_png

    if not os.path.exists(path):
        raise DomainError(f"input not found: {path}")
    return read_mask_png(path)


def _rig(args, manifest):
    from .equirect import CameraRig

    baseline = args.baseline if args.baseline is not None else manifest.baseline
    if baseline is None:
        baseline = 0.2
    rig = CameraRig(float(baseline))
    manifest.data["rig"] = {"baseline": rig.baseline, "reference": rig.reference}
    return rig


def _set_threads(args):
    if getattr(args, "threads", None):
        from . import _kernels

        _kernels.set_threads(args.threads)


# ---------------------------------------------------------------- stages

def cmd_synth(args):
    from . import io, synth
    from .equirect import CameraRig

    scene = synth.load_scene(args.scene) if args.scene else synth.BoxScene()
    texture = args.texture if args.texture is not None else (scene.texture or not args.scene)
    if texture != scene.texture:
        scene = synth.BoxScene.from_dict({**scene.to_dict(), "texture": texture})
    if args.seed is not None:
        scene = synth.BoxScene.from_dict({**scene.to_dict(), "seed": int(args.seed)})
    m = Manifest.open_or_create(None, args.out)
    baseline = args.baseline if args.baseline is not None else 0.2
    rig = CameraRig(float(baseline))
    m.data["rig"] = {"baseline": rig.baseline, "reference": rig.reference}
    dims = (args.height, 2 * args.height)
    pair = synth.generate_stereo_pair(scene, rig, dims, args.supersample)
    gt = pair["truth"]
    out = {
        "top": m.output("top.pfm"),
        "bottom": m.output("bottom.pfm"),
        "gt_depth": m.output("gt_depth.pfm"),
        "gt_normal": m.output("gt_normal.pfm"),
        "gt_reflectance": m.output("gt_reflectance.pfm"),
        "gt_shading": m.output("gt_shading.pfm"),
        "gt_emission": m.output("gt_emission.pfm"),
        "gt_disparity": m.output("gt_disparity.pfm"),
        "top_preview": m.output("top.png"),
        "scene": m.output("scene.json"),
    }
    io.write_pfm(out["top"], pair["top"])
    io.write_pfm(out["bottom"], pair["bottom"])
    io.write_pfm(out["gt_depth"], gt["depth"])
    io.write_pfm(out["gt_normal"], gt["normal"])
    io.write_pfm(out["gt_reflectance"], gt["reflectance"])
    io.write_pfm(out["gt_shading"], gt["shading"])
    io.write_pfm(out["gt_emission"], gt["emission"])
    io.write_pfm(out["gt_disparity"], pair["disparity"].values)
    io.write_png(out["top_preview"], pair["top"], exposure=args.exposure)
    with io.atomic_open(out["scene"], "w") as fh:
        json.dump(scene.to_dict(), fh, indent=2)
    m.record("synth", {"height": args.height, "supersample": args.supersample,
                       "baseline": rig.baseline, "scene": scene.to_dict()}, out)
    m.save()
    return m


def cmd_depth(args):
    from . import io
    from .stereo import DepthMap, MatchConfig, disparity_to_depth, match_vertical

    m = Manifest.open_or_create(args.manifest, args.out)
    top = _read_map(m.artifact("top", args.top))
    bottom = _read_map(m.artifact("bottom", args.bottom))
    rig = _rig(args, m)
    cfg = MatchConfig(window=args.window, max_disparity=args.max_disparity, cost=args.cost,
                      subpixel=not args.no_subpixel, lr_check_threshold=args.lr_threshold,
                      pole_band=args.pole_band)
    disp = match_vertical(top, bottom, cfg)
    depth = disparity_to_depth(disp, rig)
    filled = depth.filled() if np.any(depth.mask) else DepthMap(depth.values, depth.mask)
    if not np.any(depth.mask):
        raise DomainError("stereo matching produced no valid pixel")
    out = {
        "disparity": m.output("disparity.pfm"),
        "depth": m.output("depth.pfm"),
        "depth_mask": m.output("depth_mask.png"),
        "depth_filled": m.output("depth_filled.pfm"),
    }
    io.write_pfm(out["disparity"], disp.values)
    io.write_pfm(out["depth"], depth.values)
    io.write_mask_png(out["depth_mask"], depth.mask)
    io.write_pfm(out["depth_filled"], filled.values)
    m.record("depth", {**vars(cfg), "baseline": rig.baseline}, out)
    m.save()
    print(f"valid pixels: {depth.mask.mean():.1%}")
    return m


def cmd_lightfield(args):
    from .envlight import build_light_field

    m = Manifest.open_or_create(args.manifest, args.out)
    img = _read_map(m.artifact("top", args.image))
    depth = _read_map(m.artifact("depth_filled", args.depth))
    rig = _rig(args, m)
    lights = build_light_field(img, depth, rig)
    path = m.output("lights.txt" if args.text else "lights.bin")
    lights.save(path, text=args.text)
    m.record("lightfield", {"count": len(lights), "text": args.text}, {"lights": path})
    m.save()
    return m


def cmd_probe(args):
    from . import io
    from .envlight import PointLightSet, reconstruct_illumination
    from .render import render_mirror_probe

    m = Manifest.open_or_create(args.manifest, args.out)
    lights = PointLightSet.load(m.artifact("lights", args.lights))
    at = np.asarray(args.at, dtype=np.float64)
    dims = (args.resolution, 2 * args.resolution)
    illum = reconstruct_illumination(lights, at, dims, depth_tolerance=args.depth_tolerance)
    tag = args.name
    out = {
        f"{tag}_radiance": m.output(f"{tag}_radiance.pfm"),
        f"{tag}_depth": m.output(f"{tag}_depth.pfm"),
        f"{tag}_filled": m.output(f"{tag}_filled.png"),
        f"{tag}_preview": m.output(f"{tag}.png"),
    }
    io.write_pfm(out[f"{tag}_radiance"], illum.radiance)
    io.write_pfm(out[f"{tag}_depth"], illum.depth)
    io.write_mask_png(out[f"{tag}_filled"], illum.filled_mask)
    io.write_png(out[f"{tag}_preview"], illum.radiance, exposure=args.exposure)
    if args.mirror:
        patch, mask = render_mirror_probe(lights, at, args.radius, args.view,
                                          (args.mirror_size, args.mirror_size), dims,
                                          args.depth_tolerance)
        out[f"{tag}_mirror"] = m.output(f"{tag}_mirror.png")
        io.write_png(out[f"{tag}_mirror"], patch, exposure=args.exposure, alpha=mask)
    m.record(f"probe:{tag}", {"at": list(at), "resolution": args.resolution,
                              "mirror": args.mirror}, out)
    m.save()
    return m


def _render_config(args):
    from .render import RenderConfig

    return RenderConfig(illum_resolution=(args.illum_height, 2 * args.illum_height),
                        weighting=args.weighting, stride=args.stride,
                        depth_tolerance=args.depth_tolerance, threads=args.threads)


def cmd_decompose(args):
    from . import io
    from .envlight import PointLightSet, build_light_field
    from .geometry import normals_from_depth, reflectance_init
    from .render import render_shading

    m = Manifest.open_or_create(args.manifest, args.out)
    img = _read_map(m.artifact("top", args.image))
    depth = _read_map(m.artifact("depth_filled", args.depth))
    rig = _rig(args, m)
    try:
        lights = PointLightSet.load(m.artifact("lights", args.lights))
    except DomainError:
        lights = build_light_field(img, depth, rig)
    cfg = _render_config(args)
    normals = normals_from_depth(depth, rig)
    shading = render_shading(lights, depth, normals, rig, cfg)
    refl = reflectance_init(img, shading, eps=args.eps_shading, r_max=args.r_max)
    out = {
        "normal": m.output("normal.pfm"),
        "normal_preview": m.output("normal.png"),
        "normal_mask": m.output("normal_mask.png"),
        "shading": m.output("shading.pfm"),
        "reflectance": m.output("reflectance.pfm"),
    }
    io.write_pfm(out["normal"], normals.values)
    io.write_normal_png(out["normal_preview"], normals.values)
    io.write_mask_png(out["normal_mask"], normals.mask)
    io.write_pfm(out["shading"], shading)
    io.write_pfm(out["reflectance"], refl.values)
    params = {k: v for k, v in vars(cfg).items() if k != "threads"}
    m.record("decompose", {**params, "eps_shading": args.eps_shading, "r_max": args.r_max},
             out)
    m.save()
    return m


def cmd_refine(args):
    from . import io
    from .refine import RefineConfig, tv_refine

    m = Manifest.open_or_create(args.manifest, args.out)
    img = _read_map(m.artifact("top", args.image))
    R0 = _read_map(m.artifact("reflectance", args.reflectance))
    S0 = _read_map(m.artifact("shading", args.shading))
    cfg = RefineConfig(lambda1=args.lambda1, lambda2=args.lambda2,
                       lambda_prox=args.lambda_prox, learning_rate=args.learning_rate,
                       iterations=args.iterations, charbonnier_eps=args.charbonnier_eps,
                       log_every=args.log_every)
    R, S, trace = tv_refine(img, R0, S0, cfg)
    s = trace.scales[-1]
    resid = img - s * R * S
    closure = float(np.sqrt(np.mean(resid**2)) / np.sqrt(np.mean(img**2)))
    out = {
        "reflectance_refined": m.output("reflectance_refined.pfm"),
        "shading_refined": m.output("shading_refined.pfm"),
        "refine_trace": m.output("refine_trace.csv"),
    }
    io.write_pfm(out["reflectance_refined"], R)
    io.write_pfm(out["shading_refined"], S)
    trace.to_csv(out["refine_trace"])
    m.record("refine", vars(cfg), out)
    m.data["stages"]["refine"]["scale"] = s
    m.data["stages"]["refine"]["closure_relative_rms"] = closure
    m.save()
    print(f"scale {s:.6g}  relative RMS of I - sRS: {closure:.4%}")
    return m


METRIC_KINDS = ("image", "reflectance", "normal")


def cmd_metrics(args):
    from . import io, metrics

    if len(args.pred) != len(args.gt):
        raise DomainError("give the same number of --pred and --gt files")
    kinds = args.kind or ["image"] * len(args.pred)
    if len(kinds) == 1:
        kinds = kinds * len(args.pred)
    if len(kinds) != len(args.pred):
        raise DomainError("give one --kind per pair (or a single one for all)")
    mask = _read_mask(args.mask) if args.mask else None
    rows = []
    for pred_path, gt_path, kind in zip(args.pred, args.gt, kinds):
        pred = _read_map(pred_path)
        gt = _read_map(gt_path)
        label = os.path.splitext(os.path.basename(pred_path))[0]
        if kind == "normal":
            results = [("mae_degrees", metrics.mae_degrees(pred, gt, mask))]
            if mask is None:
                results.append(("loss_normal", metrics.loss_normal(pred, gt)))
        else:
            results = [("smse", metrics.smse(pred, gt, mask)),
                       ("psnr", metrics.psnr(pred, gt, mask, args.peak))]
            if kind == "reflectance" and mask is None:
                results.append(("loss_reflectance", metrics.loss_reflectance(pred, gt)))
        for name, value in results:
            rep = metrics.report(f"{label}:{name}", value, mask, pred.shape)
            rows.append([rep.name, repr(rep.value), rep.pixel_count, rep.mask_coverage])
    io.write_csv(args.out, ["name", "value", "pixel_count", "mask_coverage"], rows)
    for r in rows:
        print(f"{r[0]}: {r[1]}")


# ---------------------------------------------------------------- parser

def _add_common(p):
    p.add_argument("--threads", type=int, default=None, help="cap kernel parallelism")
    p.add_argument("--seed", type=int, default=None, help="seed for stochastic choices")


def _add_stage_io(p, out_required=False):
    p.add_argument("--manifest", help="manifest.json (or its directory) of earlier stages")
    p.add_argument("--out", required=out_required, help="output directory (default: manifest's)")
    p.add_argument("--baseline", type=float, default=None, help="rig baseline in meters")


def _add_render(p):
    p.add_argument("--illum-height", type=int, default=128)
    p.add_argument("--weighting", choices=("solid_angle", "uniform"), default="solid_angle")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--depth-tolerance", type=float, default=0.05)


def build_parser():
    parser = argparse.ArgumentParser(prog="panorelight", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render the box-scene stereo pair and ground truth")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--scene", help="scene file (key=value lines or JSON)")
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--supersample", type=int, default=2)
    p.add_argument("--baseline", type=float, default=None)
    p.add_argument("--exposure", type=float, default=0.5)
    tex = p.add_mutually_exclusive_group()
    tex.add_argument("--texture", dest="texture", action="store_true", default=None,
                     help="checker-modulated albedo so stereo has features "
                          "(default unless a scene file says otherwise)")
    tex.add_argument("--no-texture", dest="texture", action="store_false")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("depth", help="vertical stereo matching and triangulation")
    _add_common(p)
    _add_stage_io(p)
    p.add_argument("--top")
    p.add_argument("--bottom")
    p.add_argument("--window", type=int, default=9)
    p.add_argument("--max-disparity", type=int, default=64)
    p.add_argument("--cost", choices=("zncc", "sad"), default="zncc")
    p.add_argument("--no-subpixel", action="store_true")
    p.add_argument("--lr-threshold", type=float, default=1.0)
    p.add_argument("--pole-band", type=float, default=0.05)
    p.set_defaults(func=cmd_depth)

    p = sub.add_parser("lightfield", help="turn image + depth into a point-light set")
    _add_common(p)
    _add_stage_io(p)
    p.add_argument("--image")
    p.add_argument("--depth", help="dense depth PFM")
    p.add_argument("--text", action="store_true", help="write the plain-text table")
    p.set_defaults(func=cmd_lightfield)

    p = sub.add_parser("probe", help="illumination map (and mirror ball) at a 3D point")
    _add_common(p)
    _add_stage_io(p)
    p.add_argument("--lights")
    p.add_argument("--at", type=float, nargs=3, default=[0.0, 0.0, 0.0], metavar=("X", "Y", "Z"))
    p.add_argument("--resolution", type=int, default=256, help="map height")
    p.add_argument("--name", default="probe")
    p.add_argument("--depth-tolerance", type=float, default=0.0)
    p.add_argument("--mirror", action="store_true")
    p.add_argument("--radius", type=float, default=0.1)
    p.add_argument("--view", type=float, nargs=3, default=[0.0, 0.0, 1.0])
    p.add_argument("--mirror-size", type=int, default=128)
    p.add_argument("--exposure", type=float, default=0.5)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("decompose", help="normals, shading and initial reflectance")
    _add_common(p)
    _add_stage_io(p)
    _add_render(p)
    p.add_argument("--image")
    p.add_argument("--depth")
    p.add_argument("--lights")
    p.add_argument("--eps-shading", type=float, default=1e-3)
    p.add_argument("--r-max", type=float, default=4.0)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("refine", help="TV refinement of reflectance and shading")
    _add_common(p)
    _add_stage_io(p)
    p.add_argument("--image")
    p.add_argument("--reflectance")
    p.add_argument("--shading")
    p.add_argument("--lambda1", type=float, default=0.1)
    p.add_argument("--lambda2", type=float, default=10.0)
    p.add_argument("--lambda-prox", type=float, default=0.01)
    p.add_argument("--learning-rate", type=float, default=1e-4)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--charbonnier-eps", type=float, default=1e-3)
    p.add_argument("--log-every", type=int, default=50)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("metrics", help="compare prediction maps with ground truth")
    _add_common(p)
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--gt", nargs="+", required=True)
    p.add_argument("--kind", nargs="+", choices=METRIC_KINDS)
    p.add_argument("--mask")
    p.add_argument("--peak", type=float, default=None)
    p.add_argument("--out", required=True, help="CSV report path")
    p.set_defaults(func=cmd_metrics)

    _apply_env_defaults(parser)
    return parser


def _subparsers(parser):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            yield from action.choices.values()


def _apply_env_defaults(parser, environ=None):
    """Let ``PANO_<DEST>`` override the default of every numeric option."""
    environ = os.environ if environ is None else environ
    for sp in _subparsers(parser):
        for action in sp._actions:
            if action.type not in (int, float):
                continue
            raw = environ.get("PANO_" + action.dest.upper())
            if raw is None:
                continue
            try:
                if action.nargs:
                    value = [action.type(x) for x in raw.replace(",", " ").split()]
                else:
                    value = action.type(raw)
            except ValueError:
                raise DomainError(f"PANO_{action.dest.upper()}={raw!r} is not a number") from None
            action.default = value
            action.required = False


def main(argv=None):
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        _set_threads(args)
        args.func(args)
    except (DomainError, OSError) as e:
        print(f"panorelight: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
