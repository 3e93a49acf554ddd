"""Procedural scenes with exact intrinsic ground truth.

Scenes are flat-albedo shapes on a flat background. Disks are rendered as
sphere caps, which gives analytic normals and therefore analytic Lambertian
shading and Blinn-Phong highlights. Images are composed from the stored
components with the functions in :mod:`retinet.imaging`, so every sample
satisfies its formation equation exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError
from .imaging import (IntrinsicSet, as_image, compose_diffuse, compose_specular,
                      compose_with_light)
from .io import read_image, read_pfm, write_pfm

FORMATIONS = ("diffuse", "global_light", "specular", "full")
MANIFEST_VERSION = 1
ALBEDO_RANGE = (0.05, 1.0)


@dataclass
class ShapeSpec:
    kind: str  # "cap" or "polygon"
    center: tuple[float, float]  # (row, col) in pixels
    size: float  # radius in pixels
    albedo: tuple[float, float, float]
    tilt: float = 0.0  # caps: normal tilt at the rim, radians
    rotation: float = 0.0  # polygons
    vertex_radii: tuple[float, ...] = ()  # polygons: per-vertex radius as a fraction of size

    @property
    def sphere_radius(self) -> float:
        return self.size / math.sin(self.tilt)


@dataclass
class SpecularSpec:
    strength: float
    exponent: float


@dataclass
class SceneSpec:
    seed: int
    canvas: tuple[int, int]
    background: tuple[float, float, float]
    shapes: list[ShapeSpec]
    light_direction: tuple[float, float, float]
    light_color: tuple[float, float, float]
    ambient: float
    specular: SpecularSpec | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        d["shapes"] = [ShapeSpec(**{**s, "center": tuple(s["center"]), "albedo": tuple(s["albedo"]),
                                    "vertex_radii": tuple(s["vertex_radii"])}) for s in d["shapes"]]
        d["specular"] = SpecularSpec(**d["specular"]) if d.get("specular") else None
        for k in ("canvas", "background", "light_direction", "light_color"):
            d[k] = tuple(d[k])
        return cls(**d)


@dataclass(frozen=True)
class GeneratorParams:
    canvas: tuple[int, int] = (32, 32)
    shape_count: tuple[int, int] = (2, 5)
    size_range: tuple[float, float] = (0.15, 0.35)  # radius as a fraction of min(canvas)
    tilt_range_deg: tuple[float, float] = (20.0, 45.0)
    cap_probability: float = 0.7
    ambient_range: tuple[float, float] = (0.05, 0.3)
    light_color_range: tuple[float, float] = (0.5, 1.0)
    specular_strength: tuple[float, float] = (0.1, 0.5)
    specular_exponent: tuple[float, float] = (10.0, 60.0)

    def __post_init__(self):
        lo, hi = self.shape_count
        if lo < 1 or hi < lo:
            raise DomainError(f"invalid shape_count range {self.shape_count}")
        if not 0 < self.size_range[0] <= self.size_range[1]:
            raise DomainError(f"invalid size_range {self.size_range}")
        if min(self.canvas) < 2:
            raise DomainError("canvas must be at least 2x2")


@dataclass
class Sample:
    image: np.ndarray
    set: IntrinsicSet
    edge_mask: np.ndarray
    spec: SceneSpec
    formation: str = "diffuse"
    shading_gradient_bound: float = 0.0


def generate_scene(seed: int, params: GeneratorParams = GeneratorParams()) -> SceneSpec:
    """Random scene; a pure function of ``seed`` and ``params``."""
    rng = np.random.default_rng(seed)
    h, w = params.canvas
    side = min(h, w)
    n = int(rng.integers(params.shape_count[0], params.shape_count[1] + 1))
    shapes = []
    for _ in range(n):
        albedo = tuple(float(a) for a in rng.uniform(*ALBEDO_RANGE, size=3))
        size = float(rng.uniform(*params.size_range) * side)
        center = (float(rng.uniform(0, h - 1)), float(rng.uniform(0, w - 1)))
        if rng.uniform() < params.cap_probability:
            tilt = math.radians(float(rng.uniform(*params.tilt_range_deg)))
            shapes.append(ShapeSpec("cap", center, size, albedo, tilt=tilt))
        else:
            nv = int(rng.integers(3, 8))
            radii = tuple(float(r) for r in rng.uniform(0.6, 1.0, size=nv))
            shapes.append(ShapeSpec("polygon", center, size, albedo,
                                    rotation=float(rng.uniform(0, 2 * math.pi)), vertex_radii=radii))
    background = tuple(float(a) for a in rng.uniform(*ALBEDO_RANGE, size=3))
    # uniform on the upper hemisphere: z uniform in [0, 1]
    z = float(rng.uniform(0.0, 1.0))
    phi = float(rng.uniform(0.0, 2 * math.pi))
    r = math.sqrt(max(0.0, 1.0 - z * z))
    light = (r * math.cos(phi), r * math.sin(phi), z)
    color = tuple(float(c) for c in rng.uniform(*params.light_color_range, size=3))
    ambient = float(rng.uniform(*params.ambient_range))
    spec = SpecularSpec(float(rng.uniform(*params.specular_strength)),
                        float(rng.uniform(*params.specular_exponent)))
    return SceneSpec(int(seed), (h, w), background, shapes, light, color, ambient, spec)


def _polygon_mask(shape: ShapeSpec, yy, xx):
    cy, cx = shape.center
    nv = len(shape.vertex_radii)
    angles = shape.rotation + 2 * np.pi * np.arange(nv) / nv
    vx = cx + shape.size * np.asarray(shape.vertex_radii) * np.cos(angles)
    vy = cy + shape.size * np.asarray(shape.vertex_radii) * np.sin(angles)
    theta = np.mod(np.arctan2(yy - cy, xx - cx) - shape.rotation, 2 * np.pi)
    k = np.minimum((theta / (2 * np.pi / nv)).astype(int), nv - 1)
    k1 = (k + 1) % nv
    ex, ey = vx[k1] - vx[k], vy[k1] - vy[k]
    # star-shaped about the center: inside iff on the center's side of edge k
    side_p = ex * (yy - vy[k]) - ey * (xx - vx[k])
    side_c = ex * (cy - vy[k]) - ey * (cx - vx[k])
    return (side_p * side_c) >= 0


def scene_geometry(spec: SceneSpec):
    """Rasterise albedo and unit normals; later shapes occlude earlier ones."""
    h, w = spec.canvas
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    R = np.empty((h, w, 3))
    R[:] = spec.background
    normals = np.zeros((h, w, 3))
    normals[..., 2] = 1.0
    for shape in spec.shapes:
        cy, cx = shape.center
        if shape.kind == "cap":
            dy, dx = yy - cy, xx - cx
            mask = dy * dy + dx * dx <= shape.size * shape.size
            rho = shape.sphere_radius
            nz = np.sqrt(np.maximum(rho * rho - dx * dx - dy * dy, 0.0))
            n = np.stack([dx, dy, nz], axis=-1) / rho
            normals[mask] = n[mask]
        elif shape.kind == "polygon":
            mask = _polygon_mask(shape, yy, xx)
            normals[mask] = (0.0, 0.0, 1.0)
        else:
            raise DomainError(f"unknown shape kind {shape.kind!r}")
        R[mask] = shape.albedo
    return R, normals


def edge_mask_of(R: np.ndarray) -> np.ndarray:
    """Pixels whose right or lower neighbour has a different reflectance."""
    R = as_image(R)
    m = np.zeros(R.shape[:2], dtype=bool)
    m[:, :-1] |= np.any(R[:, 1:] != R[:, :-1], axis=2)
    m[:-1, :] |= np.any(R[1:, :] != R[:-1, :], axis=2)
    return m[:, :, None].astype(np.float32)


def _shading_bound(spec: SceneSpec, chromatic: bool) -> float:
    caps = [s for s in spec.shapes if s.kind == "cap"]
    if not caps:
        return 0.0
    worst = max(1.0 / (s.sphere_radius * math.cos(s.tilt)) for s in caps)
    scale = max(spec.light_color) if chromatic else 1.0
    return math.sqrt(2.0) * scale * worst


def render(spec: SceneSpec, formation: str = "diffuse") -> Sample:
    """Rasterise a scene and compose its image with the selected equation.

    ``diffuse``: I = R*S with the light color folded into (chromatic) S.
    ``global_light``: I = R*S*E with gray S and global E.
    ``specular``: I = R*S + H with chromatic S and H.
    ``full``: I = R*S*E + H*E with gray S, gray H and global E.
    """
    if formation not in FORMATIONS:
        raise DomainError(f"unknown formation {formation!r}")
    R, normals = scene_geometry(spec)
    s = np.asarray(spec.light_direction, dtype=np.float64)
    lambert = np.maximum(0.0, normals @ s)
    gray = (spec.ambient + lambert)[..., None] * np.ones(3)
    color = np.asarray(spec.light_color, dtype=np.float64)
    chromatic = formation in ("diffuse", "specular")

    R = R.astype(np.float32)
    S = (gray * color if chromatic else gray).astype(np.float32)
    H = E = None
    if formation in ("specular", "full"):
        hv = s + np.array([0.0, 0.0, 1.0])
        hv /= np.linalg.norm(hv)
        sp = spec.specular or SpecularSpec(0.0, 1.0)
        hl = sp.strength * np.maximum(0.0, normals @ hv) ** sp.exponent
        H = (hl[..., None] * (color if chromatic else np.ones(3))).astype(np.float32)
    if formation in ("global_light", "full"):
        E = color.astype(np.float32)

    if formation == "diffuse":
        I = compose_diffuse(R, S)
    elif formation == "global_light":
        I = compose_with_light(R, S, E)
    elif formation == "specular":
        I = compose_specular(R, S, H)
    else:
        I = compose_specular(R, S, H, E)
    iset = IntrinsicSet(R, S, H, E)
    return Sample(I, iset, edge_mask_of(R), spec, formation, _shading_bound(spec, chromatic))


def smooth_shading_sample(seed: int, index: int, params: GeneratorParams = GeneratorParams(),
                          log_range: float = 0.8, waves: int = 3) -> Sample:
    """Piecewise-constant albedo under a smooth, gray, low-frequency shading field.

    The albedo map is the scene's; shading ignores the scene geometry and is
    ``exp`` of a sum of ``waves`` plane waves with at most one cycle across
    the canvas, spanning at most ``log_range`` in log units. No shading edge
    coincides with an albedo edge, which is the Retinex premise.
    """
    spec = generate_scene(derive_seed(seed, index), params)
    R, _ = scene_geometry(spec)
    h, w = spec.canvas
    rng = np.random.default_rng([derive_seed(seed, index), 1])
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    side = float(max(h, w))
    field_ = np.zeros((h, w))
    slope = 0.0
    for _ in range(waves):
        theta = rng.uniform(0, 2 * math.pi)
        freq = rng.uniform(0.25, 1.0) * 2 * math.pi / side
        field_ += np.cos(freq * (math.cos(theta) * xx + math.sin(theta) * yy) + rng.uniform(0, 2 * math.pi))
        slope += freq
    amp = log_range / (2 * waves)
    logS = amp * field_ - amp * waves  # shading peaks at most at 1
    S = np.repeat(np.exp(logS)[..., None], 3, axis=2).astype(np.float32)
    R = R.astype(np.float32)
    iset = IntrinsicSet(R, S)
    # |grad S| <= max(S) * amp * sum(freq) per unit step, times sqrt(2) for the two axes
    bound = math.sqrt(2.0) * amp * slope
    return Sample(compose_diffuse(R, S), iset, edge_mask_of(R), spec, "diffuse", bound)


def derive_seed(seed: int, index: int) -> int:
    """Independent per-sample seed so any subset can be regenerated alone."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def generate_sample(seed: int, index: int, formation: str = "diffuse",
                    params: GeneratorParams = GeneratorParams()) -> Sample:
    return render(generate_scene(derive_seed(seed, index), params), formation)


@dataclass
class Manifest:
    version: int
    count: int
    formation: str
    canvas: tuple[int, int]
    seed: int
    params: dict
    samples: list[dict] = field(default_factory=list)
    root: Path | None = None

    def to_json(self) -> str:
        d = {
            "version": self.version, "count": self.count, "formation": self.formation,
            "canvas": list(self.canvas), "seed": self.seed, "params": self.params,
            "samples": self.samples,
        }
        return json.dumps(d, indent=1)

    def checksum(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def path(self, entry: dict, key: str) -> Path:
        return Path(self.root or ".") / entry[key]


def _params_dict(params: GeneratorParams) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(params).items()}


def _write(path: Path, img) -> None:
    try:
        write_pfm(path, img)
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e


def dataset_gen(n: int, seed: int, out_dir, formation: str = "diffuse",
                canvas: tuple[int, int] = (32, 32), params: GeneratorParams | None = None) -> Manifest:
    """Write ``n`` samples as PFM files plus ``manifest.json`` (written last)."""
    if formation not in FORMATIONS:
        raise DomainError(f"unknown formation {formation!r}")
    params = params or GeneratorParams(canvas=tuple(canvas))
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create {out}: {e}") from e
    entries = []
    for i in range(n):
        sid = f"{i:05d}"
        sample = generate_sample(seed, i, formation, params)
        entry = {"id": sid, "seed": sample.spec.seed}
        files = {"image": sample.image, "reflectance": sample.set.reflectance,
                 "shading": sample.set.shading, "edge_mask": sample.edge_mask}
        if sample.set.specular is not None:
            files["specular"] = sample.set.specular
        if sample.set.illuminant is not None:
            files["illuminant"] = sample.set.illuminant
        for key, img in files.items():
            name = f"{sid}_{key}.pfm"
            _write(out / name, img)
            entry[key] = name
        entry["shading_gradient_bound"] = sample.shading_gradient_bound
        entry["scene"] = sample.spec.to_dict()
        entries.append(entry)
    manifest = Manifest(MANIFEST_VERSION, n, formation, tuple(params.canvas), int(seed),
                        _params_dict(params), entries, out)
    with open(out / "manifest.json", "w") as f:
        f.write(manifest.to_json())
    return manifest


def read_manifest(path) -> Manifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    with open(path) as f:
        d = json.load(f)
    return Manifest(d["version"], d["count"], d["formation"], tuple(d["canvas"]), d["seed"],
                    d.get("params", {}), d["samples"], path.parent)


def load_samples(manifest) -> list[Sample]:
    """Load every sample listed in a manifest (path or :class:`Manifest`)."""
    m = manifest if isinstance(manifest, Manifest) else read_manifest(manifest)
    out = []
    for e in m.samples:
        def rd(key):
            return read_pfm(m.path(e, key)) if key in e else None
        E = rd("illuminant")
        iset = IntrinsicSet(rd("reflectance"), rd("shading"), rd("specular"), E)
        out.append(Sample(rd("image"), iset, rd("edge_mask"), SceneSpec.from_dict(e["scene"]),
                          m.formation, e.get("shading_gradient_bound", 0.0)))
    return out


@dataclass
class BenchmarkItem:
    name: str
    image: np.ndarray
    intrinsics: IntrinsicSet
    mask: np.ndarray | None = None

    def __iter__(self):
        yield self.image
        yield self.intrinsics


_IMAGE_NAMES = ("image", "diffuse", "original", "input")
_EXTS = (".pfm", ".png")


def _find(base: Path, stems, required: bool, sep: str, prefix: str = ""):
    for stem in stems:
        for ext in _EXTS:
            p = base / f"{prefix}{sep}{stem}{ext}" if prefix else base / f"{stem}{ext}"
            if p.exists():
                return p
    if required:
        stem = stems[0]
        expected = base / (f"{prefix}{sep}{stem}.pfm" if prefix else f"{stem}.pfm")
        raise FileNotFoundError(f"missing {stem} file: expected {expected} (or .png)")
    return None


def _load_item(name, paths, gamma):
    img = read_image(paths["image"], gamma)
    mask = None
    if img.shape[2] in (2, 4):
        mask = (img[:, :, -1:] > 0).astype(np.float32)
        img = img[:, :, :-1]
    R = read_image(paths["reflectance"], gamma)[:, :, :3]
    S = read_image(paths["shading"], gamma)
    if S.shape[2] in (2, 4):
        S = S[:, :, :-1]
    if paths.get("mask") is not None:
        mk = read_image(paths["mask"])
        mask = (mk[:, :, :1] > 0).astype(np.float32)
    if img.shape[:2] != R.shape[:2] or img.shape[:2] != S.shape[:2]:
        raise DomainError(f"{name}: image, reflectance and shading sizes differ")
    return BenchmarkItem(name, img, IntrinsicSet(R, S), mask)


def load_benchmark(directory, gamma: float | None = None) -> list[BenchmarkItem]:
    """Load image / reflectance / shading triplets.

    Accepts a directory written by :func:`dataset_gen` (has ``manifest.json``),
    a directory of per-object subdirectories holding ``image|diffuse``,
    ``reflectance``, ``shading`` and optional ``mask`` files, or a flat
    directory of ``<name>_image``, ``<name>_reflectance``, ``<name>_shading``
    files. PNGs map linearly to [0, 1]; ``gamma`` undoes a gamma encoding.
    Zero-alpha or zero-mask pixels are excluded from metrics.
    """
    root = Path(directory)
    if (root / "manifest.json").exists():
        m = read_manifest(root)
        return [BenchmarkItem(e["id"], s.image, s.set) for e, s in zip(m.samples, load_samples(m))]
    items = []
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    if subdirs:
        for d in subdirs:
            paths = {"image": _find(d, _IMAGE_NAMES, True, ""),
                     "reflectance": _find(d, ("reflectance",), True, ""),
                     "shading": _find(d, ("shading",), True, ""),
                     "mask": _find(d, ("mask",), False, "")}
            items.append(_load_item(d.name, paths, gamma))
        return items
    names = sorted({p.name[:-len(f"_{stem}{p.suffix}")] for p in root.iterdir()
                    for stem in _IMAGE_NAMES if p.suffix in _EXTS and p.stem.endswith(f"_{stem}")})
    for name in names:
        paths = {"image": _find(root, _IMAGE_NAMES, True, "_", name),
                 "reflectance": _find(root, ("reflectance",), True, "_", name),
                 "shading": _find(root, ("shading",), True, "_", name),
                 "mask": _find(root, ("mask",), False, "_", name)}
        items.append(_load_item(name, paths, gamma))
    return items
