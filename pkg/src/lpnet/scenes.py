"""Synthetic scene rendering for desk-scale experiments.

Orthographic scenes: a slanted ground plane plus boxes (constant-depth front
faces) and spheres, composed by nearest-surface wins. The color image is a
per-primitive albedo shaded by the depth-gradient normal under a fixed light,
which gives the image encoder real boundary and slope cues. Sparse depth is
a seeded uniform sample of ground-truth pixels.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .rng import stream
from .sparse import SparseDepth
from .tensor import Tensor

_LIGHT = np.array([0.4, -0.3, 0.85])
_LIGHT = _LIGHT / np.linalg.norm(_LIGHT)


@dataclass
class SceneSpec:
    seed: int
    height: int
    width: int
    primitives: list
    depth_min: float
    depth_max: float
    sparse_count: int

    @classmethod
    def random(cls, seed, height, width, depth_min=2.0, depth_max=8.0,
               sparse_count=200, n_objects=4):
        """Draw a plane plus n_objects boxes/spheres from the seed."""
        rng = stream(seed, "scene-spec")
        span = depth_max - depth_min
        z0 = rng.uniform(depth_min + 0.35 * span, depth_max - 0.35 * span)
        tilt = 0.3 * span
        gx = rng.uniform(-tilt, tilt) / max(width, 1)
        gy = rng.uniform(-tilt, tilt) / max(height, 1)
        prims = [{"kind": "plane", "z0": z0, "gx": gx, "gy": gy}]
        for _ in range(n_objects):
            cy = rng.uniform(0.15 * height, 0.85 * height)
            cx = rng.uniform(0.15 * width, 0.85 * width)
            if rng.random() < 0.5:
                prims.append({
                    "kind": "box", "cy": cy, "cx": cx,
                    "half_h": rng.uniform(0.06, 0.2) * height,
                    "half_w": rng.uniform(0.06, 0.2) * width,
                    "z": rng.uniform(depth_min + 0.05 * span, z0 - 0.1 * span),
                })
            else:
                radius_m = rng.uniform(0.08, 0.3) * span
                prims.append({
                    "kind": "sphere", "cy": cy, "cx": cx,
                    "radius_px": rng.uniform(0.08, 0.22) * min(height, width),
                    "z_center": rng.uniform(depth_min + radius_m + 0.05 * span, z0),
                    "radius_m": radius_m,
                })
        return cls(seed=seed, height=height, width=width, primitives=prims,
                   depth_min=depth_min, depth_max=depth_max, sparse_count=sparse_count)


def _render_depth(spec):
    if not spec.primitives:
        raise ConfigError("scene has no primitives")
    h, w = spec.height, spec.width
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    depth = None
    owner = None
    for idx, prim in enumerate(spec.primitives):
        kind = prim["kind"]
        if kind == "plane":
            surf = prim["z0"] + prim["gx"] * (xs - w / 2.0) + prim["gy"] * (ys - h / 2.0)
            inside = np.ones((h, w), dtype=bool)
        elif kind == "box":
            surf = np.full((h, w), prim["z"])
            inside = ((np.abs(ys - prim["cy"]) <= prim["half_h"])
                      & (np.abs(xs - prim["cx"]) <= prim["half_w"]))
        elif kind == "sphere":
            r2 = ((ys - prim["cy"]) ** 2 + (xs - prim["cx"]) ** 2) / prim["radius_px"] ** 2
            inside = r2 <= 1.0
            surf = prim["z_center"] - prim["radius_m"] * np.sqrt(np.maximum(1.0 - r2, 0.0))
        else:
            raise ConfigError(f"unknown primitive kind {kind!r}")
        if depth is None:
            depth = np.where(inside, surf, np.inf)
            owner = np.where(inside, idx, -1)
        else:
            closer = inside & (surf < depth)
            depth = np.where(closer, surf, depth)
            owner = np.where(closer, idx, owner)
    if not np.all(np.isfinite(depth)) or np.any(depth <= 0):
        raise ConfigError("scene depth must be positive and finite everywhere")
    return depth, owner


def _shade(depth):
    gy, gx = np.gradient(depth)
    normal = np.stack([-gx, -gy, np.ones_like(depth)], axis=-1)
    normal /= np.linalg.norm(normal, axis=-1, keepdims=True)
    return np.clip(normal @ _LIGHT, 0.15, 1.0)


def generate_scene(spec):
    """Render (image (3,H,W), depth (H,W), SparseDepth) deterministically."""
    depth, owner = _render_depth(spec)
    albedo_rng = stream(spec.seed, "scene-albedo")
    albedos = albedo_rng.uniform(0.2, 0.95, size=(len(spec.primitives), 3))
    shade = _shade(depth)
    image = albedos[owner].transpose(2, 0, 1) * shade[None]

    sample_rng = stream(spec.seed, "scene-sparse")
    count = min(spec.sparse_count, depth.size)
    chosen = sample_rng.choice(depth.size, size=count, replace=False)
    sparse_depth = np.zeros((1, 1, spec.height, spec.width))
    sparse_mask = np.zeros_like(sparse_depth)
    sparse_depth[0, 0].ravel()[chosen] = depth.ravel()[chosen]
    sparse_mask[0, 0].ravel()[chosen] = 1.0
    sparse = SparseDepth(Tensor(sparse_depth), Tensor(sparse_mask))
    return image, depth, sparse


def make_scene_set(root_seed, purpose, count, height, width, **kwargs):
    """A list of rendered scenes with seeds derived from (root_seed, purpose)."""
    scenes = []
    for i in range(count):
        seed = int(stream(root_seed, f"{purpose}-{i}").integers(0, 2 ** 62))
        spec = SceneSpec.random(seed, height, width, **kwargs)
        scenes.append(generate_scene(spec))
    return scenes
