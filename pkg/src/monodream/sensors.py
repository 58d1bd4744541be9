"""Column raycaster for monocular views and panoramic RGB / pseudo-RGB depth.

Every column casts one ray at a uniformly spaced angle, so a 90 degree face
with 64 columns samples exactly the same angles as a quarter of a 256-column
360 degree strip.
"""
from __future__ import annotations

import math
import threading
from collections import Counter, OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from monodream import kernels
from monodream.world import PALETTE, FloorPlan, Pose

FACE_NAMES = ("left", "front", "right", "back")
FACE_OFFSETS_DEG = (90.0, 0.0, -90.0, 180.0)
EQUIRECT_WIDTH = 256
CEILING_RGB = (0.82, 0.82, 0.78)
FLOOR_RGB = (0.30, 0.27, 0.25)
COLORMAP_VERSION = "bgr-ramp-v1"

clamp_warnings: Counter = Counter()


@dataclass(frozen=True)
class SensorConfig:
    fov_deg: float = 90.0
    image_size: int = 64
    d_max: float = 10.0
    colormap: str = COLORMAP_VERSION

    def __post_init__(self):
        if self.d_max <= 0:
            raise ValueError("d_max must be positive")
        if abs(360.0 / self.fov_deg - round(360.0 / self.fov_deg)) > 1e-12:
            raise ValueError(f"fov {self.fov_deg} does not divide 360")
        if self.colormap != COLORMAP_VERSION:
            raise ValueError(f"unknown colormap {self.colormap!r}")


DEFAULT_SENSOR = SensorConfig()


@dataclass(frozen=True)
class PanoramaSet:
    faces: tuple[np.ndarray, ...]  # (left, front, right, back)
    kind: str  # "rgb" or "depth"

    def __post_init__(self):
        if len(self.faces) != 4:
            raise ValueError(f"panorama needs 4 faces, got {len(self.faces)}")
        if self.kind not in ("rgb", "depth"):
            raise ValueError(f"unknown panorama kind {self.kind!r}")


def _build_colormap() -> np.ndarray:
    t = np.arange(256) / 255.0
    lo = t <= 0.5
    r = np.where(lo, 0.0, 2 * t - 1)
    g = np.where(lo, 2 * t, 2 - 2 * t)
    b = np.where(lo, 1 - 2 * t, 0.0)
    table = np.round(np.stack([r, g, b], axis=1) * 255) / 255
    table.setflags(write=False)
    return table


COLORMAP = _build_colormap()


def quantize(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def column_offsets(fov_deg: float, size: int) -> np.ndarray:
    """Ray angle offsets (degrees, left positive) of each image column."""
    step = fov_deg / size
    return (size / 2 - np.arange(size) - 0.5) * step


def cast(plan: FloorPlan, x: float, y: float, angles_deg: np.ndarray, d_max: float):
    """Distances and wall indices for rays at absolute angles in degrees."""
    rad = np.radians(np.asarray(angles_deg, dtype=np.float64))
    return kernels.cast_rays(float(x), float(y), np.ascontiguousarray(rad), plan.wall_array, float(d_max))


def _wall_colors(plan: FloorPlan, x: float, y: float, idx: np.ndarray) -> np.ndarray:
    colors = np.empty((len(idx), 3))
    for k, w in enumerate(idx.tolist()):
        if w < 0:
            colors[k] = CEILING_RGB
            continue
        wall = plan.walls[w]
        side = (wall.x1 - wall.x0) * (y - wall.y0) - (wall.y1 - wall.y0) * (x - wall.x0)
        colors[k] = PALETTE[wall.left_color if side > 0 else wall.right_color][1]
    return colors


def _compose(plan, x, y, angles_deg, height, d_max):
    dist, idx = cast(plan, x, y, angles_deg, d_max)
    width = len(angles_deg)
    cols = _wall_colors(plan, x, y, idx)
    shade = 1.0 / (1.0 + dist)
    slab = np.minimum(height, height / np.maximum(dist, 1e-12) * plan.cell_size)
    slab = np.where(idx >= 0, slab, 0.0)
    rows = np.arange(height) + 0.5 - height / 2.0
    wall_mask = np.abs(rows)[:, None] < slab[None, :] / 2.0
    img = np.empty((height, width, 3))
    img[:] = np.where(rows[:, None, None] < 0, np.array(CEILING_RGB), np.array(FLOOR_RGB))
    wall_rgb = cols * shade[:, None]
    img = np.where(wall_mask[:, :, None], wall_rgb[None, :, :], img)
    depth = np.where(wall_mask, dist[None, :], d_max)
    return quantize(img), depth


def render_view(plan: FloorPlan, pose: Pose, fov: float | None = None, size: int | None = None,
                config: SensorConfig = DEFAULT_SENSOR):
    """Monocular view: (rgb image HxWx3 in [0,1], per-pixel depth in metres)."""
    fov = config.fov_deg if fov is None else fov
    size = config.image_size if size is None else size
    angles = pose.heading + column_offsets(fov, size)
    return _compose(plan, pose.x, pose.y, angles, size, config.d_max)


# --- depth encodings -------------------------------------------------------


def _clamp(d, d_max):
    arr = np.asarray(d, dtype=np.float64)
    bad = int(np.count_nonzero((arr < 0) | (arr > d_max)))
    if bad:
        clamp_warnings["depth"] += bad
    return np.clip(arr, 0.0, d_max)


def _out(v, d):
    return float(v) if np.ndim(d) == 0 else v


def encode_log_depth(d, d_max: float):
    c = _clamp(d, d_max)
    return _out(np.log1p(c) / math.log1p(d_max), d)


def encode_linear_depth(d, d_max: float):
    c = _clamp(d, d_max)
    return _out(c / d_max, d)


def encode_inverse_depth(d, d_max: float):
    c = _clamp(d, d_max)
    far = 1.0 / (1.0 + d_max)
    return _out((1.0 / (1.0 + c) - 1.0) / (far - 1.0), d)


DEPTH_ENCODINGS = {
    "log": encode_log_depth,
    "linear": encode_linear_depth,
    "inverse": encode_inverse_depth,
}


def colormap_apply(v, table: np.ndarray = COLORMAP) -> np.ndarray:
    """Linear interpolation into the 256-entry ramp. Returns (..., 3)."""
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, 1.0)
    pos = v * (len(table) - 1)
    i0 = np.minimum(np.floor(pos).astype(np.int64), len(table) - 2)
    frac = (pos - i0)[..., None]
    return table[i0] * (1.0 - frac) + table[i0 + 1] * frac


def colormap_invert(rgb, table: np.ndarray = COLORMAP) -> np.ndarray:
    """Nearest-entry inverse of ``colormap_apply``."""
    rgb = np.asarray(rgb, dtype=np.float64)
    d = ((rgb[..., None, :] - table) ** 2).sum(axis=-1)
    return np.argmin(d, axis=-1) / (len(table) - 1)


def depth_to_pseudo_rgb(depth: np.ndarray, d_max: float, encoding: str = "log") -> np.ndarray:
    return quantize(colormap_apply(DEPTH_ENCODINGS[encoding](depth, d_max)))


# --- panoramas -------------------------------------------------------------


def render_panorama(plan: FloorPlan, pose: Pose, kind: str = "rgb", config: SensorConfig = DEFAULT_SENSOR,
                    encoding: str = "log") -> PanoramaSet:
    faces = []
    offsets = column_offsets(config.fov_deg, config.image_size)
    for face_off in FACE_OFFSETS_DEG:
        angles = (pose.heading + face_off) + offsets
        rgb, depth = _compose(plan, pose.x, pose.y, angles, config.image_size, config.d_max)
        faces.append(rgb if kind == "rgb" else depth_to_pseudo_rgb(depth, config.d_max, encoding))
    return PanoramaSet(tuple(faces), kind)


def equirect_angles(pose: Pose, width: int = EQUIRECT_WIDTH) -> np.ndarray:
    return (pose.heading + 0.0) + column_offsets(360.0, width)


def render_equirect(plan: FloorPlan, pose: Pose, config: SensorConfig = DEFAULT_SENSOR,
                    width: int = EQUIRECT_WIDTH):
    """360 degree strip: (rgb height x width x 3, depth height x width)."""
    return _compose(plan, pose.x, pose.y, equirect_angles(pose, width), config.image_size, config.d_max)


def render_equirect_panorama(plan: FloorPlan, pose: Pose, kind: str = "rgb",
                             config: SensorConfig = DEFAULT_SENSOR, encoding: str = "log") -> np.ndarray:
    rgb, depth = render_equirect(plan, pose, config)
    return rgb if kind == "rgb" else depth_to_pseudo_rgb(depth, config.d_max, encoding)


def squash_equirect(strip: np.ndarray, size: int) -> np.ndarray:
    """Average adjacent columns so a 360 degree strip fits one square image."""
    h, w, c = strip.shape
    return quantize(strip.reshape(h, size, w // size, c).mean(axis=2))


# --- binary PPM --------------------------------------------------------------


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(path, img: np.ndarray) -> None:
    data = to_uint8(img)
    h, w, _ = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError("only 8-bit PPM is supported")
    data = np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8).reshape(h, w, 3)
    return data.astype(np.float64) / 255.0


def write_panorama(directory, stem: str, pano: PanoramaSet) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for face, img in zip(FACE_NAMES, pano.faces):
        name = f"{stem}_{pano.kind}_{face}.ppm"
        write_ppm(directory / name, img)
        names.append(name)
    manifest = directory / f"{stem}_{pano.kind}.manifest"
    manifest.write_text(f"panorama kind={pano.kind} faces={','.join(names)}\n")
    return manifest


# --- content-addressed render cache -----------------------------------------


class RenderCache:
    """LRU cache of rendered views keyed by (plan, pose, view).

    Views are stored as uint8 (renders are already quantized to 1/255, so this
    is lossless). Reads may run concurrently; inserts take the lock.
    """

    def __init__(self, config: SensorConfig = DEFAULT_SENSOR, maxsize: int = 60000,
                 depth_encoding: str = "log", pano_format: str = "cubemap"):
        self.config = config
        self.maxsize = maxsize
        self.depth_encoding = depth_encoding
        self.pano_format = pano_format
        self.plans: dict[int, FloorPlan] = {}
        self._store: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def register(self, plan: FloorPlan) -> int:
        self.plans[plan.seed] = plan
        return plan.seed

    @staticmethod
    def pose_key(pose: Pose) -> tuple:
        return (float(pose.x).hex(), float(pose.y).hex(), pose.heading_q)

    def _render(self, plan_seed: int, pose: Pose, view: str) -> np.ndarray:
        plan = self.plans[plan_seed]
        if view == "obs":
            return render_view(plan, pose, config=self.config)[0][None]
        kind = "rgb" if view == "pano_rgb" else "depth"
        if self.pano_format == "equirect":
            strip = render_equirect_panorama(plan, pose, kind, self.config, self.depth_encoding)
            return np.repeat(squash_equirect(strip, self.config.image_size)[None], 4, axis=0)
        return np.stack(render_panorama(plan, pose, kind, self.config, self.depth_encoding).faces)

    def get(self, plan_seed: int, pose: Pose, view: str = "obs") -> np.ndarray:
        """Float images: (1, H, W, 3) for "obs", (4, H, W, 3) for panoramas."""
        key = (plan_seed, self.pose_key(pose), view)
        data = self._store.get(key)
        if data is None:
            self.misses += 1
            data = to_uint8(self._render(plan_seed, pose, view))
            with self._lock:
                self._store[key] = data
                while len(self._store) > self.maxsize:
                    self._store.popitem(last=False)
        else:
            self.hits += 1
            with self._lock:
                if key in self._store:
                    self._store.move_to_end(key)
        return data.astype(np.float64) / 255.0
