"""Procedural two-domain benchmark generator.

Scenes live on a 20 cm x 20 cm workspace imaged at 64x64 pixels. Each
scene contains a bright disc (the regression target) and a three-segment
dark polyline "arm" distractor whose pose varies independently of the
disc. The source domain renders crisp scenes on a flat gray background;
the target domain adds value-noise texture, blur, a per-image photometric
shift, and pixel noise. In head-motion mode the whole scene and the label
shift together by a per-image camera jitter.

All randomness is derived per record from (dataset seed, record index),
so generation order and batching never change the data.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from simreal.errors import ConfigError, FormatError, VersionError
from simreal.rng import make_rng, record_rng

GENERATOR_VERSION = 1

WORKSPACE_CM = 20.0
IMAGE_SIZE = 64
PX_PER_CM = IMAGE_SIZE / WORKSPACE_CM
DEFAULT_OBJECT_RADIUS_CM = 0.5
JITTER_MAX_CM = 2.0

DOMAINS = ("source", "target")
CAMERAS = ("static", "head_motion")

# rendering palette
_BG_GRAY = 0.5
_DISC_COLOR = np.array([0.95, 0.8, 0.25], dtype=np.float32)
_ARM_COLOR = np.array([0.15, 0.15, 0.18], dtype=np.float32)
_ARM_HALFWIDTH_CM = 0.25
_EDGE_CM = 0.5 / PX_PER_CM  # half-pixel anti-aliasing band

_ARM_BASE_CM = (10.0, 21.4)  # anchored just below the bottom edge
_ARM_SEGMENT_CM = (7.5, 6.0, 5.0)
_ARM_JOINT_RANGE_RAD = (0.95, 1.15, 1.15)

# target-domain nuisance magnitudes
_NOISE_OCTAVES = ((5.0, 0.055), (2.2, 0.035))  # (cell size cm, amplitude)
_BRIGHTNESS_SHIFT = 0.06
_CHANNEL_GAIN = 0.05
_PIXEL_NOISE_STD = 0.02
_BLUR_SIGMA_PX = 1.0

# pixel-center world coordinates, shared by every render
_COORD = (np.arange(IMAGE_SIZE, dtype=np.float64) + 0.5) / PX_PER_CM
_XX = np.broadcast_to(_COORD[None, :], (IMAGE_SIZE, IMAGE_SIZE))
_YY = np.broadcast_to(_COORD[:, None], (IMAGE_SIZE, IMAGE_SIZE))


@dataclass(frozen=True)
class SceneConfig:
    """Full ground-truth description of one scene."""

    object_position: tuple  # (x, y) cm
    object_radius: float
    arm_config: tuple  # three joint angles, radians
    jitter: tuple  # (dx, dy) cm camera offset; (0, 0) in static mode
    seed: int  # per-record seed for target-domain nuisance draws

    def validate(self) -> None:
        x, y = self.object_position
        r = self.object_radius
        if r <= 0:
            raise ConfigError(f"object radius must be positive, got {r}")
        if not (r <= x <= WORKSPACE_CM - r and r <= y <= WORKSPACE_CM - r):
            raise ConfigError(
                f"object position ({x:.2f},{y:.2f}) violates the {r:.2f} cm margin"
            )
        if max(abs(self.jitter[0]), abs(self.jitter[1])) > JITTER_MAX_CM:
            raise ConfigError(f"jitter {self.jitter} exceeds {JITTER_MAX_CM} cm")


def _coverage(dist: np.ndarray, radius: float) -> np.ndarray:
    """Anti-aliased coverage of a shape boundary at signed distance."""
    return np.clip((radius - dist) / (2 * _EDGE_CM) + 0.5, 0.0, 1.0)


def _arm_points(arm_config, jitter):
    bx, by = _ARM_BASE_CM[0] + jitter[0], _ARM_BASE_CM[1] + jitter[1]
    pts = [(bx, by)]
    heading = -np.pi / 2  # pointing up into the workspace
    for angle, length in zip(arm_config, _ARM_SEGMENT_CM):
        heading = heading + angle
        bx = bx + length * np.cos(heading)
        by = by + length * np.sin(heading)
        pts.append((bx, by))
    return pts


def _segment_distance(px, py, a, b):
    ax, ay = a
    bx, by = b
    vx, vy = bx - ax, by - ay
    denom = vx * vx + vy * vy
    t = np.clip(((px - ax) * vx + (py - ay) * vy) / denom, 0.0, 1.0)
    cx = ax + t * vx
    cy = ay + t * vy
    return np.hypot(px - cx, py - cy)


def _value_noise(rng: np.random.Generator, xx: np.ndarray, yy: np.ndarray) -> np.ndarray:
    total = np.zeros_like(xx)
    for cell, amp in _NOISE_OCTAVES:
        lo = -(JITTER_MAX_CM + 2 * cell)
        n = int(np.ceil((WORKSPACE_CM - 2 * lo) / cell)) + 2
        grid = rng.uniform(-1.0, 1.0, (n, n))
        u = (xx - lo) / cell
        v = (yy - lo) / cell
        j0 = np.floor(u).astype(np.intp)
        i0 = np.floor(v).astype(np.intp)
        fu = u - j0
        fv = v - i0
        fu = fu * fu * (3 - 2 * fu)
        fv = fv * fv * (3 - 2 * fv)
        val = (
            grid[i0, j0] * (1 - fu) * (1 - fv)
            + grid[i0, j0 + 1] * fu * (1 - fv)
            + grid[i0 + 1, j0] * (1 - fu) * fv
            + grid[i0 + 1, j0 + 1] * fu * fv
        )
        total += amp * val
    return total


def render_scene(config: SceneConfig, domain: str):
    """Render one scene; returns (image [3,64,64] in [0,1], label [2] in cm).

    The label is the disc position in the camera frame: the raw workspace
    position in static mode, shifted by the camera jitter in head-motion
    mode (where the jitter is nonzero).
    """
    if domain not in DOMAINS:
        raise ConfigError(f"unknown domain {domain!r}")
    config.validate()
    jx, jy = config.jitter
    ax = config.object_position[0] + jx
    ay = config.object_position[1] + jy

    if domain == "source":
        img = np.full((3, IMAGE_SIZE, IMAGE_SIZE), _BG_GRAY, dtype=np.float64)
        rng = None
    else:
        rng = make_rng(config.seed)
        noise = _value_noise(rng, _XX - jx, _YY - jy)
        img = np.repeat((_BG_GRAY + noise)[None], 3, axis=0)

    # arm below, disc on top so the regression target is never occluded
    pts = _arm_points(config.arm_config, config.jitter)
    dmin = np.full((IMAGE_SIZE, IMAGE_SIZE), np.inf)
    for a, b in zip(pts[:-1], pts[1:]):
        dmin = np.minimum(dmin, _segment_distance(_XX, _YY, a, b))
    alpha = _coverage(dmin, _ARM_HALFWIDTH_CM)
    img = img * (1 - alpha) + _ARM_COLOR[:, None, None] * alpha

    disc = _coverage(np.hypot(_XX - ax, _YY - ay), config.object_radius)
    img = img * (1 - disc) + _DISC_COLOR[:, None, None] * disc

    if domain == "target":
        img = gaussian_filter(img, sigma=(0, _BLUR_SIGMA_PX, _BLUR_SIGMA_PX), mode="nearest")
        img = img + rng.uniform(-_BRIGHTNESS_SHIFT, _BRIGHTNESS_SHIFT)
        img = img * (1 + rng.uniform(-_CHANNEL_GAIN, _CHANNEL_GAIN, 3))[:, None, None]
        img = img + rng.normal(0.0, _PIXEL_NOISE_STD, img.shape)

    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    label = np.array([ax, ay], dtype=np.float32)
    return img, label


@dataclass
class Dataset:
    """Domain-tagged image collection with labels and generator ground truth."""

    domain: str
    images: np.ndarray  # [N,3,64,64] float32 in [0,1]
    labels: np.ndarray  # [N,2] cm (camera frame)
    arm_configs: np.ndarray  # [N,3]
    jitters: np.ndarray  # [N,2]
    seed: int
    camera: str = "static"
    generator_version: int = GENERATOR_VERSION
    paired_with: Optional[str] = None
    object_radius: float = DEFAULT_OBJECT_RADIUS_CM

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def dataset_id(self) -> str:
        return f"{self.domain}:{self.seed}:{self.camera}:{len(self)}"

    @property
    def object_positions(self) -> np.ndarray:
        """Raw workspace positions (labels minus camera jitter)."""
        return self.labels - self.jitters


def generate_dataset(
    n: int,
    domain: str,
    seed: int,
    camera: str = "static",
    paired_with: Optional[Dataset] = None,
    object_radius: float = DEFAULT_OBJECT_RADIUS_CM,
) -> Dataset:
    """Sample and render a dataset.

    Object positions are i.i.d. uniform over the workspace (inset by the
    disc radius, plus the jitter bound in head-motion mode so labels stay
    inside the workspace). In paired mode the disc position and arm config
    of every record are copied from the partner dataset, while target-
    domain nuisance draws (and head-motion jitter) stay independent.
    """
    if domain not in DOMAINS:
        raise ConfigError(f"unknown domain {domain!r}")
    if camera not in CAMERAS:
        raise ConfigError(f"unknown camera mode {camera!r}")
    if paired_with is not None:
        if n != len(paired_with):
            raise ConfigError(
                f"paired generation needs n == {len(paired_with)}, got {n}"
            )
        if paired_with.camera != camera:
            raise ConfigError("paired datasets must share the camera mode")
        object_radius = paired_with.object_radius
    if n < 1:
        raise ConfigError(f"need n >= 1, got {n}")

    margin = object_radius + (JITTER_MAX_CM if camera == "head_motion" else 0.0)
    lo, hi = margin, WORKSPACE_CM - margin

    images = np.empty((n, 3, IMAGE_SIZE, IMAGE_SIZE), dtype=np.float32)
    labels = np.empty((n, 2), dtype=np.float32)
    arms = np.empty((n, 3), dtype=np.float32)
    jits = np.zeros((n, 2), dtype=np.float32)

    for i in range(n):
        rec = record_rng(seed, i)
        if paired_with is None:
            pos = rec.uniform(lo, hi, 2)
            arm = np.array(
                [rec.uniform(-r, r) for r in _ARM_JOINT_RANGE_RAD], dtype=np.float64
            )
        else:
            pos = paired_with.object_positions[i].astype(np.float64)
            arm = paired_with.arm_configs[i].astype(np.float64)
        jit = (
            rec.uniform(-JITTER_MAX_CM, JITTER_MAX_CM, 2)
            if camera == "head_motion"
            else np.zeros(2)
        )
        render_seed = int(rec.integers(2**62))
        cfg = SceneConfig(
            object_position=(float(pos[0]), float(pos[1])),
            object_radius=object_radius,
            arm_config=tuple(float(a) for a in arm),
            jitter=(float(jit[0]), float(jit[1])),
            seed=render_seed,
        )
        images[i], labels[i] = render_scene(cfg, domain)
        arms[i] = arm
        jits[i] = jit

    return Dataset(
        domain=domain,
        images=images,
        labels=labels,
        arm_configs=arms,
        jitters=jits,
        seed=seed,
        camera=camera,
        paired_with=paired_with.dataset_id if paired_with is not None else None,
        object_radius=object_radius,
    )


def concat_datasets(a: Dataset, b: Dataset) -> Dataset:
    """Concatenate two same-domain datasets (no pairing link survives)."""
    if a.domain != b.domain or a.camera != b.camera:
        raise ConfigError("can only concatenate datasets with equal domain and camera")
    return Dataset(
        domain=a.domain,
        images=np.concatenate([a.images, b.images]),
        labels=np.concatenate([a.labels, b.labels]),
        arm_configs=np.concatenate([a.arm_configs, b.arm_configs]),
        jitters=np.concatenate([a.jitters, b.jitters]),
        seed=a.seed,
        camera=a.camera,
        paired_with=None,
        object_radius=a.object_radius,
    )


# --------------------------------------------------------------------------
# dataset directory format: manifest.json + data.bin


def save_dataset(ds: Dataset, path: str) -> None:
    os.makedirs(path, exist_ok=True)
    manifest = {
        "domain": ds.domain,
        "n": len(ds),
        "image_shape": list(ds.images.shape[1:]),
        "label_dim": int(ds.labels.shape[1]),
        "seed": ds.seed,
        "camera": ds.camera,
        "generator_version": ds.generator_version,
        "paired_with": ds.paired_with,
        "object_radius": ds.object_radius,
    }
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(path, "data.bin"), "wb") as fh:
        for arr in (ds.images, ds.labels, ds.jitters, ds.arm_configs):
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_dataset(path: str) -> Dataset:
    """Read a dataset directory; validates sizes before touching tensors."""
    mpath = os.path.join(path, "manifest.json")
    try:
        with open(mpath) as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"{path}: missing manifest.json") from None
    except ValueError as exc:
        raise FormatError(f"{mpath}: invalid JSON: {exc}") from exc

    try:
        n = int(manifest["n"])
        shape = tuple(int(v) for v in manifest["image_shape"])
        label_dim = int(manifest["label_dim"])
        version = int(manifest["generator_version"])
        domain = manifest["domain"]
        camera = manifest["camera"]
        seed = int(manifest["seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{mpath}: missing or malformed field: {exc}") from exc
    if version != GENERATOR_VERSION:
        raise VersionError(f"{path}: unknown generator_version {version}")
    if domain not in DOMAINS:
        raise FormatError(f"{path}: unknown domain {domain!r}")
    if n < 1:
        raise FormatError(f"{path}: manifest declares n={n}")

    img_count = n * int(np.prod(shape))
    expected = 4 * (img_count + n * label_dim + n * 2 + n * 3)
    bpath = os.path.join(path, "data.bin")
    try:
        actual = os.path.getsize(bpath)
    except OSError:
        raise FormatError(f"{path}: missing data.bin") from None
    if actual != expected:
        raise FormatError(
            f"{path}: data.bin holds {actual} bytes but manifest promises {expected}"
        )

    raw = np.fromfile(bpath, dtype="<f4")
    off = 0

    def take(count, shp):
        nonlocal off
        out = raw[off : off + count].reshape(shp).astype(np.float32)
        off += count
        return out

    images = take(img_count, (n,) + shape)
    labels = take(n * label_dim, (n, label_dim))
    jitters = take(n * 2, (n, 2))
    arms = take(n * 3, (n, 3))
    return Dataset(
        domain=domain,
        images=images,
        labels=labels,
        arm_configs=arms,
        jitters=jitters,
        seed=seed,
        camera=camera,
        generator_version=version,
        paired_with=manifest.get("paired_with"),
        object_radius=float(manifest.get("object_radius", DEFAULT_OBJECT_RADIUS_CM)),
    )
