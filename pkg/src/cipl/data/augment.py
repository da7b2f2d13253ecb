"""Two-step, two-view augmentation.

Step 1 (geometry: scale, shear, rotation, translation, flip) is drawn once and
shared by both views. Step 2 (colour jitter, then a 95-100% crop resized back)
is drawn independently per view, so the views differ only by step-2 parameters.
"""

from dataclasses import asdict, dataclass

import numpy as np

from ..numerics import kernels


@dataclass
class AugmentConfig:
    scale: tuple = (0.9, 1.1)
    shear_deg: float = 5.0
    rotation_deg: float = 10.0
    translate: float = 0.05
    flip_p: float = 0.5
    brightness: float = 0.2
    contrast: float = 0.2
    sharpness: float = 0.2
    hue: float = 0.05
    crop_area: tuple = (0.95, 1.0)
    crop_ratio: tuple = (0.95, 1.05)

    @classmethod
    def identity(cls):
        return cls(scale=(1.0, 1.0), shear_deg=0.0, rotation_deg=0.0, translate=0.0, flip_p=0.0,
                   brightness=0.0, contrast=0.0, sharpness=0.0, hue=0.0,
                   crop_area=(1.0, 1.0), crop_ratio=(1.0, 1.0))


@dataclass
class GeometryParams:
    scale: float = 1.0
    shear: float = 0.0     # radians
    rotation: float = 0.0  # radians
    tx: float = 0.0        # pixels
    ty: float = 0.0
    flip: bool = False

    def forward_matrix(self, h, w):
        """2x3 map from input pixel (x, y) to output pixel, about the image centre."""
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        rot = np.array([[c, -s], [s, c]])
        shear = np.array([[1.0, np.tan(self.shear)], [0.0, 1.0]])
        flip = np.diag([-1.0 if self.flip else 1.0, 1.0])
        a = rot @ shear @ (self.scale * np.eye(2)) @ flip
        ctr = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
        t = ctr + np.array([self.tx, self.ty]) - a @ ctr
        return np.hstack([a, t[:, None]])


@dataclass
class ViewParams:
    brightness: float = 1.0
    contrast: float = 1.0
    sharpness: float = 1.0
    hue: float = 0.0
    crop: tuple = None  # (x0, y0, width, height) in pixels; None = full frame


def _invert(m):
    a = np.linalg.inv(m[:, :2])
    return np.hstack([a, (-a @ m[:, 2])[:, None]])


def sample_geometry(rng, cfg, h, w):
    return GeometryParams(
        scale=float(rng.uniform(*cfg.scale)),
        shear=float(np.deg2rad(rng.uniform(-cfg.shear_deg, cfg.shear_deg))),
        rotation=float(np.deg2rad(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg))),
        tx=float(rng.uniform(-cfg.translate, cfg.translate) * w),
        ty=float(rng.uniform(-cfg.translate, cfg.translate) * h),
        flip=bool(rng.random() < cfg.flip_p),
    )


def sample_view(rng, cfg, h, w):
    area = rng.uniform(*cfg.crop_area)
    ratio = rng.uniform(*cfg.crop_ratio)
    cw = min(float(w), w * np.sqrt(area * ratio))
    ch = min(float(h), h * np.sqrt(area / ratio))
    x0 = float(rng.uniform(0.0, w - cw))
    y0 = float(rng.uniform(0.0, h - ch))
    return ViewParams(
        brightness=float(rng.uniform(1 - cfg.brightness, 1 + cfg.brightness)),
        contrast=float(rng.uniform(1 - cfg.contrast, 1 + cfg.contrast)),
        sharpness=float(rng.uniform(1 - cfg.sharpness, 1 + cfg.sharpness)),
        hue=float(rng.uniform(-cfg.hue, cfg.hue)),
        crop=(x0, y0, cw, ch),
    )


def apply_geometry(img, g):
    h, w, _ = img.shape
    return kernels.warp_affine(np.ascontiguousarray(img), _invert(g.forward_matrix(h, w)), h, w)


def transform_boxes(boxes, g, h, w):
    """Axis-aligned hull of each box after the step-1 map, clipped to the frame."""
    m = g.forward_matrix(h, w)
    out = []
    for cls, x, y, bw, bh in boxes:
        xs = np.array([x - 0.5, x + bw - 0.5, x - 0.5, x + bw - 0.5])
        ys = np.array([y - 0.5, y - 0.5, y + bh - 0.5, y + bh - 0.5])
        px = m[0, 0] * xs + m[0, 1] * ys + m[0, 2]
        py = m[1, 0] * xs + m[1, 1] * ys + m[1, 2]
        x0 = int(np.clip(np.rint(px.min() + 0.5), 0, w))
        x1 = int(np.clip(np.rint(px.max() + 0.5), 0, w))
        y0 = int(np.clip(np.rint(py.min() + 0.5), 0, h))
        y1 = int(np.clip(np.rint(py.max() + 0.5), 0, h))
        out.append((cls, x0, y0, x1 - x0, y1 - y0))
    return out


def _blur3(img):
    # 3x3 smoothing kernel [[1,1,1],[1,5,1],[1,1,1]] / 13 with edge replication
    p = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode="edge")
    h, w = img.shape[:2]
    acc = 4.0 * img
    for dy in range(3):
        for dx in range(3):
            acc = acc + p[dy:dy + h, dx:dx + w]
    return acc / 13.0


_YIQ = np.array([[0.299, 0.587, 0.114], [0.596, -0.274, -0.322], [0.211, -0.523, 0.312]])


def _hue_shift(img, frac):
    if img.shape[2] != 3 or frac == 0.0:
        return img
    t = 2 * np.pi * frac
    rot = np.array([[1, 0, 0], [0, np.cos(t), -np.sin(t)], [0, np.sin(t), np.cos(t)]])
    m = np.linalg.inv(_YIQ) @ rot @ _YIQ
    return img @ m.T


def apply_view(img, v):
    """Colour jitter (brightness, contrast, sharpness, hue) then crop-and-resize."""
    out = img.astype(np.float64)
    if v.brightness != 1.0:
        out = out * v.brightness
    if v.contrast != 1.0:
        mu = out.mean()
        out = mu + v.contrast * (out - mu)
    if v.sharpness != 1.0:
        blur = _blur3(out)
        out = blur + v.sharpness * (out - blur)
    out = np.clip(_hue_shift(out, v.hue), 0.0, 1.0)
    h, w, _ = img.shape
    if v.crop is not None:
        x0, y0, cw, ch = v.crop
        if (x0, y0, cw, ch) != (0.0, 0.0, float(w), float(h)):
            sx, sy = cw / w, ch / h
            m = np.array([[sx, 0.0, x0 + 0.5 * sx - 0.5], [0.0, sy, y0 + 0.5 * sy - 0.5]])
            out = kernels.warp_affine(np.ascontiguousarray(out), m, h, w)
    return out.astype(img.dtype)


def two_view_augment(img, rng, cfg=None):
    """Return ``(view_b, view_b_prime, record)`` for one [H,W,ch] float image."""
    cfg = cfg or AugmentConfig()
    h, w, _ = img.shape
    g = sample_geometry(rng, cfg, h, w)
    v1 = sample_view(rng, cfg, h, w)
    v2 = sample_view(rng, cfg, h, w)
    base = apply_geometry(img, g)
    record = {"geometry": asdict(g), "views": [asdict(v1), asdict(v2)]}
    return apply_view(base, v1), apply_view(base, v2), record


def single_view_augment(img, rng, cfg=None):
    cfg = cfg or AugmentConfig()
    h, w, _ = img.shape
    g = sample_geometry(rng, cfg, h, w)
    v = sample_view(rng, cfg, h, w)
    return apply_view(apply_geometry(img, g), v)
