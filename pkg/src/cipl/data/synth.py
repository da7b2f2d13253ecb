"""Synthetic multi-label glyph images with ground-truth boxes."""

from dataclasses import asdict, dataclass, field

import numpy as np

GLYPH_KINDS = ("disc", "cross", "ring", "stripes")


class GenerationError(RuntimeError):
    pass


@dataclass
class GlyphSpec:
    class_id: int
    kind: str
    intensity: tuple = (0.7, 0.95)
    size: tuple = (12, 18)

    def __post_init__(self):
        if self.kind not in GLYPH_KINDS:
            raise ValueError(f"unknown glyph kind {self.kind!r}")
        self.intensity = tuple(float(v) for v in self.intensity)
        self.size = tuple(int(v) for v in self.size)


def default_glyphs(n_classes, size=(12, 18)):
    if n_classes > len(GLYPH_KINDS):
        raise ValueError(f"at most {len(GLYPH_KINDS)} distinct glyph kinds are available")
    return [GlyphSpec(c, GLYPH_KINDS[c], size=tuple(size)) for c in range(n_classes)]


@dataclass
class Sample:
    image: np.ndarray   # [H,W,ch] uint8
    labels: np.ndarray  # [C] uint8
    boxes: list         # (class, x, y, w, h) in pixels; x is the column


@dataclass
class Dataset:
    images: np.ndarray  # [n,H,W,ch] uint8
    labels: np.ndarray  # [n,C] uint8
    boxes: list         # per sample: list of (class, x, y, w, h)
    ids: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ids is None:
            self.ids = np.arange(len(self.images))

    def __len__(self):
        return len(self.images)

    @property
    def n_classes(self):
        return self.labels.shape[1]

    def float_images(self, idx=None):
        imgs = self.images if idx is None else self.images[idx]
        return imgs.astype(np.float32) / np.float32(255.0)


def _glyph_mask(kind, s, rng):
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64) + 0.5
    c = s / 2.0
    r = np.hypot(yy - c, xx - c)
    if kind == "disc":
        return r <= c
    if kind == "ring":
        t = max(2.0, s / 5.0)
        return (r <= c) & (r >= c - t)
    if kind == "cross":
        t = max(2.0, s / 4.0)
        return (np.abs(yy - c) <= t / 2) | (np.abs(xx - c) <= t / 2)
    # stripes: square patch, 2px bars with period 4, random orientation
    bars = (yy if rng.random() < 0.5 else xx).astype(int) % 4 < 2
    return bars


def _background(h, w, ch, rng):
    coarse = rng.random((h // 8 + 2, w // 8 + 2))
    ys = np.linspace(0, coarse.shape[0] - 1.001, h)
    xs = np.linspace(0, coarse.shape[1] - 1.001, w)
    y0, x0 = ys.astype(int), xs.astype(int)
    fy, fx = (ys - y0)[:, None], (xs - x0)[None, :]
    c00 = coarse[y0][:, x0]
    c01 = coarse[y0][:, x0 + 1]
    c10 = coarse[y0 + 1][:, x0]
    c11 = coarse[y0 + 1][:, x0 + 1]
    smooth = (c00 * (1 - fx) + c01 * fx) * (1 - fy) + (c10 * (1 - fx) + c11 * fx) * fy
    base = 0.15 + 0.3 * smooth
    return np.repeat(base[..., None], ch, axis=2) + rng.normal(0.0, 0.03, (h, w, ch))


def _overlaps(box, placed, margin=2):
    x, y, w, h = box
    for px, py, pw, ph in placed:
        if x < px + pw + margin and px < x + w + margin and y < py + ph + margin and py < y + h + margin:
            return True
    return False


def render_sample(labels, glyphs, size, channels, rng, retries=100):
    """Draw one glyph per positive class at non-overlapping random locations."""
    img = _background(size, size, channels, rng)
    boxes, placed = [], []
    for c in np.flatnonzero(labels):
        g = glyphs[c]
        for _ in range(retries):
            s = int(rng.integers(g.size[0], g.size[1] + 1))
            x = int(rng.integers(0, size - s + 1))
            y = int(rng.integers(0, size - s + 1))
            if not _overlaps((x, y, s, s), placed):
                break
        else:
            raise GenerationError(f"could not place glyph for class {c} after {retries} retries")
        mask = _glyph_mask(g.kind, s, rng)
        level = rng.uniform(*g.intensity)
        tint = np.ones(channels) if channels == 1 else rng.uniform(0.85, 1.0, channels)
        region = img[y:y + s, x:x + s]
        region[mask] = level * tint + rng.normal(0.0, 0.03, (int(mask.sum()), channels))
        ys, xs = np.nonzero(mask)
        bx, by = x + xs.min(), y + ys.min()
        boxes.append((int(c), int(bx), int(by), int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1)))
        placed.append((x, y, s, s))
    img = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    return Sample(img, np.asarray(labels, dtype=np.uint8), boxes)


def draw_labels(n_classes, probs, single_label, rng):
    if single_label:
        # at most one positive; all-negative as often as in the multi-label draw,
        # the remaining mass split in proportion to the per-class probabilities
        p = np.asarray(probs, dtype=np.float64)
        none = float(np.prod(1.0 - p))
        p = (1.0 - none) * p / p.sum() if p.sum() > 0 else np.zeros_like(p)
        k = rng.choice(n_classes + 1, p=np.append(p, none))
        y = np.zeros(n_classes, dtype=np.uint8)
        if k < n_classes:
            y[k] = 1
        return y
    return (rng.random(n_classes) < np.asarray(probs)).astype(np.uint8)


def generate_dataset(seed, n_samples, n_classes=4, label_probs=0.35, glyphs=None, size=64,
                     channels=1, single_label=False):
    """Generate ``n_samples`` images; sample ``i`` depends only on ``(seed, i)``."""
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    probs = np.broadcast_to(np.asarray(label_probs, dtype=np.float64), (n_classes,)).copy()
    if np.any(probs >= 1.0) or np.any(probs < 0):
        raise ValueError("label probabilities must lie in [0, 1) so all-negative samples can occur")
    glyphs = glyphs or default_glyphs(n_classes)
    if len({g.kind for g in glyphs}) != len(glyphs):
        raise ValueError("glyph kinds must be distinct across classes")
    images = np.empty((n_samples, size, size, channels), dtype=np.uint8)
    labels = np.empty((n_samples, n_classes), dtype=np.uint8)
    boxes = []
    for i in range(n_samples):
        rng = np.random.default_rng([seed, i])
        y = draw_labels(n_classes, probs, single_label, rng)
        s = render_sample(y, glyphs, size, channels, rng)
        images[i], labels[i] = s.image, s.labels
        boxes.append(s.boxes)
    meta = {
        "seed": int(seed),
        "n_classes": int(n_classes),
        "n_samples": int(n_samples),
        "size": int(size),
        "channels": int(channels),
        "label_probs": probs.tolist(),
        "single_label": bool(single_label),
        "glyphs": [asdict(g) for g in glyphs],
    }
    return Dataset(images, labels, boxes, meta=meta)
