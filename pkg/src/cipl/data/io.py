"""Dataset directory format: binary PGM/PPM images, labels.csv, boxes.csv, manifest.json."""

import csv
import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .synth import Dataset


class FormatError(ValueError):
    pass


def write_pnm(path, img):
    """Write uint8 [H,W] / [H,W,1] as P5 or [H,W,3] as P6."""
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise FormatError("PNM writer expects uint8 pixels")
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise FormatError(f"unsupported image shape {img.shape}")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (w, h))
        f.write(np.ascontiguousarray(img).tobytes())


def _tokens(data, n):
    out, pos = [], 0
    while len(out) < n:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PNM header")
        out.append(data[start:pos])
    return out, pos + 1


def read_pnm(path):
    """Read a binary PGM/PPM (8-bit) into uint8 [H,W,ch]."""
    data = Path(path).read_bytes()
    if data[:2] not in (b"P5", b"P6"):
        raise FormatError(f"{path}: not a binary PGM/PPM file")
    (magic, w, h, maxval), pos = _tokens(data, 4)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise FormatError(f"{path}: malformed header") from exc
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit images are supported (maxval {maxval})")
    ch = 1 if magic == b"P5" else 3
    raw = data[pos:pos + w * h * ch]
    if len(raw) != w * h * ch:
        raise FormatError(f"{path}: truncated pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, ch).copy()


def image_name(index, channels):
    return f"{index}.{'pgm' if channels == 1 else 'ppm'}"


def write_dataset(ds, path, force=False):
    path = Path(path)
    if not path.parent.exists():
        raise FileNotFoundError(f"parent directory does not exist: {path.parent}")
    if path.exists() and any(path.iterdir()) and not force:
        raise FileExistsError(f"{path} is not empty (use --force to overwrite)")
    path.mkdir(exist_ok=True)
    ch = ds.images.shape[3]
    for i, img in zip(ds.ids, ds.images):
        write_pnm(path / image_name(int(i), ch), img)
    c = ds.n_classes
    with open(path / "labels.csv", "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["index"] + [f"label_{k}" for k in range(c)])
        for i, y in zip(ds.ids, ds.labels):
            wr.writerow([int(i)] + [int(v) for v in y])
    with open(path / "boxes.csv", "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["index", "class", "x", "y", "w", "h"])
        for i, bxs in zip(ds.ids, ds.boxes):
            for b in bxs:
                wr.writerow([int(i)] + [int(v) for v in b])
    manifest = dict(ds.meta)
    manifest["counts"] = {
        "samples": len(ds),
        "positives_per_class": ds.labels.sum(axis=0).astype(int).tolist(),
        "all_negative": int((ds.labels.sum(axis=1) == 0).sum()),
        "boxes": int(sum(len(b) for b in ds.boxes)),
    }
    with open(path / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_dataset(path):
    path = Path(path)
    if not (path / "labels.csv").exists():
        raise FileNotFoundError(f"{path}: no labels.csv (not a dataset directory)")
    meta = json.loads((path / "manifest.json").read_text()) if (path / "manifest.json").exists() else {}
    with open(path / "labels.csv", newline="") as f:
        rows = list(csv.reader(f))
    ids = np.array([int(r[0]) for r in rows[1:]], dtype=np.int64)
    labels = np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.uint8)
    pos = {int(i): k for k, i in enumerate(ids)}
    boxes = [[] for _ in ids]
    if (path / "boxes.csv").exists():
        with open(path / "boxes.csv", newline="") as f:
            for r in list(csv.reader(f))[1:]:
                vals = [int(v) for v in r]
                boxes[pos[vals[0]]].append(tuple(vals[1:]))
    ch = int(meta.get("channels", 1))
    images = np.stack([read_pnm(path / image_name(int(i), ch)) for i in ids]) if len(ids) else None
    return Dataset(images, labels, boxes, ids=ids, meta=meta)


def manifest_checksum(path):
    return hashlib.sha256((Path(path) / "manifest.json").read_bytes()).hexdigest()


def tree_checksum(path):
    """SHA-256 over every file name and content in a dataset directory."""
    h = hashlib.sha256()
    for name in sorted(os.listdir(path)):
        h.update(name.encode())
        h.update((Path(path) / name).read_bytes())
    return h.hexdigest()
