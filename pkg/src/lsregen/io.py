"""File formats: binary PPM images, tensor dumps, layout JSON and manifests.

Layout documents have the canonical form::

    {"canvas":[H,W],"boxes":[{"x":..,"y":..,"w":..,"h":..,"label":".."}]}

written compactly (no spaces) with keys in exactly that order, floats in
shortest round-trip notation and a trailing newline. Writers are
deterministic byte for byte and every writer replaces its target
atomically (temporary file plus rename).
"""

import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .exceptions import (
    FormatError,
    InvalidArgumentError,
    LayoutInvariantError,
    LayoutJSONError,
    LayoutSchemaError,
)
from .scene import MAX_BOXES, VOCABULARY, BoundingBox, LayoutSpec

TENSOR_MAGIC = b"GDTENSR1"
BOX_KEYS = ("x", "y", "w", "h", "label")
LAYOUT_KEYS = ("canvas", "boxes")


def atomic_write_bytes(path, data):
    """Write ``data`` to ``path`` through a temporary file in the same directory."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_bytes(path):
    # OSError messages already carry the file name.
    return Path(path).read_bytes()


# Tensor dumps


def encode_tensor(arr):
    """Serialise an array: magic, u32 ndim, u64 dims, then f64 values, all little-endian."""
    arr = np.array(arr, dtype="<f8", order="C")  # ascontiguousarray would promote 0-d to 1-d
    header = TENSOR_MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + arr.tobytes(order="C")


def decode_tensor(data):
    """Inverse of :func:`encode_tensor`.

    Raises:
        FormatError: Bad magic, truncated data or trailing bytes.
    """
    if len(data) < 12 or data[:8] != TENSOR_MAGIC:
        raise FormatError("not a tensor dump (bad magic)")
    (ndim,) = struct.unpack_from("<I", data, 8)
    offset = 12 + 8 * ndim
    if len(data) < offset:
        raise FormatError("truncated tensor header")
    dims = struct.unpack_from(f"<{ndim}Q", data, 12)
    expected = offset + 8 * math.prod(dims)
    if len(data) != expected:
        kind = "trailing bytes after" if len(data) > expected else "truncated"
        raise FormatError(f"{kind} tensor payload: {len(data)} bytes, expected {expected}")
    return np.frombuffer(data, dtype="<f8", offset=offset).reshape(dims).astype(np.float64)


def write_tensor(arr, path):
    atomic_write_bytes(path, encode_tensor(arr))


def read_tensor(path):
    try:
        return decode_tensor(_read_bytes(path))
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


# PPM images


def to_display(img):
    """Map signed latents in [-1, 1] to display values in [0, 1]."""
    return (np.asarray(img, dtype=np.float64) + 1.0) / 2.0


def from_display(img):
    return 2.0 * np.asarray(img, dtype=np.float64) - 1.0


def quantize(img):
    """Clamp to [0, 1] and round half up to 8-bit."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def encode_ppm(img, gamma_map=None):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise InvalidArgumentError(f"PPM needs a 3-channel (3, H, W) grid, got shape {img.shape}")
    if gamma_map is not None:
        img = gamma_map(img)
    _, H, W = img.shape
    pixels = quantize(np.nan_to_num(img, nan=0.0)).transpose(1, 2, 0)
    return f"P6\n{W} {H}\n255\n".encode("ascii") + pixels.tobytes()


def write_ppm(img, path, gamma_map=None):
    """Write a (3, H, W) grid as a binary P6 PPM.

    Args:
        img: Values nominally in [0, 1] after ``gamma_map``.
        path: Destination file.
        gamma_map: Optional function applied before clamping, e.g.
            :func:`to_display` for signed latents.
    """
    atomic_write_bytes(path, encode_ppm(img, gamma_map))


def _ppm_tokens(data, count):
    tokens, i = [], 2
    while len(tokens) < count:
        while i < len(data) and (data[i : i + 1].isspace() or data[i : i + 1] == b"#"):
            if data[i : i + 1] == b"#":
                while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                    i += 1
            else:
                i += 1
        start = i
        while i < len(data) and data[i : i + 1].isdigit():
            i += 1
        if start == i:
            raise FormatError("malformed PPM header")
        tokens.append(int(data[start:i]))
    if i >= len(data) or not data[i : i + 1].isspace():
        raise FormatError("malformed PPM header")
    return tokens, i + 1


def decode_ppm(data):
    if data[:2] != b"P6":
        raise FormatError("not a binary PPM (missing P6 magic)")
    (W, H, maxval), offset = _ppm_tokens(data, 3)
    if W < 1 or H < 1 or maxval != 255:
        raise FormatError(f"unsupported PPM geometry {W}x{H} maxval {maxval}")
    expected = offset + 3 * W * H
    if len(data) != expected:
        kind = "trailing bytes in" if len(data) > expected else "truncated"
        raise FormatError(f"{kind} PPM payload: {len(data)} bytes, expected {expected}")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=offset).reshape(H, W, 3)
    return pixels.transpose(2, 0, 1).astype(np.float64) / 255.0


def read_ppm(path):
    """Read a P6 PPM into a (3, H, W) grid of values in [0, 1]."""
    try:
        return decode_ppm(_read_bytes(path))
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


# Layout JSON


def layout_to_dict(spec):
    return {
        "canvas": [spec.canvas[0], spec.canvas[1]],
        "boxes": [{"x": b.x, "y": b.y, "w": b.w, "h": b.h, "label": b.label} for b in spec.boxes],
    }


def layout_to_json(spec):
    """Canonical serialisation (see module docstring)."""
    return json.dumps(layout_to_dict(spec), separators=(",", ":"), allow_nan=False) + "\n"


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _reject_constant(name):
    raise ValueError(f"non-finite number {name} is not allowed")


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ValueError(f"duplicate key {k!r}")
        out[k] = v
    return out


def layout_from_dict(doc):
    """Build a validated :class:`LayoutSpec` from a parsed JSON document.

    Raises:
        LayoutSchemaError: Wrong types, missing or unknown keys.
        LayoutInvariantError: Geometry or box-count violations.
    """
    if not isinstance(doc, dict):
        raise LayoutSchemaError("$", "document must be an object")
    for key in doc:
        if key not in LAYOUT_KEYS:
            raise LayoutSchemaError(key, "unknown key")
    for key in LAYOUT_KEYS:
        if key not in doc:
            raise LayoutSchemaError(key, "missing key")
    canvas = doc["canvas"]
    if not isinstance(canvas, list) or len(canvas) != 2:
        raise LayoutSchemaError("canvas", "must be a list [height, width]")
    for i, c in enumerate(canvas):
        if not isinstance(c, int) or isinstance(c, bool):
            raise LayoutSchemaError(f"canvas[{i}]", "must be an integer")
        if c < 1:
            raise LayoutInvariantError(f"canvas[{i}]", "must be positive")
    boxes = doc["boxes"]
    if not isinstance(boxes, list):
        raise LayoutSchemaError("boxes", "must be a list")
    if not 1 <= len(boxes) <= MAX_BOXES:
        raise LayoutInvariantError("boxes", f"need 1..{MAX_BOXES} boxes, got {len(boxes)}")
    parsed = []
    for i, box in enumerate(boxes):
        where = f"boxes[{i}]"
        if not isinstance(box, dict):
            raise LayoutSchemaError(where, "must be an object")
        for key in box:
            if key not in BOX_KEYS:
                raise LayoutSchemaError(f"{where}.{key}", "unknown key")
        for key in BOX_KEYS:
            if key not in box:
                raise LayoutSchemaError(f"{where}.{key}", "missing key")
        for key in ("x", "y", "w", "h"):
            if not _is_number(box[key]):
                raise LayoutSchemaError(f"{where}.{key}", "must be a number")
        if not isinstance(box["label"], str):
            raise LayoutSchemaError(f"{where}.label", "must be a string")
        if box["label"] not in VOCABULARY:
            raise LayoutSchemaError(f"{where}.label", f"unknown label {box['label']!r}")
        try:
            parsed.append(BoundingBox(box["x"], box["y"], box["w"], box["h"], box["label"]))
        except InvalidArgumentError as exc:
            raise LayoutInvariantError(where, str(exc)) from None
    return LayoutSpec(tuple(parsed), tuple(canvas)).validate()


def layout_from_json(text):
    try:
        doc = json.loads(text, object_pairs_hook=_no_duplicates, parse_constant=_reject_constant)
    except (json.JSONDecodeError, ValueError) as exc:
        raise LayoutJSONError(f"malformed layout JSON: {exc}") from None
    return layout_from_dict(doc)


def read_layout(path):
    """Parse and validate a layout document.

    Raises:
        OSError: The file cannot be read (message names the path).
        LayoutJSONError, LayoutSchemaError, LayoutInvariantError: See
            :func:`layout_from_dict`.
    """
    data = _read_bytes(path)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise LayoutJSONError(f"{path}: not UTF-8 ({exc})") from None
    return layout_from_json(text)


def write_layout(spec, path):
    atomic_write_bytes(path, layout_to_json(spec).encode("utf-8"))


# Manifests and JSON lines


def dumps_canonical(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(obj, path):
    atomic_write_bytes(path, dumps_canonical(obj).encode("utf-8"))


def read_json(path):
    try:
        return json.loads(_read_bytes(path).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_jsonl(records, path):
    lines = "".join(json.dumps(r, sort_keys=True, allow_nan=False) + "\n" for r in records)
    atomic_write_bytes(path, lines.encode("utf-8"))


def read_jsonl(path):
    text = _read_bytes(path).decode("utf-8")
    return [json.loads(line) for line in text.splitlines() if line.strip()]
