"""Ship-fixed base frame, the six-part decomposition and its 32-keypoint boxes.

Base frame: origin on the flight deck, x to starboard, y to the bow, z up.
Units are meters.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from itertools import combinations
from pathlib import Path

import numpy as np

N_KEYPOINTS = 32

PART_NAMES = (
    "dog house center",
    "dog house",
    "house",
    "super structure",
    "whole ship",
    "ship stern",
)
N_CLASSES = len(PART_NAMES) + 1
NO_OBJECT = N_CLASSES - 1

# corner index = bx + 2*by + 4*bz (bit set = max along that axis);
# an edge joins two corners whose indices differ in exactly one bit
CORNER_BITS = np.array([[i & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)])
EDGES = tuple(
    (a, b) for a, b in combinations(range(8), 2) if bin(a ^ b).count("1") == 1
)


class SceneError(ValueError):
    pass


def keypoints_from_corners(corners: np.ndarray) -> np.ndarray:
    """Expand 8 ordered corners to 32 keypoints.

    Rows 0-7 are the corners; every edge in ``EDGES`` then contributes its
    1/3 point followed by its 2/3 point.
    """
    corners = np.asarray(corners, dtype=float)
    if corners.shape != (8, 3):
        raise SceneError(f"expected 8x3 corners, got {corners.shape}")
    out = [corners]
    for a, b in EDGES:
        pa, pb = corners[a], corners[b]
        out.append(np.stack([pa + (pb - pa) / 3.0, pa + 2.0 * (pb - pa) / 3.0]))
    return np.vstack(out)


def box_corners(min_corner, max_corner) -> np.ndarray:
    lo = np.asarray(min_corner, dtype=float)
    hi = np.asarray(max_corner, dtype=float)
    if lo.shape != (3,) or hi.shape != (3,):
        raise SceneError("box corners must be 3-vectors")
    if np.any(hi - lo <= 0.0):
        raise SceneError(f"degenerate box: min={lo.tolist()} max={hi.tolist()}")
    return np.where(CORNER_BITS == 1, hi, lo)


def keypoints_from_box(min_corner, max_corner) -> np.ndarray:
    """32 keypoints of an axis-aligned box given its min and max corners."""
    return keypoints_from_corners(box_corners(min_corner, max_corner))


@dataclass(frozen=True)
class PartModel:
    class_index: int
    name: str
    keypoints3d: np.ndarray = field(repr=False)
    box: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    @property
    def corners(self) -> np.ndarray:
        return self.keypoints3d[:8]


@dataclass(frozen=True)
class Scene:
    parts: tuple[PartModel, ...]

    @property
    def no_object_index(self) -> int:
        return len(self.parts)

    @property
    def n_classes(self) -> int:
        return len(self.parts) + 1

    def part(self, class_index: int) -> PartModel:
        return self.parts[class_index]

    def to_dict(self) -> dict:
        parts = []
        for p in self.parts:
            entry: dict = {"name": p.name, "class_index": p.class_index}
            if p.box is not None:
                entry["box"] = {"min": list(p.box[0]), "max": list(p.box[1])}
            else:
                entry["corners"] = p.corners.tolist()
            parts.append(entry)
        return {"parts": parts}

    @classmethod
    def from_dict(cls, data: dict) -> "Scene":
        try:
            raw = data["parts"]
        except (KeyError, TypeError) as exc:
            raise SceneError("scene must contain a 'parts' list") from exc
        parts = []
        for entry in raw:
            idx = int(entry["class_index"])
            name = str(entry["name"])
            if "box" in entry:
                lo = tuple(float(x) for x in entry["box"]["min"])
                hi = tuple(float(x) for x in entry["box"]["max"])
                parts.append(PartModel(idx, name, keypoints_from_box(lo, hi), (lo, hi)))
            elif "corners" in entry:
                kp = keypoints_from_corners(np.asarray(entry["corners"], dtype=float))
                parts.append(PartModel(idx, name, kp))
            else:
                raise SceneError(f"part {name!r} needs 'box' or 'corners'")
        parts.sort(key=lambda p: p.class_index)
        if [p.class_index for p in parts] != list(range(len(parts))):
            raise SceneError("class_index values must be unique and dense from 0")
        for p in parts:
            p.keypoints3d.setflags(write=False)
        return cls(tuple(parts))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "Scene":
        return cls.from_dict(json.loads(Path(path).read_text()))


def default_scene() -> Scene:
    text = resources.files("posefuse.data").joinpath("default_scene.json").read_text()
    return Scene.from_dict(json.loads(text))


def ground_truth_labels(n_classes: int, visible) -> np.ndarray:
    """Binary presence vector; the trailing no-object slot is always 0."""
    visible = np.asarray(visible, dtype=bool)
    if visible.shape != (n_classes - 1,):
        raise ValueError(f"need {n_classes - 1} visibility flags, got {visible.shape}")
    c_g = np.zeros(n_classes, dtype=int)
    c_g[:-1] = visible
    return c_g
