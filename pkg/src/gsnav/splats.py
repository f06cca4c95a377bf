"""Gaussian splat scene representation and binary PLY I/O.

Scenes follow the common 3DGS vertex layout: positions, DC color
coefficients, logit opacities, log scales, and (w,x,y,z) quaternions.
Higher-order SH coefficients (f_rest_*) are accepted and ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import RigidTransform, quat_multiply, quat_normalize, quat_to_matrix

# DC spherical-harmonics basis constant: rgb = 0.5 + C0 * f_dc
SH_C0 = 0.28209479177387814

REQUIRED_FIELDS = (
    "x",
    "y",
    "z",
    "f_dc_0",
    "f_dc_1",
    "f_dc_2",
    "opacity",
    "scale_0",
    "scale_1",
    "scale_2",
    "rot_0",
    "rot_1",
    "rot_2",
    "rot_3",
)


class SceneFormatError(ValueError):
    """The PLY (or its sidecar) does not follow the expected layout."""


class EmptySceneError(ValueError):
    """The scene contains no primitives."""


@dataclass(frozen=True)
class GaussianPrimitive:
    """A single anisotropic Gaussian: 1-sigma ellipsoid semi-axes in meters."""

    mean: np.ndarray
    rotation: np.ndarray  # quaternion (w, x, y, z), unit norm
    scale: np.ndarray
    opacity: float
    color: np.ndarray

    def covariance(self) -> np.ndarray:
        rot = quat_to_matrix(self.rotation)
        return rot @ np.diag(self.scale**2) @ rot.T


class GaussianSet:
    """Vectorized, ordered collection of Gaussian primitives.

    Stored struct-of-arrays for speed; indexing yields GaussianPrimitive
    views so the collection still behaves like an ordered list.
    """

    def __init__(self, means, quats, scales, opacities, colors, validate: bool = True):
        self.means = np.ascontiguousarray(means, dtype=float).reshape(-1, 3)
        self.quats = np.ascontiguousarray(quats, dtype=float).reshape(-1, 4)
        self.scales = np.ascontiguousarray(scales, dtype=float).reshape(-1, 3)
        self.opacities = np.ascontiguousarray(opacities, dtype=float).reshape(-1)
        self.colors = np.ascontiguousarray(colors, dtype=float).reshape(-1, 3)
        n = len(self.means)
        if not (len(self.quats) == len(self.scales) == len(self.opacities) == len(self.colors) == n):
            raise ValueError("field lengths disagree")
        if validate:
            self._validate()

    def _validate(self):
        for name, arr in (
            ("means", self.means),
            ("quats", self.quats),
            ("scales", self.scales),
            ("opacities", self.opacities),
            ("colors", self.colors),
        ):
            bad = ~np.isfinite(arr)
            if bad.any():
                idx = int(np.argwhere(bad.reshape(len(self.means), -1).any(axis=1))[0, 0])
                raise SceneFormatError(f"non-finite value in {name} at primitive {idx}")
        if np.any(self.scales <= 0):
            idx = int(np.argwhere((self.scales <= 0).any(axis=1))[0, 0])
            raise SceneFormatError(f"non-positive scale at primitive {idx}")
        if np.any(self.opacities < 0) or np.any(self.opacities > 1):
            raise SceneFormatError("opacity outside [0, 1]")
        norms = np.linalg.norm(self.quats, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise SceneFormatError("unnormalized quaternion")

    def __len__(self) -> int:
        return len(self.means)

    def __getitem__(self, i: int) -> GaussianPrimitive:
        return GaussianPrimitive(
            mean=self.means[i].copy(),
            rotation=self.quats[i].copy(),
            scale=self.scales[i].copy(),
            opacity=float(self.opacities[i]),
            color=self.colors[i].copy(),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @staticmethod
    def from_primitives(prims) -> "GaussianSet":
        prims = list(prims)
        return GaussianSet(
            means=np.array([p.mean for p in prims]),
            quats=np.array([p.rotation for p in prims]),
            scales=np.array([p.scale for p in prims]),
            opacities=np.array([p.opacity for p in prims]),
            colors=np.array([p.color for p in prims]),
        )

    @staticmethod
    def concatenate(sets) -> "GaussianSet":
        sets = list(sets)
        return GaussianSet(
            means=np.concatenate([s.means for s in sets]),
            quats=np.concatenate([s.quats for s in sets]),
            scales=np.concatenate([s.scales for s in sets]),
            opacities=np.concatenate([s.opacities for s in sets]),
            colors=np.concatenate([s.colors for s in sets]),
            validate=False,
        )

    def covariances(self) -> np.ndarray:
        """(N, 3, 3) covariances Sigma = R diag(scale^2) R^T."""
        rots = quat_to_matrix(self.quats)
        return np.einsum("nij,nj,nkj->nik", rots, self.scales**2, rots)

    def covariance_traces(self) -> np.ndarray:
        # trace(R diag(s^2) R^T) = sum(s^2): rotation-invariant
        return np.sum(self.scales**2, axis=1)


def transform_gaussians(gaussians: GaussianSet, pose: RigidTransform) -> GaussianSet:
    """Rigidly transform primitives: means mapped, quats left-multiplied."""
    pose_quat = pose.quat()
    return GaussianSet(
        means=pose.apply(gaussians.means),
        quats=quat_normalize(quat_multiply(pose_quat[None, :], gaussians.quats)),
        scales=gaussians.scales.copy(),
        opacities=gaussians.opacities.copy(),
        colors=gaussians.colors.copy(),
        validate=False,
    )


@dataclass
class SplatScene:
    """A loaded splat scene in a gravity-aligned metric frame (+z up)."""

    gaussians: GaussianSet
    ground_z: float
    name: str = "scene"

    @property
    def primitives(self) -> GaussianSet:
        return self.gaussians


def _parse_ply_header(fh):
    magic = fh.readline()
    if magic.strip() != b"ply":
        raise SceneFormatError("not a PLY file")
    fmt = None
    n_vertices = None
    props: list[tuple[str, str]] = []
    in_vertex = False
    while True:
        line = fh.readline()
        if not line:
            raise SceneFormatError("unterminated PLY header")
        tokens = line.decode("ascii", errors="replace").strip().split()
        if not tokens:
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            in_vertex = tokens[1] == "vertex"
            if in_vertex:
                n_vertices = int(tokens[2])
        elif tokens[0] == "property" and in_vertex:
            props.append((tokens[1], tokens[2]))
        elif tokens[0] == "end_header":
            break
    if fmt != "binary_little_endian":
        raise SceneFormatError(f"unsupported PLY format {fmt!r}; need binary_little_endian")
    if n_vertices is None:
        raise SceneFormatError("missing vertex element")
    return n_vertices, props


_PLY_DTYPES = {
    "float": "<f4",
    "float32": "<f4",
    "double": "<f8",
    "float64": "<f8",
    "uchar": "u1",
    "uint8": "u1",
    "int": "<i4",
    "int32": "<i4",
}


def load_gaussian_ply(path) -> GaussianSet:
    """Read a binary 3DGS PLY and apply the stored-value activations."""
    path = Path(path)
    with open(path, "rb") as fh:
        n_vertices, props = _parse_ply_header(fh)
        names = [name for _, name in props]
        for req in REQUIRED_FIELDS:
            if req not in names:
                raise SceneFormatError(f"missing required PLY field {req!r}")
        try:
            dtype = np.dtype([(name, _PLY_DTYPES[typ]) for typ, name in props])
        except KeyError as exc:
            raise SceneFormatError(f"unsupported PLY property type {exc}") from exc
        if n_vertices == 0:
            raise EmptySceneError(f"{path} contains zero vertices")
        raw = np.fromfile(fh, dtype=dtype, count=n_vertices)
    if len(raw) != n_vertices:
        raise SceneFormatError(f"truncated PLY: expected {n_vertices} vertices, got {len(raw)}")

    means = np.stack([raw["x"], raw["y"], raw["z"]], axis=1).astype(float)
    f_dc = np.stack([raw["f_dc_0"], raw["f_dc_1"], raw["f_dc_2"]], axis=1).astype(float)
    log_scales = np.stack([raw["scale_0"], raw["scale_1"], raw["scale_2"]], axis=1).astype(float)
    quats = np.stack([raw["rot_0"], raw["rot_1"], raw["rot_2"], raw["rot_3"]], axis=1).astype(float)
    logits = raw["opacity"].astype(float)

    for name, arr in (("position", means), ("f_dc", f_dc), ("scale", log_scales),
                      ("rotation", quats), ("opacity", logits)):
        bad = ~np.isfinite(arr)
        if bad.any():
            idx = int(np.argwhere(bad.reshape(n_vertices, -1).any(axis=1))[0, 0])
            raise SceneFormatError(f"non-finite {name} at vertex {idx}")

    return GaussianSet(
        means=means,
        quats=quat_normalize(quats),
        scales=np.exp(log_scales),
        opacities=1.0 / (1.0 + np.exp(-logits)),
        colors=np.clip(0.5 + SH_C0 * f_dc, 0.0, 1.0),
    )


def save_gaussian_ply(gaussians: GaussianSet, path) -> None:
    """Write the inverse-activation binary PLY (round-trips with load)."""
    path = Path(path)
    n = len(gaussians)
    fields = [
        ("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
        ("f_dc_0", "<f4"), ("f_dc_1", "<f4"), ("f_dc_2", "<f4"),
        ("opacity", "<f4"),
        ("scale_0", "<f4"), ("scale_1", "<f4"), ("scale_2", "<f4"),
        ("rot_0", "<f4"), ("rot_1", "<f4"), ("rot_2", "<f4"), ("rot_3", "<f4"),
    ]
    rec = np.empty(n, dtype=np.dtype(fields))
    rec["x"], rec["y"], rec["z"] = gaussians.means.T
    f_dc = (gaussians.colors - 0.5) / SH_C0
    rec["f_dc_0"], rec["f_dc_1"], rec["f_dc_2"] = f_dc.T
    op = np.clip(gaussians.opacities, 1e-6, 1.0 - 1e-6)
    rec["opacity"] = np.log(op / (1.0 - op))
    log_scales = np.log(gaussians.scales)
    rec["scale_0"], rec["scale_1"], rec["scale_2"] = log_scales.T
    rec["rot_0"], rec["rot_1"], rec["rot_2"], rec["rot_3"] = gaussians.quats.T

    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {name}" for name, _ in fields]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        rec.tofile(fh)


def meta_path_for(scene_path) -> Path:
    scene_path = Path(scene_path)
    return scene_path.with_suffix(".meta.json")


def load_scene(path, sh_mode: str = "dc-only") -> SplatScene:
    """Load a scene PLY plus its `<scene>.meta.json` sidecar.

    Only degree-0 color is supported; any f_rest_* fields are ignored.
    """
    if sh_mode != "dc-only":
        raise ValueError(f"unsupported sh_mode {sh_mode!r}")
    path = Path(path)
    gaussians = load_gaussian_ply(path)
    meta_path = meta_path_for(path)
    if not meta_path.exists():
        raise SceneFormatError(f"missing scene metadata sidecar {meta_path}")
    meta = json.loads(meta_path.read_text())
    if "ground_z" not in meta:
        raise SceneFormatError(f"{meta_path} missing required key 'ground_z'")
    return SplatScene(
        gaussians=gaussians,
        ground_z=float(meta["ground_z"]),
        name=str(meta.get("name", path.stem)),
    )


def save_scene(scene: SplatScene, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_gaussian_ply(scene.gaussians, path)
    meta_path_for(path).write_text(
        json.dumps({"ground_z": scene.ground_z, "name": scene.name}, indent=2) + "\n"
    )
