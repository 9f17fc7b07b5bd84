"""
Analytic surface samplers for the primitives synthetic assemblies are built from.

Primitives are plain dictionaries (``{"type": "box", "lo": ..., "hi": ...}``)
so they serialize with the rest of a synthetic spec. Box and cylinder-cap
samples sit on the global lattice ``h * Z`` in x and y, which keeps stacked
faces of different parts vertically aligned.
"""

from typing import Dict, Tuple

import numpy as np
import trimesh

from c2lt3d.utils.errors import ConfigError

LATTICE_UNIT = 0.05
MIN_DENSITY = 100.0
SPHERE_OVERSAMPLE = 1.3
SNAP = 1e-9


def lattice_step(density: float) -> float:
    """
    Sample spacing for a point density (points per unit area).

    The step divides ``0.05`` so box corners placed on multiples of 0.05 land
    on the lattice at every density.
    """
    if not density >= MIN_DENSITY:
        raise ConfigError(f"density must be >= {MIN_DENSITY:g}, got {density}")
    k = max(1, int(round(LATTICE_UNIT * np.sqrt(density))))
    return LATTICE_UNIT / k


def _lattice(lo: float, hi: float, h: float) -> np.ndarray:
    first = int(np.ceil(lo / h - SNAP))
    last = int(np.floor(hi / h + SNAP))
    return h * np.arange(first, last + 1, dtype=np.float64)


def _rows(lo: float, hi: float, h: float) -> np.ndarray:
    return np.linspace(lo, hi, max(2, int(round((hi - lo) / h)) + 1))


def sample_box(lo, hi, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Lattice samples on the six faces of an axis-aligned box.

    Parameters
    ----------
    lo, hi : array_like, shape (3,)
        Opposite corners.
    h : float
        Lattice spacing.

    Returns
    -------
    points, normals : np.ndarray, shape (n, 3)
        Every surface point appears once: the z faces own their rims, the x
        faces own the vertical edges.
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if np.any(hi <= lo):
        raise ConfigError(f"box corners must satisfy lo < hi, got {lo.tolist()} / {hi.tolist()}")
    xs, ys = _lattice(lo[0], hi[0], h), _lattice(lo[1], hi[1], h)
    zs = _rows(lo[2], hi[2], h)[1:-1]

    points, normals = [], []

    def face(grid, normal):
        points.append(grid.reshape(-1, 3))
        normals.append(np.tile(normal, (len(points[-1]), 1)))

    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    for z, sign in ((lo[2], -1.0), (hi[2], 1.0)):
        face(np.stack([gx, gy, np.full_like(gx, z)], axis=-1), [0.0, 0.0, sign])
    gy, gz = np.meshgrid(ys, zs, indexing="ij")
    for x, sign in ((lo[0], -1.0), (hi[0], 1.0)):
        face(np.stack([np.full_like(gy, x), gy, gz], axis=-1), [sign, 0.0, 0.0])
    inner = xs[~(np.isclose(xs, lo[0]) | np.isclose(xs, hi[0]))]
    gx, gz = np.meshgrid(inner, zs, indexing="ij")
    for y, sign in ((lo[1], -1.0), (hi[1], 1.0)):
        face(np.stack([gx, np.full_like(gx, y), gz], axis=-1), [0.0, sign, 0.0])
    return np.concatenate(points), np.concatenate(normals).astype(np.float64)


def sample_cylinder(base, radius: float, height: float, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """Z-axis cylinder: lattice points inside each cap, a theta/z grid on the side."""
    base = np.asarray(base, dtype=np.float64)
    if not (radius > 0 and height > 0):
        raise ConfigError("cylinder radius and height must be > 0")
    xs = _lattice(base[0] - radius, base[0] + radius, h)
    ys = _lattice(base[1] - radius, base[1] + radius, h)
    gx, gy = (g.reshape(-1) for g in np.meshgrid(xs, ys, indexing="ij"))
    inside = np.hypot(gx - base[0], gy - base[1]) < radius - 0.5 * h
    cap = np.stack([gx[inside], gy[inside]], axis=1)

    n_theta = 4 * max(1, int(np.ceil(2.0 * np.pi * radius / (4.0 * h))))
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    zs = _rows(base[2], base[2] + height, h)
    t, z = np.meshgrid(theta, zs, indexing="ij")
    radial = np.stack([np.cos(t), np.sin(t), np.zeros_like(t)], axis=-1).reshape(-1, 3)
    side = base + radial * radius
    side[:, 2] = z.reshape(-1)

    points = [side]
    normals = [radial]
    for z_cap, sign in ((base[2], -1.0), (base[2] + height, 1.0)):
        points.append(np.column_stack([cap, np.full(len(cap), z_cap)]))
        normals.append(np.tile([0.0, 0.0, sign], (len(cap), 1)))
    return np.concatenate(points), np.concatenate(normals)


def sample_sphere(center, radius: float, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """Fibonacci samples at roughly ``1.3 * area / h^2`` points."""
    if not radius > 0:
        raise ConfigError("sphere radius must be > 0")
    center = np.asarray(center, dtype=np.float64)
    n = max(12, int(round(SPHERE_OVERSAMPLE * 4.0 * np.pi * radius**2 / h**2)))
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(1.0 - z**2)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    normals = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    return center + radius * normals, normals


def sample_primitive(config: Dict, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Surface samples of a primitive described by a configuration dictionary.

    Parameters
    ----------
    config : dict
        ``type`` plus the parameters of that type: ``lo``/``hi`` for a box,
        ``base``/``radius``/``height`` for a cylinder, ``center``/``radius`` for
        a sphere.
    h : float
        Lattice spacing.

    Returns
    -------
    points, normals : np.ndarray
    """
    kind = str(config.get("type", "")).lower()
    if kind == "box":
        return sample_box(config["lo"], config["hi"], h)
    if kind == "cylinder":
        return sample_cylinder(config["base"], config["radius"], config["height"], h)
    if kind == "sphere":
        return sample_sphere(config["center"], config["radius"], h)
    raise ConfigError(f"Unknown primitive type: {kind}")


def primitive_mesh(config: Dict) -> trimesh.Trimesh:
    """Triangle mesh of a primitive, for OBJ emission."""
    kind = str(config.get("type", "")).lower()
    if kind == "box":
        lo, hi = np.asarray(config["lo"], float), np.asarray(config["hi"], float)
        return trimesh.creation.box(
            extents=hi - lo, transform=trimesh.transformations.translation_matrix(0.5 * (lo + hi))
        )
    if kind == "cylinder":
        base = np.asarray(config["base"], float)
        height = float(config["height"])
        center = base + [0.0, 0.0, 0.5 * height]
        return trimesh.creation.cylinder(
            radius=float(config["radius"]),
            height=height,
            sections=32,
            transform=trimesh.transformations.translation_matrix(center),
        )
    if kind == "sphere":
        mesh = trimesh.creation.icosphere(subdivisions=3, radius=float(config["radius"]))
        mesh.apply_translation(np.asarray(config["center"], float))
        return mesh
    raise ConfigError(f"Unknown primitive type: {kind}")
