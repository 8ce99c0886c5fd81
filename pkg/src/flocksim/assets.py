"""Obstacle asset management: pools, randomization, and tree generation.

Obstacles are described by a small URDF subset (collision geometry only:
boxes, cylinders, spheres, connected by fixed joints) and organized on disk
as one directory per obstacle class::

    <root>/<class_name>/*.urdf

Each environment samples its obstacles with replacement from the class
pools and randomizes their poses inside configurable fractional bounds.
Every environment owns an independent counter-based random stream derived
from (global seed, env index, reset counter), so resetting one environment
never perturbs any other.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import se3

BOX = "box"
CYLINDER = "cylinder"
SPHERE = "sphere"

MAX_TREE_PRIMITIVES = 10_000


class AssetError(Exception):
    """Base class for asset loading and generation failures."""


class MalformedXmlError(AssetError):
    pass


class UnsupportedGeometryError(AssetError):
    pass


class InvalidGeometryError(AssetError):
    pass


class EmptyClassDirError(AssetError):
    pass


class UnknownClassError(AssetError):
    pass


class TooManyPrimitivesError(AssetError):
    pass


class AssetParseError(AssetError):
    """Parse failure wrapped with its source file."""

    def __init__(self, path, reason):
        self.path = str(path)
        self.reason = str(reason)
        super().__init__(f"{path}: {reason}")


@dataclass(frozen=True)
class Primitive:
    """One collision primitive with its pose local to the asset origin.

    dims holds (sx, sy, sz) full extents for a box, (radius, length, 0)
    for a cylinder aligned with its local z axis and centered on its
    origin, and (radius, 0, 0) for a sphere.
    """

    kind: str
    dims: tuple
    position: np.ndarray
    rotation: np.ndarray  # scalar-first quaternion

    def __post_init__(self):
        object.__setattr__(self, "position",
                           np.asarray(self.position, dtype=np.float64).reshape(3))
        object.__setattr__(self, "rotation",
                           np.asarray(self.rotation, dtype=np.float64).reshape(4))


@dataclass
class AssetPrototype:
    """A parsed asset: primitives in asset-local coordinates."""

    source: str
    class_name: str
    primitives: list

    def __post_init__(self):
        if not self.primitives:
            raise InvalidGeometryError(f"{self.source}: asset has no primitives")


@dataclass
class AssetInstance:
    """One obstacle placed in one environment.

    class_name is the pool/config class this instance was drawn for (the
    prototype's own tag may differ, e.g. generated assets).
    """

    prototype: AssetPrototype
    position: np.ndarray       # (3,) env-local, m
    rotation: np.ndarray       # (4,) quaternion
    segmentation_id: int
    env_index: int
    class_name: str = ""
    collision_enabled: bool = True

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(4)


@dataclass
class AssetClassConfig:
    """Per-class sampling and randomization settings.

    Positions are drawn per component as fractions of the environment
    bounds in [position_min, position_max]; a non-None entry in frozen
    pins that position component to a constant (meters) instead. Euler
    angles are drawn uniformly per component and composed in ZYX order.
    """

    name: str
    count_per_env: int = 0
    position_min: np.ndarray = field(default_factory=lambda: np.zeros(3))
    position_max: np.ndarray = field(default_factory=lambda: np.ones(3))
    euler_min: np.ndarray = field(default_factory=lambda: np.zeros(3))
    euler_max: np.ndarray = field(default_factory=lambda: np.zeros(3))
    frozen: tuple = (None, None, None)
    segmentation_id: int = 1
    collision_enabled: bool = True

    def __post_init__(self):
        self.position_min = np.asarray(self.position_min, dtype=np.float64).reshape(3)
        self.position_max = np.asarray(self.position_max, dtype=np.float64).reshape(3)
        self.euler_min = np.asarray(self.euler_min, dtype=np.float64).reshape(3)
        self.euler_max = np.asarray(self.euler_max, dtype=np.float64).reshape(3)
        self.frozen = tuple(self.frozen)
        if self.count_per_env < 0:
            raise ValueError("count_per_env must be >= 0")
        if (self.position_min > self.position_max).any():
            raise ValueError(f"class {self.name}: position_min > position_max")
        if (self.euler_min > self.euler_max).any():
            raise ValueError(f"class {self.name}: euler_min > euler_max")
        if self.segmentation_id < 1:
            raise ValueError("segmentation_id must be >= 1")
        if len(self.frozen) != 3:
            raise ValueError("frozen must have one entry per position dimension")


def _compose(p1, q1, p2, q2):
    """Pose composition: apply (p2, q2) in the frame of (p1, q1)."""
    return p1 + se3.quat_rotate(q1, p2), se3.quat_multiply(q1, q2)


def _parse_origin(elem):
    if elem is None:
        return np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0])
    xyz = [float(v) for v in elem.get("xyz", "0 0 0").split()]
    rpy = [float(v) for v in elem.get("rpy", "0 0 0").split()]
    if len(xyz) != 3 or len(rpy) != 3:
        raise InvalidGeometryError("origin xyz/rpy must have three components")
    return np.array(xyz), se3.rot_zyx(rpy[0], rpy[1], rpy[2])


def _parse_geometry(geom):
    shapes = list(geom)
    if len(shapes) != 1:
        raise InvalidGeometryError("geometry element must hold exactly one shape")
    shape = shapes[0]
    if shape.tag == "box":
        size = [float(v) for v in shape.get("size", "").split()]
        if len(size) != 3:
            raise InvalidGeometryError("box size must have three components")
        if min(size) <= 0.0:
            raise InvalidGeometryError(f"box dimensions must be positive, got {size}")
        return BOX, (size[0], size[1], size[2])
    if shape.tag == "cylinder":
        radius = float(shape.get("radius", "0"))
        length = float(shape.get("length", "0"))
        if radius <= 0.0 or length <= 0.0:
            raise InvalidGeometryError(
                f"cylinder radius/length must be positive, got {radius}/{length}")
        return CYLINDER, (radius, length, 0.0)
    if shape.tag == "sphere":
        radius = float(shape.get("radius", "0"))
        if radius <= 0.0:
            raise InvalidGeometryError(f"sphere radius must be positive, got {radius}")
        return SPHERE, (radius, 0.0, 0.0)
    raise UnsupportedGeometryError(f"unsupported geometry element <{shape.tag}>")


def parse_urdf_subset(text: str, source: str = "<string>",
                      class_name: str = "") -> AssetPrototype:
    """Parse the URDF subset: collision boxes/cylinders/spheres, fixed joints.

    Link poses are composed through the fixed-joint tree; visual and
    inertial elements are ignored. Raises MalformedXmlError,
    UnsupportedGeometryError or InvalidGeometryError.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        line, col = exc.position
        raise MalformedXmlError(f"{source}: XML error at line {line}, column {col}: "
                                f"{exc.msg if hasattr(exc, 'msg') else exc}") from exc
    if root.tag != "robot":
        raise MalformedXmlError(f"{source}: expected <robot> root, got <{root.tag}>")

    links = {}
    for link in root.findall("link"):
        name = link.get("name")
        if name is None:
            raise InvalidGeometryError(f"{source}: link without a name")
        collisions = []
        for coll in link.findall("collision"):
            geom = coll.find("geometry")
            if geom is None:
                raise InvalidGeometryError(f"{source}: collision without geometry")
            kind, dims = _parse_geometry(geom)
            pos, rot = _parse_origin(coll.find("origin"))
            collisions.append((kind, dims, pos, rot))
        links[name] = collisions

    children = {}
    child_names = set()
    for joint in root.findall("joint"):
        jtype = joint.get("type")
        if jtype != "fixed":
            raise UnsupportedGeometryError(
                f"{source}: only fixed joints are supported, got '{jtype}'")
        parent_el, child_el = joint.find("parent"), joint.find("child")
        if parent_el is None or child_el is None:
            raise InvalidGeometryError(f"{source}: joint missing parent or child")
        parent = parent_el.get("link")
        child = child_el.get("link")
        if parent not in links or child not in links:
            raise InvalidGeometryError(f"{source}: joint references unknown link")
        pos, rot = _parse_origin(joint.find("origin"))
        children.setdefault(parent, []).append((child, pos, rot))
        child_names.add(child)

    roots = [n for n in links if n not in child_names]
    if len(roots) != 1:
        raise InvalidGeometryError(
            f"{source}: expected exactly one root link, found {len(roots)}")

    # depth-first pose composition, preserving document order of links
    link_pose = {roots[0]: (np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))}
    stack = [roots[0]]
    while stack:
        name = stack.pop()
        base_p, base_q = link_pose[name]
        for child, pos, rot in reversed(children.get(name, [])):
            link_pose[child] = _compose(base_p, base_q, pos, rot)
            stack.append(child)

    primitives = []
    for name in links:
        if name not in link_pose:
            raise InvalidGeometryError(f"{source}: link '{name}' is unreachable")
        base_p, base_q = link_pose[name]
        for kind, dims, pos, rot in links[name]:
            p, q = _compose(base_p, base_q, pos, rot)
            primitives.append(Primitive(kind=kind, dims=dims, position=p, rotation=q))

    return AssetPrototype(source=source, class_name=class_name,
                          primitives=primitives)


def load_asset_dir(root) -> dict:
    """Load every class subdirectory into a prototype pool.

    Returns {class_name: [AssetPrototype, ...]} with deterministic ordering
    (sorted directory and file names). Raises EmptyClassDirError for a class
    directory without .urdf files and AssetParseError (with file context)
    for any file that fails to parse.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"asset root {root} is not a directory")
    pools = {}
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        files = sorted(class_dir.glob("*.urdf"))
        if not files:
            raise EmptyClassDirError(f"class directory {class_dir} has no .urdf files")
        protos = []
        for f in files:
            try:
                protos.append(parse_urdf_subset(
                    f.read_text(), source=str(f), class_name=class_dir.name))
            except AssetError as exc:
                raise AssetParseError(f, exc) from exc
        pools[class_dir.name] = protos
    return pools


def env_stream(global_seed: int, env_index: int,
               reset_counter: int) -> np.random.Generator:
    """Independent counter-based stream for one environment and reset."""
    ss = np.random.SeedSequence(entropy=global_seed,
                                spawn_key=(env_index, reset_counter))
    return np.random.Generator(np.random.Philox(ss))


def sample_env_assets(pools: dict, configs: list, rng: np.random.Generator,
                      env_index: int = 0) -> list:
    """Draw each class's obstacles for one environment, with replacement.

    Instances are created at the origin; poses are assigned by
    randomize_pose. Raises UnknownClassError for a config naming a class
    missing from the pools.
    """
    instances = []
    for cfg in configs:
        if cfg.name not in pools:
            raise UnknownClassError(f"class '{cfg.name}' not found in asset pools")
        pool = pools[cfg.name]
        picks = rng.integers(0, len(pool), size=cfg.count_per_env)
        for k in picks:
            instances.append(AssetInstance(
                prototype=pool[int(k)],
                position=np.zeros(3),
                rotation=np.array([1.0, 0.0, 0.0, 0.0]),
                segmentation_id=cfg.segmentation_id,
                env_index=env_index,
                class_name=cfg.name,
                collision_enabled=cfg.collision_enabled,
            ))
    return instances


def randomize_pose(inst: AssetInstance, cfg: AssetClassConfig,
                   env_bounds: np.ndarray,
                   rng: np.random.Generator) -> AssetInstance:
    """Sample a fresh pose for one instance inside the fractional bounds.

    Three position uniforms are always drawn (frozen components override the
    draw afterwards, keeping the stream layout independent of the freeze
    configuration), followed by three euler uniforms.
    """
    env_bounds = np.asarray(env_bounds, dtype=np.float64)
    u = rng.uniform(0.0, 1.0, size=3)
    frac = cfg.position_min + u * (cfg.position_max - cfg.position_min)
    position = frac * env_bounds
    for i, const in enumerate(cfg.frozen):
        if const is not None:
            position[i] = const
    e = rng.uniform(0.0, 1.0, size=3)
    euler = cfg.euler_min + e * (cfg.euler_max - cfg.euler_min)
    rotation = se3.rot_zyx(euler[0], euler[1], euler[2])
    return AssetInstance(prototype=inst.prototype, position=position,
                         rotation=rotation,
                         segmentation_id=inst.segmentation_id,
                         env_index=inst.env_index,
                         class_name=inst.class_name,
                         collision_enabled=inst.collision_enabled)


@dataclass
class TreeConfig:
    """Recursive branching-cylinder tree parameters."""

    trunk_length: float = 2.0
    trunk_radius: float = 0.08
    branch_factor: int = 2
    depth: int = 3
    length_decay: float = 0.7
    radius_decay: float = 0.6
    angle_range: float = 0.7  # rad; branch pitch/yaw drawn in +- this
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if not 0.0 < self.length_decay <= 1.0 or not 0.0 < self.radius_decay <= 1.0:
            raise ValueError("decays must lie in (0, 1]")
        if self.branch_factor < 0:
            raise ValueError("branch_factor must be >= 0")
        if self.trunk_length <= 0.0 or self.trunk_radius <= 0.0:
            raise ValueError("trunk dimensions must be positive")

    @property
    def primitive_count(self) -> int:
        if self.branch_factor == 1:
            return self.depth
        return sum(self.branch_factor ** k for k in range(self.depth))


def generate_tree(cfg: TreeConfig) -> tuple:
    """Procedurally grow a branching-cylinder tree.

    The trunk stands at the asset origin along +z; every node sprouts
    branch_factor children at its tip, with lengths and radii scaled by the
    decay factors and branch pitch/yaw drawn uniformly in +-angle_range.
    Returns (prototype, urdf_text); the text reparses to the identical
    prototype via parse_urdf_subset.
    """
    count = cfg.primitive_count
    if count > MAX_TREE_PRIMITIVES:
        raise TooManyPrimitivesError(
            f"tree would contain {count} primitives (limit {MAX_TREE_PRIMITIVES})")

    rng = np.random.default_rng(cfg.seed)
    links = []   # (name, radius, length)
    joints = []  # (parent, child, z_offset, pitch, yaw)
    counter = [0]

    def grow(parent_name, parent_length, length, radius, level):
        name = f"n{counter[0]}"
        counter[0] += 1
        links.append((name, radius, length))
        if parent_name is not None:
            pitch = rng.uniform(-cfg.angle_range, cfg.angle_range)
            yaw = rng.uniform(-cfg.angle_range, cfg.angle_range)
            joints.append((parent_name, name, parent_length, pitch, yaw))
        if level + 1 < cfg.depth:
            for _ in range(cfg.branch_factor):
                grow(name, length, length * cfg.length_decay,
                     radius * cfg.radius_decay, level + 1)

    grow(None, 0.0, cfg.trunk_length, cfg.trunk_radius, 0)

    parts = [f'<robot name="tree_{cfg.seed}">']
    for name, radius, length in links:
        parts.append(
            f'  <link name="{name}">\n'
            f'    <collision>\n'
            f'      <origin xyz="0 0 {length / 2.0!r}" rpy="0 0 0"/>\n'
            f'      <geometry>\n'
            f'        <cylinder radius="{radius!r}" length="{length!r}"/>\n'
            f'      </geometry>\n'
            f'    </collision>\n'
            f'  </link>')
    for parent, child, z_off, pitch, yaw in joints:
        parts.append(
            f'  <joint name="{parent}_{child}" type="fixed">\n'
            f'    <parent link="{parent}"/>\n'
            f'    <child link="{child}"/>\n'
            f'    <origin xyz="0 0 {z_off!r}" rpy="0 {pitch!r} {yaw!r}"/>\n'
            f'  </joint>')
    parts.append("</robot>")
    text = "\n".join(parts) + "\n"

    prototype = parse_urdf_subset(text, source=f"tree(seed={cfg.seed})",
                                  class_name="tree")
    return prototype, text
