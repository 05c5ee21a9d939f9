"""Atomistic geometry for step-bent armchair graphene nanoribbon devices.

Coordinates are in nm: x runs across the ribbon width, z along the
transport axis, y out of plane.  A flat ribbon lies in the x-z plane with
every surface normal along +y.  Bending maps the channel onto a step
profile in the (z, y) plane: flat margin, arc up, straight incline, arc
down, flat margin.  The arcs are treated as segments of a carbon-nanotube
wall, so atoms inside an arc sit on a slightly enlarged placement circle
that keeps bond lengths at the flat value instead of shortening them to
chords.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

A_CC_DEFAULT = 0.142  # C-C bond length, nm

REGION_LEFT_LEAD = "left_lead"
REGION_CHANNEL = "channel"
REGION_RIGHT_LEAD = "right_lead"

# Nearest-neighbor search radius in units of a_cc.  Second neighbors sit at
# sqrt(3) a_cc, so anything in (1.1, 1.7) would work for a mildly strained
# lattice.
NEIGHBOR_CUTOFF = 1.1


class ClampWarning(UserWarning):
    """Requested (H, CR, theta) is infeasible; theta was reduced."""


class Family(NamedTuple):
    label: str
    max_gap: bool


def classify_family(n_a: int) -> Family:
    """Map the dimer-line count onto its width family (3p, 3p+1, 3p+2).

    The 3p+1 family carries the largest band gap in nearest-neighbor
    tight binding; 3p+2 is quasi-metallic.
    """
    if n_a < 2:
        raise ValueError(f"n_a must be >= 2, got {n_a}")
    label = {0: "3p", 1: "3p+1", 2: "3p+2"}[n_a % 3]
    return Family(label, max_gap=(label == "3p+1"))


@dataclass(frozen=True)
class RibbonSpec:
    """Dimensions of an armchair ribbon device.

    n_a              dimer lines across the width
    n_cells_channel  translational cells in the channel
    n_cells_lead     cells kept explicitly in each lead block
    a_cc             C-C bond length (nm)
    """

    n_a: int
    n_cells_channel: int
    n_cells_lead: int = 1
    a_cc: float = A_CC_DEFAULT

    def __post_init__(self):
        if self.n_a < 2:
            raise ValueError(f"n_a must be >= 2, got {self.n_a}")
        if self.n_cells_channel < 1:
            raise ValueError(
                f"n_cells_channel must be >= 1, got {self.n_cells_channel}"
            )
        if self.n_cells_lead < 1:
            raise ValueError(f"n_cells_lead must be >= 1, got {self.n_cells_lead}")
        if not self.a_cc > 0:
            raise ValueError(f"a_cc must be positive, got {self.a_cc}")

    @property
    def width(self) -> float:
        """Ribbon width (n_a - 1) * sqrt(3)/2 * a_cc, nm."""
        return (self.n_a - 1) * (math.sqrt(3.0) / 2.0) * self.a_cc

    @property
    def cell_length(self) -> float:
        """Translational period along the transport axis, nm."""
        return 3.0 * self.a_cc

    @property
    def atoms_per_cell(self) -> int:
        return 2 * self.n_a

    @property
    def channel_length(self) -> float:
        return self.n_cells_channel * self.cell_length

    @property
    def n_layers(self) -> int:
        return self.n_cells_channel + 2 * self.n_cells_lead


@dataclass(frozen=True)
class BendProfile:
    """Resolved step profile in the (z, y) plane.

    All lengths in nm, angles in degrees.  theta_eff_deg is the realized
    arc angle; it equals bend_angle_deg unless the requested step height
    was too small for two full arcs, in which case the angle was clamped
    and incline_length is zero.
    """

    step_height: float
    curvature_radius: float
    bend_angle_deg: float
    theta_eff_deg: float
    incline_length: float
    flat_margin: float
    channel_length: float
    clamped: bool

    @property
    def theta_eff_rad(self) -> float:
        return math.radians(self.theta_eff_deg)

    @property
    def arc_length(self) -> float:
        """Length of one arc, nm."""
        return self.curvature_radius * self.theta_eff_rad

    @property
    def profile_length(self) -> float:
        """Deformed span (both arcs plus incline), nm."""
        return 2.0 * self.arc_length + self.incline_length

    @property
    def height_effective(self) -> float:
        """Rise actually realized by the profile, nm."""
        th = self.theta_eff_rad
        return (
            2.0 * self.curvature_radius * (1.0 - math.cos(th))
            + self.incline_length * math.sin(th)
        )

    @property
    def is_flat(self) -> bool:
        return self.theta_eff_deg == 0.0


def resolve_profile(
    step_height: float,
    curvature_radius: float,
    bend_angle_deg: float,
    channel_length: float,
) -> BendProfile:
    """Turn (H, CR, theta) into a concrete step profile.

    The incline length follows from H = 2 CR (1 - cos theta) + L sin theta.
    If H is smaller than the rise of the two arcs alone, theta is clamped
    to arccos(1 - H / (2 CR)) with a ClampWarning and the incline dropped.
    Remaining channel length is split into equal flat margins; a profile
    longer than the channel is an error.
    """
    if not curvature_radius > 0:
        raise ValueError(f"curvature radius must be positive, got {curvature_radius}")
    if step_height < 0:
        raise ValueError(f"step height must be >= 0, got {step_height}")
    if not 0.0 <= bend_angle_deg <= 90.0:
        raise ValueError(f"bend angle must lie in [0, 90] deg, got {bend_angle_deg}")
    if not channel_length > 0:
        raise ValueError(f"channel length must be positive, got {channel_length}")

    if step_height == 0.0:
        return BendProfile(
            step_height=0.0,
            curvature_radius=curvature_radius,
            bend_angle_deg=bend_angle_deg,
            theta_eff_deg=0.0,
            incline_length=0.0,
            flat_margin=channel_length / 2.0,
            channel_length=channel_length,
            clamped=False,
        )
    if bend_angle_deg == 0.0:
        raise ValueError("bend angle must be positive for a nonzero step height")

    theta = math.radians(bend_angle_deg)
    arc_rise = 2.0 * curvature_radius * (1.0 - math.cos(theta))
    if step_height < arc_rise * (1.0 - 1e-12):
        theta_eff = math.acos(1.0 - step_height / (2.0 * curvature_radius))
        warnings.warn(
            f"step height {step_height:g} nm is below the arc rise "
            f"{arc_rise:g} nm; clamping to theta_eff="
            f"{math.degrees(theta_eff):.4f} deg with no incline",
            ClampWarning,
            stacklevel=2,
        )
        incline = 0.0
        clamped = True
    else:
        theta_eff = theta
        incline = max(0.0, (step_height - arc_rise) / math.sin(theta))
        clamped = False

    profile_length = 2.0 * curvature_radius * theta_eff + incline
    if profile_length > channel_length * (1.0 + 1e-12):
        raise ValueError(
            f"profile too long: arcs plus incline span {profile_length:.4f} nm "
            f"but the channel is only {channel_length:.4f} nm"
        )
    margin = max(0.0, (channel_length - profile_length) / 2.0)
    return BendProfile(
        step_height=step_height,
        curvature_radius=curvature_radius,
        bend_angle_deg=bend_angle_deg,
        theta_eff_deg=math.degrees(theta_eff),
        incline_length=incline,
        flat_margin=margin,
        channel_length=channel_length,
        clamped=clamped,
    )


@dataclass
class AtomSite:
    """One carbon site: position and local surface normal (nm, unit)."""

    position: np.ndarray
    normal: np.ndarray
    sublattice: str
    layer_index: int
    region: str


@dataclass
class DeviceGeometry:
    """Atom positions, normals and bond list for one device.

    Sites are ordered layer-major along the transport axis, so orbital
    index within a layer is (site index - layer * 2 n_a).  Bonds hold
    (i, j) pairs with i < j and the corresponding distances.
    """

    spec: RibbonSpec
    profile: BendProfile | None
    positions: np.ndarray
    normals: np.ndarray
    sublattices: np.ndarray
    layer_index: np.ndarray
    region: np.ndarray
    bond_pairs: np.ndarray
    bond_lengths: np.ndarray

    @property
    def n_sites(self) -> int:
        return self.positions.shape[0]

    @property
    def n_layers(self) -> int:
        return self.spec.n_layers

    @property
    def sites(self) -> list[AtomSite]:
        return [
            AtomSite(
                position=self.positions[i],
                normal=self.normals[i],
                sublattice=str(self.sublattices[i]),
                layer_index=int(self.layer_index[i]),
                region=str(self.region[i]),
            )
            for i in range(self.n_sites)
        ]

    def fingerprint(self) -> dict:
        """Geometry summary carried into spectra and output files."""
        if self.profile is None or self.profile.is_flat:
            h, cr, te = 0.0, 0.0, 0.0
        else:
            h = self.profile.step_height
            cr = self.profile.curvature_radius
            te = self.profile.theta_eff_deg
        return {
            "n_a": self.spec.n_a,
            "h_nm": h,
            "cr_nm": cr,
            "theta_eff_deg": te,
        }

    def max_bond_strain(self) -> float:
        """Largest relative bond-length deviation from a_cc."""
        return float(np.max(np.abs(self.bond_lengths - self.spec.a_cc)) / self.spec.a_cc)


def _neighbor_bonds(positions: np.ndarray, a_cc: float) -> tuple[np.ndarray, np.ndarray]:
    tree = cKDTree(positions)
    pairs = tree.query_pairs(r=NEIGHBOR_CUTOFF * a_cc, output_type="ndarray")
    if pairs.size == 0:
        return np.empty((0, 2), dtype=np.int64), np.empty(0)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    pairs = pairs[order].astype(np.int64)
    delta = positions[pairs[:, 1]] - positions[pairs[:, 0]]
    return pairs, np.linalg.norm(delta, axis=1)


def build_flat_ribbon(spec: RibbonSpec) -> DeviceGeometry:
    """Construct the flat device: leads, channel, normals along +y.

    Each translational cell holds 2 n_a atoms on n_a dimer lines; even
    lines carry atoms at local z = (0, a_cc), odd lines at
    (1.5 a_cc, 2.5 a_cc), which tiles the honeycomb lattice with the
    armchair edge along z.
    """
    a = spec.a_cc
    half_row = math.sqrt(3.0) / 2.0 * a
    n_layers = spec.n_layers

    positions = np.zeros((n_layers * spec.atoms_per_cell, 3))
    sublattices = np.empty(positions.shape[0], dtype="<U1")
    layer_index = np.zeros(positions.shape[0], dtype=np.int64)

    k = 0
    for layer in range(n_layers):
        z0 = layer * spec.cell_length
        for line in range(spec.n_a):
            x = line * half_row
            if line % 2 == 0:
                za, zb = z0, z0 + a
            else:
                za, zb = z0 + 1.5 * a, z0 + 2.5 * a
            positions[k] = (x, 0.0, za)
            positions[k + 1] = (x, 0.0, zb)
            sublattices[k] = "A"
            sublattices[k + 1] = "B"
            layer_index[k : k + 2] = layer
            k += 2

    normals = np.zeros_like(positions)
    normals[:, 1] = 1.0

    region = np.empty(positions.shape[0], dtype="<U10")
    nl, nc = spec.n_cells_lead, spec.n_cells_channel
    region[layer_index < nl] = REGION_LEFT_LEAD
    region[(layer_index >= nl) & (layer_index < nl + nc)] = REGION_CHANNEL
    region[layer_index >= nl + nc] = REGION_RIGHT_LEAD

    pairs, lengths = _neighbor_bonds(positions, a)
    return DeviceGeometry(
        spec=spec,
        profile=None,
        positions=positions,
        normals=normals,
        sublattices=sublattices,
        layer_index=layer_index,
        region=region,
        bond_pairs=pairs,
        bond_lengths=lengths,
    )


def _placement_radius(curvature_radius: float, a_cc: float) -> float:
    """Radius of the circle the atoms actually sit on inside an arc.

    Chosen so a bond spanning arc length a_cc keeps chord length a_cc,
    the same convention as an ideal nanotube wall.  Slightly larger than
    the profile radius; identical in the flat limit.
    """
    u = a_cc / (2.0 * curvature_radius)
    return a_cc / (2.0 * math.sin(u))


def _step_curve(profile: BendProfile, s: np.ndarray, a_cc: float):
    """Map arc length s (measured from channel entry) to (z, y, phi).

    z is the transport coordinate of the mapped point, y its height and
    phi the local tangent angle.  Segments: flat margin, arc up, incline,
    arc down, flat margin; tangent-continuous by construction.
    """
    th = profile.theta_eff_rad
    cr = profile.curvature_radius
    arc = profile.arc_length
    li = profile.incline_length
    m = profile.flat_margin
    rp = _placement_radius(cr, a_cc)

    b1 = m
    b2 = m + arc
    b3 = b2 + li
    b4 = b3 + arc

    sin_t, cos_t = math.sin(th), math.cos(th)
    z2, y2 = b1 + rp * sin_t, rp * (1.0 - cos_t)
    z3, y3 = z2 + li * cos_t, y2 + li * sin_t
    z4, y4 = z3 + rp * sin_t, y3 + rp * (1.0 - cos_t)

    s = np.asarray(s, dtype=float)
    z = np.empty_like(s)
    y = np.empty_like(s)
    phi = np.empty_like(s)

    seg = np.searchsorted([b1, b2, b3, b4], s, side="right")

    m0 = seg == 0
    z[m0], y[m0], phi[m0] = s[m0], 0.0, 0.0

    m1 = seg == 1
    p = (s[m1] - b1) / cr
    z[m1] = b1 + rp * np.sin(p)
    y[m1] = rp * (1.0 - np.cos(p))
    phi[m1] = p

    m2 = seg == 2
    t = s[m2] - b2
    z[m2] = z2 + t * cos_t
    y[m2] = y2 + t * sin_t
    phi[m2] = th

    m3 = seg == 3
    p = th - (s[m3] - b3) / cr
    z[m3] = z3 + rp * (sin_t - np.sin(p))
    y[m3] = y3 + rp * (np.cos(p) - cos_t)
    phi[m3] = p

    m4 = seg == 4
    z[m4] = z4 + (s[m4] - b4)
    y[m4] = y4
    phi[m4] = 0.0

    return z, y, phi


def apply_step_deformation(flat: DeviceGeometry, profile: BendProfile) -> DeviceGeometry:
    """Bend a flat device onto the step profile.

    Channel atoms follow the profile curve by arc length; x is unchanged
    and normals rotate with the local tangent.  The left lead is untouched,
    the right lead is translated rigidly so it stays coplanar with the
    upper margin.  A profile with theta_eff = 0 returns an exact copy.
    """
    if flat.profile is not None:
        raise ValueError("apply_step_deformation expects a flat input device")
    spec = flat.spec
    if abs(profile.channel_length - spec.channel_length) > 1e-9:
        raise ValueError(
            f"profile was resolved for channel length {profile.channel_length:.4f} nm, "
            f"device has {spec.channel_length:.4f} nm"
        )

    if profile.is_flat:
        pairs = flat.bond_pairs.copy()
        return DeviceGeometry(
            spec=spec,
            profile=profile,
            positions=flat.positions.copy(),
            normals=flat.normals.copy(),
            sublattices=flat.sublattices.copy(),
            layer_index=flat.layer_index.copy(),
            region=flat.region.copy(),
            bond_pairs=pairs,
            bond_lengths=flat.bond_lengths.copy(),
        )

    if profile.curvature_radius < spec.a_cc:
        raise ValueError(
            f"curvature radius {profile.curvature_radius:g} nm is below the bond "
            f"length {spec.a_cc:g} nm; the wall cannot be mapped"
        )

    z_start = spec.n_cells_lead * spec.cell_length
    length = spec.channel_length
    positions = flat.positions.copy()
    normals = flat.normals.copy()

    chan = flat.region == REGION_CHANNEL
    s = np.clip(flat.positions[chan, 2] - z_start, 0.0, length)
    z_loc, y_loc, phi = _step_curve(profile, s, spec.a_cc)
    positions[chan, 1] = y_loc
    positions[chan, 2] = z_start + z_loc
    normals[chan, 1] = np.cos(phi)
    normals[chan, 2] = -np.sin(phi)

    z_end, y_end, _ = _step_curve(profile, np.array([length]), spec.a_cc)
    shift = np.array([0.0, y_end[0], z_end[0] - length])
    right = flat.region == REGION_RIGHT_LEAD
    positions[right] = flat.positions[right] + shift

    pairs = flat.bond_pairs.copy()
    delta = positions[pairs[:, 1]] - positions[pairs[:, 0]]
    return DeviceGeometry(
        spec=spec,
        profile=profile,
        positions=positions,
        normals=normals,
        sublattices=flat.sublattices.copy(),
        layer_index=flat.layer_index.copy(),
        region=flat.region.copy(),
        bond_pairs=pairs,
        bond_lengths=np.linalg.norm(delta, axis=1),
    )


def export_xyz(geom: DeviceGeometry, path) -> None:
    """Write the device as XYZ with coordinates in Angstrom.

    The comment line records n_a, the step height, curvature radius and
    the realized arc angle so bent exports are self-describing.
    """
    fp = geom.fingerprint()
    comment = (
        f"n_a={fp['n_a']} H={fp['h_nm']:.6f} CR={fp['cr_nm']:.6f} "
        f"theta_eff={fp['theta_eff_deg']:.6f} units=Angstrom"
    )
    lines = [str(geom.n_sites), comment]
    for p in geom.positions:
        lines.append(f"C {p[0] * 10.0:.8f} {p[1] * 10.0:.8f} {p[2] * 10.0:.8f}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def geometry_to_json(geom: DeviceGeometry) -> str:
    """Serialize a device (spec, profile, sites, bonds) to JSON text."""
    profile = None
    if geom.profile is not None:
        profile = {
            "step_height": geom.profile.step_height,
            "curvature_radius": geom.profile.curvature_radius,
            "bend_angle_deg": geom.profile.bend_angle_deg,
            "theta_eff_deg": geom.profile.theta_eff_deg,
            "incline_length": geom.profile.incline_length,
            "flat_margin": geom.profile.flat_margin,
            "channel_length": geom.profile.channel_length,
            "clamped": geom.profile.clamped,
        }
    doc = {
        "spec": {
            "n_a": geom.spec.n_a,
            "n_cells_channel": geom.spec.n_cells_channel,
            "n_cells_lead": geom.spec.n_cells_lead,
            "a_cc": geom.spec.a_cc,
        },
        "profile": profile,
        "sites": [
            {
                "position": [float(v) for v in geom.positions[i]],
                "normal": [float(v) for v in geom.normals[i]],
                "sublattice": str(geom.sublattices[i]),
                "layer_index": int(geom.layer_index[i]),
                "region": str(geom.region[i]),
            }
            for i in range(geom.n_sites)
        ],
        "bonds": [
            [int(i), int(j), float(d)]
            for (i, j), d in zip(geom.bond_pairs, geom.bond_lengths)
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=2)


def geometry_from_json(text: str) -> DeviceGeometry:
    doc = json.loads(text)
    spec = RibbonSpec(**doc["spec"])
    profile = BendProfile(**doc["profile"]) if doc["profile"] is not None else None
    sites = doc["sites"]
    positions = np.array([s["position"] for s in sites])
    normals = np.array([s["normal"] for s in sites])
    sublattices = np.array([s["sublattice"] for s in sites], dtype="<U1")
    layer_index = np.array([s["layer_index"] for s in sites], dtype=np.int64)
    region = np.array([s["region"] for s in sites], dtype="<U10")
    bonds = doc["bonds"]
    pairs = np.array([[b[0], b[1]] for b in bonds], dtype=np.int64).reshape(-1, 2)
    lengths = np.array([b[2] for b in bonds])
    return DeviceGeometry(
        spec=spec,
        profile=profile,
        positions=positions,
        normals=normals,
        sublattices=sublattices,
        layer_index=layer_index,
        region=region,
        bond_pairs=pairs,
        bond_lengths=lengths,
    )
