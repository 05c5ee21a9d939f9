"""Curvature-aware tight-binding Hamiltonian for ribbon devices.

One p orbital per carbon atom.  Hoppings follow a two-center
Slater-Koster decomposition of the p-p bond along the local surface
normals, so a flat sheet reduces exactly to the usual nearest-neighbor
pi model while bent regions mix in the sigma channel.  Energies in eV,
lengths in nm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    A_CC_DEFAULT,
    AtomSite,
    DeviceGeometry,
    RibbonSpec,
    REGION_CHANNEL,
    REGION_LEFT_LEAD,
    REGION_RIGHT_LEAD,
    build_flat_ribbon,
)


@dataclass(frozen=True)
class HoppingModel:
    """Slater-Koster p-orbital parameters.

    v_pp_pi / v_pp_sigma  two-center integrals at d = a_cc (eV)
    decay_beta            exponential bond-length decay constant
    cutoff                hopping range in units of a_cc
    """

    v_pp_pi: float = -2.7
    v_pp_sigma: float = 4.7
    decay_beta: float = 3.0
    cutoff: float = 1.1

    def __post_init__(self):
        if not self.v_pp_pi < 0:
            raise ValueError(f"v_pp_pi must be negative, got {self.v_pp_pi}")
        if not self.v_pp_sigma > 0:
            raise ValueError(f"v_pp_sigma must be positive, got {self.v_pp_sigma}")
        if not 1.0 < self.cutoff < 1.3:
            raise ValueError(
                f"cutoff must lie in (1.0, 1.3) a_cc to keep nearest neighbors "
                f"only, got {self.cutoff}"
            )
        if self.decay_beta < 0:
            raise ValueError(f"decay_beta must be >= 0, got {self.decay_beta}")


def _hopping_batch(
    delta: np.ndarray,
    normal_i: np.ndarray,
    normal_j: np.ndarray,
    model: HoppingModel,
    a_cc: float,
) -> np.ndarray:
    """Hoppings for bond vectors delta (rows) with per-site normals."""
    d = np.linalg.norm(delta, axis=1)
    if np.any(d == 0):
        raise ValueError("zero-length bond vector")
    unit = delta / d[:, None]
    ci = np.einsum("ij,ij->i", normal_i, unit)
    cj = np.einsum("ij,ij->i", normal_j, unit)
    nn = np.einsum("ij,ij->i", normal_i, normal_j)
    radial = np.exp(-model.decay_beta * (d / a_cc - 1.0))
    return (model.v_pp_sigma * ci * cj + model.v_pp_pi * (nn - ci * cj)) * radial


def hopping(
    site_i: AtomSite,
    site_j: AtomSite,
    model: HoppingModel,
    a_cc: float = A_CC_DEFAULT,
) -> float:
    """Hopping integral between two sites (eV).

    Raises if the pair is farther apart than cutoff * a_cc; by contract
    such matrix elements are exactly zero and never assembled.
    """
    delta = np.asarray(site_j.position, dtype=float) - np.asarray(
        site_i.position, dtype=float
    )
    d = float(np.linalg.norm(delta))
    if d > model.cutoff * a_cc:
        raise ValueError(
            f"sites are {d:.4f} nm apart, beyond cutoff {model.cutoff * a_cc:.4f} nm"
        )
    t = _hopping_batch(
        delta[None, :],
        np.asarray(site_i.normal, dtype=float)[None, :],
        np.asarray(site_j.normal, dtype=float)[None, :],
        model,
        a_cc,
    )
    return float(t[0])


@dataclass(frozen=True)
class BiasRamp:
    """Symmetric bias drop: leads shifted rigidly by +-eV_b/2, linear
    onsite ramp across the channel layers."""

    v_b: float
    e_fermi: float = 0.0

    @property
    def mu_left(self) -> float:
        return self.e_fermi + self.v_b / 2.0

    @property
    def mu_right(self) -> float:
        return self.e_fermi - self.v_b / 2.0

    def layer_shifts(self, n_lead: int, n_channel: int) -> np.ndarray:
        """Onsite shift (eV) for every device layer, left to right."""
        half = self.v_b / 2.0
        if n_channel == 1:
            ramp = np.array([0.0])
        else:
            ramp = half * (1.0 - 2.0 * np.arange(n_channel) / (n_channel - 1))
        return np.concatenate(
            [np.full(n_lead, half), ramp, np.full(n_lead, -half)]
        )


@dataclass
class BlockHamiltonian:
    """Block-tridiagonal device Hamiltonian plus lead principal blocks.

    onsite_blocks[i] is layer i, coupling_blocks[i] couples layer i to
    i+1.  lead_left / lead_right are (H00, H01) of the semi-infinite
    leads with any rigid bias shift already applied; H01 points along
    +z for both.
    """

    onsite_blocks: list[np.ndarray]
    coupling_blocks: list[np.ndarray]
    lead_left: tuple[np.ndarray, np.ndarray]
    lead_right: tuple[np.ndarray, np.ndarray]
    orbital_count: int

    @property
    def n_layers(self) -> int:
        return len(self.onsite_blocks)

    @property
    def n_orbitals(self) -> int:
        return self.n_layers * self.orbital_count

    def to_dense(self) -> np.ndarray:
        m = self.orbital_count
        n = self.n_orbitals
        h = np.zeros((n, n))
        for i, block in enumerate(self.onsite_blocks):
            h[i * m : (i + 1) * m, i * m : (i + 1) * m] = block
        for i, block in enumerate(self.coupling_blocks):
            h[i * m : (i + 1) * m, (i + 1) * m : (i + 2) * m] = block
            h[(i + 1) * m : (i + 2) * m, i * m : (i + 1) * m] = block.T

        return h


def _blocks_from_geometry(
    geom: DeviceGeometry, model: HoppingModel
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Onsite and coupling blocks from the bond list, no bias applied."""
    m = geom.spec.atoms_per_cell
    n_layers = geom.n_layers
    onsite = [np.zeros((m, m)) for _ in range(n_layers)]
    coupling = [np.zeros((m, m)) for _ in range(n_layers - 1)]

    if geom.bond_pairs.size == 0:
        return onsite, coupling

    i = geom.bond_pairs[:, 0]
    j = geom.bond_pairs[:, 1]
    within = geom.bond_lengths <= model.cutoff * geom.spec.a_cc
    i, j = i[within], j[within]
    delta = geom.positions[j] - geom.positions[i]
    t = _hopping_batch(delta, geom.normals[i], geom.normals[j], model, geom.spec.a_cc)

    li = geom.layer_index[i]
    lj = geom.layer_index[j]
    ri = i - li * m
    rj = j - lj * m
    span = lj - li
    if np.any(np.abs(span) > 1):
        bad = int(np.argmax(np.abs(span) > 1))
        raise ValueError(
            f"bond {int(i[bad])}-{int(j[bad])} spans non-adjacent layers "
            f"{int(li[bad])} and {int(lj[bad])}"
        )

    for b in range(t.size):
        if span[b] == 0:
            onsite[li[b]][ri[b], rj[b]] += t[b]
            onsite[li[b]][rj[b], ri[b]] += t[b]
        elif span[b] == 1:
            coupling[li[b]][ri[b], rj[b]] += t[b]
        else:
            coupling[lj[b]][rj[b], ri[b]] += t[b]
    return onsite, coupling


def lead_principal_blocks(
    spec: RibbonSpec, model: HoppingModel
) -> tuple[np.ndarray, np.ndarray]:
    """(H00, H01) of the pristine flat lead, no bias shift."""
    ref = build_flat_ribbon(
        RibbonSpec(
            n_a=spec.n_a, n_cells_channel=1, n_cells_lead=1, a_cc=spec.a_cc
        )
    )
    onsite, coupling = _blocks_from_geometry(ref, model)
    return onsite[0], coupling[0]


def assemble(
    geom: DeviceGeometry, model: HoppingModel, bias: BiasRamp | None = None
) -> BlockHamiltonian:
    """Build the block-tridiagonal Hamiltonian for a device under bias."""
    spec = geom.spec
    onsite, coupling = _blocks_from_geometry(geom, model)
    h00, h01 = lead_principal_blocks(spec, model)

    if bias is None:
        bias = BiasRamp(0.0)
    shifts = bias.layer_shifts(spec.n_cells_lead, spec.n_cells_channel)
    m = spec.atoms_per_cell
    eye = np.eye(m)
    onsite = [block + shifts[k] * eye for k, block in enumerate(onsite)]

    # Electrostatic lead shifts are +-eV_b/2 relative to equilibrium; the
    # Fermi level only moves the integration window, not the Hamiltonian.
    return BlockHamiltonian(
        onsite_blocks=onsite,
        coupling_blocks=coupling,
        lead_left=(h00 + (bias.v_b / 2.0) * eye, h01),
        lead_right=(h00 - (bias.v_b / 2.0) * eye, h01),
        orbital_count=m,
    )


def bloch_bands(h00: np.ndarray, h01: np.ndarray, ka: np.ndarray) -> np.ndarray:
    """Band energies of the periodic lead at dimensionless momenta ka.

    Returns an (n_k, m) array sorted ascending per k.  H(k) = H00 +
    H01 e^{i ka} + H01^T e^{-i ka}.
    """
    ka = np.asarray(ka, dtype=float)
    phase = np.exp(1j * ka)[:, None, None]
    hk = (
        h00[None, :, :]
        + h01[None, :, :] * phase
        + h01.conj().T[None, :, :] * np.conj(phase)
    )
    return np.linalg.eigvalsh(hk)


def band_edges(h00: np.ndarray, h01: np.ndarray, n_k: int = 513) -> np.ndarray:
    """Subband extrema (eV) sampled over half the Brillouin zone.

    Bands are even in k for these real-hopping leads, so [0, pi]
    suffices.  Used to locate band edges for gap checks and to split
    integration windows at transmission steps.
    """
    ka = np.linspace(0.0, math.pi, n_k)
    bands = bloch_bands(h00, h01, ka)
    edges = [bands[0], bands[-1]]
    diff = np.diff(bands, axis=0)
    turning = (diff[:-1] * diff[1:]) < 0
    for b in range(bands.shape[1]):
        idx = np.nonzero(turning[:, b])[0] + 1
        if idx.size:
            edges.append(bands[idx, b])
    return np.unique(np.concatenate([np.atleast_1d(e) for e in edges]))


def mode_count(
    h00: np.ndarray, h01: np.ndarray, energies: np.ndarray, n_k: int = 2049
) -> np.ndarray:
    """Propagating-mode count per energy, from the band structure.

    Counts band crossings of each energy over half the Brillouin zone,
    which equals the number of right-moving channels.  Serves as the
    independent check on ballistic transmission plateaus.
    """
    ka = np.linspace(0.0, math.pi, n_k)
    bands = bloch_bands(h00, h01, ka)
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    counts = np.zeros(energies.size, dtype=np.int64)
    for n, e in enumerate(energies):
        above = bands > e
        counts[n] = int(np.count_nonzero(above[1:] != above[:-1]))
    return counts
