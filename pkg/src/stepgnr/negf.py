"""Green's-function transport: lead surface functions, transmission, LDOS.

Two independent transmission paths are kept on purpose: a dense
full-matrix inverse and a recursive layer sweep.  They must agree to
1e-10 and the dense path stays available as a cross-check at any size.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import DeviceGeometry, REGION_CHANNEL
from .model import BlockHamiltonian

ETA_TRANSMISSION = 1e-4  # eV, default broadening for transmission
ETA_LDOS = 5e-3  # eV, default broadening for LDOS maps

DECIMATION_TOL = 1e-12
DECIMATION_MAX_ITER = 100


class NumericalError(RuntimeError):
    """A linear-algebra step produced an unusable result."""


class ConvergenceError(NumericalError):
    """An iterative scheme hit its iteration cap before converging."""


@dataclass(frozen=True)
class EnergyGrid:
    """Uniform energy grid (eV) with a positive broadening eta."""

    e_min: float
    e_max: float
    n_points: int
    eta: float = ETA_TRANSMISSION

    def __post_init__(self):
        if not self.e_max > self.e_min:
            raise ValueError(
                f"need e_max > e_min, got [{self.e_min}, {self.e_max}]"
            )
        if self.n_points < 2:
            raise ValueError(f"n_points must be >= 2, got {self.n_points}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")

    @property
    def energies(self) -> np.ndarray:
        return np.linspace(self.e_min, self.e_max, self.n_points)


def surface_gf(
    h00: np.ndarray,
    h01: np.ndarray,
    energy: float,
    eta: float,
    tol: float = DECIMATION_TOL,
    max_iter: int = DECIMATION_MAX_ITER,
    with_iterations: bool = False,
):
    """Surface Green's function of a semi-infinite lead by decimation.

    h01 couples each principal layer to the next one going away from the
    surface, so the left lead of a device is obtained by passing H01^T.
    Each sweep doubles the effective chain depth; convergence is declared
    when both renormalized couplings drop below tol in Frobenius norm.
    """
    z = (energy + 1j * eta) * np.eye(h00.shape[0])
    eps = h00.astype(complex)
    eps_s = h00.astype(complex)
    alpha = h01.astype(complex)
    beta = h01.T.conj().astype(complex)

    for iteration in range(max_iter):
        residual = np.linalg.norm(alpha) + np.linalg.norm(beta)
        if residual < tol:
            break
        try:
            g_bulk = np.linalg.inv(z - eps)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"singular bulk inverse at E={energy:g} eV, eta={eta:g}"
            ) from exc
        agb = alpha @ g_bulk @ beta
        bga = beta @ g_bulk @ alpha
        eps_s = eps_s + agb
        eps = eps + agb + bga
        alpha = alpha @ g_bulk @ alpha
        beta = beta @ g_bulk @ beta
    else:
        raise ConvergenceError(
            f"surface decimation not converged after {max_iter} iterations "
            f"at E={energy:g} eV, eta={eta:g} (residual {residual:.3e})"
        )

    try:
        g_surface = np.linalg.inv(z - eps_s)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"singular surface inverse at E={energy:g} eV, eta={eta:g}"
        ) from exc
    if with_iterations:
        return g_surface, iteration
    return g_surface


def self_energies(
    gs_left: np.ndarray,
    gs_right: np.ndarray,
    tau_left: np.ndarray,
    tau_right: np.ndarray,
):
    """Lead self-energies and broadening matrices.

    tau_* couple the outermost device layers to the lead surfaces
    (device row, lead column).  Returns (sigma_l, sigma_r, gamma_l,
    gamma_r) with gamma = i (sigma - sigma^dagger).
    """
    for tau, gs, side in ((tau_left, gs_left, "left"), (tau_right, gs_right, "right")):
        if tau.shape[1] != gs.shape[0]:
            raise ValueError(
                f"{side} coupling is {tau.shape} against surface block {gs.shape}"
            )
    sigma_l = tau_left @ gs_left @ tau_left.T.conj()
    sigma_r = tau_right @ gs_right @ tau_right.T.conj()
    gamma_l = 1j * (sigma_l - sigma_l.T.conj())
    gamma_r = 1j * (sigma_r - sigma_r.T.conj())
    return sigma_l, sigma_r, gamma_l, gamma_r


def lead_self_energies(
    ham: BlockHamiltonian,
    energy: float,
    eta: float,
    tol: float = DECIMATION_TOL,
    max_iter: int = DECIMATION_MAX_ITER,
):
    """Self-energies of both leads attached to the device ends."""
    h00_l, h01_l = ham.lead_left
    h00_r, h01_r = ham.lead_right
    gs_l = surface_gf(h00_l, h01_l.T.conj(), energy, eta, tol, max_iter)
    gs_r = surface_gf(h00_r, h01_r, energy, eta, tol, max_iter)
    # device layer 0 couples to the left surface via H01^T, the last
    # layer to the right surface via H01
    return self_energies(gs_l, gs_r, h01_l.T.conj(), h01_r)


def _surface_gf_many(
    h00: np.ndarray,
    h01: np.ndarray,
    energies: np.ndarray,
    eta: float,
    tol: float = DECIMATION_TOL,
    max_iter: int = DECIMATION_MAX_ITER,
    h10: np.ndarray | None = None,
) -> np.ndarray:
    """Stacked surface Green's functions, one slice per energy.

    Same decimation as surface_gf run on a whole energy batch at once;
    converged slices are frozen out of the iteration, so each slice sees
    the update sequence the scalar routine would apply.  h00 and h01 may
    be single blocks or per-energy stacks (nE, n, n).  h10 overrides the
    downward coupling for chains where it is not the conjugate transpose
    of h01 (renormalized effective chains).
    """
    e_arr = np.asarray(energies, dtype=float)
    h00c = np.asarray(h00, dtype=complex)
    h01c = np.asarray(h01, dtype=complex)
    n = h00c.shape[-1]
    out = np.empty((e_arr.size, n, n), dtype=complex)
    if e_arr.size == 0:
        return out
    z = (e_arr + 1j * eta)[:, None, None] * np.eye(n)
    eps = np.broadcast_to(h00c, out.shape).copy()
    eps_s = eps.copy()
    alpha = np.broadcast_to(h01c, out.shape).copy()
    if h10 is None:
        beta = np.conj(np.swapaxes(alpha, 1, 2)).copy()
    else:
        beta = np.broadcast_to(np.asarray(h10, dtype=complex), out.shape).copy()
    active = np.arange(e_arr.size)

    for _ in range(max_iter):
        residual = np.linalg.norm(alpha, axis=(1, 2)) + np.linalg.norm(beta, axis=(1, 2))
        done = residual < tol
        if np.any(done):
            try:
                out[active[done]] = np.linalg.inv(z[active[done]] - eps_s[done])
            except np.linalg.LinAlgError as exc:
                raise NumericalError(
                    f"singular surface inverse in decimation batch (eta={eta:g})"
                ) from exc
            keep = ~done
            active = active[keep]
            if active.size == 0:
                break
            eps, eps_s = eps[keep], eps_s[keep]
            alpha, beta = alpha[keep], beta[keep]
        try:
            g_bulk = np.linalg.inv(z[active] - eps)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"singular bulk inverse in decimation batch (eta={eta:g})"
            ) from exc
        ag = alpha @ g_bulk
        bg = beta @ g_bulk
        agb = ag @ beta
        eps_s = eps_s + agb
        eps = eps + agb + bg @ alpha
        alpha = ag @ alpha
        beta = bg @ beta
    else:
        raise ConvergenceError(
            f"surface decimation not converged after {max_iter} iterations "
            f"for {active.size} of {e_arr.size} energies "
            f"(first E={e_arr[active[0]]:g} eV, eta={eta:g})"
        )
    return out


def _plane_split(h00: np.ndarray, h01: np.ndarray):
    """Partition a principal layer into atomic planes from matrix sparsity.

    Planes are BFS levels of the intra-layer bond graph seeded by the
    atoms that receive inter-layer coupling.  Returns one index array per
    plane, ordered from the incoming face, or None when the layer does
    not separate into a chain with nearest-plane coupling only.
    """
    n = h00.shape[0]
    if h01.shape != h00.shape or n == 0:
        return None
    adj = np.abs(h00) > 0.0
    np.fill_diagonal(adj, False)
    hop = np.abs(h01) > 0.0
    seed = np.nonzero(np.any(hop, axis=0))[0]
    senders = np.nonzero(np.any(hop, axis=1))[0]
    if seed.size == 0:
        return None
    level = np.full(n, -1, dtype=int)
    level[seed] = 0
    frontier = seed
    depth = 0
    while frontier.size:
        nxt = np.nonzero(np.any(adj[frontier], axis=0) & (level < 0))[0]
        depth += 1
        level[nxt] = depth
        frontier = nxt
    n_planes = int(level.max()) + 1
    if np.any(level < 0) or n_planes < 2:
        return None
    if np.any(adj & (np.abs(level[:, None] - level[None, :]) > 1)):
        return None
    if np.any(level[senders] != n_planes - 1):
        return None
    return [np.nonzero(level == p)[0] for p in range(n_planes)]


def _surface_gf_planes(
    h00: np.ndarray,
    h01: np.ndarray,
    energies: np.ndarray,
    eta: float,
    tol: float,
    max_iter: int,
    planes,
) -> np.ndarray:
    """Surface Green's function restricted to the outermost plane.

    Eliminates the planes behind the surface plane of each principal
    layer exactly (they form a finite open chain), then decimates the
    resulting one-plane-per-cell effective chain.  Much cheaper than
    decimating full layer blocks and agrees with it to the decimation
    tolerance.  Returns an (nE, n0, n0) stack on planes[0].
    """
    e_arr = np.asarray(energies, dtype=float)
    p0 = planes[0]
    onsite = [np.asarray(h00[np.ix_(p, p)], dtype=complex) for p in planes]
    cup = [
        np.asarray(h00[np.ix_(planes[k], planes[k + 1])], dtype=complex)
        for k in range(len(planes) - 1)
    ]
    c_wrap = np.asarray(h01[np.ix_(planes[-1], p0)], dtype=complex)

    def z_minus(block: np.ndarray) -> np.ndarray:
        nb = block.shape[-1]
        return (e_arr + 1j * eta)[:, None, None] * np.eye(nb) - block

    inner_h = onsite[1:]
    inner_c = cup[1:]
    gl = [_block_inv(z_minus(inner_h[0]), "plane")]
    for u, hb in zip(inner_c, inner_h[1:]):
        gl.append(_block_inv(z_minus(hb) - np.conj(u.T) @ gl[-1] @ u, "plane"))
    g_deep = gl[-1]
    corner_up = gl[0]
    for u, g in zip(inner_c, gl[1:]):
        corner_up = corner_up @ u @ g
    gr = [_block_inv(z_minus(inner_h[-1]), "plane")]
    for u, hb in zip(inner_c[::-1], inner_h[-2::-1]):
        gr.append(_block_inv(z_minus(hb) - u @ gr[-1] @ np.conj(u.T), "plane"))
    g_near = gr[-1]
    corner_dn = gr[0]
    for u, g in zip(inner_c[::-1], gr[1:]):
        corner_dn = corner_dn @ np.conj(u.T) @ g

    # effective one-plane-per-cell chain.  Eliminating the interior at
    # complex z leaves a non-Hermitian chain: the downward hopping is
    # built from the opposite interior corner block, not the conjugate
    # transpose of the upward hopping.  The surface plane also lacks the
    # interior of a cell behind it, so its onsite differs from the bulk.
    h_surf = onsite[0] + cup[0] @ g_near @ np.conj(cup[0].T)
    h_bulk = h_surf + np.conj(c_wrap.T) @ g_deep @ c_wrap
    t_up = cup[0] @ corner_up @ c_wrap
    t_dn = np.conj(c_wrap.T) @ corner_dn @ np.conj(cup[0].T)
    gs_bulk = _surface_gf_many(h_bulk, t_up, e_arr, eta, tol, max_iter, h10=t_dn)
    gs0 = _block_inv(z_minus(h_surf) - t_up @ gs_bulk @ t_dn, "surface")

    # The interior elimination loses digits when z sits near a pole of
    # the open interior chain (for example a lead band crossing shifted
    # under bias).  Verify every energy against the full-cell Dyson
    # equation; its contraction step also polishes the healthy ones,
    # and the rest fall back to full-cell decimation.
    n = h00.shape[0]
    last = planes[-1]
    sigma_env = np.zeros((e_arr.size, n, n), dtype=complex)
    sigma_env[np.ix_(np.arange(e_arr.size), last, last)] = (
        c_wrap @ gs0 @ np.conj(c_wrap.T)
    )
    full = _block_inv(z_minus(h00) - sigma_env, "surface")
    gs_check = full[np.ix_(np.arange(e_arr.size), p0, p0)]
    err = np.max(np.abs(gs_check - gs0), axis=(1, 2))
    scale = np.maximum(1.0, np.max(np.abs(gs0), axis=(1, 2)))
    bad = np.nonzero(err > 1e-8 * scale)[0]
    if bad.size:
        redo = _surface_gf_many(h00, h01, e_arr[bad], eta, tol, max_iter)
        gs_check[bad] = redo[np.ix_(np.arange(bad.size), p0, p0)]
    return gs_check


def _self_energy_many(
    h00: np.ndarray,
    h01_into: np.ndarray,
    energies: np.ndarray,
    eta: float,
    tol: float,
    max_iter: int,
) -> np.ndarray:
    """Batched lead self-energy h01_into gs h01_into^dagger, (nE, m, m).

    h01_into is the coupling taken in the direction pointing into the
    lead; it doubles as the hopping of the semi-infinite chain.  Uses the
    plane-renormalized surface path when the principal layer supports it.
    """
    tau = np.asarray(h01_into, dtype=complex)
    planes = _plane_split(h00, h01_into)
    if planes is None:
        gs = _surface_gf_many(h00, h01_into, energies, eta, tol, max_iter)
        return tau @ gs @ np.conj(tau.T)
    gs0 = _surface_gf_planes(h00, h01_into, energies, eta, tol, max_iter, planes)
    t_sub = tau[:, planes[0]]
    return t_sub @ gs0 @ np.conj(t_sub.T)


def _lead_terms_many(
    ham: BlockHamiltonian,
    energies: np.ndarray,
    eta: float,
    tol: float,
    max_iter: int,
):
    """Batched (sigma_l, sigma_r, gamma_l, gamma_r), shape (nE, m, m) each."""
    h00_l, h01_l = ham.lead_left
    h00_r, h01_r = ham.lead_right
    sigma_l = _self_energy_many(
        h00_l, h01_l.T.conj(), energies, eta, tol, max_iter
    )
    sigma_r = _self_energy_many(h00_r, h01_r, energies, eta, tol, max_iter)
    gamma_l = 1j * (sigma_l - sigma_l.conj().transpose(0, 2, 1))
    gamma_r = 1j * (sigma_r - sigma_r.conj().transpose(0, 2, 1))
    return sigma_l, sigma_r, gamma_l, gamma_r


def _checked_trace(value: complex, what: str, energy: float) -> float:
    t = float(np.real(value))
    if not math.isfinite(t):
        raise NumericalError(f"non-finite {what} at E={energy:g} eV")
    if t < -1e-10:
        raise NumericalError(f"{what} = {t:.3e} < 0 at E={energy:g} eV")
    return max(t, 0.0)


def transmission(
    ham: BlockHamiltonian,
    energy: float,
    eta: float = ETA_TRANSMISSION,
    tol: float = DECIMATION_TOL,
    max_iter: int = DECIMATION_MAX_ITER,
) -> float:
    """Transmission by dense inversion of the full device matrix."""
    terms = _lead_terms_many(ham, np.asarray([energy], dtype=float), eta, tol, max_iter)
    sigma_l, sigma_r, gamma_l, gamma_r = (t[0] for t in terms)
    m = ham.orbital_count
    n = ham.n_orbitals
    a = (energy + 1j * eta) * np.eye(n, dtype=complex) - ham.to_dense()
    a[:m, :m] -= sigma_l
    a[n - m :, n - m :] -= sigma_r
    try:
        green = np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"singular device matrix at E={energy:g} eV, eta={eta:g}"
        ) from exc
    g_1n = green[:m, n - m :]
    t = np.trace(gamma_l @ g_1n @ gamma_r @ g_1n.T.conj())
    return _checked_trace(t, "transmission", energy)


def _block_inv(stack: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.inv(stack)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular {what} block") from exc


def _rgf_transmissions(
    ham: BlockHamiltonian,
    energies,
    eta: float,
    tol: float = DECIMATION_TOL,
    max_iter: int = DECIMATION_MAX_ITER,
) -> np.ndarray:
    """Recursive-sweep transmission for a batch of energies.

    Forward left-connected sweep carrying the corner block G_{0,N-1}
    along; cost is linear in the layer count and all linear algebra runs
    stacked over the batch.
    """
    e_arr = np.asarray(energies, dtype=float)
    if e_arr.size == 0:
        return np.zeros(0)
    sigma_l, sigma_r, gamma_l, gamma_r = _lead_terms_many(
        ham, e_arr, eta, tol, max_iter
    )
    m = ham.orbital_count
    last = ham.n_layers - 1
    z = (e_arr + 1j * eta)[:, None, None] * np.eye(m)

    def a_block(i):
        a_ii = z - ham.onsite_blocks[i]
        if i == 0:
            a_ii = a_ii - sigma_l
        if i == last:
            a_ii = a_ii - sigma_r
        return a_ii

    g_prev = _block_inv(a_block(0), "left-connected")
    g_0n = g_prev
    for i, u in enumerate(ham.coupling_blocks):
        eff = a_block(i + 1) - u.T.conj() @ g_prev @ u
        g_prev = _block_inv(eff, "left-connected")
        g_0n = g_0n @ u @ g_prev

    # Tr[Gamma_L G Gamma_R G^dagger] as an elementwise contraction
    t_vals = np.sum((gamma_l @ g_0n @ gamma_r) * np.conj(g_0n), axis=(1, 2))
    t_real = np.real(t_vals)
    if not np.all(np.isfinite(t_real)):
        bad = e_arr[~np.isfinite(t_real)][0]
        raise NumericalError(f"non-finite transmission at E={bad:g} eV")
    if np.min(t_real) < -1e-10:
        bad = e_arr[np.argmin(t_real)]
        raise NumericalError(
            f"transmission = {np.min(t_real):.3e} < 0 at E={bad:g} eV"
        )
    return np.clip(t_real, 0.0, None)


def rgf_transmission(
    ham: BlockHamiltonian,
    energy: float,
    eta: float = ETA_TRANSMISSION,
    tol: float = DECIMATION_TOL,
    max_iter: int = DECIMATION_MAX_ITER,
) -> float:
    """Transmission by the recursive layer sweep.

    A forward left-connected sweep followed by back-propagation of the
    corner block G_{0,N-1}; equivalent to the dense path at a cost linear
    in the layer count.
    """
    return float(_rgf_transmissions(ham, [energy], eta, tol, max_iter)[0])


def _greens_diagonal_many(
    ham: BlockHamiltonian,
    energies,
    eta: float,
    tol: float = DECIMATION_TOL,
    max_iter: int = DECIMATION_MAX_ITER,
) -> np.ndarray:
    """Batched diagonal of the retarded Green's function, (nE, n_orbitals).

    Left-connected sweep stores its blocks; the backward pass carries the
    right-connected block and emits each fully-connected diagonal block
    on the way down.  Matches the diagonal of the dense inverse.
    """
    e_arr = np.asarray(energies, dtype=float)
    n_orb = ham.n_orbitals
    if e_arr.size == 0:
        return np.zeros((0, n_orb), dtype=complex)
    sigma_l, sigma_r, _, _ = _lead_terms_many(ham, e_arr, eta, tol, max_iter)
    m = ham.orbital_count
    n_layers = ham.n_layers
    last = n_layers - 1
    z = (e_arr + 1j * eta)[:, None, None] * np.eye(m)

    def a_block(i):
        a_ii = z - ham.onsite_blocks[i]
        if i == 0:
            a_ii = a_ii - sigma_l
        if i == last:
            a_ii = a_ii - sigma_r
        return a_ii

    g_left = []
    for i in range(n_layers):
        eff = a_block(i)
        if i > 0:
            u = ham.coupling_blocks[i - 1]
            eff = eff - u.T.conj() @ g_left[i - 1] @ u
        g_left.append(_block_inv(eff, "left-connected"))

    diag = np.empty((e_arr.size, n_orb), dtype=complex)
    g_right_next = None
    for i in range(last, -1, -1):
        eff = a_block(i)
        if i < last:
            u = ham.coupling_blocks[i]
            right_term = u @ g_right_next @ u.T.conj()
            eff = eff - right_term
        if i > 0:
            u = ham.coupling_blocks[i - 1]
            g_full = _block_inv(
                eff - u.T.conj() @ g_left[i - 1] @ u, "fully-connected"
            )
            g_right_next = _block_inv(eff, "right-connected")
        else:
            g_full = _block_inv(eff, "fully-connected")
        diag[:, i * m : (i + 1) * m] = np.diagonal(g_full, axis1=1, axis2=2)
    return diag


def greens_diagonal(
    ham: BlockHamiltonian,
    energy: float,
    eta: float,
    tol: float = DECIMATION_TOL,
    max_iter: int = DECIMATION_MAX_ITER,
) -> np.ndarray:
    """Diagonal of the retarded device Green's function, all orbitals.

    Left-connected and right-connected sweeps combined layer by layer;
    same result as the diagonal of the dense inverse.
    """
    return _greens_diagonal_many(ham, [energy], eta, tol, max_iter)[0]


@dataclass
class TransmissionSpectrum:
    """T(E) on a grid, tagged with the bias and geometry fingerprint."""

    grid: EnergyGrid
    values: np.ndarray
    bias_v: float = 0.0
    fingerprint: dict = field(default_factory=dict)


@dataclass
class LdosTable:
    """Local density of states (states/eV) per atom and energy.

    values has shape (n_atoms, n_energies).  tags names distinguished
    sampling atoms: 'arc' is the channel atom whose normal is rotated
    the most, 'far' the channel atom closest to a lead.
    """

    grid: EnergyGrid
    values: np.ndarray
    tags: dict[str, int] = field(default_factory=dict)


def _map_energies(fn, energies: np.ndarray, threads: int) -> list:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, energies))
    return [fn(e) for e in energies]


# energies per stacked linear-algebra batch; fixed (never derived from the
# thread count) so outputs cannot depend on parallelism
_BATCH_SIZE = 64


def _run_batched(
    fn_many, energies: np.ndarray, threads: int, batch: int = _BATCH_SIZE
) -> np.ndarray:
    chunks = [energies[k : k + batch] for k in range(0, energies.size, batch)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(fn_many, chunks))
    else:
        parts = [fn_many(c) for c in chunks]
    return np.concatenate(parts)


def transmission_spectrum(
    ham: BlockHamiltonian,
    grid: EnergyGrid,
    bias_v: float = 0.0,
    fingerprint: dict | None = None,
    path: str = "rgf",
    threads: int = 1,
    tol: float = DECIMATION_TOL,
    max_iter: int = DECIMATION_MAX_ITER,
) -> TransmissionSpectrum:
    """Evaluate T(E) over a grid, optionally across worker threads."""
    if path == "rgf":
        values = _run_batched(
            lambda es: _rgf_transmissions(ham, es, grid.eta, tol, max_iter),
            grid.energies,
            threads,
        )
    elif path == "dense":
        fn = lambda e: transmission(ham, e, grid.eta, tol, max_iter)
        values = np.array(_map_energies(fn, grid.energies, threads))
    else:
        raise ValueError(f"unknown transmission path {path!r}")
    return TransmissionSpectrum(
        grid=grid,
        values=values,
        bias_v=bias_v,
        fingerprint=dict(fingerprint or {}),
    )


def sampling_atoms(geom: DeviceGeometry) -> dict[str, int]:
    """Distinguished channel atoms for LDOS comparisons.

    'far': channel atom nearest a lead (smallest distance to any lead
    atom, lowest index on ties).  'arc': channel atom with the largest
    normal rotation away from +y; only tagged when the device is bent.
    """
    chan = np.nonzero(geom.region == REGION_CHANNEL)[0]
    if chan.size == 0:
        return {}
    lead = np.nonzero(geom.region != REGION_CHANNEL)[0]
    tags: dict[str, int] = {}

    dist = np.linalg.norm(
        geom.positions[chan][:, None, :] - geom.positions[lead][None, :, :], axis=2
    ).min(axis=1)
    tags["far"] = int(chan[np.argmin(dist)])

    tilt = np.arccos(np.clip(geom.normals[chan, 1], -1.0, 1.0))
    if np.max(tilt) > 1e-9:
        tags["arc"] = int(chan[np.argmax(tilt)])
    return tags


def ldos(
    ham: BlockHamiltonian,
    grid: EnergyGrid,
    geometry: DeviceGeometry | None = None,
    threads: int = 1,
    tol: float = DECIMATION_TOL,
    max_iter: int = DECIMATION_MAX_ITER,
) -> LdosTable:
    """LDOS_i(E) = -Im G_ii(E) / pi for every atom on the grid."""
    # the diagonal sweep keeps every left-connected block alive, so cap
    # the batch by device size (~150 MB of complex blocks)
    per_energy = ham.n_layers * ham.orbital_count**2 * 16
    batch = max(1, min(_BATCH_SIZE, 150_000_000 // per_energy))
    rows = _run_batched(
        lambda es: _greens_diagonal_many(ham, es, grid.eta, tol, max_iter),
        grid.energies,
        threads,
        batch,
    )
    values = -np.imag(rows.T) / math.pi
    if not np.all(np.isfinite(values)):
        raise NumericalError("non-finite LDOS value")
    if np.min(values) < -1e-10:
        raise NumericalError(f"LDOS {np.min(values):.3e} < 0")
    values = np.clip(values, 0.0, None)
    tags = sampling_atoms(geometry) if geometry is not None else {}
    return LdosTable(grid=grid, values=values, tags=tags)
