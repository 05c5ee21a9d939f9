"""Zero-temperature Landauer currents, I-V curves and parameter sweeps.

I(V_b) = G0 * integral of T(E, V_b) over the bias window
[mu_R, mu_L] = [E_F - eV_b/2, E_F + eV_b/2], with G0 = 2 e^2 / h.
Energies in eV, bias in V, currents in A.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import BendProfile, DeviceGeometry, RibbonSpec, build_flat_ribbon
from .geometry import apply_step_deformation, resolve_profile
from .model import BiasRamp, BlockHamiltonian, HoppingModel, assemble, band_edges
from .negf import (
    ConvergenceError,
    DECIMATION_MAX_ITER,
    DECIMATION_TOL,
    ETA_TRANSMISSION,
    _rgf_transmissions,
    _run_batched,
)

G0_SIEMENS = 7.748091729e-5  # conductance quantum 2 e^2 / h, CODATA

QUAD_REL_TOL = 1e-4
QUAD_MAX_DEPTH = 12
CURRENT_FLOOR = 1e-12  # A, guards relative comparisons near zero

SWEEP_PARAMETERS = ("H", "CR", "theta")

# reference spans (nm, nm, degrees) over which the three profile parameters
# are compared; sensitivity ranking rescales each deviation range to a full
# span so sweeps covering different fractions stay comparable
REFERENCE_SPANS = {"H": (0.78, 2.3), "CR": (0.40, 3.1), "theta": (30.0, 90.0)}


@dataclass
class IVCurve:
    """Currents over a bias list for one device."""

    biases: np.ndarray
    currents: np.ndarray
    fingerprint: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)


@dataclass
class SweepReport:
    """I-V family for one swept profile parameter.

    deviation[k] is D = max_V |I_bent - I_flat| normalized by the largest
    flat current (floored), for sweep value k.  field_v_per_nm reports the
    bias expressed as an average field over the channel length.
    """

    parameter: str
    values: np.ndarray
    fixed: dict
    curves: list[IVCurve]
    flat_curve: IVCurve
    deviation: np.ndarray
    field_v_per_nm: np.ndarray
    floor: float = CURRENT_FLOOR


@dataclass(frozen=True)
class SensitivityRanking:
    """Sweep parameters ordered by decreasing range of D."""

    order: tuple[str, ...]
    ranges: dict
    tied: bool


def _integration_panels(
    ham: BlockHamiltonian, mu_lo: float, mu_hi: float
) -> np.ndarray:
    """Split the bias window at lead subband edges.

    T(E) steps where either shifted lead gains or loses a mode; panel
    boundaries at those energies keep the trapezoid refinement honest on
    an otherwise discontinuous integrand.
    """
    cuts = [mu_lo, mu_hi]
    for h00, h01 in (ham.lead_left, ham.lead_right):
        edges = band_edges(h00, h01)
        inside = edges[(edges > mu_lo + 1e-12) & (edges < mu_hi - 1e-12)]
        cuts.extend(inside.tolist())
    cuts = np.array(sorted(cuts))
    keep = np.concatenate([[True], np.diff(cuts) > 1e-9])
    return cuts[keep]


def current(
    ham: BlockHamiltonian,
    v_b: float,
    e_fermi: float = 0.0,
    eta: float = ETA_TRANSMISSION,
    rel_tol: float = QUAD_REL_TOL,
    max_depth: int = QUAD_MAX_DEPTH,
    threads: int = 1,
    transmission_fn=None,
    tol: float = DECIMATION_TOL,
    max_iter: int = DECIMATION_MAX_ITER,
) -> tuple[float, dict]:
    """Current through a device assembled at bias v_b (V); returns
    (current_a, metadata).

    Adaptive trapezoid on the bias window, refined by interval halving
    until two successive estimates agree to rel_tol; negative biases are
    the caller's job via the symmetry map I(-V) = -I(V).
    """
    if v_b < 0:
        raise ValueError("v_b must be >= 0; map negative biases to -I(+V)")
    if v_b == 0.0:
        return 0.0, {"n_evaluations": 0, "refinements": 0, "converged": True}

    if transmission_fn is None:
        many = lambda es: _run_batched(
            lambda b: _rgf_transmissions(ham, b, eta, tol, max_iter),
            np.asarray(es),
            threads,
        )
    else:
        many = lambda es: [transmission_fn(e) for e in es]

    mu_lo = e_fermi - v_b / 2.0
    mu_hi = e_fermi + v_b / 2.0
    cuts = _integration_panels(ham, mu_lo, mu_hi)
    window = mu_hi - mu_lo

    cache: dict = {}

    def evaluate(energies):
        todo = [e for e in dict.fromkeys(energies) if e not in cache]
        if todo:
            for e, t_val in zip(todo, many(todo)):
                cache[e] = float(t_val)
        return [cache[e] for e in energies]

    # seed: split every panel into 4 intervals (5 trapezoid nodes)
    seeds = [np.linspace(a, b, 5) for a, b in zip(cuts[:-1], cuts[1:])]
    evaluate([float(e) for nodes in seeds for e in nodes])
    first = sum(
        0.5 * (nodes[1:] - nodes[:-1]) @ (
            np.array([cache[float(e)] for e in nodes[1:]])
            + np.array([cache[float(e)] for e in nodes[:-1]])
        )
        for nodes in seeds
    )
    tol_abs = rel_tol * max(abs(first), CURRENT_FLOOR / G0_SIEMENS)

    depth_used = 0
    for _attempt in range(2):
        # breadth-first bisection: an interval is accepted once halving it
        # shifts its trapezoid estimate by less than its share (by width) of
        # the absolute budget, so the panel sum moves < rel_tol overall
        pending = [
            (float(lo), float(hi), cache[float(lo)], cache[float(hi)], 0)
            for nodes in seeds
            for lo, hi in zip(nodes[:-1], nodes[1:])
        ]
        accepted = []
        while pending:
            evaluate([0.5 * (a + b) for a, b, _, _, _ in pending])
            deeper = []
            for a, b, fa, fb, depth in pending:
                mid = 0.5 * (a + b)
                fm = cache[mid]
                coarse = 0.5 * (fa + fb) * (b - a)
                fine = 0.25 * (fa + 2.0 * fm + fb) * (b - a)
                depth_used = max(depth_used, depth)
                if abs(fine - coarse) <= tol_abs * (b - a) / window:
                    accepted.append((a, fine))
                elif depth >= max_depth:
                    raise ConvergenceError(
                        f"bias-window quadrature not converged at depth {max_depth} "
                        f"on [{a:.6f}, {b:.6f}] eV at V_b={v_b:g} V "
                        f"(last estimates {coarse:.6e}, {fine:.6e})"
                    )
                else:
                    deeper.append((a, mid, fa, fm, depth + 1))
                    deeper.append((mid, b, fm, fb, depth + 1))
            pending = deeper
        accepted.sort(key=lambda item: item[0])
        estimate = math.fsum(contribution for _, contribution in accepted)
        # the budget came from the seed estimate; if the converged value is
        # much smaller, tighten once so rel_tol still refers to the result
        tighter = rel_tol * max(abs(estimate), CURRENT_FLOOR / G0_SIEMENS)
        if tol_abs <= tighter * (1.0 + 1e-9):
            break
        tol_abs = tighter

    meta = {
        "n_evaluations": len(cache),
        "refinements": int(depth_used),
        "converged": True,
        "rel_tol": rel_tol,
        "panel_count": len(seeds),
    }
    return G0_SIEMENS * estimate, meta


def iv_curve(
    geom: DeviceGeometry,
    model: HoppingModel,
    biases,
    e_fermi: float = 0.0,
    eta: float = ETA_TRANSMISSION,
    rel_tol: float = QUAD_REL_TOL,
    max_depth: int = QUAD_MAX_DEPTH,
    linear_response: bool = False,
    threads: int = 1,
    tol: float = DECIMATION_TOL,
    max_iter: int = DECIMATION_MAX_ITER,
) -> IVCurve:
    """I-V curve over a sorted, duplicate-free bias list.

    Negative biases use the symmetry map I(-V) = -I(+V) computed from
    the +|V| Hamiltonian.  With linear_response=True the transmission is
    frozen at V_b = 0 and only the window widens.
    """
    biases = np.asarray(biases, dtype=float)
    if biases.size == 0:
        raise ValueError("bias list is empty")
    if np.any(np.diff(biases) <= 0):
        raise ValueError("biases must be strictly increasing")

    ham0 = assemble(geom, model, BiasRamp(0.0, e_fermi))

    currents = np.zeros(biases.size)
    meta_rows = []
    for k, v in enumerate(biases):
        v_mag = abs(float(v))
        if v_mag == 0.0:
            meta_rows.append({"n_evaluations": 0, "refinements": 0, "converged": True})
            continue
        # linear response keeps the zero-bias Hamiltonian: frozen T(E) and
        # panel cuts at the unshifted lead band edges
        if linear_response:
            ham = ham0
        else:
            ham = assemble(geom, model, BiasRamp(v_mag, e_fermi))
        value, meta = current(
            ham,
            v_mag,
            e_fermi=e_fermi,
            eta=eta,
            rel_tol=rel_tol,
            max_depth=max_depth,
            threads=threads,
            tol=tol,
            max_iter=max_iter,
        )
        currents[k] = value if v > 0 else -value
        meta_rows.append(meta)

    return IVCurve(
        biases=biases,
        currents=currents,
        fingerprint=geom.fingerprint(),
        metadata={
            "eta": eta,
            "rel_tol": rel_tol,
            "linear_response": linear_response,
            "e_fermi": e_fermi,
            "per_bias": meta_rows,
        },
    )


def _profile_for(parameter: str, value: float, fixed: dict, channel_length: float) -> BendProfile:
    params = dict(fixed)
    params[parameter] = value
    missing = {"H", "CR", "theta"} - set(params)
    if missing:
        raise ValueError(f"sweep is missing fixed parameters {sorted(missing)}")
    return resolve_profile(params["H"], params["CR"], params["theta"], channel_length)


def sweep(
    spec: RibbonSpec,
    model: HoppingModel,
    parameter: str,
    values,
    fixed: dict,
    biases,
    flat_curve: IVCurve | None = None,
    e_fermi: float = 0.0,
    eta: float = ETA_TRANSMISSION,
    rel_tol: float = QUAD_REL_TOL,
    max_depth: int = QUAD_MAX_DEPTH,
    linear_response: bool = False,
    threads: int = 1,
    floor: float = CURRENT_FLOOR,
) -> SweepReport:
    """I-V family over one profile parameter ('H', 'CR' or 'theta').

    fixed holds the other two parameters.  Every member shares the flat
    reference curve, which may be passed in to avoid recomputation when
    several sweeps use the same ribbon and biases.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(
            f"parameter must be one of {SWEEP_PARAMETERS}, got {parameter!r}"
        )
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("sweep needs at least one value")

    flat = build_flat_ribbon(spec)
    kwargs = dict(
        e_fermi=e_fermi,
        eta=eta,
        rel_tol=rel_tol,
        max_depth=max_depth,
        linear_response=linear_response,
        threads=threads,
    )
    if flat_curve is None:
        flat_curve = iv_curve(flat, model, biases, **kwargs)

    curves = []
    deviation = np.zeros(values.size)
    i_ref = max(float(np.max(np.abs(flat_curve.currents))), floor)
    for k, value in enumerate(values):
        profile = _profile_for(parameter, float(value), fixed, spec.channel_length)
        bent = apply_step_deformation(flat, profile)
        curve = iv_curve(bent, model, biases, **kwargs)
        curves.append(curve)
        deviation[k] = float(
            np.max(np.abs(curve.currents - flat_curve.currents)) / i_ref
        )

    return SweepReport(
        parameter=parameter,
        values=values,
        fixed=dict(fixed),
        curves=curves,
        flat_curve=flat_curve,
        deviation=deviation,
        field_v_per_nm=np.asarray(biases, dtype=float) / spec.channel_length,
        floor=floor,
    )


def sensitivity_rank(reports: list[SweepReport]) -> SensitivityRanking:
    """Order swept parameters by the range of the deviation metric D.

    Each range is rescaled by REFERENCE_SPANS[parameter] / covered span so
    that a sweep sampling only part of its reference span still compares
    fairly.  Reports must cover distinct parameters and share the bias grid
    and flat reference; ranges tie exactly only in degenerate cases (for
    example single-point sweeps), which sets the tie flag and falls back to
    alphabetical order.
    """
    if not reports:
        raise ValueError("no sweep reports given")
    seen = [r.parameter for r in reports]
    if len(set(seen)) != len(seen):
        raise ValueError(f"duplicate sweep parameters in {seen}")
    first = reports[0]
    for r in reports[1:]:
        if not np.array_equal(r.flat_curve.biases, first.flat_curve.biases):
            raise ValueError("sweep reports use different bias grids")
        if not np.array_equal(r.flat_curve.currents, first.flat_curve.currents):
            raise ValueError("sweep reports use different flat references")

    ranges = {}
    for r in reports:
        covered = float(np.max(r.values) - np.min(r.values))
        raw = float(np.max(r.deviation) - np.min(r.deviation))
        if covered <= 0.0:
            ranges[r.parameter] = 0.0
            continue
        lo, hi = REFERENCE_SPANS[r.parameter]
        ranges[r.parameter] = raw * (hi - lo) / covered
    order = tuple(sorted(ranges, key=lambda p: (-ranges[p], p)))
    values = sorted(ranges.values(), reverse=True)
    tied = any(a == b for a, b in zip(values[:-1], values[1:]))
    return SensitivityRanking(order=order, ranges=ranges, tied=tied)
