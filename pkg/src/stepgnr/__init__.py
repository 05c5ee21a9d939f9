"""Tight-binding NEGF transport in step-bent armchair graphene nanoribbons."""

from .geometry import (
    A_CC_DEFAULT,
    AtomSite,
    BendProfile,
    ClampWarning,
    DeviceGeometry,
    Family,
    RibbonSpec,
    apply_step_deformation,
    build_flat_ribbon,
    classify_family,
    export_xyz,
    geometry_from_json,
    geometry_to_json,
    resolve_profile,
)
from .model import (
    BiasRamp,
    BlockHamiltonian,
    HoppingModel,
    assemble,
    band_edges,
    bloch_bands,
    hopping,
    lead_principal_blocks,
    mode_count,
)
from .negf import (
    ConvergenceError,
    EnergyGrid,
    LdosTable,
    NumericalError,
    TransmissionSpectrum,
    greens_diagonal,
    ldos,
    lead_self_energies,
    rgf_transmission,
    sampling_atoms,
    self_energies,
    surface_gf,
    transmission,
    transmission_spectrum,
)
from .landauer import (
    G0_SIEMENS,
    IVCurve,
    SensitivityRanking,
    SweepReport,
    current,
    iv_curve,
    sensitivity_rank,
    sweep,
)

__version__ = "0.1.0"
