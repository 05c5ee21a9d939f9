"""Command-line front end: build | transmission | ldos | iv | sweep.

Configs are flat ``key = value`` text with ``#`` comments; unknown keys
are rejected so typos fail loudly.  Exit codes: 0 success, 2 config or
validation error, 3 I/O error, 4 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import geometry as geo
from .geometry import (
    ClampWarning,
    DeviceGeometry,
    RibbonSpec,
    apply_step_deformation,
    build_flat_ribbon,
    export_xyz,
    geometry_to_json,
    resolve_profile,
)
from .model import BiasRamp, HoppingModel, assemble
from .negf import (
    ETA_LDOS,
    ETA_TRANSMISSION,
    EnergyGrid,
    NumericalError,
    ldos,
    transmission_spectrum,
)
from .landauer import (
    CURRENT_FLOOR,
    QUAD_MAX_DEPTH,
    QUAD_REL_TOL,
    iv_curve,
    sensitivity_rank,
    sweep,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


class ConfigError(ValueError):
    pass


def _parse_float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _parse_int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


_REQUIRED = object()

# key -> (parser, default); _REQUIRED means the command cannot run without it
_CONFIG_KEYS = {
    "n_a": (int, _REQUIRED),
    "n_cells_channel": (int, _REQUIRED),
    "n_cells_lead": (int, 1),
    "a_cc_nm": (float, geo.A_CC_DEFAULT),
    "step_height_nm": (float, None),
    "curvature_radius_nm": (float, None),
    "bend_angle_deg": (float, None),
    "v_pp_pi_ev": (float, -2.7),
    "v_pp_sigma_ev": (float, 4.7),
    "decay_beta": (float, 3.0),
    "cutoff": (float, 1.1),
    "e_fermi_ev": (float, 0.0),
    "e_min_ev": (float, -3.0),
    "e_max_ev": (float, 3.0),
    "n_energies": (int, 200),
    "eta_ev": (float, ETA_TRANSMISSION),
    "eta_ldos_ev": (float, ETA_LDOS),
    "biases_v": (_parse_float_list, [0.0]),
    "ldos_atoms": (_parse_int_list, []),
    "quad_rel_tol": (float, QUAD_REL_TOL),
    "quad_max_depth": (int, QUAD_MAX_DEPTH),
    "decimation_tol": (float, 1e-12),
    "decimation_max_iter": (int, 100),
    "sweep_h_values": (_parse_float_list, None),
    "sweep_h_fixed_cr_nm": (float, None),
    "sweep_h_fixed_theta_deg": (float, None),
    "sweep_cr_values": (_parse_float_list, None),
    "sweep_cr_fixed_h_nm": (float, None),
    "sweep_cr_fixed_theta_deg": (float, None),
    "sweep_theta_values": (_parse_float_list, None),
    "sweep_theta_fixed_h_nm": (float, None),
    "sweep_theta_fixed_cr_nm": (float, None),
}


def load_config(path) -> dict:
    """Parse and validate a flat key = value config file."""
    try:
        text = Path(path).read_text()
    except OSError:
        raise
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in cfg:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        parser, _ = _CONFIG_KEYS[key]
        try:
            cfg[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(
                f"{path}:{lineno}: bad value for {key!r}: {value!r}"
            ) from exc
    for key, (_, default) in _CONFIG_KEYS.items():
        if key in cfg:
            continue
        if default is _REQUIRED:
            raise ConfigError(f"{path}: missing required key {key!r}")
        cfg[key] = default
    return cfg


def _fmt9(x: float) -> str:
    """Scientific notation, nine digits after the point, bare exponent."""
    if x == 0.0:
        x = 0.0  # normalize -0.0
    mantissa, exponent = f"{x:.9e}".split("e")
    return f"{mantissa}e{int(exponent)}"


def _write_lines(path: Path, lines: list[str]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _ribbon_spec(cfg: dict) -> RibbonSpec:
    return RibbonSpec(
        n_a=cfg["n_a"],
        n_cells_channel=cfg["n_cells_channel"],
        n_cells_lead=cfg["n_cells_lead"],
        a_cc=cfg["a_cc_nm"],
    )


def _hopping_model(cfg: dict) -> HoppingModel:
    return HoppingModel(
        v_pp_pi=cfg["v_pp_pi_ev"],
        v_pp_sigma=cfg["v_pp_sigma_ev"],
        decay_beta=cfg["decay_beta"],
        cutoff=cfg["cutoff"],
    )


def _build_device(cfg: dict) -> DeviceGeometry:
    spec = _ribbon_spec(cfg)
    flat = build_flat_ribbon(spec)
    profile_keys = ("step_height_nm", "curvature_radius_nm", "bend_angle_deg")
    given = [k for k in profile_keys if cfg[k] is not None]
    if not given:
        return flat
    if len(given) != len(profile_keys):
        missing = sorted(set(profile_keys) - set(given))
        raise ConfigError(f"incomplete bend profile: missing {missing}")
    profile = resolve_profile(
        cfg["step_height_nm"],
        cfg["curvature_radius_nm"],
        cfg["bend_angle_deg"],
        spec.channel_length,
    )
    return apply_step_deformation(flat, profile)


def _energy_grid(cfg: dict, eta: float) -> EnergyGrid:
    return EnergyGrid(
        e_min=cfg["e_min_ev"],
        e_max=cfg["e_max_ev"],
        n_points=cfg["n_energies"],
        eta=eta,
    )


def cmd_build(cfg: dict, out_dir: Path, args) -> None:
    geom = _build_device(cfg)
    export_xyz(geom, out_dir / "geometry.xyz")
    (out_dir / "geometry.json").write_text(geometry_to_json(geom) + "\n")


def cmd_transmission(cfg: dict, out_dir: Path, args) -> None:
    geom = _build_device(cfg)
    model = _hopping_model(cfg)
    grid = _energy_grid(cfg, cfg["eta_ev"])
    for bias in cfg["biases_v"]:
        ham = assemble(geom, model, BiasRamp(abs(bias), cfg["e_fermi_ev"]))
        spectrum = transmission_spectrum(
            ham,
            grid,
            bias_v=bias,
            fingerprint=geom.fingerprint(),
            threads=args.threads,
            tol=cfg["decimation_tol"],
            max_iter=cfg["decimation_max_iter"],
        )
        lines = ["energy_ev,transmission"]
        for e, t in zip(grid.energies, spectrum.values):
            lines.append(f"{_fmt9(e)},{_fmt9(t)}")
        millivolts = int(round(bias * 1000.0))
        _write_lines(out_dir / f"T_vb{millivolts}.csv", lines)


def cmd_ldos(cfg: dict, out_dir: Path, args) -> None:
    geom = _build_device(cfg)
    model = _hopping_model(cfg)
    grid = _energy_grid(cfg, cfg["eta_ldos_ev"])
    ham = assemble(geom, model, BiasRamp(0.0, cfg["e_fermi_ev"]))
    table = ldos(
        ham,
        grid,
        geometry=geom,
        threads=args.threads,
        tol=cfg["decimation_tol"],
        max_iter=cfg["decimation_max_iter"],
    )
    selected = sorted(set(table.tags.values()) | set(cfg["ldos_atoms"]))
    for idx in selected:
        if not 0 <= idx < geom.n_sites:
            raise ConfigError(f"ldos_atoms index {idx} outside 0..{geom.n_sites - 1}")
    lines = ["atom_index,energy_ev,ldos_per_ev"]
    for idx in selected:
        for e, v in zip(grid.energies, table.values[idx]):
            lines.append(f"{idx},{_fmt9(e)},{_fmt9(v)}")
    _write_lines(out_dir / "ldos.csv", lines)
    doc = {"tags": table.tags, "extra_atoms": sorted(cfg["ldos_atoms"])}
    (out_dir / "ldos_atoms.json").write_text(
        json.dumps(doc, sort_keys=True, indent=2) + "\n"
    )


def cmd_iv(cfg: dict, out_dir: Path, args) -> None:
    geom = _build_device(cfg)
    model = _hopping_model(cfg)
    curve = iv_curve(
        geom,
        model,
        cfg["biases_v"],
        e_fermi=cfg["e_fermi_ev"],
        eta=cfg["eta_ev"],
        rel_tol=cfg["quad_rel_tol"],
        max_depth=cfg["quad_max_depth"],
        linear_response=args.linear_response,
        threads=args.threads,
        tol=cfg["decimation_tol"],
        max_iter=cfg["decimation_max_iter"],
    )
    lines = ["bias_v,current_a"]
    for v, i in zip(curve.biases, curve.currents):
        lines.append(f"{_fmt9(v)},{_fmt9(i)}")
    _write_lines(out_dir / "iv.csv", lines)


_SWEEP_BLOCKS = {
    "H": ("sweep_h_values", {"CR": "sweep_h_fixed_cr_nm", "theta": "sweep_h_fixed_theta_deg"}),
    "CR": ("sweep_cr_values", {"H": "sweep_cr_fixed_h_nm", "theta": "sweep_cr_fixed_theta_deg"}),
    "theta": ("sweep_theta_values", {"H": "sweep_theta_fixed_h_nm", "CR": "sweep_theta_fixed_cr_nm"}),
}


def cmd_sweep(cfg: dict, out_dir: Path, args) -> None:
    spec = _ribbon_spec(cfg)
    model = _hopping_model(cfg)

    blocks = {}
    for parameter, (values_key, fixed_keys) in _SWEEP_BLOCKS.items():
        keys = [values_key, *fixed_keys.values()]
        given = [k for k in keys if cfg[k] is not None]
        if not given:
            continue
        if len(given) != len(keys):
            missing = sorted(set(keys) - set(given))
            raise ConfigError(
                f"incomplete sweep block for {parameter!r}: missing {missing}"
            )
        blocks[parameter] = (
            cfg[values_key],
            {name: cfg[key] for name, key in fixed_keys.items()},
        )
    if not blocks:
        raise ConfigError("no sweep block configured (sweep_*_values keys)")

    flat_curve = iv_curve(
        build_flat_ribbon(spec),
        model,
        cfg["biases_v"],
        e_fermi=cfg["e_fermi_ev"],
        eta=cfg["eta_ev"],
        rel_tol=cfg["quad_rel_tol"],
        max_depth=cfg["quad_max_depth"],
        linear_response=args.linear_response,
        threads=args.threads,
        tol=cfg["decimation_tol"],
        max_iter=cfg["decimation_max_iter"],
    )

    reports = {}
    for parameter, (values, fixed) in blocks.items():
        reports[parameter] = sweep(
            spec,
            model,
            parameter,
            values,
            fixed,
            cfg["biases_v"],
            flat_curve=flat_curve,
            e_fermi=cfg["e_fermi_ev"],
            eta=cfg["eta_ev"],
            rel_tol=cfg["quad_rel_tol"],
            max_depth=cfg["quad_max_depth"],
            linear_response=args.linear_response,
            threads=args.threads,
        )

    doc = {
        "biases_v": list(map(float, cfg["biases_v"])),
        "channel_length_nm": spec.channel_length,
        "flat": {"current_a": flat_curve.currents.tolist()},
        "sweeps": {},
        "sensitivity_order": None,
        "sensitivity_ranges": None,
        "tied": None,
    }
    for parameter, report in reports.items():
        doc["sweeps"][parameter] = {
            "fixed": report.fixed,
            "values": report.values.tolist(),
            "deviation": report.deviation.tolist(),
            "field_v_per_nm": report.field_v_per_nm.tolist(),
            "curves": [
                {"value": float(v), "current_a": c.currents.tolist()}
                for v, c in zip(report.values, report.curves)
            ],
        }
    if set(reports) == {"H", "CR", "theta"}:
        ranking = sensitivity_rank(list(reports.values()))
        doc["sensitivity_order"] = list(ranking.order)
        doc["sensitivity_ranges"] = ranking.ranges
        doc["tied"] = ranking.tied
    (out_dir / "sweep.json").write_text(
        json.dumps(doc, sort_keys=True, indent=2) + "\n"
    )


_COMMANDS = {
    "build": cmd_build,
    "transmission": cmd_transmission,
    "ldos": cmd_ldos,
    "iv": cmd_iv,
    "sweep": cmd_sweep,
}


def _parse_args(argv):
    parser = argparse.ArgumentParser(
        prog="stepgnr",
        description="Quantum transport through step-bent armchair graphene nanoribbons",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="key = value config file")
    parser.add_argument("--out-dir", default=".", help="output directory")
    parser.add_argument(
        "--linear-response",
        action="store_true",
        help="freeze T(E) at zero bias for currents",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="worker threads for energy grids (0 = all cores)",
    )
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = _parse_args(argv)
    if args.threads < 0:
        print(f"error: --threads must be >= 0, got {args.threads}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads == 0:
        args.threads = os.cpu_count() or 1

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            cfg = load_config(args.config)
            out_dir = Path(args.out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            _COMMANDS[args.command](cfg, out_dir, args)
        except NumericalError as exc:
            _flush_warnings(caught)
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        except OSError as exc:
            _flush_warnings(caught)
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
        except ValueError as exc:
            _flush_warnings(caught)
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        _flush_warnings(caught)
    return EXIT_OK


def _flush_warnings(caught) -> None:
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
