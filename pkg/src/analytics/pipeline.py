"""
This module runs the end-to-end entanglement pipeline for one configuration.

1. prepare_model:
   - Shin-Metiu models come straight from the config; H2+ models get a
     calibrated (and cached) softening table.

2. cached_scan:
   - Electronic scan cached with joblib.Memory under <output_dir>/cache.

3. analyze_state / entropy_table:
   - Full Schmidt entropy, simplified-density entropy and the two-eigenvalue
     estimate per vibronic state, with optional dual-trace verification.

4. run:
   - scan -> nuclear solve -> (diabatization / Born-Huang) -> entanglement analysis.
   - Writes pec.csv, vibronic.csv, entropy.csv, couplings.csv, bh_report.csv,
     schmidt_modes/, figure data and run_report.json as applicable.
"""

import logging
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from joblib import Memory, Parallel, delayed

from src import __version__
from src.analytics.config import config_hash
from src.calculations.entanglement import (
    density_spectrum,
    lambda_max_trend,
    perturbative_lambda_max,
    reduced_density_electronic_bo,
    reduced_density_nuclear_bo,
    schmidt_decompose,
    simplified_density,
    simplified_vibrational,
    two_eigenvalue_entropy,
    von_neumann_entropy,
)
from src.calculations.potentials import calibrate_softening
from src.data.reference_curve import (
    get_cached_softening_table,
    load_reference_curve,
    read_softening_table,
    select_rows,
    softening_digest,
    write_softening_table,
)
from src.data.tables import provenance_header, write_json, write_table
from src.errors import DomainError, ExtractionError
from src.simulations.bo_solver import bo_total_wavefunction, pec_table, scan_electronic, solve_nuclear, vibronic_table
from src.simulations.born_huang import (
    assemble_bh_matrix,
    bh_entropies,
    bh_report,
    coefficient_records,
    solve_bh,
)
from src.simulations.diabatization import (
    couplings_table,
    diabatic_nuclear_solve,
    diabatic_states,
    diabatize,
    second_order_B,
)
from src.visualizations.figure_data import bh_marginals_table, schmidt_mode_tables, vibrational_wavefunctions_table

logger = logging.getLogger(__name__)

MODULE = "pipeline_cli"
ENTROPY_COLUMNS = ["surface", "m", "W", "S_full", "S_simplified", "S_two_eigenvalue", "lambda_1"]


@dataclass
class RunReport:
    config_hash: str
    version: str
    model: str
    picture: str
    output_dir: str
    files: list = field(default_factory=list)
    state_counts: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


class _Writer:
    # single owner of every output file of a run
    def __init__(self, report, header):
        self.report = report
        self.header = header

    def table(self, name, frame, extra=None):
        path = os.path.join(self.report.output_dir, name)
        header = self.header + [f"{key}: {value}" for key, value in (extra or {}).items()]
        write_table(path, frame, header)
        self.report.files.append(name)
        return path

    def json(self, name, payload):
        write_json(os.path.join(self.report.output_dir, name), payload)
        self.report.files.append(name)


def cache_directory(config):
    return os.path.join(config.output_dir, "cache")


def softening_rows(config, x_grid):
    """
    Reference rows covering the nuclear grid and the dissociation limit that applies to them.
    """
    curve = load_reference_curve(config.h2p.reference_curve or None)
    rows = select_rows(curve, config.grid.r_min, config.grid.r_max)
    limit = config.h2p.dissociation_limit if rows[-1, 0] == curve[-1, 0] else None
    return rows, limit


def prepare_model(config, x_grid):
    model = config.build_model()
    if config.model != "h2p":
        return model
    if config.h2p.softening_table:
        table = read_softening_table(config.h2p.softening_table)
        logger.info("using softening table %s", config.h2p.softening_table)
    else:
        rows, limit = softening_rows(config, x_grid)
        cache_path = os.path.join(cache_directory(config), "softening_table.dat")
        table = get_cached_softening_table(model, rows, x_grid, cache_path, dissociation_limit=limit)
    return model.with_softening(table)


def calibrate_to_file(config, output_path):
    """
    Calibrate the H2+ softening table of a config and write it to output_path.
    """
    x_grid = config.x_grid()
    model = config.build_model()
    rows, limit = softening_rows(config, x_grid)
    table = calibrate_softening(model, rows, x_grid, dissociation_limit=limit)
    write_softening_table(output_path, table, softening_digest(rows, x_grid, model, limit))
    return table


def cached_scan(model, x_grid, R_grid, n_states, symmetry, cache_dir, n_jobs=1):
    memory = Memory(cache_dir, verbose=0)
    scan = memory.cache(scan_electronic, ignore=["n_jobs"])
    if scan.check_call_in_cache(model, x_grid, R_grid, n_states, symmetry=symmetry, n_jobs=n_jobs):
        logger.info("electronic scan cache hit in %s", cache_dir)
    else:
        logger.info("electronic scan cache miss, solving %d columns", R_grid.n_points)
    return scan(model, x_grid, R_grid, n_states, symmetry=symmetry, n_jobs=n_jobs)


def _convert(entropy, base):
    return entropy / math.log(2.0) if base == "2" else entropy


def _spectrum_deviation(scan, state, lambdas):
    k = lambdas.size
    nuclear = density_spectrum(reduced_density_nuclear_bo(scan, state))[:k]
    electronic = density_spectrum(reduced_density_electronic_bo(scan, state))[:k]
    return float(max(np.max(np.abs(nuclear - lambdas)), np.max(np.abs(electronic - lambdas))))


def analyze_state(scan, state, options, base="e"):
    """
    Entanglement measures of one BO vibronic state.

    Parameters:
        scan (ElectronicScan): Electronic states of the picture the state belongs to.
        state (VibronicState): Vibronic state.
        options (AnalysisOptions): Which measures to compute.
        base (str): Entropy log base, "e" or "2".

    Returns:
        tuple: (row dict, SchmidtResult or None, dual-trace deviation or NaN)
    """
    row = {"surface": state.surface + 1, "m": state.m, "W": state.energy,
           "S_full": np.nan, "S_simplified": np.nan, "S_two_eigenvalue": np.nan, "lambda_1": np.nan}
    result, deviation = None, np.nan
    if options.full_density:
        result = schmidt_decompose(bo_total_wavefunction(scan, state))
        row["S_full"] = von_neumann_entropy(result.lambdas, base=base)
        row["lambda_1"] = float(result.lambdas[0])
        if options.verify_spectra:
            deviation = _spectrum_deviation(scan, state, result.lambdas)
    if options.simplified or options.perturbative:
        try:
            reduced = simplified_density(simplified_vibrational(state), scan)
            if options.simplified:
                row["S_simplified"] = von_neumann_entropy(reduced.spectrum, base=base)
            if options.perturbative:
                row["S_two_eigenvalue"] = _convert(two_eigenvalue_entropy(perturbative_lambda_max(reduced)), base)
        except (ExtractionError, DomainError) as e:
            logger.warning("simplified density for %s unavailable: %s", state.label, e)
    return row, result, deviation


def entropy_table(scan, states, options, base="e", n_jobs=1):
    outputs = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(analyze_state)(scan, state, options, base) for state in states
    )
    frame = pd.DataFrame([row for row, _, _ in outputs], columns=ENTROPY_COLUMNS)
    return frame, [result for _, result, _ in outputs], [deviation for _, _, deviation in outputs]


def _trend_diagnostics(frame):
    trends = {}
    for surface, group in frame.groupby("surface"):
        if group["lambda_1"].isna().all():
            continue
        excitation = group["W"].to_numpy() - group["W"].min()
        trends[str(surface)] = lambda_max_trend(excitation, group["lambda_1"].to_numpy())
    return trends


def _export_modes(writer, scan, states, results, n_modes):
    for state, result in zip(states, results):
        if result is None:
            continue
        electronic, nuclear = schmidt_mode_tables(result, scan.x_grid, scan.R_grid, n_modes)
        writer.table(os.path.join("schmidt_modes", f"{state.label}_x.csv"), electronic)
        writer.table(os.path.join("schmidt_modes", f"{state.label}_R.csv"), nuclear)
        kept = result.lambdas[result.lambdas >= 1e-14]
        writer.json(os.path.join("schmidt_modes", f"{state.label}.json"),
                    {"label": state.label, "W": state.energy, "lambdas": [float(v) for v in kept]})


def _analyze(writer, report, scan, states, config, base, n_jobs, name="entropy.csv"):
    frame, results, deviations = entropy_table(scan, states, config.analysis, base, n_jobs)
    writer.table(name, frame, {"entropy-base": base, "picture": scan.picture})
    finite = [d for d in deviations if np.isfinite(d)]
    report.diagnostics[f"{name}:dual_trace_max_deviation"] = float(max(finite)) if finite else None
    report.diagnostics[f"{name}:lambda_max_trend"] = _trend_diagnostics(frame)
    if config.analysis.export_modes:
        _export_modes(writer, scan, states, results, config.analysis.schmidt_modes)
    return frame


def _solve_surfaces(scan, model, config):
    surfaces = {}
    for n in range(scan.n_states):
        print(f"Solving nuclear problem on surface {n + 1}...")
        surfaces[n] = solve_nuclear(scan, n, model.nuclear_mass, config.cutoff(n), bound_only=config.model == "h2p")
    return surfaces


def _flat(surfaces):
    return [state for n in sorted(surfaces) for state in surfaces[n]]


def _fit_diagnostics(result):
    return {
        name: {"amplitude": model.amplitude, "offset": model.offset, "center": model.center,
               "width": model.width, "rms_residual": model.residual}
        for name, model in (("theta", result.theta), ("phi", result.phi))
    }


def run(config, n_jobs=1, entropy_base="e"):
    """
    Execute one configured run and write its outputs.

    Parameters:
        config (RunConfig): Validated configuration.
        n_jobs (int): joblib workers for per-R solves and per-state analyses.
        entropy_base (str): "e" (nats) or "2" (bits) for reported entropies.

    Returns:
        RunReport: Files written, state counts and numerical diagnostics.
    """
    os.makedirs(config.output_dir, exist_ok=True)
    x_grid, R_grid = config.x_grid(), config.R_grid()
    digest = config_hash(config)
    report = RunReport(digest, __version__, config.model, config.picture, config.output_dir)
    writer = _Writer(report, provenance_header(digest, __version__, x_grid, R_grid))

    print("Preparing model...")
    model = prepare_model(config, x_grid)

    print("Scanning electronic states...")
    scan = cached_scan(model, x_grid, R_grid, config.electronic_states, config.symmetry,
                       cache_directory(config), n_jobs)
    writer.table("pec.csv", pec_table(scan), {"picture": "adiabatic"})
    surfaces = _solve_surfaces(scan, model, config)
    report.state_counts = {str(n + 1): len(states) for n, states in surfaces.items()}

    analysis_scan, analysis_states = scan, _flat(surfaces)
    if config.picture in ("diabatic", "born_huang"):
        print("Diabatizing...")
        result = diabatize(scan, model, config.diabatization.theta_span, config.diabatization.gap_threshold)
        writer.table("couplings.csv", couplings_table(result))
        report.diagnostics["rotation_fits"] = _fit_diagnostics(result)
        if config.picture == "diabatic":
            R = R_grid.points
            analysis_scan = diabatic_states(scan, result.theta.angle(R), result.phi.angle(R), result.potential)
            diabatic = diabatic_nuclear_solve(result.diagonal, R_grid, model.nuclear_mass,
                                              [config.cutoff(n) for n in range(3)])
            writer.table("pec_diabatic.csv", pec_table(analysis_scan), {"picture": "diabatic"})
            analysis_states = _flat(diabatic)
            report.state_counts = {str(n + 1): len(states) for n, states in diabatic.items()}

    writer.table("vibronic.csv", vibronic_table(analysis_states), {"picture": analysis_scan.picture})
    print("Computing entanglement entropies...")
    _analyze(writer, report, analysis_scan, analysis_states, config, entropy_base, n_jobs)
    if config.analysis.figure_data:
        chi, energies = vibrational_wavefunctions_table(analysis_states, R_grid)
        writer.table("vibrational_wavefunctions.csv", chi)
        writer.table("vibrational_energies.csv", energies)

    if config.picture == "born_huang":
        print("Solving Born-Huang problem...")
        if config.born_huang.coupling_source == "fitted":
            couplings, second_order = result.fitted_nac, result.second_order
        else:
            couplings, second_order = result.nac, second_order_B(result.nac)
        basis = assemble_bh_matrix(surfaces, couplings, second_order, model.nuclear_mass, n_jobs=n_jobs)
        solution = solve_bh(basis)
        entropies = bh_entropies(scan, basis, solution, base=entropy_base, n_jobs=n_jobs)
        extra = {"channel-cutoff": config.born_huang.channel_cutoff,
                 "coupling-source": config.born_huang.coupling_source, "entropy-base": entropy_base}
        writer.table("bh_report.csv", bh_report(solution, entropies), extra)
        if config.born_huang.write_coefficients:
            writer.json("bh_coefficients.json", {"channel_cutoff": config.born_huang.channel_cutoff,
                                                 "states": coefficient_records(solution)})
        if config.analysis.figure_data:
            nuclear, electronic = bh_marginals_table(scan, basis, solution)
            writer.table("bh_marginals.csv", nuclear)
            writer.table("bh_marginals_x.csv", electronic)
        bound = float(basis.energies.min()) + basis.coupling_norm
        report.diagnostics["born_huang"] = {
            "channels": len(basis.states),
            "channel_cutoff": config.born_huang.channel_cutoff,
            "asymmetry": basis.asymmetry,
            "coupling_norm": basis.coupling_norm,
            "lowest_energy": float(solution.energies[0]),
            "weyl_bound_satisfied": bool(solution.energies[0] <= bound),
        }

    report.files.append("run_report.json")
    write_json(os.path.join(config.output_dir, "run_report.json"), report.to_dict())
    print(f"Results saved to: {config.output_dir}")
    return report
