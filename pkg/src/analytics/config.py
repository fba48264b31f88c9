"""
This module reads and validates run configurations.

1. load_config:
   - INI file read with configparser, then VIBENT_<SECTION>__<KEY> environment overrides.
   - Output: frozen RunConfig.

2. RunConfig:
   - build_model / x_grid / R_grid / cutoffs helpers used by the pipeline.
   - config_hash: SHA-256 of the canonical JSON of the resolved config, output_dir excluded.
"""

import configparser
import hashlib
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace

from src.calculations.fgh import Grid1D
from src.calculations.potentials import PROTON_MASS, H2pModel, ShinMetiuModel
from src.errors import ConfigurationError

logger = logging.getLogger(__name__)

MODULE = "pipeline_cli"
ENV_PREFIX = "VIBENT_"
MODELS = ("h2p", "shin_metiu")
PICTURES = ("adiabatic", "diabatic", "born_huang")
COUPLING_SOURCES = ("fitted", "hellmann_feynman")

GRID_DEFAULTS = {
    "h2p": {"x_min": -30.0, "x_max": 30.0, "x_points": 501, "r_min": 0.4, "r_max": 40.0, "r_points": 1601},
    "shin_metiu": {"x_min": -22.0, "x_max": 22.0, "x_points": 501, "r_min": -8.9, "r_max": 8.9, "r_points": 1001},
}
STATE_DEFAULTS = {
    "h2p": {"electronic_states": 2, "energy_cutoffs": (-0.5, -0.23), "symmetry": "gerade"},
    "shin_metiu": {"electronic_states": 3, "energy_cutoffs": (-0.15,), "symmetry": None},
}

KNOWN_KEYS = {
    "run": {"model", "picture", "output_dir"},
    "grid": {"x_min", "x_max", "x_points", "r_min", "r_max", "r_points"},
    "states": {"electronic_states", "energy_cutoffs", "symmetry"},
    "h2p": {"z_alpha", "z_beta", "proton_mass", "reference_curve", "softening_table", "dissociation_limit"},
    "shin_metiu": {
        "separation", "z_alpha", "z_beta", "z_gamma", "rc_alpha", "rc_beta", "rc_gamma", "moving_ion_mass", "margin",
    },
    "analysis": {
        "full_density", "simplified", "perturbative", "verify_spectra", "schmidt_modes", "export_modes", "figure_data",
    },
    "diabatization": {"theta_span", "gap_threshold"},
    "born_huang": {"channel_cutoff", "coupling_source", "write_coefficients"},
}


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    x_points: int
    r_min: float
    r_max: float
    r_points: int


@dataclass(frozen=True)
class H2pSettings:
    z_alpha: float = 1.0
    z_beta: float = 1.0
    proton_mass: float = PROTON_MASS
    reference_curve: str = ""
    softening_table: str = ""
    dissociation_limit: float = -0.5


@dataclass(frozen=True)
class AnalysisOptions:
    full_density: bool = True
    simplified: bool = True
    perturbative: bool = True
    verify_spectra: bool = True
    schmidt_modes: int = 2
    export_modes: bool = False
    figure_data: bool = False


@dataclass(frozen=True)
class DiabatizationOptions:
    theta_span: float = math.pi / 2
    gap_threshold: float = 1e-8


@dataclass(frozen=True)
class BornHuangOptions:
    channel_cutoff: float = -0.15
    coupling_source: str = "fitted"
    write_coefficients: bool = False


@dataclass(frozen=True)
class RunConfig:
    model: str
    picture: str
    output_dir: str
    grid: GridSpec
    electronic_states: int
    energy_cutoffs: tuple
    symmetry: str = None
    h2p: H2pSettings = field(default_factory=H2pSettings)
    shin_metiu: ShinMetiuModel = field(default_factory=ShinMetiuModel)
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)
    diabatization: DiabatizationOptions = field(default_factory=DiabatizationOptions)
    born_huang: BornHuangOptions = field(default_factory=BornHuangOptions)

    def x_grid(self):
        return Grid1D.from_bounds(self.grid.x_min, self.grid.x_max, self.grid.x_points)

    def R_grid(self):
        return Grid1D.from_bounds(self.grid.r_min, self.grid.r_max, self.grid.r_points)

    def build_model(self):
        """Model dataclass without softening calibration (H2p keeps its placeholder table)."""
        if self.model == "h2p":
            return H2pModel(z_alpha=self.h2p.z_alpha, z_beta=self.h2p.z_beta, proton_mass=self.h2p.proton_mass)
        return self.shin_metiu

    def cutoff(self, surface):
        """Energy cutoff of a 0-based surface; the last listed value repeats."""
        if self.picture == "born_huang":
            return self.born_huang.channel_cutoff
        return self.energy_cutoffs[min(surface, len(self.energy_cutoffs) - 1)]

    def to_dict(self):
        return asdict(self)

    def with_output_dir(self, output_dir):
        return replace(self, output_dir=output_dir)


def config_hash(config):
    payload = config.to_dict()
    payload.pop("output_dir", None)
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _fail(message, section, key):
    raise ConfigurationError(message, module=MODULE, parameter=f"{section}.{key}")


def _get(parser, section, key, convert, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key).strip()
    if raw == "":
        return default
    try:
        return convert(raw)
    except ValueError:
        _fail(f"cannot parse '{raw}'", section, key)


def _boolean(raw):
    lowered = raw.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def _point_count(parser, key, default):
    count = _get(parser, "grid", key, int, default)
    if count < 3:
        _fail(f"{key} must be at least 3, got {count}", "grid", key)
    if count % 2 == 0:
        logger.warning("grid.%s=%d is even, using %d", key, count, count + 1)
        count += 1
    return count


def _resolve_path(raw, base_dir, section, key):
    if not raw:
        return ""
    path = raw if os.path.isabs(raw) else os.path.join(base_dir, raw)
    if not os.path.exists(path):
        _fail(f"file '{raw}' does not exist", section, key)
    return os.path.abspath(path)


def apply_environment(parser, environ=None):
    """
    Override parser entries from VIBENT_<SECTION>__<KEY> variables.
    """
    environ = os.environ if environ is None else environ
    for name in sorted(environ):
        if not name.upper().startswith(ENV_PREFIX):
            continue
        section, sep, key = name[len(ENV_PREFIX):].lower().partition("__")
        if not sep or not key:
            continue
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, environ[name])
        logger.info("config override from %s", name)
    return parser


def _check_known(parser):
    for section in parser.sections():
        if section not in KNOWN_KEYS:
            _fail(f"unknown section [{section}]", section, "*")
        for key in parser.options(section):
            if key not in KNOWN_KEYS[section]:
                _fail(f"unknown key '{key}'", section, key)


def parse_config(parser, base_dir=".", output_dir=None):
    """
    Validate a ConfigParser into a RunConfig.

    Parameters:
        parser (ConfigParser): Parsed INI content (overrides already applied).
        base_dir (str): Directory relative file paths are resolved against.
        output_dir (str): Overrides [run] output_dir when given.

    Returns:
        RunConfig: Frozen, validated configuration.
    """
    _check_known(parser)
    model = _get(parser, "run", "model", str.lower, None)
    if model not in MODELS:
        _fail(f"unknown model '{model}', expected one of {', '.join(MODELS)}", "run", "model")
    picture = _get(parser, "run", "picture", str.lower, "adiabatic")
    if picture not in PICTURES:
        _fail(f"unknown picture '{picture}', expected one of {', '.join(PICTURES)}", "run", "picture")
    if model == "h2p" and picture != "adiabatic":
        _fail("the h2p model supports only the adiabatic picture", "run", "picture")
    output_dir = output_dir or _get(parser, "run", "output_dir", str, "output")

    defaults = GRID_DEFAULTS[model]
    grid = GridSpec(
        x_min=_get(parser, "grid", "x_min", float, defaults["x_min"]),
        x_max=_get(parser, "grid", "x_max", float, defaults["x_max"]),
        x_points=_point_count(parser, "x_points", defaults["x_points"]),
        r_min=_get(parser, "grid", "r_min", float, defaults["r_min"]),
        r_max=_get(parser, "grid", "r_max", float, defaults["r_max"]),
        r_points=_point_count(parser, "r_points", defaults["r_points"]),
    )
    if grid.x_max <= grid.x_min:
        _fail("x_max must exceed x_min", "grid", "x_max")
    if grid.r_max <= grid.r_min:
        _fail("r_max must exceed r_min", "grid", "r_max")

    state_defaults = STATE_DEFAULTS[model]
    electronic_states = _get(parser, "states", "electronic_states", int, state_defaults["electronic_states"])
    if not 1 <= electronic_states <= grid.x_points:
        _fail(f"electronic_states must lie in [1, {grid.x_points}]", "states", "electronic_states")
    if picture != "adiabatic" and electronic_states != 3:
        _fail(f"the {picture} picture needs exactly 3 electronic states", "states", "electronic_states")
    cutoffs = _get(
        parser, "states", "energy_cutoffs",
        lambda raw: tuple(float(v) for v in raw.split(",") if v.strip()),
        state_defaults["energy_cutoffs"],
    )
    if not cutoffs:
        cutoffs = state_defaults["energy_cutoffs"]
    symmetry = _get(parser, "states", "symmetry", str.lower, state_defaults["symmetry"])
    symmetry = None if symmetry in (None, "none") else symmetry
    if symmetry not in (None, "gerade", "ungerade"):
        _fail(f"unknown symmetry '{symmetry}'", "states", "symmetry")
    if symmetry is not None and abs(grid.x_min + grid.x_max) > 1e-12:
        _fail("a symmetry restriction needs an x grid centered on 0", "states", "symmetry")

    h2p = H2pSettings(
        z_alpha=_get(parser, "h2p", "z_alpha", float, 1.0),
        z_beta=_get(parser, "h2p", "z_beta", float, 1.0),
        proton_mass=_get(parser, "h2p", "proton_mass", float, PROTON_MASS),
        reference_curve=_resolve_path(_get(parser, "h2p", "reference_curve", str, ""), base_dir, "h2p", "reference_curve"),
        softening_table=_resolve_path(_get(parser, "h2p", "softening_table", str, ""), base_dir, "h2p", "softening_table"),
        dissociation_limit=_get(parser, "h2p", "dissociation_limit", float, -0.5),
    )
    shin_metiu_defaults = ShinMetiuModel()
    shin_metiu = ShinMetiuModel(
        **{key: _get(parser, "shin_metiu", key, float, getattr(shin_metiu_defaults, key)) for key in KNOWN_KEYS["shin_metiu"]}
    )
    if model == "shin_metiu" and max(abs(grid.r_min), abs(grid.r_max)) >= shin_metiu.r_limit:
        _fail(f"nuclear grid must stay within |R| < {shin_metiu.r_limit:.6g}", "grid", "r_max")

    analysis = AnalysisOptions(
        full_density=_get(parser, "analysis", "full_density", _boolean, True),
        simplified=_get(parser, "analysis", "simplified", _boolean, True),
        perturbative=_get(parser, "analysis", "perturbative", _boolean, True),
        verify_spectra=_get(parser, "analysis", "verify_spectra", _boolean, True),
        schmidt_modes=_get(parser, "analysis", "schmidt_modes", int, 2),
        export_modes=_get(parser, "analysis", "export_modes", _boolean, False),
        figure_data=_get(parser, "analysis", "figure_data", _boolean, False),
    )
    if analysis.schmidt_modes < 1:
        _fail("schmidt_modes must be at least 1", "analysis", "schmidt_modes")

    theta_span = _get(parser, "diabatization", "theta_span", lambda raw: None if raw.lower() == "fit" else float(raw),
                      math.pi / 2)
    diabatization = DiabatizationOptions(
        theta_span=theta_span,
        gap_threshold=_get(parser, "diabatization", "gap_threshold", float, 1e-8),
    )
    born_huang = BornHuangOptions(
        channel_cutoff=_get(parser, "born_huang", "channel_cutoff", float, -0.15),
        coupling_source=_get(parser, "born_huang", "coupling_source", str.lower, "fitted"),
        write_coefficients=_get(parser, "born_huang", "write_coefficients", _boolean, False),
    )
    if born_huang.coupling_source not in COUPLING_SOURCES:
        _fail(f"unknown coupling source '{born_huang.coupling_source}'", "born_huang", "coupling_source")

    return RunConfig(
        model=model,
        picture=picture,
        output_dir=output_dir,
        grid=grid,
        electronic_states=electronic_states,
        energy_cutoffs=cutoffs,
        symmetry=symmetry,
        h2p=h2p,
        shin_metiu=shin_metiu,
        analysis=analysis,
        diabatization=diabatization,
        born_huang=born_huang,
    )


def load_config(path, output_dir=None, environ=None):
    """
    Read an INI run configuration.

    Parameters:
        path (str): INI file.
        output_dir (str): Overrides [run] output_dir (the --out flag).
        environ (dict): Environment used for overrides; os.environ when None.

    Returns:
        RunConfig: Validated configuration.
    """
    if not os.path.exists(path):
        raise ConfigurationError(f"config file '{path}' does not exist", module=MODULE, parameter="config")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as e:
        raise ConfigurationError(f"cannot parse '{path}': {e}", module=MODULE, parameter="config") from e
    apply_environment(parser, environ)
    return parse_config(parser, base_dir=os.path.dirname(os.path.abspath(path)), output_dir=output_dir)
