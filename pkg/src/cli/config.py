"""
Run configuration.

Values are layered, later layers winning:
    bundled src/data/default_run.toml
    --config PATH (TOML, or INI when the suffix is .ini/.cfg)
    environment STREAMFN_<SECTION>__<KEY> (after load_dotenv)
    command-line flags (--out, --threads, --tol)
"""

import configparser
import json
import logging
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import Any, Dict, List, Optional, Tuple, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.calculation.solver import DEFAULT_TOL, MAX_ITER_FACTOR, MAX_TOL
from src.geometry.domain_grid import (
    DEFAULT_A,
    DEFAULT_C0,
    DEFAULT_R,
    DEFAULT_R0,
    DEFAULT_RHO,
    CutoffK,
    CylinderDomain,
    build_cutoff,
)
from src.utils.errors import ConfigError
from src.verification.cases import CASE_NAMES, ManufacturedCase, case_suite
from src.verification.estimates import ESTIMATES

logger = logging.getLogger(__name__)

ENV_PREFIX = "STREAMFN_"
INI_SUFFIXES = (".ini", ".cfg")
DEFAULT_CONFIG_PATH = os.path.join(
    os.path.dirname(os.path.abspath(__file__)), "..", "data", "default_run.toml"
)

Mesh = Union[int, Tuple[int, int]]


# ---------------------------------------------------------------------------
# Sections
# ---------------------------------------------------------------------------

class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainSection(_Section):
    R: float = Field(DEFAULT_R, gt=0)
    a: float = Field(DEFAULT_A, gt=0)
    r0: float = Field(DEFAULT_R0, gt=0)

    @model_validator(mode="after")
    def _r0_inside(self):
        if not 2 * self.r0 < self.R:
            raise ValueError(f"need 2*r0 < R, got r0={self.r0}, R={self.R}")
        return self

    def build(self) -> CylinderDomain:
        return CylinderDomain(R=self.R, a=self.a, r0=self.r0)


class GridSection(_Section):
    nr: int = Field(64, ge=4)
    nz: int = Field(64, ge=4)


class CutoffSection(_Section):
    c0: float = DEFAULT_C0
    rho: float = Field(DEFAULT_RHO, gt=0)

    def build(self) -> CutoffK:
        return build_cutoff(self.c0, self.rho)


class SolverSection(_Section):
    tol: float = Field(DEFAULT_TOL, gt=0, le=MAX_TOL)
    max_iter_factor: int = Field(MAX_ITER_FACTOR, ge=1)
    direct_psi: bool = False


class SweepSection(_Section):
    cases: List[str] = Field(default_factory=lambda: list(CASE_NAMES))
    estimates: List[str] = Field(default_factory=lambda: list(ESTIMATES))
    mus: List[float] = Field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9])
    meshes: List[Mesh] = Field(default_factory=lambda: [16, 32, 64])

    @field_validator("cases")
    @classmethod
    def _known_cases(cls, value: List[str]) -> List[str]:
        unknown = [name for name in value if name not in CASE_NAMES]
        if unknown:
            raise ValueError(f"unknown cases: {', '.join(unknown)}")
        return value

    @field_validator("estimates")
    @classmethod
    def _known_estimates(cls, value: List[str]) -> List[str]:
        unknown = [eid for eid in value if eid not in ESTIMATES]
        if unknown:
            raise ValueError(f"unknown estimates: {', '.join(unknown)}")
        return value

    @field_validator("mus")
    @classmethod
    def _mu_range(cls, value: List[float]) -> List[float]:
        bad = [mu for mu in value if not 0.0 <= mu < 1.0]
        if bad:
            raise ValueError(f"mu values must lie in [0, 1), got {bad}")
        return value

    @field_validator("meshes")
    @classmethod
    def _mesh_sizes(cls, value: List[Mesh]) -> List[Mesh]:
        if not value:
            raise ValueError("mesh list is empty")
        for mesh in value:
            sizes = (mesh,) if isinstance(mesh, int) else mesh
            if min(sizes) < 6:
                raise ValueError(f"mesh {mesh} is too coarse (need at least 6 cells per direction)")
        return value

    def mesh_pairs(self) -> List[Tuple[int, int]]:
        return [(m, m) if isinstance(m, int) else (m[0], m[1]) for m in self.meshes]


class MellinSection(_Section):
    h: float = 0.5
    h1: float = -0.5
    h2: float = 0.5
    hbar1: float = -0.5
    hbar2: float = 1.5
    gaussian_center: float = 6.0
    gaussian_width: float = 1.0
    sigma_min: float = -40.0
    sigma_max: float = 40.0
    points: int = Field(801, ge=2)


class HardySection(_Section):
    alphas: List[float] = Field(default_factory=lambda: [-0.5, 0.0, 0.5])
    betas: List[float] = Field(default_factory=lambda: [0.51, 0.55, 0.6, 0.75, 1.0, 1.5])


class RunConfig(_Section):
    """Everything one CLI invocation needs."""
    domain: DomainSection = Field(default_factory=DomainSection)
    grid: GridSection = Field(default_factory=GridSection)
    cutoff: CutoffSection = Field(default_factory=CutoffSection)
    solver: SolverSection = Field(default_factory=SolverSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    mellin: MellinSection = Field(default_factory=MellinSection)
    hardy: HardySection = Field(default_factory=HardySection)
    out_dir: str = "output"
    threads: int = Field(1, ge=1)

    def cases(self) -> List[ManufacturedCase]:
        return case_suite(self.domain.R, self.domain.a, self.sweep.cases)

    def harness_kwargs(self) -> Dict[str, Any]:
        """Keyword arguments shared by solve_case, refinement_study and run_sweep."""
        return {
            "domain": self.domain.build(),
            "cutoff": self.cutoff.build(),
            "tol": self.solver.tol,
            "direct_psi": self.solver.direct_psi,
            "max_iter_factor": self.solver.max_iter_factor,
        }


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _parse_scalar(raw: str) -> Any:
    """JSON-ish literal (numbers, booleans, lists) or the raw string."""
    text = raw.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _merge(base: Dict, override: Dict) -> Dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def read_config_file(path: str) -> Dict:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.lower().endswith(INI_SUFFIXES):
            parser = configparser.ConfigParser()
            parser.optionxform = str
            parser.read(path)
            data: Dict[str, Any] = {key: _parse_scalar(value) for key, value in parser.defaults().items()}
            for section in parser.sections():
                data[section] = {key: _parse_scalar(value)
                                 for key, value in parser.items(section, raw=True)
                                 if key not in parser.defaults()}
            return data
        with open(path, "rb") as f:
            return tomllib.load(f)
    except (tomllib.TOMLDecodeError, configparser.Error) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def env_overrides(environ: Optional[Dict[str, str]] = None) -> Dict:
    """STREAMFN_SOLVER__TOL=1e-9 → {"solver": {"tol": 1e-9}}; STREAMFN_THREADS=4 → {"threads": 4}."""
    environ = os.environ if environ is None else environ
    data: Dict[str, Any] = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower()
        if "__" in key:
            section, field_name = key.split("__", 1)
            field_name = "R" if field_name == "r" else field_name
            data.setdefault(section, {})[field_name] = _parse_scalar(raw)
        elif key in RunConfig.model_fields:
            data[key] = _parse_scalar(raw)
    return data


def load_config(path: Optional[str] = None, overrides: Optional[Dict] = None,
                environ: Optional[Dict[str, str]] = None) -> RunConfig:
    """
    Build the RunConfig from the bundled defaults, an optional file, the
    environment and explicit overrides (None values are ignored).
    """
    if environ is None:
        load_dotenv()
    data = read_config_file(DEFAULT_CONFIG_PATH) if os.path.isfile(DEFAULT_CONFIG_PATH) else {}
    if path:
        data = _merge(data, read_config_file(path))
    data = _merge(data, env_overrides(environ))
    if overrides:
        data = _merge(data, {k: v for k, v in overrides.items() if v is not None})
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc.errors()[0]['msg']}") from exc
    logger.debug("configuration loaded (file=%s)", path)
    return config


def ensure_out_dir(config: RunConfig) -> str:
    try:
        os.makedirs(config.out_dir, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {config.out_dir} is not writable: {exc}") from exc
    if not os.access(config.out_dir, os.W_OK):
        raise ConfigError(f"output directory {config.out_dir} is not writable")
    return config.out_dir


def cli_overrides(out: Optional[str], threads: Optional[int], tol: Optional[float]) -> Dict:
    data: Dict[str, Any] = {"out_dir": out, "threads": threads}
    if tol is not None:
        data["solver"] = {"tol": tol}
    return data
