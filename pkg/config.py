import configparser
import logging
import os
from pathlib import Path
from typing import Optional, Union

from dotenv import load_dotenv
from pydantic import ValidationError

from exceptions import ConfigError
from models import RunConfig

load_dotenv()

logger = logging.getLogger(__name__)


class Config:
    WORKERS = int(os.getenv("DEGCTRL_WORKERS", "4"))

    K_MODES = 32
    FAMILY_MODES = 8
    DELTA = 0.5
    TIME_SAMPLES = 4096
    FOURIER_TOL = 1e-15
    FOURIER_R_MAX = 1e6
    QUAD_TOL = 1e-10
    QUAD_NODES = 16
    QUAD_PANELS = 40
    BUMP_PANELS = 64
    CERT_TOL = 1e-6
    BIORTH_TOL = 1e-6
    SAFETY_FACTOR = 1.0
    C_UPPER = 1.0
    C_LOWER = 1.0
    ZERO_BUDGET = 200000
    CSV_DIGITS = 17


_SECTIONS = ("problem", "numerics", "initial_data", "outputs")


def _coerce(section: str, key: str, raw: str):
    if section == "outputs" and key == "formats":
        return [item.strip() for item in raw.split(",") if item.strip()]
    return raw.strip()


def load_run_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """Read an INI run file ([problem], [numerics], [initial_data], [outputs])."""
    if path is None:
        return RunConfig()

    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")

    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        parser.read(path)
    except configparser.Error as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e

    unknown = [s for s in parser.sections() if s not in _SECTIONS]
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(unknown)}")

    data = {
        section: {key: _coerce(section, key, value) for key, value in parser.items(section)}
        for section in parser.sections()
    }
    try:
        run_config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid config {path}: {e}") from e

    logger.info(f"Loaded run config from {path}")
    return run_config
