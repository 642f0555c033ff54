from configparser import ConfigParser, Error as ConfigParserError
from pathlib import Path
from typing import Any, Dict, List, Union
import hashlib
import logging

from pydantic import ValidationError

from src.core.config import settings
from src.core.exceptions import ConfigError
from src.schemas.scenario import ScenarioConfig

logger = logging.getLogger(__name__)

CORRELATION_KEYS = {
    "correlation_length_deg", "cross_correlation", "mean_u", "mean_v", "std_u", "std_v",
}

def config_hash(path: Union[str, Path]) -> str:
    """md5 of the scenario file bytes"""
    return hashlib.md5(Path(path).read_bytes()).hexdigest()

def _split_list(value: str) -> List[str]:
    return [item.strip() for item in value.replace("\n", ",").split(",") if item.strip()]

def _pair(value: str, field: str) -> List[str]:
    parts = _split_list(value)
    if len(parts) != 2:
        raise ConfigError(f"{field}: expected 'lat, lon', got {value!r}")
    return parts

class ScenarioLoader:
    """Service for turning scenario files into validated configuration"""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)

    def load(self) -> ScenarioConfig:
        """
        Parse and validate the scenario

        Returns:
            The validated ScenarioConfig (relative ensemble paths resolved
            against the scenario file, OUTPUT_DIR override applied)

        Raises:
            ConfigError: naming the offending section/field
        """
        if not self.path.exists():
            raise ConfigError(f"scenario file not found: {self.path}")
        parser = ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read(self.path, encoding="utf-8")
        except ConfigParserError as e:
            raise ConfigError(f"{self.path}: {e}") from e

        raw = self._collect(parser)
        try:
            config = ScenarioConfig.model_validate(raw)
        except ValidationError as e:
            first = e.errors()[0]
            location = ".".join(str(part) for part in first["loc"]) or "scenario"
            message = f"{self.path}: {location}: {first['msg']}"
            logger.error(message)
            raise ConfigError(message) from e

        logger.info(f"Loaded scenario {self.path} with {len(config.aircraft)} aircraft")
        return config

    def _collect(self, parser: ConfigParser) -> Dict[str, Any]:
        raw: Dict[str, Any] = {}
        known = {"run", "ensemble", "synthetic", "expansion", "quadrature", "planner", "conflict"}
        for section in parser.sections():
            if section not in known and not section.startswith("aircraft."):
                raise ConfigError(f"{self.path}: unknown section [{section}]")

        if parser.has_section("run"):
            run = parser["run"]
            raw.update({k: run[k] for k in ("output_dir", "seed", "workers") if k in run})
        if settings.OUTPUT_DIR:
            raw["output_dir"] = settings.OUTPUT_DIR

        if parser.has_section("ensemble"):
            ens = parser["ensemble"]
            base = self.path.parent
            raw["ensemble_files"] = [
                str(p if Path(p).is_absolute() else base / p) for p in _split_list(ens.get("files", ""))
            ]
            if "epsilon" in ens:
                raw["epsilon"] = ens["epsilon"]

        if parser.has_section("synthetic"):
            section = dict(parser["synthetic"])
            correlation = {k: section.pop(k) for k in list(section) if k in CORRELATION_KEYS}
            section["correlation"] = correlation
            raw["synthetic"] = section

        if parser.has_section("expansion"):
            exp = parser["expansion"]
            if "M" in exp:
                raw["m"] = exp["M"]
            if "delta" in exp:
                raw["delta"] = exp["delta"]
        if parser.has_section("quadrature") and "p" in parser["quadrature"]:
            raw["p"] = parser["quadrature"]["p"]
        if parser.has_section("planner"):
            raw.update(dict(parser["planner"]))

        if parser.has_section("conflict"):
            conflict = dict(parser["conflict"])
            if "probe_times" in conflict:
                conflict["probe_times"] = _split_list(conflict["probe_times"])
            time = conflict.pop("conditioning_time", None)
            bound = conflict.pop("conditioning_bound_nm", None)
            if (time is None) != (bound is None):
                raise ConfigError(
                    f"{self.path}: conflict.conditioning_time and conflict.conditioning_bound_nm must be given together"
                )
            if time is not None:
                conflict["conditioning"] = {"time": time, "bound_nm": bound}
            raw.update(conflict)

        raw["aircraft"] = []
        for section in parser.sections():
            if not section.startswith("aircraft."):
                continue
            values = dict(parser[section])
            spec: Dict[str, Any] = {"id": section.split(".", 1)[1]}
            for key in ("origin", "destination"):
                if key in values:
                    spec[key] = _pair(values.pop(key), f"{section}.{key}")
            spec.update(values)
            raw["aircraft"].append(spec)
        return raw

def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    return ScenarioLoader(path).load()
