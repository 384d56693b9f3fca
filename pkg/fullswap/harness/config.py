"""
Experiment configuration

Scenario presets live in a JSON file shaped like

    {"defaults": {...}, "scenarios": {"<name>": {...}}}

load_config merges the defaults with one scenario. Values from a config
file override command-line flags, which override the built-in defaults.
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, Optional

from ..errors import ConfigurationError

logger = logging.getLogger(__name__)

SCENARIOS = ("calibration", "discretized-calibration", "structured-game", "oco-envelope",
             "swap-decomposition")

BODIES = ("interval", "box", "ball")

# excluded from the content hash so the same run hashes identically wherever it writes
OUTPUT_FIELDS = ("out", "description")


@dataclass
class ExperimentConfig:
    """One run of one scenario"""

    scenario: str = "calibration"
    T: int = 1000
    d: int = 1
    loss_class: str = "sc-smooth"
    eps: Optional[float] = None
    adversary: str = "bernoulli(0.5)"
    seed: int = 0
    out: str = "results"
    forecaster: str = "discretized-swap"
    schedule: str = "gds"
    body: str = "interval"
    alpha: float = 2.0
    lipschitz: float = 1.0
    n_actions: int = 20
    game_file: Optional[str] = None
    checkpoints: int = 50
    description: str = ""
    tolerances: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario '{self.scenario}' (known: {SCENARIOS})")
        if int(self.T) < 1:
            raise ConfigurationError(f"horizon T must be at least 1, got {self.T}")
        if int(self.d) < 1:
            raise ConfigurationError(f"dimension d must be at least 1, got {self.d}")
        if self.eps is not None and not (0.0 < float(self.eps) <= 1.0):
            raise ConfigurationError(f"eps must lie in (0, 1], got {self.eps}")
        if self.body not in BODIES:
            raise ConfigurationError(f"unknown body '{self.body}' (known: {BODIES})")
        self.T = int(self.T)
        self.d = int(self.d)
        self.seed = int(self.seed)

    @classmethod
    def from_dict(cls, values: Dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {unknown}")
        return cls(**values)

    def to_dict(self) -> Dict:
        return asdict(self)

    def content_hash(self) -> str:
        """sha256 of the canonical JSON of every input field"""
        inputs = {k: v for k, v in self.to_dict().items() if k not in OUTPUT_FIELDS}
        return hashlib.sha256(json.dumps(inputs, sort_keys=True, default=str).encode()).hexdigest()

    def run_name(self) -> str:
        return f"{self.scenario}_T{self.T}_seed{self.seed}"


def load_config(config_path="experiment_config.json", scenario_name="calibration") -> Dict:
    """Defaults merged with one named scenario from a JSON config file"""
    try:
        with open(config_path, "r") as f:
            config = json.load(f)
    except FileNotFoundError as e:
        raise ConfigurationError(f"configuration file not found: {config_path}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"invalid JSON in configuration file {config_path}: {e}") from e
    try:
        scenario = config["scenarios"][scenario_name]
    except KeyError as e:
        raise ConfigurationError(f"scenario '{scenario_name}' not found in {config_path}") from e
    merged = dict(config.get("defaults", {}))
    merged.update(scenario)
    logger.debug(f"Loaded scenario '{scenario_name}' from {config_path}")
    return merged


def resolve_config(flags: Optional[Dict] = None, config_path: Optional[str] = None,
                   scenario_name: Optional[str] = None) -> ExperimentConfig:
    """Built-in defaults < command-line flags < config file"""
    values = {k: v for k, v in (flags or {}).items() if v is not None}
    if config_path is not None:
        values.update(load_config(config_path, scenario_name or values.get("scenario", "calibration")))
    return ExperimentConfig.from_dict(values)
