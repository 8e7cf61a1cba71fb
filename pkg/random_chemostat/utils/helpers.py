import copy
import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import yaml

from random_chemostat.model import ChemostatParams, State
from random_chemostat.utils.exceptions import ConfigurationError
from random_chemostat.utils.logger import logger

logger = logger()

CONFIG_VERSION = 1
THREADS_ENV = 'CHEMOSTAT_THREADS'


@dataclass(frozen=True)
class SimulationSettings:
    """
    The optional 'simulation' section of a config document

    Parameters
    ----------
    initial : Tuple[float, float, float], optional
        (s, m1, m2) at t = 0, by default (20, 14, 10)
    t_end : float, optional
        Horizon, by default 100
    dt : float, optional
        RK4 step and noise grid spacing, by default 1e-3
    record_every : int, optional
        Recording stride, by default 100
    burn_in : float, optional
        OU pre-roll, by default 10
    seeds : Tuple[int, ...], optional
        Explicit seed list; if None, 1..n_seeds is used, by default None
    n_seeds : int, optional
        Number of noisy runs when seeds is None, by default 5
    extinction_threshold : float, optional
        Tail max of m1 + m2 below this counts as extinct, by default 1e-2
    persistence_threshold : float, optional
        Tail min of m1 and m2 above this counts as persistent, by default 1e-2
    name : str, optional
        Run label, by default 'custom'
    """
    initial: Tuple[float, float, float] = (20.0, 14.0, 10.0)
    t_end: float = 100.0
    dt: float = 1e-3
    record_every: int = 100
    burn_in: float = 10.0
    seeds: Optional[Tuple[int, ...]] = None
    n_seeds: int = 5
    extinction_threshold: float = 1e-2
    persistence_threshold: float = 1e-2
    name: str = 'custom'

    def __post_init__(self):
        if len(self.initial) != 3:
            raise ConfigurationError(
                f"simulation.initial must be [s, m1, m2], got {list(self.initial)}")
        object.__setattr__(self, 'initial', tuple(float(v) for v in self.initial))
        # validates nonnegativity
        State(*self.initial)
        if self.seeds is not None:
            seeds = tuple(self.seeds)
            if any(isinstance(s, bool) or not isinstance(s, int) or s < 0 for s in seeds):
                raise ConfigurationError(
                    f"simulation.seeds must be non-negative integers, got {list(seeds)}")
            object.__setattr__(self, 'seeds', seeds)
        if isinstance(self.n_seeds, bool) or not isinstance(self.n_seeds, int) or self.n_seeds < 0:
            raise ConfigurationError(f"simulation.n_seeds must be an integer >= 0, got {self.n_seeds!r}")
        if isinstance(self.record_every, bool) or not isinstance(self.record_every, int) \
                or self.record_every < 1:
            raise ConfigurationError(
                f"simulation.record_every must be a positive integer, got {self.record_every!r}")
        for name in ('t_end', 'dt', 'extinction_threshold', 'persistence_threshold'):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"simulation.{name} must be > 0, got {getattr(self, name)}")
        if not self.burn_in >= 0:
            raise ConfigurationError(f"simulation.burn_in must be >= 0, got {self.burn_in}")

    @property
    def seed_list(self) -> List[int]:
        if self.seeds is not None:
            return list(self.seeds)
        return list(range(1, self.n_seeds + 1))

    @property
    def initial_state(self) -> State:
        return State(*self.initial)


SIMULATION_FIELDS = {f.name: f.type for f in fields(SimulationSettings)}
PARAM_FIELDS = {f.name for f in fields(ChemostatParams)}


@dataclass(frozen=True)
class RunConfig:
    """A loaded config document: model params plus simulation settings."""
    params: ChemostatParams
    simulation: SimulationSettings = field(default_factory=SimulationSettings)


def _simulation_from_dict(data: Dict) -> SimulationSettings:
    if not isinstance(data, dict):
        raise ConfigurationError(f"simulation must be a mapping, got {data!r}")
    unknown = sorted(set(data) - set(SIMULATION_FIELDS))
    if unknown:
        raise ConfigurationError(
            f"unknown simulation field(s): {', '.join('simulation.' + u for u in unknown)}")
    values = dict(data)
    try:
        for name in ('t_end', 'dt', 'burn_in', 'extinction_threshold', 'persistence_threshold'):
            if name in values:
                values[name] = float(values[name])
        for name in ('record_every', 'n_seeds'):
            if name in values and isinstance(values[name], float) and values[name].is_integer():
                values[name] = int(values[name])
        if 'initial' in values:
            values['initial'] = tuple(float(v) for v in values['initial'])
        if values.get('seeds') is not None:
            values['seeds'] = tuple(values['seeds'])
        if 'name' in values:
            values['name'] = str(values['name'])
    except (TypeError, ValueError) as error:
        raise ConfigurationError(f"invalid simulation section: {error}")
    return SimulationSettings(**values)


def config_from_dict(doc: Dict) -> RunConfig:
    """
    Build a RunConfig from a parsed document

    Raises
    ------
    ConfigurationError
        Wrong version, unknown section or field, invalid value
    """
    if not isinstance(doc, dict):
        raise ConfigurationError(f"config must be a mapping, got {type(doc).__name__}")
    unknown = sorted(set(doc) - {'spec', 'params', 'simulation'})
    if unknown:
        raise ConfigurationError(f"unknown config section(s): {', '.join(unknown)}")
    if doc.get('spec') != CONFIG_VERSION:
        raise ConfigurationError(
            f"config field 'spec' must be {CONFIG_VERSION}, got {doc.get('spec')!r}")
    if 'params' not in doc:
        raise ConfigurationError("config is missing the 'params' section")
    params = ChemostatParams.from_dict(doc['params'])
    simulation = _simulation_from_dict(doc.get('simulation') or {})
    return RunConfig(params=params, simulation=simulation)


def config_to_dict(cfg: RunConfig) -> Dict:
    simulation = asdict(cfg.simulation)
    simulation['initial'] = list(cfg.simulation.initial)
    if cfg.simulation.seeds is not None:
        simulation['seeds'] = list(cfg.simulation.seeds)
    return {'spec': CONFIG_VERSION, 'params': cfg.params.to_dict(), 'simulation': simulation}


def read_document(path: str) -> Dict:
    """Parse a config file into a plain mapping: .json with json, anything else as YAML."""
    if not os.path.isfile(path):
        raise ConfigurationError(f"config file not found: {path}")
    with open(path, 'r') as f:
        if path.lower().endswith('.json'):
            try:
                return json.load(f)
            except json.JSONDecodeError as error:
                raise ConfigurationError(f"{path}: cannot parse config: {error}")
        try:
            return yaml.load(f, Loader=yaml.FullLoader)
        except yaml.YAMLError as error:
            raise ConfigurationError(f"{path}: cannot parse config: {error}")


def load_config(path: str, overrides: Sequence[str] = ()) -> RunConfig:
    """
    Load a config file and apply dotted overrides

    Parameters
    ----------
    path : str
        JSON (or YAML) document with 'spec', 'params' and optional 'simulation'
    overrides : Sequence[str], optional
        'key=value' strings, by default ()

    Returns
    -------
    RunConfig
    """
    doc = apply_overrides(read_document(path), overrides)
    return config_from_dict(doc)


def save_config(cfg: RunConfig, path: str) -> None:
    write_json(config_to_dict(cfg), path)


def _resolve_key(doc: Dict, key: str) -> Tuple[Dict, str]:
    parts = key.split('.')
    if parts[0] in ('params', 'simulation'):
        section, parts = parts[0], parts[1:]
    elif parts[0] in PARAM_FIELDS:
        section = 'params'
    elif parts[0] in SIMULATION_FIELDS:
        section = 'simulation'
    else:
        raise ConfigurationError(f"override key '{key}' does not name a parameter or setting")
    if not parts:
        raise ConfigurationError(f"override key '{key}' names a whole section")

    known = PARAM_FIELDS if section == 'params' else set(SIMULATION_FIELDS)
    if parts[0] not in known:
        raise ConfigurationError(f"override key '{key}': unknown field {section}.{parts[0]}")
    if parts[0] == 'kinetics':
        if len(parts) != 2 or parts[1] not in ('type', 'k', 'i'):
            raise ConfigurationError(f"override key '{key}': expected kinetics.type|k|i")
    elif len(parts) != 1:
        raise ConfigurationError(f"override key '{key}': {section}.{parts[0]} has no sub-fields")

    node = doc.setdefault(section, {})
    if node is None:
        node = doc[section] = {}
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"override key '{key}': {part} is not a mapping")
    return node, parts[-1]


def _parse_value(item: str, raw: str):
    # JSON first so that 1e2 is a number, then YAML for bare words
    try:
        return json.loads(raw)
    except ValueError:
        pass
    try:
        return yaml.safe_load(raw)
    except yaml.YAMLError:
        raise ConfigurationError(f"override '{item}': cannot parse value {raw!r}")


def apply_overrides(doc: Dict, overrides: Sequence[str]) -> Dict:
    """
    Apply 'dotted.key=value' overrides onto a copy of a config document

    Keys resolve against params first, then simulation; explicit 'params.'
    and 'simulation.' prefixes are accepted. Values are parsed as JSON,
    falling back to YAML scalars or flow sequences ('a=0', 'kinetics.type=haldane',
    'initial=[1, 2, 3]').

    Raises
    ------
    ConfigurationError
        Malformed override or unknown key
    """
    if not isinstance(doc, dict):
        raise ConfigurationError(f"config must be a mapping, got {type(doc).__name__}")
    doc = copy.deepcopy(doc)
    for item in overrides:
        key, sep, raw = item.partition('=')
        key = key.strip()
        if not sep or not key:
            raise ConfigurationError(f"override '{item}' is not of the form key=value")
        value = _parse_value(item, raw)
        node, leaf = _resolve_key(doc, key)
        node[leaf] = value
        logger.debug(f"override {key} = {value!r}")
    return doc


def threads_from_env(processes: Optional[int] = None) -> int:
    """Worker count: explicit argument, else CHEMOSTAT_THREADS, else cpu count."""
    if processes is not None:
        count = processes
    else:
        raw = os.environ.get(THREADS_ENV)
        if raw is None or raw.strip() == '':
            return os.cpu_count() or 1
        try:
            count = int(raw)
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {raw!r}")
    if count < 1:
        raise ConfigurationError(f"worker count must be >= 1, got {count}")
    return count


def write_json(data: Dict, path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=False)
        f.write('\n')
