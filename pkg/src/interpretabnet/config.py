"""Run configuration: an INI-style ``key = value`` file with one section per module.

Sections and their keys:

* ``[run]``: ``seed``, ``out``
* ``[data]``: ``input``, ``cleaner``, ``label``, ``splits``, ``normalization``,
  ``split_ratios``, ``stratified``
* ``[arch]``: every :class:`~interpretabnet.model.ArchConfig` field
* ``[pretrain]`` / ``[train]``: every :class:`~interpretabnet.training.TrainConfig` field
* ``[stability]``: every :class:`~interpretabnet.stability.StabilityConfig` field
* ``[pfi]``: ``metric``, ``n_repeats``, ``reduction``

Unknown sections or keys are rejected. Sequences are comma separated.
"""
import configparser
import dataclasses
from dataclasses import dataclass, field

from .errors import ConfigError
from .model import ArchConfig
from .stability import StabilityConfig
from .training import TrainConfig


@dataclass
class DataConfig:
    input: str = ""
    cleaner: str = "none"
    label: str = ""
    splits: str = ""
    normalization: str = "zscore"
    split_ratios: tuple = (0.7, 0.1, 0.2)
    stratified: bool = True


@dataclass
class PFIConfig:
    metric: str = "accuracy"
    n_repeats: int = 5
    reduction: str = "mean"


@dataclass
class RunSection:
    seed: int = 0
    out: str = ""


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    data: DataConfig = field(default_factory=DataConfig)
    arch: ArchConfig = field(default_factory=ArchConfig)
    pretrain: TrainConfig = field(default_factory=TrainConfig.pretraining)
    train: TrainConfig = field(default_factory=TrainConfig.finetuning)
    stability: StabilityConfig = field(default_factory=StabilityConfig)
    pfi: PFIConfig = field(default_factory=PFIConfig)

    def with_seed(self, seed):
        """Apply a global seed to every seeded section."""
        self.run.seed = seed
        self.pretrain.seed = seed
        self.train.seed = seed
        self.stability.sampling_seed = seed
        self.stability.training_seed = seed
        return self

    def dump(self, path):
        parser = configparser.ConfigParser()
        for section in SECTIONS:
            obj = getattr(self, section)
            parser[section] = {f.name: _format(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        with open(path, "w") as fh:
            parser.write(fh)


SECTIONS = ("run", "data", "arch", "pretrain", "train", "stability", "pfi")


def _format(value):
    if isinstance(value, (tuple, list)):
        return ", ".join(str(v) for v in value)
    return str(value)


def _parse(raw, default, key):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, (tuple, list)):
            items = [v.strip() for v in raw.split(",") if v.strip()]
            kind = type(default[0]) if default else float
            return tuple(kind(v) for v in items)
    except ValueError:
        raise ConfigError(f"cannot parse {key} = {raw!r}") from None
    return raw


def load_config(path=None, overrides=None):
    """Parse ``path`` (if given) on top of the defaults; validate every key."""
    cfg = RunConfig()
    parser = configparser.ConfigParser()
    if path:
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        current = getattr(cfg, section)
        known = {f.name for f in dataclasses.fields(current)}
        values = {}
        for key, raw in parser[section].items():
            if key not in known:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            values[key] = _parse(raw, getattr(current, key), f"[{section}] {key}")
        try:
            setattr(cfg, section, dataclasses.replace(current, **values))
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
    for (section, key), value in (overrides or {}).items():
        setattr(getattr(cfg, section), key, value)
    return cfg
