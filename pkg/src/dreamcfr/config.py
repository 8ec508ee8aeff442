"""Key=value experiment configuration with per-game defaults.

A config document is plain text: one ``key = value`` pair per line,
``#`` starts a comment, blank lines ignored. Unknown and duplicate keys
are errors that name the offending line. Missing keys take defaults
that depend on the game and algorithm; each default carries an origin
tag so ``print-config`` can show where a number comes from:

* ``published``: stated in the published experiment setup these
  defaults follow,
* ``artifact default``: chosen by this implementation,
* ``set in config``: explicitly given in the parsed document.

The ``desk`` profile rescales the published workload to laptop size:
buffer capacities divide by 100 and batch counts by 10. Scaling applies
to defaulted values only; explicitly configured numbers are used as is.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields
from typing import Dict, Optional, Tuple

from .errors import ConfigError
from .trainer import ALGORITHMS, DREAM, ES_SDCFR, OS_SDCFR, RESET_MODES, TrainerConfig, WEIGHTINGS

GAMES = ("kuhn", "leduc", "fhp")
PROFILES = ("paper", "desk")
LOG_FORMATS = ("csv", "jsonl")

PUBLISHED = "published"
ARTIFACT = "artifact default"
EXPLICIT = "set in config"

# capacities / 100 and batch counts / 10 in the desk profile
DESK_CAPACITY_DIV = 100
DESK_BATCHES_DIV = 10
_DESK_CAPACITY_KEYS = ("adv_capacity", "q_capacity", "avg_capacity")
_DESK_BATCH_KEYS = ("q_batches", "d_batches", "d_finetune_batches", "avg_batches")


@dataclass(frozen=True)
class ExperimentConfig:
    trainer: TrainerConfig
    profile: str = "paper"
    cadence: int = 5
    output_dir: Optional[str] = None
    log_format: str = "csv"
    deterministic: bool = False
    probe_hands: int = 1000
    big_blind: int = 100
    origins: Tuple[Tuple[str, str], ...] = ()

    def validate(self) -> None:
        self.trainer.validate()
        if self.profile not in PROFILES:
            raise ConfigError(f"profile must be one of {PROFILES}, got {self.profile!r}")
        if self.log_format not in LOG_FORMATS:
            raise ConfigError(f"log_format must be one of {LOG_FORMATS}, got {self.log_format!r}")
        if self.cadence < 1:
            raise ConfigError(f"cadence must be >= 1, got {self.cadence}")
        if self.probe_hands < 1:
            raise ConfigError(f"probe_hands must be >= 1, got {self.probe_hands}")
        if self.big_blind <= 0:
            raise ConfigError(f"big_blind must be positive, got {self.big_blind}")
        if self.trainer.game not in GAMES:
            raise ConfigError(f"game must be one of {GAMES}, got {self.trainer.game!r}")


def _traversal_default(game: str, algorithm: str) -> Tuple[int, str]:
    if game == "leduc":
        return (346, PUBLISHED) if algorithm == ES_SDCFR else (900, PUBLISHED)
    if game == "fhp":
        return (10000, PUBLISHED) if algorithm == ES_SDCFR else (50000, PUBLISHED)
    return (900, ARTIFACT)


def _capacity_default(game: str) -> Tuple[int, str]:
    if game == "leduc":
        return 2_000_000, PUBLISHED
    if game == "fhp":
        return 40_000_000, PUBLISHED
    return 2_000_000, ARTIFACT


def defaults_for(game: str, algorithm: str) -> Dict[str, Tuple[object, str]]:
    """Every config key's default value and origin for a (game, algorithm)."""
    adv_cap, adv_origin = _capacity_default(game)
    traversals, trav_origin = _traversal_default(game, algorithm)
    table: Dict[str, Tuple[object, str]] = {
        "game": (game, EXPLICIT),
        "algorithm": (algorithm, EXPLICIT),
        "epsilon": (0.5, ARTIFACT),
        "traversals": (traversals, trav_origin),
        "weighting": ("linear", PUBLISHED),
        "reset_mode": ("always", PUBLISHED),
        "iterations": (100, ARTIFACT),
        "seed": (0, ARTIFACT),
        "adv_capacity": (adv_cap, adv_origin),
        "q_capacity": (200_000, PUBLISHED),
        "avg_capacity": (adv_cap, ARTIFACT),
        "q_batches": (1000, PUBLISHED),
        "q_batch_size": (512, PUBLISHED),
        "d_batches": (3000, PUBLISHED),
        "d_finetune_batches": (500, PUBLISHED),
        "d_batch_size": (2048, PUBLISHED if game != "fhp" else ARTIFACT),
        "avg_batches": (4000, PUBLISHED),
        "avg_batch_size": (2048, PUBLISHED),
        "lr": (0.001, PUBLISHED),
        "clip": (1.0, PUBLISHED),
        "hidden": (64, PUBLISHED),
        "n_hidden": (3, ARTIFACT),
        "stored_pi": (False, ARTIFACT),
        "profile": ("paper", ARTIFACT),
        "cadence": (5, ARTIFACT),
        "output_dir": (None, ARTIFACT),
        "log_format": ("csv", ARTIFACT),
        "deterministic": (False, ARTIFACT),
        "probe_hands": (1000, ARTIFACT),
        "big_blind": (100, PUBLISHED if game == "fhp" else ARTIFACT),
    }
    return table


_TRAINER_KEYS = {f.name for f in dc_fields(TrainerConfig)}
_EXPERIMENT_KEYS = {
    "profile",
    "cadence",
    "output_dir",
    "log_format",
    "deterministic",
    "probe_hands",
    "big_blind",
}
ALL_KEYS = _TRAINER_KEYS | _EXPERIMENT_KEYS

_ALGORITHM_ALIASES = {
    "dream": DREAM,
    "os-sdcfr": OS_SDCFR,
    "os-sd-cfr": OS_SDCFR,
    "es-sdcfr": ES_SDCFR,
    "es-sd-cfr": ES_SDCFR,
    "sd-cfr": ES_SDCFR,
}

_BOOL_WORDS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _parse_scalar(key: str, raw: str, line_no: int):
    kind = _FIELD_KINDS[key]
    try:
        if kind is bool:
            word = raw.lower()
            if word not in _BOOL_WORDS:
                raise ValueError(f"expected a boolean, got {raw!r}")
            return _BOOL_WORDS[word]
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}", line=line_no) from None


_FIELD_KINDS: Dict[str, type] = {}
for f in dc_fields(TrainerConfig):
    _FIELD_KINDS[f.name] = f.type if isinstance(f.type, type) else {"str": str, "int": int, "float": float, "bool": bool}[f.type]
_FIELD_KINDS.update(
    profile=str,
    cadence=int,
    output_dir=str,
    log_format=str,
    deterministic=bool,
    probe_hands=int,
    big_blind=int,
)


def parse_pairs(text: str) -> Dict[str, Tuple[str, int]]:
    """Raw key -> (value text, line number), with duplicate/shape errors."""
    pairs: Dict[str, Tuple[str, int]] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected key = value, got {body!r}", line=line_no)
        key, _, value = body.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"expected key = value, got {body!r}", line=line_no)
        if key in pairs:
            raise ConfigError(f"duplicate key {key!r}", line=line_no)
        pairs[key] = (value, line_no)
    return pairs


def build_config(overrides: Dict[str, object]) -> ExperimentConfig:
    """Merge explicit settings over game/algorithm defaults and validate."""
    unknown = set(overrides) - ALL_KEYS
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r}")
    game = str(overrides.get("game", "leduc")).lower()
    algorithm = str(overrides.get("algorithm", DREAM)).lower()
    algorithm = _ALGORITHM_ALIASES.get(algorithm, algorithm)
    if game not in GAMES:
        raise ConfigError(f"game must be one of {GAMES}, got {game!r}")
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
    table = defaults_for(game, algorithm)
    profile = str(overrides.get("profile", table["profile"][0])).lower()
    if profile not in PROFILES:
        raise ConfigError(f"profile must be one of {PROFILES}, got {profile!r}")

    values: Dict[str, object] = {}
    origins: Dict[str, str] = {}
    for key, (default, origin) in table.items():
        if key in overrides:
            values[key] = overrides[key]
            origins[key] = EXPLICIT
        else:
            value = default
            if profile == "desk":
                if key in _DESK_CAPACITY_KEYS:
                    value = max(1, int(default) // DESK_CAPACITY_DIV)
                elif key in _DESK_BATCH_KEYS:
                    value = max(1, int(default) // DESK_BATCHES_DIV)
            values[key] = value
            origins[key] = origin
    values["game"] = game
    values["algorithm"] = algorithm
    values["profile"] = profile
    for key in ("game", "algorithm", "profile"):
        origins[key] = EXPLICIT if key in overrides else ARTIFACT

    trainer = TrainerConfig(**{k: values[k] for k in _TRAINER_KEYS})
    config = ExperimentConfig(
        trainer=trainer,
        profile=profile,
        cadence=int(values["cadence"]),
        output_dir=values["output_dir"],
        log_format=str(values["log_format"]).lower(),
        deterministic=bool(values["deterministic"]),
        probe_hands=int(values["probe_hands"]),
        big_blind=int(values["big_blind"]),
        origins=tuple(sorted(origins.items())),
    )
    config.validate()
    return config


def parse_config(text: str) -> ExperimentConfig:
    """Parse a key=value document into a validated configuration."""
    pairs = parse_pairs(text)
    overrides: Dict[str, object] = {}
    for key, (raw, line_no) in pairs.items():
        if key not in ALL_KEYS:
            raise ConfigError(f"unknown key {key!r}", line=line_no)
        overrides[key] = _parse_scalar(key, raw, line_no)
    return build_config(overrides)


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def render_config(config: ExperimentConfig) -> str:
    """One key per line with value and origin, as print-config shows it."""
    origins = dict(config.origins)
    values: Dict[str, object] = {}
    for f in dc_fields(TrainerConfig):
        values[f.name] = getattr(config.trainer, f.name)
    for key in sorted(_EXPERIMENT_KEYS):
        values[key] = getattr(config, key)
    width = max(len(k) for k in values)
    lines = []
    for key in sorted(values):
        origin = origins.get(key, ARTIFACT)
        lines.append(f"{key:<{width}} = {values[key]!r:<12}  # {origin}")
    return "\n".join(lines) + "\n"
