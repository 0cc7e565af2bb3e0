"""Run configuration: a flat ``key = value`` file with documented defaults.

Lines are ``key = value``; ``#`` starts a comment (full line or trailing);
blank lines are ignored.  Unknown keys and unparsable values are rejected
with the offending line number.  Every key has a default, so an empty file
is a valid configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import ConfigError

__all__ = [
    "RunConfig",
    "parse_config",
    "load_config",
    "default_config",
    "calibrated_config",
    "CONFIG_KEYS",
]

REG_MODES = ("off", "adaptive", "fixed", "diagonal", "direct_l2")
EMBEDDING_SOURCES = ("semantic", "description")
SAMPLING_MODES = ("top-pool", "proportional")


def _positive(x) -> bool:
    return x > 0


def _non_negative(x) -> bool:
    return x >= 0


def _fraction(x) -> bool:
    return 0.0 <= x < 1.0


def _parse_int(text: str) -> int:
    try:
        return int(text, 10)
    except ValueError:
        raise ValueError(f"not an integer: {text!r}") from None


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"not a number: {text!r}") from None


@dataclass(frozen=True)
class _KeySpec:
    caster: Callable[[str], Any]
    default: Any
    check: Callable[[Any], bool] | None = None
    choices: tuple[str, ...] | None = None
    help: str = ""


# The full key table.  Keys with a 0 pool size derive the size from the
# class count at training time.
CONFIG_KEYS: dict[str, _KeySpec] = {
    "seed": _KeySpec(_parse_int, 0, _non_negative, help="master seed for init and shuffling"),
    "lr": _KeySpec(_parse_float, 0.02, _non_negative, help="SGD learning rate"),
    "momentum": _KeySpec(_parse_float, 0.9, _fraction, help="SGD momentum factor"),
    "weight_decay": _KeySpec(_parse_float, 1e-4, _non_negative, help="L2 decay on weight blocks"),
    "epochs": _KeySpec(_parse_int, 12, _positive, help="training epochs"),
    "batch": _KeySpec(_parse_int, 128, _positive, help="minibatch size"),
    "head.depth": _KeySpec(_parse_int, 1, lambda x: x in (1, 2, 3), help="projection layers (1-3)"),
    "head.hidden": _KeySpec(_parse_int, 128, _positive, help="hidden width for depth >= 2"),
    "score_scale": _KeySpec(_parse_float, 20.0, _positive, help="multiplier on cosine scores"),
    "embedding_source": _KeySpec(str, "semantic", choices=EMBEDDING_SOURCES,
                                 help="which embeddings feed the projection"),
    "reg.mode": _KeySpec(str, "adaptive", choices=REG_MODES, help="regularizer variant"),
    "reg.tau": _KeySpec(_parse_float, 0.03, _positive, help="softmax temperature"),
    "reg.fixed_margin": _KeySpec(_parse_float, 0.2, _non_negative, help="margin for reg.mode=fixed"),
    "reg.pos_pool": _KeySpec(_parse_int, 0, _non_negative, help="positive pool size (0 = auto)"),
    "reg.neg_pool": _KeySpec(_parse_int, 0, _non_negative, help="negative pool size (0 = auto)"),
    "reg.triplets_per_class": _KeySpec(_parse_int, 1, _positive, help="triplets per anchor per step"),
    "reg.sampling": _KeySpec(str, "top-pool", choices=SAMPLING_MODES, help="triplet sampling mode"),
    "reg.lambda": _KeySpec(_parse_float, 1.0, _non_negative, help="regularizer weight"),
    "reg.seed": _KeySpec(_parse_int, 0, _non_negative, help="seed for triplet sampling"),
    "sim.n_seen": _KeySpec(_parse_int, 16, _positive, help="seen classes in the synthetic scenario"),
    "sim.n_unseen": _KeySpec(_parse_int, 4, _positive, help="unseen classes in the synthetic scenario"),
    "sim.feature_dim": _KeySpec(_parse_int, 64, _positive, help="region feature dimension"),
    "sim.regions_per_class": _KeySpec(_parse_int, 200, _positive, help="training regions per seen class"),
    "sim.noise_sigma": _KeySpec(_parse_float, 0.3, _non_negative,
                                help="expected norm of the feature perturbation"),
    "sim.background_fraction": _KeySpec(_parse_float, 0.25, _fraction,
                                        help="fraction of regions that are background"),
    "sim.box_jitter": _KeySpec(_parse_float, 0.1, lambda x: 0.0 <= x < 0.5,
                               help="proposal corner jitter as a fraction of box size"),
    "sim.images": _KeySpec(_parse_int, 40, _positive, help="images per partition"),
    "sim.seed": _KeySpec(_parse_int, 0, _non_negative, help="seed for dataset generation"),
    "synth.noise_dim": _KeySpec(_parse_int, 16, _positive, help="synthesizer noise dimension"),
    "synth.hidden": _KeySpec(_parse_int, 64, _positive, help="synthesizer hidden width"),
    "synth.lr": _KeySpec(_parse_float, 0.05, _non_negative, help="synthesizer learning rate"),
    "synth.epochs": _KeySpec(_parse_int, 300, _positive, help="synthesizer training steps"),
    "synth.noise_batch": _KeySpec(_parse_int, 8, _positive, help="noise draws per class per step"),
    "synth.samples_per_class": _KeySpec(_parse_int, 200, _positive,
                                        help="synthesized samples per class for the classifier"),
    "cls.lr": _KeySpec(_parse_float, 0.05, _non_negative, help="synthesized-classifier learning rate"),
    "cls.epochs": _KeySpec(_parse_int, 20, _positive, help="synthesized-classifier epochs"),
    "cls.batch": _KeySpec(_parse_int, 128, _positive, help="synthesized-classifier batch size"),
    "repro.seeds": _KeySpec(_parse_int, 5, _positive, help="seeds per mode in reproduce"),
    "repro.modes": _KeySpec(str, "off,diagonal,direct_l2,adaptive",
                            help="comma-separated reg.mode list for reproduce"),
    "data.catalog_dir": _KeySpec(str, "", help="directory with embeddings and split files"),
    "data.regions": _KeySpec(str, "", help="training regions file"),
    "data.val_regions": _KeySpec(str, "", help="held-out regions file"),
    "data.out_dir": _KeySpec(str, "", help="output directory"),
}


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        merged = {key: spec.default for key, spec in CONFIG_KEYS.items()}
        for key, value in self.values.items():
            if key not in CONFIG_KEYS:
                raise ConfigError(f"unknown configuration key {key!r}")
            merged[key] = value
        self.values = merged

    def __getitem__(self, key: str) -> Any:
        try:
            return self.values[key]
        except KeyError:
            raise ConfigError(f"unknown configuration key {key!r}") from None

    def set(self, key: str, value: Any) -> None:
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown configuration key {key!r}")
        spec = CONFIG_KEYS[key]
        if spec.choices is not None and value not in spec.choices:
            raise ConfigError(f"{key} must be one of {spec.choices}, got {value!r}")
        if spec.check is not None and not spec.check(value):
            raise ConfigError(f"invalid value for {key}: {value!r}")
        self.values[key] = value

    def copy(self) -> "RunConfig":
        return RunConfig(dict(self.values))

    def reproduce_modes(self) -> list[str]:
        modes = [m.strip() for m in str(self["repro.modes"]).split(",") if m.strip()]
        for mode in modes:
            if mode not in REG_MODES:
                raise ConfigError(f"repro.modes lists unknown reg.mode {mode!r}")
        if not modes:
            raise ConfigError("repro.modes lists no modes")
        return modes


def default_config() -> RunConfig:
    return RunConfig({})


def calibrated_config() -> RunConfig:
    """Settings frozen for the synthetic benchmark demonstration.

    The defaults follow the published operating point for real detector
    features (one-layer head, semantic class embeddings, temperature 0.03).
    The synthetic scenario is deliberately built so that semantic embeddings
    carry no appearance information, which makes the description embeddings
    the informative head input; a two-layer head leaves the unseen placement
    under-determined by classification alone, which is the regime the
    regularizer exists for.  Temperature 1.0 keeps the normalized similarity
    rows graded rather than saturated for the synthetic cosine spread, and
    two sampled triplets per anchor halve the sampling variance without
    rescaling the loss.  These four overrides were frozen together from a
    five-seed calibration run; the acceptance thresholds and the reproduce
    command both assume them.
    """
    config = RunConfig({})
    config.set("embedding_source", "description")
    config.set("head.depth", 2)
    config.set("reg.tau", 1.0)
    config.set("reg.triplets_per_class", 2)
    return config


def parse_config(text: str) -> RunConfig:
    values: dict[str, Any] = {}
    for lineno, rawline in enumerate(text.split("\n"), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {rawline!r}")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown configuration key {key!r}")
        spec = CONFIG_KEYS[key]
        try:
            value = spec.caster(raw_value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {key}: {exc}") from None
        if spec.choices is not None and value not in spec.choices:
            raise ConfigError(
                f"line {lineno}: {key} must be one of {spec.choices}, got {value!r}"
            )
        if spec.check is not None and not spec.check(value):
            raise ConfigError(f"line {lineno}: invalid value for {key}: {value!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return RunConfig(values)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
