"""Configuration objects for the attack pipeline and the desk-scale victim simulation.

- :class:`ModelConfig` describes one model role (victim, surrogates, membership classifier): hidden layers,
  activation and optimizer settings.
- :class:`AttackConfig` holds every attack parameter.
- :class:`TaskConfig` describes the synthetic task and the victim the attack is run against.

All of them have documented defaults and can be created from an INI file::

    [attack]
    n_surrogates = 8
    eta = 0.5
    lambda = 0.5
    alpha = 0.1

    [surrogate]
    hidden = 64
    epochs = 200

    [task]
    dim = 20

See doc/formats.rst for the complete list of keys.
"""

import configparser
import dataclasses
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Tuple

from typing_extensions import Literal

from memaudit.conformal import DEFAULT_LAMBDA, check_lambda
from memaudit.exceptions import InvalidConfig
from memaudit.fdr import check_alpha
from memaudit.helpers import round_half_up
from memaudit.nn import LayerSpec, TrainConfig

SubsetSource = Literal["au1", "au2"]
SUBSET_SOURCES = ("au1", "au2")

ScoreFunction = Literal["classifier", "softmax", "entropy", "loss"]
SCORE_FUNCTIONS = ("classifier", "softmax", "entropy", "loss")

#: Sections accepted in configuration files, and the INI key -> attribute renames.
KNOWN_SECTIONS = ("attack", "surrogate", "binary", "task", "victim")
_RENAMED_KEYS = {"lambda": "lam", "k": "n_surrogates"}


@dataclass(frozen=True)
class ModelConfig:
    """Architecture (minus input/output widths, which depend on the task) and training settings of a model."""

    hidden: Tuple[int, ...] = (64,)
    activation: str = "relu"
    learning_rate: float = 0.05
    epochs: int = 200
    batch_size: int = 16
    l2_penalty: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        # Both constructors validate their own fields.
        self.layer_spec(1, 1)
        self.train_config(0)

    def layer_spec(self, n_inputs: int, n_outputs: int) -> LayerSpec:
        return LayerSpec.from_hidden(n_inputs, self.hidden, n_outputs, self.activation)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=seed,
            l2_penalty=self.l2_penalty,
        )


def _default_surrogate() -> ModelConfig:
    # Not the default victim architecture
    return ModelConfig(hidden=(32, 32), batch_size=10)


def _default_binary() -> ModelConfig:
    return ModelConfig(hidden=(32,), learning_rate=0.1, epochs=30, batch_size=64)


@dataclass(frozen=True)
class AttackConfig:
    """Parameters of the membership inference attack.

    The auxiliary dataset is split in three: a fraction `split_au1_fraction` trains the surrogates, the rest
    is divided between membership-classifier training (non-member rows) and calibration, `split_ca_fraction`
    of it going to calibration.
    """

    #: Number of surrogate models (K).
    n_surrogates: int = 8
    #: Fraction of the subset source sampled (without replacement) to train each surrogate.
    eta: float = 0.5
    #: Weight of the logit term in the conformity score.
    lam: float = DEFAULT_LAMBDA
    #: FDR level of the membership decisions.
    alpha: float = 0.1
    split_au1_fraction: float = 0.3
    split_ca_fraction: float = 0.4
    surrogate: ModelConfig = field(default_factory=_default_surrogate)
    binary: ModelConfig = field(default_factory=_default_binary)
    #: If `True`, the attacker doesn't know the victim architecture and always uses `surrogate`, which must not
    #: copy it (see :func:`memaudit.attack.check_blackbox_surrogate`).
    blackbox: bool = False
    seed: int = 0
    #: Where surrogate training subsets are drawn from: `au1` (default) or `au2`.
    subset_source: str = "au1"
    #: `classifier` scores victim outputs with the membership classifier; the other values use a metric on the
    #: score vector directly (see :mod:`memaudit.metric_attacks`).
    score_function: str = "classifier"

    def __post_init__(self) -> None:
        if self.n_surrogates < 1:
            raise InvalidConfig("n_surrogates (K) must be >= 1")
        if not (0.0 < self.eta <= 1.0):
            raise InvalidConfig("eta must be in (0, 1]")
        check_lambda(self.lam)
        check_alpha(self.alpha)
        for name in ("split_au1_fraction", "split_ca_fraction"):
            value = getattr(self, name)
            if not (0.0 < value < 1.0):
                raise InvalidConfig("{name} must be in (0, 1), got {v}".format(name=name, v=value))
        if self.seed < 0:
            raise InvalidConfig("seed must be an unsigned integer")
        if self.subset_source not in SUBSET_SOURCES:
            raise InvalidConfig("subset_source must be one of {c}".format(c=", ".join(SUBSET_SOURCES)))
        if self.score_function not in SCORE_FUNCTIONS:
            raise InvalidConfig("score_function must be one of {c}".format(c=", ".join(SCORE_FUNCTIONS)))

    @classmethod
    def make_from_file(cls, path: str) -> "AttackConfig":
        """Create an AttackConfig from the `[attack]`, `[surrogate]` and `[binary]` sections of an INI file.

        Missing keys take their default value.

        :raises: :class:`memaudit.exceptions.InvalidConfig`
        """
        sections = read_config_file(path)
        return cls.make_from_sections(sections)

    @classmethod
    def make_from_sections(cls, sections: Mapping[str, Mapping[str, str]]) -> "AttackConfig":
        kwargs = _coerce_section(cls, sections.get("attack", {}), exclude=("surrogate", "binary"))
        if "surrogate" in sections:
            kwargs["surrogate"] = ModelConfig(**_coerce_section(ModelConfig, sections["surrogate"]))
        if "binary" in sections:
            kwargs["binary"] = ModelConfig(**_coerce_section(ModelConfig, sections["binary"]))
        return _build(cls, kwargs)

    def replace(self, **changes: Any) -> "AttackConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class TaskConfig:
    """Synthetic classification task and victim model for desk-scale attack runs.

    Samples are drawn from a Gaussian class-conditional population (see
    :func:`memaudit.synthetic.make_gaussian_task`). The victim is trained on `n_private` samples; the attacker
    gets `n_auxiliary` other samples; the test set has `n_test` samples, ``round(pi0 * n_test)`` of them fresh
    non-members and the rest drawn from the victim's training set.
    """

    dim: int = 20
    n_classes: int = 2
    separation: float = 0.2
    n_private: int = 200
    n_auxiliary: int = 2000
    n_test: int = 200
    pi0: float = 0.5
    victim: ModelConfig = field(default_factory=lambda: ModelConfig(batch_size=10))
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1 or self.n_classes < 2:
            raise InvalidConfig("dim must be >= 1 and n_classes >= 2")
        if min(self.n_private, self.n_auxiliary, self.n_test) < 1:
            raise InvalidConfig("n_private, n_auxiliary and n_test must be >= 1")
        if not (0.0 <= self.pi0 <= 1.0):
            raise InvalidConfig("pi0 must be in [0, 1]")
        if self.n_members > self.n_private:
            raise InvalidConfig(
                "The test set needs {m} members but the victim only has {p} training samples".format(
                    m=self.n_members, p=self.n_private
                )
            )
        if self.seed < 0:
            raise InvalidConfig("seed must be an unsigned integer")

    @property
    def n_non_members(self) -> int:
        return round_half_up(self.pi0 * self.n_test)

    @property
    def n_members(self) -> int:
        return self.n_test - self.n_non_members

    @property
    def victim_arch(self) -> LayerSpec:
        return self.victim.layer_spec(self.dim, self.n_classes)

    @classmethod
    def make_from_file(cls, path: str) -> "TaskConfig":
        """Create a TaskConfig from the `[task]` and `[victim]` sections of an INI file.

        :raises: :class:`memaudit.exceptions.InvalidConfig`
        """
        return cls.make_from_sections(read_config_file(path))

    @classmethod
    def make_from_sections(cls, sections: Mapping[str, Mapping[str, str]]) -> "TaskConfig":
        kwargs = _coerce_section(cls, sections.get("task", {}), exclude=("victim",))
        if "victim" in sections:
            kwargs["victim"] = ModelConfig(**_coerce_section(ModelConfig, sections["victim"]))
        return _build(cls, kwargs)

    def replace(self, **changes: Any) -> "TaskConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def read_config_file(path: str) -> Dict[str, Dict[str, str]]:
    """Parse an INI file into ``{section: {key: raw value}}`` (keys lower-cased).

    :raises: :class:`memaudit.exceptions.InvalidConfig` if the file can't be read or has unknown sections.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as f:
            parser.read_file(f)
    except (OSError, configparser.Error) as exc:
        raise InvalidConfig("Cannot read configuration file {p}: {e}".format(p=path, e=exc))

    unknown = [s for s in parser.sections() if s not in KNOWN_SECTIONS]
    if unknown:
        raise InvalidConfig("Unknown configuration section(s): {s}".format(s=", ".join(unknown)))

    return {s: dict(parser.items(s)) for s in parser.sections()}


def _build(cls: Any, kwargs: Dict[str, Any]) -> Any:
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise InvalidConfig(str(exc))


def _coerce_section(cls: Any, raw: Mapping[str, str], exclude: Tuple[str, ...] = ()) -> Dict[str, Any]:
    fields = {f.name: f for f in dataclasses.fields(cls) if f.name not in exclude}
    kwargs = {}  # type: Dict[str, Any]
    for key, value in raw.items():
        name = _RENAMED_KEYS.get(key.lower(), key.lower())
        if name not in fields:
            raise InvalidConfig("Unknown configuration key: {k}".format(k=key))
        kwargs[name] = _coerce(name, fields[name].default, value)
    return kwargs


def _coerce(name: str, default: Any, raw: str) -> Any:
    raw = raw.strip()
    try:
        if name == "hidden":
            return tuple(int(h) for h in raw.replace(" ", "").split(",") if h)
        if isinstance(default, bool):
            states = configparser.ConfigParser.BOOLEAN_STATES
            if raw.lower() not in states:
                raise ValueError(raw)
            return states[raw.lower()]
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise InvalidConfig("Invalid value for {name}: {raw!r}".format(name=name, raw=raw))
    return raw


def optional_config(path: Optional[str]) -> Dict[str, Dict[str, str]]:
    """Like :func:`read_config_file`, but returns no sections when `path` is `None`."""
    if path is None:
        return {}
    return read_config_file(path)
