"""Flat ``key = value`` run configuration.

Lines are ``key = value``; ``#`` starts a comment; an empty value means
"unset" (use the scale-dependent default). Unknown keys are rejected.
"""
import dataclasses
from dataclasses import dataclass, fields

from .data import DEFAULT_LAMBDAS
from .network import DEFAULT_LR_PATCH, DEFAULT_STEPS, GunTopology
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    return tuple(float(v) for v in s.replace(" ", "").split(",") if v)


def _ints(s):
    return tuple(int(v) for v in s.replace(" ", "").split(",") if v)


@dataclass
class RunConfig:
    # network
    scale: int = 4
    steps: int | None = None
    depth: int = 4
    channels: int = 64
    bn_on_input: bool = True
    bn_eps: float = 1e-5
    bn_momentum: float = 0.9
    backward_resample: str = "adjoint"
    # data
    lr_patch: int | None = None
    stride: int | None = None
    max_patches: int | None = None
    augment: bool = True
    algd_on: str = "hr"
    lambdas: tuple = DEFAULT_LAMBDAS
    # optimisation
    epochs_per_stage: int = 3
    batch_size: int = 64
    lr: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_decay: float = 10.0
    decay_stages: tuple = (3, 5)  # 1-based stages entered with a decayed rate
    max_iterations: int | None = None
    seed: int = 0
    # evaluation
    shave: int | None = None
    quantized_metrics: bool = False
    # paths
    train_dir: str | None = None
    val_dir: str | None = None
    test_dir: str | None = None
    checkpoint: str | None = None
    log_path: str | None = None

    def __post_init__(self):
        if self.scale not in DEFAULT_STEPS:
            raise ConfigError(f"scale must be one of {sorted(DEFAULT_STEPS)}, got {self.scale}")
        if self.backward_resample not in ("adjoint", "plain"):
            raise ConfigError(f"backward_resample must be adjoint or plain, got {self.backward_resample!r}")
        if self.algd_on not in ("hr", "lr"):
            raise ConfigError(f"algd_on must be hr or lr, got {self.algd_on!r}")
        self.lambdas = tuple(float(v) for v in self.lambdas)
        self.decay_stages = tuple(int(v) for v in self.decay_stages)

    # resolved, scale-dependent values
    @property
    def n_steps(self):
        return self.steps if self.steps is not None else DEFAULT_STEPS[self.scale]

    @property
    def patch(self):
        return self.lr_patch if self.lr_patch is not None else DEFAULT_LR_PATCH[self.scale]

    @property
    def border(self):
        return self.shave if self.shave is not None else self.scale

    def topology(self):
        return GunTopology(scale=self.scale, steps=self.n_steps, depth=self.depth,
                           channels=self.channels, bn_on_input=self.bn_on_input,
                           backward_resample=self.backward_resample)

    def train_config(self):
        return TrainConfig(batch_size=self.batch_size, lr=self.lr, momentum=self.momentum,
                           weight_decay=self.weight_decay, lr_decay=self.lr_decay,
                           decay_at=tuple(s - 1 for s in self.decay_stages), seed=self.seed,
                           max_iterations=self.max_iterations, log_path=self.log_path,
                           shave=self.border)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    # text form
    def dumps(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                text = ""
            elif isinstance(v, tuple):
                text = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, bool):
                text = "true" if v else "false"
            elif isinstance(v, float):
                text = repr(v)
            else:
                text = str(v)
            lines.append(f"{f.name} = {text}".rstrip())
        return "\n".join(lines) + "\n"


_PARSERS = {"int": int, "float": float, "bool": _bool, "str": str}
_TUPLE_PARSERS = {"lambdas": _floats, "decay_stages": _ints}


def _field_parser(f):
    if f.name in _TUPLE_PARSERS:
        return _TUPLE_PARSERS[f.name], False
    t = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    optional = "None" in t
    base = t.split("|")[0].strip()
    return _PARSERS[base], optional


FIELD_NAMES = [f.name for f in fields(RunConfig)]


def parse_overrides(pairs):
    """``{key: text}`` -> typed keyword arguments for RunConfig."""
    by_name = {f.name: f for f in fields(RunConfig)}
    out = {}
    for key, text in pairs.items():
        if key not in by_name:
            raise ConfigError(f"unknown config key {key!r}")
        parse, optional = _field_parser(by_name[key])
        text = text.strip()
        if text == "":
            if not optional:
                raise ConfigError(f"{key} needs a value")
            out[key] = None
            continue
        try:
            out[key] = parse(text)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from exc
    return out


def loads(text):
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return parse_overrides(pairs)


def load(path, overrides=None):
    """RunConfig from an optional file plus typed overrides (overrides win)."""
    values = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            values.update(loads(fh.read()))
    values.update(overrides or {})
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
