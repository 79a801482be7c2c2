"""Experiment configuration: the dataclass plus a line-oriented text format.

Format::

    # comment
    protocol = tendermint
    input_tx_rate = 5000
    byzantine_rate = 0.333
    chaos_schedule = custom
    phase:
        delay = 1.0
        loss = 0.15
        duration = 500
    phase:
        corruption = half
        duration = 500

Each ``phase:`` line opens an indented sub-block describing one fault
phase.  Unset keys keep their defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

from .chaos import PRESETS, FaultSpec, Phase
from .protocols import PROTOCOLS


class ConfigError(ValueError):
    """Raised with a ``line N: ...`` prefix when the problem has a location."""


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str = "pbft"
    n_validators: int = 6
    tx_per_block: int = 70
    input_tx_rate: float = 5000.0
    max_time: float = 500000.0
    lambda_: float = 2.0
    byzantine_rate: float = 0.0
    added_delay: float = 0.0
    chaos_schedule: object = "none"
    chaos_phase_duration: float = 500.0
    chaos_recovery: float | None = None
    chaos_start: float = 0.0
    seed: int = 0
    seed_count: int = 1
    onset_delay: float = 5.0
    recovery_delay: float = 50.0
    phase_timeout: float | None = None
    clique_period: float | None = None
    drain_time: float | None = None
    sample_period: float = 100.0

    def __post_init__(self):
        validate(self)

    def items(self) -> tuple:
        """``(key, rendered value)`` pairs in field order (phases excluded)."""
        out = []
        for f in fields(self):
            if f.name == "chaos_schedule" and not isinstance(self.chaos_schedule, str):
                out.append((key_of(f.name), "custom"))
            else:
                out.append((key_of(f.name), _render_value(getattr(self, f.name))))
        return tuple(out)

    @property
    def drain(self) -> float:
        return self.drain_time if self.drain_time is not None else 50.0 / self.lambda_

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


# text keys differ from attribute names only where Python reserves the word
_KEY_TO_ATTR = {"lambda": "lambda_"}
_ATTR_TO_KEY = {v: k for k, v in _KEY_TO_ATTR.items()}
_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def key_of(attr: str) -> str:
    return _ATTR_TO_KEY.get(attr, attr)


def attr_of(key: str) -> str:
    return _KEY_TO_ATTR.get(key, key)


_INTS = {"n_validators", "tx_per_block", "seed", "seed_count"}
_OPTIONAL = {"chaos_recovery", "phase_timeout", "clique_period", "drain_time"}
_PHASE_KEYS = ("delay", "loss", "corruption", "pause", "duration", "recovery", "label")
_SCOPES = ("all", "one", "half")


def validate(cfg: ExperimentConfig) -> None:
    def bad(msg):
        raise ConfigError(msg)

    if cfg.protocol not in PROTOCOLS:
        bad(f"protocol: unknown protocol {cfg.protocol!r} (expected one of {', '.join(PROTOCOLS)})")
    for name in ("n_validators", "tx_per_block", "seed_count"):
        if getattr(cfg, name) < 1:
            bad(f"{name}: must be a positive integer")
    if cfg.seed < 0:
        bad("seed: must be non-negative")
    if cfg.input_tx_rate < 0 or not math.isfinite(cfg.input_tx_rate):
        bad("input_tx_rate: must be a non-negative number")
    if not 0 < cfg.max_time <= 500000:
        bad("max_time: must lie in (0, 500000]")
    if not cfg.lambda_ > 0:
        bad("lambda: must be positive")
    if not 0.0 <= cfg.byzantine_rate <= 1.0:
        bad("byzantine_rate: must lie in [0, 1]")
    for name in ("added_delay", "chaos_start", "onset_delay", "recovery_delay"):
        if getattr(cfg, name) < 0:
            bad(f"{key_of(name)}: must be non-negative")
    if not cfg.chaos_phase_duration > 0:
        bad("chaos_phase_duration: must be positive")
    if not cfg.sample_period > 0:
        bad("sample_period: must be positive")
    for name in ("chaos_recovery", "drain_time"):
        v = getattr(cfg, name)
        if v is not None and v < 0:
            bad(f"{name}: must be non-negative")
    for name in ("phase_timeout", "clique_period"):
        v = getattr(cfg, name)
        if v is not None and not v > 0:
            bad(f"{name}: must be positive")
    sched = cfg.chaos_schedule
    if isinstance(sched, str):
        if sched not in PRESETS:
            bad(f"chaos_schedule: unknown preset {sched!r}")
    elif not isinstance(sched, tuple) or not all(isinstance(p, Phase) for p in sched):
        bad("chaos_schedule: expected a preset name or a tuple of phases")


def _parse_scalar(attr: str, raw: str, lineno: int):
    f = _FIELDS[attr]
    if attr in _OPTIONAL and raw.lower() in ("none", "default", ""):
        return None
    try:
        if attr == "protocol":
            return raw
        if attr == "chaos_schedule":
            return raw
        if attr in _INTS:
            return int(raw)
        return float(raw)
    except ValueError:
        kind = "an integer" if attr in _INTS else "a number"
        raise ConfigError(f"line {lineno}: {key_of(attr)}: expected {kind}, got {raw!r}") from None


def _parse_phase(lines: list[tuple[int, str, str]], header_line: int) -> Phase:
    faults = []
    duration = None
    recovery = None
    label = ""
    for lineno, key, raw in lines:
        if key not in _PHASE_KEYS:
            raise ConfigError(f"line {lineno}: unknown phase key {key!r}")
        try:
            if key == "delay":
                faults.append(FaultSpec("delay", magnitude=float(raw)))
            elif key == "loss":
                p = float(raw)
                if not 0 <= p <= 1:
                    raise ConfigError(f"line {lineno}: loss: must lie in [0, 1]")
                faults.append(FaultSpec("loss", probability=p))
            elif key in ("corruption", "pause"):
                scope = raw
                if scope not in _SCOPES:
                    ids = tuple(int(x) for x in raw.split(","))
                    scope = ids
                faults.append(FaultSpec(key, scope=scope))
            elif key == "duration":
                duration = float(raw)
            elif key == "recovery":
                recovery = float(raw)
            elif key == "label":
                label = raw
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: {key}: cannot parse {raw!r}") from None
    if duration is None or not duration > 0:
        raise ConfigError(f"line {header_line}: phase needs a positive duration")
    if recovery is not None and recovery < 0:
        raise ConfigError(f"line {header_line}: phase recovery must be non-negative")
    for f in faults:
        if f.kind == "delay" and f.magnitude < 0:
            raise ConfigError(f"line {header_line}: delay must be non-negative")
    return Phase(tuple(faults), duration, label, recovery)


def parse_config(text: str) -> ExperimentConfig:
    """Parse the ``key = value`` format; unknown keys and bad values raise ConfigError."""
    values: dict = {}
    phases: list[Phase] = []
    current: list | None = None
    header = 0
    seen: dict[str, int] = {}

    def close():
        nonlocal current
        if current is not None:
            phases.append(_parse_phase(current, header))
            current = None

    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].rstrip()
        if not stripped.strip():
            continue
        indented = stripped[0] in " \t"
        body = stripped.strip()
        if body == "phase:" and not indented:
            close()
            current = []
            header = lineno
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {body!r}")
        key, _, raw = body.partition("=")
        key, raw = key.strip(), raw.strip()
        if indented:
            if current is None:
                raise ConfigError(f"line {lineno}: indented line outside a phase block")
            current.append((lineno, key, raw))
            continue
        close()
        attr = attr_of(key)
        if attr not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if attr in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first set on line {seen[attr]})")
        seen[attr] = lineno
        values[attr] = _parse_scalar(attr, raw, lineno)
    close()
    if phases:
        sched = values.get("chaos_schedule", "custom")
        if sched != "custom":
            raise ConfigError(f"line {seen.get('chaos_schedule', 0)}: phase blocks need chaos_schedule = custom")
        values["chaos_schedule"] = tuple(phases)
    elif values.get("chaos_schedule") == "custom":
        raise ConfigError(f"line {seen['chaos_schedule']}: chaos_schedule = custom without phase blocks")
    try:
        return ExperimentConfig(**values)
    except ConfigError as exc:
        key = str(exc).split(":", 1)[0]
        line = seen.get(attr_of(key))
        if line is not None:
            raise ConfigError(f"line {line}: {exc}") from None
        raise


def _render_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_config(cfg: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config`."""
    lines = [f"{k} = {v}" for k, v in cfg.items()]
    if not isinstance(cfg.chaos_schedule, str):
        for ph in cfg.chaos_schedule:
            lines.append("phase:")
            for f in ph.faults:
                if f.kind == "delay":
                    lines.append(f"    delay = {f.magnitude!r}")
                elif f.kind == "loss":
                    lines.append(f"    loss = {f.probability!r}")
                else:
                    scope = f.scope if isinstance(f.scope, str) else ",".join(str(i) for i in f.scope)
                    lines.append(f"    {f.kind} = {scope}")
            lines.append(f"    duration = {ph.duration!r}")
            if ph.recovery is not None:
                lines.append(f"    recovery = {ph.recovery!r}")
            if ph.label:
                lines.append(f"    label = {ph.label}")
    return "\n".join(lines) + "\n"
