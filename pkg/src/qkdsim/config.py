"""Experiment and replay configuration: schema, validation and (de)serialization.

Configs are YAML or JSON mappings. Every validation failure raises
:class:`ConfigError` carrying the dotted path of the offending field.

Experiment schema (defaults shown)::

    protocol: bb84            # bb84 | sarg04 | e91 | agm06
    n_slots: 100000           # pulses (optical) or pairs (entangled); alias n_pairs
    seed: 42                  # required
    trials: 1
    format: json-lines        # json-lines | csv | human
    workers: 1
    channel:
      flip_probability: 0.0
      loss_probability: 0.0
      source_mode: single-photon   # single-photon | weak-coherent
      mean_photon_number: null     # required for weak-coherent
    adversary:
      strategy: none               # none | intercept-resend | pns
      eve_angles: null             # intercept-resend only, radians
      intercept_fraction: 1.0      # intercept-resend only
      blocking_fraction: 0.0       # pns only
      min_split: 2                 # pns only
    source:                        # entangled protocols only
      state: singlet               # singlet | psi-plus | product | [4 amplitudes]
      check_fraction: 0.5          # e91 only
    postprocessing:
      sample_fraction: 0.25
      block_schedule: null         # list of block sizes; null = adaptive
      eve_factor: 2.0
      safety_margin: 16
    decision:
      metric: sifted_qber          # sifted_qber | aggregate
      threshold: 0.11

Replay schema::

    alice_bits: "10111..."     # string of 0/1 or list
    alice_bases: "+x++x..."    # '+' rectilinear, 'x' diagonal, or 0/1 list
    bob_bases: "+xx++..."
    eve_bases: "x+xx+..."      # optional; '-' or null leaves a slot alone
    error_slots: [3, 23]       # 0-based
    seed: 0
    format: human
    decision: {metric: aggregate, threshold: 0.5}
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import yaml

from .channel import SOURCE_MODES, STRATEGIES, AdversaryConfig, ChannelConfig
from .pipeline import PostprocessingParams
from .protocols.bb84 import DECISION_METRICS
from .quantum import TwoQubitState

PROTOCOLS = ("bb84", "sarg04", "e91", "agm06")
PAIR_PROTOCOLS = ("e91", "agm06")
FORMATS = ("json-lines", "csv", "human")
NAMED_STATES = ("singlet", "psi-plus", "product")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the field."""

    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


# ---------------------------------------------------------------------------
# typed field readers


def _join(prefix: str, key: str) -> str:
    return f"{prefix}.{key}" if prefix else key


def _mapping(value: Any, path: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(path, f"expected a mapping, got {type(value).__name__}")
    return value


def _reject_unknown(section: dict, allowed, prefix: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(_join(prefix, str(key)), "unknown field")


def _int(value: Any, path: str, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {value}")
    return int(value)


def _float(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    return value


def _prob(value: Any, path: str) -> float:
    value = _float(value, path)
    if not 0.0 <= value <= 1.0:
        raise ConfigError(path, f"must be in [0, 1], got {value}")
    return value


def _choice(value: Any, options, path: str) -> str:
    if value not in options:
        raise ConfigError(path, f"must be one of {list(options)}, got {value!r}")
    return value


def _build(cls, kwargs: dict, prefix: str):
    try:
        return cls(**kwargs)
    except ValueError as exc:
        first = str(exc).split()[0].split("/")[0] if str(exc) else ""
        raise ConfigError(_join(prefix, first) if first in kwargs else prefix, str(exc)) from None


# ---------------------------------------------------------------------------
# source states


def resolve_state(spec: Union[str, tuple]) -> TwoQubitState:
    """Named state or four amplitudes (reals or ``[re, im]`` pairs) in |00>,|01>,|10>,|11> order."""
    if spec == "singlet":
        return TwoQubitState.singlet()
    if spec == "psi-plus":
        return TwoQubitState.psi_plus()
    if spec == "product":
        return TwoQubitState.product([1, 0], [0, 1])
    amps = np.array([complex(a[0], a[1]) if isinstance(a, (list, tuple)) else complex(a) for a in spec])
    return TwoQubitState.normalized(amps)


def _state_spec(value: Any, path: str) -> Union[str, tuple]:
    if isinstance(value, str):
        return _choice(value, NAMED_STATES, path)
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise ConfigError(path, "expected a state name or a list of 4 amplitudes")
    amps = []
    for i, a in enumerate(value):
        p = f"{path}[{i}]"
        if isinstance(a, (list, tuple)):
            if len(a) != 2:
                raise ConfigError(p, "complex amplitudes are [re, im] pairs")
            amps.append((_float(a[0], p), _float(a[1], p)))
        else:
            amps.append(_float(a, p))
    if sum(abs(complex(*a) if isinstance(a, tuple) else a) ** 2 for a in amps) == 0:
        raise ConfigError(path, "amplitudes must not all vanish")
    return tuple(amps)


# ---------------------------------------------------------------------------
# experiment config


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str
    n_slots: int
    seed: int
    trials: int = 1
    format: str = "json-lines"
    workers: int = 1
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    adversary: AdversaryConfig = field(default_factory=AdversaryConfig)
    source_state: Union[str, tuple] = "singlet"
    check_fraction: float = 0.5
    postprocessing: PostprocessingParams = field(default_factory=PostprocessingParams)

    @property
    def is_pair_protocol(self) -> bool:
        return self.protocol in PAIR_PROTOCOLS

    def to_dict(self) -> dict:
        ch, adv, pp = self.channel, self.adversary, self.postprocessing
        state = self.source_state
        if not isinstance(state, str):
            state = [list(a) if isinstance(a, tuple) else a for a in state]
        return {
            "protocol": self.protocol,
            "n_slots": self.n_slots,
            "seed": self.seed,
            "trials": self.trials,
            "format": self.format,
            "workers": self.workers,
            "channel": {
                "flip_probability": ch.flip_probability,
                "loss_probability": ch.loss_probability,
                "source_mode": ch.source_mode,
                "mean_photon_number": ch.mean_photon_number,
            },
            "adversary": {
                "strategy": adv.strategy,
                "eve_angles": None if adv.eve_angles is None else list(adv.eve_angles),
                "intercept_fraction": adv.intercept_fraction,
                "blocking_fraction": adv.blocking_fraction,
                "min_split": adv.min_split,
            },
            "source": {"state": state, "check_fraction": self.check_fraction},
            "postprocessing": {
                "sample_fraction": pp.sample_fraction,
                "block_schedule": None if pp.block_schedule is None else list(pp.block_schedule),
                "eve_factor": pp.eve_factor,
                "safety_margin": pp.safety_margin,
            },
            "decision": {"metric": pp.decision_metric, "threshold": pp.threshold},
        }

    @classmethod
    def from_dict(cls, data: Any) -> "ExperimentConfig":
        data = _mapping(data, "")
        _reject_unknown(
            data,
            ("protocol", "n_slots", "n_pairs", "seed", "trials", "format", "workers",
             "channel", "adversary", "source", "postprocessing", "decision"),
            "",
        )
        if "protocol" not in data:
            raise ConfigError("protocol", "required")
        protocol = _choice(data["protocol"], PROTOCOLS, "protocol")
        if "n_slots" in data and "n_pairs" in data:
            raise ConfigError("n_pairs", "give n_slots or n_pairs, not both")
        size_key = "n_pairs" if "n_pairs" in data else "n_slots"
        if size_key not in data:
            raise ConfigError("n_slots", "required")
        n_slots = _int(data[size_key], size_key, 1)
        if "seed" not in data or data["seed"] is None:
            raise ConfigError("seed", "required; runs are never seeded from the clock")
        seed = _int(data["seed"], "seed", 0)
        trials = _int(data.get("trials", 1), "trials", 1)
        fmt = _choice(data.get("format", "json-lines"), FORMATS, "format")
        workers = _int(data.get("workers", 1), "workers", 1)

        ch = _mapping(data.get("channel"), "channel")
        _reject_unknown(ch, ("flip_probability", "loss_probability", "source_mode", "mean_photon_number"), "channel")
        mu = ch.get("mean_photon_number")
        channel = _build(
            ChannelConfig,
            {
                "flip_probability": _prob(ch.get("flip_probability", 0.0), "channel.flip_probability"),
                "loss_probability": _prob(ch.get("loss_probability", 0.0), "channel.loss_probability"),
                "source_mode": _choice(ch.get("source_mode", "single-photon"), SOURCE_MODES, "channel.source_mode"),
                "mean_photon_number": None if mu is None else _float(mu, "channel.mean_photon_number"),
            },
            "channel",
        )

        adv = _mapping(data.get("adversary"), "adversary")
        _reject_unknown(adv, ("strategy", "eve_angles", "intercept_fraction", "blocking_fraction", "min_split"), "adversary")
        angles = adv.get("eve_angles")
        if angles is not None:
            if not isinstance(angles, (list, tuple)):
                raise ConfigError("adversary.eve_angles", "expected a list of angles")
            angles = tuple(_float(a, f"adversary.eve_angles[{i}]") for i, a in enumerate(angles))
        adversary = _build(
            AdversaryConfig,
            {
                "strategy": _choice(adv.get("strategy", "none"), STRATEGIES, "adversary.strategy"),
                "eve_angles": angles,
                "intercept_fraction": _prob(adv.get("intercept_fraction", 1.0), "adversary.intercept_fraction"),
                "blocking_fraction": _prob(adv.get("blocking_fraction", 0.0), "adversary.blocking_fraction"),
                "min_split": _int(adv.get("min_split", 2), "adversary.min_split", 2),
            },
            "adversary",
        )

        src = _mapping(data.get("source"), "source")
        _reject_unknown(src, ("state", "check_fraction"), "source")
        state = _state_spec(src.get("state", "singlet"), "source.state")
        check_fraction = _prob(src.get("check_fraction", 0.5), "source.check_fraction")
        if not 0.0 < check_fraction < 1.0:
            raise ConfigError("source.check_fraction", "must lie strictly between 0 and 1")

        pp = _mapping(data.get("postprocessing"), "postprocessing")
        _reject_unknown(pp, ("sample_fraction", "block_schedule", "eve_factor", "safety_margin"), "postprocessing")
        sched = pp.get("block_schedule")
        if sched is not None:
            if not isinstance(sched, (list, tuple)) or not sched:
                raise ConfigError("postprocessing.block_schedule", "expected a nonempty list of block sizes")
            sched = tuple(_int(k, f"postprocessing.block_schedule[{i}]", 1) for i, k in enumerate(sched))
        dec = _mapping(data.get("decision"), "decision")
        _reject_unknown(dec, ("metric", "threshold"), "decision")
        params = _build(
            PostprocessingParams,
            {
                "sample_fraction": _float(pp.get("sample_fraction", 0.25), "postprocessing.sample_fraction"),
                "block_schedule": sched,
                "eve_factor": _float(pp.get("eve_factor", 2.0), "postprocessing.eve_factor"),
                "safety_margin": _int(pp.get("safety_margin", 16), "postprocessing.safety_margin", 0),
                "decision_metric": _choice(dec.get("metric", "sifted_qber"), DECISION_METRICS, "decision.metric"),
                "threshold": _prob(dec.get("threshold", 0.11), "decision.threshold"),
            },
            "postprocessing",
        )
        if protocol in PAIR_PROTOCOLS:
            if adversary.strategy == "pns":
                raise ConfigError("adversary.strategy", f"pns needs multi-photon pulses; {protocol} distributes pairs")
            if channel.source_mode != "single-photon":
                raise ConfigError("channel.source_mode", f"{protocol} uses an entangled-pair source")
        return cls(
            protocol=protocol,
            n_slots=n_slots,
            seed=seed,
            trials=trials,
            format=fmt,
            workers=workers,
            channel=channel,
            adversary=adversary,
            source_state=state,
            check_fraction=check_fraction,
            postprocessing=params,
        )

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Apply top-level overrides (e.g. from CLI flags) and revalidate."""
        data = self.to_dict()
        for key, value in overrides.items():
            if value is not None:
                data[key] = value
        return ExperimentConfig.from_dict(data)


# ---------------------------------------------------------------------------
# replay config

_BASIS_SYMBOLS = {"+": 0, "x": 1, "X": 1, "0": 0, "1": 1}


def _bit_sequence(value: Any, path: str) -> list[int]:
    if isinstance(value, str):
        value = [c for c in value if not c.isspace()]
        if any(c not in "01" for c in value):
            raise ConfigError(path, "bit strings may contain only 0 and 1")
        return [int(c) for c in value]
    if not isinstance(value, (list, tuple)):
        raise ConfigError(path, "expected a bit string or list")
    out = []
    for i, v in enumerate(value):
        v = _int(v, f"{path}[{i}]")
        if v not in (0, 1):
            raise ConfigError(f"{path}[{i}]", "must be 0 or 1")
        out.append(v)
    return out


def _basis_sequence(value: Any, path: str, allow_none: bool = False) -> list[Optional[int]]:
    items = [c for c in value if not c.isspace()] if isinstance(value, str) else value
    if not isinstance(items, (list, tuple)):
        raise ConfigError(path, "expected a basis string or list")
    out: list[Optional[int]] = []
    for i, v in enumerate(items):
        if allow_none and v in (None, "-"):
            out.append(None)
        elif isinstance(v, str) and v in _BASIS_SYMBOLS:
            out.append(_BASIS_SYMBOLS[v])
        elif not isinstance(v, bool) and v in (0, 1):
            out.append(int(v))
        else:
            raise ConfigError(f"{path}[{i}]", f"unrecognized basis {v!r}")
    return out


def basis_string(bases) -> str:
    return "".join("-" if b is None or b < 0 else "+x"[int(b)] for b in bases)


@dataclass(frozen=True)
class ReplayConfig:
    alice_bits: tuple[int, ...]
    alice_bases: tuple[int, ...]
    bob_bases: tuple[int, ...]
    eve_bases: Optional[tuple[Optional[int], ...]] = None
    error_slots: tuple[int, ...] = ()
    seed: int = 0
    format: str = "human"
    metric: str = "aggregate"
    threshold: float = 0.5

    def to_dict(self) -> dict:
        return {
            "alice_bits": "".join(map(str, self.alice_bits)),
            "alice_bases": basis_string(self.alice_bases),
            "bob_bases": basis_string(self.bob_bases),
            "eve_bases": None if self.eve_bases is None else basis_string(self.eve_bases),
            "error_slots": list(self.error_slots),
            "seed": self.seed,
            "format": self.format,
            "decision": {"metric": self.metric, "threshold": self.threshold},
        }

    @classmethod
    def from_dict(cls, data: Any) -> "ReplayConfig":
        data = _mapping(data, "")
        _reject_unknown(
            data,
            ("alice_bits", "alice_bases", "bob_bases", "eve_bases", "error_slots", "seed", "format", "decision"),
            "",
        )
        for key in ("alice_bits", "alice_bases", "bob_bases"):
            if key not in data:
                raise ConfigError(key, "required")
        bits = _bit_sequence(data["alice_bits"], "alice_bits")
        n = len(bits)
        if n == 0:
            raise ConfigError("alice_bits", "replay needs at least one slot")
        a_bases = _basis_sequence(data["alice_bases"], "alice_bases")
        b_bases = _basis_sequence(data["bob_bases"], "bob_bases")
        eve = data.get("eve_bases")
        eve_bases = None if eve is None else _basis_sequence(eve, "eve_bases", allow_none=True)
        for key, seq in (("alice_bases", a_bases), ("bob_bases", b_bases), ("eve_bases", eve_bases)):
            if seq is not None and len(seq) != n:
                raise ConfigError(key, f"has length {len(seq)}, expected {n} (length of alice_bits)")
        slots = data.get("error_slots") or []
        if not isinstance(slots, (list, tuple)):
            raise ConfigError("error_slots", "expected a list of 0-based slot indices")
        err = tuple(sorted({_int(s, f"error_slots[{i}]", 0) for i, s in enumerate(slots)}))
        if err and err[-1] >= n:
            raise ConfigError("error_slots", f"slot {err[-1]} out of range for {n} slots")
        dec = _mapping(data.get("decision"), "decision")
        _reject_unknown(dec, ("metric", "threshold"), "decision")
        return cls(
            alice_bits=tuple(bits),
            alice_bases=tuple(a_bases),
            bob_bases=tuple(b_bases),
            eve_bases=None if eve_bases is None else tuple(eve_bases),
            error_slots=err,
            seed=_int(data.get("seed", 0), "seed", 0),
            format=_choice(data.get("format", "human"), FORMATS, "format"),
            metric=_choice(dec.get("metric", "aggregate"), DECISION_METRICS, "decision.metric"),
            threshold=_prob(dec.get("threshold", 0.5), "decision.threshold"),
        )

    def with_overrides(self, **overrides) -> "ReplayConfig":
        return dataclasses.replace(self, **{k: v for k, v in overrides.items() if v is not None})


# ---------------------------------------------------------------------------
# files


def read_mapping(path: Union[str, Path]) -> Any:
    """Parse a YAML or JSON file (JSON is valid YAML)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"cannot parse config {path}: {exc}") from None


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    return ExperimentConfig.from_dict(read_mapping(path))


def load_replay(path: Union[str, Path]) -> ReplayConfig:
    return ReplayConfig.from_dict(read_mapping(path))
