"""Flat ``key = value`` configuration files.

Keys carry a section prefix::

    device.gc_victim_threshold = 12
    engine.p_reuse = 0.5
    engine.delta.total_invalid_pages = 16
    campaign.strategy = state-aware
    campaign.ops = write,read

Precedence when building a campaign: device preset, then file, then
explicit overrides (command-line flags).
"""

from __future__ import annotations

from dataclasses import fields, replace
from pathlib import Path
from typing import Any, Mapping

from .campaign import CampaignConfig, Strategy
from .device import ConfigError, DeviceConfig, parse_opcodes, preset
from .faults import load_faults
from .state_engine import MONITORED, EngineParams, default_thresholds

CAMPAIGN_KEYS = (
    "strategy",
    "seed",
    "ops",
    "seq_limit",
    "budget_cmds",
    "budget_secs",
    "stop_on_full_coverage",
    "sample_every",
    "faults",
    "preset",
)


def parse_config_text(text: str) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key.startswith(("device.", "engine.", "campaign.")):
            raise ConfigError(f"line {lineno}: key {key!r} needs a device., engine. or campaign. prefix")
        values[key] = value
    return values


def read_config_file(path: str | Path) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_config_text(text)


def _parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "on", "yes"):
        return True
    if low in ("0", "false", "off", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _coerce(value: Any, kind: str, key: str) -> Any:
    if not isinstance(value, str):
        return value
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "bool":
            return _parse_bool(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind}") from None
    return value


def _field_kinds(cls) -> dict[str, str]:
    kinds = {}
    for f in fields(cls):
        t = str(f.type)
        kinds[f.name] = "bool" if t == "bool" else "int" if t == "int" else "float" if t == "float" else "str"
    return kinds


def build_campaign_config(values: Mapping[str, Any]) -> CampaignConfig:
    """Assemble a validated CampaignConfig from prefixed keys.

    ``values`` is the merged view (file entries overlaid by flag entries).
    ``campaign.preset`` picks the device base; ``device.*`` keys override it.
    """
    device = preset(str(values.get("campaign.preset", "desk-scale")))
    dev_kinds = _field_kinds(DeviceConfig)
    eng_kinds = _field_kinds(EngineParams)
    dev_over, eng_over, deltas = {}, {}, {}
    for key, value in values.items():
        section, _, name = key.partition(".")
        if section == "device":
            if name not in dev_kinds:
                raise ConfigError(f"unknown device key {key!r}")
            dev_over[name] = _coerce(value, dev_kinds[name], key)
        elif section == "engine":
            if name.startswith("delta."):
                var = name[len("delta."):]
                if var not in MONITORED:
                    raise ConfigError(f"unknown monitored variable {var!r}")
                deltas[var] = _coerce(value, "int", key)
            elif name in eng_kinds and name != "thresholds":
                eng_over[name] = _coerce(value, eng_kinds[name], key)
            else:
                raise ConfigError(f"unknown engine key {key!r}")
        elif section == "campaign":
            if name not in CAMPAIGN_KEYS:
                raise ConfigError(f"unknown campaign key {key!r}")
        else:
            raise ConfigError(f"unknown key {key!r}")

    device = replace(device, **dev_over)
    if deltas:
        eng_over["thresholds"] = {**default_thresholds(device), **deltas}
    engine = EngineParams(**eng_over)

    def get(name, kind, default):
        key = f"campaign.{name}"
        return _coerce(values[key], kind, key) if key in values else default

    try:
        strategy = Strategy(str(get("strategy", "str", "state-aware")))
    except ValueError:
        raise ConfigError(f"unknown strategy {values.get('campaign.strategy')!r}") from None
    try:
        ops = parse_opcodes(str(get("ops", "str", "write,read")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    faults_name = str(get("faults", "str", "default"))
    try:
        faults = tuple(load_faults(faults_name))
    except OSError as exc:
        raise ConfigError(f"cannot read fault file {faults_name}: {exc.strerror}") from None
    except ValueError as exc:
        raise ConfigError(f"fault file {faults_name}: {exc}") from None

    config = CampaignConfig(
        strategy=strategy,
        device=device,
        enabled_opcodes=ops,
        seq_limit=get("seq_limit", "int", 100),
        rng_seed=get("seed", "int", 0),
        budget_commands=get("budget_cmds", "int", 10_000_000),
        budget_seconds=get("budget_secs", "float", 3600.0),
        faults=faults,
        engine=engine,
        stop_on_full_coverage=get("stop_on_full_coverage", "bool", True),
        sample_every=get("sample_every", "int", 1000),
    )
    config.validate()
    return config


def dump_config(config: CampaignConfig, preset_name: str = "desk-scale", faults: str = "default") -> str:
    """Render the effective configuration; parsing it back reproduces ``config``."""
    lines = [
        f"campaign.preset = {preset_name}",
        f"campaign.strategy = {Strategy(config.strategy).value}",
        f"campaign.seed = {config.rng_seed}",
        "campaign.ops = " + ",".join(op.cli_name for op in config.enabled_opcodes),
        f"campaign.seq_limit = {config.seq_limit}",
        f"campaign.budget_cmds = {config.budget_commands}",
        f"campaign.budget_secs = {config.budget_seconds}",
        f"campaign.stop_on_full_coverage = {str(config.stop_on_full_coverage).lower()}",
        f"campaign.sample_every = {config.sample_every}",
        f"campaign.faults = {faults}",
    ]
    for f in fields(DeviceConfig):
        value = getattr(config.device, f.name)
        lines.append(f"device.{f.name} = {str(value).lower() if isinstance(value, bool) else value}")
    for f in fields(EngineParams):
        if f.name == "thresholds":
            continue
        lines.append(f"engine.{f.name} = {getattr(config.engine, f.name)}")
    for var, delta in config.thresholds.items():
        lines.append(f"engine.delta.{var} = {delta}")
    return "\n".join(lines) + "\n"
