"""State data-aware fuzzing workbench for a simulated SSD firmware."""

from .campaign import CampaignConfig, CampaignStats, Strategy, run_campaign
from .device import DeviceConfig, IoCommand, Opcode, SsdDevice, preset

__all__ = [
    "CampaignConfig",
    "CampaignStats",
    "DeviceConfig",
    "IoCommand",
    "Opcode",
    "SsdDevice",
    "Strategy",
    "preset",
    "run_campaign",
]

__version__ = "0.1.0"
