"""Joint beamforming, IRS phase, and movable-antenna optimization for SWIPT."""

from .config import ScenarioConfig, dbm_to_watts, watts_to_dbm
from .channel import (
    PathCluster,
    ChannelSet,
    field_response_vector,
    assemble_bs_irs_channel,
    assemble_irs_user_channel,
    synthesize_scenario,
)

__all__ = [
    "ScenarioConfig",
    "dbm_to_watts",
    "watts_to_dbm",
    "PathCluster",
    "ChannelSet",
    "field_response_vector",
    "assemble_bs_irs_channel",
    "assemble_irs_user_channel",
    "synthesize_scenario",
]
