"""Affect-aware listener modelling, proactive curation and a simulated peer mesh."""

from .affect import (CircumplexPoint, LegacyPoint, MoodAnchor, MoodLookup, adjacent_expansion, from_legacy,
                     generate_default_lookup, nearest_anchor, to_legacy)
from .catalog import Catalog, Track, mei_prior, search
from .cmb import Cmb, CmbDecodeError, FieldName, deserialize, is_echo, make_cmb, serialize
from .ere import EreState, fuse, mark_mesh_induced, outbound_mood
from .mesh import InfluenceLevel, MeshNode, should_curate
from .paf import PafProfile, TimeBand, apply, confidence, replay
from .simnet import ScenarioScript, SimMetrics, run, scenario_colisten, scenario_echo, scenario_solo
from .svaf import AnchorMemory, Band, BandConfig, FieldWeights, classify, evaluate

__version__ = "0.1.0"

__all__ = [
    "AnchorMemory", "Band", "BandConfig", "Catalog", "CircumplexPoint", "Cmb", "CmbDecodeError", "EreState",
    "FieldName", "FieldWeights", "InfluenceLevel", "LegacyPoint", "MeshNode", "MoodAnchor", "MoodLookup",
    "PafProfile", "ScenarioScript", "SimMetrics", "TimeBand", "Track", "adjacent_expansion", "apply",
    "classify", "confidence", "deserialize", "evaluate", "from_legacy", "fuse", "generate_default_lookup",
    "is_echo", "make_cmb", "mark_mesh_induced", "mei_prior", "nearest_anchor", "outbound_mood", "replay",
    "run", "scenario_colisten", "scenario_echo", "scenario_solo", "search", "serialize", "should_curate",
    "to_legacy",
]
