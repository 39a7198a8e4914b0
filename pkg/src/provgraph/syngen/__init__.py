"""Synthetic campaign generator with ground truth."""

from .generator import CAMPAIGNS, GroundTruth, gen_campaign, generate, load_campaign, row_to_event

__all__ = ["CAMPAIGNS", "GroundTruth", "gen_campaign", "generate", "load_campaign", "row_to_event"]
