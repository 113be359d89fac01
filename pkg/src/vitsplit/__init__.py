"""Collaborative device/cloud ViT inference planning with token pruning."""
from .model import ModelSpec, initial_token_count, token_payload_bytes
from .profiling import BandwidthEstimator, LatencyModel, fit_latency_model, predict_latency
from .pruning import PruningPolicy, PruningSchedule, build_schedule, layer_reduction, max_declining_rate
from .scheduler import Decision, SchedulerConfig, predicted_split_latency, schedule
from .splitting import candidate_split_points

__version__ = "0.1.0"
