from .base import HorizonConfig, SlotPolicy, conf_radius
from .contextual import (ContextualZoomingPolicy, build_context_children,
                         context_distance, rectangle_width)
from .core import DoublingPolicy, EXP3Policy, UCB1Policy, default_exp3_gamma
from .zooming import GridPolicy, ZoomingPolicy, correlation_cap_map, correlation_caps

__all__ = [
    "ContextualZoomingPolicy",
    "DoublingPolicy",
    "EXP3Policy",
    "GridPolicy",
    "HorizonConfig",
    "SlotPolicy",
    "UCB1Policy",
    "ZoomingPolicy",
    "build_context_children",
    "conf_radius",
    "context_distance",
    "correlation_cap_map",
    "correlation_caps",
    "default_exp3_gamma",
    "rectangle_width",
]
