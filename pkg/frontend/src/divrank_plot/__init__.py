from .core import Curve, SchemaError, build_curves, load_runs, render

__all__ = ["Curve", "SchemaError", "build_curves", "load_runs", "render"]
