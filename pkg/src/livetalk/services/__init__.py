from .live import (
    BenchmarkFailure, add_instance_method, remove_instance_method, repl_eval,
    replace_method, run_benchmarks,
)
from .inspector import InspectorServer

__all__ = [
    "BenchmarkFailure", "add_instance_method", "remove_instance_method",
    "repl_eval", "replace_method", "run_benchmarks", "InspectorServer",
]
