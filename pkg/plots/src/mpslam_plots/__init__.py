"""Figure rendering for mpslam run directories.

Strictly a file consumer: reads estimates.jsonl, metrics.csv, manifest.json
and ground_truth.json, renders PNG/SVG. No estimator imports.
"""

__version__ = "0.1.0"
