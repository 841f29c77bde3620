"""Multipath SLAM with unsynchronized, interfering base stations.

Simulator and particle-based sum-product estimator that jointly infers
mobile-terminal states, per-base-station clock biases, and a map of
potential virtual anchors with per-anchor source identification.
"""

__version__ = "0.1.0"
