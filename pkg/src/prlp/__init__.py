"""Pedestrian risk-level prediction from vehicle-perspective trajectories.

Feature extraction, LSTM trajectory prediction, risk-pattern clustering and
kernel SVM classification, plus a synthetic encounter simulator.
"""

__version__ = "0.1.0"
