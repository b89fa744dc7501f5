"""Multi-part monocular pose estimation back end: keypoint geometry, EPnP with
RANSAC, and Bayesian fusion of per-part poses on SO(3)."""

__version__ = "0.1.0"
