"""Feature-aware dynamic visual SLAM core on simulated RGB-D sequences."""

__version__ = "0.1.0"

from .errors import FeatSlamError  # noqa: E402,F401
