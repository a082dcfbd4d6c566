"""Event-camera simulation by adaptive Monte Carlo path tracing."""

__version__ = "0.1.0"

from .eventsim import Event, FrameReport, SimConfig, simulate  # noqa: F401
from .scene import Scene, SceneError, load_scene  # noqa: F401
