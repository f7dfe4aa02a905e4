"""Model-hosting shim for the planner/vision wire protocol."""

from .config import ShimConfig
from .detections import DetectionParseError, parse_detections
from .models import HttpCompletionModel, HttpVqaModel, StubChatModel, StubVqaModel
from .prompts import build_planner_prompt, build_vision_prompt
from .server import ShimServer

__version__ = "0.1.0"
