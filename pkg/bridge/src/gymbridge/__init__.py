"""gymbridge: environment server speaking newline-delimited JSON over TCP."""

from .projection import Projection, SegmentMapError, default_segment_map_path, load_segment_map
from .server import BridgeServer, BridgeSession, serve
from .synthetic import SyntheticHumanoid

__version__ = "0.1.0"
