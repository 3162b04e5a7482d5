"""maskserve: reference server for the segmentation/inpainting line protocol.

Runs real promptable-segmentation or inpainting models behind the v1 JSON
line protocol; ships with classical stand-in plugins (color/shape heuristic
segmenter, patch-based inpainter) so it works with no model weights at all.
"""

from .plugins import (
    ComboPlugin,
    PatchInpainterPlugin,
    Plugin,
    ShapeSegmenterPlugin,
    available_plugins,
    load_plugin,
)
from .server import AdapterConfig, RequestHandler, serve, serve_stdio

__version__ = "0.1.0"
