"""HTTP service wrapping an everything-mode segmentation model."""

from .app import create_app
from .config import ServiceConfig
from .model import load_sam_generator, stub_generator

__version__ = "0.1.0"

__all__ = ["ServiceConfig", "create_app", "load_sam_generator", "stub_generator"]
