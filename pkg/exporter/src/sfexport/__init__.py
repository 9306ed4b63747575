"""Checkpoint export and fixture generation for spikeforge containers."""

from .arch import ARCHITECTURES, FIXTURE_PRESETS
from .export import ExportError, export_checkpoint
from .fixture import make_fixture

__version__ = "0.1.0"
