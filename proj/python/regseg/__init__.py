"""RegSeg engine bindings and checkpoint export tools."""

from . import container, mapping
from .mapping import CoverageError, MappingSyntaxError, NameMapping, TensorShapeError

try:
    from ._core import (  # noqa: F401
        BindingError, ConfigError, CorruptionError, FormatError, IoError, Model, RegsegError,
        ScheduleSyntaxError, ShapeError, SpecError, count_macs, count_params, field_of_view,
        model_metadata, param_slots, preset_names, read_container, serialize_container, unresolved_slots)
except ImportError:  # pure-Python parts stay usable without the extension
    pass

__all__ = ["container", "mapping", "NameMapping", "CoverageError", "MappingSyntaxError",
           "TensorShapeError"]
