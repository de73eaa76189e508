"""Model and tensor file formats, plus framework-composite expansion."""

from .expand import expand_framework_ops
from .modelfile import ModelFile, ModelFormatError, load_model, output_qparams, parse_model, serialize_model
from .tensorfile import TensorFileError, load_tensor_file, save_tensor_file

__all__ = [
    "ModelFile",
    "ModelFormatError",
    "TensorFileError",
    "expand_framework_ops",
    "load_model",
    "load_tensor_file",
    "output_qparams",
    "parse_model",
    "save_tensor_file",
    "serialize_model",
]
