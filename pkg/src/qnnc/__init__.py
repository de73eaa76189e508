"""qnnc: a compiler and bit-exact executor for pre-quantized neural-network graphs."""

__version__ = "0.1.0"
