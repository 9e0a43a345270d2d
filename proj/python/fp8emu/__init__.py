"""Bit-exact FP8 (1-5-2) quantized training emulator."""

from ._fp8emu import (
    LossScaler,
    QuantizedTensor,
    ScaleEvent,
    conv2d,
    decode,
    dequantize,
    encode,
    gemm,
    load_quantized,
    load_tensor,
    quantize,
    range_report,
    run_experiment,
    save_quantized,
    save_tensor,
    ulp,
)

__all__ = [
    "LossScaler",
    "QuantizedTensor",
    "ScaleEvent",
    "conv2d",
    "decode",
    "dequantize",
    "encode",
    "gemm",
    "load_quantized",
    "load_tensor",
    "quantize",
    "range_report",
    "run_experiment",
    "save_quantized",
    "save_tensor",
    "ulp",
]
