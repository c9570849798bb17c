"""Scalar and vector quantizers, bit allocation and OffsetNet."""

from .alloc import allocate_path_bits, distortion_table
from .bank import (QuantizerFormatError, ScalarBank, fit_bank, read_quantizer, write_quantizer,
                   zero_bit_spec)
from .offsetnet import OffsetConfig, OffsetNet, offsetnet_apply, offsetnet_train
from .scalar import (KINDS, LloydMaxResult, QuantizerSpec, compand, companded_spec,
                     dequantize_with_spec, hard_dequant, hard_quant, lloyd_max_fit,
                     quantize_with_spec, spec_distortion, uniform_spec)
from .vq import Codebook, nearest, vq_bits, vq_decode, vq_encode, vq_fit

__all__ = [
    "KINDS", "Codebook", "LloydMaxResult", "OffsetConfig", "OffsetNet", "QuantizerFormatError",
    "QuantizerSpec", "ScalarBank", "allocate_path_bits", "compand", "companded_spec",
    "dequantize_with_spec", "distortion_table", "fit_bank", "hard_dequant", "hard_quant",
    "lloyd_max_fit", "nearest", "offsetnet_apply", "offsetnet_train", "quantize_with_spec",
    "read_quantizer", "spec_distortion", "uniform_spec", "vq_bits", "vq_decode", "vq_encode",
    "vq_fit", "write_quantizer", "zero_bit_spec",
]
