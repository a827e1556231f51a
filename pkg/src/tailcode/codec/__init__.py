"""Censoring and mixture compressors built on a bit-exact arithmetic coder."""

from .arith import ArithmeticDecoder, ArithmeticEncoder, BitReader, BitWriter
from .models import (
    ESCAPE,
    BlockTailCoder,
    CensoringModel,
    KTModel,
    MixtureModel,
    censor_map,
    censoring_lengths,
    censoring_parts,
    dyadic_grid,
    grid_weights,
    kt_codelength,
    kt_model,
    mixture_lengths,
    mixture_model,
    tail_code_w,
    tail_codelength,
)
from .stream import (
    Bitstream,
    Censoring,
    Direct,
    Mixture,
    SqrtCensoring,
    codelength_ideal,
    decode,
    decode_varints,
    encode,
    encode_varints,
    ideal_lengths,
    parse_scheme,
    resolve,
)

__all__ = [
    "ArithmeticDecoder", "ArithmeticEncoder", "BitReader", "BitWriter", "ESCAPE",
    "BlockTailCoder", "CensoringModel", "KTModel", "MixtureModel", "censor_map",
    "censoring_lengths", "censoring_parts", "dyadic_grid", "grid_weights",
    "kt_codelength", "kt_model", "mixture_lengths", "mixture_model", "tail_code_w",
    "tail_codelength", "Bitstream", "Censoring", "Direct", "Mixture", "SqrtCensoring",
    "codelength_ideal", "decode", "decode_varints", "encode", "encode_varints",
    "ideal_lengths", "parse_scheme", "resolve",
]
