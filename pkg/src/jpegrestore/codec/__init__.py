"""From-scratch baseline JPEG codec (4:2:0, Annex K tables, IJG quality scaling)."""
from .blocks import (BASE_CHROMA, BASE_LUMA, DCT_MATRIX, ZIGZAG, BlockGrid, QuantTableSet,
                     dct_2d, dequantize, idct_2d, inverse_zigzag, quantize,
                     scale_quant_tables, zigzag)
from .color import ImageTensor, rgb_to_ycbcr, subsample_420, upsample_420, ycbcr_to_rgb
from .errors import CodecError, ColorspaceError, JpegEncodeError, JpegParseError
from .jfif import (DEFAULT_QUALITY, JpegBitstream, compress, decode_entropy, decompress,
                   encode_entropy, forward_blocks, reconstruct, roundtrip)

__all__ = [
    "BASE_CHROMA", "BASE_LUMA", "DCT_MATRIX", "ZIGZAG", "BlockGrid", "QuantTableSet",
    "dct_2d", "dequantize", "idct_2d", "inverse_zigzag", "quantize", "scale_quant_tables",
    "zigzag", "ImageTensor", "rgb_to_ycbcr", "subsample_420", "upsample_420", "ycbcr_to_rgb",
    "CodecError", "ColorspaceError", "JpegEncodeError", "JpegParseError", "DEFAULT_QUALITY",
    "JpegBitstream", "compress", "decode_entropy", "decompress", "encode_entropy",
    "forward_blocks", "reconstruct", "roundtrip",
]
