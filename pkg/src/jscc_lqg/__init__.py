from jscc_lqg.builder import CodecBuilder
from jscc_lqg.channel import ChannelModel, audit_power, transmit
from jscc_lqg.codecs import CodecSpec, Decoder, Estimate, calibrate, cube_correct, encode
from jscc_lqg.decoders import decode, decode_ml, decode_mmse
from jscc_lqg.maps import CodecFamily
from jscc_lqg.streams import RandomStreams

codec = CodecBuilder()

__all__ = [
    "codec",
    "CodecBuilder",
    "ChannelModel",
    "CodecFamily",
    "CodecSpec",
    "Decoder",
    "Estimate",
    "RandomStreams",
    "audit_power",
    "calibrate",
    "cube_correct",
    "decode",
    "decode_ml",
    "decode_mmse",
    "encode",
    "transmit",
]
