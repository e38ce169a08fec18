"""Channel coding for NB-IoT transport channels.

Downlink channels use the tail-biting convolutional code, NPUSCH format 1
uses the turbo code and NPUSCH format 2 a plain repetition code. Every
transport block except the HARQ-ACK carries a CRC (24 bits, 16 for DCI).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from nbiot.coding import ratematch, tbcc, turbo
from nbiot.coding.crc import CRC16, CRC24A, attach_crc, check_crc
from nbiot.coding.modulation import Scheme, demodulate, modulate, papr_db

DL_TBS = (16, 24, 32, 56, 88, 120, 256, 328, 440, 680)
UL_TBS = DL_TBS + (1000,)
DCI_BITS = 23
MIB_BITS = 34


class Channel(enum.Enum):
    NPDSCH = "npdsch"
    NPUSCH_F1 = "npusch_f1"
    NPBCH = "npbch"
    NPDCCH = "npdcch"


MAX_TBS = {Channel.NPDSCH: 680, Channel.NPUSCH_F1: 1000,
           Channel.NPBCH: MIB_BITS, Channel.NPDCCH: DCI_BITS}


def crc_poly(channel: Channel) -> int:
    return CRC16 if channel is Channel.NPDCCH else CRC24A


def crc_length(channel: Channel) -> int:
    return 16 if channel is Channel.NPDCCH else 24


class CodingScheme(enum.Enum):
    TBCC = "tbcc"
    TURBO = "turbo"
    REPETITION = "repetition"


@dataclass(frozen=True)
class TransportBlock:
    payload_bits: np.ndarray
    channel: Channel = Channel.NPDSCH

    def __post_init__(self):
        bits = np.asarray(self.payload_bits, dtype=np.uint8).ravel()
        object.__setattr__(self, "payload_bits", bits)
        channel = Channel(self.channel)
        object.__setattr__(self, "channel", channel)
        limit = MAX_TBS[channel]
        if channel is Channel.NPDCCH and bits.size != DCI_BITS:
            raise ValueError(f"DCI must be exactly {DCI_BITS} bits, got {bits.size}")
        if bits.size > limit:
            raise ValueError(f"TBS {bits.size} exceeds the {channel.value} maximum of {limit}")
        if bits.size == 0:
            raise ValueError("empty transport block")

    @property
    def tbs(self) -> int:
        return int(self.payload_bits.size)

    @classmethod
    def random(cls, tbs: int, channel: Channel = Channel.NPDSCH, rng=None) -> "TransportBlock":
        rng = np.random.default_rng(rng)
        return cls(rng.integers(0, 2, tbs, dtype=np.uint8), channel)


@dataclass(frozen=True)
class CodedBlock:
    bits: np.ndarray
    scheme: CodingScheme
    info_length: int  # input length including CRC

    @property
    def buffer_length(self) -> int:
        return int(self.bits.shape[-1])


def tbcc_encode(tb: TransportBlock) -> CodedBlock:
    if tb.channel is Channel.NPUSCH_F1:
        raise ValueError("TBCC is used on downlink channels only")
    c = attach_crc(tb.payload_bits, crc_poly(tb.channel))
    streams, _, _ = tbcc.encode_streams(c)
    return CodedBlock(ratematch.build_buffer(streams), CodingScheme.TBCC, c.size)


def tbcc_decode_batch(soft_bits: np.ndarray, info_length: int, poly: int = CRC24A):
    """Decode rate-matched LLRs of shape (B, E); returns (bits incl. CRC (B, K), crc_ok (B,))."""
    soft_bits = np.atleast_2d(np.asarray(soft_bits, dtype=float))
    buf = ratematch.combine_soft(soft_bits, 3 * info_length)
    streams = ratematch.split_buffer(buf, info_length)
    bits = tbcc.viterbi_streams(streams)
    return bits, np.atleast_1d(check_crc(bits, poly))


def viterbi_decode(soft_bits, tbs: int, channel: Channel = Channel.NPDSCH):
    """Decode one block of rate-matched LLRs; returns (TransportBlock, crc_ok)."""
    channel = Channel(channel)
    soft_bits = np.asarray(soft_bits, dtype=float)
    if soft_bits.ndim != 1 or soft_bits.size < 1:
        raise ValueError("soft_bits must be a non-empty vector")
    k = tbs + crc_length(channel)
    if k < 6:
        raise ValueError("block too short for tail-biting decoding")
    bits, ok = tbcc_decode_batch(soft_bits[None], k, crc_poly(channel))
    return TransportBlock(bits[0, :tbs], channel), bool(ok[0])


def turbo_encode(tb: TransportBlock) -> CodedBlock:
    if tb.channel is not Channel.NPUSCH_F1:
        raise ValueError("turbo coding is used on NPUSCH format 1 only")
    c = attach_crc(tb.payload_bits, CRC24A)
    streams = turbo.encode_streams(c)
    return CodedBlock(ratematch.build_buffer(streams, interlace_parity=True),
                      CodingScheme.TURBO, c.size)


def turbo_decode_batch(soft_bits: np.ndarray, info_length: int, iterations: int = 6):
    soft_bits = np.atleast_2d(np.asarray(soft_bits, dtype=float))
    n = info_length + 4
    buf = ratematch.combine_soft(soft_bits, 3 * n)
    streams = ratematch.split_buffer(buf, n, interlace_parity=True)
    bits = turbo.decode_streams(streams, iterations)
    return bits, np.atleast_1d(check_crc(bits, CRC24A))


def turbo_decode(soft_bits, tbs: int, iterations: int = 6):
    if iterations < 1:
        raise ValueError("turbo decoding needs at least one iteration")
    soft_bits = np.asarray(soft_bits, dtype=float)
    bits, ok = turbo_decode_batch(soft_bits[None], tbs + 24, iterations)
    return TransportBlock(bits[0, :tbs], Channel.NPUSCH_F1), bool(ok[0])


def repetition_encode(bit: int, factor: int) -> CodedBlock:
    if factor < 1:
        raise ValueError("repetition factor must be at least 1")
    if bit not in (0, 1):
        raise ValueError("HARQ-ACK is a single bit")
    return CodedBlock(np.full(factor, bit, dtype=np.uint8), CodingScheme.REPETITION, 1)


def repetition_decode(soft_bits) -> int:
    """Sum the LLRs of all repetitions; ties resolve to 0."""
    return int(np.sum(soft_bits) < 0)


def rate_match(coded: CodedBlock, target_length: int) -> np.ndarray:
    return ratematch.select_bits(coded.bits, target_length)


__all__ = [
    "Channel", "CodedBlock", "CodingScheme", "DCI_BITS", "DL_TBS", "MIB_BITS", "MAX_TBS",
    "Scheme", "TransportBlock", "UL_TBS", "attach_crc", "check_crc", "crc_length", "crc_poly",
    "demodulate", "modulate", "papr_db", "rate_match", "repetition_decode",
    "repetition_encode", "tbcc_decode_batch", "tbcc_encode", "turbo_decode",
    "turbo_decode_batch", "turbo_encode", "viterbi_decode",
]
