"""Payload wire format shared by the two generative tasks.

A payload is one form-tag byte, the form's fields length-prefixed in
declared order, then zero padding out to the instance width so lengths are
non-informative.  Decoding is total and padding-agnostic: any violation
(unknown tag, truncated field, nonzero padding, bad field width) yields
``None`` instead of raising, because the quality oracle scores arbitrary
bytes.

Forms:

* ``0x01`` clear ladder payload   — signature token, level, count proof
* ``0x02`` encrypted container    — ciphertext, id1, id2, key2 (ids/key may
  be empty in answer position)
* ``0x03`` clear chain payload    — step count, configuration, chain proof
* ``0x04`` encrypted container for chain payloads

The reserved "no answer" marker :data:`BOTTOM` begins with tag ``0x00`` and
therefore never decodes; models emit it (padded) when they cannot answer.
"""

from __future__ import annotations

from dataclasses import dataclass

from .crypto import Ciphertext, IvcProof, ProofToken, SignatureToken
from .wire import be64, unpack_fields

TAG_CLEAR = 0x01
TAG_ENC = 0x02
TAG_TIME_CLEAR = 0x03
TAG_TIME_ENC = 0x04

BOTTOM = b"\x00bottom"

IDENTITY_LEN = 16
IDENTITY_KEY_LEN = 32


class PayloadTooWide(ValueError):
    """An honest payload exceeded the instance width."""


@dataclass(frozen=True)
class ClearPayload:
    token: SignatureToken
    level: int
    proof: ProofToken


@dataclass(frozen=True)
class EncPayload:
    ciphertext: Ciphertext
    id1: bytes
    id2: bytes
    key2: bytes
    time: bool = False


@dataclass(frozen=True)
class TimePayload:
    steps: int
    config: bytes
    proof: IvcProof


Payload = ClearPayload | EncPayload | TimePayload


def _lp(field: bytes) -> bytes:
    return len(field).to_bytes(4, "big") + field


def pad_to(core: bytes, width: int | None) -> bytes:
    if width is None:
        return core
    if len(core) > width:
        raise PayloadTooWide(f"{len(core)} bytes > width {width}")
    return core + b"\x00" * (width - len(core))


def bottom(width: int | None = None) -> bytes:
    return pad_to(BOTTOM, width)


def encode_payload(payload: Payload, width: int | None = None) -> bytes:
    if isinstance(payload, ClearPayload):
        core = bytes([TAG_CLEAR]) + _lp(payload.token.to_bytes()) + _lp(
            be64(payload.level)
        ) + _lp(payload.proof.to_bytes())
    elif isinstance(payload, TimePayload):
        core = bytes([TAG_TIME_CLEAR]) + _lp(be64(payload.steps)) + _lp(
            payload.config
        ) + _lp(payload.proof.to_bytes())
    elif isinstance(payload, EncPayload):
        tag = TAG_TIME_ENC if payload.time else TAG_ENC
        core = bytes([tag]) + _lp(payload.ciphertext.to_bytes()) + _lp(
            payload.id1
        ) + _lp(payload.id2) + _lp(payload.key2)
    else:  # pragma: no cover - exhaustive by type
        raise TypeError(f"not a payload: {payload!r}")
    return pad_to(core, width)


def _zero_padding(rest: bytes) -> bool:
    return rest.count(0) == len(rest)


def decode_payload(buf: bytes) -> Payload | None:
    if len(buf) < 1:
        return None
    tag = buf[0]
    if tag == TAG_CLEAR:
        parsed = unpack_fields(buf[1:], 3)
        if parsed is None:
            return None
        (token_b, level_b, proof_b), rest = parsed
        if not _zero_padding(rest) or len(level_b) != 8:
            return None
        token = SignatureToken.from_bytes(token_b)
        proof = ProofToken.from_bytes(proof_b)
        level = int.from_bytes(level_b, "big")
        if token is None or proof is None or level < 1:
            return None
        return ClearPayload(token=token, level=level, proof=proof)
    if tag == TAG_TIME_CLEAR:
        parsed = unpack_fields(buf[1:], 3)
        if parsed is None:
            return None
        (steps_b, config_b, proof_b), rest = parsed
        if not _zero_padding(rest) or len(steps_b) != 8 or len(config_b) != 32:
            return None
        proof = IvcProof.from_bytes(proof_b)
        steps = int.from_bytes(steps_b, "big")
        if proof is None or steps < 1:
            return None
        return TimePayload(steps=steps, config=config_b, proof=proof)
    if tag in (TAG_ENC, TAG_TIME_ENC):
        parsed = unpack_fields(buf[1:], 4)
        if parsed is None:
            return None
        (ct_b, id1, id2, key2), rest = parsed
        if not _zero_padding(rest):
            return None
        if len(id1) not in (0, IDENTITY_LEN) or len(id2) not in (0, IDENTITY_LEN):
            return None
        if len(key2) not in (0, IDENTITY_KEY_LEN):
            return None
        ct = Ciphertext.from_bytes(ct_b)
        if ct is None:
            return None
        return EncPayload(
            ciphertext=ct, id1=id1, id2=id2, key2=key2, time=(tag == TAG_TIME_ENC)
        )
    return None
