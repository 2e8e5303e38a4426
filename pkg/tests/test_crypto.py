"""Contracts of the simulated cryptographic backends."""

from __future__ import annotations

import pytest

from detmit.crypto import (
    EVAL_FAILED,
    Ciphertext,
    FheSystem,
    IvcProof,
    ProofChainError,
    ProofToken,
    SignatureToken,
    SigCountStatement,
    SnarkParams,
    StepMeter,
    StepsExhausted,
    WitnessError,
    ivc_gen,
    ivc_prove,
    ivc_update,
    ivc_verify,
    npl_step,
    sha256,
    sig_keygen,
    sig_sign_zero,
    sig_verify,
    snark_extract,
    snark_prove,
    snark_verify,
)
from detmit.drbg import HashDrbg


@pytest.fixture(scope="module")
def rng():
    return HashDrbg(b"crypto-tests")


@pytest.fixture(scope="module")
def keypair(rng):
    return sig_keygen(rng.child("kp"))


# --- signatures -----------------------------------------------------------------


def test_sign_verify_roundtrip(rng, keypair):
    tok = sig_sign_zero(keypair, rng.child("t1"))
    assert sig_verify(keypair.verification_key, tok)
    assert SignatureToken.from_bytes(tok.to_bytes()) == tok


def test_tokens_are_distinct(rng, keypair):
    r = rng.child("distinct")
    toks = {sig_sign_zero(keypair, r).to_bytes() for _ in range(64)}
    assert len(toks) == 64


def test_mutated_tokens_rejected(rng, keypair):
    tok = sig_sign_zero(keypair, rng.child("t2"))
    flipped_nonce = SignatureToken(
        bytes([tok.nonce[0] ^ 1]) + tok.nonce[1:], tok.core
    )
    flipped_core = SignatureToken(
        tok.nonce, bytes([tok.core[0] ^ 1]) + tok.core[1:]
    )
    assert not sig_verify(keypair.verification_key, flipped_nonce)
    assert not sig_verify(keypair.verification_key, flipped_core)
    other = sig_keygen(rng.child("kp2"))
    assert not sig_verify(other.verification_key, tok)


def test_bad_nonce_length_rejected(keypair):
    assert not sig_verify(keypair.verification_key, SignatureToken(b"short", b"x" * 64))


# --- count proofs ----------------------------------------------------------------


@pytest.fixture(scope="module")
def snark(rng, keypair):
    return SnarkParams(rng.child("snark"), keypair.verification_key)


@pytest.fixture(scope="module")
def tokens(rng, keypair):
    r = rng.child("pool")
    return [sig_sign_zero(keypair, r) for _ in range(24)]


def test_prove_verify_extract(snark, tokens):
    stmt = snark.statement(5)
    proof = snark_prove(snark, stmt, tokens[:5])
    assert snark_verify(snark, stmt, proof)
    assert snark_extract(snark, proof) == tuple(tokens[:5])
    assert ProofToken.from_bytes(proof.to_bytes()) == proof


def test_proof_bound_to_statement(snark, tokens):
    proof = snark_prove(snark, snark.statement(3), tokens[:3])
    assert not snark_verify(snark, snark.statement(4), proof)


def test_insufficient_witness_rejected(snark, tokens, keypair, rng):
    with pytest.raises(WitnessError):
        snark_prove(snark, snark.statement(5), tokens[:4])
    # duplicates don't count twice
    with pytest.raises(WitnessError):
        snark_prove(snark, snark.statement(3), [tokens[0], tokens[0], tokens[1]])
    # invalid tokens don't count at all
    bad = SignatureToken(tokens[0].nonce, b"\x00" * 64)
    with pytest.raises(WitnessError):
        snark_prove(snark, snark.statement(2), [tokens[0], bad])


def test_random_proof_tokens_rejected(snark):
    r = HashDrbg(b"random-proofs")
    stmt = snark.statement(2)
    digest = stmt.digest()
    assert all(
        not snark_verify(snark, stmt, ProofToken(r.take(16), digest))
        for _ in range(1000)
    )


def test_statement_digest_binds_count_and_key():
    a = SigCountStatement(3, sha256(b"k1"))
    assert a.digest() != SigCountStatement(4, sha256(b"k1")).digest()
    assert a.digest() != SigCountStatement(3, sha256(b"k2")).digest()


# --- identity encryption -----------------------------------------------------------


@pytest.fixture(scope="module")
def fhe(rng):
    return FheSystem(rng.child("fhe"))


def test_encrypt_decrypt_roundtrip(fhe, rng):
    r = rng.child("enc")
    identity = r.take(16)
    ct = fhe.encrypt(identity, b"hello payload", r)
    assert fhe.decrypt(identity, ct) == b"hello payload"
    key = fhe.keygen(identity)
    assert FheSystem.decrypt_with_key(key, ct) == b"hello payload"


def test_decrypt_wrong_identity_fails(fhe, rng):
    r = rng.child("enc2")
    id_a, id_b = r.take(16), r.take(16)
    ct = fhe.encrypt(id_a, b"secret", r)
    assert fhe.decrypt(id_b, ct) is None
    # forged tag on a real body fails authentication
    forged = Ciphertext(id_b, ct.body)
    assert FheSystem.decrypt_with_key(fhe.keygen(id_b), forged) is None


def test_eval_transparency(fhe, rng):
    handle = fhe.register_circuit(lambda pt: pt[::-1])
    r = rng.child("eval")
    identity = r.take(16)
    ct = fhe.encrypt(identity, b"abcdef", r)
    out = fhe.eval(handle, ct)
    assert fhe.decrypt(identity, out) == b"fedcba"


def test_eval_bad_ciphertext_yields_failure_marker(fhe, rng):
    handle = fhe.register_circuit(lambda pt: pt)
    r = rng.child("eval2")
    identity = r.take(16)
    garbage = Ciphertext(identity, r.take(40))
    out = fhe.eval(handle, garbage)
    assert fhe.decrypt(identity, out) == EVAL_FAILED


def test_eval_unknown_handle(fhe, rng):
    r = rng.child("eval3")
    ct = fhe.encrypt(r.take(16), b"x", r)
    with pytest.raises(KeyError):
        fhe.eval("circuit-999999", ct)


def test_keygen_requires_16_byte_tag(fhe):
    with pytest.raises(ValueError):
        fhe.keygen(b"short")


# --- step meter ---------------------------------------------------------------------


def test_meter_attributes_and_limits():
    meter = StepMeter()
    state = sha256(b"s0")
    out = meter.run("alice", state, 5)
    ref = state
    for _ in range(5):
        ref = npl_step(ref)
    assert out == ref
    meter.set_limit("bob", 2)
    meter.step("bob", state)
    meter.step("bob", state)
    with pytest.raises(StepsExhausted):
        meter.step("bob", state)
    assert meter.snapshot() == {"alice": 5, "bob": 2}
    assert meter.total() == 7


# --- chain proofs ---------------------------------------------------------------------


def test_ivc_prove_verify(rng):
    meter = StepMeter()
    keys = ivc_gen(rng.child("ivc"), meter, b"base")
    start = sha256(b"start")
    state, proof = ivc_prove(keys, 10, start, "prover")
    assert proof.steps == 10
    assert ivc_verify(keys, 10, state, proof)
    ref = start
    for _ in range(10):
        ref = npl_step(ref)
    assert state == ref
    assert meter.snapshot()["prover"] == 10
    assert IvcProof.from_bytes(proof.to_bytes()) == proof


def test_ivc_rejects_forgeries(rng):
    meter = StepMeter()
    keys = ivc_gen(rng.child("ivc2"), meter, b"base")
    start = sha256(b"start2")
    state, proof = ivc_prove(keys, 4, start, "p")
    assert not ivc_verify(keys, 5, state, proof)  # wrong step count
    assert not ivc_verify(keys, 4, sha256(b"other"), proof)  # wrong state
    fake = IvcProof(4, sha256(b"fake"))
    assert not ivc_verify(keys, 4, state, fake)  # wrong commitment
    with pytest.raises(ProofChainError):
        ivc_update(keys, state, fake, "p")  # cannot extend a forged chain


def test_ivc_update_charges_exactly_one_step(rng):
    meter = StepMeter()
    keys = ivc_gen(rng.child("ivc3"), meter, b"base")
    start = sha256(b"start3")
    proof = keys.base_proof(start)
    assert meter.total() == 0
    state, proof = ivc_update(keys, start, proof, "p")
    assert meter.total() == 1
    assert ivc_verify(keys, 1, state, proof)
