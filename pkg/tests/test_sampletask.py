"""Token-ladder task: level law, sampling, quality oracle, builders."""

from __future__ import annotations

import pytest

from detmit.crypto import FheSystem, IdentityKey, ProofToken, sig_keygen, sig_sign_zero
from detmit.drbg import HashDrbg
from detmit.payloads import (
    ClearPayload,
    EncPayload,
    bottom,
    decode_payload,
    encode_payload,
)
from detmit.sampletask import (
    DataTaskInstance,
    LevelLaw,
    clear_level,
    inner_level,
    make_data_instance,
    next_level,
    payload_form,
)

INST = make_data_instance(21)
R = HashDrbg(b"ladder-tests")


def test_next_level_values():
    assert [next_level(k) for k in (1, 2, 3, 4, 9, 16, 400, 512)] == [
        2, 3, 4, 6, 12, 20, 420, 534,
    ]


def test_level_law_pmf_and_cap():
    law = LevelLaw(cap=512)
    assert law.pmf(1) == 0.5
    assert law.pmf(5) == 2.0**-5
    assert law.pmf(512) == 2.0**-511  # tail mass folds onto the cap
    assert law.pmf(0) == 0.0 and law.pmf(513) == 0.0
    assert abs(sum(law.pmf(k) for k in range(1, 513)) - 1.0) < 1e-15


def test_level_law_sampling_matches_pmf():
    law = LevelLaw(cap=8)
    rng = HashDrbg(b"law")
    n = 20_000
    counts = [0] * 9
    for _ in range(n):
        counts[law.sample(rng)] += 1
    for k in range(1, 9):
        expect = n * law.pmf(k)
        sigma = (n * law.pmf(k) * (1 - law.pmf(k))) ** 0.5
        assert abs(counts[k] - expect) <= 4 * sigma + 1, k


def test_widths_cover_all_levels():
    assert INST.inner_width % 32 == 0 and INST.width % 32 == 0
    x, y = INST.clear_pair_at(INST.level_cap, R.child("wide"))
    assert len(encode_payload(x, INST.width)) == INST.width
    assert len(encode_payload(y, INST.inner_width)) == INST.inner_width


def test_sample_pair_forms_and_charging():
    rng = R.child("forms")
    forms = {payload_form(INST.sample_pair(rng)[0]) for _ in range(64)}
    assert forms == {"clear", "enc"}


def test_clear_pair_is_correct_answer():
    rng = R.child("clear")
    x, y = INST.clear_pair_at(5, rng)
    assert y.token == x.token and y.level == next_level(5)
    assert INST.h(encode_payload(x, INST.width), encode_payload(y, INST.width)) == 0


def test_enc_pair_is_correct_answer():
    rng = R.child("enc")
    x, y = INST.clear_pair_at(3, rng)
    ex, ey = INST.wrap_pair(x, y, rng)
    assert ex.id1 and ex.id2 and ex.key2
    assert ey.id1 == b"" and ey.id2 == b"" and ey.key2 == b""
    assert INST.h(encode_payload(ex, INST.width), encode_payload(ey, INST.width)) == 0


def test_h_malformed_input_scores_zero():
    assert INST.h(b"\x07garbage", b"anything") == 0
    assert INST.h(bottom(INST.width), b"") == 0


def test_h_wrong_answers_score_one():
    rng = R.child("wrong")
    x, y = INST.clear_pair_at(4, rng)
    xb = encode_payload(x, INST.width)
    assert INST.h(xb, bottom(INST.width)) == 1  # refusing an answerable input
    assert INST.h(xb, b"junk") == 1
    # level below the required climb
    low = ClearPayload(x.token, x.level, x.proof)
    assert INST.h(xb, encode_payload(low, INST.width)) == 1
    # right level, wrong token
    other = sig_sign_zero(INST.keypair, rng)
    swapped = ClearPayload(other, y.level, y.proof)
    assert INST.h(xb, encode_payload(swapped, INST.width)) == 1
    # unregistered proof
    fake = ClearPayload(x.token, y.level, ProofToken(rng.take(16), y.proof.statement_digest))
    assert INST.h(xb, encode_payload(fake, INST.width)) == 1


def test_h_statement_binding():
    # a proof for level n does not verify as a proof for level n+1
    rng = R.child("bind")
    x, y = INST.clear_pair_at(4, rng)
    inflated = ClearPayload(x.token, y.level + 3, y.proof)
    assert INST.h(encode_payload(x, INST.width), encode_payload(inflated, INST.width)) == 1


def test_h_crypto_invalid_input_scores_one():
    # parseable input whose own proof fails: treated as unanswerable, and any
    # answer — even an honestly-built one — scores 1
    rng = R.child("invalid")
    x, y = INST.clear_pair_at(4, rng)
    bad_x = ClearPayload(x.token, 6, x.proof)  # proof is for level 4, not 6
    assert (
        INST.h(encode_payload(bad_x, INST.width), encode_payload(y, INST.width)) == 1
    )


def test_h_encrypted_edges():
    rng = R.child("edges")
    x, y = INST.clear_pair_at(2, rng)
    ex, ey = INST.wrap_pair(x, y, rng)
    exb = encode_payload(ex, INST.width)
    # clear answer to an encrypted input leaks nothing useful: scores 1
    assert INST.h(exb, encode_payload(y, INST.width)) == 1
    # answer under the wrong identity fails to decrypt: scores 1
    other_id = rng.take(16)
    ct = INST.fhe.encrypt(other_id, encode_payload(y, INST.inner_width), rng)
    wrong = EncPayload(ct, b"", b"", b"")
    assert INST.h(exb, encode_payload(wrong, INST.width)) == 1
    # undecryptable x: defense is off the hook
    from detmit.crypto import Ciphertext

    junk = EncPayload(Ciphertext(ex.id1, rng.take(64)), ex.id1, ex.id2, ex.key2)
    assert INST.h(encode_payload(junk, INST.width), b"") == 0


def test_build_inputs_and_levels():
    rng = R.child("build")
    xb = INST.build_clear_input(10, rng)
    assert clear_level(xb) == 10
    eb = INST.build_enc_input(10, rng)
    assert payload_form(eb) == "enc"
    p = decode_payload(eb)
    key1 = INST.fhe.keygen(p.id1)
    assert inner_level(INST, eb, key1) == 10


def test_prove_count_range():
    with pytest.raises(ValueError):
        INST.prove_count(0)
    with pytest.raises(ValueError):
        INST.prove_count(INST.max_provable_level + 1)


def test_shipped_key_pair_works():
    # the (id2, key2) pair inside an encrypted draw really decrypts for id2
    rng = R.child("shipped")
    x, y = INST.clear_pair_at(2, rng)
    ex, _ = INST.wrap_pair(x, y, rng)
    key = IdentityKey(ex.id2, ex.key2)
    ct = FheSystem.encrypt_with_key(key, b"smuggled", rng)
    assert FheSystem.decrypt_with_key(key, ct) == b"smuggled"
    assert key == INST.fhe.keygen(ex.id2)


def test_distinct_instances_dont_cross_verify():
    other = make_data_instance(22)
    rng = R.child("cross")
    x, y = INST.clear_pair_at(3, rng)
    assert other.h(encode_payload(x, other.width), encode_payload(y, other.width)) == 1
