"""Attestation, sealing, and byte accounting for the simulated enclave."""

import hashlib
import os
import struct
import unittest

import pytest

from enclavemine.enclave import (
    DEFAULT_ROOT,
    ENVELOPE_VERSION,
    REASON_MEASUREMENT,
    REASON_NONCE,
    REASON_ORG,
    REASON_SIGNATURE,
    AttestationEvidence,
    AuthFailure,
    BuildManifest,
    CapacityExceeded,
    EnclaveAccountant,
    HardwareRoot,
    KeyUnwrapFailure,
    OrgIdentity,
    SessionKeys,
    UnderflowBug,
    build_evidence,
    compute_measurement,
    new_symmetric_key,
    open_segment,
    seal_segment,
    unwrap_key,
    verify_evidence,
    wrap_key,
)


class MeasurementTest(unittest.TestCase):
    def test_digest_matches_independent_computation(self):
        manifest = BuildManifest(
            component="miner",
            version="1.2",
            algorithm="heuristics",
            params=(("b", "2"), ("a", "1")),
        )
        # Independent oracle: the documented canonical string, hashed here.
        expected = hashlib.sha256(b"miner\n1.2\nheuristics\na=1\nb=2").digest()
        self.assertEqual(compute_measurement(manifest), expected)
        self.assertEqual(len(expected), 32)

    def test_param_order_is_irrelevant(self):
        a = BuildManifest("m", "1", "x", (("k1", "v1"), ("k2", "v2")))
        b = BuildManifest("m", "1", "x", (("k2", "v2"), ("k1", "v1")))
        self.assertEqual(compute_measurement(a), compute_measurement(b))

    def test_any_field_changes_the_measurement(self):
        base = BuildManifest("m", "1", "x", (("k", "v"),))
        variants = [
            BuildManifest("m2", "1", "x", (("k", "v"),)),
            BuildManifest("m", "2", "x", (("k", "v"),)),
            BuildManifest("m", "1", "y", (("k", "v"),)),
            BuildManifest("m", "1", "x", (("k", "w"),)),
        ]
        digests = {compute_measurement(v) for v in variants}
        self.assertEqual(len(digests), 4)
        self.assertNotIn(compute_measurement(base), digests)


def _fresh_evidence(nonce=b"n" * 16, org="org:miner", root=DEFAULT_ROOT):
    manifest = BuildManifest("miner", "1", "heuristics")
    session = SessionKeys()
    ev = build_evidence(
        compute_measurement(manifest), org, session.k_pub, nonce, root=root
    )
    return manifest, session, ev


class EvidenceTest(unittest.TestCase):
    def setUp(self):
        self.nonce = os.urandom(16)
        self.manifest, self.session, self.evidence = _fresh_evidence(self.nonce)
        self.reference = compute_measurement(self.manifest)

    def appraise(self, ev, **kw):
        kw.setdefault("reference_measurement", self.reference)
        kw.setdefault("allowed_orgs", ["org:miner"])
        kw.setdefault("expected_nonce", self.nonce)
        return verify_evidence(ev, **kw)

    def test_good_evidence_is_trusted(self):
        decision = self.appraise(self.evidence)
        self.assertTrue(decision.trusted)
        self.assertIsNone(decision.reason)
        self.assertEqual(decision.k_pub, self.session.k_pub)

    def test_tampered_measurement_fails_signature_first(self):
        forged = AttestationEvidence(
            measurement=os.urandom(32),
            identity_proof=self.evidence.identity_proof,
            k_pub=self.evidence.k_pub,
            nonce=self.evidence.nonce,
            signature=self.evidence.signature,
        )
        decision = self.appraise(forged)
        self.assertFalse(decision.trusted)
        self.assertEqual(decision.reason, REASON_SIGNATURE)

    def test_wrong_root_rejected(self):
        rogue = HardwareRoot(os.urandom(32))
        _, _, ev = _fresh_evidence(self.nonce, root=rogue)
        decision = verify_evidence(
            ev, compute_measurement(BuildManifest("miner", "1", "heuristics")),
            ["org:miner"], self.nonce,
        )
        self.assertEqual((decision.trusted, decision.reason), (False, REASON_SIGNATURE))

    def test_unexpected_measurement_named(self):
        other = compute_measurement(BuildManifest("miner", "1", "declare"))
        decision = self.appraise(self.evidence, reference_measurement=other)
        self.assertEqual((decision.trusted, decision.reason), (False, REASON_MEASUREMENT))

    def test_unauthorized_org_named(self):
        decision = self.appraise(self.evidence, allowed_orgs=["org:other"])
        self.assertEqual((decision.trusted, decision.reason), (False, REASON_ORG))

    def test_stale_nonce_named(self):
        decision = self.appraise(self.evidence, expected_nonce=os.urandom(16))
        self.assertEqual((decision.trusted, decision.reason), (False, REASON_NONCE))

    def test_nonce_check_is_optional(self):
        decision = self.appraise(self.evidence, expected_nonce=None)
        self.assertTrue(decision.trusted)

    def test_dict_round_trip(self):
        wire = self.evidence.to_dict()
        self.assertEqual(AttestationEvidence.from_dict(wire), self.evidence)
        # Hex-string fields only: safe to drop straight into JSON.
        self.assertTrue(all(isinstance(v, str) for v in wire.values()))

    def test_session_private_key_never_in_wire_form(self):
        # Nothing in the evidence dict may leak the session private scalar.
        raw_priv = self.session._k_priv.private_bytes_raw()
        blob = "".join(self.evidence.to_dict().values())
        self.assertNotIn(raw_priv.hex(), blob)


class SealingTest(unittest.TestCase):
    def setUp(self):
        self.session = SessionKeys()
        self.sender = OrgIdentity("hospital", seed=hashlib.sha256(b"h").digest())
        self.payload = os.urandom(2048)

    def seal(self, payload=None, k_pub=None, sender=None):
        return seal_segment(
            payload if payload is not None else self.payload,
            new_symmetric_key(),
            k_pub or self.session.k_pub,
            sender or self.sender,
        )

    def test_round_trip(self):
        envelope = self.seal()
        out = open_segment(envelope, self.session, self.sender.public_bytes)
        self.assertEqual(out, self.payload)

    def test_envelope_layout(self):
        envelope = self.seal()
        (version,) = struct.unpack(">H", envelope[:2])
        self.assertEqual(version, ENVELOPE_VERSION)
        pos = 2
        lengths = []
        for _ in range(3):
            (n,) = struct.unpack(">I", envelope[pos : pos + 4])
            pos += 4 + n
            lengths.append(n)
        self.assertEqual(pos, len(envelope))
        wrapped_len, proof_len, ct_len = lengths
        self.assertEqual(wrapped_len, 32 + 12 + len(new_symmetric_key()) + 16)
        self.assertEqual(proof_len, 64)
        # GCM: 12-byte nonce plus 16-byte tag around the payload.
        self.assertEqual(ct_len, 12 + len(self.payload) + 16)

    def test_envelope_size_depends_only_on_payload_size(self):
        sizes = {len(self.seal(payload=os.urandom(100))) for _ in range(5)}
        self.assertEqual(len(sizes), 1)

    def test_flipped_ciphertext_bit_rejected(self):
        envelope = bytearray(self.seal())
        envelope[-1] ^= 0x01
        with self.assertRaises(AuthFailure):
            open_segment(bytes(envelope), self.session, self.sender.public_bytes)

    def test_wrong_session_cannot_open(self):
        envelope = self.seal()
        with self.assertRaises(KeyUnwrapFailure):
            open_segment(envelope, SessionKeys(), self.sender.public_bytes)

    def test_spoofed_sender_rejected(self):
        envelope = self.seal()
        impostor = OrgIdentity("impostor")
        with self.assertRaises(AuthFailure):
            open_segment(envelope, self.session, impostor.public_bytes)

    def test_resigned_envelope_still_rejected(self):
        # An impostor who re-signs the body still fails because the verifier
        # pins the expected sender's public key.
        envelope = self.seal()
        impostor = OrgIdentity("impostor")
        wrapped_len = struct.unpack(">I", envelope[2:6])[0]
        body_start = 6
        wrapped = envelope[body_start : body_start + wrapped_len]
        proof_len_at = body_start + wrapped_len
        proof_len = struct.unpack(">I", envelope[proof_len_at : proof_len_at + 4])[0]
        ct = envelope[proof_len_at + 4 + proof_len + 4 :]
        forged_proof = impostor.sign(wrapped + ct)
        forged = (
            envelope[:proof_len_at]
            + struct.pack(">I", len(forged_proof))
            + forged_proof
            + struct.pack(">I", len(ct))
            + ct
        )
        with self.assertRaises(AuthFailure):
            open_segment(forged, self.session, self.sender.public_bytes)

    def test_truncated_envelope_rejected(self):
        envelope = self.seal()
        for cut in (0, 1, 5, len(envelope) // 2, len(envelope) - 1):
            with self.assertRaises(AuthFailure):
                open_segment(envelope[:cut], self.session, self.sender.public_bytes)

    def test_trailing_bytes_rejected(self):
        envelope = self.seal() + b"\x00"
        with self.assertRaises(AuthFailure):
            open_segment(envelope, self.session, self.sender.public_bytes)

    def test_wrong_envelope_version_rejected(self):
        envelope = self.seal()
        bumped = struct.pack(">H", ENVELOPE_VERSION + 1) + envelope[2:]
        with self.assertRaises(AuthFailure):
            open_segment(bumped, self.session, self.sender.public_bytes)


def test_wrap_unwrap_round_trip():
    session = SessionKeys()
    k = new_symmetric_key()
    assert unwrap_key(wrap_key(k, session.k_pub), session) == k


def test_wrap_is_randomized():
    session = SessionKeys()
    k = new_symmetric_key()
    assert wrap_key(k, session.k_pub) != wrap_key(k, session.k_pub)


def test_unwrap_rejects_short_blob():
    with pytest.raises(KeyUnwrapFailure):
        unwrap_key(b"short", SessionKeys())


def test_root_requires_exact_seed_length():
    with pytest.raises(ValueError):
        HardwareRoot(b"short seed")


class AccountantTest(unittest.TestCase):
    def test_peak_tracks_high_water_mark(self):
        acc = EnclaveAccountant()
        acc.account(100)
        acc.account(250)
        acc.account(-300)
        acc.account(10)
        self.assertEqual(acc.current_bytes, 60)
        self.assertEqual(acc.peak_bytes, 350)

    def test_underflow_is_a_bug(self):
        acc = EnclaveAccountant()
        acc.account(5)
        with self.assertRaises(UnderflowBug):
            acc.account(-6)
        self.assertEqual(acc.current_bytes, 5)

    def test_capacity_enforced(self):
        acc = EnclaveAccountant(capacity=100)
        acc.account(90)
        with self.assertRaises(CapacityExceeded):
            acc.account(11)
        self.assertEqual(acc.current_bytes, 90)
        acc.account(10)
        self.assertEqual(acc.peak_bytes, 100)
