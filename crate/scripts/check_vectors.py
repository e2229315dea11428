#!/usr/bin/env python3
"""Re-validate a golden-vector file with hashlib and the `cryptography` package.

Usage: check_vectors.py VECTORS_FILE

Beyond recomputing every digest and signature, the byte layouts of the
transaction, ACL and header fixtures are re-assembled here from scratch.
"""

import hashlib
import struct
import sys

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat


def u32(n):
    return struct.pack(">I", n)


def u64(n):
    return struct.pack(">Q", n)


def lp(s):
    b = s.encode()
    return u32(len(b)) + b


def tx_bytes(robot, seq, t, sectors, sig=b""):
    out = b"VHTX1" + lp(robot) + u64(seq) + u64(t)
    for ids in sectors:
        out += u32(len(ids)) + b"".join(lp(i) for i in sorted(ids, key=str.encode))
    return out + sig


def leading_zero_bits(digest):
    bits = 0
    for byte in digest:
        if byte == 0:
            bits += 8
            continue
        return bits + 8 - byte.bit_length()
    return bits


def main(path):
    records = {}
    failures = []
    with open(path) as f:
        for n, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                failures.append(f"line {n}: expected 3 tab-separated fields")
                continue
            label, data, digest = parts
            records[label] = (bytes.fromhex(data), bytes.fromhex(digest))

    def check(label, ok, why):
        if not ok:
            failures.append(f"{label}: {why}")

    pubkeys = {}
    for label, (data, digest) in records.items():
        kind = label.split(":", 1)[0]
        if kind == "sha512":
            check(label, hashlib.sha512(data).digest() == digest, "SHA-512 mismatch")
        elif kind == "ed25519-pub":
            key = Ed25519PrivateKey.from_private_bytes(data)
            pub = key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
            check(label, pub == digest, "public key mismatch")
            pubkeys[label.split(":", 1)[1]] = (key, digest)
        elif kind != "ed25519-sig":
            failures.append(f"{label}: unknown record kind")

    for label, (message, sig) in records.items():
        if not label.startswith("ed25519-sig:"):
            continue
        key_label = label.split(":")[1]
        if key_label not in pubkeys:
            failures.append(f"{label}: no ed25519-pub record for {key_label}")
            continue
        key, pub = pubkeys[key_label]
        check(label, key.sign(message) == sig, "signature differs from a fresh deterministic signature")
        try:
            Ed25519PublicKey.from_public_bytes(pub).verify(sig, message)
        except Exception:
            failures.append(f"{label}: signature does not verify")

    empty = [[] for _ in range(6)]
    layouts = {
        "sha512:tx-signing-bytes:R1/1": tx_bytes("R1", 1, 0, empty),
        "sha512:tx-bytes:R1/1:zero-signature": tx_bytes("R1", 1, 0, empty, bytes(64)),
        "sha512:tx-signing-bytes:R2/3": tx_bytes("R2", 3, 1000, [["L7"]] + empty[1:]),
    }
    for label, want in layouts.items():
        check(label, records.get(label, (None,))[0] == want, "byte layout differs from independent encoder")

    def signed(label, robot, seq, t, sectors, sig_label):
        sig = records[sig_label][1]
        want = tx_bytes(robot, seq, t, sectors, sig)
        check(label, records.get(label, (None,))[0] == want, "signed tx layout differs")
        check(sig_label, hashlib.sha512(tx_bytes(robot, seq, t, sectors)).digest() == records[sig_label][0],
              "signed message is not SHA-512 of the unsigned tx bytes")

    signed("sha512:tx-bytes:R1/1:zero-seed-signed", "R1", 1, 0, empty, "ed25519-sig:zero-seed:tx R1/1")
    signed("sha512:tx-bytes:reference/R1/1", "R1", 1, 0, [["L12"]] + empty[1:], "ed25519-sig:reference/R1:tx R1/1")

    # ACL: tag, version, count, then (id, pubkey, role) in id order
    acl = b"VHACL1" + u32(1) + u32(3)
    for r in ("R1", "R2", "R3"):
        acl += lp(r) + pubkeys[f"reference/{r}"][1] + b"\x00"
    check("sha512:acl:reference", records["sha512:acl:reference"][0] == acl, "ACL layout differs")
    acl_digest = hashlib.sha512(acl).digest()

    genesis = b"VHBK1" + u64(0) + bytes(64) + acl_digest + u64(0) + lp("GENESIS") + u32(0) + u64(0)
    check("sha512:block-header:reference/0", records["sha512:block-header:reference/0"][0] == genesis,
          "genesis layout differs")
    genesis_hash = hashlib.sha512(genesis).digest()

    tx_digest = hashlib.sha512(records["sha512:tx-bytes:reference/R1/1"][0]).digest()
    check("sha512:body:reference/1", records["sha512:body:reference/1"][0] == tx_digest, "body is not the tx digest")
    body = hashlib.sha512(tx_digest).digest()

    header = records["sha512:block-header:reference/1"][0]
    prefix = b"VHBK1" + u64(1) + genesis_hash + body + u64(1_000_000) + lp("R1") + u32(8)
    check("sha512:block-header:reference/1", header[:-8] == prefix, "header layout differs")
    nonce = struct.unpack(">Q", header[-8:])[0]
    check("sha512:block-header:reference/1", leading_zero_bits(hashlib.sha512(header).digest()) >= 8,
          "insufficient proof of work")
    for n in range(nonce):
        if leading_zero_bits(hashlib.sha512(prefix + u64(n)).digest()) >= 8:
            failures.append(f"block 1: nonce {n} < {nonce} already meets difficulty")
            break
    block_msg = records["ed25519-sig:reference/R1:block 1"][0]
    check("ed25519-sig:reference/R1:block 1", block_msg == b"VHBS1" + hashlib.sha512(header).digest(),
          "block signing message differs")

    for f in failures:
        print("FAIL", f)
    print(f"{len(records)} records, {len(failures)} failures")
    return 1 if failures else 0


if __name__ == "__main__":
    if len(sys.argv) != 2:
        sys.exit(__doc__)
    sys.exit(main(sys.argv[1]))
