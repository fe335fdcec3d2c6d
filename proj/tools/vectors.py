#!/usr/bin/env python3
"""Independent recomputation of the frozen ledger vectors.

Uses only hashlib and the `cryptography` package's Ed25519, with the byte
layouts written out by hand, so a bug in the C++ encoders cannot hide here.

    vectors.py generate DIR   write genesis.txt, merkle.txt, chain3.hex
    vectors.py check DIR      recompute and compare byte-for-byte, and
                              re-verify chain3.hex from its raw bytes
"""

import hashlib
import struct
import sys
from pathlib import Path

from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat
from cryptography.exceptions import InvalidSignature

VALIDATORS = ["val-1", "val-2", "val-3", "val-4"]
F = 1
QUORUM = (len(VALIDATORS) + F) // 2 + 1


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def u8(v: int) -> bytes:
    return struct.pack(">B", v)


def u64(v: int) -> bytes:
    return struct.pack(">Q", v)


def lp(data) -> bytes:
    if isinstance(data, str):
        data = data.encode()
    return struct.pack(">I", len(data)) + data


def private_key(participant: str) -> Ed25519PrivateKey:
    seed = sha256(b"recledger-key:" + participant.encode())
    return Ed25519PrivateKey.from_private_bytes(seed)


def public_key(participant: str) -> bytes:
    return private_key(participant).public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)


# Transactions -------------------------------------------------------------

def issue_payload(generator: str, i: int) -> bytes:
    # tag 0, project, type Voluntary (1), source, mwh, generator, issued_at, nonce
    return (u8(0) + lp("vector-farm") + u8(1) + lp("Solar") + u64(1) + lp(generator) + u64(i) + u64(i))


def signed_tx(generator: str, i: int) -> bytes:
    payload = issue_payload(generator, i)
    signing = lp("recledger/tx") + payload + lp(generator) + u64(i)
    sig = private_key(generator).sign(signing)
    return payload + lp(generator) + u64(i) + lp(sig)


def vector_txs():
    return [signed_tx("gen-1", i) for i in range(1, 5)]


def merkle_root(txs) -> bytes:
    level = [sha256(b"\x00" + t) for t in txs]
    if not level:
        return sha256(b"\x00")
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [sha256(b"\x01" + level[k] + level[k + 1]) for k in range(0, len(level), 2)]
    return level[0]


# Blocks -------------------------------------------------------------------

def preimage(height, prev, root, txs, proposer, tick) -> bytes:
    out = u64(height) + lp(prev) + lp(root) + u64(len(txs))
    for t in txs:
        out += lp(t)
    return out + lp(proposer) + u64(tick)


def vote(voter, height, rnd, block_hash) -> bytes:
    phase = 1  # precommit
    signing = lp("recledger/vote") + u8(phase) + u64(height) + u64(rnd) + lp(block_hash)
    sig = private_key(voter).sign(signing)
    return lp(voter) + u8(phase) + u64(height) + u64(rnd) + lp(block_hash) + lp(sig)


def qc(height, rnd, block_hash, voters) -> bytes:
    out = u64(height) + u64(rnd) + lp(block_hash) + u64(len(voters))
    for v in sorted(voters):
        out += vote(v, height, rnd, block_hash)
    return out


def genesis_preimage() -> bytes:
    return preimage(0, bytes(32), merkle_root([]), [], "genesis", 0)


def build_chain():
    txs = vector_txs()
    blocks = [genesis_preimage() + u8(0)]
    prev = sha256(genesis_preimage())
    plan = [(1, txs[0:2], 10, ["val-1", "val-2", "val-3"]), (2, txs[2:4], 20, ["val-2", "val-3", "val-4"])]
    for height, body, tick, voters in plan:
        proposer = VALIDATORS[(height + 0) % len(VALIDATORS)]
        pre = preimage(height, prev, merkle_root(body), body, proposer, tick)
        h = sha256(pre)
        blocks.append(pre + u8(1) + qc(height, 0, h, voters))
        prev = h
    return blocks


def generate():
    txs = vector_txs()
    genesis = sha256(genesis_preimage()).hex() + "\n"
    merkle = "".join(f"{n} {merkle_root(txs[:n]).hex()}\n" for n in range(0, 5))
    chain = "".join(b.hex() + "\n" for b in build_chain())
    return {"genesis.txt": genesis, "merkle.txt": merkle, "chain3.hex": chain}


# Independent parse-and-verify of an exported chain -------------------------

class Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise ValueError("truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self):
        return self.take(1)[0]

    def u64(self):
        return struct.unpack(">Q", self.take(8))[0]

    def lp(self):
        n = struct.unpack(">I", self.take(4))[0]
        return self.take(n)


def verify_tx(raw: bytes):
    r = Reader(raw)
    tag = r.u8()
    if tag != 0:
        raise ValueError("vector chain holds only Issue transactions")
    r.lp(); r.u8(); r.lp(); r.u64(); r.lp(); r.u64(); r.u64()
    payload = raw[:r.pos]
    signer = r.lp().decode()
    nonce = r.u64()
    sig = r.lp()
    if r.pos != len(raw):
        raise ValueError("trailing tx bytes")
    signing = lp("recledger/tx") + payload + lp(signer) + u64(nonce)
    Ed25519PublicKey.from_public_bytes(public_key(signer)).verify(sig, signing)


def verify_chain(lines):
    prev = None
    for height, line in enumerate(lines):
        raw = bytes.fromhex(line)
        r = Reader(raw)
        h = r.u64()
        prev_hash = r.lp()
        root = r.lp()
        txs = [r.lp() for _ in range(r.u64())]
        r.lp()
        r.u64()
        pre = raw[:r.pos]
        digest = sha256(pre)
        has_qc = r.u8()
        if h != height:
            return f"height {height}: bad height"
        if height == 0:
            if pre != genesis_preimage() or has_qc:
                return "genesis mismatch"
        else:
            if prev_hash != prev:
                return f"height {height}: bad prev hash"
            if root != merkle_root(txs):
                return f"height {height}: bad tx root"
            for t in txs:
                verify_tx(t)
            if not has_qc:
                return f"height {height}: missing certificate"
            qh, _qr, qhash = r.u64(), r.u64(), r.lp()
            if qh != height or qhash != digest:
                return f"height {height}: certificate for another block"
            voters = set()
            for _ in range(r.u64()):
                voter = r.lp().decode()
                phase, vh, vr, vhash, sig = r.u8(), r.u64(), r.u64(), r.lp(), r.lp()
                if phase != 1 or vh != height or vhash != digest or voter not in VALIDATORS:
                    return f"height {height}: bad vote from {voter}"
                signing = lp("recledger/vote") + u8(phase) + u64(vh) + u64(vr) + lp(vhash)
                Ed25519PublicKey.from_public_bytes(public_key(voter)).verify(sig, signing)
                voters.add(voter)
            if len(voters) < QUORUM:
                return f"height {height}: {len(voters)} votes, need {QUORUM}"
        if r.pos != len(raw):
            return f"height {height}: trailing bytes"
        prev = digest
    return None


def check(directory: Path) -> int:
    failures = 0
    for name, expected in generate().items():
        path = directory / name
        actual = path.read_text() if path.exists() else None
        ok = actual == expected
        failures += not ok
        print(f"{'ok  ' if ok else 'FAIL'} {name} matches independent recomputation")
    try:
        problem = verify_chain((directory / "chain3.hex").read_text().split())
    except (ValueError, InvalidSignature) as e:
        problem = f"{type(e).__name__}: {e}"
    failures += problem is not None
    print(f"{'ok  ' if problem is None else 'FAIL'} chain3.hex verifies from raw bytes"
          + ("" if problem is None else f" ({problem})"))
    return 1 if failures else 0


def main(argv):
    if len(argv) != 3 or argv[1] not in ("generate", "check"):
        print(__doc__, file=sys.stderr)
        return 2
    directory = Path(argv[2])
    if argv[1] == "generate":
        directory.mkdir(parents=True, exist_ok=True)
        for name, text in generate().items():
            (directory / name).write_text(text)
        return 0
    return check(directory)


if __name__ == "__main__":
    sys.exit(main(sys.argv))
