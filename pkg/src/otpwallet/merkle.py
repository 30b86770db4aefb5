"""Merkle aggregation of chain ends, proofs, cached sublayers, index math.

Layout. N operations are served by N/P hash chains of length P. Chain ends
(position P) are the leaves of the parent tree (height H = log2(N/P)).
Leaves are grouped into subtrees of N_S/P leaves (height H_S); the 2^L_S
nodes at depth L_S of the current subtree are cached on-chain so confirm
proofs stop early (length H_S - L_S).

Proof encoding. A proof sibling's least significant bit (bit 0 of its last
byte) is overwritten with the sibling's parity: 1 means the sibling is the
right child. The node pair hash therefore masks that bit of both children
to zero before hashing - the one bit of sibling integrity the encoding
gives up. The parity bits double as an index check: a proof's parity
pattern is the bitwise complement of the leaf position it belongs to, and
verifiers compare it against the expected position mapped through the same
convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .hashing import (
    DEFAULT_BASE_HASH,
    Digest,
    DomainError,
    HashFn,
    Seed,
    chain_extend,
    prf,
    truncated_hash,
)

LEAF_FILE_MAGIC = "smartotps-leaves"


@dataclass(frozen=True)
class TreeParams:
    """All scheme parameters, with the derived tree heights."""

    S: int = 128           # OTP / digest bit length
    N: int = 16            # operations per parent tree
    P: int = 2             # chain length
    N_S: int = 8           # operations per subtree
    L_S: int = 1           # cached-sublayer depth within a subtree
    LEN_MAX: int = 8       # bound on the root-replacement lists

    def __post_init__(self):
        if self.S % 8 != 0 or not 128 <= self.S <= 256:
            raise DomainError(f"S must be a multiple of 8 in [128, 256]: {self.S}")
        if self.P < 1 or self.N_S % self.P != 0:
            raise DomainError("P must divide N_S")
        if self.N % self.N_S != 0:
            raise DomainError("N_S must divide N")
        for leaves in (self.N // self.P, self.N_S // self.P):
            if leaves < 1 or leaves & (leaves - 1):
                raise DomainError(f"leaf counts must be powers of two: {leaves}")
        if not 0 <= self.L_S <= self.H_S:
            raise DomainError(f"L_S must be in [0, {self.H_S}]: {self.L_S}")
        if self.LEN_MAX < 1:
            raise DomainError("LEN_MAX must be >= 1")

    @property
    def leaves(self) -> int:
        return self.N // self.P

    @property
    def subtree_leaves(self) -> int:
        return self.N_S // self.P

    @property
    def subtree_count(self) -> int:
        return self.N // self.N_S

    @property
    def H(self) -> int:
        return (self.N // self.P).bit_length() - 1

    @property
    def H_S(self) -> int:
        return (self.N_S // self.P).bit_length() - 1

    @property
    def digest_bytes(self) -> int:
        return self.S // 8

    def as_dict(self) -> dict:
        return {"S": self.S, "N": self.N, "P": self.P,
                "NS": self.N_S, "LS": self.L_S, "LEN_MAX": self.LEN_MAX}


@dataclass(frozen=True)
class MerkleProof:
    """Ordered siblings, leaf to top, parity in each digest's LSB."""

    siblings: tuple[Digest, ...]

    def __len__(self) -> int:
        return len(self.siblings)


@dataclass
class SubtreeLayer:
    """The 2^L_S cached nodes at depth L_S of subtree `index`."""

    nodes: list[Digest]
    index: int = 0

    def copy(self) -> "SubtreeLayer":
        return SubtreeLayer(list(self.nodes), self.index)


@dataclass
class CostTally:
    """Counts hash evaluations performed by the functions it is passed to."""

    hashes: int = 0


# ---------------------------------------------------------------------------
# Operation-id index arithmetic (shared by authenticator, client, contract)

def alpha(i: int, params: TreeParams) -> int:
    """Chain position of OTP_i: P - floor((i % N_S) * P / N_S) - 1."""
    return params.P - ((i % params.N_S) * params.P) // params.N_S - 1


def chain_offset(i: int, params: TreeParams) -> int:
    """a(i) = floor((i % N_S) * P / N_S); the verifier runs a(i)+1 steps."""
    return ((i % params.N_S) * params.P) // params.N_S


def beta(i: int, params: TreeParams) -> int:
    """Leaf (chain) index for OTP_i within the parent tree."""
    w = params.subtree_leaves
    return (i % params.N) // params.N_S * w + i % w


def layer_of(i: int, params: TreeParams) -> int:
    """Iteration layer of OTP_i; layer 1 (chain position P-1) goes first."""
    return chain_offset(i, params) + 1


# ---------------------------------------------------------------------------
# Parity bit helpers and the node pair hash

def lsb(d: Digest) -> int:
    return d[-1] & 1

def with_lsb(d: Digest, bit: int) -> Digest:
    return d[:-1] + bytes([(d[-1] & 0xFE) | bit])

def _mask(d: Digest) -> Digest:
    return with_lsb(d, 0)


def pair_hash(left: Digest, right: Digest, base: HashFn = DEFAULT_BASE_HASH,
              tally: CostTally | None = None) -> Digest:
    """Parent node value; the LSB of each child is outside hash coverage."""
    if tally is not None:
        tally.hashes += 1
    return truncated_hash(_mask(left) + _mask(right), len(left), base)


# ---------------------------------------------------------------------------
# Tree construction and proofs

def leaf_of_chain(k: Seed, idx: int, params: TreeParams, eta: int = 0,
                  base: HashFn = DEFAULT_BASE_HASH) -> Digest:
    """Public leaf for chain `idx`: the chain end at position P.

    PRF points are offset by eta * (N/P) so successive parent-tree
    generations never reuse one.
    """
    if not 0 <= idx < params.leaves:
        raise DomainError(f"chain index out of range: {idx}")
    start = prf(k, eta * params.leaves + idx, params.digest_bytes, base)
    return chain_extend(start, 0, params.P, base)


def all_leaves(k: Seed, params: TreeParams, eta: int = 0,
               base: HashFn = DEFAULT_BASE_HASH) -> list[Digest]:
    return [leaf_of_chain(k, i, params, eta, base) for i in range(params.leaves)]


def reduce_mt(nodes: list[Digest], base: HashFn = DEFAULT_BASE_HASH,
              tally: CostTally | None = None) -> Digest:
    """Pairwise reduction of a power-of-two node list to a single root."""
    n = len(nodes)
    if n < 1 or n & (n - 1):
        raise DomainError(f"node count must be a power of two: {n}")
    level = list(nodes)
    while len(level) > 1:
        level = [pair_hash(level[2 * i], level[2 * i + 1], base, tally)
                 for i in range(len(level) // 2)]
    return level[0]


def build_levels(leaves: list[Digest],
                 base: HashFn = DEFAULT_BASE_HASH) -> list[list[Digest]]:
    """All tree levels, leaves first, root level last."""
    n = len(leaves)
    if n < 1 or n & (n - 1):
        raise DomainError(f"leaf count must be a power of two: {n}")
    levels = [list(leaves)]
    while len(levels[-1]) > 1:
        prev = levels[-1]
        levels.append([pair_hash(prev[2 * i], prev[2 * i + 1], base)
                       for i in range(len(prev) // 2)])
    return levels


def gen_proof(leaves: list[Digest], idx: int, stop_depth: int = 0,
              base: HashFn = DEFAULT_BASE_HASH) -> MerkleProof:
    """Authentication path for leaf `idx`, stopping `stop_depth` levels
    below the root; each sibling's LSB is overwritten with its parity
    (1 = right child)."""
    levels = build_levels(leaves, base)
    height = len(levels) - 1
    if not 0 <= idx < len(leaves):
        raise DomainError(f"leaf index out of range: {idx}")
    if not 0 <= stop_depth <= height:
        raise DomainError(f"stop depth out of range: {stop_depth}")
    sibs = []
    pos = idx
    for lvl in range(height - stop_depth):
        sib = levels[lvl][pos ^ 1]
        sibs.append(with_lsb(sib, pos & 1 ^ 1))
        pos >>= 1
    return MerkleProof(tuple(sibs))


def fold_proof(start: Digest, proof: MerkleProof,
               base: HashFn = DEFAULT_BASE_HASH,
               tally: CostTally | None = None) -> Digest:
    """Resolve a proof bottom-up, placing each sibling by its parity bit."""
    res = start
    for sib in proof.siblings:
        if lsb(sib) == 1:
            res = pair_hash(res, sib, base, tally)
        else:
            res = pair_hash(sib, res, base, tally)
    return res


# ---------------------------------------------------------------------------
# Index reconstruction from parity bits

def derive_idx(proof: MerkleProof) -> int:
    """Bit i set iff sibling i carries parity 1.

    For an honest proof this is the bitwise complement of the leaf
    position over the proof length; expected positions are mapped through
    expected_parity_pattern before comparison.
    """
    idx = 0
    for i, sib in enumerate(proof.siblings):
        if lsb(sib) == 1:
            idx |= 1 << i
    return idx


derive_idx_in_cache = derive_idx


def expected_parity_pattern(position: int, length: int) -> int:
    """The parity-bit word an honest proof for `position` must carry."""
    return (~position) & ((1 << length) - 1)


def expected_idx_in_cache(child_leaf_id: int, params: TreeParams) -> int:
    """Index of the cached-sublayer node covering `child_leaf_id`.

    Closed form: floor(childLeafID / 2^(H_S - L_S)).
    """
    if not 0 <= child_leaf_id < params.subtree_leaves:
        raise DomainError(f"childLeafID out of range: {child_leaf_id}")
    return child_leaf_id >> (params.H_S - params.L_S)


def expected_idx_in_cache_loop(child_leaf_id: int, params: TreeParams) -> int:
    """The bit-clearing loop form: clears bits H_S-L_S .. H_S-1, keeping
    the leaf's offset below its cached node (the part the proof's parity
    bits must encode)."""
    mask = 0xFFFFFFFF
    ret = child_leaf_id
    for i in range(params.H_S - params.L_S, params.H_S):
        ret &= mask ^ (1 << i)
    return ret


# ---------------------------------------------------------------------------
# Verifier-side reconstructions

def derive_root_hash(otp: Digest, proof: MerkleProof, op_id: int,
                     params: TreeParams, base: HashFn = DEFAULT_BASE_HASH,
                     tally: CostTally | None = None) -> Digest:
    """Reconstruct the parent root from an OTP and a full-height proof.

    Runs the chain a(opID)+1 steps from position P-1-a(opID) up to the
    leaf, checks the proof's parity pattern against the expected chain
    index beta(opID), then folds the proof.
    """
    if len(proof) != params.H:
        raise DomainError(f"proof length {len(proof)} != H {params.H}")
    expect = expected_parity_pattern(beta(op_id, params), params.H)
    if derive_idx(proof) != expect:
        raise DomainError("proof does not match the operation's leaf index")
    a = chain_offset(op_id, params)
    leaf = chain_extend(otp, params.P - 1 - a, params.P, base, tally)
    return fold_proof(leaf, proof, base, tally)


def derive_node_in_cache(otp: Digest, proof: MerkleProof, op_id: int,
                         params: TreeParams, base: HashFn = DEFAULT_BASE_HASH,
                         tally: CostTally | None = None) -> Digest:
    """Reconstruct a cached-sublayer node from an OTP and a short proof."""
    want_len = params.H_S - params.L_S
    if len(proof) != want_len:
        raise DomainError(f"proof length {len(proof)} != H_S - L_S {want_len}")
    child = op_id % params.subtree_leaves
    expect = expected_parity_pattern(expected_idx_in_cache_loop(child, params),
                                     want_len)
    if derive_idx_in_cache(proof) != expect:
        raise DomainError("proof does not match the expected cached-node slot")
    a = chain_offset(op_id, params)
    leaf = chain_extend(otp, params.P - 1 - a, params.P, base, tally)
    return fold_proof(leaf, proof, base, tally)


def subtree_consistency(sub_root: Digest, proof: MerkleProof,
                        parent_root: Digest, base: HashFn = DEFAULT_BASE_HASH,
                        tally: CostTally | None = None) -> bool:
    """Fold a subtree root up to the parent root; False on mismatch."""
    return fold_proof(sub_root, proof, base, tally) == parent_root


# ---------------------------------------------------------------------------
# Subtree views over a full leaf list

def subtree_slice(leaves: list[Digest], subtree: int,
                  params: TreeParams) -> list[Digest]:
    w = params.subtree_leaves
    if not 0 <= subtree < params.subtree_count:
        raise DomainError(f"subtree index out of range: {subtree}")
    return leaves[subtree * w:(subtree + 1) * w]


def sublayer_of(leaves: list[Digest], subtree: int, params: TreeParams,
                base: HashFn = DEFAULT_BASE_HASH) -> SubtreeLayer:
    """The 2^L_S nodes at depth L_S of the given subtree."""
    levels = build_levels(subtree_slice(leaves, subtree, params), base)
    return SubtreeLayer(list(levels[params.H_S - params.L_S]), subtree)


def subtree_root_proof(leaves: list[Digest], subtree: int, params: TreeParams,
                       base: HashFn = DEFAULT_BASE_HASH) -> MerkleProof:
    """Proof of a subtree's root against the parent root (length H - H_S)."""
    levels = build_levels(leaves, base)
    roots = levels[params.H_S]
    return gen_proof(roots, subtree, 0, base) if len(roots) > 1 else MerkleProof(())


def proof_to_sublayer(leaves: list[Digest], subtree: int, leaf_in_subtree: int,
                      params: TreeParams,
                      base: HashFn = DEFAULT_BASE_HASH) -> MerkleProof:
    """Confirm-stage proof: from a subtree leaf up to the cached sublayer."""
    return gen_proof(subtree_slice(leaves, subtree, params), leaf_in_subtree,
                     params.L_S, base)


# ---------------------------------------------------------------------------
# Leaf-export file ("microSD" transport)

def dump_leaf_file(leaves: list[Digest], params: TreeParams, eta: int) -> str:
    head = (f"{LEAF_FILE_MAGIC} v1 S={params.S} N={params.N} "
            f"P={params.P} NS={params.N_S} eta={eta}")
    return "\n".join([head] + [leaf.hex() for leaf in leaves]) + "\n"


def parse_leaf_file(text: str, params: TreeParams) -> tuple[list[Digest], int]:
    """Returns (leaves, eta); raises DomainError on malformed input or a
    header that disagrees with `params`."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DomainError("empty leaf file")
    head = lines[0].split()
    if len(head) != 7 or head[0] != LEAF_FILE_MAGIC or head[1] != "v1":
        raise DomainError(f"bad leaf file header: {lines[0]!r}")
    fields = {}
    for part in head[2:]:
        key, _, val = part.partition("=")
        try:
            fields[key] = int(val)
        except ValueError as exc:
            raise DomainError(f"bad header field: {part!r}") from exc
    want = {"S": params.S, "N": params.N, "P": params.P, "NS": params.N_S}
    for key, val in want.items():
        if fields.get(key) != val:
            raise DomainError(
                f"leaf file header {key}={fields.get(key)} != params {key}={val}")
    leaves = []
    for ln in lines[1:]:
        try:
            leaf = bytes.fromhex(ln)
        except ValueError as exc:
            raise DomainError(f"bad leaf line: {ln!r}") from exc
        if len(leaf) != params.digest_bytes:
            raise DomainError(f"leaf has {len(leaf)} bytes, want {params.digest_bytes}")
        leaves.append(leaf)
    if len(leaves) != params.leaves:
        raise DomainError(f"leaf file has {len(leaves)} leaves, want {params.leaves}")
    return leaves, fields.get("eta", 0)
