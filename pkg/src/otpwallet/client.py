"""The client party: stores leaves, builds proofs and transaction payloads.

The client keeps only the N/P public leaves of the current generation
(proofs are recomputed on demand), plus the metadata needed to talk to one
wallet contract. The secure bootstrap derives the leaves from the seed and
then forgets the seed and every OTP.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .hashing import DEFAULT_BASE_HASH, Digest, DomainError, HashFn, Seed, truncated_hash
from .merkle import (
    MerkleProof,
    SubtreeLayer,
    TreeParams,
    all_leaves,
    beta,
    dump_leaf_file,
    gen_proof,
    parse_leaf_file,
    proof_to_sublayer,
    reduce_mt,
    sublayer_of,
    subtree_root_proof,
)

DEFAULT_CONFIRMATION_DEPTH = 12


@dataclass
class ConfirmPayload:
    otp: Digest
    proof: MerkleProof
    op_id: int


@dataclass
class SubtreePayload:
    next_sublayer: SubtreeLayer
    otp: Digest
    proof_otp: MerkleProof      # full height, against the parent root
    proof_sr: MerkleProof       # next subtree's root against the parent root
    op_id: int


@dataclass
class NewRootStages:
    h_root_and_otp: Digest               # stage 1
    new_root: Digest                     # stage 2
    otp: Digest                          # stage 3 ...
    proof_otp: MerkleProof
    new_sublayer: SubtreeLayer
    proof_sr: MerkleProof
    op_id: int


@dataclass
class ClientStore:
    leaves: list[Digest]
    params: TreeParams
    eta: int = 0
    contract_id: str = ""
    confirmation_depth: int = DEFAULT_CONFIRMATION_DEPTH
    current_subtree: int = 0             # relative to the current generation
    base: HashFn = field(default=DEFAULT_BASE_HASH, repr=False)
    _staged_leaves: list[Digest] | None = field(default=None, repr=False)

    # -- bootstrap ---------------------------------------------------------

    @classmethod
    def bootstrap_secure(cls, k: Seed, params: TreeParams,
                         base: HashFn = DEFAULT_BASE_HASH) -> "ClientStore":
        """Derive the leaves from the seed; keep no OTP and no seed."""
        leaves = all_leaves(k, params, 0, base)
        return cls(leaves=leaves, params=params, base=base)

    @classmethod
    def bootstrap_insecure(cls, leaf_file: str, params: TreeParams,
                           base: HashFn = DEFAULT_BASE_HASH) -> "ClientStore":
        """Ingest a leaf-export file produced by the authenticator."""
        leaves, eta = parse_leaf_file(leaf_file, params)
        return cls(leaves=leaves, params=params, eta=eta, base=base)

    # -- views -------------------------------------------------------------

    @property
    def root(self) -> Digest:
        return reduce_mt(self.leaves, self.base)

    def sublayer(self, subtree: int) -> SubtreeLayer:
        return sublayer_of(self.leaves, subtree, self.params, self.base)

    def sublayer_proof(self, subtree: int) -> MerkleProof:
        return subtree_root_proof(self.leaves, subtree, self.params, self.base)

    def constructor_args(self) -> tuple[Digest, SubtreeLayer, MerkleProof]:
        return self.root, self.sublayer(0), self.sublayer_proof(0)

    # -- opID bookkeeping ----------------------------------------------------

    def _relative(self, op_id: int) -> int:
        lo = self.eta * self.params.N
        if not lo <= op_id < lo + self.params.N:
            raise DomainError(
                f"operation {op_id} is outside generation {self.eta}")
        return op_id - lo

    # -- payload builders ----------------------------------------------------

    def build_confirm(self, op_id: int, otp: Digest) -> ConfirmPayload:
        """Proof to the cached sublayer for a regular confirmation."""
        rel = self._relative(op_id)
        subtree = rel // self.params.N_S
        if subtree != self.current_subtree:
            raise DomainError(
                f"operation {op_id} is not in the current subtree "
                f"({subtree} != {self.current_subtree})")
        leaf_in_subtree = rel % self.params.subtree_leaves
        proof = proof_to_sublayer(self.leaves, subtree, leaf_in_subtree,
                                  self.params, self.base)
        return ConfirmPayload(otp=otp, proof=proof, op_id=op_id)

    def build_next_subtree(self, op_id: int, otp: Digest) -> SubtreePayload:
        rel = self._relative(op_id)
        if rel % self.params.N_S != self.params.N_S - 1:
            raise DomainError(f"operation {op_id} does not end a subtree")
        if rel % self.params.N == self.params.N - 1:
            raise DomainError(
                f"operation {op_id} ends the parent tree; rotate the root instead")
        nxt = rel // self.params.N_S + 1
        return SubtreePayload(
            next_sublayer=self.sublayer(nxt),
            otp=otp,
            proof_otp=gen_proof(self.leaves, beta(rel, self.params), 0, self.base),
            proof_sr=self.sublayer_proof(nxt),
            op_id=op_id,
        )

    def stage_rotation(self, new_leaf_source: Seed | str) -> Digest:
        """Prepare the next generation's leaves and return their root.

        Secure path: pass the seed (re-entered by the user); insecure
        path: pass the authenticator's exported leaf file for eta + 1.
        """
        if isinstance(new_leaf_source, (bytes, bytearray)):
            leaves = all_leaves(bytes(new_leaf_source), self.params,
                                self.eta + 1, self.base)
        else:
            leaves, eta = parse_leaf_file(new_leaf_source, self.params)
            if eta != self.eta + 1:
                raise DomainError(
                    f"leaf file is for generation {eta}, expected {self.eta + 1}")
        self._staged_leaves = leaves
        return reduce_mt(leaves, self.base)

    def build_new_root_stages(self, op_id: int, new_root: Digest,
                              otp: Digest) -> NewRootStages:
        rel = self._relative(op_id)
        if rel % self.params.N != self.params.N - 1:
            raise DomainError(f"operation {op_id} does not end the parent tree")
        if self._staged_leaves is None:
            raise DomainError("no staged next-generation leaves; call stage_rotation")
        staged_root = reduce_mt(self._staged_leaves, self.base)
        if staged_root != new_root:
            raise DomainError("staged leaves do not match the announced new root")
        new_sublayer = sublayer_of(self._staged_leaves, 0, self.params, self.base)
        proof_sr = subtree_root_proof(self._staged_leaves, 0, self.params, self.base)
        # The contract checks stage-3 OTPs against the cached sublayer of
        # the (last) current subtree, so the proof stops at that depth.
        last_subtree = rel // self.params.N_S
        return NewRootStages(
            h_root_and_otp=truncated_hash(new_root + otp,
                                          self.params.digest_bytes, self.base),
            new_root=new_root,
            otp=otp,
            proof_otp=proof_to_sublayer(self.leaves, last_subtree,
                                        rel % self.params.subtree_leaves,
                                        self.params, self.base),
            new_sublayer=new_sublayer,
            proof_sr=proof_sr,
            op_id=op_id,
        )

    # -- state transitions committed by the protocol runner ------------------

    def advance_subtree(self) -> None:
        if self.current_subtree + 1 >= self.params.subtree_count:
            raise DomainError("no next subtree in this generation")
        self.current_subtree += 1

    def commit_rotation(self) -> None:
        if self._staged_leaves is None:
            raise DomainError("no staged rotation to commit")
        self.leaves = self._staged_leaves
        self._staged_leaves = None
        self.eta += 1
        self.current_subtree = 0

    # -- persistence ---------------------------------------------------------

    def dump_leaves(self) -> str:
        return dump_leaf_file(self.leaves, self.params, self.eta)

    def sidecar(self) -> str:
        return json.dumps({
            "contractId": self.contract_id,
            "eta": self.eta,
            "confirmationDepth": self.confirmation_depth,
            "currentSubtree": self.current_subtree,
            "params": self.params.as_dict(),
        }, sort_keys=True)

    @classmethod
    def load(cls, leaf_file: str, sidecar: str,
             base: HashFn = DEFAULT_BASE_HASH) -> "ClientStore":
        meta = json.loads(sidecar)
        p = meta["params"]
        params = TreeParams(S=p["S"], N=p["N"], P=p["P"], N_S=p["NS"],
                            L_S=p["LS"], LEN_MAX=p.get("LEN_MAX", 8))
        leaves, eta = parse_leaf_file(leaf_file, params)
        if eta != meta["eta"]:
            raise DomainError("sidecar and leaf file disagree on the generation")
        return cls(leaves=leaves, params=params, eta=eta,
                   contract_id=meta["contractId"],
                   confirmation_depth=meta["confirmationDepth"],
                   current_subtree=meta.get("currentSubtree", 0), base=base)
