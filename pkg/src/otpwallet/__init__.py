"""Two-factor smart-contract wallet with hash-chain one-time passwords.

OTPs come from domain-separated hash chains whose ends a Merkle tree
aggregates; a simulated blockchain executes the wallet's state machine;
protocol runners, an adversary harness, a security-bound calculator, and
a parametric cost model sit on top.
"""

from .hashing import DomainError, chain_extend, chain_step, prf, truncated_hash
from .merkle import MerkleProof, SubtreeLayer, TreeParams
from .contract import OpType, Revert, WalletContract
from .ledger import Ledger, Transaction

__all__ = [
    "DomainError", "Ledger", "MerkleProof", "OpType", "Revert",
    "SubtreeLayer", "Transaction", "TreeParams", "WalletContract",
    "chain_extend", "chain_step", "prf", "truncated_hash",
]

__version__ = "0.1.0"
