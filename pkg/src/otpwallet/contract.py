"""The wallet smart contract as a deterministic state machine.

Every public method either applies its full effect or raises Revert with a
category; the ledger executes calls against a snapshot and rolls back on
revert, so effects are atomic. Primitive usage (hashes, storage words,
signature checks) is counted into a CallTrace for the cost model.

Token balances live in the ledger's account map; the contract reads and
moves them through the ChainEnv it is called with.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

from .hashing import DEFAULT_BASE_HASH, Digest, HashFn, truncated_hash
from .merkle import (
    CostTally,
    MerkleProof,
    SubtreeLayer,
    TreeParams,
    derive_node_in_cache,
    derive_root_hash,
    expected_idx_in_cache,
    layer_of,
    reduce_mt,
    subtree_consistency,
)
from . import signing

SECONDS_PER_DAY = 86400

# Storage-word accounting (one word per digest at S <= 256; scalars 1 word).
BASE_STATE_WORDS = 8      # root, pk, nextOpID, layer/subtree, limits, last resort
OP_RECORD_WORDS = 3       # addr, param, type+pending


class Revert(Exception):
    """A failed contract assertion; the category names the failed check."""

    def __init__(self, category: str, detail: str = ""):
        self.category = category
        super().__init__(f"{category}: {detail}" if detail else category)


class OpType(Enum):
    TRANSFER = "transfer"
    SET_DAILY_LIMIT = "daily-limit"
    SET_LAST_RESORT_TIMEOUT = "lr-timeout"
    SET_LAST_RESORT_ADDRESS = "lr-address"


@dataclass
class OperationRecord:
    addr: str
    param: int
    pending: bool
    type: OpType


@dataclass
class CallTrace:
    call: str
    payload_bytes: int = 0
    hashes: int = 0
    sload: int = 0
    sstore_new: int = 0
    sstore_update: int = 0
    sig_verifies: int = 0


@dataclass
class ChainEnv:
    """What the platform exposes to a contract call."""

    timestamp: int
    sender: str
    balance_of: Callable[[str], int]
    transfer: Callable[[str, str, int], None]
    tx_signing_bytes: bytes = b""
    tx_signature: bytes | None = None


class WalletContract:
    def __init__(self, root: Digest, pk: bytes, cache_sublayer: SubtreeLayer,
                 proof_sr: MerkleProof, params: TreeParams, env: ChainEnv,
                 base: HashFn = DEFAULT_BASE_HASH,
                 trace: CallTrace | None = None):
        trace = trace if trace is not None else CallTrace("constructor")
        tally = CostTally()
        if len(cache_sublayer.nodes) != 2 ** params.L_S:
            raise Revert("consistency", "cached sublayer has the wrong size")
        sub_root = reduce_mt(cache_sublayer.nodes, base, tally)
        if not subtree_consistency(sub_root, proof_sr, root, base, tally):
            raise Revert("consistency", "cached sublayer does not match the root")

        self.params = params
        self.base = base
        self.root = root
        self.pk = pk
        self.owner_account = signing.account_of(pk)
        self.contract_id = truncated_hash(pk + root, params.digest_bytes, base).hex()
        self.next_op_id = 0
        self.operations: dict[int, OperationRecord] = {}
        self.sublayer = cache_sublayer.copy()
        self.current_subtree = 0          # absolute floor(opID / N_S)
        self.current_layer = 1            # sliding-window watermark
        self.l1: list[Digest] = []
        self.l2: list[Digest] = []
        self.daily_limit = 0              # 0 = unlimited
        self.spent_today = 0
        self.day_index = env.timestamp // SECONDS_PER_DAY
        self.last_resort_addr = ""
        self.last_resort_timeout = 0
        self.last_activity = env.timestamp
        self.destroyed = False

        trace.hashes += tally.hashes + 1            # +1 for the contract id
        trace.sstore_new += BASE_STATE_WORDS + len(self.sublayer.nodes)

    # -- helpers -------------------------------------------------------------

    def _alive(self):
        if self.destroyed:
            raise Revert("destroyed", "wallet was emptied to the last resort")

    def _check_sig(self, env: ChainEnv, trace: CallTrace):
        trace.sig_verifies += 1
        trace.sload += 1                            # pk
        if env.tx_signature is None or not signing.verify(
                self.pk, env.tx_signing_bytes, env.tx_signature):
            raise Revert("signature", "owner signature required")

    def balance(self, env: ChainEnv) -> int:
        return env.balance_of(self.contract_id)

    # -- first stage of an operation ------------------------------------------

    def init_op(self, addr: str, param: int, op_type: OpType, env: ChainEnv,
                trace: CallTrace | None = None) -> int:
        trace = trace if trace is not None else CallTrace("init_op")
        self._alive()
        self._check_sig(env, trace)
        trace.sload += 1                            # nextOpID
        if self.next_op_id % self.params.N_S == self.params.N_S - 1:
            raise Revert("phase", "slot reserved for the next subtree or root")
        if param < 0:
            raise Revert("funds", "negative parameter")
        if op_type is OpType.SET_LAST_RESORT_ADDRESS and addr == self.owner_account:
            raise Revert("owner-address",
                         "last resort must differ from the owner account")
        op_id = self.next_op_id
        self.next_op_id += 1
        self.operations[op_id] = OperationRecord(addr, param, True, op_type)
        trace.sstore_new += OP_RECORD_WORDS
        trace.sstore_update += 1                    # nextOpID
        return op_id

    # -- second stage ----------------------------------------------------------

    def confirm_op(self, otp: Digest, proof: MerkleProof, op_id: int,
                   env: ChainEnv, trace: CallTrace | None = None) -> None:
        trace = trace if trace is not None else CallTrace("confirm_op")
        self._alive()
        record = self.operations.get(op_id)
        trace.sload += 2                            # operation record
        if record is None or not record.pending:
            raise Revert("pending", f"operation {op_id} is not pending")
        trace.sload += 2                            # currentSubtree, currentLayer
        if op_id // self.params.N_S != self.current_subtree:
            raise Revert("subtree", f"operation {op_id} is not in the current subtree")
        layer = layer_of(op_id, self.params)
        if layer < self.current_layer:
            raise Revert("layer", f"iteration layer {layer} is already invalidated")
        self._verify_otp_cached(otp, proof, op_id, trace)
        self._exec(record, env, trace)
        record.pending = False
        self.current_layer = layer
        self.last_activity = env.timestamp
        trace.sstore_update += 3                    # pending, layer, lastActivity

    def _verify_otp_cached(self, otp: Digest, proof: MerkleProof, op_id: int,
                           trace: CallTrace) -> None:
        tally = CostTally()
        try:
            node = derive_node_in_cache(otp, proof, op_id, self.params,
                                        self.base, tally)
        except ValueError as exc:
            trace.hashes += tally.hashes
            raise Revert("otp", str(exc)) from exc
        trace.hashes += tally.hashes
        slot = expected_idx_in_cache(op_id % self.params.subtree_leaves,
                                     self.params)
        trace.sload += 1                            # cached node
        if node != self.sublayer.nodes[slot]:
            raise Revert("otp", "reconstructed node does not match the cache")

    def _exec(self, record: OperationRecord, env: ChainEnv,
              trace: CallTrace) -> None:
        trace.sload += 1                            # dailyLimit
        if record.type is OpType.TRANSFER:
            trace.sload += 1                        # balance
            if record.param > self.balance(env):
                raise Revert("funds", "transfer exceeds the balance")
            day = env.timestamp // SECONDS_PER_DAY
            if day != self.day_index:
                self.day_index = day
                self.spent_today = 0
            if self.daily_limit > 0:
                if self.spent_today + record.param > self.daily_limit:
                    raise Revert("daily-limit", "daily allowance exceeded")
                self.spent_today += record.param
                trace.sstore_update += 1
            env.transfer(self.contract_id, record.addr, record.param)
            trace.sstore_update += 2                # both balances
        elif record.type is OpType.SET_DAILY_LIMIT:
            self.daily_limit = record.param
            trace.sstore_update += 1
        elif record.type is OpType.SET_LAST_RESORT_TIMEOUT:
            self.last_resort_timeout = record.param
            trace.sstore_update += 1
        elif record.type is OpType.SET_LAST_RESORT_ADDRESS:
            self.last_resort_addr = record.addr
            trace.sstore_update += 1

    # -- subtree introduction ----------------------------------------------------

    def next_subtree(self, next_sublayer: SubtreeLayer, otp: Digest,
                     proof_otp: MerkleProof, proof_sr: MerkleProof,
                     env: ChainEnv, trace: CallTrace | None = None) -> None:
        trace = trace if trace is not None else CallTrace("next_subtree")
        self._alive()
        trace.sload += 1                            # nextOpID
        if self.next_op_id % self.params.N == self.params.N - 1:
            raise Revert("phase", "last slot of the parent tree; rotate the root")
        if self.next_op_id % self.params.N_S != self.params.N_S - 1:
            raise Revert("phase", "not at a subtree boundary")
        if len(next_sublayer.nodes) != len(self.sublayer.nodes):
            raise Revert("consistency", "sublayer size mismatch")
        tally = CostTally()
        try:
            derived = derive_root_hash(otp, proof_otp, self.next_op_id,
                                       self.params, self.base, tally)
        except ValueError as exc:
            trace.hashes += tally.hashes
            raise Revert("otp", str(exc)) from exc
        trace.sload += 1                            # root
        if derived != self.root:
            raise Revert("otp", "OTP does not verify against the parent root")
        sub_root = reduce_mt(next_sublayer.nodes, self.base, tally)
        if not subtree_consistency(sub_root, proof_sr, self.root, self.base, tally):
            trace.hashes += tally.hashes
            raise Revert("consistency", "new sublayer does not match the root")
        trace.hashes += tally.hashes
        self.sublayer = next_sublayer.copy()
        self.current_subtree += 1
        self.sublayer.index = self.current_subtree
        self.next_op_id += 1                        # accounts for the introduction
        self.current_layer = 1
        trace.sstore_update += 3 + len(self.sublayer.nodes)

    # -- parent-root replacement ---------------------------------------------------

    def _root_phase(self):
        if self.next_op_id % self.params.N != self.params.N - 1:
            raise Revert("phase", "not at the last operation of the parent tree")

    def new_root_stage1(self, h_root_and_otp: Digest, env: ChainEnv,
                        trace: CallTrace | None = None) -> None:
        trace = trace if trace is not None else CallTrace("new_root_stage1")
        self._alive()
        self._check_sig(env, trace)
        trace.sload += 1
        self._root_phase()
        self.l1.append(h_root_and_otp)
        trace.sstore_new += 1

    def new_root_stage2(self, new_root: Digest, env: ChainEnv,
                        trace: CallTrace | None = None) -> None:
        trace = trace if trace is not None else CallTrace("new_root_stage2")
        self._alive()
        self._check_sig(env, trace)
        trace.sload += 1
        self._root_phase()
        self.l2.append(new_root)
        trace.sstore_new += 1

    def new_root_stage3(self, otp: Digest, proof: MerkleProof,
                        new_sublayer: SubtreeLayer, proof_sr: MerkleProof,
                        env: ChainEnv, trace: CallTrace | None = None) -> bool:
        """Install the first (L2, L1) pair matching the revealed OTP.

        Returns True when the root was replaced. An over-long list pair is
        dropped without an update (the gas-depletion guard); a missing
        match leaves the lists for a later attempt. Both are non-reverting.
        """
        trace = trace if trace is not None else CallTrace("new_root_stage3")
        self._alive()
        trace.sload += 1
        self._root_phase()
        self._verify_otp_cached(otp, proof, self.next_op_id, trace)
        if len(self.l1) > self.params.LEN_MAX or len(self.l2) > self.params.LEN_MAX:
            self.l1, self.l2 = [], []
            trace.sstore_update += 2
            return False
        tally = CostTally()
        match = None
        for i, candidate_root in enumerate(self.l2):
            probe = truncated_hash(candidate_root + otp,
                                   self.params.digest_bytes, self.base)
            tally.hashes += 1
            for j, entry in enumerate(self.l1):
                if probe == entry:
                    match = (i, j)
                    break
            if match:
                break
        trace.hashes += tally.hashes
        if match is None:
            return False
        new_root = self.l2[match[0]]
        tally = CostTally()
        sub_root = reduce_mt(new_sublayer.nodes, self.base, tally)
        if not subtree_consistency(sub_root, proof_sr, new_root, self.base, tally):
            trace.hashes += tally.hashes
            raise Revert("consistency", "new sublayer does not match the new root")
        trace.hashes += tally.hashes
        self.root = new_root
        self.next_op_id += 1
        self.current_subtree = self.next_op_id // self.params.N_S
        self.current_layer = 1
        self.sublayer = new_sublayer.copy()
        self.sublayer.index = self.current_subtree
        self.l1, self.l2 = [], []
        trace.sstore_update += 6 + len(self.sublayer.nodes)
        return True

    # -- escape hatch ------------------------------------------------------------

    def send_to_last_resort(self, env: ChainEnv,
                            trace: CallTrace | None = None) -> int:
        trace = trace if trace is not None else CallTrace("send_to_last_resort")
        self._alive()
        trace.sload += 3
        if self.last_resort_timeout <= 0 or not self.last_resort_addr:
            raise Revert("timeout", "last resort is not configured")
        if env.timestamp - self.last_activity <= self.last_resort_timeout:
            raise Revert("timeout", "inactivity timeout has not elapsed")
        amount = self.balance(env)
        env.transfer(self.contract_id, self.last_resort_addr, amount)
        self.destroyed = True
        trace.sstore_update += 3
        return amount

    # -- canonical serialization ----------------------------------------------------

    def state_lines(self) -> list[str]:
        lines = [
            f"contractId={self.contract_id}",
            f"root={self.root.hex()}",
            f"pk={self.pk.hex()}",
            f"nextOpID={self.next_op_id}",
            f"currentSubtree={self.current_subtree}",
            f"currentLayer={self.current_layer}",
            f"dailyLimit={self.daily_limit}",
            f"spentToday={self.spent_today}",
            f"dayIndex={self.day_index}",
            f"lastResortAddr={self.last_resort_addr}",
            f"lastResortTimeout={self.last_resort_timeout}",
            f"lastActivity={self.last_activity}",
            f"destroyed={int(self.destroyed)}",
            f"sublayerIndex={self.sublayer.index}",
            "sublayer=" + ",".join(n.hex() for n in self.sublayer.nodes),
            "L1=" + ",".join(d.hex() for d in self.l1),
            "L2=" + ",".join(d.hex() for d in self.l2),
        ]
        for op_id in sorted(self.operations):
            rec = self.operations[op_id]
            lines.append(f"op{op_id}={rec.type.value},{rec.addr},{rec.param},"
                         f"{int(rec.pending)}")
        return lines
