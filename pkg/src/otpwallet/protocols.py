"""End-to-end protocol runs across authenticator, client, wallet, and chain.

The parties are deterministic callbacks around one Ledger: the hardware
wallet signs only what the user approves on its display, the user compares
displays before approving, air-gapped values travel through the mnemonic
codec, and the client waits out block confirmations before revealing an
OTP. Adversary scenarios reuse the same machinery with stolen keys,
mempool observation, and fork control.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import random

from . import mnemonic, signing
from .authenticator import Authenticator
from .client import ClientStore
from .contract import OpType
from .hashing import Digest, random_seed
from .ledger import Ledger, Transaction
from .merkle import TreeParams

DEFAULT_PARAMS = TreeParams(S=128, N=16, P=2, N_S=8, L_S=1)


class ProtocolAbort(Exception):
    """A party refused to continue (display mismatch, refused signature)."""


@dataclass
class HardwareWallet:
    """Keypair plus a display; signs only after the user approves.

    display_limit models devices that show only a payload prefix; None
    shows everything.
    """

    keypair: signing.KeyPair
    display_limit: int | None = None

    @property
    def public(self) -> bytes:
        return self.keypair.public

    @property
    def account(self) -> str:
        return signing.account_of(self.keypair.public)

    def shown(self, payload: str) -> str:
        if self.display_limit is None:
            return payload
        return payload[: self.display_limit]

    def request_signature(self, tx: Transaction, payload: str,
                          approve) -> bool:
        if not approve(self.shown(payload)):
            return False
        tx.signature = self.keypair.sign(tx.signing_bytes())
        return True


@dataclass
class UserModel:
    """Policy callbacks of the honest user: compare, then approve."""

    expected_display: str = ""
    use_mnemonic_transport: bool = True

    def expect(self, payload: str) -> None:
        self.expected_display = payload

    def approve(self, shown: str) -> bool:
        # The user can only compare what the device shows.
        return shown == self.expected_display[: len(shown)] and bool(shown)

    def compare(self, a: str, b: str) -> bool:
        return a == b

    def transfer_digest(self, value: Digest) -> Digest:
        """Air-gapped value pass; exercises the mnemonic codec en route."""
        if not self.use_mnemonic_transport or len(value) * 8 not in mnemonic.SUPPORTED_BITS:
            return value
        return mnemonic.decode(mnemonic.encode(value))


def render_op(addr: str, param: int, op_type: OpType) -> str:
    # Address first: the most critical field lands in a truncated display.
    return f"addr={addr} param={param} type={op_type.value}"


@dataclass
class System:
    """One bootstrapped wallet world."""

    params: TreeParams
    authenticator: Authenticator
    client: ClientStore
    hw: HardwareWallet
    user: UserModel
    ledger: Ledger
    contract_id: str = ""
    recipient: str = "acct:recipient"
    confirmed_transfers: list[tuple[str, int]] = field(default_factory=list)
    depth_checks: list[tuple[int, int]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def user_account(self) -> str:
        return self.hw.account

    @property
    def contract(self):
        return self.ledger.contract(self.contract_id)

    def note(self, text: str) -> None:
        self.notes.append(text)


def make_parties_from_material(k: bytes, hw_seed: bytes,
                               params: TreeParams = DEFAULT_PARAMS,
                               funding: int = 1000) -> System:
    hw = HardwareWallet(signing.keygen(hw_seed))
    auth = Authenticator(k, params)
    client = ClientStore.bootstrap_secure(k, params)
    ledger = Ledger(initial_accounts={
        signing.account_of(hw.public): funding,
        "acct:recipient": 0,
        "acct:adversary": 50,
    })
    return System(params=params, authenticator=auth, client=client, hw=hw,
                  user=UserModel(), ledger=ledger)


def make_parties(seed: int = 0, params: TreeParams = DEFAULT_PARAMS,
                 funding: int = 1000) -> System:
    rng = random.Random(seed)
    k = random_seed(rng)
    hw_seed = bytes(rng.getrandbits(8) for _ in range(32))
    return make_parties_from_material(k, hw_seed, params, funding)


# ---------------------------------------------------------------------------
# Bootstrapping

def bootstrap_system(system: System, mode: str = "secure", funding: int = 1000,
                     tamper_root: Digest | None = None) -> System:
    """Deploy a wallet for already-built parties; `tamper_root` simulates a
    client forging the root during the insecure protocol (caught by the
    user's display comparison)."""
    auth, client, hw, user, ledger = (system.authenticator, system.client,
                                      system.hw, system.user, system.ledger)
    params = system.params

    if mode == "secure":
        # The seed travels air-gapped as mnemonic words; the client derives
        # the leaves and forgets the seed (bootstrap_secure stores no k).
        words = auth.display_seed()
        client_k = mnemonic.decode(words)
        system.client = client = ClientStore.bootstrap_secure(client_k, params)
    elif mode == "insecure":
        # Leaves travel on a microSD card; nothing secret is transferred.
        system.client = client = ClientStore.bootstrap_insecure(
            auth.export_leaves(), params)
    else:
        raise ValueError(f"unknown bootstrap mode: {mode}")

    root, sublayer, proof_sr = client.constructor_args()
    if tamper_root is not None:
        root = tamper_root

    if mode == "insecure":
        # The wallet displays the root it is about to sign; the user holds
        # it against the authenticator's own display.
        shown_root = hw.shown(root.hex())
        auth_root = auth.display_root().hex()
        if not user.compare(shown_root, auth_root[: len(shown_root)]):
            raise ProtocolAbort("root displayed by the wallet does not match "
                                "the authenticator; deployment refused")

    tx = Transaction(system.user_account, {
        "fn": "deploy_wallet", "root": root, "pk": hw.public,
        "sublayer": sublayer, "proof_sr": proof_sr, "params": params,
    }, fee=1, nonce=ledger.next_nonce(system.user_account))
    txid = ledger.submit(tx)
    ledger.mine_block()
    receipt = ledger.receipt(txid)
    if receipt is None or receipt.status != "ok":
        raise ProtocolAbort(f"deployment failed: {receipt and receipt.status}")
    system.contract_id = receipt.result
    client.contract_id = receipt.result

    # Fund the wallet from the user's account.
    fund = Transaction(system.user_account, {
        "fn": "transfer", "to": system.contract_id, "amount": funding // 2,
    }, fee=1, nonce=ledger.next_nonce(system.user_account))
    ledger.submit(fund)
    ledger.mine_block()
    return system


def run_bootstrap(mode: str = "secure", seed: int = 0,
                  params: TreeParams = DEFAULT_PARAMS, funding: int = 1000,
                  tamper_root: Digest | None = None) -> System:
    """Fresh parties from a seed, then deploy."""
    system = make_parties(seed, params, funding)
    return bootstrap_system(system, mode, funding, tamper_root)


# ---------------------------------------------------------------------------
# Operation execution

def submit_signed(system: System, call: dict, payload: str, fee: int = 1) -> str:
    """Route a transaction through the hardware wallet's display."""
    tx = Transaction(system.user_account, call, fee=fee,
                     nonce=system.ledger.next_nonce(system.user_account))
    if not system.hw.request_signature(tx, payload, system.user.approve):
        raise ProtocolAbort("user refused to sign: display mismatch")
    return system.ledger.submit(tx)


def wait_confirmations(system: System, txid: str, resubmit: Transaction | None = None) -> None:
    """Background wait until the tx sits under confirmation_depth blocks.

    Detects a reorg that dropped the tx and resubmits it, as the client is
    expected to do during the wait.
    """
    ledger = system.ledger
    for _ in range(10 * system.client.confirmation_depth):
        confs = ledger.confirmations(txid)
        if confs is None:
            if not any(t.txid == txid for t in ledger.mempool):
                if resubmit is not None:
                    ledger.submit(resubmit)
                    system.note(f"resubmitted {txid} after reorg")
                else:
                    raise ProtocolAbort(f"transaction {txid} vanished")
        elif confs >= system.client.confirmation_depth:
            return
        ledger.mine_block()
    raise ProtocolAbort(f"transaction {txid} never reached depth")


def run_operation(system: System, op_type: OpType, addr: str, param: int,
                  tampered_addr: str | None = None,
                  tampered_param: int | None = None) -> dict:
    """Two-stage operation: signed init, wait, OTP confirm.

    The tampered_* arguments model a compromised client rewriting the
    transaction after the user entered their intent.
    """
    ledger = system.ledger
    intent = render_op(addr, param, op_type)
    system.user.expect(intent)

    sent_addr = tampered_addr if tampered_addr is not None else addr
    sent_param = tampered_param if tampered_param is not None else param
    call = {"fn": "init_op", "contract": system.contract_id,
            "addr": sent_addr, "param": sent_param, "type": op_type}
    init_txid = submit_signed(system, call, render_op(sent_addr, sent_param, op_type))
    ledger.mine_block()
    receipt = ledger.receipt(init_txid)
    if receipt is None or receipt.status != "ok":
        return {"ok": False, "stage": "init",
                "status": receipt.status if receipt else "missing"}
    op_id = int(receipt.result)

    wait_confirmations(system, init_txid)

    otp = system.authenticator.get_otp(op_id % system.params.N)
    otp = system.user.transfer_digest(otp)
    payload = system.client.build_confirm(op_id, otp)
    confs = ledger.confirmations(init_txid)
    if confs is None or confs < system.client.confirmation_depth:
        raise ProtocolAbort(
            f"refusing to reveal an OTP at {confs} confirmations")
    system.depth_checks.append((op_id, confs))
    confirm = Transaction(system.user_account, {
        "fn": "confirm_op", "contract": system.contract_id,
        "otp": payload.otp, "proof": payload.proof, "op_id": op_id,
    }, fee=1, nonce=ledger.next_nonce(system.user_account))
    confirm_txid = ledger.submit(confirm)
    ledger.mine_block()
    receipt = ledger.receipt(confirm_txid)
    ok = receipt is not None and receipt.status == "ok"
    if ok and op_type is OpType.TRANSFER:
        system.confirmed_transfers.append((addr, param))
    return {"ok": ok, "stage": "confirm", "op_id": op_id,
            "status": receipt.status if receipt else "missing"}


def run_next_subtree(system: System) -> dict:
    """Single-transaction introduction of the next subtree."""
    ledger = system.ledger
    op_id = system.contract.next_op_id
    otp = system.authenticator.get_otp(op_id % system.params.N)
    otp = system.user.transfer_digest(otp)
    payload = system.client.build_next_subtree(op_id, otp)
    tx = Transaction(system.user_account, {
        "fn": "next_subtree", "contract": system.contract_id,
        "sublayer": payload.next_sublayer, "otp": payload.otp,
        "proof_otp": payload.proof_otp, "proof_sr": payload.proof_sr,
    }, fee=1, nonce=ledger.next_nonce(system.user_account))
    txid = ledger.submit(tx)
    ledger.mine_block()
    receipt = ledger.receipt(txid)
    ok = receipt is not None and receipt.status == "ok"
    if ok:
        system.client.advance_subtree()
    return {"ok": ok, "op_id": op_id,
            "status": receipt.status if receipt else "missing"}


def run_new_root(system: System, mode: str = "secure") -> dict:
    """Three-stage parent-root replacement."""
    ledger = system.ledger
    auth, client, user = system.authenticator, system.client, system.user
    op_id = system.contract.next_op_id
    rel = op_id % system.params.N
    if rel != system.params.N - 1:
        raise ProtocolAbort(f"operation {op_id} does not end the parent tree")

    if mode == "secure":
        # The seed travels again; the client rebuilds the next tree itself.
        k = mnemonic.decode(auth.display_seed())
        new_root = client.stage_rotation(k)
        preview_root, preview_h = auth.new_parent_preview(rel)
    elif mode == "insecure":
        preview_root, preview_h = auth.new_parent_preview(rel)
        new_root = client.stage_rotation(auth.export_next_leaves())
    else:
        raise ValueError(f"unknown rotation mode: {mode}")

    otp = user.transfer_digest(auth.get_otp(rel))
    stages = client.build_new_root_stages(op_id, new_root, otp)

    # Stage 1: the user holds the wallet's display against the
    # authenticator's preview before signing (insecure environment).
    if mode == "insecure":
        shown = system.hw.shown(stages.h_root_and_otp.hex())
        if not user.compare(shown, preview_h.hex()[: len(shown)]):
            raise ProtocolAbort("stage-1 display mismatch between wallet and "
                                "authenticator")
    user.expect(stages.h_root_and_otp.hex())
    tx1 = submit_signed(system, {
        "fn": "new_root_stage1", "contract": system.contract_id,
        "value": stages.h_root_and_otp}, stages.h_root_and_otp.hex())
    ledger.mine_block()
    if system.ledger.receipt(tx1).status != "ok":
        return {"ok": False, "stage": 1, "status": ledger.receipt(tx1).status}

    if mode == "insecure":
        shown = system.hw.shown(stages.new_root.hex())
        if not user.compare(shown, preview_root.hex()[: len(shown)]):
            raise ProtocolAbort("stage-2 display mismatch between wallet and "
                                "authenticator")
    user.expect(stages.new_root.hex())
    tx2 = submit_signed(system, {
        "fn": "new_root_stage2", "contract": system.contract_id,
        "value": stages.new_root}, stages.new_root.hex())
    ledger.mine_block()
    if ledger.receipt(tx2).status != "ok":
        return {"ok": False, "stage": 2, "status": ledger.receipt(tx2).status}

    tx3 = Transaction(system.user_account, {
        "fn": "new_root_stage3", "contract": system.contract_id,
        "otp": stages.otp, "proof": stages.proof_otp,
        "sublayer": stages.new_sublayer, "proof_sr": stages.proof_sr,
    }, fee=1, nonce=ledger.next_nonce(system.user_account))
    txid3 = ledger.submit(tx3)
    ledger.mine_block()
    receipt = ledger.receipt(txid3)
    ok = receipt is not None and receipt.status == "ok" and receipt.result == "updated"
    if ok:
        client.commit_rotation()
        auth.advance_generation()
    return {"ok": ok, "stage": 3,
            "status": receipt.status if receipt else "missing"}
