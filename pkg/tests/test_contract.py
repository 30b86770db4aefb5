"""Wallet state machine driven directly, without the ledger."""

import pytest

from otpwallet import signing
from otpwallet.client import ClientStore
from otpwallet.contract import ChainEnv, OpType, Revert, WalletContract
from otpwallet.hashing import chain_step, truncated_hash
from otpwallet.merkle import MerkleProof, SubtreeLayer, TreeParams, layer_of

from harness import K, T0, World as BaseWorld

PARAMS = TreeParams(S=128, N=16, P=2, N_S=8, L_S=1)


class World(BaseWorld):
    def __init__(self, params=PARAMS, funding=100):
        super().__init__(params, funding)


@pytest.fixture
def world():
    return World()


# -- constructor ---------------------------------------------------------------

def test_contract_id_is_hash_of_pk_and_root(world):
    expected = truncated_hash(world.keypair.public + world.wallet.root)
    assert world.wallet.contract_id == expected.hex()


def test_forged_sublayer_reverts_deployment():
    w = World.__new__(World)
    w.params = PARAMS
    w.now = T0
    w.keypair = signing.keygen(bytes([6]) * 32)
    w.accounts = {}
    store = ClientStore.bootstrap_secure(K, PARAMS)
    root, sublayer, proof_sr = store.constructor_args()
    forged = SubtreeLayer([truncated_hash(b"junk")] * len(sublayer.nodes), 0)
    with pytest.raises(Revert) as err:
        WalletContract(root, w.keypair.public, forged, proof_sr, PARAMS,
                       ChainEnv(T0, "x", lambda a: 0, lambda f, t, v: None))
    assert err.value.category == "consistency"


def test_degenerate_cache_is_the_root_itself():
    params = TreeParams(S=128, N=8, P=1, N_S=8, L_S=0)
    store = ClientStore.bootstrap_secure(K, params)
    root, sublayer, proof_sr = store.constructor_args()
    assert sublayer.nodes == [root] and len(proof_sr) == 0
    kp = signing.keygen(bytes([7]) * 32)
    wallet = WalletContract(root, kp.public, sublayer, proof_sr, params,
                            ChainEnv(T0, "x", lambda a: 0, lambda f, t, v: None))
    assert wallet.root == root


# -- init ------------------------------------------------------------------------

def test_first_init_returns_op_id_zero(world):
    assert world.init() == 0
    assert world.init() == 1


def test_unsigned_init_reverts(world):
    with pytest.raises(Revert) as err:
        world.wallet.init_op("acct:bob", 1, OpType.TRANSFER,
                             world.env(world.owner, signed=False))
    assert err.value.category == "signature"


def test_wrong_key_init_reverts(world):
    intruder = signing.keygen(bytes([9]) * 32)
    env = world.env("acct:adv")
    env.tx_signature = intruder.sign(env.tx_signing_bytes)
    with pytest.raises(Revert) as err:
        world.wallet.init_op("acct:bob", 1, OpType.TRANSFER, env)
    assert err.value.category == "signature"


def test_reserved_slot_refuses_init(world):
    for _ in range(PARAMS.N_S - 1):
        world.init()
    assert world.wallet.next_op_id == PARAMS.N_S - 1
    with pytest.raises(Revert) as err:
        world.init()
    assert err.value.category == "phase"


def test_last_resort_address_must_differ_from_owner(world):
    with pytest.raises(Revert) as err:
        world.init(addr=world.owner, op_type=OpType.SET_LAST_RESORT_ADDRESS)
    assert err.value.category == "owner-address"


# -- confirm -----------------------------------------------------------------------

def test_transfer_moves_tokens(world):
    op = world.init(param=5)
    world.confirm(op)
    assert world.accounts[world.wallet.contract_id] == 95
    assert world.accounts["acct:bob"] == 5
    assert not world.wallet.operations[op].pending


def test_confirm_requires_pending(world):
    op = world.init()
    world.confirm(op)
    with pytest.raises(Revert) as err:
        world.confirm(op)
    assert err.value.category == "pending"
    with pytest.raises(Revert) as err:
        world.confirm(2)                        # in range, never initialized
    assert err.value.category == "pending"


def test_otp_for_other_operation_rejected(world):
    op0, op1 = world.init(), world.init()
    payload = world.store.build_confirm(op1, world.otp(op1))
    # Wrong OTP under the right proof: value mismatch.
    with pytest.raises(Revert) as err:
        world.wallet.confirm_op(world.otp(op0), payload.proof, op1,
                                world.env(world.owner))
    assert err.value.category == "otp"
    # Right OTP under the other op's id: linkage mismatch.
    payload0 = world.store.build_confirm(op0, world.otp(op0))
    with pytest.raises(Revert) as err:
        world.wallet.confirm_op(payload0.otp, payload0.proof, op1,
                                world.env(world.owner))
    assert err.value.category == "otp"


def test_otp_from_a_different_seed_never_confirms(world):
    from otpwallet.authenticator import Authenticator
    stranger = Authenticator(bytes(range(100, 116)), PARAMS)
    for op_id in (world.init(), world.init()):
        foreign = stranger.get_otp(op_id)
        payload = world.store.build_confirm(op_id, foreign)
        with pytest.raises(Revert) as err:
            world.wallet.confirm_op(payload.otp, payload.proof, op_id,
                                    world.env(world.owner))
        assert err.value.category == "otp"


def test_sliding_window_invalidates_earlier_layers(world):
    ops = [world.init(param=1) for _ in range(6)]
    layer2_op = ops[4]
    assert layer_of(layer2_op, PARAMS) == 2
    world.confirm(layer2_op)
    assert world.wallet.current_layer == 2
    for op in ops[:4]:
        assert layer_of(op, PARAMS) == 1
        with pytest.raises(Revert) as err:
            world.confirm(op)
        assert err.value.category == "layer"
    world.confirm(ops[5])                       # same layer still fine


def test_derived_earlier_layer_digest_rejected(world):
    # From a revealed layer-2 OTP anyone can compute the layer-1 element
    # of the same chain; the watermark must refuse it.
    ops = [world.init(param=1) for _ in range(6)]
    world.confirm(ops[4])                       # layer 2, chain 0
    derived = chain_step(world.otp(ops[4]), PARAMS.P - 1)
    assert derived == world.otp(ops[0])         # layer-1 OTP of chain 0
    payload = world.store.build_confirm(ops[0], derived)
    with pytest.raises(Revert) as err:
        world.wallet.confirm_op(payload.otp, payload.proof, ops[0],
                                world.env(world.owner))
    assert err.value.category == "layer"


def test_transfer_exceeding_balance_reverts(world):
    op = world.init(param=101)
    with pytest.raises(Revert) as err:
        world.confirm(op)
    assert err.value.category == "funds"
    assert world.wallet.operations[op].pending  # revert left it pending


def test_daily_limit_enforced_and_rolls_over(world):
    op = world.init(param=10, op_type=OpType.SET_DAILY_LIMIT, addr="")
    world.confirm(op)
    assert world.wallet.daily_limit == 10
    op = world.init(param=8)
    world.confirm(op)
    op = world.init(param=8)
    with pytest.raises(Revert) as err:
        world.confirm(op)
    assert err.value.category == "daily-limit"
    world.now += 86_400                          # next day, allowance resets
    world.confirm(op)
    assert world.accounts["acct:bob"] == 16


def test_stale_subtree_confirm_rejected(world):
    ops = [world.init(param=1) for _ in range(7)]
    for op in ops[:6]:
        world.confirm(op)
    leftover = ops[6]
    world.introduce_subtree()
    # The client itself refuses cross-subtree payloads; drive the contract
    # directly to observe its own check.
    from otpwallet.hashing import DomainError
    from otpwallet.merkle import proof_to_sublayer
    with pytest.raises(DomainError):
        world.store.build_confirm(leftover, world.otp(leftover))
    proof = proof_to_sublayer(world.store.leaves, 0,
                              leftover % PARAMS.subtree_leaves, PARAMS)
    with pytest.raises(Revert) as err:
        world.wallet.confirm_op(world.otp(leftover), proof, leftover,
                                world.env(world.owner))
    assert err.value.category == "subtree"


# -- next_subtree --------------------------------------------------------------------

def test_subtree_introduction_advances_delta(world):
    for _ in range(PARAMS.N_S - 1):
        world.init(param=1)
    assert world.wallet.current_subtree == 0
    world.introduce_subtree()
    assert world.wallet.current_subtree == 1
    assert world.wallet.current_layer == 1
    assert world.wallet.next_op_id == PARAMS.N_S


def test_subtree_introduction_rejected_off_phase(world):
    op_id = world.wallet.next_op_id
    store = world.store
    with pytest.raises(Revert) as err:
        world.wallet.next_subtree(store.sublayer(1), world.otp(op_id),
                                  MerkleProof(()), store.sublayer_proof(1),
                                  world.env(world.owner))
    assert err.value.category == "phase"


def test_subtree_replay_hits_phase_check(world):
    for _ in range(PARAMS.N_S - 1):
        world.init(param=1)
    op_id = world.wallet.next_op_id
    payload = world.store.build_next_subtree(op_id, world.otp(op_id))
    world.wallet.next_subtree(payload.next_sublayer, payload.otp,
                              payload.proof_otp, payload.proof_sr,
                              world.env(world.owner))
    with pytest.raises(Revert) as err:
        world.wallet.next_subtree(payload.next_sublayer, payload.otp,
                                  payload.proof_otp, payload.proof_sr,
                                  world.env(world.owner))
    assert err.value.category == "phase"


def test_subtree_refused_at_parent_boundary(world):
    for _ in range(PARAMS.N_S - 1):
        world.init(param=1)
    world.introduce_subtree()
    for _ in range(PARAMS.N_S - 1):
        world.init(param=1)
    assert world.wallet.next_op_id == PARAMS.N - 1
    op_id = world.wallet.next_op_id
    sublayer = world.store.sublayer(1)
    with pytest.raises(Revert) as err:
        world.wallet.next_subtree(sublayer, world.otp(op_id),
                                  MerkleProof(()), MerkleProof(()),
                                  world.env(world.owner))
    assert err.value.category == "phase"


# -- root replacement -------------------------------------------------------------------

def drive_to_tree_boundary(world):
    params = world.params
    while world.wallet.next_op_id % params.N != params.N - 1:
        if world.wallet.next_op_id % params.N_S == params.N_S - 1:
            world.introduce_subtree()
        else:
            world.init(param=1)


def test_three_stage_rotation_replaces_root(world):
    drive_to_tree_boundary(world)
    old_root = world.wallet.root
    assert world.rotate_root()
    assert world.wallet.root != old_root
    assert world.wallet.next_op_id == PARAMS.N
    assert world.wallet.current_subtree == PARAMS.N // PARAMS.N_S
    # Generation-1 OTPs verify against the new state.
    op = world.init(param=2)
    world.confirm(op)
    assert world.accounts["acct:bob"] == 2


def test_two_consecutive_generations_rotate_cleanly(world):
    for generation in (1, 2):
        drive_to_tree_boundary(world)
        assert world.rotate_root()
        assert world.store.eta == generation
        assert world.wallet.next_op_id == generation * PARAMS.N
        op = world.init(param=1)
        world.confirm(op)


def test_rotation_stages_enforce_phase_and_signature(world):
    value = truncated_hash(b"x")
    with pytest.raises(Revert) as err:
        world.wallet.new_root_stage1(value, world.env(world.owner, signed=True))
    assert err.value.category == "phase"
    drive_to_tree_boundary(world)
    with pytest.raises(Revert) as err:
        world.wallet.new_root_stage1(value, world.env(world.owner))
    assert err.value.category == "signature"
    with pytest.raises(Revert) as err:
        world.wallet.new_root_stage2(value, world.env(world.owner))
    assert err.value.category == "signature"


def test_stage3_without_matching_pair_is_a_noop(world):
    drive_to_tree_boundary(world)
    op_id = world.wallet.next_op_id
    new_root = world.store.stage_rotation(K)
    stages = world.store.build_new_root_stages(op_id, new_root,
                                               world.otp(op_id))
    world.wallet.new_root_stage1(stages.h_root_and_otp,
                                 world.env(world.owner, signed=True))
    # Stage 2 never ran: no pair can match, lists stay, root unchanged.
    old_root = world.wallet.root
    ok = world.wallet.new_root_stage3(stages.otp, stages.proof_otp,
                                      stages.new_sublayer, stages.proof_sr,
                                      world.env(world.owner))
    assert not ok
    assert world.wallet.root == old_root
    assert len(world.wallet.l1) == 1 and len(world.wallet.l2) == 0
    # Completing stage 2 lets a retry of stage 3 succeed.
    world.wallet.new_root_stage2(stages.new_root,
                                 world.env(world.owner, signed=True))
    assert world.wallet.new_root_stage3(stages.otp, stages.proof_otp,
                                        stages.new_sublayer, stages.proof_sr,
                                        world.env(world.owner))


def test_overflowing_lists_are_cleared_without_update(world):
    drive_to_tree_boundary(world)
    op_id = world.wallet.next_op_id
    new_root = world.store.stage_rotation(K)
    stages = world.store.build_new_root_stages(op_id, new_root,
                                               world.otp(op_id))
    for i in range(PARAMS.LEN_MAX + 1):
        world.wallet.new_root_stage1(truncated_hash(bytes([i])),
                                     world.env(world.owner, signed=True))
        world.wallet.new_root_stage2(truncated_hash(bytes([i, 1])),
                                     world.env(world.owner, signed=True))
    old_root = world.wallet.root
    ok = world.wallet.new_root_stage3(stages.otp, stages.proof_otp,
                                      stages.new_sublayer, stages.proof_sr,
                                      world.env(world.owner))
    assert not ok
    assert world.wallet.root == old_root
    assert world.wallet.l1 == [] and world.wallet.l2 == []


def test_first_match_wins_over_later_adversary_pair(world):
    drive_to_tree_boundary(world)
    op_id = world.wallet.next_op_id
    otp = world.otp(op_id)
    new_root = world.store.stage_rotation(K)
    stages = world.store.build_new_root_stages(op_id, new_root, otp)
    env = lambda: world.env(world.owner, signed=True)
    world.wallet.new_root_stage1(stages.h_root_and_otp, env())
    world.wallet.new_root_stage2(stages.new_root, env())
    # Adversary (holding the stolen key) appends a matching pair for its
    # own root after intercepting the OTP.
    adv_root = truncated_hash(b"adversary-root")
    world.wallet.new_root_stage1(truncated_hash(adv_root + otp), env())
    world.wallet.new_root_stage2(adv_root, env())
    assert world.wallet.new_root_stage3(stages.otp, stages.proof_otp,
                                        stages.new_sublayer, stages.proof_sr,
                                        world.env(world.owner))
    assert world.wallet.root == new_root        # the user's earlier pair won


# -- last resort -----------------------------------------------------------------------

def configure_last_resort(world, timeout=1000):
    op = world.init(addr="acct:heir", op_type=OpType.SET_LAST_RESORT_ADDRESS,
                    param=0)
    world.confirm(op)
    op = world.init(param=timeout, op_type=OpType.SET_LAST_RESORT_TIMEOUT,
                    addr="")
    world.confirm(op)


def test_last_resort_timing_boundaries(world):
    configure_last_resort(world)
    start = world.wallet.last_activity
    world.now = start + 1000 - 1
    with pytest.raises(Revert) as err:
        world.wallet.send_to_last_resort(world.env("acct:anyone"))
    assert err.value.category == "timeout"
    world.now = start + 1000
    with pytest.raises(Revert):
        world.wallet.send_to_last_resort(world.env("acct:anyone"))
    world.now = start + 1000 + 1
    amount = world.wallet.send_to_last_resort(world.env("acct:anyone"))
    assert amount == world.accounts["acct:heir"] > 0
    assert world.accounts[world.wallet.contract_id] == 0
    assert world.wallet.destroyed
    with pytest.raises(Revert) as err:
        world.init()
    assert err.value.category == "destroyed"


def test_confirmations_postpone_last_resort(world):
    configure_last_resort(world)
    start = world.wallet.last_activity
    world.now = start + 900
    op = world.init(param=1)
    world.confirm(op)                            # resets the activity clock
    world.now = start + 1001
    with pytest.raises(Revert):
        world.wallet.send_to_last_resort(world.env("acct:anyone"))
    world.now = world.wallet.last_activity + 1001
    assert world.wallet.send_to_last_resort(world.env("acct:anyone")) > 0


def test_unconfigured_last_resort_reverts(world):
    with pytest.raises(Revert) as err:
        world.wallet.send_to_last_resort(world.env("acct:anyone"))
    assert err.value.category == "timeout"
