import itertools
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from chaossim.kernel import Simulator
from chaossim.network import Envelope
from chaossim.protocols import (
    COUNTER,
    LEADER,
    PROTOCOLS,
    Batch,
    BlockRecord,
    Mode,
    NodeState,
    Proposal,
    ProtocolError,
    ProtocolParams,
    State,
    TallyStatus,
    Vote,
    VoteTally,
    commit_block,
    init_network,
    quorum_size,
    tally,
    validate_block,
)
from chaossim.protocols.bft import RoundStart
from chaossim.metrics import MetricsCollector
from conftest import events_of, simulate


# --- quorum and tally ----------------------------------------------------------

@pytest.mark.parametrize("n,q", [(4, 3), (5, 4), (6, 5), (7, 5), (1, 1), (3, 3)])
def test_quorum_size(n, q):
    assert quorum_size(n) == q


def test_tally_reached_with_five_of_six():
    t = VoteTally(1, 1, 6)
    for v in range(4):
        assert tally(t, Vote(1, 1, 9, v))[0] is TallyStatus.PENDING
    assert tally(t, Vote(1, 1, 9, 4)) == (TallyStatus.REACHED, 9)


def test_tally_split_fails():
    t = VoteTally(1, 1, 6)
    statuses = [tally(t, Vote(1, 1, 9 if v < 3 else 10, v))[0] for v in range(6)]
    assert statuses[-1] is TallyStatus.FAILED


def test_tally_four_nodes():
    t = VoteTally(1, 1, 4)
    for v in range(3):
        status = tally(t, Vote(1, 1, 7, v))
    assert status == (TallyStatus.REACHED, 7)


def test_duplicate_votes_ignored():
    t = VoteTally(1, 1, 4)
    tally(t, Vote(1, 1, 7, 0))
    tally(t, Vote(1, 1, 7, 0))
    assert t.duplicates == 1 and len(t.votes_for) == 1


def test_vote_for_wrong_tally_rejected():
    with pytest.raises(ProtocolError):
        tally(VoteTally(1, 1, 4), Vote(2, 1, 7, 0))


@given(st.integers(1, 9), st.data())
def test_tally_matches_brute_force(n, data):
    votes = data.draw(st.lists(st.sampled_from([1, 2, None]), min_size=n, max_size=n))
    t = VoteTally(1, 1, n)
    for voter, bid in enumerate(votes):
        status, bid_out = tally(t, Vote(1, 1, bid, voter))
    counts = Counter(b for b in votes if b is not None)
    winner = next((b for b in (1, 2) if counts[b] >= quorum_size(n)), None)
    assert (status is TallyStatus.REACHED) == (winner is not None)
    if winner is not None:
        assert bid_out == winner


# --- block validation and chain records -------------------------------------

def test_validate_block_rules():
    node = NodeState(0)
    assert validate_block(node, Proposal(1, 1, 5, 0, 0.0, 70))
    assert not validate_block(node, Proposal(1, 1, 5, 0, 0.0, 70), corrupted=True)
    node.chain.append(BlockRecord(1, 5, 0, 70))
    assert not validate_block(node, Proposal(2, 1, 6, 0, 0.0, 70))  # stale
    assert not validate_block(node, Proposal(2, 3, 6, 0, 0.0, 70))  # gap


def test_commit_block_records_latencies():
    mc = MetricsCollector([0, 1], commit_threshold=1)
    first = mc.tx_batch_created([0.5] * 70)
    mc.block_created(1, 1, 0, 1.0, first, 70)
    node = NodeState(0)
    commit_block(node, BlockRecord(1, 1, 0, 70, 3.0), mc)
    assert node.chain_length == 1
    assert mc.latencies().size == 70
    with pytest.raises(ProtocolError):
        commit_block(node, BlockRecord(1, 1, 0, 70, 4.0), mc)


# --- construction and leader choice ---------------------------------------------

def test_init_pbft_six():
    eng = init_network("pbft", 6)
    assert set(eng.net.nodes) == {0, 1, 2, 3, 4, 5, LEADER, COUNTER}
    assert all(node.consensus_state is State.START for node in eng.nodes)


def test_init_followers():
    for p in ("raft", "clique"):
        eng = init_network(p, 6)
        assert all(node.consensus_state is State.FOLLOWER for node in eng.nodes)


def test_init_unknown_protocol():
    with pytest.raises(ValueError):
        init_network("hotstuff", 4)


def test_single_raft_node_leads_at_once():
    eng = init_network("raft", 1)
    eng.start()
    assert eng.nodes[0].consensus_state is State.LEADER
    assert eng.elect_leader() == 0


def test_clique_round_robin():
    eng = init_network("clique", 6)
    assert sorted(eng.elect_leader(r) for r in range(1, 7)) == list(range(6))


def test_tendermint_degenerate_stake():
    eng = init_network("tendermint", 4, ProtocolParams(stakes=(1, 0, 0, 0)))
    assert {eng.elect_leader(r) for r in range(1, 200)} == {0}


def test_tendermint_equal_stakes_uniform():
    eng = init_network("tendermint", 4)
    rounds = 100_000
    freq = Counter(eng.elect_leader(r) for r in range(1, rounds + 1))
    for v in range(4):
        assert abs(freq[v] / rounds - 0.25) < 0.01


def test_pbft_view_change_rotates_proposer():
    eng = init_network("pbft", 4)
    seen = []
    for view in range(8):
        eng.view = view
        seen.append(eng.elect_leader(view))
    assert seen == [0, 1, 2, 3, 0, 1, 2, 3]


# --- proposals ----------------------------------------------------------------------

def _engine_with_batch(protocol, n=6):
    eng = init_network(protocol, n)
    first = eng.collector.tx_batch_created([0.0] * 70)
    return eng, Batch(first, 70, 0.0)


@pytest.mark.parametrize("protocol", ["pbft", "clique"])
def test_benign_proposals_identical(protocol):
    eng, batch = _engine_with_batch(protocol)
    eng.round = 1
    envs = eng.propose_block(eng.elect_leader(1), batch)
    assert len(envs) == 6
    assert len({e.payload for e in envs}) == 1
    assert envs[0].payload.tx_count == 70


@pytest.mark.parametrize("protocol", ["pbft", "tendermint", "clique"])
def test_malicious_proposer_splits_three_three(protocol):
    eng, batch = _engine_with_batch(protocol)
    eng.round = 1
    leader = eng.elect_leader(1)
    eng.nodes[leader].behavior_mode = Mode.MALICIOUS
    envs = eng.propose_block(leader, batch)
    ids = Counter(e.payload.block_id for e in envs)
    assert sorted(ids.values()) == [3, 3]
    assert [e.destination for e in envs if not e.corrupted] == [0, 1, 2]


def test_non_leader_cannot_propose():
    eng, batch = _engine_with_batch("pbft")
    with pytest.raises(ProtocolError):
        eng.propose_block(3, batch)


# --- peer transitions ------------------------------------------------------------------

def _waiting_peer(protocol="tendermint"):
    eng = init_network(protocol, 6)
    notice = RoundStart(1, 1, 0, 0, 70)
    eng.on_message(2, Envelope(LEADER, 2, notice, 0.0))
    assert eng.nodes[2].consensus_state is State.WAITING
    return eng


@pytest.mark.parametrize("protocol", ["pbft", "tendermint"])
def test_waiting_peer_accepts_proposal_and_votes(protocol):
    eng = _waiting_peer(protocol)
    (before, after), emitted = eng.on_message(2, Envelope(0, 2, Proposal(1, 1, 11, 0, 0.0, 70), 0.0))
    assert (before, after) == (State.WAITING, State.PROPOSE)
    [vote_env] = emitted
    assert vote_env.destination == COUNTER
    assert vote_env.payload == Vote(1, 1, 11, 2)


def test_waiting_peer_times_out_to_start():
    eng = _waiting_peer()
    eng.sim.run_until(eng.params.phase_timeout + 0.01)
    assert eng.nodes[2].consensus_state is State.START


def test_corrupted_proposal_signals_invalid():
    eng = _waiting_peer()
    (_, after), emitted = eng.on_message(2, Envelope(0, 2, Proposal(1, 1, -11, 0, 0.0, 70), 0.0, True))
    assert after is State.START
    assert [e.payload.block_id for e in emitted] == [None]


def test_paused_node_rejects_messages():
    eng = init_network("pbft", 4)
    eng.net.pause_node(1)
    with pytest.raises(ProtocolError):
        eng.on_message(1, Envelope(LEADER, 1, RoundStart(1, 1, 0, 0, 70), 0.0))


# --- whole-protocol properties -----------------------------------------------------

@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_fault_free_safety(protocol):
    run = simulate(protocol, max_time=400, seed=1)
    rep = run.report
    assert rep.success_rate == 1.0
    assert rep.chain_sigma == 0.0
    maps = [node.chain_map() for node in run.engine.nodes]
    assert all(m == maps[0] for m in maps)


@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_chain_numbers_are_contiguous(protocol):
    run = simulate(protocol, max_time=300, seed=2, byzantine_rate=1 / 3, added_delay=1.0)
    for node in run.engine.nodes:
        assert [r.number for r in node.chain] == list(range(1, node.chain_length + 1))


@given(st.integers(0, 10_000), st.sampled_from([0.0, 1 / 3, 0.5]), st.sampled_from([0.0, 1.0]),
       st.sampled_from(["none", "paper-sequence"]))
def test_raft_logs_never_conflict(seed, rate, delay, schedule):
    run = simulate("raft", max_time=200, seed=seed, byzantine_rate=rate, added_delay=delay,
                   chaos_schedule=schedule, chaos_phase_duration=10.0)
    maps = run.engine.committed_maps()
    for a, b in itertools.combinations(maps, 2):
        for k in a.keys() & b.keys():
            assert a[k] == b[k]


def test_clique_followers_never_talk_to_each_other():
    pairs = set()

    def spy(run):
        net = run.network
        original = net._prepare

        def recording(ch, payload, corrupted):
            pairs.add((ch.source, ch.destination, type(payload).__name__))
            return original(ch, payload, corrupted)
        net._prepare = recording

    run = simulate("clique", max_time=300, seed=3, byzantine_rate=1 / 3, added_delay=1.0, patch=spy)
    assert run.report.blocks_created > 0
    # validator-to-validator traffic is the in-turn signer's proposal and nothing else
    between_peers = {kind for src, dst, kind in pairs if isinstance(src, int) and isinstance(dst, int)}
    assert between_peers == {"Proposal"}
    assert {kind for src, dst, kind in pairs if dst == LEADER} <= {"Report", "SyncRequest"}


def test_tendermint_votes_in_more_phases_than_pbft():
    def phases(protocol):
        evs = events_of(simulate(protocol, max_time=200, seed=4))
        per_round = {}
        for e in evs:
            if e.kind == "vote":
                per_round.setdefault(e.round, set()).add(e.phase)
        return max(len(p) for p in per_round.values()), min(len(p) for p in per_round.values())

    assert phases("pbft") == (1, 1)
    assert phases("tendermint") == (2, 2)


def test_clique_commits_are_local():
    run = simulate("clique", max_time=200, seed=5)
    evs = events_of(run)
    assert not any(e.kind == "vote" for e in evs)


def test_half_byzantine_blocks_bft_quorum():
    # three contradicting voters out of six leave at most three matching votes < 5
    t = VoteTally(1, 1, 6)
    from chaossim.chaos import mutate_vote
    for v in range(6):
        vote = Vote(1, 1, 21, v)
        status, _ = tally(t, mutate_vote(vote) if v >= 3 else vote)
    assert status is TallyStatus.FAILED
