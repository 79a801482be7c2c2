import pytest
from hypothesis import given
from hypothesis import strategies as st

from chaossim.chaos import FaultSpec, Phase
from chaossim.config import ConfigError, ExperimentConfig, parse_config, render_config
from chaossim.protocols import PROTOCOLS


def test_empty_document_gives_defaults():
    cfg = parse_config("")
    assert cfg == ExperimentConfig()
    assert (cfg.n_validators, cfg.tx_per_block, cfg.lambda_, cfg.max_time) == (6, 70, 2.0, 500000.0)


def test_comments_and_values():
    cfg = parse_config("# baseline\nprotocol = raft   # leader based\nlambda = 4\nseed=3\n")
    assert (cfg.protocol, cfg.lambda_, cfg.seed) == ("raft", 4.0, 3)
    assert cfg.drain == 12.5


def test_out_of_range_byzantine_rate():
    with pytest.raises(ConfigError, match="line 2: byzantine_rate"):
        parse_config("protocol = pbft\nbyzantine_rate = 1.5\n")


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="valdiators") as exc:
        parse_config("valdiators = 6\n")
    assert str(exc.value).startswith("line 1:")


@pytest.mark.parametrize("text,where", [
    ("n_validators = six\n", "line 1"),
    ("seed = 1\nseed = 2\n", "line 2"),
    ("just words\n", "line 1"),
    ("    delay = 1\n", "line 1"),
    ("protocol = paxos\n", "line 1"),
    ("max_time = 600000\n", "line 1"),
    ("chaos_schedule = custom\n", "line 1"),
    ("chaos_schedule = none\nphase:\n    delay = 1\n    duration = 5\n", "line 1"),
    ("phase:\n    delay = 1\n", "line 1"),
    ("phase:\n    loss = 2\n    duration = 5\n", "line 2"),
    ("phase:\n    storm = 1\n    duration = 5\n", "line 2"),
    ("chaos_schedule = bogus\n", "line 1"),
    ("input_tx_rate = -5\n", "line 1"),
])
def test_errors_carry_line_numbers(text, where):
    with pytest.raises(ConfigError, match=where):
        parse_config(text)


def test_phase_blocks():
    cfg = parse_config(
        "chaos_schedule = custom\n"
        "phase:\n    delay = 1.0\n    loss = 0.15\n    duration = 500\n"
        "phase:\n    corruption = half\n    duration = 200\n    recovery = 50\n    label = bad half\n"
        "phase:\n    pause = 0,2\n    duration = 10\n"
    )
    first, second, third = cfg.chaos_schedule
    assert first.faults == (FaultSpec("delay", magnitude=1.0), FaultSpec("loss", probability=0.15))
    assert second.recovery == 50 and second.label == "bad half"
    assert third.faults[0].scope == (0, 2)


def test_render_round_trip_custom():
    text = "chaos_schedule = custom\nphase:\n    delay = 2.5\n    pause = half\n    duration = 30\n"
    cfg = parse_config(text)
    assert parse_config(render_config(cfg)) == cfg


_scopes = st.one_of(st.sampled_from(["all", "one", "half"]),
                    st.lists(st.integers(0, 9), min_size=1, max_size=4, unique=True).map(tuple))
_faults = st.one_of(
    st.floats(0, 10, allow_nan=False).map(lambda m: FaultSpec("delay", magnitude=m)),
    st.floats(0, 1, allow_nan=False).map(lambda p: FaultSpec("loss", probability=p)),
    _scopes.map(lambda s: FaultSpec("corruption", scope=s)),
    _scopes.map(lambda s: FaultSpec("pause", scope=s)),
)
_phases = st.builds(
    Phase,
    faults=st.lists(_faults, max_size=3).map(tuple),
    duration=st.floats(0.5, 1000, allow_nan=False),
    label=st.sampled_from(["", "storm", "delay+loss"]),
    recovery=st.one_of(st.none(), st.floats(0, 100, allow_nan=False)),
)
_configs = st.builds(
    ExperimentConfig,
    protocol=st.sampled_from(PROTOCOLS),
    n_validators=st.integers(1, 12),
    tx_per_block=st.integers(1, 200),
    input_tx_rate=st.floats(0, 20000, allow_nan=False),
    max_time=st.floats(0.5, 500000, allow_nan=False),
    lambda_=st.floats(0.01, 50, allow_nan=False),
    byzantine_rate=st.floats(0, 1, allow_nan=False),
    added_delay=st.floats(0, 5, allow_nan=False),
    chaos_schedule=st.one_of(st.sampled_from(["none", "paper-sequence"]),
                             st.lists(_phases, min_size=1, max_size=4).map(tuple)),
    chaos_phase_duration=st.floats(0.5, 1000, allow_nan=False),
    chaos_recovery=st.one_of(st.none(), st.floats(0, 100, allow_nan=False)),
    seed=st.integers(0, 2**40),
    seed_count=st.integers(1, 50),
    phase_timeout=st.one_of(st.none(), st.floats(0.1, 20, allow_nan=False)),
    drain_time=st.one_of(st.none(), st.floats(0, 100, allow_nan=False)),
)


@given(_configs)
def test_parse_render_round_trip(cfg):
    assert parse_config(render_config(cfg)) == cfg


def test_invalid_direct_construction():
    with pytest.raises(ConfigError):
        ExperimentConfig(n_validators=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(chaos_schedule=["not", "phases"])
