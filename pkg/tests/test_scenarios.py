import threading

import pytest
from hypothesis import given, strategies as st

from hevx.rsu import ReceiverError, receiver_session
from hevx.scenarios import (
    ScenarioConfig,
    ScenarioError,
    ScenarioKind,
    receiver_job,
    run_trials,
    sender_session,
    simulated_inputs,
)
from hevx.transport import ChannelConfig, ChannelMode, FixedPacing, open_pair

FAST = FixedPacing(0.0005)
SIM = ChannelConfig(mode=ChannelMode.SIMULATED, seed=1)
LOOPBACK = ChannelConfig()


def toy(scenario="count", preset="toy-bfv", n=10, **kw) -> ScenarioConfig:
    return ScenarioConfig(ScenarioKind(scenario), preset, n, allow_insecure=True, **kw)


@pytest.mark.parametrize("preset", ["toy-bfv", "toy-bgv", "toy-ckks"])
@pytest.mark.parametrize("channel", [SIM, LOOPBACK], ids=["sim", "loopback"])
def test_toy_count(preset, channel):
    scenario = "count" if preset != "toy-ckks" else "avg"
    results = run_trials(toy(scenario, preset, n=12, trials=2, seed=3), channel, FAST)
    assert len(results) == 2
    for r in results:
        assert r.verified, r.error
        assert r.receiver["add_count"] == 11
        assert r.receiver["mul_count"] == (1 if scenario == "avg" else 0)
        m = r.metrics
        assert m.comm_latency_ms + m.hom_op_ms == pytest.approx(m.rtt_ms)
        assert min(m.encrypt_ms, m.hom_op_ms, m.decrypt_ms, m.comm_latency_ms, m.frag_ms, m.reasm_ms) >= 0


def test_count_average_field():
    (r,) = run_trials(toy(n=8), SIM, FAST)
    assert r.decrypted_value == 8
    assert r.average == 1.0


def test_bernoulli_presence():
    cfg = toy(n=15, presence_probability=0.5, seed=42, trials=3)
    results = run_trials(cfg, SIM, FAST)
    truths = [r.ground_truth for r in results]
    assert all(r.verified for r in results)
    assert truths == [int(sum(simulated_inputs(cfg, i).values)) for i in range(3)]
    assert any(t < 15 for t in truths)


def test_bfv_two_hundred_vehicles_exact():
    cfg = ScenarioConfig(ScenarioKind.COUNT, "bfv-add", 200, seed=5)
    (r,) = run_trials(cfg, SIM, FixedPacing(0))
    assert r.verified and r.decrypted_value == 200
    assert r.receiver["add_count"] == 199
    assert r.metrics.fragments_total == 95


def test_ckks_average_workload_shape():
    cfg = ScenarioConfig(ScenarioKind.AVERAGE_SPEED, "ckks-mul", 50, seed=2)
    (r,) = run_trials(cfg, SIM, FixedPacing(0))
    assert r.verified, r.error
    assert (r.receiver["add_count"], r.receiver["mul_count"]) == (49, 1)
    assert abs(r.decrypted_value - r.ground_truth) < 0.05
    assert r.metrics.fragments_total == 566


def test_same_seed_same_values():
    cfg = toy("avg", "toy-ckks", n=6, trials=3, seed=99)
    a = [r.decrypted_value for r in run_trials(cfg, SIM, FAST)]
    b = [r.decrypted_value for r in run_trials(cfg, LOOPBACK, FAST)]
    assert a == b


@given(seed=st.integers(0, 2**64 - 1), trial=st.integers(0, 1000), n=st.integers(2, 300))
def test_speeds_stay_in_range(seed, trial, n):
    cfg = ScenarioConfig(ScenarioKind.AVERAGE_SPEED, "ckks-mul", n, seed=seed)
    vals = simulated_inputs(cfg, trial).values
    assert len(vals) == n
    assert all(40.0 <= v <= 60.0 for v in vals)


@given(seed=st.integers(0, 2**64 - 1), trial=st.integers(0, 1000))
def test_inputs_are_deterministic(seed, trial):
    cfg = toy(n=16, presence_probability=0.3, seed=seed)
    assert simulated_inputs(cfg, trial) == simulated_inputs(cfg, trial)
    assert simulated_inputs(cfg, trial).values[0] == 1.0


def test_failures_are_recorded_and_trials_continue():
    channel = ChannelConfig(mode=ChannelMode.SIMULATED, recv_timeout=0.3, loss_probability=1.0)
    results = run_trials(toy(trials=3), channel, FAST)
    assert len(results) == 3
    assert all(not r.verified and r.metrics is None and "Timeout" in r.error for r in results)


def test_receiver_rejects_scheme_mismatch():
    sender_ep, receiver_ep = open_pair(SIM)
    errors = []
    job = receiver_job(toy(preset="toy-bgv"), 0)

    def rsu():
        try:
            receiver_session(receiver_ep, job, FAST, listen_timeout=5)
        except Exception as exc:
            errors.append(exc)
            sender_ep.close()

    t = threading.Thread(target=rsu, daemon=True)
    t.start()
    with pytest.raises(Exception):
        sender_session(toy(preset="toy-bfv"), sender_ep, FAST, compute_timeout=5)
    t.join(5)
    assert isinstance(errors[0], ReceiverError)
    assert "BGV" in str(errors[0])


def test_config_invariants():
    with pytest.raises(ScenarioError):
        toy(n=1)
    with pytest.raises(ScenarioError):
        ScenarioConfig(ScenarioKind.AVERAGE_SPEED, "bfv-add", 50)
    with pytest.raises(ScenarioError):
        ScenarioConfig(ScenarioKind.AVERAGE_SPEED, "ckks-add", 50)
    with pytest.raises(ScenarioError):
        toy(presence_probability=1.5)
    with pytest.raises(ScenarioError):
        toy(n=17)  # not representable mod t=17
    assert toy().scenario is ScenarioKind.COUNT
