import json
import math

import pytest

from fogservo import wire
from fogservo.config import scenario_from_dict
from fogservo.heartbeat import ChannelType
from fogservo.netsim import Link, LinkProfile, VirtualClock
from fogservo.nodes import (RcuNode, Topology, World, route_height, route_velocity,
                            run_topology)

from conftest import pickup_cfg

TELEOP_PICKUP_TRACE = [
    {"type": "drive", "t0": 0.5, "t1": 5.35, "forward": 0.3},
    {"type": "height", "t0": 6.5, "t1": 7.9, "rate": -0.05},
    {"type": "grasp", "t": 9.5},
]


def test_route_velocity_splits_signed_axes():
    assert route_velocity(0.5, 0.0) == [(ChannelType.FORWARD, 0.5)]
    assert route_velocity(-0.3, 0.0) == [(ChannelType.BACKWARD, 0.3)]
    assert route_velocity(0.2, 0.4) == [(ChannelType.FORWARD, 0.2),
                                        (ChannelType.TURN_LEFT, 0.4)]
    assert route_velocity(0.0, -0.4) == [(ChannelType.TURN_RIGHT, 0.4)]
    assert route_velocity(0.0, 0.0) == []
    assert route_height(0.05) == [(ChannelType.HEIGHT_UP, 0.05)]
    assert route_height(-0.05) == [(ChannelType.HEIGHT_DOWN, 0.05)]
    assert route_height(0.0) == []


def test_rcu_forwards_bytes_unchanged_after_fixed_delay():
    clock = VirtualClock()
    got = []
    rcu = RcuNode(clock, delay_ms=2.0)
    out = Link("out", LinkProfile(), clock, lambda d, t: got.append((d, t)))
    rcu.out["down"] = out
    data = wire.encode(wire.Velocity(0.4, 0.1), seq=3, send_ts=77)
    clock.run_until(1000)
    rcu.forward(data, "down")
    clock.run_until(1_000_000)
    assert got == [(data, 3000)]  # 1 ms + 2 ms processing
    assert rcu.forwarded["down"] == 1


def test_rcu_counts_malformed_and_drops_them():
    clock = VirtualClock()
    got = []
    rcu = RcuNode(clock, delay_ms=2.0)
    rcu.out["up"] = Link("out", LinkProfile(), clock, lambda d, t: got.append(d))
    rcu.forward(b"garbage", "up")
    clock.run_until(1_000_000)
    assert got == []
    assert rcu.errors["up"] == 1
    assert rcu.forwarded["up"] == 0


def test_end_to_end_latency_is_links_plus_processing():
    # cloud->rcu 40 ms, rcu->edge 10 ms, rcu processing 2 ms
    cfg = pickup_cfg(1, links={
        "cloud_rcu": {"latency_ms": 40.0, "jitter_ms": 0.0, "drop": 0.0,
                      "reorder": 0.0, "seed": 1},
        "rcu_edge": {"latency_ms": 10.0, "jitter_ms": 0.0, "drop": 0.0,
                     "reorder": 0.0, "seed": 2}})
    cfg["duration_s"] = 3.0
    topo = Topology(scenario_from_dict(cfg))
    topo.run()
    sends = {r["seq"]: r["t_send"] for r in topo.link_logs["cloud_rcu"].records}
    arrivals = [r for r in topo.link_logs["rcu_edge"].records if "t_deliver" in r]
    assert arrivals
    for r in arrivals:
        # rcu_edge seq counts its own sends; match by equal payload cadence:
        # downlink is strictly store-and-forward so order is preserved
        pass
    first_send = topo.link_logs["cloud_rcu"].records[0]["t_send"]
    first_arrival = arrivals[0]["t_deliver"]
    assert first_arrival - first_send == (40 + 2 + 10) * 1000


def test_observation_rate_at_edge_ideal_link():
    cfg = pickup_cfg(2)
    cfg["duration_s"] = 10.0
    cfg["stop_on_done"] = False
    topo = Topology(scenario_from_dict(cfg))
    topo.run()
    obs_packets = [r for r in topo.link_logs["cloud_rcu"].records]
    # 5 Hz recognition for ~10 s: the edge must be receiving observations
    assert topo.edge.latest_obs is not None
    assert topo.cloud.obs_sent >= 45


def test_observation_stream_carries_invisible_records():
    cfg = pickup_cfg(3, target={"pos": [2.0, 0.0, 0.60], "normal": [1.0, 0.0],
                                "side_world": 0.10, "carried": False,
                                "waypoints": [], "speed": 0.2})  # facing away
    cfg["duration_s"] = 5.0
    cfg["stop_on_done"] = False
    topo = Topology(scenario_from_dict(cfg))
    topo.run()
    assert topo.edge.latest_obs is not None
    assert topo.edge.latest_obs.visible is False


def test_severed_link_leaves_balance_running_and_robot_stops():
    cfg = pickup_cfg(4, mode="teleop-scripted",
                     teleop={"trace": [{"type": "drive", "t0": 0.5, "t1": 30.0,
                                        "forward": 0.3}]},
                     events=[{"type": "sever_link", "t": 5.0}])
    cfg["duration_s"] = 12.0
    cfg["stop_on_done"] = False
    topo = Topology(scenario_from_dict(cfg))
    topo.run()
    robot = topo.world.robot
    assert not robot.fallen
    assert abs(robot.com_velocity) < 1e-3  # heartbeat decayed the command away
    fwd = topo.edge.bank.channels[ChannelType.FORWARD]
    assert not fwd.is_active(topo.clock.now_us)
    # the stop happened within the protocol bound of the last delivery
    stops = [e for e in topo.edge.stop_events if e["channel"] == "forward"]
    assert stops
    last = stops[-1]
    assert last["t_zero"] - last["last_arrival"] <= (250 + 100) * 1000 + 5000


def test_scripted_teleop_completes_a_pickup():
    cfg = pickup_cfg(5, mode="teleop-scripted", teleop={"trace": TELEOP_PICKUP_TRACE})
    cfg["duration_s"] = 16.0
    res = run_topology(scenario_from_dict(cfg))
    assert res.success
    assert not res.fell


def test_zero_length_scenario_produces_valid_empty_logs():
    cfg = pickup_cfg(6)
    cfg["duration_s"] = 0.0
    res = run_topology(scenario_from_dict(cfg))
    assert res.telemetry.records == []
    assert res.phase_log.records == []
    assert all(lg.records == [] for lg in res.link_logs.values())
    assert res.success is False


def test_auto_pickup_attaches_box_and_keeps_balance():
    res = run_topology(scenario_from_dict(pickup_cfg(7)))
    assert res.success
    assert not res.fell
    assert res.phase == "done"
    last = res.telemetry.records[-1]
    assert last["grasping"] is True
    assert last["fallen"] is False


def test_displaced_target_during_grasp_reports_failure_and_stays_upright():
    cfg = pickup_cfg(8, events=[{"type": "displace_target",
                                 "trigger": {"phase": "grasp", "delay_s": 0.5},
                                 "dx": 0.0, "dy": 0.8}])
    res = run_topology(scenario_from_dict(cfg))
    assert res.phase == "done"
    assert res.success is False
    assert not res.fell


def test_abort_when_tag_never_visible():
    cfg = pickup_cfg(9, target={"pos": [2.0, 0.0, 0.60], "normal": [1.0, 0.0],
                                "side_world": 0.10, "carried": False,
                                "waypoints": [], "speed": 0.2})
    cfg["duration_s"] = 30.0
    res = run_topology(scenario_from_dict(cfg))
    assert res.phase == "aborted"
    assert res.success is False
    assert not res.fell


def test_run_determinism_byte_identical_logs():
    cfg = pickup_cfg(10, links={"cloud_rcu": {"latency_ms": 120.0, "jitter_ms": 40.0,
                                              "drop": 0.25, "reorder": 0.1, "seed": 9}})
    a = run_topology(scenario_from_dict(cfg))
    b = run_topology(scenario_from_dict(cfg))
    assert a.telemetry.as_bytes() == b.telemetry.as_bytes()
    assert a.phase_log.as_bytes() == b.phase_log.as_bytes()
    for name in a.link_logs:
        assert a.link_logs[name].as_bytes() == b.link_logs[name].as_bytes()


def test_repetitions_differ_but_are_individually_deterministic():
    cfg = pickup_cfg(11, links={"cloud_rcu": {"latency_ms": 100.0, "jitter_ms": 30.0,
                                              "drop": 0.2, "reorder": 0.0, "seed": 3}})
    r0 = run_topology(scenario_from_dict(cfg), rep=0)
    r1 = run_topology(scenario_from_dict(cfg), rep=1)
    r0b = run_topology(scenario_from_dict(cfg), rep=0)
    assert r0.link_logs["cloud_rcu"].as_bytes() != r1.link_logs["cloud_rcu"].as_bytes()
    assert r0.link_logs["cloud_rcu"].as_bytes() == r0b.link_logs["cloud_rcu"].as_bytes()


def test_world_target_history_lookup():
    scn = scenario_from_dict(pickup_cfg(12))
    w = World(scn, rep=0)
    w.record_target(1000)
    w.target.pos = (9.0, 9.0, 0.6)
    w.record_target(2000)
    assert w.target_at(1500).pos[0] == 2.0
    assert w.target_at(2500).pos[0] == 9.0


def test_ui_frame_schema_and_command_injection():
    cfg = pickup_cfg(13)
    cfg["duration_s"] = 2.0
    cfg["stop_on_done"] = False
    topo = Topology(scenario_from_dict(cfg))
    topo.run()
    frame = topo.ui_frame()
    assert set(frame) >= {"t", "robot", "obs", "phase", "heartbeat", "link_stats",
                          "target_size_px", "image", "mode_auto"}
    json.dumps(frame)  # must be serializable
    sent_before = topo.links["cloud_rcu"].stats.sent
    topo.inject_command({"type": "velocity", "forward": 0.2, "yaw": 0.0})
    assert topo.links["cloud_rcu"].stats.sent == sent_before + 1


def test_stop_latency_bound_column_under_latency_sweep():
    # teleop release: observed send-referenced stop time tracks
    # window + fall + link latency to within one edge tick
    for latency in (0.0, 100.0, 200.0, 400.0):
        cfg = pickup_cfg(14, mode="teleop-scripted",
                         teleop={"trace": [{"type": "drive", "t0": 0.5, "t1": 3.0,
                                            "forward": 0.3}]},
                         links={"cloud_rcu": {"latency_ms": latency, "jitter_ms": 0.0,
                                              "drop": 0.0, "reorder": 0.0, "seed": 5}})
        cfg["duration_s"] = 6.0
        cfg["stop_on_done"] = False
        res = run_topology(scenario_from_dict(cfg))
        expected = 250.0 + 100.0 + latency + (1.0 + 2.0)  # window+fall+link+rcu
        assert res.stop_latency_send_ms == pytest.approx(expected, abs=5.0)


def test_observation_rates_ideal_and_lossy():
    # ideal link: ~5 obs/s reach the edge at roughly the link latency
    cfg = pickup_cfg(20, links={"cloud_rcu": {"latency_ms": 50.0, "jitter_ms": 0.0,
                                              "drop": 0.0, "reorder": 0.0, "seed": 2}})
    cfg["duration_s"] = 10.0
    cfg["stop_on_done"] = False
    topo = Topology(scenario_from_dict(cfg))
    topo.run()
    assert 45 <= topo.edge.obs_received <= 51
    mean_lat = sum(topo.edge.obs_latency_us) / len(topo.edge.obs_latency_us)
    assert mean_lat == pytest.approx((50 + 2 + 1) * 1000, abs=500)
    # 30% drop: expectation ~3.5 obs/s
    cfg = pickup_cfg(21, links={"cloud_rcu": {"latency_ms": 50.0, "jitter_ms": 0.0,
                                              "drop": 0.3, "reorder": 0.0, "seed": 3}})
    cfg["duration_s"] = 10.0
    cfg["stop_on_done"] = False
    topo = Topology(scenario_from_dict(cfg))
    topo.run()
    assert 24 <= topo.edge.obs_received <= 45


def test_servo_error_norm_descends_once_converging():
    # ideal link, static target, no pixel noise: ||e|| must be
    # non-increasing between consecutive control updates once below 0.5
    cfg = pickup_cfg(22, camera={"noise_sigma_px": 0.0})
    res = run_topology(scenario_from_dict(cfg))
    assert res.success
    norms = [r["e_norm"] for r in res.phase_log.records
             if r["phase"] in ("navigate", "height") and r["e_norm"] >= 0]
    below = [e for e in norms[next(i for i, e in enumerate(norms) if e < 0.5):]]
    assert below, "servo never entered the convergence region"
    # 2e-3 allowance: the balance loop's lean wobble modulates the camera
    # between updates (measured ~8e-4); descent must hold beyond that scale
    for a, b in zip(below, below[1:]):
        assert b <= a + 2e-3, f"error norm rose {a} -> {b}"
    assert below[-1] < 0.05


def test_calibration_free_against_mount_and_focal_perturbation():
    # 2 deg extra camera pitch and +5% focal length, target_size_px left at
    # its stale calibrated value: the pickup must still succeed
    cfg = pickup_cfg(23, bearing_deg=10,
                     camera={"mount_pitch_deg": 12.0, "focal_px": 525.0,
                             "noise_sigma_px": 0.5})
    res = run_topology(scenario_from_dict(cfg))
    assert res.success
    assert not res.fell


def test_final_standoff_position_independent_across_bearings():
    standoffs = []
    for i, b in enumerate((-20, -10, 0, 10, 20)):
        cfg = pickup_cfg(24 + i, bearing_deg=b, camera={"noise_sigma_px": 0.0})
        topo = Topology(scenario_from_dict(cfg))
        res = topo.run()
        assert res.success
        ax, ay = topo.edge.grasp.anchor
        # the box is attached to the robot after success, so measure from
        # the committed anchor to the original table position
        standoffs.append(math.hypot(2.0 - ax, 0.0 - ay))
    spread = (max(standoffs) - min(standoffs)) / (sum(standoffs) / len(standoffs))
    assert spread < 0.05, f"standoffs {standoffs}"


def test_teleop_then_auto_handoff():
    cfg = pickup_cfg(29, mode="teleop-then-auto",
                     teleop={"trace": [{"type": "drive", "t0": 0.5, "t1": 2.5,
                                        "forward": 0.3},
                                       {"type": "mode", "t": 3.5, "auto": True}]})
    res = run_topology(scenario_from_dict(cfg))
    assert res.success
    assert res.phase == "done"


def test_success_rate_non_increasing_in_drop_probability():
    rates = []
    for drop in (0.0, 0.25, 0.5):
        wins = 0
        for rep in range(2):
            cfg = pickup_cfg(900, duration_s=120.0,
                             links={"cloud_rcu": {"latency_ms": 100.0,
                                                  "jitter_ms": 30.0, "drop": drop,
                                                  "reorder": 0.0, "seed": 900}})
            wins += run_topology(scenario_from_dict(cfg), rep=rep).success
        rates.append(wins / 2)
    assert all(a >= b for a, b in zip(rates, rates[1:])), rates
