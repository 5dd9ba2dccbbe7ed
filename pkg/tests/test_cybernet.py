import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridsurge.cybernet import (
    Command,
    CyberNetwork,
    CyberTopology,
    FixedDelay,
    Flood,
    Frame,
    Function,
    LinkParams,
    MitmRule,
    Node,
    Window,
    decode_frame,
)
from gridsurge.errors import QueueOverflow, UnknownLink

M2R = "mgc->residential"


def net(**link):
    topo = CyberTopology(
        Node("mgc", 1),
        (Node("residential", 10), Node("pv", 30)),
        default_link=LinkParams(**link),
    )
    return CyberNetwork(topo)


def shed(seq=0):
    return Frame.command(Function.DIRECT_OPERATE, seq, 10, 1, 0, Command.SHED)


def test_idle_link_latency():
    n = net()
    d = n.send("mgc", "residential", shed(), 3.0)
    assert d.t_deliver == pytest.approx(3.005, abs=1e-12)
    assert n.pop_due(3.004) == []
    [(delivery, frame, verdict)] = n.pop_due(3.005)
    assert frame == shed() and verdict == "ok" and delivery is d


def test_fixed_delay_dos():
    n = net()
    n.inject_dos(M2R, Window(10.0, 30.0), FixedDelay(2.0))
    assert n.send("mgc", "residential", shed(0), 10.0).t_deliver == pytest.approx(12.005, abs=1e-12)
    # outside the window, and on the reverse link, no delay
    assert n.send("mgc", "residential", shed(1), 31.0).t_deliver == pytest.approx(31.005, abs=1e-12)
    reply = Frame.command(Function.RESPONSE, 0, 1, 10, 0, Command.SHED)
    assert n.send("residential", "mgc", reply, 10.0).t_deliver == pytest.approx(10.005, abs=1e-12)


def test_zero_delay_dos_is_null():
    a, b = net(), net()
    b.inject_dos(M2R, Window(0.0, 100.0), FixedDelay(0.0))
    for k in range(20):
        da = a.send("mgc", "residential", shed(k), k * 0.003)
        db = b.send("mgc", "residential", shed(k), k * 0.003)
        assert da == db


def test_capacity_overflow_drops_65th_frame():
    n = net(bandwidth_fps=100.0, capacity=64)
    for k in range(64):
        n.send("mgc", "residential", shed(k % 256), 1.0)
    with pytest.raises(QueueOverflow):
        n.send("mgc", "residential", shed(64), 1.0)
    assert n.trace[-1].verdict == "dropped"
    assert n.log[-1].kind == "frame_dropped"
    assert n.in_flight == 64


def hand_queue(arrivals, bandwidth, capacity, latency):
    """Independent FIFO oracle: arrivals are (t, tag) in time order.

    A frame is admitted when fewer than ``capacity`` admitted frames have a
    departure time at or after its arrival; it departs one service time after
    its predecessor, or on arrival when the server is idle.
    """
    departs, out, last = [], {}, None
    for t, tag in arrivals:
        waiting = [d for d in departs if d >= t - 1e-9]
        if len(waiting) >= capacity:
            out[tag] = None
            continue
        d = t if last is None else max(t, last + 1.0 / bandwidth)
        last = d
        departs.append(d)
        out[tag] = d + latency
    return out


def test_flood_matches_hand_queue():
    # bandwidth 10 fps, capacity 4, flood 100 fps on [0, 1]
    n = net(bandwidth_fps=10.0, capacity=4, latency_s=0.005)
    n.inject_dos(M2R, Window(0.0, 1.0), Flood(100.0))
    flood = [(round(k * 0.01, 9), f"flood{k}") for k in range(101)]
    legit = [(0.05, "a"), (0.105, "b"), (2.0, "c")]
    oracle = hand_queue(sorted(flood + legit, key=lambda x: (x[0], x[1][0] != "f")), 10.0, 4, 0.005)

    with pytest.raises(QueueOverflow):
        n.send("mgc", "residential", shed(0), 0.05)
    assert oracle["a"] is None
    b = n.send("mgc", "residential", shed(1), 0.105)
    assert b.t_deliver == pytest.approx(oracle["b"], abs=1e-12)
    assert b.t_deliver == pytest.approx(0.505, abs=1e-12)
    c = n.send("mgc", "residential", shed(2), 2.0)
    assert c.t_deliver == pytest.approx(oracle["c"], abs=1e-12)
    link = n.link(M2R)
    assert link.flood_sent == 101
    assert link.flood_dropped == sum(v is None for k, v in oracle.items() if k.startswith("flood"))


def test_flood_delays_legitimate_frame_until_drained():
    n = net(bandwidth_fps=100.0, capacity=64)
    n.inject_dos(M2R, Window(10.0, 15.0), Flood(1000.0))
    with pytest.raises(QueueOverflow):
        n.send("mgc", "residential", shed(), 10.5)
    late = n.send("mgc", "residential", shed(), 15.5)
    assert late.t_deliver > 15.5 + 0.005


def test_mitm_rewrite_is_crc_valid():
    n = net()
    n.mitm_rewrite("mgc->pv", MitmRule(Function.DIRECT_OPERATE, 0, Window(1.0, 3.0), value=2000.0))
    sp = Frame.command(Function.DIRECT_OPERATE, 5, 30, 1, 0, Command.SET_P, 800.0)
    d = n.send("mgc", "pv", sp, 2.0)
    got = decode_frame(d.data)
    assert got.point_record() == (0, Command.SET_P, 2000.0)
    assert (got.seq, got.dst, got.src) == (5, 30, 1)
    assert n.trace[-1].verdict == "rewritten"
    assert n.log[-1].kind == "attack_mitm"
    # other points and times pass untouched
    other = Frame.command(Function.DIRECT_OPERATE, 6, 30, 1, 1, Command.SET_Q, 0.0)
    assert decode_frame(n.send("mgc", "pv", other, 2.0).data) == other
    assert decode_frame(n.send("mgc", "pv", sp, 4.0).data) == sp


def test_identity_rewrite_is_bit_identical():
    plain, attacked = net(), net()
    attacked.mitm_rewrite("mgc->pv", MitmRule(Function.DIRECT_OPERATE, 0, Window(0.0, 9.0)))
    sp = Frame.command(Function.DIRECT_OPERATE, 5, 30, 1, 0, Command.SET_P, 800.0)
    assert plain.send("mgc", "pv", sp, 2.0).data == attacked.send("mgc", "pv", sp, 2.0).data


@settings(max_examples=100, deadline=None)
@given(gaps=st.lists(st.floats(0.0, 0.05), min_size=1, max_size=40), d=st.floats(0.0, 3.0))
def test_fifo_and_delay_lower_bound(gaps, d):
    n = net(bandwidth_fps=100.0, capacity=1000)
    n.inject_dos(M2R, Window(0.0, 0.5), FixedDelay(d))
    t, sent = 0.0, []
    for k, g in enumerate(gaps):
        t += g
        sent.append((k, t, n.send("mgc", "residential", shed(k % 256), t)))
    delivered = [dl for dl, _, _ in n.pop_due(1e9)]
    assert [dl.t_send for dl in delivered] == [s[1] for s in sent]
    times = [dl.t_deliver for dl in delivered]
    assert times == sorted(times)
    for _, ts, dl in sent:
        bound = ts + 0.005 + (d if ts <= 0.5 else 0.0)
        assert dl.t_deliver >= bound - 1e-9


def test_unknown_link():
    n = net()
    with pytest.raises(UnknownLink):
        n.send("mgc", "nowhere", shed(), 0.0)
    with pytest.raises(UnknownLink):
        n.inject_dos("pv->residential", Window(0, 1), FixedDelay(1.0))
    with pytest.raises(UnknownLink):
        n.mitm_rewrite("x->y", MitmRule(Function.READ, 0, Window(0, 1)))


def test_sequence_numbers_wrap():
    n = net()
    seqs = [n.next_seq(1) for _ in range(258)]
    assert seqs[:3] == [0, 1, 2] and seqs[255] == 255 and seqs[256:] == [0, 1]
    assert n.next_seq(10) == 0


def test_window_and_params_validation():
    with pytest.raises(ValueError):
        Window(5.0, 1.0)
    with pytest.raises(ValueError):
        FixedDelay(-1.0)
    with pytest.raises(ValueError):
        LinkParams(bandwidth_fps=0.0)
    with pytest.raises(ValueError):
        CyberTopology(Node("m", 1), (Node("a", 1),))


def test_corrupted_delivery_is_rejected():
    n = net()
    d = n.send("mgc", "residential", shed(), 0.0)
    bad = bytearray(d.data)
    bad[5] ^= 0xFF
    n._queue[0] = (n._queue[0][0], n._queue[0][1], type(d)(d.t_deliver, d.t_send, d.link, d.src, d.dst, bytes(bad)))
    [(_, frame, verdict)] = n.pop_due(1.0)
    assert frame is None and verdict == "ChecksumError"
    assert n.log[-1].kind == "frame_rejected"
