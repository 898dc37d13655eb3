"""End-to-end properties of the protocol over the simulated transport."""

import numpy as np
import pytest

from eqsim.net import (
    RSP_MULTICAST,
    ConnectionDescription,
    RspConfig,
    RspJoinError,
    SimTransport,
    rsp_join,
    rsp_recv,
    rsp_send,
)

GROUP = ConnectionDescription(RSP_MULTICAST, "239.1.1.1", 4000)


def make_group(member_ids, seed=0, **impairments):
    cfg = RspConfig(members=tuple(member_ids))
    transport = SimTransport(seed=seed, **impairments)
    eps = {i: rsp_join(GROUP, cfg, transport, i) for i in member_ids}
    group = transport.groups[(GROUP.host, GROUP.port)]
    return cfg, transport, eps, group


def payload(size, seed=0):
    return np.random.default_rng(seed).integers(0, 256, size, dtype=np.uint8).tobytes()


def test_lossless_delivery_three_members():
    _, _, eps, _ = make_group([0, 1, 2])
    data = payload(100_000)
    rsp_send(eps[0], data)
    assert rsp_recv(eps[1], 0, len(data)) == data
    assert rsp_recv(eps[2], 0, len(data)) == data


def test_single_member_group_reads_nothing():
    cfg, _, eps, group = make_group([4])
    rsp_send(eps[4], b"hello" * 1000)
    eps[4].flush()
    assert eps[4].member.readers == {}
    assert eps[4].member.write_idle


def test_duplicate_writer_id_join_error():
    cfg, transport, _, _ = make_group([0, 1])
    with pytest.raises(RspJoinError, match="already joined"):
        transport.join(GROUP, cfg, 0)


def test_mismatched_mtu_join_error():
    cfg, transport, _, _ = make_group([0, 1])
    other = RspConfig(mtu=1470 * 2, members=(0, 1))
    with pytest.raises(RspJoinError, match="mtu"):
        transport.join(GROUP, other, 1)


def test_send_zero_bytes_no_datagram():
    _, _, eps, group = make_group([0, 1])
    rsp_send(eps[0], b"")
    assert eps[0].member.stats.data_sent == 0


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_lossy_stream_byte_identical(seed):
    _, _, eps, group = make_group(
        [0, 1, 2], seed=seed, loss=0.02, duplicate=0.005, reorder=0.01
    )
    data = payload(2 << 20, seed)
    rsp_send(eps[0], data)
    assert rsp_recv(eps[1], 0, len(data)) == data
    assert rsp_recv(eps[2], 0, len(data)) == data
    assert group.retransmit_ratio() > 0


def test_heavy_loss_still_correct():
    _, _, eps, _ = make_group([0, 1], seed=5, loss=0.25, duplicate=0.05, reorder=0.1)
    data = payload(200_000, 5)
    rsp_send(eps[0], data)
    assert rsp_recv(eps[1], 0, len(data)) == data


def test_bidirectional_streams():
    _, _, eps, _ = make_group([0, 1, 2], seed=9, loss=0.05)
    blobs = {i: payload(300_000, i) for i in (0, 1, 2)}
    for i, blob in blobs.items():
        rsp_send(eps[i], blob)
    for reader in (0, 1, 2):
        for writer in (0, 1, 2):
            if reader != writer:
                assert rsp_recv(eps[reader], writer, len(blobs[writer])) == blobs[writer]


def test_in_flight_never_exceeds_num_buffers_with_slow_consumer():
    cfg, _, eps, group = make_group([0, 1], seed=11)
    eps[1].set_consume_rate(0, cfg.send_rate_max / 2)
    data = payload(4 << 20, 11)
    rsp_send(eps[0], data)
    got = rsp_recv(eps[1], 0, len(data))
    assert got == data
    assert eps[0].member.max_in_flight <= cfg.num_buffers


def test_deterministic_replay():
    def run():
        _, transport, eps, group = make_group(
            [0, 1, 2], seed=13, loss=0.05, duplicate=0.01, reorder=0.02
        )
        data = payload(500_000, 13)
        rsp_send(eps[0], data)
        rsp_recv(eps[1], 0, len(data))
        rsp_recv(eps[2], 0, len(data))
        return group.trace

    first, second = run(), run()
    assert first == second


def test_ack_cadence_17000_datagrams():
    cfg, _, eps, group = make_group([0, 1, 2])
    data = bytes(cfg.payload_size * 1700)  # 1700 datagrams -> 100 periodic acks
    rsp_send(eps[0], data)
    for i in (1, 2):
        rsp_recv(eps[i], 0, len(data))
    eps[0].flush()
    assert group.members[0].stats.data_sent == 1700
    for i in (1, 2):
        assert group.members[i].stats.acks_periodic == 100


def test_no_duplication_in_stream_with_injected_duplicates():
    _, _, eps, group = make_group([0, 1], seed=17, duplicate=0.3)
    data = payload(500_000, 17)
    rsp_send(eps[0], data)
    assert rsp_recv(eps[1], 0, len(data)) == data
    assert group.members[1].stats.duplicates_dropped > 0
    # nothing beyond the stream ever appears
    assert eps[1].member.readable(0) == 0
