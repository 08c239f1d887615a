from __future__ import annotations

import math
import random
import struct

import pytest

from telesafe.codec import (IDENTITY_QUAT, MAGIC, PACKET_SIZE, ArmPayload, ConsolePacket, PacketError, decode_packet,
                            encode_packet, quaternion_to_fixed, valid_packet)
from telesafe.trajectory import (TrajectoryError, format_trajectory, generate_trajectory, home_positions,
                                 load_trajectory, packet_stream, parse_trajectory)


def random_packet(rng: random.Random) -> ConsolePacket:
    arms = []
    for _ in range(2):
        w, x, y, z = (rng.gauss(0, 1) for _ in range(4))
        n = math.sqrt(w * w + x * x + y * y + z * z)
        quat = quaternion_to_fixed(w / n, x / n, y / n, z / n)
        pos = tuple(rng.randint(-2**31, 2**31 - 1) for _ in range(3))
        arms.append(ArmPayload(pos, quat, rng.randint(-2**31, 2**31 - 1)))
    return ConsolePacket(rng.randint(0, 2**32 - 1), rng.random() < 0.5, arms[0], arms[1])


def zero_packet(**kw) -> ConsolePacket:
    arm = ArmPayload((0, 0, 0), IDENTITY_QUAT, 0)
    return ConsolePacket(kw.get("sequence", 0), kw.get("pedal", False), arm, arm)


def test_zero_packet_header():
    data = encode_packet(zero_packet())
    assert len(data) == PACKET_SIZE == 74
    magic, version, pedal, mode, reserved, seq = struct.unpack_from("<HBBBBI", data)
    assert (magic, version, pedal, mode, reserved, seq) == (MAGIC, 1, 0, 0, 0, 0)
    assert magic == 0x4954


def test_identity_quaternion_words():
    assert quaternion_to_fixed(1.0, 0.0, 0.0, 0.0) == (1_000_000_000, 0, 0, 0)
    words = struct.unpack_from("<4i", encode_packet(zero_packet()), 10 + 12)
    assert words == (1_000_000_000, 0, 0, 0)


def test_roundtrip_10000_random_packets():
    rng = random.Random(7)
    failures = 0
    for _ in range(10_000):
        pkt = random_packet(rng)
        assert valid_packet(pkt)
        if decode_packet(encode_packet(pkt)) != pkt:
            failures += 1
    assert failures == 0


def test_decode_errors_are_distinct():
    good = bytearray(encode_packet(zero_packet(pedal=True, sequence=5)))
    with pytest.raises(PacketError) as e:
        decode_packet(bytes(good[:10]))
    assert e.value.code == "BAD_LENGTH"
    bad = bytearray(good)
    bad[0] = 0
    with pytest.raises(PacketError) as e:
        decode_packet(bytes(bad))
    assert e.value.code == "BAD_MAGIC"
    bad = bytearray(good)
    bad[3] = 7
    with pytest.raises(PacketError) as e:
        decode_packet(bytes(bad))
    assert e.value.code == "BAD_PEDAL_BYTE"
    bad = bytearray(good)
    struct.pack_into("<i", bad, 22, 500_000_000)
    with pytest.raises(PacketError) as e:
        decode_packet(bytes(bad))
    assert e.value.code == "BAD_QUATERNION_NORM"
    assert decode_packet(bytes(good)) == zero_packet(pedal=True, sequence=5)


def test_quaternion_norm_bounds_inclusive():
    arm = ArmPayload((0, 0, 0), (999_000_000, 0, 0, 0), 0)
    pkt = ConsolePacket(1, False, arm, arm)
    assert decode_packet(encode_packet(pkt)) == pkt
    arm = ArmPayload((0, 0, 0), (998_000_000, 0, 0, 0), 0)
    assert not valid_packet(ConsolePacket(1, False, arm, arm))


# -- trajectories --------------------------------------------------------------------------------

def _line(t, pedal=1):
    return f"{t} 0 0 0 1000000000 0 0 0 0 0 0 1000000000 0 0 0 0 0 {pedal}\n"


def test_empty_file_gives_no_samples(tmp_path):
    p = tmp_path / "empty.txt"
    p.write_text("")
    assert load_trajectory(p) == []


def test_two_line_file(tmp_path):
    p = tmp_path / "two.txt"
    p.write_text("# header\n" + _line(0) + _line(1))
    samples = load_trajectory(p)
    assert [s.t for s in samples] == [0, 1]
    assert samples[0].pedal is True


def test_wrong_column_count_reports_line():
    with pytest.raises(TrajectoryError) as e:
        parse_trajectory([_line(0), "1 2 3 4 5\n"])
    assert e.value.code == "PARSE_ERROR" and e.value.line == 2


def test_non_monotonic_time():
    with pytest.raises(TrajectoryError) as e:
        parse_trajectory([_line(1), _line(0)])
    assert e.value.code == "NON_MONOTONIC_TIME"


def test_format_parse_roundtrip():
    traj = generate_trajectory("circle", 200, 0.02)
    assert parse_trajectory(format_trajectory(traj).splitlines()) == traj


def test_line_zero_amplitude_stays_home():
    homes = [tuple(round(c * 1e6) for c in h) for h in home_positions()]
    for s in generate_trajectory("line", 1000, 0.0):
        assert s.left.position == homes[0] and s.right.position == homes[1]


def test_circle_closes_after_whole_revolution():
    traj = generate_trajectory("circle", 20_000, 0.03)
    assert traj[0].left == traj[-1].left and traj[0].right == traj[-1].right
    assert all(s.pedal for s in traj)


def test_amplitude_out_of_workspace():
    with pytest.raises(TrajectoryError) as e:
        generate_trajectory("circle", 1000, 1.0)
    assert e.value.code == "AMPLITUDE_OUT_OF_WORKSPACE"


def test_packet_stream_deltas_sum_to_path():
    traj = generate_trajectory("circle", 500, 0.03)
    stream = packet_stream(traj)
    seqs = [p.sequence for _, p in stream if p is not None]
    assert seqs == sorted(set(seqs))
    acc = list(traj[0].left.position)
    for _, p in stream[1:]:
        acc = [a + d for a, d in zip(acc, p.left.position)]
    assert tuple(acc) == traj[-1].left.position
