import pytest
from hypothesis import given
from hypothesis import strategies as st

from iotecs.runtime.wire import (
    HEADER_SIZE,
    MalformedPacket,
    PacketHeader,
    StreamDecoder,
    check_datagram,
    encode,
    peek_send_ts,
    peek_seq,
    peek_source,
)

# magic, version, node, edge, device, step, seq, send_ts, payload_len
FIELD_WIDTHS = [2, 1, 2, 2, 2, 4, 4, 8, 2]

headers = st.builds(
    PacketHeader,
    node_id=st.integers(0, 65535),
    edge_id=st.integers(0, 65535),
    device_id=st.integers(0, 65535),
    step_index=st.integers(0, 2**32 - 1),
    seq=st.integers(0, 2**32 - 1),
    send_ts_ns=st.integers(0, 2**64 - 1),
    payload_len=st.just(0),
)


def test_header_size_is_sum_of_fields():
    assert HEADER_SIZE == sum(FIELD_WIDTHS) == 27


@given(headers, st.binary(max_size=300))
def test_round_trip_and_peeks(header, payload):
    header = PacketHeader(**{**header.__dict__, "payload_len": len(payload)})
    data = encode(header, payload)
    assert len(data) == HEADER_SIZE + len(payload)
    assert check_datagram(data) == header
    assert data[HEADER_SIZE:] == payload
    assert peek_seq(data) == header.seq
    assert peek_source(data) == (header.node_id, header.edge_id)
    assert peek_send_ts(data) == header.send_ts_ns


def test_malformed_datagrams():
    good = encode(PacketHeader(1, 2, 3, 4, 5, 6, 3), b"abc")
    with pytest.raises(MalformedPacket):
        check_datagram(good[:10])
    with pytest.raises(MalformedPacket):
        check_datagram(b"XX" + good[2:])
    with pytest.raises(MalformedPacket):
        check_datagram(good[:2] + b"\x09" + good[3:])
    with pytest.raises(MalformedPacket):
        check_datagram(good + b"extra")
    with pytest.raises(ValueError):
        encode(PacketHeader(1, 2, 3, 4, 5, 6, 4), b"abc")


@given(st.lists(st.binary(max_size=50), min_size=1, max_size=20), st.data())
def test_stream_decoder_reassembles_any_chunking(payloads, data):
    packets = [encode(PacketHeader(0, 0, i, 0, i, 0, len(p)), p) for i, p in enumerate(payloads)]
    stream = b"".join(packets)
    cuts = sorted(data.draw(st.lists(st.integers(0, len(stream)), max_size=10)))
    decoder = StreamDecoder()
    out = []
    prev = 0
    for cut in cuts + [len(stream)]:
        out += decoder.feed(stream[prev:cut])
        prev = cut
    assert out == packets
    assert decoder.pending == 0
