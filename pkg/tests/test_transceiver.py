import numpy as np
import pytest

from ofdmim.mapping import InvalidParameterError, derive_params, index_to_sap
from ofdmim.modem import qam
from ofdmim.transceiver import (
    BatchEncoder,
    FrameConfig,
    decode_subblock,
    deinterleave,
    encode_subblock,
    frame_config,
    interleave,
)

P424 = derive_params(4, 2, 4)


def test_encode_examples():
    sap, x = encode_subblock("00" + "0011", P424)
    assert sap.indices == (1, 2)
    np.testing.assert_array_equal(x, [1 + 1j, -1 - 1j, 0, 0])
    sap, x = encode_subblock("11" + "0000", P424)
    assert sap.indices == (2, 3)
    np.testing.assert_array_equal(x, [0, 1 + 1j, 1 + 1j, 0])


def test_decode_examples():
    assert decode_subblock(index_to_sap(0, P424), [1 + 1j, -1 - 1j], P424) == "000011"
    assert decode_subblock(index_to_sap(3, P424), [1 + 1j, 1 + 1j], P424) == "110000"


def test_decode_rejects_illegal():
    with pytest.raises(InvalidParameterError):
        decode_subblock(index_to_sap(4, P424), [1 + 1j, 1 + 1j], P424)


def test_encode_wrong_length():
    with pytest.raises(ValueError):
        encode_subblock("0000", P424)


@pytest.mark.parametrize("n, k, M", [(4, 2, 4), (8, 4, 4), (10, 5, 4), (6, 3, 16), (5, 2, 2)])
def test_round_trip_random(n, k, M, rng):
    params = derive_params(n, k, M)
    spec = qam(M)
    for _ in range(1000 if (n, k, M) == (8, 4, 4) else 200):
        bits = "".join(map(str, rng.integers(0, 2, params.p)))
        sap, x = encode_subblock(bits, params, spec)
        assert np.count_nonzero(x) == k
        assert set(np.flatnonzero(x) + 1) == set(sap.indices)
        assert decode_subblock(sap, x[np.array(sap.indices) - 1], params, spec) == bits


def test_interleave_positions():
    cfg = frame_config(8, 4, 2)
    assert cfg.G == 2
    sub = np.array([[1, 1, 1, 1], [2, 2, 2, 2]])
    frame = interleave(sub, cfg)
    assert list(np.flatnonzero(frame == 1) + 1) == [1, 3, 5, 7]
    assert list(np.flatnonzero(frame == 2) + 1) == [2, 4, 6, 8]


def test_interleave_inverse(rng):
    cfg = frame_config(128, 8, 4)
    S = rng.normal(size=(3, cfg.G, cfg.n)) + 1j * rng.normal(size=(3, cfg.G, cfg.n))
    frame = interleave(S, cfg)
    np.testing.assert_array_equal(deinterleave(frame, cfg), S)
    for g in range(cfg.G):
        for i in range(cfg.n):
            assert frame[0, g + i * cfg.G] == S[0, g, i]


def test_frame_config_checks():
    with pytest.raises(InvalidParameterError):
        FrameConfig(N=10, G=3, params=derive_params(4, 2, 4))
    with pytest.raises(InvalidParameterError):
        interleave(np.zeros((3, 4)), frame_config(8, 4, 2))
    cfg = frame_config(100, 10, 5)
    assert cfg.bits_per_frame == 17 * 10


def test_batch_encoder_matches_scalar(rng):
    params = derive_params(10, 5, 4)
    enc = BatchEncoder(params, qam(4))
    bits = rng.integers(0, 2, size=(50, 3, params.p))
    ranks, x = enc.encode(bits)
    for t in range(50):
        for g in range(3):
            sap, xs = encode_subblock(bits[t, g], params)
            assert sap.rank == ranks[t, g]
            np.testing.assert_array_equal(xs, x[t, g])
