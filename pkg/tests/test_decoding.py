import numpy as np
import pytest

from picdtc.chain import ChainInterleavers, CouplingConfig, encode_chain, split_stream
from picdtc.decoding import (
    ERASED,
    ChainDecoder,
    DecodeError,
    bec_transmit,
    ff_fb_decode,
    set_bcjr,
    turbo_decode_block,
)
from picdtc.trellis import parse_octal, rsc_encode

from oracles import exhaustive_extrinsic, impulse_responses


def _chain(rsc2, K, Kc, m, L, rng):
    cfg = CouplingConfig(K=K, Kc=Kc, m=m, L=L)
    il = ChainInterleavers.random(cfg, rng)
    info = rng.integers(0, 2, cfg.payload_bits).astype(np.uint8)
    return cfg, il, info, encode_chain(info, cfg, il, rsc2)


def test_bec_transmit_extremes(rng):
    bits = rng.integers(0, 2, 1000)
    assert np.array_equal(bec_transmit(bits, 0.0, rng), bits)
    assert (bec_transmit(bits, 1.0, rng) == ERASED).all()
    with pytest.raises(ValueError):
        bec_transmit(bits, 1.5, rng)


def test_bec_transmit_rate(rng):
    out = bec_transmit(np.zeros(10**6, np.uint8), 0.5, rng)
    assert abs((out == ERASED).mean() - 0.5) <= 0.002
    assert set(np.unique(out)) <= {0, ERASED}


def test_set_bcjr_no_uncertainty(rsc2, rng):
    u, u2 = rng.integers(0, 2, 50), rng.integers(0, 2, 50)
    v, _ = rsc_encode(rsc2, u, u2)
    e1, e2 = set_bcjr(rsc2, u, u2, v)
    assert np.array_equal(e1, u) and np.array_equal(e2, u2)


def test_set_bcjr_no_information(rsc2):
    er = np.full(30, ERASED, np.uint8)
    e1, e2 = set_bcjr(rsc2, er, er, er)
    assert (e1 == ERASED).all() and (e2 == ERASED).all()


def test_set_bcjr_contradiction(rsc1):
    # known input 1 from state 0 gives parity 1; claim parity 0
    with pytest.raises(DecodeError):
        set_bcjr(rsc1, np.array([1], np.uint8), None, np.array([0], np.uint8))


def test_set_bcjr_parity_only_k8(rsc2, rng):
    K = 8
    H = impulse_responses(K, (1, 0, 1), (1, 1), (1, 1, 1))
    u, u2 = rng.integers(0, 2, K), rng.integers(0, 2, K)
    v, _ = rsc_encode(rsc2, u, u2)
    er = np.full(K, ERASED, np.uint8)
    e1, e2 = set_bcjr(rsc2, er, er, v)
    o1, o2 = exhaustive_extrinsic(H, er, er, v)
    assert np.array_equal(e1, o1) and np.array_equal(e2, o2)


@pytest.mark.parametrize("gens", [("5", "3", "7"), ("5", None, "7"), ("15", "13", "13")])
def test_set_bcjr_matches_exhaustive_oracle(gens, rng):
    from picdtc.trellis import build_trellis

    tr = build_trellis(*gens)
    coeffs = [None if g is None else parse_octal(g).coefficients for g in gens]
    trials = 1000 if gens == ("5", "3", "7") else 200
    H_cache = {}
    for _ in range(trials):
        K = int(rng.integers(1, 13))
        if K not in H_cache:
            H_cache[K] = impulse_responses(K, coeffs[0], coeffs[1], coeffs[2])
        H = H_cache[K]
        u = rng.integers(0, 2, K).astype(np.uint8)
        u2 = rng.integers(0, 2, K).astype(np.uint8) if tr.num_inputs == 2 else np.zeros(K, np.uint8)
        v, _ = rsc_encode(tr, u, u2) if tr.num_inputs == 2 else rsc_encode(tr, u)
        q1, q2, qp = rng.uniform(0, 0.7, 3)
        p1 = bec_transmit(u, q1, rng)
        p2 = bec_transmit(u2, q2, rng) if tr.num_inputs == 2 else u2
        pv = bec_transmit(v, qp, rng)
        e1, e2 = set_bcjr(tr, p1, p2 if tr.num_inputs == 2 else None, pv)
        o1, o2 = exhaustive_extrinsic(H, p1, p2, pv)
        assert np.array_equal(e1, o1), (K, p1, p2, pv)
        if tr.num_inputs == 2:
            assert np.array_equal(e2, o2)
        else:
            assert not e2.any()


def test_turbo_block_eps0(rsc2, rng):
    K = 64
    u, u2 = rng.integers(0, 2, K), rng.integers(0, 2, K)
    p1, p2 = rng.permutation(K), rng.permutation(K)
    pu, _ = rsc_encode(rsc2, u, u2)
    pl, _ = rsc_encode(rsc2, u[p1], u2[p2])
    ku, ku2, iters = turbo_decode_block(rsc2, u, u2, pu, pl, p1, p2)
    assert iters == 1
    assert np.array_equal(ku, u) and np.array_equal(ku2, u2)


def test_turbo_block_tc1_below_threshold(rsc1, rsc2):
    # uncoupled TC1 BP threshold is ~0.6429; run a K=1e4 block at 0.60
    rng = np.random.default_rng(7)
    K = 10_000
    u = rng.integers(0, 2, K)
    zeros = np.zeros(K, np.uint8)
    p1, p2 = rng.permutation(K), rng.permutation(K)
    pu, _ = rsc_encode(rsc2, u, zeros)
    pl, _ = rsc_encode(rsc2, u[p1], zeros)
    ku, _, _ = turbo_decode_block(
        rsc2, bec_transmit(u, 0.60, rng), zeros, bec_transmit(pu, 0.60, rng),
        bec_transmit(pl, 0.60, rng), p1, p2, max_inner_iters=200,
    )
    assert (ku == ERASED).mean() < 1e-3
    known = ku != ERASED
    assert np.array_equal(ku[known], u[known])


def test_turbo_block_known_second_input_is_tc1(rsc1, rsc2):
    """Known u' reduces the duo-binary block to TC1 with parity offset by u'."""
    rng = np.random.default_rng(3)
    K = 2000
    for eps in (0.5, 0.62, 0.66):
        u, u2 = rng.integers(0, 2, K), rng.integers(0, 2, K)
        p1, p2 = rng.permutation(K), rng.permutation(K)
        pu, _ = rsc_encode(rsc2, u, u2)
        pl, _ = rsc_encode(rsc2, u[p1], u2[p2])
        ou = bec_transmit(u, eps, rng)
        opu, opl = bec_transmit(pu, eps, rng), bec_transmit(pl, eps, rng)
        ku, ku2, _ = turbo_decode_block(rsc2, ou, u2, opu, opl, p1, p2, max_inner_iters=500)
        assert np.array_equal(ku2, u2)
        # strip the u' contribution from the parity and decode TC1
        off_u, _ = rsc_encode(rsc2, np.zeros(K, int), u2)
        off_l, _ = rsc_encode(rsc2, np.zeros(K, int), u2[p2])
        su = np.where(opu == ERASED, ERASED, opu ^ off_u).astype(np.uint8)
        sl = np.where(opl == ERASED, ERASED, opl ^ off_l).astype(np.uint8)
        tu, _, _ = turbo_decode_block(rsc1, ou, np.zeros(K, np.uint8), su, sl, p1, p2,
                                      max_inner_iters=500)
        assert np.array_equal(ku, tu)


def test_natural_order_chain_decodes(rsc2, rng):
    cfg = CouplingConfig(K=150, Kc=75, m=1, L=4)
    il = ChainInterleavers.random(cfg, rng, scramble_upper=False)
    info = rng.integers(0, 2, cfg.payload_bits).astype(np.uint8)
    cw = encode_chain(info, cfg, il, rsc2)
    assert np.array_equal(ff_fb_decode(rsc2, cfg, il, cw.to_stream()).payload, info)
    res = ff_fb_decode(rsc2, cfg, il, bec_transmit(cw.to_stream(), 0.6, rng))
    known = res.payload != ERASED
    assert np.array_equal(res.payload[known], info[known])


def test_chain_eps0(rsc2, rng):
    cfg, il, info, cw = _chain(rsc2, 200, 100, 1, 5, rng)
    res = ff_fb_decode(rsc2, cfg, il, cw.to_stream())
    assert res.sweeps == 1
    assert np.array_equal(res.payload, info) and res.residual_erasures == 0


def test_chain_eps1(rsc2, rng):
    cfg, il, info, cw = _chain(rsc2, 120, 60, 2, 4, rng)
    res = ff_fb_decode(rsc2, cfg, il, bec_transmit(cw.to_stream(), 1.0, rng))
    assert res.residual_erasures == cfg.payload_bits
    assert (res.payload == ERASED).all()


def test_malformed_stream(rsc2, rng):
    cfg, il, info, cw = _chain(rsc2, 40, 20, 1, 3, rng)
    with pytest.raises(ValueError):
        ff_fb_decode(rsc2, cfg, il, cw.to_stream()[:-1])


def test_never_wrong_randomized(rsc2):
    rng = np.random.default_rng(11)
    for trial in range(1000):
        K = int(rng.integers(4, 60))
        m = int(rng.integers(1, 4))
        Kc = m * int(rng.integers(0, K // m + 1))
        L = int(rng.integers(1, 7))
        cfg, il, info, cw = _chain(rsc2, K, Kc, m, L, rng)
        eps = float(rng.uniform(0.2, 0.9))
        res = ff_fb_decode(rsc2, cfg, il, bec_transmit(cw.to_stream(), eps, rng))
        known = res.payload != ERASED
        assert np.array_equal(res.payload[known], info[known]), trial
        assert all(b <= a for a, b in zip(res.history, res.history[1:]))


def test_schedule_invariance(rsc2):
    rng = np.random.default_rng(5)
    for _ in range(40):
        K = int(rng.integers(20, 300))
        cfg, il, info, cw = _chain(rsc2, K, K // 2, 1, int(rng.integers(2, 6)), rng)
        rx = bec_transmit(cw.to_stream(), float(rng.uniform(0.5, 0.75)), rng)
        u_obs, pu, pl = split_stream(rx, cfg)
        dec = ChainDecoder(rsc2, cfg, il, max_inner_iters=10_000, max_sweeps=10_000)
        a = dec.decode(u_obs, pu, pl, schedule="ffb")
        b = dec.decode(u_obs, pu, pl, schedule="flooding")
        assert np.array_equal(a.u, b.u)


@pytest.mark.slow
def test_chain_lambda1_below_threshold(rsc2):
    rng = np.random.default_rng(2)
    cfg, il, info, cw = _chain(rsc2, 10_000, 10_000, 1, 20, rng)
    res = ff_fb_decode(rsc2, cfg, il, bec_transmit(cw.to_stream(), 0.64, rng))
    assert res.ber < 1e-4
