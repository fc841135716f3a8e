import numpy as np
import pytest

from crowdgnn.autodiff import Var
from crowdgnn.graphs import GraphConfig
from crowdgnn.model import (
    ModelConfig,
    ModelParameters,
    forward_raw,
    st_gcn_forward,
    txp_forward,
)
from crowdgnn.train import window_nll
from conftest import random_window


def small_params(**kw):
    return ModelParameters(ModelConfig(**kw), seed=0)


def zero_params(cfg: ModelConfig) -> ModelParameters:
    p = ModelParameters(cfg, seed=0)
    for name, v in p.items():
        v.data = np.zeros_like(v.data)
    return p


# ---- independent triple-loop oracle for the ST-GCN forward ------------------


def stgcn_oracle(v, normalized, p: ModelParameters):
    cfg = p.cfg
    t_obs, n, c_in = v.shape
    c = cfg.gaussian_channels
    ws = p["stgcn.w_spatial"].data
    bs = p["stgcn.b_spatial"].data
    slope = float(p["stgcn.prelu"].data)
    pre = np.zeros((t_obs, n, c))
    for t in range(t_obs):
        for i in range(n):
            for co in range(c):
                acc = 0.0
                for j in range(n):
                    inner = bs[co] if cfg.stgcn_bias else 0.0
                    for ci in range(c_in):
                        inner += v[t, j, ci] * ws[ci, co]
                    acc += normalized[t, i, j] * inner
                pre[t, i, co] = acc
    act = np.where(pre > 0, pre, slope * pre)
    wt = p["stgcn.w_temporal"].data
    bt = p["stgcn.b_temporal"].data
    k = wt.shape[0]
    pad = k // 2
    out = np.zeros_like(act)
    for t in range(t_obs):
        for i in range(n):
            for co in range(c):
                acc = bt[co]
                for dk in range(k):
                    src = t + dk - pad
                    if 0 <= src < t_obs:
                        for ci in range(c):
                            acc += act[src, i, ci] * wt[dk, ci, co]
                out[t, i, co] = acc
    if cfg.stgcn_residual:
        wr = p["stgcn.w_residual"].data
        br = p["stgcn.b_residual"].data
        for t in range(t_obs):
            for i in range(n):
                for co in range(c):
                    acc = br[co]
                    for ci in range(c_in):
                        acc += v[t, i, ci] * wr[ci, co]
                    out[t, i, co] += acc
    return out


class TestStGcn:
    def test_identity_passthrough_single_node(self):
        cfg = ModelConfig(
            in_features=5, gaussian_channels=5, stgcn_residual=False, stgcn_bias=False
        )
        p = zero_params(cfg)
        p["stgcn.w_spatial"].data = np.eye(5)
        p["stgcn.w_temporal"].data[1] = np.eye(5)  # center tap only
        p["stgcn.prelu"].data = np.array(1.0)
        v = np.random.default_rng(0).normal(size=(8, 1, 5))
        normalized = np.ones((8, 1, 1))  # self-loop identity normalization
        out = st_gcn_forward(Var(v), normalized, p)
        assert np.allclose(out.data, v, atol=1e-12)

    def test_zero_mixing_annihilates(self, rng):
        cfg = ModelConfig(stgcn_residual=False, stgcn_bias=False)
        p = small_params(stgcn_residual=False, stgcn_bias=False)
        p["stgcn.b_temporal"].data = np.zeros(5)
        v = rng.normal(size=(8, 3, 2))
        out = st_gcn_forward(Var(v), np.zeros((8, 3, 3)), p)
        assert np.allclose(out.data, 0.0)

    def test_matches_triple_loop_oracle(self, rng):
        p = small_params()
        v = rng.normal(size=(8, 3, 2))
        normalized = rng.normal(size=(8, 3, 3))
        got = st_gcn_forward(Var(v), normalized, p).data
        want = stgcn_oracle(v, normalized, p)
        assert np.allclose(got, want, atol=1e-12)

    def test_shape_mismatch_raises(self, rng):
        p = small_params()
        with pytest.raises(ValueError):
            st_gcn_forward(Var(rng.normal(size=(8, 3, 2))), np.zeros((8, 4, 4)), p)

    def test_permutation_equivariance(self, rng):
        p = small_params()
        v = rng.normal(size=(8, 5, 2))
        normalized = rng.normal(size=(8, 5, 5))
        normalized = normalized + normalized.transpose(0, 2, 1)
        perm = rng.permutation(5)
        out = st_gcn_forward(Var(v), normalized, p).data
        out_p = st_gcn_forward(
            Var(v[:, perm]), normalized[:, perm][:, :, perm], p
        ).data
        # equality up to summation-order rounding in the matrix products
        assert np.allclose(out[:, perm], out_p, rtol=1e-13, atol=1e-13)


class TestTxp:
    def test_zero_input_zero_biases(self):
        cfg = ModelConfig()
        p = zero_params(cfg)
        out = txp_forward(Var(np.zeros((8, 3, 5))), p)
        assert out.shape == (12, 3, 5)
        assert np.allclose(out.data, 0.0)

    def test_first_layer_homogeneity(self, rng):
        from crowdgnn.model import _plane_conv

        p = small_params()
        h = rng.normal(size=(8, 3, 5))
        one = _plane_conv(Var(h), p["txp.0.w"], p["txp.0.b"]).data
        two = _plane_conv(Var(2 * h), p["txp.0.w"], p["txp.0.b"]).data
        bias_plane = _plane_conv(Var(0 * h), p["txp.0.w"], p["txp.0.b"]).data
        assert np.allclose(two - bias_plane, 2 * (one - bias_plane), atol=1e-10)

    def test_wrong_frame_count_raises(self, rng):
        p = small_params()
        with pytest.raises(ValueError):
            txp_forward(Var(rng.normal(size=(9, 3, 5))), p)

    def test_residual_flag(self, rng):
        h = rng.normal(size=(8, 3, 5))
        p_res = ModelParameters(ModelConfig(txp_residual=True), seed=1)
        p_plain = ModelParameters(ModelConfig(txp_residual=False), seed=1)
        a = txp_forward(Var(h), p_res).data
        b = txp_forward(Var(h), p_plain).data
        assert not np.allclose(a, b)


class TestSummary:
    def test_counts_from_shape_arithmetic(self):
        cfg = ModelConfig()
        p = ModelParameters(cfg, seed=0)
        c, k = cfg.gaussian_channels, cfg.txp_kernel
        expect = {
            "stgcn.w_spatial": cfg.in_features * c,
            "stgcn.b_spatial": c,
            "stgcn.w_temporal": cfg.stgcn_temporal_kernel * c * c,
            "stgcn.b_temporal": c,
            "stgcn.w_residual": cfg.in_features * c,
            "stgcn.b_residual": c,
            "stgcn.prelu": 1,
            "txp.0.w": cfg.t_pred * cfg.t_obs * k * k,
            "txp.0.b": cfg.t_pred,
            "txp.0.prelu": 1,
            "txp.out.w": cfg.t_pred * cfg.t_pred * k * k,
            "txp.out.b": cfg.t_pred,
        }
        for i in range(1, cfg.txp_layers):
            expect[f"txp.{i}.w"] = cfg.t_pred * cfg.t_pred * k * k
            expect[f"txp.{i}.b"] = cfg.t_pred
            expect[f"txp.{i}.prelu"] = 1
        summary = p.summary()
        assert summary["per_tensor"] == expect
        assert summary["total"] == sum(expect.values())

    def test_reference_total_pinned(self):
        # regression constant for the default configuration
        assert ModelParameters(ModelConfig(), seed=0).summary()["total"] == 7532


class TestBackward:
    def test_sum_of_parameters_grads_all_one(self):
        p = small_params()
        total = None
        for _, v in p.items():
            s = v.sum() if v.data.shape else v * 1.0
            total = s if total is None else total + s
        total.backward()
        for _, v in p.items():
            assert np.allclose(v.grad, 1.0)

    def test_end_to_end_finite_differences(self, rng):
        w = random_window(rng, n_peds=3)
        p = small_params()
        cfg = GraphConfig()
        loss = window_nll(w, cfg, p)
        loss.backward()
        eps = 1e-5
        for name, v in p.items():
            flat = v.data.ravel()
            idxs = rng.choice(flat.size, size=min(6, flat.size), replace=False)
            for i in idxs:
                orig = flat[i]
                flat[i] = orig + eps
                lp = float(window_nll(w, cfg, p).data)
                flat[i] = orig - eps
                lm = float(window_nll(w, cfg, p).data)
                flat[i] = orig
                fd = (lp - lm) / (2 * eps)
                an = v.grad.ravel()[i]
                assert abs(fd - an) <= 1e-4 * max(abs(fd), abs(an), 1e-3), name


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        p = small_params()
        path = tmp_path / "m.ckpt"
        p.save(path, extra_config={"graph_config": GraphConfig().to_dict()})
        back, extra = ModelParameters.load(path)
        assert extra["graph_config"]["kernel"] == "inv"
        assert set(dict(back.items())) == set(dict(p.items()))
        for name, v in p.items():
            assert np.array_equal(back[name].data, v.data)
        assert back.cfg == p.cfg

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValueError):
            ModelParameters.load(path)

    def test_forward_identical_after_roundtrip(self, tmp_path, rng):
        w = random_window(rng)
        p = small_params()
        path = tmp_path / "m.ckpt"
        p.save(path)
        back, _ = ModelParameters.load(path)
        a = forward_raw(w, GraphConfig(), p).data
        b = forward_raw(w, GraphConfig(), back).data
        assert np.array_equal(a, b)
