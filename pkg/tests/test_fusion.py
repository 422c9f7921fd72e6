import numpy as np
import pytest

from streameval.errors import InputError
from helpers import rand_bn, rand_conv, random_block
from streameval.fusion import (
    BNSpec,
    Branch,
    BranchBlock,
    ConvSpec,
    block_forward,
    conv2d_direct,
    conv_from_jsonable,
    conv_to_jsonable,
    count_flops,
    count_params,
    fold_bn,
    fuse_block,
    fuse_branches,
    identity_to_3x3,
    load_block,
    normalized_branches,
    pad_1x1_to_3x3,
)


class TestConv2dDirect:
    def test_channel_identity_1x1(self):
        rng = np.random.default_rng(0)
        c = 4
        w = np.zeros((c, c, 1, 1))
        for i in range(c):
            w[i, i, 0, 0] = 1.0
        spec = ConvSpec(w, np.zeros(c))
        x = rng.standard_normal((2, c, 5, 7))
        assert np.array_equal(conv2d_direct(x, spec), x)

    def test_zero_weights_constant_bias(self):
        spec = ConvSpec(np.zeros((3, 2, 3, 3)), np.array([1.0, -2.0, 0.5]))
        x = np.random.default_rng(1).standard_normal((1, 2, 4, 4))
        y = conv2d_direct(x, spec)
        for ch, b in enumerate([1.0, -2.0, 0.5]):
            assert np.all(y[:, ch] == b)

    def test_hand_convolution(self):
        spec = ConvSpec(np.ones((1, 1, 3, 3)), np.zeros(1))
        x = np.arange(1.0, 10.0).reshape(1, 1, 3, 3)
        y = conv2d_direct(x, spec)
        assert y[0, 0, 1, 1] == 45.0  # full 3x3 sum
        assert y[0, 0, 0, 0] == 12.0  # zero-padded corner: 1+2+4+5

    def test_channel_mismatch(self):
        spec = ConvSpec(np.zeros((2, 3, 3, 3)), np.zeros(2))
        with pytest.raises(InputError):
            conv2d_direct(np.zeros((1, 2, 4, 4)), spec)


class TestPad1x1:
    def test_scalar_weight_centered(self):
        spec = ConvSpec(np.full((1, 1, 1, 1), 2.0), np.zeros(1))
        padded = pad_1x1_to_3x3(spec)
        expected = np.zeros((3, 3))
        expected[1, 1] = 2.0
        assert np.array_equal(padded.weights[0, 0], expected)

    def test_zero_weights(self):
        padded = pad_1x1_to_3x3(ConvSpec(np.zeros((2, 2, 1, 1)), np.zeros(2)))
        assert not padded.weights.any()

    def test_equivalent_on_random_inputs(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            cin, cout = int(rng.integers(1, 5)), int(rng.integers(1, 5))
            spec = rand_conv(rng, cout, cin, 1)
            padded = pad_1x1_to_3x3(spec)
            x = rng.standard_normal((1, cin, 6, 6))
            diff = np.abs(conv2d_direct(x, padded) - conv2d_direct(x, spec))
            assert diff.max() <= 1e-6

    def test_rejects_3x3(self):
        with pytest.raises(InputError):
            pad_1x1_to_3x3(ConvSpec(np.zeros((1, 1, 3, 3)), np.zeros(1)))


class TestIdentity:
    def test_single_channel_kernel(self):
        spec = identity_to_3x3(1)
        expected = np.zeros((3, 3))
        expected[1, 1] = 1.0
        assert np.array_equal(spec.weights[0, 0], expected)

    def test_reproduces_input_exactly(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((2, 5, 4, 6))
        assert np.array_equal(conv2d_direct(x, identity_to_3x3(5)), x)

    def test_bad_channel_count(self):
        with pytest.raises(InputError):
            identity_to_3x3(0)


class TestFoldBn:
    def test_identity_normalization(self):
        rng = np.random.default_rng(5)
        conv = rand_conv(rng, 3, 2, 3)
        bn = BNSpec(np.ones(3), np.zeros(3), np.zeros(3), np.ones(3), epsilon=1e-12)
        folded = fold_bn(conv, bn)
        assert np.allclose(folded.weights, conv.weights, atol=1e-12)
        assert np.allclose(folded.bias, conv.bias, atol=1e-12)

    def test_hand_case(self):
        conv = ConvSpec(np.full((1, 1, 1, 1), 4.0), np.array([1.0]))
        bn = BNSpec(np.array([2.0]), np.array([3.0]), np.array([1.0]), np.array([0.0]), epsilon=1.0)
        folded = fold_bn(conv, bn)
        assert folded.weights[0, 0, 0, 0] == 8.0
        assert folded.bias[0] == 3.0

    def test_composition_oracle(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            cout, cin = int(rng.integers(1, 5)), int(rng.integers(1, 5))
            conv = rand_conv(rng, cout, cin, 3)
            bn = rand_bn(rng, cout)
            folded = fold_bn(conv, bn)
            x = rng.standard_normal((1, cin, 5, 5))
            scale = bn.gamma / np.sqrt(bn.var + bn.epsilon)
            expected = (conv2d_direct(x, conv) - bn.mean.reshape(1, -1, 1, 1)) * scale.reshape(
                1, -1, 1, 1
            ) + bn.beta.reshape(1, -1, 1, 1)
            assert np.abs(conv2d_direct(x, folded) - expected).max() <= 1e-6

    def test_channel_mismatch(self):
        conv = ConvSpec(np.zeros((2, 2, 3, 3)), np.zeros(2))
        with pytest.raises(InputError):
            fold_bn(conv, BNSpec(np.ones(3), np.zeros(3), np.zeros(3), np.ones(3)))


class TestFuse:
    def test_single_branch_unchanged(self):
        rng = np.random.default_rng(7)
        conv = rand_conv(rng, 4, 4, 3)
        fused = fuse_branches([conv])
        assert np.array_equal(fused.weights, conv.weights)
        assert np.array_equal(fused.bias, conv.bias)

    def test_three_branch_equivalence(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            c = int(rng.integers(1, 6))
            block = BranchBlock(
                (Branch(rand_conv(rng, c, c, 3)), Branch(rand_conv(rng, c, c, 1))),
                identity=True,
            )
            fused = fuse_block(block)
            x = rng.standard_normal((2, c, 6, 6))
            diff = np.abs(block_forward(block, x) - conv2d_direct(x, fused))
            assert diff.max() <= 1e-6

    def test_mismatched_shapes_rejected(self):
        rng = np.random.default_rng(9)
        with pytest.raises(InputError):
            fuse_branches([rand_conv(rng, 2, 2, 3), rand_conv(rng, 3, 2, 3)])
        with pytest.raises(InputError):
            BranchBlock((Branch(rand_conv(rng, 2, 2, 3)), Branch(rand_conv(rng, 3, 2, 3))))

    def test_fusion_is_linear(self):
        rng = np.random.default_rng(10)
        b1 = [rand_conv(rng, 3, 3, 3), rand_conv(rng, 3, 3, 3)]
        b2 = [rand_conv(rng, 3, 3, 3)]
        left = fuse_branches(b1 + b2)
        right_w = fuse_branches(b1).weights + fuse_branches(b2).weights
        right_b = fuse_branches(b1).bias + fuse_branches(b2).bias
        assert np.array_equal(left.weights, right_w)
        assert np.array_equal(left.bias, right_b)

    def test_random_blocks_property(self):
        rng = np.random.default_rng(11)
        for _ in range(40):
            block = random_block(rng)
            fused = fuse_block(block)
            cin, _ = block.channels
            x = rng.standard_normal((int(rng.integers(1, 5)), cin, 8, 8))
            diff = np.abs(block_forward(block, x) - conv2d_direct(x, fused))
            assert diff.max() <= 1e-6

    def test_fold_bn_idempotent_under_identity_params(self):
        rng = np.random.default_rng(12)
        conv = rand_conv(rng, 3, 2, 3)
        bn = BNSpec(np.ones(3), np.zeros(3), np.zeros(3), np.ones(3) - 1e-12, epsilon=1e-12)
        once = fold_bn(conv, bn)
        twice = fold_bn(once, bn)
        assert np.allclose(once.weights, twice.weights, atol=1e-9)


class TestCounting:
    def test_conv_params(self):
        conv = ConvSpec(np.zeros((64, 64, 3, 3)), np.zeros(64))
        assert count_params(conv) == 36_928

    def test_block_params_and_direction(self):
        block = BranchBlock(
            (
                Branch(ConvSpec(np.zeros((64, 64, 3, 3)), np.zeros(64))),
                Branch(ConvSpec(np.zeros((64, 64, 1, 1)), np.zeros(64))),
            ),
            identity=True,
        )
        assert count_params(block) == 41_088
        fused = fuse_block(block)
        assert count_params(fused) == 36_928
        assert count_params(fused) < count_params(block)

    def test_identity_branch_alone_is_free(self):
        block = BranchBlock((), identity=True, identity_channels=8)
        assert count_params(block) == 0

    def test_bn_adds_two_per_channel(self):
        rng = np.random.default_rng(13)
        conv = rand_conv(rng, 8, 4, 3)
        with_bn = BranchBlock((Branch(conv, rand_bn(rng, 8)),))
        without = BranchBlock((Branch(conv),))
        assert count_params(with_bn) - count_params(without) == 16

    def test_flops(self):
        assert count_flops(ConvSpec(np.zeros((1, 1, 1, 1)), np.zeros(1)), (1, 1)) == 2
        conv3 = ConvSpec(np.zeros((64, 64, 3, 3)), np.zeros(64))
        assert count_flops(conv3, (32, 32)) == 2 * 9 * 64 * 64 * 32 * 32

    def test_fused_flops_below_block(self):
        # holds for every multi-branch block containing a 3x3 branch (the
        # training construction always does); a bare {1x1, identity} block
        # is cheaper than its 3x3 fused form, so those are excluded
        rng = np.random.default_rng(14)
        checked = 0
        while checked < 10:
            block = random_block(rng, cin=4, cout=4)
            n_branches = len(block.branches) + (1 if block.identity else 0)
            if n_branches < 2 or all(b.conv.kernel_size != 3 for b in block.branches):
                continue
            fused = fuse_block(block)
            assert count_flops(fused, (16, 16)) < count_flops(block, (16, 16))
            checked += 1


class TestBlockIO:
    def test_roundtrip_and_fuse(self, tmp_path):
        rng = np.random.default_rng(15)
        doc = {
            "in_channels": 3,
            "out_channels": 3,
            "identity": True,
            "branches": [
                {
                    "kernel": 3,
                    "weights": rng.standard_normal(81).tolist(),
                    "bias": rng.standard_normal(3).tolist(),
                },
                {
                    "kernel": 1,
                    "weights": rng.standard_normal(9).tolist(),
                    "bias": rng.standard_normal(3).tolist(),
                    "bn": {
                        "gamma": [1.0, 2.0, 0.5],
                        "beta": [0.0, 0.1, -0.1],
                        "mean": [0.0, 0.0, 0.0],
                        "var": [1.0, 1.0, 1.0],
                    },
                },
            ],
        }
        import json

        path = tmp_path / "block.json"
        path.write_text(json.dumps(doc))
        block = load_block(path)
        assert len(block.branches) == 2 and block.identity
        fused = fuse_block(block)
        restored = conv_from_jsonable(conv_to_jsonable(fused))
        assert np.array_equal(restored.weights, fused.weights)
        assert np.array_equal(restored.bias, fused.bias)

    def test_malformed_block_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"in_channels": 2}')
        with pytest.raises(InputError):
            load_block(path)


def test_normalized_branches_counts():
    rng = np.random.default_rng(16)
    block = BranchBlock(
        (Branch(rand_conv(rng, 4, 4, 3)), Branch(rand_conv(rng, 4, 4, 1))), identity=True
    )
    norm = normalized_branches(block)
    assert len(norm) == 3
    assert all(b.kernel_size == 3 for b in norm)
