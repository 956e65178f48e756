import numpy as np
import pytest

from dgfilter.autograd import Tensor
from dgfilter.discriminator import Discriminator, build_discriminator, discriminator_forward

import gradsuite


@pytest.fixture(scope="module")
def disc():
    return build_discriminator(3, rng_seed=0)


class TestBuild:
    def test_first_layer_is_conditional(self, disc):
        assert disc.named_parameters()["discriminator.layer1.weight"].shape == (64, 6, 3, 3)

    def test_ten_layers(self, disc):
        assert len(disc.layers) == 10
        assert [l.stride for l in disc.layers] == [2] * 4 + [1] * 6
        assert disc.named_parameters()["discriminator.layer10.weight"].shape == (1, 512, 1, 1)

    def test_seeded(self):
        a, b = Discriminator(rng_seed=7), Discriminator(rng_seed=7)
        pa, pb = a.named_parameters(), b.named_parameters()
        assert all(np.array_equal(pa[n].data, pb[n].data) for n in pa)

    def test_wrong_depth_rejected(self):
        with pytest.raises(ValueError):
            Discriminator(ladder=[(8, 3, 2)] * 9)

    def test_instance_norm_toggle_adds_params(self):
        assert Discriminator(instance_norm=True).num_parameters() > Discriminator().num_parameters()


class TestForward:
    def test_patch_map_shape(self, disc, rng):
        x = rng.uniform(-1, 1, size=(1, 3, 64, 64)).astype(np.float32)
        y = disc.infer(x, x)
        assert y.shape == (1, 1, 4, 4)
        assert disc.output_size(64, 64) == (4, 4)

    @pytest.mark.parametrize("h", [16, 17, 40, 64])
    def test_shape_rule(self, disc, h):
        x = np.zeros((1, 3, h, h), np.float32)
        assert disc.infer(x, x).shape[2:] == disc.output_size(h, h)

    def test_open_unit_interval(self, disc, rng):
        b = rng.uniform(-1, 1, size=(2, 3, 32, 32)).astype(np.float32)
        c = rng.uniform(-1, 1, size=(2, 3, 32, 32)).astype(np.float32)
        y = disc.infer(b, c)
        assert np.all(y > 0) and np.all(y < 1)

    def test_candidate_matters_and_batch_equivariant(self, disc, rng):
        b = rng.uniform(-1, 1, size=(2, 3, 32, 32)).astype(np.float32)
        c = rng.uniform(-1, 1, size=(2, 3, 32, 32)).astype(np.float32)
        y = disc.infer(b, c)
        assert not np.array_equal(y, disc.infer(b, -c))
        swapped = disc.infer(b[::-1].copy(), c[::-1].copy())
        np.testing.assert_allclose(swapped, y[::-1], rtol=1e-5, atol=1e-7)

    def test_shape_mismatch_rejected(self, disc):
        with pytest.raises(ValueError):
            discriminator_forward(disc, Tensor(np.zeros((1, 3, 16, 16))), Tensor(np.zeros((1, 3, 16, 17))))

    def test_patch_locality(self, disc, rng):
        # one unit sees a 191-pixel window, so the corner unit of a 128 input
        # cannot see the opposite corner
        assert disc.receptive_field() == 191
        b = rng.uniform(-1, 1, size=(1, 3, 128, 128)).astype(np.float32)
        c = rng.uniform(-1, 1, size=(1, 3, 128, 128)).astype(np.float32)
        y0 = disc.infer(b, c)
        c2 = c.copy()
        c2[0, :, -1, -1] = -c2[0, :, -1, -1]
        y1 = disc.infer(b, c2)
        assert y0[0, 0, 0, 0] == y1[0, 0, 0, 0]
        assert y0[0, 0, -1, -1] != y1[0, 0, -1, -1]


def test_discriminator_gradcheck_64bit(rng):
    report = gradsuite.discriminator_check(np.float64, rng)
    assert report.passed, str(report)


def test_discriminator_gradcheck_32bit(rng):
    report = gradsuite.discriminator_check(np.float32, rng, numeric_dtype=np.float64, floor=1e-3)
    assert report.passed, str(report)
