import pytest
import torch

from ucapsnet.discriminator import DiscriminatorConfig, build_discriminator
from ucapsnet.generator import parameter_checksum


def test_logit_grid_shape():
    # 56 -> 28 -> 14 -> 7 -> 6 -> 5 under the stride 2,2,2,1,1 stack.
    d = build_discriminator()
    out = d(torch.randn(2, 1, 56, 56), torch.randn(2, 2, 56, 56))
    assert out.shape == (2, 1, 5, 5)


def test_finite_for_constant_inputs():
    d = build_discriminator().eval()
    with torch.no_grad():
        zeros = d(torch.zeros(1, 1, 56, 56), torch.zeros(1, 2, 56, 56))
        ones = d(torch.ones(1, 1, 56, 56), torch.ones(1, 2, 56, 56))
    assert bool(torch.isfinite(zeros).all())
    assert bool(torch.isfinite(ones).all())


def test_shape_mismatch_rejected():
    d = build_discriminator()
    with pytest.raises(ValueError):
        d(torch.randn(1, 1, 56, 56), torch.randn(1, 2, 28, 28))
    with pytest.raises(ValueError):
        d(torch.randn(1, 2, 56, 56), torch.randn(1, 2, 56, 56))


def test_seeded_construction_determinism():
    a = parameter_checksum(build_discriminator(DiscriminatorConfig(seed=3)))
    b = parameter_checksum(build_discriminator(DiscriminatorConfig(seed=3)))
    c = parameter_checksum(build_discriminator(DiscriminatorConfig(seed=4)))
    assert a == b
    assert a != c


def test_locality_of_patch_logits():
    # With a 96x96 input the logit grid is 10x10 and the receptive field
    # (70 pixels) of opposite corners cannot overlap.
    torch.manual_seed(0)
    d = build_discriminator().eval()
    l_plane = torch.randn(1, 1, 96, 96)
    ab = torch.randn(1, 2, 96, 96)
    with torch.no_grad():
        base = d(l_plane, ab)
        perturbed = ab.clone()
        perturbed[..., 95, 95] += 10.0
        moved = d(l_plane, perturbed)
    assert base.shape == (1, 1, 10, 10)
    assert torch.equal(base[0, 0, 0, 0], moved[0, 0, 0, 0])
    assert not torch.equal(base[0, 0, 9, 9], moved[0, 0, 9, 9])


def test_config_validation():
    with pytest.raises(ValueError):
        DiscriminatorConfig(widths=(64, 64, 128, 256))
    with pytest.raises(ValueError):
        DiscriminatorConfig(kernel=2)
