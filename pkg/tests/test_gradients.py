"""Autograd against central finite differences, float64, step 1e-5."""
import pytest
import torch

from hsifuse.gradcheck import (KinkCrossing, check_directional, check_full, check_instances,
                               crosses_kink, relative_error)
from hsifuse.model import IWCA, ConvBlock, Decoder, build_model, init_params, upsample2
from hsifuse.train import focal_loss

TOL = 1e-4
STEP = 1e-5


def projected(out, seed):
    """Scalar objective: fixed random projection of a tensor output."""
    g = torch.Generator().manual_seed(10_000 + seed)
    w = torch.randn(out.shape, generator=g, dtype=torch.float64)
    return (out * w).sum()


def leaves(*shapes, seed):
    g = torch.Generator().manual_seed(seed)
    return [torch.randn(s, generator=g, dtype=torch.float64).requires_grad_() for s in shapes]


def iwca_case(seed):
    m = init_params(IWCA(3), seed).double()
    (x,) = leaves((2, 3, 5, 5), seed=seed)
    return (lambda: projected(m(x), seed)), [x, *m.parameters()]


def conv_block_case(seed):
    m = init_params(ConvBlock(2, 3), seed).double()
    (x,) = leaves((1, 2, 6, 6), seed=seed)
    return (lambda: projected(m(x), seed)), [x, *m.parameters()]


def upsample_case(seed):
    (x,) = leaves((1, 2, 3, 3), seed=seed)
    return (lambda: projected(upsample2(x), seed)), [x]


def decoder_case(seed):
    m = init_params(Decoder(4, 3, 2, 3, widths=(4, 3, 2)), seed).double()
    b, s8, s16 = leaves((1, 4, 2, 2), (1, 3, 4, 4), (1, 2, 8, 8), seed=seed)
    return (lambda: projected(m(b, [s8], s16), seed)), [b, s8, s16, *m.parameters()]


def focal_case(seed):
    (logits,) = leaves((2, 4, 3, 3), seed=seed)
    g = torch.Generator().manual_seed(seed)
    target = torch.randint(0, 4, (2, 3, 3), generator=g)
    gamma = [0.0, 1.0, 2.0, 3.0][seed % 4]
    return (lambda: focal_loss(logits, target, gamma)), [logits]


CASES = {
    "iwca": iwca_case,
    "conv_block": conv_block_case,
    "upsample": upsample_case,
    "decoder": decoder_case,
    "focal_loss": focal_case,
}


def test_relative_error_basics():
    a = torch.tensor([1.0, 2.0])
    assert relative_error(a, a) == 0.0
    assert relative_error(torch.zeros(2), torch.zeros(2)) == 0.0
    assert relative_error(torch.tensor([1.0]), torch.tensor([0.0])) == 1.0


@pytest.mark.parametrize("name", sorted(CASES))
def test_block_gradients(name):
    worst, _ = check_instances(CASES[name], n=20, step=STEP)
    assert worst <= TOL


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("kind", ["siamese", "unet_rgb", "cnn_rgb"])
def test_full_network_focal(kind, seed):
    net = init_params(build_model(kind, 4), seed).double()
    g = torch.Generator().manual_seed(seed)
    x = torch.rand(1, 6, 8, 8, generator=g, dtype=torch.float64)
    z = torch.rand(1, 3, 16, 16, generator=g, dtype=torch.float64)
    t = torch.randint(0, 4, (1, 16, 16), generator=g)
    f = lambda: focal_loss(net(x, z), t, 3.0)
    assert check_directional(f, list(net.parameters()), n_directions=3, step=STEP, generator=g) <= TOL


def test_siamese_phi_group_full():
    """Every attention parameter of the full network, coordinate by coordinate."""
    net = init_params(build_model("siamese", 4), 0).double()
    g = torch.Generator().manual_seed(0)
    x = torch.rand(1, 6, 8, 8, generator=g, dtype=torch.float64)
    z = torch.rand(1, 3, 16, 16, generator=g, dtype=torch.float64)
    f = lambda: projected(net(x, z), 0)
    assert check_full(f, list(net.phi.parameters()), STEP) <= TOL


def test_kink_detector_flags_relu_crossing():
    x = torch.tensor([1e-6, 0.5], dtype=torch.float64)
    f = lambda: torch.relu(x).sum()
    assert crosses_kink(f, [x], [torch.tensor([1.0, 0.0], dtype=torch.float64)], 1e-5)
    assert not crosses_kink(f, [x], [torch.tensor([0.0, 1.0], dtype=torch.float64)], 1e-5)


def test_full_check_rejects_kink_and_restores_input():
    x = torch.tensor([1e-6, 0.5], dtype=torch.float64, requires_grad=True)
    before = x.detach().clone()
    with pytest.raises(KinkCrossing):
        check_full(lambda: torch.relu(x).sum(), [x], 1e-5)
    assert torch.equal(x.detach(), before)
    # unguarded, the same stencil reports the half-slope average
    assert check_full(lambda: torch.relu(x).sum(), [x], 1e-5, guard_kinks=False) > 0.1
