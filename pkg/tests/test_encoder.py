import pytest
import torch

from mrlmc.encoder import MSCEncoder
from mrlmc.errors import NumericError
from mrlmc.gradcheck import check_gradients

FD_TOL = 1e-4


def _encoder(**kw):
    torch.manual_seed(kw.pop("seed", 0))
    args = dict(d=8, n_scale=3, n_out=4, alpha=0.3, dropout=0.0)
    args.update(kw)
    return MSCEncoder(args.pop("in_channels", {"FNIRS": 3, "EEG": 2}), **args).eval()


def test_adapter_latent_shape():
    enc = MSCEncoder({"EEG": 16}, d=64)
    c = enc.latent(torch.randn(1, 16, 1500), "EEG")
    assert c.shape == (1, 64, 1500)


def test_adapter_channel_mismatch():
    enc = _encoder()
    with pytest.raises(ValueError, match="channels"):
        enc.latent(torch.randn(1, 5, 20), "FNIRS")


def test_trunk_shared_across_modalities():
    enc = _encoder()
    x, y = torch.randn(2, 3, 20), torch.randn(2, 2, 20)
    before = enc(x, "FNIRS"), enc(y, "EEG")
    with torch.no_grad():
        enc.embed.weight.mul_(1.5)
    after = enc(x, "FNIRS"), enc(y, "EEG")
    assert not torch.equal(before[0], after[0]) and not torch.equal(before[1], after[1])
    trunk = {id(p) for p in enc.trunk_parameters()}
    assert trunk.isdisjoint({id(p) for p in enc.adapters.parameters()})


def test_trunk_size_independent_of_modalities():
    one = _encoder(in_channels={"EEG": 2})
    two = _encoder(in_channels={"EEG": 2, "FNIRS": 30})
    count = lambda e: sum(p.numel() for p in e.trunk_parameters())  # noqa: E731
    assert count(one) == count(two)


def test_output_dimension():
    enc = MSCEncoder({"EEG": 2}, d=8, n_scale=5, n_out=64)
    assert enc.m == 320
    assert enc(torch.randn(3, 2, 16), "EEG").shape == (3, 320)


def test_alpha_one_is_plain_norm():
    enc = _encoder(alpha=1.0)
    c = enc.latent(torch.randn(2, 3, 24), "FNIRS")
    expected = torch.cat([b(c) for b in enc.branches], dim=-1)
    assert torch.equal(enc.aggregate(c), expected)


def test_control_max_elementwise():
    enc = _encoder(alpha=0.3)
    c = enc.latent(torch.randn(2, 3, 24), "FNIRS")
    z = torch.cat([b(c) for b in enc.branches], dim=-1)
    expected = torch.where(z >= 0, z, 0.3 * z)
    torch.testing.assert_close(enc.aggregate(c), expected, rtol=0, atol=0)


def test_eval_mode_deterministic():
    enc = _encoder(dropout=0.5)
    x = torch.randn(2, 3, 20)
    assert torch.equal(enc(x, "FNIRS"), enc(x, "FNIRS"))


def test_non_finite_branch_reported():
    enc = _encoder()
    with torch.no_grad():
        enc.branches[1].block_conv.weight.fill_(float("nan"))
    with pytest.raises(NumericError, match="branch 1"):
        enc(torch.randn(1, 3, 20), "FNIRS")


def test_adapter_gradient_matches_finite_differences(double):
    enc = _encoder().double()
    x = torch.randn(2, 3, 16)
    readout = torch.randn(enc.m)
    adapter = enc.adapters["FNIRS"]
    res = check_gradients(lambda: (enc(x, "FNIRS") * readout).sum(),
                          {"weight": adapter.weight, "bias": adapter.bias}, max_probes=10**6)
    assert res.checked > 0 and res.max_rel_err <= FD_TOL


def test_branch_gradients_match_finite_differences(double):
    enc = _encoder().double()
    c = enc.latent(torch.randn(2, 3, 16), "FNIRS").detach()
    params = {n: p for n, p in enc.branches.named_parameters()}
    res = check_gradients(lambda: enc.aggregate(c).sum(), params)
    assert res.checked > 0 and res.max_rel_err <= FD_TOL
