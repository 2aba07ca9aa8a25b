"""UNet wiring: shapes, parameter classes, conditioning resolution."""
import pytest
import torch

from guidance_service import Conditioning, TextEncoder, ToyUNet, UNetConfig

TOY = UNetConfig(widths=(16, 32, 64), rank_self=8, rank_cross=16)


def make_inputs(size=64, batch=2, seed=0, labels=True):
    gen = torch.Generator().manual_seed(seed)
    z = torch.rand(batch, 3, size, size, generator=gen)
    t = torch.randint(1, 1001, (batch,), generator=gen)
    y_exp = (torch.arange(batch) % 3 if labels
             else torch.randn(batch, 32, generator=gen))
    cond = Conditioning(
        text=TextEncoder()(["A front view normal map face portrait"] * batch),
        y_id=torch.randn(batch, 512, generator=gen),
        y_exp=y_exp, lambda_id=0.8, lambda_exp=0.6)
    return z, t, cond


class TestForward:
    @pytest.mark.parametrize("size", [32, 64])
    def test_output_shape_equals_input_shape(self, size):
        torch.manual_seed(0)
        model = ToyUNet(TOY)
        z, t, cond = make_inputs(size)
        out = model(z, t, cond)
        assert out.shape == z.shape

    def test_zero_init_model_equals_base_model(self):
        torch.manual_seed(0)
        model = ToyUNet(TOY)
        z, t, cond = make_inputs()
        with torch.no_grad():
            assert torch.equal(model(z, t, cond),
                               model(z, t, cond, adapters=False))

    def test_same_seed_same_output(self):
        outs = []
        for _ in range(2):
            torch.manual_seed(11)
            model = ToyUNet(TOY)
            z, t, cond = make_inputs(seed=5)
            with torch.no_grad():
                outs.append(model(z, t, cond))
        assert torch.equal(outs[0], outs[1])

    def test_expression_embedding_passthrough(self):
        torch.manual_seed(0)
        model = ToyUNet(TOY)
        z, t, cond = make_inputs(labels=False)
        assert model(z, t, cond).shape == z.shape

    def test_scalar_timestep_accepted(self):
        torch.manual_seed(0)
        model = ToyUNet(TOY)
        z, t, cond = make_inputs(batch=1)
        with torch.no_grad():
            a = model(z, torch.tensor(420), cond)
            b = model(z, torch.tensor([420]), cond)
        assert torch.equal(a, b)


class TestConditioningValidation:
    def test_label_out_of_range_rejected(self):
        model = ToyUNet(TOY)
        with pytest.raises(ValueError, match="expression label"):
            model.resolve_exp(torch.tensor([23]))

    def test_embedding_wrong_dim_rejected(self):
        model = ToyUNet(TOY)
        with pytest.raises(ValueError, match="dim"):
            model.resolve_exp(torch.randn(1, 7))

    def test_wrong_width_count_rejected(self):
        with pytest.raises(ValueError, match="widths"):
            ToyUNet(UNetConfig(widths=(16, 32)))


class TestParameterClasses:
    def test_every_parameter_classified_once(self):
        model = ToyUNet(TOY)
        base = {n for n, _ in model.base_parameters()}
        adapters = {n for n, _ in model.adapter_parameters()}
        everything = {n for n, _ in model.named_parameters()}
        assert base | adapters == everything
        assert not base & adapters

    def test_report_counts_add_up(self):
        model = ToyUNet(TOY)
        report = model.parameter_report()
        total = sum(p.numel() for p in model.parameters())
        assert report["base"] + report["adapters"] == total
        assert 0.0 < report["fraction"] < 1.0

    def test_freeze_base_keeps_adapters_trainable(self):
        model = ToyUNet(TOY)
        model.freeze_base()
        assert all(not p.requires_grad for _, p in model.base_parameters())
        assert all(p.requires_grad for _, p in model.adapter_parameters())

    def test_base_gradients_identically_absent_when_frozen(self):
        torch.manual_seed(0)
        model = ToyUNet(TOY)
        model.freeze_base()
        z, t, cond = make_inputs(batch=1)
        model(z, t, cond).square().mean().backward()
        assert all(p.grad is None for _, p in model.base_parameters())
        moved = [n for n, p in model.adapter_parameters()
                 if p.grad is not None and float(p.grad.abs().max()) > 0]
        assert any("lora_b" in n for n in moved)
        assert any("v_id" in n for n in moved)
