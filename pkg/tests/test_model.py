"""
Tests for the form encoder and its two objectives.
"""
import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from pitchform.dataset import IGNORE_INDEX, pair_map
from pitchform.errors import BadPairing, IdOutOfRange, NoMaskedPositions
from pitchform.model import (
    FormModel,
    ModelConfig,
    MultiHeadSelfAttention,
    contrastive_loss,
    masked_accuracy,
    mgm_loss,
    retrieval_accuracy,
    total_loss,
)

CLS, MASK, PAD = 9, 10, 11


def toy_config(**overrides) -> ModelConfig:
    values = dict(layers=2, heads=2, model_dim=8, feedforward_dim=16, vocab_size=12, n_stadiums=3,
                  supplemental_input_dim=4, max_len=6, max_at_bats=4, dropout=0.0)
    values.update(overrides)
    return ModelConfig(**values)


def toy_model(seed=0, dtype=torch.float64) -> FormModel:
    torch.manual_seed(seed)
    model = FormModel(toy_config()).to(dtype)
    model.eval()
    return model


def toy_inputs(seed=0, dtype=torch.float64):
    """Four views of lengths 6, 4, 5, 3; slot 1 of every view is masked."""
    g = torch.Generator().manual_seed(seed)
    B, L = 4, 6
    tokens = torch.full((B, L), PAD, dtype=torch.long)
    targets = torch.full((B, L), IGNORE_INDEX, dtype=torch.long)
    attention_mask = torch.zeros((B, L), dtype=torch.bool)
    for b, n in enumerate((6, 4, 5, 3)):
        tokens[b, 0] = CLS
        tokens[b, 1:n] = torch.randint(1, 4, (n - 1,), generator=g)
        targets[b, 1] = tokens[b, 1]
        tokens[b, 1] = MASK
        attention_mask[b, :n] = True
    return {
        "tokens": tokens,
        "targets": targets,
        "attention_mask": attention_mask,
        "supplemental": torch.randn(B, L, 4, generator=g, dtype=dtype),
        "physics": torch.randn(B, L, 8, generator=g, dtype=dtype),
        "stadium": torch.randint(0, 3, (B, L), generator=g),
        "lineup": torch.randint(0, 10, (B, L), generator=g),
        "pitch_type": torch.randint(0, 14, (B, L), generator=g),
        "zone": torch.randint(0, 26, (B, L), generator=g),
        "ab_ordinal": torch.randint(0, 4, (B, L), generator=g),
        "pitch_ordinal": torch.randint(0, 17, (B, L), generator=g),
        "pairing": torch.tensor([1, 0, 3, 2]),
    }


# -------------------------------------------------------------------
# Contrastive objective
# -------------------------------------------------------------------

def test_contrastive_loss_oracles():
    pairing = [1, 0, 3, 2]
    same = torch.ones(4, 72, dtype=torch.float64) / math.sqrt(72)
    assert contrastive_loss(same, pairing, 0.1).item() == pytest.approx(4 * math.log(3), abs=1e-9)

    # pairs identical, other views orthogonal
    z = torch.zeros(4, 72, dtype=torch.float64)
    z[0, 0] = z[1, 0] = 1.0
    z[2, 1] = z[3, 1] = 1.0
    assert contrastive_loss(z, pairing, 0.01).item() == pytest.approx(0.0, abs=1e-12)
    assert contrastive_loss(z, pairing, 1.0).item() == pytest.approx(4 * math.log(1 + 2 / math.e), abs=1e-9)
    assert contrastive_loss(z, pairing, 1.0).item() == pytest.approx(2.205736, abs=1e-6)
    assert retrieval_accuracy(z, pairing) == 1.0


def test_contrastive_loss_is_rotation_invariant():
    g = torch.Generator().manual_seed(0)
    z = F.normalize(torch.randn(8, 72, generator=g, dtype=torch.float64), dim=-1)
    q, _ = torch.linalg.qr(torch.randn(72, 72, generator=g, dtype=torch.float64))
    pairing = pair_map(8)
    assert abs(contrastive_loss(z, pairing, 0.1).item() - contrastive_loss(z @ q, pairing, 0.1).item()) < 1e-8


def test_bad_pairings_rejected():
    z = torch.eye(4, 72, dtype=torch.float64)
    for pairing in ([0, 1, 2, 3], [1, 2, 3, 0], [1, 0, 3, 4], [0]):
        with pytest.raises(BadPairing):
            contrastive_loss(z[:len(pairing)], pairing, 0.1)
    with pytest.raises(ValueError):
        contrastive_loss(z, [1, 0, 3, 2], 0.0)


# -------------------------------------------------------------------
# Masked gamestate modeling objective
# -------------------------------------------------------------------

def test_mgm_loss_uniform_logits():
    targets = torch.full((2, 5), IGNORE_INDEX)
    targets[0, 1], targets[1, 3] = 4, 7
    logits = torch.zeros(2, 5, 9, dtype=torch.float64)
    assert mgm_loss(logits, targets).item() == pytest.approx(math.log(9), abs=1e-12)
    assert mgm_loss(logits + 5.0, targets).item() == pytest.approx(math.log(9), abs=1e-12)


def test_mgm_loss_margin_closed_form():
    V = 512
    targets = torch.tensor([[IGNORE_INDEX, 3, 100]])
    logits = torch.zeros(1, 3, V, dtype=torch.float64)
    logits[0, 1, 3] = 10.0
    logits[0, 2, 100] = 10.0
    expected = math.log(1 + (V - 1) * math.exp(-10))
    assert mgm_loss(logits, targets).item() == pytest.approx(expected, rel=1e-10)
    assert masked_accuracy(logits, targets) == 1.0


def test_mgm_loss_needs_a_masked_slot():
    with pytest.raises(NoMaskedPositions):
        mgm_loss(torch.zeros(1, 3, 9), torch.full((1, 3), IGNORE_INDEX))


# -------------------------------------------------------------------
# Encoder
# -------------------------------------------------------------------

def test_forward_shapes():
    model, inputs = toy_model(), toy_inputs()
    outputs = model(inputs)
    assert outputs["hidden"].shape == (4, 6, 8)
    assert outputs["mgm_logits"].shape == (4, 6, 9)
    assert outputs["forms"].shape == (4, 72)
    np.testing.assert_allclose(outputs["forms"].norm(dim=-1).detach().numpy(), 1.0, atol=1e-12)


def test_out_of_range_ids():
    model = toy_model()
    for name, bad in (("stadium", 3), ("tokens", 12), ("zone", -1)):
        inputs = toy_inputs()
        inputs[name][0, 2] = bad
        with pytest.raises(IdOutOfRange):
            model(inputs)


def test_pad_slots_do_not_leak():
    model = toy_model()
    inputs = toy_inputs()
    changed = {k: v.clone() for k, v in inputs.items()}
    pads = ~inputs["attention_mask"]
    g = torch.Generator().manual_seed(9)
    changed["tokens"][pads] = torch.randint(0, 9, (int(pads.sum()),), generator=g)
    changed["supplemental"][pads] = torch.randn(int(pads.sum()), 4, generator=g, dtype=torch.float64)
    changed["stadium"][pads] = (inputs["stadium"][pads] + 1) % 3
    a, b = model(inputs), model(changed)
    torch.testing.assert_close(a["forms"], b["forms"], rtol=0, atol=1e-12)
    real = inputs["attention_mask"]
    torch.testing.assert_close(a["hidden"][real], b["hidden"][real], rtol=0, atol=1e-12)


def test_identity_attention_matches_hand_computation():
    attention = MultiHeadSelfAttention(3, 1).double()
    with torch.no_grad():
        for linear in (attention.query, attention.key, attention.value, attention.out):
            linear.weight.copy_(torch.eye(3, dtype=torch.float64))
            linear.bias.zero_()
    x = torch.randn(1, 4, 3, generator=torch.Generator().manual_seed(0), dtype=torch.float64)
    mask = torch.tensor([[True, True, True, False]])
    expected = torch.softmax(x[0, :, :3] @ x[0, :3].T / math.sqrt(3), dim=-1) @ x[0, :3]
    torch.testing.assert_close(attention(x, mask)[0], expected, rtol=0, atol=1e-12)


def test_absent_stats_reduce_to_a_learned_bias():
    model = toy_model()
    projection = model.supplemental_projection
    expected = projection[2](F.gelu(projection[0].bias))
    torch.testing.assert_close(projection(torch.zeros(4, dtype=torch.float64)), expected)


def test_stadium_only_touches_context_half():
    model = toy_model()
    inputs = toy_inputs()
    before = model.embed_inputs(inputs, positional=False)
    inputs["stadium"][0, 2] = (inputs["stadium"][0, 2] + 1) % 3
    after = model.embed_inputs(inputs, positional=False)
    diff = (after - before).abs() > 0
    assert not diff[..., :4].any()
    assert diff[0, 2, 4:].any()
    diff[0, 2] = False
    assert not diff.any()


def test_gradients_match_finite_differences():
    model, inputs = toy_model(seed=1), toy_inputs(seed=1)
    model.zero_grad()
    total_loss(model, inputs, tau=1.0, lam=1.0)["total"].backward()
    params = [p for p in model.parameters()]
    rng = np.random.default_rng(0)
    h = 1e-4
    for _ in range(200):
        p = params[rng.integers(len(params))]
        flat = p.data.view(-1)
        i = int(rng.integers(flat.numel()))
        analytic = p.grad.view(-1)[i].item() if p.grad is not None else 0.0
        original = flat[i].item()
        with torch.no_grad():
            flat[i] = original + h
            up = total_loss(model, inputs, 1.0, 1.0)["total"].item()
            flat[i] = original - h
            down = total_loss(model, inputs, 1.0, 1.0)["total"].item()
            flat[i] = original
        numeric = (up - down) / (2 * h)
        assert abs(numeric - analytic) <= 1e-4 * max(abs(analytic), abs(numeric), 1e-2), (p.shape, i)


def test_unused_embedding_rows_get_no_gradient():
    model, inputs = toy_model(), toy_inputs()
    total_loss(model, inputs, tau=0.1, lam=1.0)["total"].backward()
    grad = model.delta_embedding.weight.grad
    used = {1, 2, 3, MASK, PAD}
    for row in range(12):
        if row not in used:
            assert not grad[row].any(), row
    # the [CLS] slot uses its own vector, not the token table
    assert not grad[CLS].any()
    assert grad[MASK].any()


def test_total_loss_combines_parts():
    model, inputs = toy_model(), toy_inputs()
    mgm_only = total_loss(model, inputs, tau=0.1, lam=0.0)
    assert mgm_only["total"].item() == mgm_only["mgm"].item()
    both = total_loss(model, inputs, tau=0.1, lam=1.0)
    assert abs(both["total"].item() - (both["mgm"].item() + both["contrastive"].item())) < 1e-10


def test_outputs_finite_across_seeds():
    for seed in range(5):
        outputs = toy_model(seed, torch.float32)(toy_inputs(seed, torch.float32))
        for name in ("hidden", "mgm_logits", "forms"):
            assert torch.isfinite(outputs[name]).all(), (seed, name)


def test_config_roundtrip_and_presets():
    config = ModelConfig.for_data("paper", "pitcher", vocab_size=474, n_stadiums=31, supplemental_input_dim=3082)
    assert (config.layers, config.heads, config.model_dim) == (8, 8, 512)
    assert config.max_len == 512
    assert config.max_at_bats == 91
    assert ModelConfig.from_dict(config.to_dict()) == config
    assert config.config_hash() == ModelConfig.from_dict(config.to_dict()).config_hash()
    with pytest.raises(ValueError):
        toy_config(heads=3)


if __name__ == "__main__":
    test_contrastive_loss_oracles()
    test_mgm_loss_margin_closed_form()
    print("✓ model")
