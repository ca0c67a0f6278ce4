import math

import pandas as pd
import pytest
import torch
from helpers import central_difference, condition_batch, largest_entry, narrow_train_config

from cropsim.dataset.queries import ManifestQueries
from cropsim.nn.critic import Critic
from cropsim.nn.generator import Generator
from cropsim.services.checkpoint_service import CheckpointService
from cropsim.services.training_service import (
    MAX_CONSECUTIVE_ABORTS,
    NonFiniteLossError,
    StepBatch,
    TrainingDivergedError,
    TrainingService,
    condition_ranges,
    critic_step,
    generator_step,
    gradient_penalty,
    select_best_epoch,
)


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)


def _images(n=3, dtype=torch.float64):
    return torch.rand(n, 3, 8, 8, dtype=dtype) * 2 - 1


def _linear_critic(weight):
    def critic(x_hat, x_in, y_in, y_gen):
        return (x_hat * weight).flatten(start_dim=1).sum(dim=1)

    return critic


# ---- gradient penalty ----


def test_gradient_penalty_is_zero_for_unit_gradient_critic():
    w = torch.randn(3, 8, 8, dtype=torch.float64)
    w = w / w.norm()
    y = condition_batch([7, 7, 7])
    gp = gradient_penalty(_linear_critic(w), _images(), _images(), _images(), y, y)
    assert gp.item() == pytest.approx(0.0, abs=1e-12)


def test_gradient_penalty_is_one_for_double_norm_critic():
    w = torch.randn(3, 8, 8, dtype=torch.float64)
    w = 2.0 * w / w.norm()
    y = condition_batch([7, 7, 7])
    gp = gradient_penalty(_linear_critic(w), _images(), _images(), _images(), y, y)
    assert gp.item() == pytest.approx(1.0, abs=1e-12)


def test_gradient_penalty_interpolates_between_reference_and_generated():
    seen = []

    def critic(x_hat, x_in, y_in, y_gen):
        seen.append(x_hat.detach().clone())
        return x_hat.flatten(start_dim=1).sum(dim=1)

    x_ref, x_gen = _images(2), _images(2)
    y = condition_batch([7, 7])
    gradient_penalty(critic, x_ref, x_gen, x_ref, y, y, eps=torch.ones(2))
    assert torch.equal(seen[-1], x_ref)
    gradient_penalty(critic, x_ref, x_gen, x_ref, y, y, eps=torch.tensor([0.0, 0.25]))
    assert torch.equal(seen[-1][0], x_gen[0])
    assert torch.allclose(seen[-1][1], 0.25 * x_ref[1] + 0.75 * x_gen[1])


def test_gradient_penalty_matches_closed_form_for_quadratic_critic():
    def critic(x_hat, x_in, y_in, y_gen):
        return 0.5 * (x_hat**2).flatten(start_dim=1).sum(dim=1)

    x_ref, x_gen = _images(4), _images(4)
    eps = torch.tensor([0.1, 0.4, 0.6, 0.9], dtype=torch.float64)
    y = condition_batch([7] * 4)
    gp = gradient_penalty(critic, x_ref, x_gen, x_ref, y, y, eps=eps)
    x_hat = eps.view(-1, 1, 1, 1) * x_ref + (1 - eps.view(-1, 1, 1, 1)) * x_gen
    expected = ((x_hat.flatten(start_dim=1).norm(dim=1) - 1.0) ** 2).mean()
    assert gp.item() == pytest.approx(expected.item(), rel=1e-10)


def test_gradient_penalty_is_differentiable_in_critic_parameters():
    w = torch.randn(3, 8, 8, dtype=torch.float64, requires_grad=True)
    x_ref, x_gen = _images(2), _images(2)
    y = condition_batch([7, 7])

    def penalty(weight):
        return gradient_penalty(_linear_critic(weight), x_ref, x_gen, x_ref, y, y, eps=torch.ones(2))

    assert torch.autograd.gradcheck(penalty, (w,))


def test_gradient_penalty_shape_mismatch():
    y = condition_batch([7, 7])
    with pytest.raises(ValueError):
        gradient_penalty(_linear_critic(1.0), _images(2), _images(3), _images(2), y, y)


class ThreeLayerCritic(torch.nn.Module):
    def __init__(self):
        super().__init__()
        self.net = torch.nn.Sequential(
            torch.nn.Flatten(),
            torch.nn.Linear(3 * 8 * 8, 16),
            torch.nn.Tanh(),
            torch.nn.Linear(16, 16),
            torch.nn.Tanh(),
            torch.nn.Linear(16, 1),
        )

    def forward(self, x_hat, x_in=None, y_in=None, y_gen=None):
        return self.net(x_hat).squeeze(1)


def _numeric_input_gradient(critic, x, h=1e-6):
    basis = torch.eye(x.numel(), dtype=x.dtype).view(-1, *x.shape)
    with torch.no_grad():
        return (critic(x + h * basis) - critic(x - h * basis)) / (2 * h)


def test_gradient_penalty_matches_finite_differences_on_three_layer_critic():
    critic = ThreeLayerCritic().double()
    x_ref, x_gen = _images(2), _images(2)
    eps = torch.tensor([0.3, 0.8], dtype=torch.float64)
    y = condition_batch([7, 7])
    gp = gradient_penalty(critic, x_ref, x_gen, x_ref, y, y, eps=eps)

    x_hat = eps.view(-1, 1, 1, 1) * x_ref + (1 - eps.view(-1, 1, 1, 1)) * x_gen
    norms = torch.stack([_numeric_input_gradient(critic, x).norm() for x in x_hat])
    assert gp.item() == pytest.approx(((norms - 1.0) ** 2).mean().item(), rel=1e-4)

    def penalty():
        return gradient_penalty(critic, x_ref, x_gen, x_ref, y, y, eps=eps)

    gp.backward()
    for layer in (critic.net[1], critic.net[3], critic.net[5]):
        index = largest_entry(layer.weight.grad)
        numeric = central_difference(penalty, layer.weight, index)
        assert numeric == pytest.approx(layer.weight.grad[index].item(), rel=1e-4)


# ---- optimisation steps ----


def _step_setup(train_config):
    generator = Generator(train_config.model)
    critic = Critic(train_config.model)
    batch = StepBatch(
        x_in=torch.rand(2, 3, 32, 32) * 2 - 1,
        x_ref=torch.rand(2, 3, 32, 32) * 2 - 1,
        y_in=condition_batch([7, 21]),
        y_gen=condition_batch([51, 91]),
    )
    return generator, critic, batch


def _snapshot(module):
    return {name: p.detach().clone() for name, p in module.named_parameters()}


def _unchanged(module, snapshot):
    return all(torch.equal(p, snapshot[name]) for name, p in module.named_parameters())


def test_critic_step_updates_only_the_critic(train_config):
    generator, critic, batch = _step_setup(train_config)
    opt_d = torch.optim.Adam(critic.parameters(), lr=1e-3, betas=(0.0, 0.9))
    g_before, d_before = _snapshot(generator), _snapshot(critic)
    result = critic_step(generator, critic, opt_d, batch, torch.randn(2, 16), lambda_gp=10.0)
    assert _unchanged(generator, g_before)
    assert not _unchanged(critic, d_before)
    assert math.isfinite(result.loss_d) and result.gp >= 0
    assert result.wasserstein == pytest.approx(result.score_fake - result.score_real, abs=1e-5)


def test_critic_step_without_penalty_is_the_wasserstein_estimate(train_config):
    generator, critic, batch = _step_setup(train_config)
    opt_d = torch.optim.Adam(critic.parameters(), lr=1e-3, betas=(0.0, 0.9))
    result = critic_step(generator, critic, opt_d, batch, torch.randn(2, 16), lambda_gp=0.0)
    assert result.gp == 0.0
    assert result.loss_d == result.wasserstein


def test_critic_step_adds_the_weighted_penalty(train_config):
    generator, critic, batch = _step_setup(train_config)
    opt_d = torch.optim.SGD(critic.parameters(), lr=0.0)
    result = critic_step(generator, critic, opt_d, batch, torch.randn(2, 16), lambda_gp=10.0)
    assert result.loss_d == pytest.approx(result.wasserstein + 10.0 * result.gp, rel=1e-5, abs=1e-5)


def test_generator_step_updates_only_the_generator(train_config):
    generator, critic, batch = _step_setup(train_config)
    opt_g = torch.optim.Adam(generator.parameters(), lr=1e-3, betas=(0.0, 0.9))
    g_before, d_before = _snapshot(generator), _snapshot(critic)
    loss = generator_step(generator, critic, opt_g, batch, torch.randn(2, 16))
    assert math.isfinite(loss)
    assert _unchanged(critic, d_before)
    assert not _unchanged(generator, g_before)
    assert all(p.requires_grad for p in critic.parameters())
    assert all(p.grad is None for p in critic.parameters())


def test_non_finite_critic_loss_skips_the_update(train_config):
    generator, critic, batch = _step_setup(train_config)
    batch.x_ref[0, 0, 0, 0] = float("nan")
    opt_d = torch.optim.Adam(critic.parameters(), lr=1e-3)
    before = _snapshot(critic)
    with pytest.raises(NonFiniteLossError):
        critic_step(generator, critic, opt_d, batch, torch.randn(2, 16), lambda_gp=10.0)
    assert _unchanged(critic, before)


def test_repeated_non_finite_steps_abort_training(train_config):
    trainer = TrainingService(train_config)
    _, _, batch = _step_setup(train_config)
    batch.x_ref[:] = float("nan")
    for _ in range(MAX_CONSECUTIVE_ABORTS - 1):
        assert trainer.train_step(batch) == (None, None)
    with pytest.raises(TrainingDivergedError):
        trainer.train_step(batch)
    assert trainer.stats["aborted_steps"] == MAX_CONSECUTIVE_ABORTS
    assert trainer.global_step == MAX_CONSECUTIVE_ABORTS


def test_generator_updates_every_n_critic_steps(train_config):
    trainer = TrainingService(train_config)
    _, _, batch = _step_setup(train_config)
    outcomes = [trainer.train_step(batch)[1] is not None for _ in range(4)]
    assert outcomes == [False, True, False, True]
    assert trainer.stats == {
        "critic_steps": 4,
        "generator_steps": 2,
        "aborted_steps": 0,
        "validations": 0,
    }


# ---- model selection ----


def test_select_best_epoch():
    assert select_best_epoch([0.5, 0.3, 0.4]) == 2
    assert select_best_epoch([0.5, 0.3, 0.4], epochs=[5, 10, 15]) == 10
    with pytest.raises(ValueError):
        select_best_epoch([])


def test_condition_ranges(tiny_records):
    ranges = condition_ranges(tiny_records)
    assert ranges["t"] == [7, 91]
    assert all(v > 0 for v in ranges["bm_max"])


# ---- fit and checkpoints ----


def test_fit_writes_checkpoints_and_validation_replays(tmp_path, tiny_records):
    train = ManifestQueries.by_split(tiny_records, "train")
    val = ManifestQueries.by_split(tiny_records, "val")
    config = narrow_train_config(epochs=1)
    trainer = TrainingService(config, out_dir=tmp_path)
    best = trainer.fit(train, val)

    for name in ("best.pt", "last.pt", "train_log.csv", "summary.json"):
        assert (tmp_path / name).exists()
    assert best["best"]["epoch"] == 1
    assert best["extractor_source"] == "seeded-random:0"
    log = pd.read_csv(tmp_path / "train_log.csv")
    assert list(log.columns) == ["epoch", "loss_D", "loss_G", "GP", "val_perceptual"]
    assert len(log) == 1

    payload = CheckpointService().load(tmp_path / "best.pt")
    replay = TrainingService(CheckpointService.train_config(payload))
    replay.load_state(payload)
    assert replay.validate(val) == pytest.approx(payload["val_metric"], abs=1e-6)


def test_fit_resumes_from_last_checkpoint(tmp_path, tiny_records):
    train = ManifestQueries.by_split(tiny_records, "train")
    val = ManifestQueries.by_split(tiny_records, "val")
    TrainingService(narrow_train_config(epochs=1), out_dir=tmp_path).fit(train, val)

    resumed = TrainingService(narrow_train_config(epochs=2), out_dir=tmp_path)
    resumed.fit(train, val, resume_from=CheckpointService().load(tmp_path / "last.pt"))
    assert resumed.epoch == 2
    assert resumed.val_epochs == [1, 2]
    assert len(pd.read_csv(tmp_path / "train_log.csv")) == 2


def test_checkpoint_format_is_checked(tmp_path):
    torch.save({"format": "other"}, tmp_path / "x.pt")
    with pytest.raises(ValueError):
        CheckpointService().load(tmp_path / "x.pt")
    with pytest.raises(FileNotFoundError):
        CheckpointService().load(tmp_path / "missing.pt")


def test_fit_returns_the_weights_of_the_best_epoch(tiny_records):
    train = ManifestQueries.by_split(tiny_records, "train")
    val = ManifestQueries.by_split(tiny_records, "val")
    config = narrow_train_config(epochs=4, val_interval=1, lr=1e-2)
    trainer = TrainingService(config)
    best = trainer.fit(train, val)

    assert best["best"]["epoch"] == trainer.best_epoch
    assert best["val_metric"] == pytest.approx(min(trainer.val_history))
    live = {p.data_ptr() for p in trainer.generator.state_dict().values()}
    assert all(t.data_ptr() not in live for t in best["generator"].values())

    replay = TrainingService(CheckpointService.train_config(best))
    replay.load_state(best)
    assert replay.validate(val) == pytest.approx(best["val_metric"], abs=1e-6)


def test_state_payload_is_not_written_by_later_steps(train_config):
    trainer = TrainingService(train_config)
    _, _, batch = _step_setup(train_config)
    payload = trainer.state_payload(None)
    frozen = {k: v.clone() for k, v in payload["critic"].items()}
    trainer.train_step(batch)
    assert all(torch.equal(payload["critic"][k], v) for k, v in frozen.items())
    live = dict(trainer.critic.named_parameters())
    assert any(not torch.equal(p, payload["critic"][name]) for name, p in live.items())
