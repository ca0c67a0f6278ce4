import pytest
import torch
from helpers import narrow_train_config
from PIL import Image

from cropsim.dataset.models import ConditionSet
from cropsim.nn.generator import Generator
from cropsim.services.checkpoint_service import CheckpointService
from cropsim.services.inference_service import InferenceService
from cropsim.services.render_service import BORDER_COLORS, GridCell, render_grid, std_image
from cropsim.services.training_service import TrainingService


@pytest.fixture
def service():
    torch.manual_seed(0)
    config = narrow_train_config()
    return InferenceService(
        Generator(config.model),
        config,
        condition_ranges={"t": [7, 91], "bm_max": [2.0, 2.0]},
        batch_size=2,
    )


def test_predict_batches_and_single_images(service):
    x = torch.rand(5, 3, 32, 32) * 2 - 1
    y_in = [ConditionSet(t=7)] * 5
    y_gen = [ConditionSet(t=t) for t in (7, 21, 51, 91, 91)]
    out = service.predict(x, y_in, y_gen, seed=3)
    assert out.shape == (5, 3, 32, 32)
    assert torch.equal(out, service.predict(x, y_in, y_gen, seed=3))
    single = service.predict(x[0], [y_in[0]], [y_gen[0]], seed=3)
    assert single.shape == (3, 32, 32)
    assert service.stats["generated"] == 11


def test_predict_length_mismatch(service):
    with pytest.raises(ValueError):
        service.predict(torch.zeros(2, 3, 32, 32), [ConditionSet(t=7)], [ConditionSet(t=7)] * 2)


def test_out_of_range_requests_are_flagged(service):
    assert not service.is_ood(ConditionSet(t=51))
    assert service.is_ood(ConditionSet(t=120))
    assert service.is_ood(ConditionSet(t=0))
    # biomass is not an active condition of this generator
    assert not service.is_ood(ConditionSet(t=51, b=(5.0, 5.0)))
    assert service.check_ranges([ConditionSet(t=7), ConditionSet(t=100)]) == [False, True]
    assert service.stats["ood_requests"] == 1


def test_biomass_range_applies_when_conditioned():
    config = narrow_train_config(("t", "b"))
    service = InferenceService(
        Generator(config.model), config, condition_ranges={"t": [7, 91], "bm_max": [2.0, 2.0]}
    )
    assert service.is_ood(ConditionSet(t=51, b=(2.5, 0.0)))
    assert not service.is_ood(ConditionSet(t=51, b=(2.0, 1.0)))


def test_single_draw_variability_is_zero(service):
    x = torch.rand(3, 32, 32) * 2 - 1
    result = service.variability(x, ConditionSet(t=7), ConditionSet(t=51), n_draws=1)
    assert result.samples.shape == (1, 3, 32, 32)
    assert torch.equal(result.std, torch.zeros(32, 32, dtype=torch.float64))


def test_variability_over_noise_draws(service):
    x = torch.rand(3, 32, 32) * 2 - 1
    result = service.variability(x, ConditionSet(t=7), ConditionSet(t=51), n_draws=4, seed=1)
    assert result.samples.shape == (4, 3, 32, 32)
    assert result.mean.shape == (3, 32, 32)
    assert result.std.shape == (32, 32)
    assert (result.std > 0).any()
    assert result.overdrawn.max() <= 1.0
    with pytest.raises(ValueError):
        service.variability(x, ConditionSet(t=7), ConditionSet(t=51), n_draws=0)


def test_service_from_checkpoint(tmp_path):
    trainer = TrainingService(narrow_train_config())
    trainer.ranges = {"t": [7, 91], "bm_max": None}
    CheckpointService().save(trainer.state_payload(None), tmp_path / "g.pt")
    service = InferenceService.from_checkpoint(tmp_path / "g.pt")
    assert service.conditions == ("t",)
    assert service.extractor_source == "seeded-random:0"
    assert service.is_ood(ConditionSet(t=92))
    assert not service.generator.training


# ---- grids ----


def test_std_image_is_grey_and_clipped():
    std = torch.tensor([[0.0, 0.1], [0.25, 0.9]])
    image = std_image(std)
    assert image.shape == (3, 2, 2)
    assert torch.allclose(image[0], torch.tensor([[-1.0, -0.2], [1.0, 1.0]]))
    assert torch.equal(image[0], image[2])


def test_render_grid_layout_and_borders(tmp_path):
    cell = torch.zeros(3, 32, 32)
    rows = [
        [GridCell(cell, border="input"), GridCell(cell), GridCell(cell, border="ood")],
        [GridCell(None), GridCell(cell), GridCell(cell)],
    ]
    path = render_grid(rows, tmp_path / "grid.png")
    with Image.open(path) as img:
        assert img.size == (3 * (32 + 6 + 4) + 4, 2 * (32 + 6 + 4) + 4)
        assert img.getpixel((4, 4)) == BORDER_COLORS["input"]
        assert img.getpixel((4 + 2 * 42, 4)) == BORDER_COLORS["ood"]
        assert img.getpixel((4 + 42, 4)) == (255, 255, 255)


def test_render_grid_rejects_empty_rows(tmp_path):
    with pytest.raises(ValueError):
        render_grid([], tmp_path / "grid.png")
