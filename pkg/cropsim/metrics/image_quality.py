"""
cropsim/metrics/image_quality.py
MS-SSIM, perceptual patch distance and Frechet distance
"""

import numpy as np
import scipy.linalg
import torch
import torch.nn.functional as F

from cropsim.nn.feature_extractor import FeatureExtractor

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def gaussian(kernel_size: int, sigma: float, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """1D Gaussian kernel."""
    ksize_half = (kernel_size - 1) * 0.5
    kernel = torch.linspace(-ksize_half, ksize_half, steps=kernel_size, dtype=dtype)
    gauss = torch.exp(-0.5 * (kernel / sigma).pow(2))
    return gauss / gauss.sum()


def _filter(x: torch.Tensor, kernel: torch.Tensor) -> torch.Tensor:
    """Separable valid-mode depthwise Gaussian filter."""
    channels = x.shape[1]
    k = kernel.to(dtype=x.dtype, device=x.device)
    kx = k.view(1, 1, 1, -1).expand(channels, 1, 1, -1)
    ky = k.view(1, 1, -1, 1).expand(channels, 1, -1, 1)
    x = F.conv2d(x, kx, groups=channels)
    return F.conv2d(x, ky, groups=channels)


def _ssim_terms(
    x: torch.Tensor, y: torch.Tensor, kernel: torch.Tensor, data_range: float
) -> tuple[torch.Tensor, torch.Tensor]:
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mu_x = _filter(x, kernel)
    mu_y = _filter(y, kernel)
    mu_xx = mu_x * mu_x
    mu_yy = mu_y * mu_y
    mu_xy = mu_x * mu_y
    sigma_xx = _filter(x * x, kernel) - mu_xx
    sigma_yy = _filter(y * y, kernel) - mu_yy
    sigma_xy = _filter(x * y, kernel) - mu_xy

    cs_map = (2 * sigma_xy + c2) / (sigma_xx + sigma_yy + c2)
    ssim_map = ((2 * mu_xy + c1) / (mu_xx + mu_yy + c1)) * cs_map
    return ssim_map.mean(dim=(2, 3)), cs_map.mean(dim=(2, 3))


def ms_ssim_scales(min_side: int, window: int = 11, max_scales: int = len(MS_SSIM_WEIGHTS)) -> int:
    """Largest scale count whose coarsest level still fits the window."""
    n = 0
    side = min_side
    while n < max_scales and side >= window:
        n += 1
        side //= 2
    return n


def ms_ssim(
    x: torch.Tensor,
    y: torch.Tensor,
    *,
    value_range: tuple[float, float] = (-1.0, 1.0),
    window: int = 11,
    sigma: float = 1.5,
) -> torch.Tensor:
    """
    Multi-scale SSIM per image, averaged over channels.
    Accepts C x H x W or N x C x H x W; images are rescaled from value_range to [0, 1].
    Small images use fewer scales with renormalized weights.
    """
    if x.shape != y.shape:
        raise ValueError(f"ms_ssim needs equal shapes, got {tuple(x.shape)} and {tuple(y.shape)}")
    single = x.ndim == 3
    if single:
        x, y = x[None], y[None]
    lo, hi = value_range
    x = (x.to(torch.float64) - lo) / (hi - lo)
    y = (y.to(torch.float64) - lo) / (hi - lo)

    n_scales = ms_ssim_scales(min(x.shape[-2:]), window)
    if n_scales == 0:
        raise ValueError(f"image {tuple(x.shape[-2:])} is smaller than the {window}px SSIM window")
    weights = torch.tensor(MS_SSIM_WEIGHTS[:n_scales], dtype=torch.float64, device=x.device)
    weights = weights / weights.sum()
    kernel = gaussian(window, sigma)

    levels = []
    for i in range(n_scales):
        ssim_val, cs = _ssim_terms(x, y, kernel, data_range=1.0)
        if i < n_scales - 1:
            levels.append(torch.relu(cs))
            x = F.avg_pool2d(x, kernel_size=2)
            y = F.avg_pool2d(y, kernel_size=2)
        else:
            levels.append(torch.relu(ssim_val))
    stacked = torch.stack(levels, dim=0)  # scales x N x C
    value = torch.prod(stacked ** weights.view(-1, 1, 1), dim=0).mean(dim=1)
    return value[0] if single else value


def perceptual_distance(
    x: torch.Tensor, y: torch.Tensor, extractor: FeatureExtractor, eps: float = 1e-10
) -> torch.Tensor:
    """Channel-normalized tap activations, squared difference, spatial mean, summed over taps."""
    single = x.ndim == 3
    if single:
        x, y = x[None], y[None]
    total = torch.zeros(x.shape[0], dtype=torch.float64, device=x.device)
    with torch.no_grad():
        for fx, fy in zip(extractor.taps(x), extractor.taps(y)):
            fx = fx / (fx.norm(dim=1, keepdim=True) + eps)
            fy = fy / (fy.norm(dim=1, keepdim=True) + eps)
            total = total + ((fx - fy) ** 2).sum(dim=1).mean(dim=(1, 2)).to(torch.float64)
    return total[0] if single else total


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Symmetric square root with negative eigenvalues floored to zero."""
    eigvals, eigvecs = scipy.linalg.eigh((matrix + matrix.T) / 2.0)
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def fid(features_real: np.ndarray, features_gen: np.ndarray) -> float:
    """
    ||mu_r - mu_g||^2 + Tr(S_r + S_g - 2 (S_r S_g)^1/2), with the cross term computed as
    Tr((S_r^1/2 S_g S_r^1/2)^1/2) so singular covariances never raise.
    """
    real = np.asarray(features_real, dtype=np.float64)
    gen = np.asarray(features_gen, dtype=np.float64)
    if real.ndim == 1:
        real = real[:, None]
    if gen.ndim == 1:
        gen = gen[:, None]
    if len(real) < 2 or len(gen) < 2:
        raise ValueError("fid needs at least 2 samples per set")
    if real.shape[1] != gen.shape[1]:
        raise ValueError(f"feature dims differ: {real.shape[1]} vs {gen.shape[1]}")

    mu_r, mu_g = real.mean(axis=0), gen.mean(axis=0)
    cov_r = np.atleast_2d(np.cov(real, rowvar=False))
    cov_g = np.atleast_2d(np.cov(gen, rowvar=False))

    sqrt_r = _psd_sqrt(cov_r)
    cross = sqrt_r @ cov_g @ sqrt_r
    cross_eig = np.clip(scipy.linalg.eigvalsh((cross + cross.T) / 2.0), 0.0, None)
    value = (
        float(np.sum((mu_r - mu_g) ** 2))
        + float(np.trace(cov_r) + np.trace(cov_g))
        - 2.0 * float(np.sum(np.sqrt(cross_eig)))
    )
    return max(value, 0.0)
