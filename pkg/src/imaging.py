"""
Time-of-Flight Imaging
Ballistic expansion, column-density images and 2D Gaussian analysis
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import constants as csts
from scipy.ndimage import gaussian_filter
from scipy.optimize import least_squares

from .errors import ImagingError
from .thermal_sampler import Ensemble

logger = logging.getLogger(__name__)

OUT_OF_FRAME_WARN_FRACTION = 0.01
MIN_NONZERO_PIXELS = 10
MIN_FRAME_RADII = 4.0
LINE_OF_SIGHT = 'y'


@dataclass(frozen=True)
class ImageSpec:
    """Camera model: image plane is (z horizontal, x vertical), line of sight y"""
    pixel_size: float = 10e-6
    width: int = 256  # axial pixels
    height: int = 128  # radial pixels
    blur_sigma: float = 0.0
    shot_noise: bool = False
    expansion_time: float = 3e-3
    focal_depth: Optional[float] = None  # Gaussian depth of field along y; None images the full column
    gravity_enabled: bool = False
    gravity_g: float = csts.g

    def __post_init__(self):
        if not self.pixel_size > 0:
            raise ValueError('pixel_size must be > 0')
        if self.width < 1 or self.height < 1:
            raise ValueError('image width and height must be >= 1 pixel')
        if not self.blur_sigma >= 0:
            raise ValueError('blur_sigma must be >= 0')
        if not self.expansion_time >= 0:
            raise ValueError('expansion_time must be >= 0')
        if self.focal_depth is not None and not self.focal_depth > 0:
            raise ValueError('focal_depth must be > 0')

    @property
    def extent(self) -> Tuple[float, float]:
        """Physical (axial, radial) size of the frame in metres"""
        return self.width * self.pixel_size, self.height * self.pixel_size


@dataclass
class CloudImage:
    """Pixel counts indexed [radial row, axial column]"""
    pixels: np.ndarray
    pixel_size: float
    expansion_time: float
    out_of_frame: int = 0
    metadata: Dict[str, object] = field(default_factory=dict)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape

    @property
    def extent(self) -> Tuple[float, float]:
        """Physical (axial, radial) size of the frame in metres"""
        height, width = self.pixels.shape
        return width * self.pixel_size, height * self.pixel_size


@dataclass
class GaussFit:
    """2D Gaussian A exp(-(z-z0)^2/r_z^2 - (x-x0)^2/r_x^2) + B, lengths in metres"""
    amplitude: float
    center: Tuple[float, float]  # (z0, x0)
    radii: Tuple[float, float]  # (r_axial, r_radial), 1/e radii
    offset: float
    residual_norm: float
    converged: bool

    @property
    def sigmas(self) -> Tuple[float, float]:
        """Standard deviations r / sqrt(2)"""
        return self.radii[0] / np.sqrt(2.0), self.radii[1] / np.sqrt(2.0)


def image_axes(spec_or_img) -> Tuple[np.ndarray, np.ndarray]:
    """Pixel-centre coordinates (z_axis, x_axis); pixel width//2 contains the origin"""
    if isinstance(spec_or_img, CloudImage):
        height, width = spec_or_img.shape
        p = spec_or_img.pixel_size
    else:
        width, height, p = spec_or_img.width, spec_or_img.height, spec_or_img.pixel_size
    z_axis = (np.arange(width) - width / 2.0 + 0.5) * p
    x_axis = (np.arange(height) - height / 2.0 + 0.5) * p
    return z_axis, x_axis


def expand(ens: Ensemble, t_exp: float, gravity_enabled: bool = False,
           gravity_g: float = csts.g) -> Ensemble:
    """
    Free flight after release: pos += vel t for alive atoms

    Gravity, when enabled, adds a -g t^2 / 2 displacement along x.
    Velocities are unchanged.
    """
    if not t_exp >= 0:
        raise ValueError('expansion time must be >= 0')
    out = ens.copy()
    if t_exp == 0:
        return out
    alive = out.alive
    out.positions[alive] += out.velocities[alive] * t_exp
    if gravity_enabled:
        out.positions[alive, 0] -= 0.5 * gravity_g * t_exp ** 2
    out.time = ens.time + t_exp
    return out


def render(ens: Ensemble, spec: ImageSpec) -> CloudImage:
    """
    Project alive atoms onto the (z, x) plane as counts per pixel

    By default every atom in frame deposits one count (column density along
    y). With a focal depth d each atom is weighted by exp(-y^2 / (2 d^2)),
    imaging only the in-focus slice. Atoms outside the frame are dropped and
    counted. Optional Gaussian blur preserves the total; optional Poisson
    noise is drawn from a stream seeded by the ensemble seed.

    Args:
        ens: Ensemble, normally already expanded
        spec: Camera settings

    Returns:
        CloudImage with float counts
    """
    pos = ens.positions[ens.alive]
    # edge k sits at (k - n/2) p, so the origin falls in pixel n // 2
    z_edges = (np.arange(spec.width + 1) - spec.width / 2.0) * spec.pixel_size
    x_edges = (np.arange(spec.height + 1) - spec.height / 2.0) * spec.pixel_size
    in_frame = (pos[:, 0] >= x_edges[0]) & (pos[:, 0] <= x_edges[-1]) & \
        (pos[:, 2] >= z_edges[0]) & (pos[:, 2] <= z_edges[-1])
    out_of_frame = int(len(pos) - np.count_nonzero(in_frame))
    pos = pos[in_frame]

    weights = None
    if spec.focal_depth is not None:
        weights = np.exp(-0.5 * (pos[:, 1] / spec.focal_depth) ** 2)
    counts, _, _ = np.histogram2d(pos[:, 0], pos[:, 2], bins=[x_edges, z_edges], weights=weights)

    n_total = len(pos) + out_of_frame
    if n_total and out_of_frame / n_total > OUT_OF_FRAME_WARN_FRACTION:
        logger.warning('%d of %d atoms (%.1f%%) fell outside the image frame',
                       out_of_frame, n_total, 100.0 * out_of_frame / n_total)

    if spec.blur_sigma > 0:
        total = counts.sum()
        counts = gaussian_filter(counts, sigma=spec.blur_sigma / spec.pixel_size, mode='constant')
        if counts.sum() > 0:
            counts *= total / counts.sum()

    if spec.shot_noise:
        rng = np.random.default_rng([ens.seed, 0x1A6E])
        counts = rng.poisson(counts).astype(float)

    return CloudImage(
        pixels=counts,
        pixel_size=spec.pixel_size,
        expansion_time=spec.expansion_time,
        out_of_frame=out_of_frame,
        metadata={
            'line_of_sight': LINE_OF_SIGHT,
            'pixel_size_m': spec.pixel_size,
            'expansion_time_s': spec.expansion_time,
            'focal_depth_m': spec.focal_depth,
            'out_of_frame': out_of_frame
        }
    )


def _moments(img: CloudImage, zz: np.ndarray, xx: np.ndarray):
    data = img.pixels
    offset = float(np.min(data))
    weights = np.clip(data - offset, 0.0, None)
    total = weights.sum()
    if total <= 0:
        return None
    z0 = float((weights * zz).sum() / total)
    x0 = float((weights * xx).sum() / total)
    var_z = float((weights * (zz - z0) ** 2).sum() / total)
    var_x = float((weights * (xx - x0) ** 2).sum() / total)
    r_z = np.sqrt(2.0 * max(var_z, 0.0)) or img.pixel_size
    r_x = np.sqrt(2.0 * max(var_x, 0.0)) or img.pixel_size
    amplitude = float(np.max(data)) - offset
    return np.array([amplitude, z0, x0, r_z, r_x, offset])


def _gauss_model(params, zz, xx):
    amplitude, z0, x0, r_z, r_x, offset = params
    return amplitude * np.exp(-((zz - z0) / r_z) ** 2 - ((xx - x0) / r_x) ** 2) + offset


def _gauss_jacobian(params, zz, xx):
    amplitude, z0, x0, r_z, r_x, _ = params
    dz = zz - z0
    dx = xx - x0
    g = np.exp(-(dz / r_z) ** 2 - (dx / r_x) ** 2)
    ag = amplitude * g
    return np.column_stack([
        g,
        ag * 2.0 * dz / r_z ** 2,
        ag * 2.0 * dx / r_x ** 2,
        ag * 2.0 * dz ** 2 / r_z ** 3,
        ag * 2.0 * dx ** 2 / r_x ** 3,
        np.ones_like(g)
    ])


def fit_gaussian(img: CloudImage, max_iterations: int = 100, xtol: float = 1e-8) -> GaussFit:
    """
    Fit a separable 2D Gaussian plus offset to the image

    Moment estimates (centroid, second moments, min as offset) seed a
    Levenberg-Marquardt least-squares run. A run that stops without meeting
    the tolerance, or ends with non-positive radii, is returned with
    converged=False; a degenerate image returns the moment estimates.

    Args:
        img: Image to analyse
        max_iterations: Iteration cap for the least-squares solver
        xtol: Relative step tolerance

    Returns:
        GaussFit in physical units

    Raises:
        ImagingError: fewer than 10 nonzero pixels
    """
    nonzero = int(np.count_nonzero(img.pixels))
    if nonzero < MIN_NONZERO_PIXELS:
        raise ImagingError(f'image has {nonzero} nonzero pixels; need at least {MIN_NONZERO_PIXELS}')

    z_axis, x_axis = image_axes(img)
    zz, xx = np.meshgrid(z_axis, x_axis)
    zz, xx, data = zz.ravel(), xx.ravel(), img.pixels.ravel().astype(float)

    p0 = _moments(img, zz.reshape(img.shape), xx.reshape(img.shape))
    if p0 is None or p0[0] <= 0:
        logger.warning('Degenerate image (no contrast); returning moment estimates')
        flat = float(np.mean(data))
        p0 = p0 if p0 is not None else np.array([0.0, 0.0, 0.0, img.pixel_size, img.pixel_size, flat])
        return GaussFit(
            amplitude=float(p0[0]), center=(float(p0[1]), float(p0[2])),
            radii=(float(p0[3]), float(p0[4])), offset=float(p0[5]),
            residual_norm=float(np.linalg.norm(data - _gauss_model(p0, zz, xx))),
            converged=False
        )

    # work in pixel units so the parameters are of comparable size
    scale = np.array([1.0, img.pixel_size, img.pixel_size, img.pixel_size, img.pixel_size, 1.0])
    zs, xs = zz / img.pixel_size, xx / img.pixel_size

    result = least_squares(
        lambda q: _gauss_model(q, zs, xs) - data,
        p0 / scale,
        jac=lambda q: _gauss_jacobian(q, zs, xs),
        method='lm',
        xtol=xtol,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=max_iterations * (len(p0) + 1)
    )
    params = result.x * scale
    params[3:5] = np.abs(params[3:5])
    converged = bool(result.status in (1, 2, 3, 4) and np.all(np.isfinite(params)) and np.all(params[3:5] > 0))
    if not converged:
        logger.warning('Gaussian fit did not converge (status %d: %s)', result.status, result.message)

    return GaussFit(
        amplitude=float(params[0]),
        center=(float(params[1]), float(params[2])),
        radii=(float(params[3]), float(params[4])),
        offset=float(params[5]),
        residual_norm=float(np.linalg.norm(result.fun)),
        converged=converged
    )


def moment_center(img: CloudImage) -> Tuple[float, float]:
    """Intensity-weighted centroid (z0, x0) above the image minimum; the origin for a flat image"""
    z_axis, x_axis = image_axes(img)
    zz, xx = np.meshgrid(z_axis, x_axis)
    p0 = _moments(img, zz, xx)
    if p0 is None:
        return 0.0, 0.0
    return float(p0[1]), float(p0[2])


def frame_covers(img: CloudImage, fit: GaussFit, n_radii: float = MIN_FRAME_RADII) -> bool:
    """True when the frame spans at least n_radii fitted 1/e radii along both image axes"""
    extent_z, extent_x = img.extent
    r_z, r_x = fit.radii
    return bool(extent_z >= n_radii * r_z and extent_x >= n_radii * r_x)


def peak_intensity(img: CloudImage, fit: GaussFit, box_halfwidth_px: int = 2) -> float:
    """
    Mean pixel value in the (2k+1)^2 box around the fitted centre

    A fit with converged=False carries no trustworthy centre, so the box is
    placed on the moment centroid instead.

    Raises:
        ImagingError: the box does not fit inside the image
    """
    if box_halfwidth_px < 0:
        raise ValueError('box_halfwidth_px must be >= 0')
    height, width = img.shape
    center = fit.center if fit.converged else moment_center(img)
    col = int(np.floor(center[0] / img.pixel_size + width / 2.0))
    row = int(np.floor(center[1] / img.pixel_size + height / 2.0))
    k = box_halfwidth_px
    if row - k < 0 or col - k < 0 or row + k >= height or col + k >= width:
        raise ImagingError(
            f'peak box of half-width {k} px around pixel ({row}, {col}) is clipped by the '
            f'{height}x{width} image; enlarge the frame'
        )
    return float(np.mean(img.pixels[row - k:row + k + 1, col - k:col + k + 1]))


def integrated_intensity(img: CloudImage) -> float:
    """Sum of all pixels; proportional to the number of surviving atoms in frame"""
    return float(img.pixels.sum())


def temperature_from_expansion(sigma1: float, t1: float, sigma2: float, t2: float,
                               mass: float, boltzmann_k: float = csts.Boltzmann) -> float:
    """
    Temperature from widths at two expansion times

    k T = m (sigma2^2 - sigma1^2) / (t2^2 - t1^2); sigma are Gaussian standard
    deviations (fitted 1/e radius divided by sqrt 2).

    Raises:
        ImagingError: t2 <= t1, t1 < 0 or sigma2 <= sigma1
    """
    if not (t2 > t1 >= 0):
        raise ImagingError(f'need t2 > t1 >= 0, got t1={t1}, t2={t2}')
    if not sigma2 > sigma1:
        raise ImagingError(f'cloud width must grow during expansion: sigma1={sigma1}, sigma2={sigma2}')
    return mass * (sigma2 ** 2 - sigma1 ** 2) / ((t2 ** 2 - t1 ** 2) * boltzmann_k)


def temperature_from_single_expansion(sigma: float, t_exp: float, omega: float, mass: float,
                                      boltzmann_k: float = csts.Boltzmann) -> float:
    """
    Temperature from one time-of-flight width, taking the in-trap harmonic width into account

    k T = m sigma^2 / (1/omega^2 + t^2)
    """
    if not (sigma > 0 and t_exp >= 0 and omega > 0):
        raise ImagingError('need sigma > 0, t_exp >= 0 and omega > 0')
    return mass * sigma ** 2 / ((1.0 / omega ** 2 + t_exp ** 2) * boltzmann_k)
