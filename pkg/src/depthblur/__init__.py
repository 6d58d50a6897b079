"""Depth-aware parallax camera-motion blur: synthesis and neural deblurring.

The forward model quantizes a depth map into equal-blur bands, builds one
empirical motion kernel per band, and blends the per-band convolutions
with normalized alpha mattes. A pixel-wise per-depth-kernel baseline
serves as the accuracy/memory reference. The inverse path fits a
sine-activated coordinate MLP through the frozen forward model to recover
a sharp image from a single blurred observation.
"""

__version__ = "0.1.0"

from .blur import (BlurConfig, Image, build_compositing, convolve, icb_forward,
                   pwb_forward, synthesize)
from .geometry import (CameraIntrinsics, DepthSequence, Pose, Trajectory,
                       axis_max_displacements, blur_extent, blur_variation,
                       depth_band_edge, depth_sequence_1d, depth_sequence_2d,
                       displacement_for_variation, inplane_translations,
                       pan_tilt_angles, resample_trajectory)
from .kernels import (BlurKernel, DisplacementSet, PixelwiseKernelField,
                      add_kernels, compose_kernels, epdf_kernel, identity_kernel,
                      kernels_at_depths, layer_kernels, pixel_displacements,
                      rotation_kernel)
from .layering import (DepthMap, LayerDecomposition, alpha_mattes, assign_regions,
                       decompose, extend_region, optimal_layer_depths, z_buffers)
from .metrics import psnr, ssim
from .neural import (CompositeBlurOperator, FitConfig, FitDivergenceError,
                     IdentityOperator, PixelwiseBlurOperator, SirenNetwork,
                     cosine_lr, fit, fit_loss, fit_operator, init_network,
                     load_network, render, save_network, siren_forward)
from .scenes import SceneFixture, gen_scene, linear_trajectory, shake_trajectory

__all__ = [name for name in dir() if not name.startswith("_")]
