"""Dense optical-flow reconstruction from sparse samples by anisotropic
edge-enhancing diffusion inpainting, with an explicit coarse-to-fine solver,
evaluation metrics, calibration, and flow-format I/O."""

from .calibrate import CalibrationResult, GridSpec, calibrate, grid_points
from .errors import (ConfigError, ConvergenceError, CorruptFileError,
                     FlowIOError, FormatError, MetricError, NxflowError,
                     PyramidError)
from .fields import (PyramidLevel, avg_pool2, build_pyramid, mask_density,
                     max_pool2, sparse_avg_pool2, upsample_bilinear)
from .flowio import (flow_to_color, read_flo, read_image, read_kitti_png,
                     read_mask_png, read_zfield, write_flo, write_image,
                     write_kitti_png, write_mask_png, write_zfield)
from .metrics import (EvalReport, density_sweep, epe, fl_rate, genmask,
                      genmask_subset, reports_to_csv)
from .pipeline import (InpaintResult, PipelineConfig, inpaint,
                       inpaint_homogeneous)
from .selfcheck import run_selfcheck
from .solver import (DiffusionStencil, SolveResult, SolverConfig,
                     adjoint_kernel, divergence_decomposed, divergence_stencil,
                     explicit_step, fsi_cycle, fsi_gamma, solve_level)
from .tensors import (DiffusivityParams, EigenPair, StructureTensorField,
                      TensorField, eed_tensor, eigen2x2, gaussian_smooth,
                      perona_malik, structure_tensor, zfield_to_tensor)

__version__ = "0.1.0"
