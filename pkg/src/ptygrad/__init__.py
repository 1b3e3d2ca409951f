"""Gradient-based reconstruction for computational imaging.

Recovers complex objects from Fourier-ptychography, single-pixel, and
structured-illumination measurements by modeling the forward imaging process
explicitly and minimizing a measurement-mismatch loss with first-order
optimizers.
"""

from .engine import ReconConfig, RunMetrics, benchmark_sweep, relative_error, run_reconstruction
from .errors import (
    ConfigError,
    DimensionError,
    DomainError,
    OutOfBandError,
    PtygradError,
    ReconstructionError,
)
from .fields import (
    OpticsConfig,
    circular_convolve,
    crop_subspectrum,
    decimate,
    dft2,
    embed_subspectrum,
    idft2,
    make_ctf,
    make_ctf_n,
    make_psf_n,
    zero_upsample,
)
from .gradients import (
    LossSpec,
    finite_diff_check,
    grad_fp_exitwave,
    grad_fp_intensity,
    grad_sim,
    grad_spi,
    loss_exitwave,
    loss_intensity,
)
from .models import (
    FpObject,
    FpSpectrumObject,
    SimScene,
    fmp_project,
    fp_exitwave_forward,
    fp_intensity_forward,
    sim_forward,
    spi_forward,
)
from .optim import BatchSchedule, OptimizerConfig, OptState, batches, step, update_count
from .simdata import (
    Dataset,
    NoiseModel,
    SimDataset,
    SpiDataset,
    gen_illumination_grid,
    gen_sim_patterns,
    gen_spi_patterns,
    generate_dataset,
    led_wavevectors,
    synth_object,
)

__version__ = "0.1.0"
