"""Band-limited deformable image registration.

Dense 2D/3D displacement (or stationary velocity) fields are
parameterized by a small real-valued field on a centered low-frequency
window of their spectrum, decoded to full resolution by zero padding
plus an inverse DFT, and fit per image pair by Adam over that
parameterization.  Optional scaling-and-squaring exponentiation yields
diffeomorphic deformations.
"""

from .grids import (
    BandSpectrum,
    CropWindow,
    DenseField,
    GridSpec,
    LabelMap,
    LowResField,
    ScalarImage,
    make_grid,
    make_window,
)
from .spectral import (
    FullSpectrum,
    band_energy_split,
    crop_center,
    decode,
    decode_adjoint,
    dft,
    encode,
    idft,
    pad_center,
    shift_center,
    unshift_center,
)
from .deform import (
    JacobianReport,
    exp_velocity,
    exp_velocity_adjoint,
    identity_coords,
    jacobian,
    warp,
    warp_field,
    warp_gradient,
)
from .objective import LossConfig, LossParts, mse, ncc_local, smoothness, total_loss
from .optimize import AdamState, DivergenceError, OptimConfig, RegistrationReport, adam_step, register
from .metrics import MetricReport, dice, evaluate_labels, hd95, warp_labels
from .synth import SplitMix64, SynthConfig, SynthPair, make_pair
from .io import (
    NiftiFormatError,
    VolumeMeta,
    read_field,
    read_nifti,
    render_grid,
    render_slice,
    render_spectrum,
    write_field,
    write_nifti,
)

__version__ = "0.1.0"
