"""nlns: pseudo-spectral simulator and verification harness for a
pressureless Navier-Stokes system with nonlocal attraction-repulsion forces
on a periodic torus, with monitors for every a-priori controlled functional.
"""

from .config import RunConfig, parse_config, parse_config_file
from .dynamics import (
    PRESETS,
    RegularizationParams,
    State,
    default_initial_fields,
    initial_data,
    rhs,
    run,
    step,
    suggest_dt,
)
from .errors import DensityFloorError, NlnsError, NumericalError, ValidationError
from .grid import (
    DensityField,
    Field,
    TorusGrid,
    VecField,
    convolve_periodic,
    gradient,
    laplacian,
    mollify,
    read_snapshot,
    spectral_derivative,
    write_snapshot,
)
from .kernel import (
    CutoffProfile,
    KernelSpec,
    KernelTable,
    build_cutoff,
    build_kernel_table,
    fourier_positivity_check,
    kl_lower_bound_constant,
    laplacian_of_singular_part,
    nonlocal_force,
    radial_table,
    riesz_exponent,
)

__version__ = "0.1.0"
