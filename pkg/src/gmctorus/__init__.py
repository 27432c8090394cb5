"""Log-correlated Gaussian fields and multiplicative chaos on the torus."""

from .errors import InfiniteEntropy, InvalidArgument, PositivityViolation, PreconditionViolation
from .seed_covariance import SeedCovariance, standard_seed
from .torus_field import (
    FieldSpec,
    GridField,
    covariance,
    make_custom_spec,
    make_gff_spec,
    make_star_spec,
    partial_variance,
    remove_mean,
    sample_field,
)

__version__ = "0.1.0"
