"""Fisher information geometry, estimation and classification for non-centered mixtures of scaled Gaussians."""
from .divergence import barycenter, gaussian_barycenter, gaussian_kl, gaussian_sym_kl, kl, sym_kl
from .errors import (ConvergenceError, DatasetError, DegenerateDataError, DimensionError,
                     InvalidPointError, NCMSGError, NotTangentError, StallError, StepTooLargeError)
from .estimators import fit_ncmsg, gaussian_estimates, tyler_fixed_location, tyler_joint
from .manifold import (AmbientVector, ParameterPoint, TangentVector, connection, egrad_to_rgrad,
                       fim_inner, fim_norm, max_step, project, retract)
from .model import (BatchDataset, Penalty, RegularizationSpec, nll, nll_egrad, reg_egrad, reg_value,
                    regularized_nll, regularized_nll_egrad)
from .optim import OptimizerConfig, OptimizerReport, product_baseline_minimize, rgd_minimize

__version__ = "0.1.0"
