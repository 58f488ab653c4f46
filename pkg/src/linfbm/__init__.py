"""Simulation and verification of X_t = B^H_t + int_0^t X_u dmu(u) driven by fBm, 1/2 < H < 1.

Modules:

* :mod:`linfbm.fbm` -- covariance, kernel and exact path synthesis,
* :mod:`linfbm.measure` -- drift measures, M(t) and solution classification,
* :mod:`linfbm.young` -- pathwise integrals and Wiener second moments,
* :mod:`linfbm.solver` -- explicit, family and direct solutions and residuals,
* :mod:`linfbm.inversion` -- time inversion, Bessel-type and reflected equations,
* :mod:`linfbm.verify` -- Monte Carlo ensembles and statistical tests,
* :mod:`linfbm.cli` -- the ``linfbm`` command.
"""

from .errors import (
    AccuracyError,
    DomainError,
    LinFBMError,
    MeasureOverflowError,
    NumericalError,
    RefusalError,
    SingularityError,
    StabilityError,
    UsageError,
)
from .fbm import (
    HurstParam,
    covariance,
    covariance_via_kernel,
    cov_matrix,
    kernel_phi,
    sample_fbm,
    sample_fbm_ensemble,
)
from .grid import SamplePath, TimeGrid
from .inversion import (
    build_beta,
    check_inversion_identity,
    estimate_limit_Y,
    fbm_inversion_drift_check,
    invert_path,
    skorokhod_reflect,
    solve_bessel_implicit,
    solve_Ek_via_inversion,
    solve_El_via_inversion,
)
from .measure import (
    DriftMeasure,
    big_m,
    classify_solutions,
    integrability_l_exponent,
    power_law,
    tail_mass,
    zero_measure,
)
from .solver import (
    direct_solve,
    explicit_x0,
    explicit_x1,
    family_member,
    flow_relation_check,
    residual,
    time_reversal_psi,
    variance_at_zero,
)
from .verify import (
    Ensemble,
    TestReport,
    check_fbm_law,
    check_growth_law,
    check_moment_bound,
    estimate_covariance,
    run_suite,
)
from .young import IntegrandOnGrid, integrate_against, tail_integral, wiener_second_moment

__version__ = "0.1.0"
