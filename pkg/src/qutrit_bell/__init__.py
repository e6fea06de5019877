"""Simulation and analysis of a CGLMP Bell test with energy-time entangled qutrits."""
from .analysis import (
    BellReport,
    FitResult,
    FringeData,
    HistogramSpec,
    analyze,
    build_histogram,
    compute_report,
    count_coincidences,
    fit_fringe,
    verify_satellite_rate,
)
from .belltest import (
    I3_MAX,
    BellSettings,
    BellValue,
    critical_lambda,
    evaluate_I3,
    lambda_scaling,
    optimal_settings,
    propagate_lambda_error,
    violation_sigma,
    visibility_from_lambda,
)
from .montecarlo import SimConfig, TimeTagStream, scan_schedule, simulate_run
from .optics import (
    CouplerRatios,
    central_coincidence_prob,
    fringe_prob,
    path_amplitudes,
    peak_structure,
    satellite_fringe_prob,
)
from .quantum_core import (
    JointOutcomeTable,
    PhaseVector,
    QutritPairState,
    WernerState,
    born_rule_oracle,
    make_max_entangled,
    werner_probability,
)

__version__ = "0.1.0"
