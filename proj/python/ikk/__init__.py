"""Implicit kinematic kernel: a 0-100 control signal from the self-motion of a redundant arm.

Typical pipeline::

    session = ikk.synthesize_calibration(seed=42)
    bases = ikk.identify_session(session)
    volume = ikk.build_volume(bases)
    q = ikk.nominal_configuration(ikk.ArmModel.default_arm())
    ikk.control_signal(volume, q, hand_position)
"""

from ._core import (
    ArmModel,
    CalibrationSession,
    ConstructionError,
    ContractViolation,
    Error,
    FitFailure,
    InsufficientData,
    InterpolatedBasis,
    InterpolationVolume,
    PrincipalBasis,
    SignalBasis,
    UnreachableTarget,
    ValidationError,
    build_volume,
    control_signal,
    fit_learning_curve,
    forward_kinematics,
    generate_profile,
    identify_session,
    interpolate_basis,
    jacobian,
    load_bases,
    load_session,
    load_volume,
    nominal_configuration,
    null_space_basis,
    pca,
    report,
    rmse,
    run_experiment1,
    run_experiment2,
    save_bases,
    sibson_weights,
    synthesize_calibration,
)

__version__ = "0.1.0"
