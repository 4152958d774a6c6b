"""Postselected continuous-variable QKD key rates under the beamsplitter attack.

The package is organized in three compute layers plus a command-line front end:

* :mod:`cvpostselect.coherent_info` -- closed-form information quantities for a
  single effective channel ``(E, x)``.
* :mod:`cvpostselect.postselect` -- the selection region, the weighted key-rate
  integral and optimization of the modulation width ``d``.
* :mod:`cvpostselect.montecarlo` -- event-level protocol simulation used to
  cross-check the quadrature results.
* :mod:`cvpostselect.cli` -- ``keyrate``, ``optimize``, ``map`` and ``simulate``.
"""

from cvpostselect.coherent_info import (
    ChannelParams,
    EffectiveChannel,
    InfoBreakdown,
    binary_entropy,
    bob_conditional_density,
    bob_info,
    breakdown,
    delta_info,
    error_prob,
    error_prob_direct,
    eve_error,
    eve_helstrom_success,
    eve_info,
    overlap,
)
from cvpostselect.postselect import (
    GridSpec,
    InfoMapGrid,
    KeyRateResult,
    boundary_x,
    density_mass,
    info_map,
    is_selected,
    joint_density,
    key_rate,
    optimize_d,
    selected_error,
)
from cvpostselect.montecarlo import (
    SessionStats,
    SignalRecord,
    error_consistency_check,
    generate_events,
    iter_records,
    rate_consistency_check,
    run_session,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelParams",
    "EffectiveChannel",
    "GridSpec",
    "InfoBreakdown",
    "InfoMapGrid",
    "KeyRateResult",
    "SessionStats",
    "SignalRecord",
    "binary_entropy",
    "bob_conditional_density",
    "bob_info",
    "boundary_x",
    "breakdown",
    "delta_info",
    "density_mass",
    "error_consistency_check",
    "error_prob",
    "error_prob_direct",
    "eve_error",
    "eve_helstrom_success",
    "eve_info",
    "generate_events",
    "info_map",
    "is_selected",
    "iter_records",
    "joint_density",
    "key_rate",
    "optimize_d",
    "overlap",
    "rate_consistency_check",
    "run_session",
    "selected_error",
]
