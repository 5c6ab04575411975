"""Discrete Aubry-Mather laboratory for conformal metrics on the flat 2-torus."""

__version__ = "0.1.0"

from .torus import (  # noqa: E402
    CohomologyClass,
    ConformalMetric,
    DiscreteLoop,
    FieldSpec,
    FourierMode,
    PeriodicBump,
    TorusGrid,
    VelocityStencil,
    build_metric,
    homology_class,
    one_form_pairing,
    sine_rows,
    two_wells,
)
from .action import lagrangian, loop_action, optimal_speed, pairing  # noqa: E402
from .critical import (  # noqa: E402
    alpha_lower_bound_from_loop,
    build_action_graph,
    critical_value,
    finsler_weights,
    has_negative_cycle,
)
from .measures import (  # noqa: E402
    assign_times,
    cycle_to_measure,
    enumerate_minimizers,
    min_mean_cycle,
    separation_test,
    support_energy_check,
)
from .aubry import aubry_set, mane_potential, peierls_barrier, static_classes  # noqa: E402
