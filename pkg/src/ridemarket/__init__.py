"""Dispatch optimization engine for two-sided ride-sharing markets."""

from .estimation import (CostModel, GeoPoint, Leg, haversine_km, leg_estimate,
                         surge_price)
from .market import (DRIVER_PROFIT, SOCIAL_WELFARE, Driver, InfeasibleScheduleError,
                     Instance, MarketOutcome, Schedule, Task, Violation,
                     build_outcome, instance_from_lines, instance_to_lines,
                     load_instance, path_profit, save_instance,
                     schedule_timeline, task_leg, validate_outcome)
from .taskmap import (MarketGraph, TaskMap, best_path, build_task_map, can_serve,
                      max_tasks_on_path, pair_arc, path_value, source_arc,
                      to_dot, topo_order)
from .greedy import (GreedyIteration, GreedyTrace, greedy_assign,
                     instance_diameter, make_tightness_instance)
from .online import (MAX_MARGIN, NEAREST, DispatchDecision, DriverState,
                     candidate_set, marginal_value, pick_max_margin,
                     pick_nearest, simulate)
from .simplex import (DenseSimplex, PivotLimitError, SimplexError,
                      UnboundedError, simplex_solve)
from .bounds import (BudgetExceededError, ExactSolution, LpNotConvergedError,
                     LpSolution, arc_lp_bound, brute_force_opt, lp_bound,
                     lp_pricing_gap)
from .ingest import (BoundingBox, DropReport, GeneratorConfig, TripRecord,
                     drivers_from_taxi_ids, gen_drivers, gen_tasks, parse_porto,
                     trip_histograms, trips_to_tasks)
from .metrics import MarketMetrics, compute_metrics
from .experiment import (ExperimentConfig, RunReport, build_cell_instance,
                         parse_config, run_experiment)

__version__ = "0.1.0"
