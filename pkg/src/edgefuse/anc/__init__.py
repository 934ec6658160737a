from .engine import (LEVELS, AncMetrics, anc_step, conditional_decode, decoder_depth, estimate_complexity,
                     fixed_route, medium_only_step)
from .model import (ACTIVE_CHANNEL, DEFAULT_BRANCHES, GATE_SLOPE, GATE_SPREAD, SMALL, AncConfig, AncConfigError, AncModel,
                    BranchEncoder, BranchSpec, BudgetGate, ComplexityEstimator, branch_flops, budget_gate, gate_flops)
from .router import ROUTE_THRESHOLD, BranchOutput, RoutingDecision, RoutingError, branch_forward, gumbel_route
