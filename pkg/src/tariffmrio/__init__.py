"""Tariff shocks in a multiregional input-output model with Armington trade shares."""
from .armington import ArmingtonParams, DeliveredPriceTensor, calibrate, update_shares
from .data_io import (
    WorldDataError,
    WorldDataset,
    WorldFileError,
    demo_fixture,
    generate_fixture,
    load_world,
    validate_world,
    world_hash,
    write_world,
)
from .employment import EmploymentReport, EmploymentSatellite, employment_delta, top_k
from .equilibrium import (
    DeltaReport,
    Economy,
    EquilibriumState,
    SolverConfig,
    diff_states,
    solve_baseline,
    solve_scenario,
)
from .mrio import (
    BlockMatrix,
    DemandVector,
    MRIOError,
    SolverError,
    WorldDims,
    build_coefficients,
    compute_trade_flows,
    normalize_allocation,
    solve_production,
)
from .prices import propagate_prices, tariff_cost_shock
from .scenarios import Scenario, ScenarioError, TariffEntry, TariffTensor, parse_scenario

__version__ = "0.1.0"
