"""Exception types shared across the package."""


class GridImpactError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(GridImpactError):
    """Input document violates the expected schema (missing/unknown/mistyped field,
    duplicate id, dangling reference)."""


class TopologyError(GridImpactError):
    """Network fails a structural precondition (not connected, not radial)."""


class SolverError(GridImpactError):
    """A required power-flow solve did not converge."""


class VoltageCollapseError(GridImpactError):
    """Sweep iteration drove a bus voltage below the collapse floor (0.5 pu)."""

    def __init__(self, bus_id: str, v_mag_pu: float):
        self.bus_id = bus_id
        self.v_mag_pu = v_mag_pu
        super().__init__(f"voltage collapse at bus {bus_id}: |V| = {v_mag_pu:.4f} pu < 0.5 pu")
