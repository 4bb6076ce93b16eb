from .exceptions import TrapModesException, ConfigurationError, SingularConfigurationError
from .models import (
    TrapConfig,
    IonState,
    Trajectory,
    PseudoConfig,
    NormalModeBasis,
    ModeCouplingSet,
    IntegratorSettings,
    Monodromy,
    InstabilityReport,
    DampingSchedule,
    PeriodicOrbit,
    HillSystem,
    FloquetMode,
    ExponentSpectrum,
    FLTransform,
)
