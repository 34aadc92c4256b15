class LwrInferError(Exception):
    """Base exception carrying a detail message and a process exit code"""
    exit_code = 1

    def __init__(self, detail: str = "Unexpected failure"):
        super().__init__(detail)
        self.detail = detail


class ConfigurationError(LwrInferError):
    """Exception for invalid configuration or missing inputs"""
    exit_code = 2

    def __init__(self, detail: str = "Invalid configuration"):
        super().__init__(detail)


class DataError(LwrInferError):
    """Exception for malformed or physically impossible data"""
    exit_code = 3

    def __init__(self, detail: str = "Invalid data"):
        super().__init__(detail)


class EstimatorError(DataError):
    """Exception for a density estimator called outside its domain"""
    def __init__(self, detail: str = "Estimator input out of range"):
        super().__init__(detail)


class NoVehiclesError(EstimatorError):
    """Exception for an average vehicle length requested on an empty minute"""
    def __init__(self, detail: str = "No vehicles counted"):
        super().__init__(detail)


class NumericalError(LwrInferError):
    """Exception for numerical failures"""
    exit_code = 4

    def __init__(self, detail: str = "Numerical failure"):
        super().__init__(detail)


class FdDomainError(NumericalError):
    """Exception for a density outside [0, rho_j]"""
    def __init__(self, detail: str = "Density outside the fundamental diagram domain"):
        super().__init__(detail)


class NoSolutionError(NumericalError):
    """Exception for a flow above the capacity of a fundamental diagram"""
    def __init__(self, detail: str = "Flow above capacity"):
        super().__init__(detail)


class CflViolationError(NumericalError):
    """Exception for a time step violating the CFL bound"""
    def __init__(self, detail: str = "CFL condition violated"):
        super().__init__(detail)


class SolverError(NumericalError):
    """Exception for a solve that produced non-finite or out-of-range values"""
    def __init__(self, detail: str = "Solver failure"):
        super().__init__(detail)


class KlDecompositionError(NumericalError):
    """Exception for an eigensolver failure"""
    def __init__(self, detail: str = "Eigendecomposition failed"):
        super().__init__(detail)


class InitializationError(NumericalError):
    """Exception for walkers that cannot be started at finite posterior"""
    def __init__(self, detail: str = "Sampler initialization failed"):
        super().__init__(detail)
