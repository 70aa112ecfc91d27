from .gains import GainReport, check_gain_stability, routh_hurwitz
from .error_dynamics import ErrorSystem, ErrorTrajectory, error_eigenvalues, error_matrix, simulate_error_dynamics
from .audit import SafetyMonitor, audit_safety
from .closed_loop import SimConfig, TrajectoryLog, simulate_nonlinear
