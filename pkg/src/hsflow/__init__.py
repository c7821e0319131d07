"""Numerical laboratory for the hypersymplectic flow on the flat 4-torus."""
from .errors import (ConfigError, DegenerateMetric, DomainCollapse, DomainError, HSFlowError,
                     InsufficientData, NonFiniteInput, NonIntegrableAlpha, NotHypersymplectic,
                     OutOfOrder, SingularBase, StabilityLoss)
from .flow import FlowState, StepControl, advance, step
from .torus import Grid

__version__ = "0.1.0"
