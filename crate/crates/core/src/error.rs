use thiserror::Error;

/// Errors produced by the solvers, field operations and parsers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OalError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("force balance is singular at w = ({w1:.6}, {w2:.6}) (condition number {condition:.3e})")]
    SingularBalance { w1: f64, w2: f64, condition: f64 },

    #[error("force balance did not converge at w = ({w1:.6}, {w2:.6}) after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        w1: f64,
        w2: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("lateral field is not conservative enough: residual fraction {rho:.4} exceeds {limit}")]
    NonConservativeField { rho: f64, limit: f64 },

    #[error("direction graph contains a directed cycle")]
    CycleDetected,

    #[error("path vertex ({w1:.6}, {w2:.6}) lies outside the lattice domain")]
    PathOutsideDomain { w1: f64, w2: f64 },

    #[error("degenerate ellipse fit: {0}")]
    DegenerateFit(String),

    #[error("joint {joint} reaches {angle:.6} rad at sample {sample}, beyond the joint limit")]
    JointLimitExceeded { sample: usize, joint: usize, angle: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

impl OalError {
    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            OalError::SingularBalance { .. }
                | OalError::NoConvergence { .. }
                | OalError::DegenerateFit(_)
                | OalError::GridMismatch(_)
        )
    }

    /// True when a modelling constraint was violated.
    pub fn is_constraint(&self) -> bool {
        matches!(
            self,
            OalError::NonConservativeField { .. }
                | OalError::CycleDetected
                | OalError::JointLimitExceeded { .. }
                | OalError::PathOutsideDomain { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, OalError>;
