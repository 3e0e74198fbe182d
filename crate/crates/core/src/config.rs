use crate::error::{Error, Result};

/// Numerical tolerances shared by every analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceConfig {
    /// Relative floor: a Hermitian matrix C is PSD iff λ_min ≥ −eig_floor·(1+‖C‖).
    pub eig_floor: f64,
    /// Relative singular-value threshold for numerical rank.
    pub rank_tol: f64,
    /// Points of the uniform s-grid, t = s/(1−s).
    pub grid_points: usize,
    pub refine_depth: usize,
    /// Absolute tolerance in t for bisection.
    pub bisect_tol: f64,
    /// Largest t reached by the grid.
    pub t_cap: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            eig_floor: 1e-9,
            rank_tol: 1e-8,
            grid_points: 64,
            refine_depth: 4,
            bisect_tol: 1e-7,
            t_cap: 1e6,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eig_floor", self.eig_floor),
            ("rank_tol", self.rank_tol),
            ("bisect_tol", self.bisect_tol),
            ("t_cap", self.t_cap),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::OutOfRange(format!("{name} must be positive, got {v}")));
            }
        }
        if self.grid_points < 16 {
            return Err(Error::OutOfRange(format!(
                "grid_points must be at least 16, got {}",
                self.grid_points
            )));
        }
        if self.refine_depth == 0 {
            return Err(Error::OutOfRange("refine_depth must be positive".into()));
        }
        Ok(())
    }

    /// Tolerance used for structural identities (unitality, idempotency, reconstruction).
    pub fn identity_tol(&self) -> f64 {
        (self.rank_tol * 10.0).max(1e-9)
    }
}
