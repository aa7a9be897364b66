//! Order principles, the constant-shift squeeze, weak-form residuals and
//! exact-solution oracles.

mod oracle;
mod principles;
mod squeeze;
mod weak_form;

pub use oracle::{
    error_vs_oracle, heat_sine_oracle, p_sine_eigenvalue, separable_oracle, ExactSolution, OracleFamily,
    DEFAULT_ORACLE_RESOLUTION,
};
pub use principles::{
    comparison_check, max_principle_check, Principle, PrincipleReport, CONSISTENT_ORDER_TOLERANCE,
    ORDER_TOLERANCE,
};
pub use squeeze::{gamma_squeeze, SqueezeEntry, SqueezeReport};
pub use weak_form::{weak_form_residual, weak_form_residual_field, TestField, TimeFactor};
