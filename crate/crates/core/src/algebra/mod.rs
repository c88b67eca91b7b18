//! Exact generation of the expansion coefficients and term tables.

pub mod coeffs;
pub mod poly;
pub mod series;
pub mod terms;

pub use coeffs::{d_table, w_coefficient, w_lower_limit, DTable};
pub use poly::MomentPolynomial;
pub use series::BivariateSeries;
pub use terms::{expansion_terms, general_at_alpha1, simplified_terms, ExpansionTermTable, NumericTerm, Term};

/// Whether the tables are built for alpha != 1 or for alpha = 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlphaCase {
    General,
    Alpha1,
}
