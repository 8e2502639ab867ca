//! Limiting laws for the singular values of large noisy response matrices.

mod airy;
mod ode;
mod quadrature;
mod quarter_circle;
mod spiked;
mod tracy_widom;

pub use airy::airy_ai_asymptotic;
pub use ode::{integrate_dopri5, OdeOptions};
pub use quadrature::GaussLegendre;
pub use quarter_circle::QuarterCircleLaw;
pub use spiked::{max_singular_value_law, spiked_prediction, EdgeLaw, SpikeRegime, SpikedPrediction};
pub use tracy_widom::{tw1_table, TracyWidomTable, TW_TABLE_VERSION};
