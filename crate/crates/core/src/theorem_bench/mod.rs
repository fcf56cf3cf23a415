//! Numerical checks of local limit, local large deviation, capped-increment
//! tail and renewal statements, with machine-readable reports.

mod fuknagaev;
mod local;
mod renewal;
mod report;

pub use fuknagaev::{check_fuknagaev, TailBoundSettings, TailMethod, TailPoint};
pub use local::{bound_domination, check_lld, check_llt, LldMode, LldSettings};
pub use renewal::{
    check_away, check_srt, transversal_exponent, AwaySettings, AwayTheorem, GreenMethod, SrtRegime,
    SrtSettings,
};
pub use report::*;
