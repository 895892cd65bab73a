//! Fixtures shared by the benchmarks.

use vifem::{build_space, BoxBounds, Case, FeSpace, RunSettings, TauRule};

/// Space of the smooth stationary case on `cells`² cells.
pub fn smooth_space(cells: usize, p: usize) -> FeSpace {
    build_space(&Case::StationarySmooth.mesh(cells).expect("mesh"), p).expect("space")
}

/// Box of the smooth stationary case.
pub fn smooth_bounds() -> BoxBounds {
    Case::StationarySmooth.bounds(0.0).and_then(|b| b.at(0.0)).expect("bounds")
}

/// First-order thin-film run with a fixed step, the setting of the
/// singular lubrication case.
pub fn thin_film_settings() -> RunSettings {
    RunSettings { p: 1, k: 1, tol_relax: Some(1e-15), tau: TauRule::Fixed(1e-3), ..RunSettings::default() }
}
