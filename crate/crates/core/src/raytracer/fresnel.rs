//! Perpendicular-polarization Fresnel reflection for lossy dielectrics.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::scene::Material;

/// F/m
pub const VACUUM_PERMITTIVITY: f64 = 8.8541878128e-12;

/// Complex relative permittivity `εr - jσ/(2πfε0)`.
pub fn complex_permittivity(material: &Material, frequency: f64) -> Complex64 {
    Complex64::new(
        material.relative_permittivity,
        -material.conductivity / (2.0 * PI * frequency * VACUUM_PERMITTIVITY),
    )
}

/// Reflection coefficient for a wave arriving from vacuum with the given
/// cosine of the incidence angle (measured from the surface normal).
///
/// The principal square root keeps `Re √(η - sin²θ) ≥ 0`, which bounds
/// `|r| ≤ 1` for any passive material.
pub fn fresnel_coefficient(cos_incidence: f64, material: &Material, frequency: f64) -> Complex64 {
    let cos_i = cos_incidence.clamp(0.0, 1.0);
    // η - sin²θ written as (η - 1) + cos²θ to keep precision near grazing
    let root = (complex_permittivity(material, frequency) - 1.0 + cos_i * cos_i).sqrt();
    (cos_i - root) / (cos_i + root)
}
