//! Closed-form hyperbolic geometry formulas.
//!
//! A boundary collar of width `d` around a geodesic boundary surface of
//! area `A` has volume `(A/4)(2d + sinh 2d)`, and its *modified volume*
//! `(A/4)(1 + cosh 2d)` is half the derivative of the volume with respect
//! to the width. Cusp neighbourhoods are measured directly by their
//! volume. The three `*_partner_*` / `*_given_*` functions express how one
//! component's size determines the other's while the pair stays tangent.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("genus must be at least 2, got {0}")]
    GenusTooSmall(u32),
    #[error("area must be positive, got {0}")]
    NonPositiveArea(f64),
    #[error("width must be non-negative, got {0}")]
    NegativeWidth(f64),
    #[error("volume must be non-negative, got {0}")]
    NegativeVolume(f64),
    #[error("constant must be positive, got {0}")]
    NonPositiveConstant(f64),
    #[error("width {width} must lie strictly inside (0, {limit})")]
    WidthOutOfRange { width: f64, limit: f64 },
}

/// Area of a closed orientable genus-`g` surface with a hyperbolic
/// structure: `4π(g − 1)`. Requires `g ≥ 2`.
pub fn boundary_area_from_genus(genus: u32) -> Result<f64, GeometryError> {
    if genus < 2 {
        return Err(GeometryError::GenusTooSmall(genus));
    }
    Ok(4.0 * PI * f64::from(genus - 1))
}

/// Volume of the width-`d` collar of a boundary surface of the given area:
/// `(area/4)(2d + sinh 2d)`. Strictly increasing and strictly convex in `d`.
pub fn collar_volume(area: f64, width: f64) -> Result<f64, GeometryError> {
    check_collar_args(area, width)?;
    Ok(area / 4.0 * (2.0 * width + (2.0 * width).sinh()))
}

/// Modified volume of a collar: `(area/4)(1 + cosh 2d)`.
///
/// Equals half the derivative of [`collar_volume`] with respect to the
/// width, and is the quantity entering the three-component triangle test.
pub fn collar_modified_volume(area: f64, width: f64) -> Result<f64, GeometryError> {
    check_collar_args(area, width)?;
    Ok(area / 4.0 * (1.0 + (2.0 * width).cosh()))
}

/// Inverse of [`collar_volume`] in `d`: the unique width whose collar has
/// the requested volume. There is no closed form; a bracketed
/// Newton/bisection hybrid drives the residual below `1e-12·max(1, v)`.
pub fn collar_width_from_volume(area: f64, volume: f64) -> Result<f64, GeometryError> {
    if !(area > 0.0) {
        return Err(GeometryError::NonPositiveArea(area));
    }
    if !(volume >= 0.0) {
        return Err(GeometryError::NegativeVolume(volume));
    }
    if volume == 0.0 {
        return Ok(0.0);
    }

    let f = |d: f64| area / 4.0 * (2.0 * d + (2.0 * d).sinh());
    // f(d) ≥ area·d, and for large d grows like (area/8)e^{2d}; this seed
    // brackets generously and is expanded geometrically if it does not.
    let mut hi = f64::max(1.0, (1.0 + 4.0 * volume / area).ln());
    while f(hi) < volume {
        hi *= 2.0;
    }
    let mut lo = 0.0_f64;
    let mut d = hi.min(volume / area);
    let tol = 1e-12 * f64::max(1.0, volume);
    for _ in 0..200 {
        let res = f(d) - volume;
        if res.abs() <= tol {
            return Ok(d);
        }
        if res > 0.0 {
            hi = d;
        } else {
            lo = d;
        }
        let slope = area / 2.0 * (1.0 + (2.0 * d).cosh());
        let newton = d - res / slope;
        d = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(d)
}

/// Area of a cusp torus relative to a boundary surface: the covolume of
/// the horizontal lattice divided by the squared radius of the largest
/// half-sphere over that surface. Invariant under rescaling the cover.
pub fn relative_torus_area(lattice_covolume: f64, radius: f64) -> Result<f64, GeometryError> {
    if !(lattice_covolume > 0.0) {
        return Err(GeometryError::NonPositiveConstant(lattice_covolume));
    }
    if !(radius > 0.0) {
        return Err(GeometryError::NonPositiveConstant(radius));
    }
    Ok(lattice_covolume / (radius * radius))
}

/// Volume of the cusp tangent to a cusp of volume `v` when the product of
/// the two volumes is pinned at `max_product`.
pub fn cusp_partner_volume(max_product: f64, volume: f64) -> Result<f64, GeometryError> {
    if !(max_product > 0.0) {
        return Err(GeometryError::NonPositiveConstant(max_product));
    }
    if !(volume > 0.0) {
        return Err(GeometryError::NegativeVolume(volume));
    }
    Ok(max_product / volume)
}

/// Volume of a cusp tangent to a collar of width `d`, where
/// `relative_area` is the cusp torus area relative to the collar's
/// boundary surface: `(relative_area/2)·e^{−2d}`.
pub fn cusp_volume_given_collar(relative_area: f64, width: f64) -> Result<f64, GeometryError> {
    if !(relative_area > 0.0) {
        return Err(GeometryError::NonPositiveConstant(relative_area));
    }
    if !(width >= 0.0) {
        return Err(GeometryError::NegativeWidth(width));
    }
    Ok(relative_area / 2.0 * (-2.0 * width).exp())
}

/// Width of the collar tangent to a collar of width `d` when the sum of
/// the two widths is pinned at `max_sum`.
pub fn collar_partner_width(max_sum: f64, width: f64) -> Result<f64, GeometryError> {
    if !(max_sum > 0.0) {
        return Err(GeometryError::NonPositiveConstant(max_sum));
    }
    if !(width > 0.0 && width < max_sum) {
        return Err(GeometryError::WidthOutOfRange {
            width,
            limit: max_sum,
        });
    }
    Ok(max_sum - width)
}

/// A collar with a fixed boundary area and width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollarShape {
    area: f64,
    width: f64,
}

impl CollarShape {
    pub fn new(area: f64, width: f64) -> Result<Self, GeometryError> {
        if !(area > 0.0) {
            return Err(GeometryError::NonPositiveArea(area));
        }
        if !(width > 0.0) {
            return Err(GeometryError::NegativeWidth(width));
        }
        Ok(Self { area, width })
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn volume(&self) -> f64 {
        collar_volume(self.area, self.width).expect("validated on construction")
    }

    pub fn modified_volume(&self) -> f64 {
        collar_modified_volume(self.area, self.width).expect("validated on construction")
    }
}

fn check_collar_args(area: f64, width: f64) -> Result<(), GeometryError> {
    if !(area > 0.0) {
        return Err(GeometryError::NonPositiveArea(area));
    }
    if !(width >= 0.0) {
        return Err(GeometryError::NegativeWidth(width));
    }
    Ok(())
}
