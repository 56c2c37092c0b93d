//! Binary-mask geometry: connected components, outer contours, maximum
//! diameter and inter-structure distances. All distances are between pixel
//! centers and are scaled by the mask's row and column spacing.

mod components;
mod contour;
mod diameter;
mod distance;

pub use components::{connected_components, label_components, largest_component_mask, Component, PixelBox};
pub use contour::{contour_of, extract_contours, trace_outer_border, Contour};
pub use diameter::{
    convex_hull, diameter_pair, max_diameter_brute_force, max_diameter_calipers, max_diameter_mm,
    max_diameter_points, CALIPERS_MIN_POINTS,
};
pub use distance::{box_iou, closest_pair, farthest_pair, min_distance_mm, BoxXyxy};
