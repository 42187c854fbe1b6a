use std::f64::consts::{PI, SQRT_2};

use super::region::NucleusRegion;
use super::{LabelMask, Result};

/// Shape descriptors of one nucleus, in pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorphologicalFeatures {
    pub area_px: f64,
    pub perimeter_px: f64,
    pub equivalent_diameter: f64,
    pub major_axis_len: f64,
    pub minor_axis_len: f64,
    pub eccentricity: f64,
    pub solidity: f64,
    pub extent: f64,
    pub circularity: f64,
    pub aspect_ratio: f64,
}

impl MorphologicalFeatures {
    pub fn to_array(&self) -> [f64; 10] {
        [
            self.area_px,
            self.perimeter_px,
            self.equivalent_diameter,
            self.major_axis_len,
            self.minor_axis_len,
            self.eccentricity,
            self.solidity,
            self.extent,
            self.circularity,
            self.aspect_ratio,
        ]
    }
}

pub fn morphological_features(mask: &LabelMask, nucleus_id: u32) -> Result<MorphologicalFeatures> {
    let region = NucleusRegion::from_mask(mask, nucleus_id)?;
    Ok(from_region(&region))
}

pub(crate) fn from_region(region: &NucleusRegion) -> MorphologicalFeatures {
    let area = region.area() as f64;
    let perimeter = boundary_chain_length(region);
    let (major, minor) = ellipse_axes(region);
    let hull = convex_hull_area(region);
    let bbox = (region.bbox_width() * region.bbox_height()) as f64;
    let circularity = if perimeter > 0.0 {
        4.0 * PI * area / (perimeter * perimeter)
    } else {
        // A lone pixel has no traced boundary.
        1.0
    };
    MorphologicalFeatures {
        area_px: area,
        perimeter_px: perimeter,
        equivalent_diameter: (4.0 * area / PI).sqrt(),
        major_axis_len: major,
        minor_axis_len: minor,
        eccentricity: (1.0 - (minor / major).powi(2)).max(0.0).sqrt(),
        solidity: (area / hull).min(1.0),
        extent: area / bbox,
        circularity,
        aspect_ratio: major / minor,
    }
}

// Clockwise in image coordinates (y grows downward), starting east.
const DIRS: [(isize, isize); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

fn dir_index(dx: isize, dy: isize) -> usize {
    DIRS.iter().position(|&d| d == (dx, dy)).expect("unit step")
}

/// Moore-neighbour trace of the outer boundary of the component holding the
/// first raster pixel. Axial steps count 1, diagonal steps √2.
fn boundary_chain_length(region: &NucleusRegion) -> f64 {
    let start = (region.pixels[0].0 as isize, region.pixels[0].1 as isize);
    // The raster-first pixel has nothing inside to its west.
    let mut back = 4usize;
    let mut cur = start;
    let mut first_move: Option<usize> = None;
    let mut length = 0.0;
    // Each boundary pixel is entered at most 4 times.
    let limit = 8 * region.area() + 8;
    for _ in 0..limit {
        let mut step = None;
        for i in 1..=8 {
            let d = (back + i) % 8;
            let n = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
            if region.contains(n.0, n.1) {
                step = Some((d, n));
                break;
            }
        }
        let Some((d, next)) = step else {
            return 0.0;
        };
        if cur == start {
            match first_move {
                Some(f) if f == d => break,
                None => first_move = Some(d),
                _ => {}
            }
        }
        length += if d % 2 == 1 { SQRT_2 } else { 1.0 };
        let prev = DIRS[(d + 7) % 8];
        back = dir_index(prev.0 - DIRS[d].0, prev.1 - DIRS[d].1);
        cur = next;
    }
    length
}

/// Major and minor axis lengths of the moment-equivalent ellipse, floored at 1.
fn ellipse_axes(region: &NucleusRegion) -> (f64, f64) {
    let n = region.area() as f64;
    let (sx, sy) = region
        .pixels
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x as f64, b + y as f64));
    let (cx, cy) = (sx / n, sy / n);
    let (mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0);
    for &(x, y) in &region.pixels {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        mxx += dx * dx;
        myy += dy * dy;
        mxy += dx * dy;
    }
    mxx /= n;
    myy /= n;
    mxy /= n;
    let half_trace = 0.5 * (mxx + myy);
    let disc = (0.25 * (mxx - myy).powi(2) + mxy * mxy).sqrt();
    let l1 = (half_trace + disc).max(0.0);
    let l2 = (half_trace - disc).max(0.0);
    let major = (4.0 * l1.sqrt()).max(1.0);
    let minor = (4.0 * l2.sqrt()).max(1.0).min(major);
    (major, minor)
}

/// Area of the convex hull of the corner points of all boundary pixels.
fn convex_hull_area(region: &NucleusRegion) -> f64 {
    let mut points: Vec<(i64, i64)> = Vec::new();
    for &(x, y) in &region.pixels {
        let (xi, yi) = (x as isize, y as isize);
        let interior = region.contains(xi - 1, yi)
            && region.contains(xi + 1, yi)
            && region.contains(xi, yi - 1)
            && region.contains(xi, yi + 1);
        if !interior {
            let (x, y) = (x as i64, y as i64);
            points.extend_from_slice(&[(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)]);
        }
    }
    let hull = monotone_chain(points);
    let mut twice = 0i64;
    for i in 0..hull.len() {
        let (x0, y0) = hull[i];
        let (x1, y1) = hull[(i + 1) % hull.len()];
        twice += x0 * y1 - x1 * y0;
    }
    twice.abs() as f64 / 2.0
}

fn monotone_chain(mut points: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    points.sort_unstable();
    points.dedup();
    if points.len() < 3 {
        return points;
    }
    fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    }
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &points {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in points.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(width: usize, height: usize, inside: impl Fn(usize, usize) -> bool) -> LabelMask {
        let labels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| u32::from(inside(x, y)))
            .collect();
        LabelMask::new(width, height, labels).unwrap()
    }

    #[test]
    fn single_pixel() {
        let m = mask_from(5, 5, |x, y| x == 2 && y == 2);
        let f = morphological_features(&m, 1).unwrap();
        assert_eq!(f.area_px, 1.0);
        assert_eq!(f.extent, 1.0);
        assert_eq!(f.solidity, 1.0);
        assert_eq!(f.major_axis_len, 1.0);
        assert_eq!(f.minor_axis_len, 1.0);
        assert_eq!(f.eccentricity, 0.0);
        assert!(f.to_array().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn filled_square() {
        let m = mask_from(20, 20, |x, y| (5..15).contains(&x) && (3..13).contains(&y));
        let f = morphological_features(&m, 1).unwrap();
        assert_eq!(f.area_px, 100.0);
        assert_eq!(f.extent, 1.0);
        assert_eq!(f.solidity, 1.0);
        assert!((f.aspect_ratio - 1.0).abs() < 1e-9);
        // Boundary pixel centres form a 9x9 square loop.
        assert!((f.perimeter_px - 36.0).abs() < 1e-12);
    }

    #[test]
    fn rasterized_disk() {
        let r = 20.0f64;
        let m = mask_from(60, 60, |x, y| {
            let dx = x as f64 - 30.0;
            let dy = y as f64 - 30.0;
            dx * dx + dy * dy <= r * r
        });
        let f = morphological_features(&m, 1).unwrap();
        // Analytic disk: area πr², circularity 1, eccentricity 0.
        assert!((f.area_px - PI * r * r).abs() / (PI * r * r) < 0.02);
        assert!((0.85..=1.1).contains(&f.circularity), "{}", f.circularity);
        assert!(f.eccentricity < 0.15, "{}", f.eccentricity);
        assert!(f.solidity > 0.9 && f.solidity <= 1.0);
    }

    #[test]
    fn horizontal_line() {
        let m = mask_from(12, 3, |x, y| y == 1 && (1..9).contains(&x));
        let f = morphological_features(&m, 1).unwrap();
        // Trace walks out and back along the 8 centres.
        assert!((f.perimeter_px - 14.0).abs() < 1e-12);
        assert_eq!(f.minor_axis_len, 1.0);
        assert!(f.eccentricity < 1.0 && f.eccentricity > 0.9);
        assert_eq!(f.solidity, 1.0);
    }

    #[test]
    fn l_shape_is_not_convex() {
        let m = mask_from(10, 10, |x, y| (x < 6 && y < 2) || (x < 2 && y < 6));
        let f = morphological_features(&m, 1).unwrap();
        assert!(f.solidity < 1.0);
        assert!(f.extent < 1.0);
        let expected_hull = 36.0 - 8.0; // 6x6 box minus the cut triangle of legs 4
        assert!((f.area_px / f.solidity - expected_hull).abs() < 1e-9);
    }

    #[test]
    fn unknown_nucleus() {
        let m = mask_from(3, 3, |_, _| false);
        assert!(morphological_features(&m, 1).is_err());
    }
}
