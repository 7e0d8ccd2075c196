//! Procedural toy sketch corpus.
//!
//! Every class is a composition of one to three primitive components placed
//! on a fixed three-slot layout. The content icon is the clean rendering of
//! the composition; a painter's samples re-render the same geometry under
//! that painter's fixed [`ToyStyleParams`] plus per-sample control-point
//! noise. Strokes are drawn with integer Bresenham lines stamped by a box
//! kernel, and every geometric constant is tabulated, so the output is a pure
//! function of the arguments.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ContentSample, Dataset};
use crate::error::{Error, Result};
use crate::raster::Raster;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Circle,
    Triangle,
    Square,
    Cross,
    DiagonalStroke,
    Arc,
}

impl Component {
    pub const ALL: [Component; 6] = [
        Component::Circle,
        Component::Triangle,
        Component::Square,
        Component::Cross,
        Component::DiagonalStroke,
        Component::Arc,
    ];

    fn index(self) -> u64 {
        Component::ALL.iter().position(|&c| c == self).unwrap() as u64
    }
}

pub const SLOT_COUNT: usize = 3;

/// Slot centers in unit canvas coordinates (y grows downwards).
const SLOT_CENTERS: [(f64, f64); SLOT_COUNT] = [(0.27, 0.29), (0.73, 0.29), (0.5, 0.72)];
const SLOT_HALF_SIZE: f64 = 0.19;

/// Control-point noise: 1.5 px at 128 px, i.e. a constant in unit coordinates.
const NOISE_SIGMA: f64 = 1.5 / 128.0;

/// Salt for the fixed class ordering; independent of any dataset seed so
/// corpora built with different seeds agree on what each class label means.
const CLASS_ORDER_SEED: u64 = 0x5EED_C1A5;

/// (cos, sin) of k * 22.5 degrees.
const UNIT_CIRCLE: [(f64, f64); 16] = [
    (1.0, 0.0),
    (0.923_879_532_511_286_7, 0.382_683_432_365_089_8),
    (0.707_106_781_186_547_6, 0.707_106_781_186_547_6),
    (0.382_683_432_365_089_8, 0.923_879_532_511_286_7),
    (0.0, 1.0),
    (-0.382_683_432_365_089_8, 0.923_879_532_511_286_7),
    (-0.707_106_781_186_547_6, 0.707_106_781_186_547_6),
    (-0.923_879_532_511_286_7, 0.382_683_432_365_089_8),
    (-1.0, 0.0),
    (-0.923_879_532_511_286_7, -0.382_683_432_365_089_8),
    (-0.707_106_781_186_547_6, -0.707_106_781_186_547_6),
    (-0.382_683_432_365_089_8, -0.923_879_532_511_286_7),
    (0.0, -1.0),
    (0.382_683_432_365_089_8, -0.923_879_532_511_286_7),
    (0.707_106_781_186_547_6, -0.707_106_781_186_547_6),
    (0.923_879_532_511_286_7, -0.382_683_432_365_089_8),
];

/// A class: the component (if any) drawn in each slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Composition {
    pub slots: [Option<Component>; SLOT_COUNT],
}

impl Composition {
    pub fn components(&self) -> impl Iterator<Item = Component> + '_ {
        self.slots.iter().flatten().copied()
    }

    pub fn component_set(&self) -> BTreeSet<Component> {
        self.components().collect()
    }

    pub fn contains(&self, c: Component) -> bool {
        self.components().any(|x| x == c)
    }
}

/// All compositions of one to three components, in the fixed class order.
///
/// Compositions built only from triangle, square, diagonal stroke and arc
/// come first (the first twelve classes never use a circle or a cross), the
/// remainder interleaves the other base-only compositions with those that use
/// a circle or a cross.
pub fn all_compositions() -> Vec<Composition> {
    let options: Vec<Option<Component>> = std::iter::once(None)
        .chain(Component::ALL.iter().copied().map(Some))
        .collect();
    let mut base = Vec::new();
    let mut extended = Vec::new();
    for &a in &options {
        for &b in &options {
            for &c in &options {
                let comp = Composition { slots: [a, b, c] };
                if comp.components().next().is_none() {
                    continue;
                }
                if comp.contains(Component::Circle) || comp.contains(Component::Cross) {
                    extended.push(comp);
                } else {
                    base.push(comp);
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(CLASS_ORDER_SEED);
    base.shuffle(&mut rng);
    extended.shuffle(&mut rng);
    let head = 12.min(base.len());
    let mut order: Vec<Composition> = base[..head].to_vec();
    let mut rest_base = base[head..].iter();
    let mut rest_ext = extended.iter();
    loop {
        match (rest_ext.next(), rest_base.next()) {
            (None, None) => break,
            (e, b) => order.extend(e.into_iter().chain(b).copied()),
        }
    }
    order
}

/// A painter's fixed rendering style.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyStyleParams {
    /// Degrees in [-25, 25]; positive leans the glyph to the right.
    pub slant_shear: f64,
    /// Box-kernel stroke width in pixels, 1 to 4.
    pub stroke_width: u32,
    /// Systematic corner displacement in pixels, [0, 3].
    pub corner_jitter: f64,
    /// Bow of straight segments relative to their length, [-0.5, 0.5].
    pub curvature_bias: f64,
}

/// Fixed per-painter styles. Slants are spread evenly over the admissible
/// range and widths cycle through 1..=4 before both are shuffled, so painters
/// of a small corpus differ visibly.
pub fn painter_styles(painter_count: usize, seed: u64) -> Vec<ToyStyleParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x9E37_79B9_7F4A_7C15));
    let mut slants: Vec<f64> = (0..painter_count)
        .map(|k| {
            if painter_count == 1 {
                0.0
            } else {
                -25.0 + 50.0 * k as f64 / (painter_count - 1) as f64
            }
        })
        .collect();
    let mut widths: Vec<u32> = (0..painter_count).map(|k| (k % 4) as u32 + 1).collect();
    slants.shuffle(&mut rng);
    widths.shuffle(&mut rng);
    slants
        .into_iter()
        .zip(widths)
        .map(|(slant_shear, stroke_width)| ToyStyleParams {
            slant_shear,
            stroke_width,
            corner_jitter: rng.gen_range(0.0..=3.0),
            curvature_bias: rng.gen_range(-0.5..=0.5),
        })
        .collect()
}

/// Builds the toy corpus over the first `class_count` classes of
/// [`all_compositions`].
pub fn make_toy_dataset(
    class_count: usize,
    painter_count: usize,
    samples_per_pair: usize,
    resolution: usize,
    seed: u64,
) -> Result<Dataset> {
    let all = all_compositions();
    if class_count == 0 || class_count > all.len() {
        return Err(Error::InvalidArgument(format!(
            "class_count must be in 1..={} (available compositions), got {class_count}",
            all.len()
        )));
    }
    make_toy_dataset_from_compositions(&all[..class_count], painter_count, samples_per_pair, resolution, seed)
}

/// Builds a toy corpus whose class `i` is `compositions[i]`.
pub fn make_toy_dataset_from_compositions(
    compositions: &[Composition],
    painter_count: usize,
    samples_per_pair: usize,
    resolution: usize,
    seed: u64,
) -> Result<Dataset> {
    if ![32, 64, 128].contains(&resolution) {
        return Err(Error::InvalidArgument(format!(
            "toy resolution must be 32, 64 or 128, got {resolution}"
        )));
    }
    if compositions.is_empty() || painter_count == 0 || samples_per_pair == 0 {
        return Err(Error::InvalidArgument(
            "toy corpus needs at least one class, painter and sample".into(),
        ));
    }
    if compositions.iter().any(|c| c.components().next().is_none()) {
        return Err(Error::InvalidArgument("empty composition".into()));
    }
    let styles = painter_styles(painter_count, seed);
    let icon_width = (resolution / 32).max(1) as u32;
    let icon_table: BTreeMap<usize, Arc<Raster>> = compositions
        .iter()
        .enumerate()
        .map(|(c, comp)| (c, Arc::new(render(comp, None, None, icon_width, resolution))))
        .collect();

    let mut samples = Vec::with_capacity(compositions.len() * painter_count * samples_per_pair);
    for (class, comp) in compositions.iter().enumerate() {
        for (painter, style) in styles.iter().enumerate() {
            let key = splitmix64(seed ^ splitmix64(painter as u64 + 1));
            for n in 0..samples_per_pair {
                let global = ((class * painter_count + painter) * samples_per_pair + n) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(global + 1);
                let sketch = render(comp, Some((style, key)), Some(&mut rng), style.stroke_width, resolution);
                samples.push(ContentSample {
                    sketch,
                    class_label: class,
                    content_icon: Arc::clone(&icon_table[&class]),
                    painter_label: painter,
                });
            }
        }
    }
    let painter_names = (0..painter_count).map(|p| format!("toy-{seed}-{p}")).collect();
    Dataset::new(
        samples,
        compositions.len(),
        painter_count,
        icon_table,
        painter_names,
        Some(compositions.to_vec()),
        resolution,
    )
}

struct Stroke {
    points: Vec<(f64, f64)>,
    closed: bool,
    /// Polygonal strokes get corner jitter and curvature; sampled curves do not.
    straight: bool,
}

fn strokes(c: Component) -> Vec<Stroke> {
    let poly = |pts: &[(f64, f64)], closed| Stroke {
        points: pts.to_vec(),
        closed,
        straight: true,
    };
    match c {
        Component::Circle => vec![Stroke {
            points: UNIT_CIRCLE.iter().map(|&(x, y)| (0.75 * x, 0.75 * y)).collect(),
            closed: true,
            straight: false,
        }],
        Component::Triangle => vec![poly(&[(0.0, -0.8), (0.8, 0.7), (-0.8, 0.7)], true)],
        Component::Square => vec![poly(&[(-0.7, -0.7), (0.7, -0.7), (0.7, 0.7), (-0.7, 0.7)], true)],
        Component::Cross => vec![
            poly(&[(-0.8, 0.0), (0.8, 0.0)], false),
            poly(&[(0.0, -0.8), (0.0, 0.8)], false),
        ],
        Component::DiagonalStroke => vec![poly(&[(-0.8, 0.8), (0.8, -0.8)], false)],
        Component::Arc => vec![Stroke {
            points: (8..=16)
                .map(|k| {
                    let (x, y) = UNIT_CIRCLE[k % 16];
                    (0.8 * x, 0.8 * y + 0.35)
                })
                .collect(),
            closed: false,
            straight: false,
        }],
    }
}

/// Renders a composition. `painter` is the style and its jitter key; without
/// it the rendering is the clean icon.
fn render(
    comp: &Composition,
    painter: Option<(&ToyStyleParams, u64)>,
    mut noise: Option<&mut ChaCha8Rng>,
    stroke_width: u32,
    resolution: usize,
) -> Raster {
    let mut canvas = Raster::zeros(resolution, resolution);
    let res = resolution as f64;
    let normal = Normal::new(0.0, NOISE_SIGMA).unwrap();
    let shear = painter.map_or(0.0, |(p, _)| quantized_tan_degrees(p.slant_shear));

    for (slot, component) in comp.slots.iter().enumerate() {
        let Some(component) = component else { continue };
        let (cx, cy) = SLOT_CENTERS[slot];
        for (k, stroke) in strokes(*component).into_iter().enumerate() {
            let mut pts: Vec<(f64, f64)> = stroke
                .points
                .iter()
                .map(|&(x, y)| (cx + SLOT_HALF_SIZE * x, cy + SLOT_HALF_SIZE * y))
                .collect();

            if let (Some((style, key)), true) = (painter, stroke.straight) {
                for (i, p) in pts.iter_mut().enumerate() {
                    let h = splitmix64(
                        key ^ (slot as u64) << 8 ^ component.index() << 16 ^ (k as u64) << 24 ^ (i as u64) << 32,
                    );
                    let (dx, dy) = UNIT_CIRCLE[(h % 16) as usize];
                    p.0 += style.corner_jitter / res * dx;
                    p.1 += style.corner_jitter / res * dy;
                }
                pts = bow_segments(&pts, stroke.closed, style.curvature_bias);
            }

            if let Some(rng) = noise.as_deref_mut() {
                for p in pts.iter_mut() {
                    p.0 += normal.sample(rng);
                    p.1 += normal.sample(rng);
                }
            }

            let pixels: Vec<(i64, i64)> = pts
                .iter()
                .map(|&(x, y)| {
                    let x = x + shear * (0.5 - y);
                    ((x * res - 0.5).round() as i64, (y * res - 0.5).round() as i64)
                })
                .collect();
            let segments = pixels.len() - 1 + usize::from(stroke.closed);
            for s in 0..segments {
                let a = pixels[s];
                let b = pixels[(s + 1) % pixels.len()];
                draw_line(&mut canvas, a, b, stroke_width);
            }
        }
    }
    canvas
}

/// Replaces each straight segment with a quadratic Bezier whose control point
/// is pushed perpendicular to the segment by `bias` times half its length.
fn bow_segments(pts: &[(f64, f64)], closed: bool, bias: f64) -> Vec<(f64, f64)> {
    let n = pts.len();
    let segments = n - 1 + usize::from(closed);
    let mut out = Vec::with_capacity(segments * 4 + 1);
    for s in 0..segments {
        let a = pts[s];
        let b = pts[(s + 1) % n];
        let mid = (0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1));
        let ctrl = (mid.0 - (b.1 - a.1) * 0.5 * bias, mid.1 + (b.0 - a.0) * 0.5 * bias);
        for step in 0..4 {
            let t = step as f64 * 0.25;
            let u = 1.0 - t;
            out.push((
                u * u * a.0 + 2.0 * u * t * ctrl.0 + t * t * b.0,
                u * u * a.1 + 2.0 * u * t * ctrl.1 + t * t * b.1,
            ));
        }
    }
    if !closed {
        out.push(pts[n - 1]);
    }
    out
}

fn draw_line(canvas: &mut Raster, (x0, y0): (i64, i64), (x1, y1): (i64, i64), width: u32) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        stamp(canvas, x, y, width);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn stamp(canvas: &mut Raster, x: i64, y: i64, width: u32) {
    let lo = -((width as i64 - 1) / 2);
    let hi = width as i64 / 2;
    let (w, h) = (canvas.width() as i64, canvas.height() as i64);
    for oy in lo..=hi {
        for ox in lo..=hi {
            let (px, py) = (x + ox, y + oy);
            if (0..w).contains(&px) && (0..h).contains(&py) {
                canvas.set(px as usize, py as usize, 1.0);
            }
        }
    }
}

/// tan of an angle in degrees, quantized to 1/1024 so the shear does not
/// depend on the last bit of the platform's libm.
fn quantized_tan_degrees(deg: f64) -> f64 {
    (deg.to_radians().tan() * 1024.0).round() / 1024.0
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
