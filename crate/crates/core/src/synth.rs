//! Seeded synthetic deep-sea scenes: an elliptical body with random-walk
//! limbs over a textured background, degraded by depth-dependent optics.
//!
//! Geometry is rasterized with integer arithmetic only (a fixed-point
//! direction table, an integer ellipse test and Bresenham lines), so masks are
//! identical on every platform. Every sample draws from its own ChaCha8
//! stream; the zone only affects the optics, which are drawn after the
//! geometry, so equal seeds give equal organisms in every zone.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_traits::Float;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_dim, Error, Result};
use crate::metrics::{skeletonize, BinaryMask};
use crate::Tensor;

/// Smallest supported image side.
pub const MIN_SIZE: usize = 32;

/// `cos(kπ/8)·1024` and `sin(kπ/8)·1024`, rounded.
const COS: [i64; 16] = [
    1024, 946, 724, 392, 0, -392, -724, -946, -1024, -946, -724, -392, 0, 392, 724, 946,
];
const SIN: [i64; 16] = [
    0, 392, 724, 946, 1024, 946, 724, 392, 0, -392, -724, -946, -1024, -946, -724, -392,
];
const FIXED: i64 = 1024;

const PALETTE: [[f64; 3]; 3] = [[0.95, 0.5, 0.35], [0.9, 0.75, 0.6], [0.85, 0.35, 0.45]];
const WATER: [f64; 3] = [0.25, 0.55, 0.65];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Zone {
    Epipelagic,
    Mesopelagic,
    Abyssal,
}

impl Zone {
    pub const ALL: [Zone; 3] = [Zone::Epipelagic, Zone::Mesopelagic, Zone::Abyssal];

    pub fn name(self) -> &'static str {
        match self {
            Zone::Epipelagic => "epipelagic",
            Zone::Mesopelagic => "mesopelagic",
            Zone::Abyssal => "abyssal",
        }
    }

    pub fn parse(s: &str) -> Option<Zone> {
        Zone::ALL.into_iter().find(|z| z.name() == s)
    }

    /// Optics and the depth range scenes of this zone are drawn from.
    pub fn optics(self) -> (ZoneOptics, [f64; 2]) {
        match self {
            Zone::Epipelagic => (
                ZoneOptics {
                    attenuation: [0.35, 0.12, 0.05],
                    ambient: 0.05,
                    spotlight: None,
                    noise_sigma: 0.01,
                },
                [0.5, 1.0],
            ),
            Zone::Mesopelagic => (
                ZoneOptics {
                    attenuation: [0.8, 0.35, 0.15],
                    ambient: 0.03,
                    spotlight: None,
                    noise_sigma: 0.02,
                },
                [1.0, 2.0],
            ),
            Zone::Abyssal => (
                ZoneOptics {
                    attenuation: [1.2, 0.6, 0.3],
                    ambient: 0.02,
                    spotlight: Some(Spotlight {
                        center: [0.5, 0.5],
                        radius: 0.35,
                        intensity: 3.0,
                    }),
                    noise_sigma: 0.03,
                },
                [2.0, 3.0],
            ),
        }
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A radial light source; center and radius are fractions of the image side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spotlight {
    pub center: [f64; 2],
    pub radius: f64,
    pub intensity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneOptics {
    /// Per-channel RGB attenuation per unit depth.
    pub attenuation: [f64; 3],
    pub ambient: f64,
    pub spotlight: Option<Spotlight>,
    pub noise_sigma: f64,
}

impl ZoneOptics {
    pub fn validate(&self) -> Result<()> {
        let [r, g, b] = self.attenuation;
        if !(b >= 0.0 && g >= b && r >= g) {
            return Err(Error::invalid(
                "zone_optics",
                "attenuation must satisfy red >= green >= blue >= 0",
            ));
        }
        if !(self.noise_sigma >= 0.0) || !(self.ambient >= 0.0) {
            return Err(Error::invalid(
                "zone_optics",
                "ambient and noise must be non-negative",
            ));
        }
        Ok(())
    }
}

/// One synthetic example.
#[derive(Debug, Clone, PartialEq)]
pub struct SegSample {
    /// `3×H×W` in `[0, 1]`.
    pub image: Tensor<f64>,
    pub mask: BinaryMask,
    pub skeleton: BinaryMask,
    pub zone: Zone,
    pub seed: u64,
    pub limb_count: usize,
    /// Stamp width of each limb.
    pub limb_width_px: Vec<usize>,
}

/// Beer–Lambert attenuation, spotlight gain, ambient floor and seeded
/// Gaussian noise, clamped to `[0, 1]`.
pub fn attenuate(
    image: &Tensor<f64>,
    optics: &ZoneOptics,
    depth: f64,
    noise_seed: u64,
) -> Result<Tensor<f64>> {
    optics.validate()?;
    if !(depth >= 0.0) {
        return Err(Error::invalid("attenuate", "depth must be non-negative"));
    }
    let shape = image.shape();
    if shape.len() != 3 {
        return Err(Error::Rank {
            op: "attenuate",
            expected: 3,
            got: shape.len(),
        });
    }
    check_dim("attenuate", "channels", 3, shape[0])?;
    let (h, w) = (shape[1], shape[2]);
    let gain: Vec<f64> = match optics.spotlight {
        None => vec![1.0; h * w],
        Some(s) => (0..h * w)
            .map(|i| {
                let y = ((i / w) as f64 + 0.5) / h as f64 - s.center[1];
                let x = ((i % w) as f64 + 0.5) / w as f64 - s.center[0];
                s.intensity * Float::exp(-(x * x + y * y) / (s.radius * s.radius))
            })
            .collect(),
    };
    let noise = if optics.noise_sigma > 0.0 {
        Some(
            Normal::new(0.0, optics.noise_sigma)
                .map_err(|_| Error::invalid("attenuate", "invalid noise level"))?,
        )
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut out = image.clone();
    for (c, plane) in out.data_mut().chunks_mut(h * w).enumerate() {
        let scale = Float::exp(-optics.attenuation[c] * depth);
        for (v, g) in plane.iter_mut().zip(&gain) {
            let n = noise.map_or(0.0, |d| d.sample(&mut rng));
            *v = (*v * scale * g + optics.ambient + n).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// Bresenham line from `a` to `b`, both ends included.
pub fn bresenham(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = a;
    let (dx, dy) = ((b.0 - x).abs(), -(b.1 - y).abs());
    let (sx, sy) = (if x < b.0 { 1 } else { -1 }, if y < b.1 { 1 } else { -1 });
    let mut err = dx + dy;
    let mut out = vec![(x, y)];
    while (x, y) != b {
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
        out.push((x, y));
    }
    out
}

struct Ellipse {
    cx: i64,
    cy: i64,
    a: i64,
    b: i64,
    dir: usize,
}

impl Ellipse {
    fn contains(&self, x: i64, y: i64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (c, s) = (COS[self.dir], SIN[self.dir]);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        u * u * self.b * self.b + v * v * self.a * self.a <= (self.a * self.b * FIXED).pow(2)
    }
}

fn step(len: i64, dir: usize) -> (i64, i64) {
    let round = |v: i64| (2 * v + FIXED).div_euclid(2 * FIXED);
    (round(len * COS[dir]), round(len * SIN[dir]))
}

fn value_noise(rng: &mut ChaCha8Rng, size: usize, cell: usize) -> Vec<f64> {
    let n = size / cell + 2;
    let grid: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
    (0..size * size)
        .map(|i| {
            let (y, x) = (
                (i / size) as f64 / cell as f64,
                (i % size) as f64 / cell as f64,
            );
            let (y0, x0) = (y as usize, x as usize);
            let (fy, fx) = (y - y0 as f64, x - x0 as f64);
            let g = |r: usize, c: usize| grid[r * n + c];
            (1.0 - fy) * ((1.0 - fx) * g(y0, x0) + fx * g(y0, x0 + 1))
                + fy * ((1.0 - fx) * g(y0 + 1, x0) + fx * g(y0 + 1, x0 + 1))
        })
        .collect()
}

/// A `size×size` scene of `zone` drawn from the stream seeded by `seed`.
pub fn generate_scene(zone: Zone, size: usize, seed: u64) -> Result<SegSample> {
    if size < MIN_SIZE {
        return Err(Error::invalid(
            "generate_scene",
            alloc::format!("size {size} is below {MIN_SIZE}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as i64;
    let a = rng.random_range(s / 8..=s / 5);
    let body = Ellipse {
        cx: rng.random_range(s * 3 / 8..=s * 5 / 8),
        cy: rng.random_range(s * 3 / 8..=s * 5 / 8),
        a,
        b: rng.random_range(s / 12..=a),
        dir: rng.random_range(0..8),
    };
    let mut mask = BinaryMask::from_fn(size, size, |r, c| body.contains(c as i64, r as i64));
    let body_mask = mask.clone();
    let mut skeleton = BinaryMask::empty(size, size);

    let margin = 2;
    let clamp = |v: i64| v.clamp(margin, s - 1 - margin);
    let limb_count = rng.random_range(2..=6usize);
    let mut limb_width_px = Vec::with_capacity(limb_count);
    for _ in 0..limb_count {
        let width = rng.random_range(1..=3usize);
        limb_width_px.push(width);
        let mut dir = rng.random_range(0..16usize);
        // leave the body along `dir`
        let far = step(s, dir);
        let ray = bresenham((body.cx, body.cy), (body.cx + far.0, body.cy + far.1));
        let mut start = (body.cx, body.cy);
        for &(x, y) in &ray {
            if !(0..s).contains(&x) || !(0..s).contains(&y) || !body.contains(x, y) {
                break;
            }
            start = (x, y);
        }
        let mut line = vec![start];
        for _ in 0..rng.random_range(2..=4) {
            dir = (dir + 16 + rng.random_range(0..3usize) - 1) % 16;
            let len = rng.random_range(s / 12..=s / 6);
            let d = step(len, dir);
            let last = *line.last().expect("non-empty");
            let end = (clamp(last.0 + d.0), clamp(last.1 + d.1));
            line.extend(bresenham(last, end).into_iter().skip(1));
        }
        for &(x, y) in &line {
            skeleton.set(y as usize, x as usize, true);
            for oy in 0..width as i64 {
                for ox in 0..width as i64 {
                    let (px, py) = (
                        x + ox - (width as i64 - 1) / 2,
                        y + oy - (width as i64 - 1) / 2,
                    );
                    if (0..s).contains(&px) && (0..s).contains(&py) {
                        mask.set(py as usize, px as usize, true);
                    }
                }
            }
        }
    }
    let body_skeleton = skeletonize(&body_mask);
    skeleton
        .data
        .iter_mut()
        .zip(&body_skeleton.data)
        .for_each(|(s, &b)| *s |= b);

    let texture_bg = value_noise(&mut rng, size, 12);
    let texture_fg = value_noise(&mut rng, size, 6);
    let color = PALETTE[rng.random_range(0..PALETTE.len())];
    let hw = size * size;
    let mut image = Tensor::zeros(&[3, size, size]);
    for c in 0..3 {
        for i in 0..hw {
            image.data_mut()[c * hw + i] = if mask.data[i] {
                color[c] * (0.75 + 0.25 * texture_fg[i])
            } else {
                WATER[c] * (0.6 + 0.4 * texture_bg[i])
            };
        }
    }
    let (optics, [lo, hi]) = zone.optics();
    let depth = lo + (hi - lo) * rng.random::<f64>();
    let image = attenuate(&image, &optics, depth, rng.next_u64())?;
    Ok(SegSample {
        image,
        mask,
        skeleton,
        zone,
        seed,
        limb_count,
        limb_width_px,
    })
}

/// Seed of sample `index` of a dataset: the first word of stream `index`
/// of a ChaCha8 generator keyed by `base`.
pub fn sample_seed(base: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index);
    rng.next_u64()
}

/// Zero-padded identifier of sample `index`.
pub fn sample_id(index: usize) -> String {
    alloc::format!("{index:05}")
}

/// `count` scenes cycling through `zones`, each from its own stream.
pub fn generate_dataset(
    count: usize,
    size: usize,
    zones: &[Zone],
    base_seed: u64,
) -> Result<Vec<SegSample>> {
    generate_range(0..count, size, zones, base_seed)
}

/// Scenes `indices` of the dataset keyed by `base_seed`; sample `i` is the
/// same whichever range it is generated in.
pub fn generate_range(
    indices: core::ops::Range<usize>,
    size: usize,
    zones: &[Zone],
    base_seed: u64,
) -> Result<Vec<SegSample>> {
    if zones.is_empty() {
        return Err(Error::invalid("generate_dataset", "no zones given"));
    }
    indices
        .map(|i| {
            generate_scene(
                zones[i % zones.len()],
                size,
                sample_seed(base_seed, i as u64),
            )
        })
        .collect()
}

/// Rec. 601 luma of a `3×H×W` image, averaged over a pixel window.
pub fn mean_luminance(
    image: &Tensor<f64>,
    rows: core::ops::Range<usize>,
    cols: core::ops::Range<usize>,
) -> f64 {
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let d = image.data();
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in rows {
        for c in cols.clone() {
            let i = r * w + c;
            sum += 0.299 * d[i] + 0.587 * d[h * w + i] + 0.114 * d[2 * h * w + i];
            n += 1;
        }
    }
    sum / n.max(1) as f64
}
