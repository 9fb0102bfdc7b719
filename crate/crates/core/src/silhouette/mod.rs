//! Thermal thresholding and binary silhouette utilities.

mod pgm;

pub use pgm::{decode_pgm, encode_mask_pgm, encode_pgm16, read_pgm, write_mask_pgm, write_pgm16, PgmImage};

use crate::error::{Error, Result};
use crate::geom::Pixel;

/// Single-channel radiometric image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThermalImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

impl ThermalImage {
    pub fn new(width: usize, height: usize, data: Vec<u16>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(width, height, data.len(), 1));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u16) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

/// Neighbor offsets in counter-clockwise screen order (y down), from east.
const DIRS: [(isize, isize); 8] = [
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];
const NORTH: usize = 2;

/// Binary mask with its centroid and ordered outer boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Silhouette {
    width: usize,
    height: usize,
    mask: Vec<bool>,
    count: usize,
    centroid: Option<Pixel>,
    boundary: Vec<[usize; 2]>,
}

impl Silhouette {
    /// Wraps a mask as-is (no component filtering).
    pub fn from_mask(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::DimensionMismatch(width, height, mask.len(), 1));
        }
        let mut count = 0usize;
        let (mut sx, mut sy) = (0.0, 0.0);
        for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            count += 1;
            sx += (i % width) as f64;
            sy += (i / width) as f64;
        }
        let centroid = (count > 0).then(|| Pixel::new(sx / count as f64, sy / count as f64));
        let boundary = if count > 0 {
            trace_boundary(width, height, &mask)
        } else {
            Vec::new()
        };
        Ok(Self {
            width,
            height,
            mask,
            count,
            centroid,
            boundary,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            mask: vec![false; width * height],
            count: 0,
            centroid: None,
            boundary: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    /// Number of set pixels.
    pub fn count(&self) -> usize {
        self.count
    }

    /// An empty silhouette means the frame carries no flame.
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn centroid(&self) -> Option<Pixel> {
        self.centroid
    }

    pub fn boundary(&self) -> &[[usize; 2]] {
        &self.boundary
    }

    /// Nearest background pixel `[x, y]` for every pixel, row-major; `None`
    /// when the raster has no background.
    pub fn nearest_background(&self) -> Vec<Option<[usize; 2]>> {
        let (w, h) = (self.width, self.height);
        let mut d2 = vec![0.0; w * h];
        let mut from_row = vec![0usize; w * h];
        let mut line = Vec::with_capacity(w.max(h));
        let (mut out, mut arg) = (Vec::new(), Vec::new());
        for x in 0..w {
            line.clear();
            line.extend((0..h).map(|y| if self.mask[y * w + x] { f64::INFINITY } else { 0.0 }));
            squared_distance_1d(&line, &mut out, &mut arg);
            for y in 0..h {
                d2[y * w + x] = out[y];
                from_row[y * w + x] = arg[y];
            }
        }
        let mut nearest = vec![None; w * h];
        for y in 0..h {
            line.clear();
            line.extend_from_slice(&d2[y * w..(y + 1) * w]);
            squared_distance_1d(&line, &mut out, &mut arg);
            for x in 0..w {
                if out[x].is_finite() {
                    nearest[y * w + x] = Some([arg[x], from_row[y * w + arg[x]]]);
                }
            }
        }
        nearest
    }

    /// Euclidean distance from each pixel center to the nearest background
    /// pixel center, row-major; zero on the background and infinite when the
    /// raster has no background.
    pub fn distance_to_background(&self) -> Vec<f64> {
        self.nearest_background()
            .iter()
            .enumerate()
            .map(|(i, n)| match n {
                Some([x, y]) => {
                    let (px, py) = ((i % self.width) as f64, (i / self.width) as f64);
                    (*x as f64 - px).hypot(*y as f64 - py)
                }
                None => f64::INFINITY,
            })
            .collect()
    }

    fn is_set(&self, x: isize, y: isize) -> Option<bool> {
        if x < 0 || y < 0 || x >= self.width as isize || y >= self.height as isize {
            None
        } else {
            Some(self.mask[y as usize * self.width + x as usize])
        }
    }

    /// Boundary pixels moved half a pixel toward the background, approximating
    /// where the silhouette edge crosses between pixel centers.
    pub fn edge_points(&self) -> Vec<Pixel> {
        self.boundary
            .iter()
            .map(|&[x, y]| {
                let (xi, yi) = (x as isize, y as isize);
                let outward = |dirs: &[(isize, isize)]| {
                    dirs.iter().fold((0.0, 0.0), |acc, &(dx, dy)| {
                        // Pixels past the raster border carry no edge evidence.
                        if self.is_set(xi + dx, yi + dy) == Some(false) {
                            (acc.0 + dx as f64, acc.1 + dy as f64)
                        } else {
                            acc
                        }
                    })
                };
                let mut n = outward(&[(1, 0), (0, -1), (-1, 0), (0, 1)]);
                if n == (0.0, 0.0) {
                    n = outward(&[(1, -1), (-1, -1), (-1, 1), (1, 1)]);
                }
                let len = n.0.hypot(n.1);
                if len < 1e-12 {
                    Pixel::new(x as f64, y as f64)
                } else {
                    Pixel::new(x as f64 + 0.5 * n.0 / len, y as f64 + 0.5 * n.1 / len)
                }
            })
            .collect()
    }
}

/// Lower envelope of parabolas: `out[q] = min_p (q - p)² + f[p]`, with the
/// minimizing `p` in `arg[q]`.
fn squared_distance_1d(f: &[f64], out: &mut Vec<f64>, arg: &mut Vec<usize>) {
    let n = f.len();
    out.clear();
    out.resize(n, f64::INFINITY);
    arg.clear();
    arg.resize(n, 0);
    // Parabola vertices on the envelope and the left end of each one's span.
    let mut v: Vec<usize> = Vec::with_capacity(n);
    let mut z: Vec<f64> = Vec::with_capacity(n);
    for q in (0..n).filter(|&p| f[p].is_finite()) {
        let fq = f[q] + (q * q) as f64;
        while let Some(&p) = v.last() {
            let s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= *z.last().expect("one span per vertex") {
                v.pop();
                z.pop();
            } else {
                z.push(s);
                break;
            }
        }
        if v.is_empty() {
            z.clear();
            z.push(f64::NEG_INFINITY);
        }
        v.push(q);
    }
    if v.is_empty() {
        return;
    }
    let mut k = 0;
    for q in 0..n {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        out[q] = d * d + f[v[k]];
        arg[q] = v[k];
    }
}

/// Mid-scale of 16-bit intensities.
pub const DEFAULT_THRESHOLD: u16 = 32768;

/// Thresholds at `t` (inclusive) and keeps the largest 8-connected component.
pub fn threshold(img: &ThermalImage, t: u16) -> Silhouette {
    let raw: Vec<bool> = img.data.iter().map(|&v| v >= t).collect();
    let mask = largest_component(img.width, img.height, &raw);
    Silhouette::from_mask(img.width, img.height, mask).expect("mask matches image size")
}

/// Labels 8-connected components; returns labels (0 = background) and sizes
/// indexed by label - 1.
fn label_components(width: usize, height: usize, mask: &[bool]) -> (Vec<u32>, Vec<usize>) {
    let mut labels = vec![0u32; mask.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        let mut size = 0usize;
        labels[start] = label;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = ((i % width) as isize, (i / width) as isize);
            for &(dx, dy) in &DIRS {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                    continue;
                }
                let j = ny as usize * width + nx as usize;
                if mask[j] && labels[j] == 0 {
                    labels[j] = label;
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Largest 8-connected component; ties go to the first in raster order.
pub fn largest_component(width: usize, height: usize, mask: &[bool]) -> Vec<bool> {
    let (labels, sizes) = label_components(width, height, mask);
    let Some(best) = sizes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i as u32 + 1)
    else {
        return vec![false; mask.len()];
    };
    labels.iter().map(|&l| l == best).collect()
}

/// Moore-neighbor trace of the largest component's outer boundary,
/// counter-clockwise on screen, starting at its topmost-leftmost pixel.
/// The loop is closed implicitly (the start is not repeated).
pub fn trace_boundary(width: usize, height: usize, mask: &[bool]) -> Vec<[usize; 2]> {
    let comp = largest_component(width, height, mask);
    let Some(first) = comp.iter().position(|&m| m) else {
        return Vec::new();
    };
    let set = |x: isize, y: isize| {
        x >= 0
            && y >= 0
            && x < width as isize
            && y < height as isize
            && comp[y as usize * width + x as usize]
    };
    let start = ((first % width) as isize, (first / width) as isize);

    // Sweep counter-clockwise from the backtrack neighbor; return the next
    // boundary pixel and the backtrack direction as seen from it.
    let step = |cur: (isize, isize), back: usize| -> Option<((isize, isize), usize)> {
        for k in 1..=8 {
            let d = (back + k) % 8;
            let (nx, ny) = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
            if set(nx, ny) {
                let prev = (back + k - 1) % 8;
                let bp = (cur.0 + DIRS[prev].0 - nx, cur.1 + DIRS[prev].1 - ny);
                let nb = DIRS.iter().position(|&o| o == bp).unwrap_or(NORTH);
                return Some(((nx, ny), nb));
            }
        }
        None
    };

    let mut out = Vec::new();
    let mut cur = start;
    let mut back = NORTH;
    let mut first_move = None;
    let cap = 4 * comp.iter().filter(|&&m| m).count() + 8;
    loop {
        let Some((next, nb)) = step(cur, back) else {
            return vec![[start.0 as usize, start.1 as usize]];
        };
        if cur == start {
            match first_move {
                None => first_move = Some(next),
                Some(f) if f == next => break,
                Some(_) => {}
            }
        }
        out.push([cur.0 as usize, cur.1 as usize]);
        cur = next;
        back = nb;
        if out.len() > cap {
            break;
        }
    }
    out
}

/// Intersection and union pixel counts of two equally sized masks.
pub(crate) fn overlap_counts(a: &[bool], b: &[bool]) -> (usize, usize) {
    a.iter().zip(b).fold((0, 0), |(i, u), (&x, &y)| {
        (i + usize::from(x && y), u + usize::from(x || y))
    })
}

pub fn iou_of_masks(a: &[bool], b: &[bool]) -> f64 {
    let (inter, union) = overlap_counts(a, b);
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Intersection over union; 1 when both are empty.
pub fn mask_iou(a: &Silhouette, b: &Silhouette) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch(a.width, a.height, b.width, b.height));
    }
    Ok(iou_of_masks(&a.mask, &b.mask))
}
