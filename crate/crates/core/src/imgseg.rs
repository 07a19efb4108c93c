//! Image segmentation as a MAXCUT instance.
//!
//! Pixels are nodes, 4-neighbours are joined by an edge whose weight is the
//! RGB distance `d` when `d > t` (no edge otherwise). Horizontal pixel strips
//! become agents, the asynchronous engine solves the relaxation and
//! hyperplane rounding produces a two-class mask.

use std::path::Path;

use crate::async_engine::{run_async, AsyncOptions, AsyncRun};
use crate::error::{Error, Result};
use crate::factor::{choose_rank, FactorState};
use crate::matrix::CoefficientMatrix;
use crate::oracles::{cut_value, hyperplane_round, CutAssignment};
use crate::partition::{async_step_sizes, AgentPartition};
use crate::rng::{derive_seed, stream_rng, STREAM_INIT, STREAM_ROUNDING, STREAM_SCHEDULE};
use crate::schedule::{make_schedule, ScheduleMode};

/// Row-major RGB image; pixel `(r, c)` is node `r * width + c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[u8; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize, rgb: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || rgb.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width} x {height} image",
                rgb.len()
            )));
        }
        Ok(Self { width, height, rgb })
    }

    /// Fills pixels in row-major order.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Self {
        let mut rgb = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                rgb.push(f(r, c));
            }
        }
        Self { width, height, rgb }
    }

    pub fn len(&self) -> usize {
        self.rgb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rgb.is_empty()
    }

    pub fn node(&self, r: usize, c: usize) -> usize {
        r * self.width + c
    }

    pub fn pixel(&self, r: usize, c: usize) -> [u8; 3] {
        self.rgb[self.node(r, c)]
    }

    /// Nearest-neighbour resampling to `width x height`.
    pub fn resize(&self, width: usize, height: usize) -> Self {
        Self::from_fn(width, height, |r, c| {
            self.pixel(r * self.height / height, c * self.width / width)
        })
    }

    /// ASCII PPM (`P3`).
    pub fn to_ppm_ascii(&self) -> String {
        let mut out = format!("P3\n{} {}\n255\n", self.width, self.height);
        for r in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|c| {
                    let [a, b, d] = self.pixel(r, c);
                    format!("{a} {b} {d}")
                })
                .collect();
            out.push_str(&row.join("  "));
            out.push('\n');
        }
        out
    }

    /// Binary PPM (`P6`).
    pub fn to_ppm_binary(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for px in &self.rgb {
            out.extend_from_slice(px);
        }
        out
    }
}

/// Left half black, right half red.
pub fn two_block(width: usize, height: usize) -> Image {
    Image::from_fn(width, height, |_, c| {
        if c < width / 2 {
            [0, 0, 0]
        } else {
            [255, 0, 0]
        }
    })
}

/// Alternating black and white pixels.
pub fn checkerboard(width: usize, height: usize) -> Image {
    Image::from_fn(width, height, |r, c| {
        if (r + c) % 2 == 0 {
            [0, 0, 0]
        } else {
            [255, 255, 255]
        }
    })
}

/// Horizontal grey ramp.
pub fn gradient(width: usize, height: usize) -> Image {
    Image::from_fn(width, height, |_, c| {
        let v = (c * 255 / width.saturating_sub(1).max(1)) as u8;
        [v, v, v]
    })
}

struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn next(&mut self) -> Option<&'a [u8]> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn header_number(&mut self, what: &str) -> Result<usize> {
        let tok = self
            .next()
            .ok_or_else(|| Error::CorruptHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::CorruptHeader(format!(
                    "{what} '{}' is not a number",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

/// Parses a `P3` or `P6` image with maxval 255.
pub fn parse_ppm(bytes: &[u8]) -> Result<Image> {
    let mut tok = Tokens { bytes, pos: 0 };
    let magic = tok.next().unwrap_or_default();
    let binary = match magic {
        b"P3" => false,
        b"P6" => true,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "magic '{}' (expected P3 or P6)",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = tok.header_number("width")?;
    let height = tok.header_number("height")?;
    let maxval = tok.header_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::CorruptHeader(format!(
            "image size {width} x {height}"
        )));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "maxval {maxval} (only 255 is supported)"
        )));
    }
    let expected = 3 * width * height;
    let samples: Vec<u8> = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let start = tok.pos + 1;
        let data = bytes.get(start..).unwrap_or_default();
        if data.len() < expected {
            return Err(Error::TruncatedPixelData {
                expected,
                found: data.len(),
            });
        }
        data[..expected].to_vec()
    } else {
        let mut out = Vec::with_capacity(expected);
        while out.len() < expected {
            let Some(t) = tok.next() else { break };
            let value: usize = std::str::from_utf8(t)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| {
                    Error::UnsupportedFormat(format!(
                        "sample '{}' is not a number",
                        String::from_utf8_lossy(t)
                    ))
                })?;
            if value > 255 {
                return Err(Error::UnsupportedFormat(format!(
                    "sample {value} exceeds maxval 255"
                )));
            }
            out.push(value as u8);
        }
        if out.len() < expected {
            return Err(Error::TruncatedPixelData {
                expected,
                found: out.len(),
            });
        }
        out
    };
    let rgb = samples
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    Image::new(width, height, rgb)
}

pub fn load_image(path: &Path) -> Result<Image> {
    parse_ppm(&std::fs::read(path)?)
}

fn rgb_distance(a: [u8; 3], b: [u8; 3]) -> f64 {
    a.iter()
        .zip(&b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// 4-neighbour pairs `(a, b)` with `a < b`, in row-major order.
pub fn neighbour_pairs(width: usize, height: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in 0..height {
        for c in 0..width {
            let a = r * width + c;
            if c + 1 < width {
                out.push((a, a + 1));
            }
            if r + 1 < height {
                out.push((a, a + width));
            }
        }
    }
    out
}

/// Weight `d` for 4-neighbours with RGB distance `d > threshold`.
pub fn build_weights(image: &Image, threshold: f64) -> Result<CoefficientMatrix> {
    if !threshold.is_finite() || threshold < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "threshold must be finite and >= 0, got {threshold}"
        )));
    }
    let triples = neighbour_pairs(image.width, image.height)
        .into_iter()
        .filter_map(|(a, b)| {
            let d = rgb_distance(image.rgb[a], image.rgb[b]);
            (d > threshold).then_some((a, b, d))
        });
    CoefficientMatrix::new(image.len(), triples)
}

/// First row of each of `agents` horizontal blocks, plus `height` at the end.
fn block_starts(height: usize, agents: usize) -> Vec<usize> {
    (0..=agents).map(|k| k * height / agents).collect()
}

/// Horizontal strips with a one-row overlap: agent `k` holds its block of
/// rows and the first row of the next block. Each edge belongs to the
/// lowest-indexed agent holding both endpoints.
pub fn strip_partition(
    image: &Image,
    matrix: &CoefficientMatrix,
    agents: usize,
) -> Result<AgentPartition> {
    if agents == 0 {
        return Err(Error::InvalidParameter(
            "at least one agent is required".into(),
        ));
    }
    if agents > image.height {
        return Err(Error::TooManyAgents {
            agents,
            height: image.height,
        });
    }
    let starts = block_starts(image.height, agents);
    // Inclusive row range of each agent.
    let ranges: Vec<(usize, usize)> = (0..agents)
        .map(|k| (starts[k], starts[k + 1].min(image.height - 1)))
        .collect();
    let sets = ranges
        .iter()
        .map(|&(lo, hi)| (lo * image.width..(hi + 1) * image.width).collect())
        .collect();
    let owners = matrix
        .entries()
        .iter()
        .map(|e| {
            let (ra, rb) = (e.row / image.width, e.col / image.width);
            ranges
                .iter()
                .position(|&(lo, hi)| lo <= ra.min(rb) && ra.max(rb) <= hi)
                .expect("every neighbour pair lies inside some strip")
        })
        .collect();
    AgentPartition::build(matrix, sets, owners)
}

/// `P2` mask: label `+1` is 255, label `-1` is 0.
pub fn mask_pgm(cut: &CutAssignment, width: usize, height: usize) -> String {
    let mut out = format!("P2\n{width} {height}\n255\n");
    for r in 0..height {
        let row: Vec<&str> = (0..width)
            .map(|c| {
                if cut.signs[r * width + c] > 0 {
                    "255"
                } else {
                    "0"
                }
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct SegmentOptions {
    pub threshold: f64,
    pub agents: usize,
    pub b: usize,
    pub mode: ScheduleMode,
    pub seed: u64,
    pub sigma: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub trials: usize,
    pub timing: bool,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self {
            threshold: 100.0,
            agents: 4,
            b: 3,
            mode: ScheduleMode::Uniform,
            seed: 0,
            sigma: 0.5,
            max_iters: 20_000,
            tol: 1e-7,
            trials: 200,
            timing: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub matrix: CoefficientMatrix,
    pub partition: AgentPartition,
    pub run: AsyncRun,
    pub cut: CutAssignment,
    pub cut_value: f64,
}

impl Segmentation {
    /// Per-pixel mask values in `{0, 255}`.
    pub fn mask(&self) -> Vec<u8> {
        self.cut
            .signs
            .iter()
            .map(|&s| if s > 0 { 255 } else { 0 })
            .collect()
    }
}

/// Builds the instance, runs the asynchronous solver and rounds the result.
pub fn segment(image: &Image, opts: &SegmentOptions) -> Result<Segmentation> {
    let matrix = build_weights(image, opts.threshold)?;
    let partition = strip_partition(image, &matrix, opts.agents)?;
    let n = matrix.n();
    let init = FactorState::random(choose_rank(n), n, &mut stream_rng(opts.seed, STREAM_INIT))?;
    let steps = async_step_sizes(&partition, &matrix, opts.b, opts.sigma)?;
    let schedule = make_schedule(
        partition.m(),
        n,
        opts.b,
        derive_seed(opts.seed, STREAM_SCHEDULE),
        opts.mode,
        opts.max_iters,
    )?;
    let run = run_async(
        &matrix,
        &partition,
        &steps,
        &schedule,
        &init,
        &AsyncOptions {
            max_iters: opts.max_iters,
            tol: opts.tol,
            timing: opts.timing,
            record_updates: false,
        },
    )?;
    let (value, cut) = hyperplane_round(
        &run.state,
        &matrix,
        opts.trials,
        derive_seed(opts.seed, STREAM_ROUNDING),
    )?;
    debug_assert_eq!(value, cut_value(&matrix, &cut)?);
    Ok(Segmentation {
        matrix,
        partition,
        run,
        cut,
        cut_value: value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_ascii_and_binary() {
        let img = two_block(4, 3);
        assert_eq!(parse_ppm(img.to_ppm_ascii().as_bytes()).unwrap(), img);
        assert_eq!(parse_ppm(&img.to_ppm_binary()).unwrap(), img);
        let one = parse_ppm(b"P3\n# comment\n1 1\n255\n10 20 30\n").unwrap();
        assert_eq!(one.rgb, vec![[10, 20, 30]]);
        assert_eq!(build_weights(&one, 0.0).unwrap().nnz(), 0);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse_ppm(b"P5\n1 1\n255\n0"),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(
            parse_ppm(b"P3\n1 x\n255\n"),
            Err(Error::CorruptHeader(_))
        ));
        assert!(matches!(
            parse_ppm(b"P3\n1 1\n15\n1 2 3"),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(
            parse_ppm(b"P3\n2 1\n255\n1 2 3 4"),
            Err(Error::TruncatedPixelData {
                expected: 6,
                found: 4
            })
        ));
        assert!(matches!(
            parse_ppm(b"P6\n2 1\n255\n\x01\x02"),
            Err(Error::TruncatedPixelData {
                expected: 6,
                found: 2
            })
        ));
    }

    #[test]
    fn weight_rule() {
        let img = Image::new(2, 1, vec![[0, 0, 0], [255, 0, 0]]).unwrap();
        assert_eq!(build_weights(&img, 100.0).unwrap().weight(0, 1), 255.0);
        assert_eq!(build_weights(&img, 255.0).unwrap().nnz(), 0);
        let flat = Image::new(2, 2, vec![[7, 7, 7]; 4]).unwrap();
        assert_eq!(build_weights(&flat, 0.0).unwrap().nnz(), 0);
        assert_eq!(neighbour_pairs(2, 2).len(), 4);
        assert!(build_weights(&img, -1.0).is_err());
    }

    #[test]
    fn strips() {
        let img = checkerboard(4, 4);
        let m = build_weights(&img, 100.0).unwrap();
        let part = strip_partition(&img, &m, 2).unwrap();
        assert_eq!(part.set(0), (0..12).collect::<Vec<_>>().as_slice());
        assert_eq!(part.set(1), (8..16).collect::<Vec<_>>().as_slice());
        assert_eq!(part.shared_count(), 4);
        let single = strip_partition(&img, &m, 1).unwrap();
        assert_eq!(single.m(), 1);
        assert!(matches!(
            strip_partition(&img, &m, 5),
            Err(Error::TooManyAgents { .. })
        ));
    }

    #[test]
    fn mask_format() {
        let cut = CutAssignment {
            signs: vec![1, -1, -1, 1],
        };
        assert_eq!(mask_pgm(&cut, 2, 2), "P2\n2 2\n255\n255 0\n0 255\n");
    }
}
