//! Rim detection: from a color image of a roughly vertical bottle, find the
//! upper and lower label rims as subpixel pixel chains and fit the full
//! projective label region.
//!
//! Pipeline: grayscale, vertical gradient threshold, edge-block grid,
//! same-sign block chains with gap tolerance, per-column non-maximum
//! suppression with parabolic subpixel peaks, ellipse fits, common external
//! tangents.

use std::path::Path;

use image::{Rgb, RgbImage};
use thiserror::Error;

use crate::camera::RimSide;
use crate::conic::{
    common_external_tangents, fit_ellipse, tangent_pole, ConicError, Ellipse,
};
use crate::geometry::{HLine, HPoint};

/// Errors from the detection pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RimError {
    /// The input is too small to hold a vertical gradient.
    #[error("image too small: need height >= 2")]
    ImageTooSmall,
    /// No edge-block chain long enough to be a rim.
    #[error("no rim found")]
    NoRimFound,
    /// Ellipse fitting or the tangent construction failed.
    #[error(transparent)]
    Conic(#[from] ConicError),
    /// Debug-stage output could not be written.
    #[error("debug dump failed: {0}")]
    DebugDump(String),
}

/// Tuning parameters of the detector. `block_size: None` derives the block
/// size from the image width (width / 80, at least 4 px).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RimDetectParams {
    /// Minimum |vertical gradient| in gray levels for an edge pixel.
    pub min_gradient: f64,
    /// Edge-block side length in pixels; derived from the width when `None`.
    pub block_size: Option<usize>,
    /// Fraction of the block width that must be edge pixels.
    pub min_edge_fraction: f64,
    /// Largest hole (in blocks) a chain may bridge.
    pub max_chain_gap: usize,
}

impl Default for RimDetectParams {
    fn default() -> Self {
        Self { min_gradient: 80.0, block_size: None, min_edge_fraction: 0.60, max_chain_gap: 2 }
    }
}

impl RimDetectParams {
    /// Block size for a given image width.
    pub fn effective_block(&self, width: usize) -> usize {
        self.block_size.unwrap_or((width / 80).max(4)).max(2)
    }
}

/// Thresholded vertical-gradient map. `grad` holds the signed half central
/// difference in gray levels; `mask` marks pixels at or above the threshold.
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub grad: Vec<f64>,
    pub mask: Vec<bool>,
}

/// One cell of the edge-block grid.
#[derive(Debug, Clone, Copy, Default)]
pub struct EdgeBlock {
    /// Edge pixels inside the block.
    pub count: u32,
    /// Majority gradient sign (+1 / -1); 0 when below the edge threshold.
    pub sign: i8,
    /// Chain id after linking, for edge blocks only.
    pub chain: Option<u32>,
}

/// Block grid over the edge map.
pub struct EdgeBlockGrid {
    pub cols: usize,
    pub rows: usize,
    pub block_size: usize,
    pub blocks: Vec<EdgeBlock>,
}

impl EdgeBlockGrid {
    pub fn at(&self, col: usize, row: usize) -> &EdgeBlock {
        &self.blocks[row * self.cols + col]
    }
}

/// One rim as subpixel points, at most one per image column, x strictly
/// increasing.
#[derive(Debug, Clone)]
pub struct RimChain {
    pub points: Vec<(f64, f64)>,
    pub polarity: i8,
    /// First and last pixel column covered.
    pub extent: (u32, u32),
}

impl RimChain {
    fn mean_y(&self) -> f64 {
        self.points.iter().map(|p| p.1).sum::<f64>() / self.points.len() as f64
    }

    fn width(&self) -> u32 {
        self.extent.1 - self.extent.0
    }
}

/// Detected label region: rim ellipses, silhouette tangents, vanishing point.
#[derive(Debug, Clone)]
pub struct LabelRegion {
    pub upper: Ellipse,
    pub lower: Ellipse,
    pub left: HLine,
    pub right: HLine,
    pub vp: HPoint,
    /// Rim whose chain spans more pixel columns.
    pub wider: RimSide,
    /// A point on the visible arc of each rim (mid-chain when detected);
    /// the visible arc is the ellipse branch through this point.
    pub upper_apex: HPoint,
    pub lower_apex: HPoint,
    /// Mean geometric fit residuals of the chains, px.
    pub upper_residual: f64,
    pub lower_residual: f64,
}

/// ITU-R BT.601 luma of an RGB image, one f64 per pixel in row-major order.
pub fn luma(image: &RgbImage) -> Vec<f64> {
    image
        .pixels()
        .map(|p| 0.299 * p.0[0] as f64 + 0.587 * p.0[1] as f64 + 0.114 * p.0[2] as f64)
        .collect()
}

/// Signed vertical gradient (half central difference, one-sided at the
/// borders) and the thresholded edge mask.
pub fn vertical_edge_map(image: &RgbImage, params: &RimDetectParams) -> Result<EdgeMap, RimError> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if h < 2 || w == 0 {
        return Err(RimError::ImageTooSmall);
    }
    let gray = luma(image);
    let mut grad = vec![0.0; w * h];
    for y in 0..h {
        let (above, below, scale) = if y == 0 {
            (0, 1, 1.0)
        } else if y == h - 1 {
            (h - 2, h - 1, 1.0)
        } else {
            (y - 1, y + 1, 0.5)
        };
        for x in 0..w {
            grad[y * w + x] = (gray[below * w + x] - gray[above * w + x]) * scale;
        }
    }
    let mask = grad.iter().map(|g| g.abs() >= params.min_gradient).collect();
    Ok(EdgeMap { width: w, height: h, grad, mask })
}

/// Group edge pixels into blocks, threshold by edge count, label the sign.
pub fn edge_block_grid(edge: &EdgeMap, params: &RimDetectParams) -> EdgeBlockGrid {
    let bs = params.effective_block(edge.width);
    let cols = edge.width.div_ceil(bs);
    let rows = edge.height.div_ceil(bs);
    let mut blocks = vec![EdgeBlock::default(); cols * rows];
    let mut pos = vec![0u32; cols * rows];
    let mut neg = vec![0u32; cols * rows];
    for y in 0..edge.height {
        for x in 0..edge.width {
            if edge.mask[y * edge.width + x] {
                let b = (y / bs) * cols + x / bs;
                blocks[b].count += 1;
                if edge.grad[y * edge.width + x] >= 0.0 {
                    pos[b] += 1;
                } else {
                    neg[b] += 1;
                }
            }
        }
    }
    let need = (params.min_edge_fraction * bs as f64).ceil() as u32;
    for (i, b) in blocks.iter_mut().enumerate() {
        if b.count >= need.max(1) {
            b.sign = if pos[i] >= neg[i] { 1 } else { -1 };
        }
    }
    EdgeBlockGrid { cols, rows, block_size: bs, blocks }
}

struct DisjointSet(Vec<u32>);

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self((0..n as u32).collect())
    }
    fn find(&mut self, i: u32) -> u32 {
        let mut root = i;
        while self.0[root as usize] != root {
            root = self.0[root as usize];
        }
        let mut cur = i;
        while self.0[cur as usize] != root {
            let next = self.0[cur as usize];
            self.0[cur as usize] = root;
            cur = next;
        }
        root
    }
    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[rb as usize] = ra;
        }
    }
}

/// Link same-sign edge blocks within `max_chain_gap + 1` blocks (Chebyshev)
/// and assign chain ids in place.
fn link_chains(grid: &mut EdgeBlockGrid, params: &RimDetectParams) {
    let reach = (params.max_chain_gap + 1) as i64;
    let (cols, rows) = (grid.cols as i64, grid.rows as i64);
    let mut ds = DisjointSet::new(grid.blocks.len());
    for r in 0..rows {
        for c in 0..cols {
            let i = (r * cols + c) as usize;
            let sign = grid.blocks[i].sign;
            if sign == 0 {
                continue;
            }
            for dr in 0..=reach {
                for dc in -reach..=reach {
                    if dr == 0 && dc <= 0 {
                        continue;
                    }
                    let (nr, nc) = (r + dr, c + dc);
                    if nr >= rows || nc < 0 || nc >= cols {
                        continue;
                    }
                    let j = (nr * cols + nc) as usize;
                    if grid.blocks[j].sign == sign {
                        ds.union(i as u32, j as u32);
                    }
                }
            }
        }
    }
    for i in 0..grid.blocks.len() {
        if grid.blocks[i].sign != 0 {
            let root = ds.find(i as u32);
            grid.blocks[i].chain = Some(root);
        }
    }
}

/// Pick the chain of the given sign with the widest column span.
/// Returns (chain id, span in blocks).
fn best_chain(grid: &EdgeBlockGrid, sign: i8) -> Option<(u32, usize)> {
    use std::collections::HashMap;
    let mut span: HashMap<u32, (usize, usize, usize)> = HashMap::new();
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let b = grid.at(c, r);
            if b.sign == sign {
                if let Some(id) = b.chain {
                    let e = span.entry(id).or_insert((usize::MAX, 0, 0));
                    e.0 = e.0.min(c);
                    e.1 = e.1.max(c);
                    e.2 += 1;
                }
            }
        }
    }
    span.into_iter()
        .map(|(id, (lo, hi, count))| (id, hi - lo + 1, count))
        .max_by_key(|&(id, s, count)| (s, count, std::cmp::Reverse(id)))
        .map(|(id, s, _)| (id, s))
}

/// Thin one chain to subpixel rim points: per image column, the strongest
/// local |gradient| maximum inside the chain's blocks, refined by a 3-point
/// parabola.
fn thin_chain(edge: &EdgeMap, grid: &EdgeBlockGrid, id: u32, sign: i8) -> Option<RimChain> {
    let bs = grid.block_size;
    // rows of chain blocks per block column
    let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); grid.cols];
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let b = grid.at(c, r);
            if b.chain == Some(id) && b.sign == sign {
                rows_of[c].push(r);
            }
        }
    }
    let mut points = Vec::new();
    for x in 0..edge.width {
        let bc = x / bs;
        if rows_of[bc].is_empty() {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for &br in &rows_of[bc] {
            let y_lo = (br * bs).saturating_sub(1);
            let y_hi = (((br + 1) * bs) + 1).min(edge.height);
            for y in y_lo..y_hi {
                let i = y * edge.width + x;
                if !edge.mask[i] {
                    continue;
                }
                let g = edge.grad[i];
                if (g >= 0.0) != (sign > 0) {
                    continue;
                }
                let m = g.abs();
                let up = if y > 0 { edge.grad[i - edge.width].abs() } else { 0.0 };
                let down = if y + 1 < edge.height { edge.grad[i + edge.width].abs() } else { 0.0 };
                if m >= up && m >= down {
                    if best.map_or(true, |(bm, _)| m > bm) {
                        best = Some((m, y));
                    }
                }
            }
        }
        if let Some((_, y)) = best {
            let i = y * edge.width + x;
            let m0 = edge.grad[i].abs();
            let delta = if y > 0 && y + 1 < edge.height {
                let mm = edge.grad[i - edge.width].abs();
                let mp = edge.grad[i + edge.width].abs();
                let denom = mm - 2.0 * m0 + mp;
                if denom.abs() > 1e-12 {
                    (0.5 * (mm - mp) / denom).clamp(-0.5, 0.5)
                } else {
                    0.0
                }
            } else {
                0.0
            };
            points.push((x as f64, y as f64 + delta));
        }
    }
    if points.len() < 2 {
        return None;
    }
    let extent = (points[0].0 as u32, points[points.len() - 1].0 as u32);
    Some(RimChain { points, polarity: sign, extent })
}

/// Longest positive-sign and negative-sign chains, thinned to subpixel rim
/// points and ordered (upper, lower) by mean image row.
pub fn extract_rim_chains(
    edge: &EdgeMap,
    params: &RimDetectParams,
) -> Result<(RimChain, RimChain), RimError> {
    let mut grid = edge_block_grid(edge, params);
    link_chains(&mut grid, params);
    let mut chains = Vec::new();
    for sign in [1i8, -1] {
        let (id, span) = best_chain(&grid, sign).ok_or(RimError::NoRimFound)?;
        if span < 8 {
            return Err(RimError::NoRimFound);
        }
        chains.push(thin_chain(edge, &grid, id, sign).ok_or(RimError::NoRimFound)?);
    }
    let (a, b) = (chains.remove(0), chains.remove(0));
    if a.mean_y() <= b.mean_y() {
        Ok((a, b))
    } else {
        Ok((b, a))
    }
}

fn fit_chain(chain: &RimChain) -> Result<(Ellipse, f64), RimError> {
    let fit = fit_ellipse(&chain.points)?;
    let mean_geom = chain
        .points
        .iter()
        .map(|&(x, y)| fit.ellipse.geometric_distance(x, y))
        .sum::<f64>()
        / chain.points.len() as f64;
    if mean_geom > 1.5 {
        return Err(RimError::Conic(ConicError::DegenerateFit));
    }
    Ok((fit.ellipse, mean_geom))
}

/// Full detection: edge map, chains, per-rim ellipse fits, common external
/// tangents and their vanishing point.
pub fn detect_label_region(
    image: &RgbImage,
    params: &RimDetectParams,
) -> Result<LabelRegion, RimError> {
    detect_label_region_impl(image, params, None)
}

/// As [`detect_label_region`], additionally writing numbered stage images
/// (edge mask, signed blocks, chains, rim points, fitted region) to `dir`.
pub fn detect_label_region_debug(
    image: &RgbImage,
    params: &RimDetectParams,
    dir: &Path,
) -> Result<LabelRegion, RimError> {
    detect_label_region_impl(image, params, Some(dir))
}

fn detect_label_region_impl(
    image: &RgbImage,
    params: &RimDetectParams,
    debug_dir: Option<&Path>,
) -> Result<LabelRegion, RimError> {
    let edge = vertical_edge_map(image, params)?;
    if let Some(dir) = debug_dir {
        dump_edge_stages(&edge, params, dir)?;
    }
    let (upper_chain, lower_chain) = extract_rim_chains(&edge, params)?;
    if let Some(dir) = debug_dir {
        dump_chains(image, &[&upper_chain, &lower_chain], dir)?;
    }
    let (upper, upper_residual) = fit_chain(&upper_chain)?;
    let (lower, lower_residual) = fit_chain(&lower_chain)?;
    let (la, lb, vp) = common_external_tangents(&upper, &lower)?;
    // order tangents left/right by their touch point on the upper rim
    let xa = tangent_pole(&upper, &la).to_xy().map(|p| p.0).unwrap_or(f64::MAX);
    let xb = tangent_pole(&upper, &lb).to_xy().map(|p| p.0).unwrap_or(f64::MAX);
    let (left, right) = if xa <= xb { (la, lb) } else { (lb, la) };
    let wider =
        if upper_chain.width() >= lower_chain.width() { RimSide::Upper } else { RimSide::Lower };
    let mid = |c: &RimChain| {
        let p = c.points[c.points.len() / 2];
        HPoint::new(p.0, p.1)
    };
    let (upper_apex, lower_apex) = (mid(&upper_chain), mid(&lower_chain));
    let region = LabelRegion {
        upper,
        lower,
        left,
        right,
        vp,
        wider,
        upper_apex,
        lower_apex,
        upper_residual,
        lower_residual,
    };
    if let Some(dir) = debug_dir {
        dump_region(image, &region, dir)?;
    }
    Ok(region)
}

fn save(img: &RgbImage, dir: &Path, name: &str) -> Result<(), RimError> {
    std::fs::create_dir_all(dir).map_err(|e| RimError::DebugDump(e.to_string()))?;
    img.save(dir.join(name)).map_err(|e| RimError::DebugDump(e.to_string()))
}

fn dump_edge_stages(edge: &EdgeMap, params: &RimDetectParams, dir: &Path) -> Result<(), RimError> {
    let (w, h) = (edge.width as u32, edge.height as u32);
    let mut mask_img = RgbImage::new(w, h);
    let mut block_img = RgbImage::new(w, h);
    let grid = {
        let mut g = edge_block_grid(edge, params);
        link_chains(&mut g, params);
        g
    };
    for y in 0..h {
        for x in 0..w {
            let i = (y as usize) * edge.width + x as usize;
            if edge.mask[i] {
                let v = edge.grad[i].abs().min(255.0) as u8;
                mask_img.put_pixel(x, y, Rgb([v, v, v]));
            }
            let b = grid.at(x as usize / grid.block_size, y as usize / grid.block_size);
            let c = match b.sign {
                1 => Rgb([200, 40, 40]),
                -1 => Rgb([40, 170, 40]),
                _ => Rgb([0, 0, 0]),
            };
            block_img.put_pixel(x, y, c);
        }
    }
    save(&mask_img, dir, "stage_01_edges.png")?;
    save(&block_img, dir, "stage_02_blocks.png")
}

fn dump_chains(image: &RgbImage, chains: &[&RimChain], dir: &Path) -> Result<(), RimError> {
    let mut out = image.clone();
    for (ci, chain) in chains.iter().enumerate() {
        let color = if ci == 0 { Rgb([255, 64, 64]) } else { Rgb([64, 255, 64]) };
        for &(x, y) in &chain.points {
            let (xi, yi) = (x.round() as i64, y.round() as i64);
            if xi >= 0 && yi >= 0 && (xi as u32) < out.width() && (yi as u32) < out.height() {
                out.put_pixel(xi as u32, yi as u32, color);
            }
        }
    }
    save(&out, dir, "stage_03_chains.png")
}

fn dump_region(image: &RgbImage, region: &LabelRegion, dir: &Path) -> Result<(), RimError> {
    let mut out = image.clone();
    let mut plot = |x: f64, y: f64, c: Rgb<u8>| {
        let (xi, yi) = (x.round() as i64, y.round() as i64);
        if xi >= 0 && yi >= 0 && (xi as u32) < out.width() && (yi as u32) < out.height() {
            out.put_pixel(xi as u32, yi as u32, c);
        }
    };
    for e in [&region.upper, &region.lower] {
        for i in 0..2048 {
            let (x, y) = e.point_at(std::f64::consts::TAU * i as f64 / 2048.0);
            plot(x, y, Rgb([255, 220, 0]));
        }
    }
    for l in [&region.left, &region.right] {
        // draw over the full height
        for yi in 0..image.height() {
            let y = yi as f64;
            if l.l1.abs() > 1e-9 {
                plot(-(l.l2 * y + l.l3) / l.l1, y, Rgb([0, 160, 255]));
            }
        }
    }
    save(&out, dir, "stage_04_region.png")
}
