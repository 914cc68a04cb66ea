//! Mask generation (scattered, uni-block, multi-block) and masked inputs.
//!
//! Masks use 1 for observed and 0 for missing. A block is a contiguous
//! all-missing rectangle spanning at least 4 rows and 4 columns.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkern::{Matrix, SeededRng};

/// Smallest block side length.
pub const MIN_BLOCK_SIDE: usize = 4;

/// Placement attempts per block before restarting a multi-block layout.
const PLACEMENT_TRIES: usize = 200;
/// Full layout restarts before giving up.
const LAYOUT_RESTARTS: usize = 200;
/// Allowed relative deviation of the achieved zero count for block masks.
pub const BLOCK_RATE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Pattern {
    Scattered,
    Uniblock,
    Multiblock { k: usize },
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Scattered => write!(f, "scattered"),
            Pattern::Uniblock => write!(f, "uniblock"),
            Pattern::Multiblock { k } => write!(f, "multiblock{k}"),
        }
    }
}

impl std::str::FromStr for Pattern {
    type Err = Error;

    /// Accepts `scattered`, `uniblock`, `multiblock` (k = 3) or `multiblockK`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "scattered" => Ok(Pattern::Scattered),
            "uniblock" | "block" => Ok(Pattern::Uniblock),
            "multiblock" | "triblock" => Ok(Pattern::Multiblock { k: 3 }),
            _ => {
                if let Some(k) = s.strip_prefix("multiblock") {
                    let k = k
                        .trim_start_matches([':', '='])
                        .parse()
                        .map_err(|_| Error::Spec(format!("bad block count in pattern `{s}`")))?;
                    Ok(Pattern::Multiblock { k })
                } else {
                    Err(Error::Spec(format!(
                        "unknown mask pattern `{s}` (expected scattered, uniblock, multiblockK)"
                    )))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub pattern: Pattern,
    pub rate: f64,
    pub seed: u64,
}

impl MaskSpec {
    pub fn new(pattern: Pattern, rate: f64, seed: u64) -> Result<Self> {
        check_rate(rate)?;
        if let Pattern::Multiblock { k } = pattern {
            if k < 2 {
                return Err(Error::Spec(format!("multiblock needs k >= 2, got {k}")));
            }
        }
        Ok(MaskSpec { pattern, rate, seed })
    }

    pub fn generate(&self, rows: usize, cols: usize) -> Result<GeneratedMask> {
        match self.pattern {
            Pattern::Scattered => {
                let mask = gen_scattered(rows, cols, self.rate, self.seed)?;
                Ok(GeneratedMask::new(mask, Vec::new(), self.rate))
            }
            Pattern::Uniblock => gen_uniblock(rows, cols, self.rate, self.seed),
            Pattern::Multiblock { k } => gen_multiblock(rows, cols, self.rate, k, self.seed),
        }
    }
}

/// An axis-aligned rectangle of cells, inclusive of `top`/`left`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn bottom(&self) -> usize {
        self.top + self.height - 1
    }

    pub fn right(&self) -> usize {
        self.left + self.width - 1
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn overlaps(&self, other: &Rect) -> bool {
        self.top <= other.bottom()
            && other.top <= self.bottom()
            && self.left <= other.right()
            && other.left <= self.right()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        (self.top..=self.bottom()).contains(&i) && (self.left..=self.right()).contains(&j)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedMask {
    pub mask: Matrix,
    /// Generating rectangles; empty for scattered masks.
    pub blocks: Vec<Rect>,
    pub target_rate: f64,
    pub achieved_rate: f64,
}

impl GeneratedMask {
    fn new(mask: Matrix, blocks: Vec<Rect>, target_rate: f64) -> Self {
        let zeros = mask.count_where(|v| v == 0.0);
        let achieved_rate = zeros as f64 / mask.len().max(1) as f64;
        GeneratedMask {
            mask,
            blocks,
            target_rate,
            achieved_rate,
        }
    }

    pub fn zeros(&self) -> usize {
        self.mask.count_where(|v| v == 0.0)
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::Spec(format!("missing rate must lie in (0, 1), got {rate}")));
    }
    Ok(())
}

fn target_zeros(rows: usize, cols: usize, rate: f64) -> usize {
    (rate * (rows * cols) as f64).round() as usize
}

/// Scattered mask with exactly `round(rate·m·n)` zeros, placed at the
/// lowest-ranked cells of a seeded uniform random matrix.
pub fn gen_scattered(rows: usize, cols: usize, rate: f64, seed: u64) -> Result<Matrix> {
    check_rate(rate)?;
    let total = rows * cols;
    let zeros = target_zeros(rows, cols, rate);
    if zeros >= total {
        return Err(Error::Spec(format!(
            "rate {rate} masks all {total} cells of a {rows}x{cols} matrix"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let scores: Vec<f64> = (0..total).map(|_| rng.uniform()).collect();
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut mask = Matrix::ones(rows, cols);
    for &cell in &order[..zeros] {
        mask.as_mut_slice()[cell] = 0.0;
    }
    Ok(mask)
}

/// Block shapes `(height, width)` whose area is closest to `target`.
///
/// A block may not span every row or every column, so each row and column
/// keeps at least one observed cell.
fn closest_shapes(rows: usize, cols: usize, target: usize) -> Vec<(usize, usize)> {
    let max_h = rows.saturating_sub(1);
    let max_w = cols.saturating_sub(1);
    let mut best = usize::MAX;
    let mut shapes = Vec::new();
    for h in MIN_BLOCK_SIDE..=max_h {
        for w in MIN_BLOCK_SIDE..=max_w {
            let d = (h * w).abs_diff(target);
            if d < best {
                best = d;
                shapes.clear();
            }
            if d == best {
                shapes.push((h, w));
            }
        }
    }
    shapes
}

fn infeasible(rows: usize, cols: usize) -> Error {
    Error::Spec(format!(
        "no {side}x{side} block fits a {rows}x{cols} matrix while leaving every row and column \
         partly observed (need at least {} rows and columns)",
        MIN_BLOCK_SIDE + 1,
        side = MIN_BLOCK_SIDE
    ))
}

fn paint(rows: usize, cols: usize, blocks: &[Rect]) -> Matrix {
    let mut mask = Matrix::ones(rows, cols);
    for b in blocks {
        for i in b.top..=b.bottom() {
            for j in b.left..=b.right() {
                mask[(i, j)] = 0.0;
            }
        }
    }
    mask
}

/// One contiguous missing rectangle of area closest to `round(rate·m·n)`.
/// Shape is drawn uniformly among the closest-area shapes, then the corner
/// uniformly among placements that fit.
pub fn gen_uniblock(rows: usize, cols: usize, rate: f64, seed: u64) -> Result<GeneratedMask> {
    check_rate(rate)?;
    let target = target_zeros(rows, cols, rate);
    let shapes = closest_shapes(rows, cols, target);
    if shapes.is_empty() {
        return Err(infeasible(rows, cols));
    }
    let mut rng = SeededRng::new(seed);
    let (height, width) = shapes[rng.below(shapes.len())];
    let rect = Rect {
        top: rng.below(rows - height + 1),
        left: rng.below(cols - width + 1),
        height,
        width,
    };
    let mask = paint(rows, cols, &[rect]);
    Ok(GeneratedMask::new(mask, vec![rect], rate))
}

/// `k` pairwise disjoint rectangles (touching edges allowed) with total area
/// within [`BLOCK_RATE_TOLERANCE`] of `round(rate·m·n)`.
pub fn gen_multiblock(rows: usize, cols: usize, rate: f64, k: usize, seed: u64) -> Result<GeneratedMask> {
    check_rate(rate)?;
    if k == 0 {
        return Err(Error::Spec("multiblock needs at least one block".into()));
    }
    if k == 1 {
        return gen_uniblock(rows, cols, rate, seed);
    }
    let target = target_zeros(rows, cols, rate);
    let per_block: Vec<usize> = (0..k).map(|b| target / k + usize::from(b < target % k)).collect();
    let shape_sets: Vec<Vec<(usize, usize)>> = per_block
        .iter()
        .map(|&t| closest_shapes(rows, cols, t))
        .collect();
    if shape_sets.iter().any(Vec::is_empty) {
        return Err(infeasible(rows, cols));
    }
    let mut rng = SeededRng::new(seed);
    'layout: for _ in 0..LAYOUT_RESTARTS {
        let mut placed: Vec<Rect> = Vec::with_capacity(k);
        for shapes in &shape_sets {
            let (height, width) = shapes[rng.below(shapes.len())];
            let mut ok = None;
            for _ in 0..PLACEMENT_TRIES {
                let cand = Rect {
                    top: rng.below(rows - height + 1),
                    left: rng.below(cols - width + 1),
                    height,
                    width,
                };
                if placed.iter().all(|p| !p.overlaps(&cand)) {
                    ok = Some(cand);
                    break;
                }
            }
            match ok {
                Some(r) => placed.push(r),
                None => continue 'layout,
            }
        }
        let area: usize = placed.iter().map(Rect::area).sum();
        if (area as f64 - target as f64).abs() > BLOCK_RATE_TOLERANCE * target as f64 {
            return Err(Error::Spec(format!(
                "{k} blocks of the closest feasible shapes cover {area} cells, more than \
                 {:.0}% away from the target {target}; lower the rate or k",
                BLOCK_RATE_TOLERANCE * 100.0
            )));
        }
        let mask = paint(rows, cols, &placed);
        return Ok(GeneratedMask::new(mask, placed, rate));
    }
    Err(Error::Spec(format!(
        "could not place {k} disjoint blocks covering {target} cells in a {rows}x{cols} matrix \
         after {LAYOUT_RESTARTS} attempts; lower the rate or k"
    )))
}

/// True iff the inclusive rectangle `(i_l, j_l)..=(i_u, j_u)` spans at least
/// 4x4 cells and every cell in it is missing.
pub fn is_block_region(mask: &Matrix, i_l: usize, j_l: usize, i_u: usize, j_u: usize) -> Result<bool> {
    if i_l > i_u || j_l > j_u || i_u >= mask.rows() || j_u >= mask.cols() {
        return Err(Error::Validation(format!(
            "region ({i_l},{j_l})..=({i_u},{j_u}) is not a valid range in a {}x{} mask",
            mask.rows(),
            mask.cols()
        )));
    }
    if i_u < i_l + (MIN_BLOCK_SIDE - 1) || j_u < j_l + (MIN_BLOCK_SIDE - 1) {
        return Ok(false);
    }
    Ok((i_l..=i_u).all(|i| (j_l..=j_u).all(|j| mask[(i, j)] == 0.0)))
}

/// Observed values with the missing cells zeroed, plus the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMatrix {
    values: Matrix,
    mask: Matrix,
}

impl MaskedMatrix {
    /// Builds from a matrix whose missing cells are NaN.
    pub fn from_file_form(x: &Matrix) -> Self {
        let mask = x.map(|v| if v.is_nan() { 0.0 } else { 1.0 });
        let values = x.map(|v| if v.is_nan() { 0.0 } else { v });
        MaskedMatrix { values, mask }
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn mask(&self) -> &Matrix {
        &self.mask
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn observed_count(&self) -> usize {
        self.mask.count_where(|v| v == 1.0)
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[(i, j)] == 1.0
    }

    /// Missing cells as NaN.
    pub fn to_file_form(&self) -> Matrix {
        self.values
            .zip_map(&self.mask, |v, m| if m == 1.0 { v } else { f64::NAN })
            .expect("values and mask share a shape")
    }

    /// Replaces the observed values while keeping the mask.
    pub fn with_values(&self, values: Matrix) -> Result<MaskedMatrix> {
        apply_mask(&values, &self.mask)
    }
}

fn check_binary(mask: &Matrix) -> Result<()> {
    if let Some((k, v)) = mask
        .as_slice()
        .iter()
        .enumerate()
        .find(|(_, &v)| v != 0.0 && v != 1.0)
    {
        return Err(Error::Validation(format!(
            "mask entry ({}, {}) is {v}, expected 0 or 1",
            k / mask.cols(),
            k % mask.cols()
        )));
    }
    Ok(())
}

/// Copies observed cells of `x` bit-exactly; missing cells become the
/// in-memory sentinel 0.
pub fn apply_mask(x: &Matrix, mask: &Matrix) -> Result<MaskedMatrix> {
    x.check_same_shape("apply_mask", mask)?;
    check_binary(mask)?;
    let values = x.zip_map(mask, |v, m| if m == 1.0 { v } else { 0.0 })?;
    Ok(MaskedMatrix {
        values,
        mask: mask.clone(),
    })
}

/// JSON sidecar written next to a mask CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSidecar {
    pub pattern: Pattern,
    pub rate: f64,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub zeros: usize,
    pub achieved_rate: f64,
    pub blocks: Vec<Rect>,
}

impl MaskSidecar {
    pub fn new(spec: &MaskSpec, generated: &GeneratedMask) -> Self {
        MaskSidecar {
            pattern: spec.pattern,
            rate: spec.rate,
            seed: spec.seed,
            rows: generated.mask.rows(),
            cols: generated.mask.cols(),
            zeros: generated.zeros(),
            achieved_rate: generated.achieved_rate,
            blocks: generated.blocks.clone(),
        }
    }
}

/// Mask as CSV text of `0`/`1` integers.
pub fn mask_to_csv(mask: &Matrix) -> String {
    let mut out = String::with_capacity(mask.len() * 2);
    for i in 0..mask.rows() {
        let line: Vec<&str> = mask
            .row(i)
            .iter()
            .map(|&v| if v == 1.0 { "1" } else { "0" })
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_mask_csv(path: &Path, mask: &Matrix) -> Result<()> {
    check_binary(mask)?;
    std::fs::write(path, mask_to_csv(mask))?;
    Ok(())
}

pub fn read_mask_csv(path: &Path) -> Result<Matrix> {
    let ds = crate::data::load_csv(path, &crate::data::CsvOptions::default())?;
    if ds.inherent_mask.count_where(|v| v == 0.0) > 0 {
        return Err(Error::Validation(format!(
            "mask file {} has empty cells",
            path.display()
        )));
    }
    check_binary(&ds.matrix)?;
    Ok(ds.matrix)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_rate_gives_all_ones() {
        let m = gen_scattered(10, 10, 0.001, 1).unwrap();
        assert_eq!(m, Matrix::ones(10, 10));
    }

    #[test]
    fn scattered_exact_count() {
        let m = gen_scattered(10, 10, 0.6, 7).unwrap();
        assert_eq!(m.count_where(|v| v == 0.0), 60);
        assert_eq!(m, gen_scattered(10, 10, 0.6, 7).unwrap());
    }

    #[test]
    fn rate_out_of_range_rejected() {
        for r in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(gen_scattered(5, 5, r, 0), Err(Error::Spec(_))));
        }
    }

    #[test]
    fn uniblock_36_cells() {
        // Enumerated by hand: area-36 rectangles with both sides in 4..=9 are 4x9, 6x6, 9x4.
        for seed in 0..20 {
            let g = gen_uniblock(10, 10, 0.36, seed).unwrap();
            let r = g.blocks[0];
            assert_eq!(r.area(), 36);
            assert!([(4, 9), (6, 6), (9, 4)].contains(&(r.height, r.width)));
            assert!(is_block_region(&g.mask, r.top, r.left, r.bottom(), r.right()).unwrap());
            for i in 0..10 {
                for j in 0..10 {
                    assert_eq!(g.mask[(i, j)] == 0.0, r.contains(i, j));
                }
            }
        }
    }

    #[test]
    fn uniblock_20x20_rate_06() {
        let g = gen_uniblock(20, 20, 0.6, 3).unwrap();
        let z = g.zeros() as f64;
        assert!((z - 240.0).abs() <= 0.05 * 240.0);
    }

    #[test]
    fn uniblock_too_small() {
        assert!(matches!(gen_uniblock(3, 10, 0.2, 0), Err(Error::Spec(_))));
    }

    #[test]
    fn multiblock_k1_is_uniblock() {
        assert_eq!(
            gen_multiblock(12, 15, 0.3, 1, 5).unwrap(),
            gen_uniblock(12, 15, 0.3, 5).unwrap()
        );
    }

    #[test]
    fn multiblock_three_disjoint() {
        for seed in 0..10 {
            let g = gen_multiblock(30, 30, 0.3, 3, seed).unwrap();
            assert_eq!(g.blocks.len(), 3);
            for (a, ra) in g.blocks.iter().enumerate() {
                assert!(ra.height >= 4 && ra.width >= 4);
                for rb in &g.blocks[a + 1..] {
                    assert!(!ra.overlaps(rb));
                }
            }
            let z = g.zeros() as f64;
            assert!((z - 270.0).abs() <= 0.05 * 270.0, "zeros {z}");
            let area: usize = g.blocks.iter().map(Rect::area).sum();
            assert_eq!(area, g.zeros());
        }
    }

    #[test]
    fn multiblock_overfull_fails() {
        // a 10x10 grid holds at most four disjoint 4x4 squares
        assert!(matches!(gen_multiblock(10, 10, 0.9, 5, 0), Err(Error::Spec(_))));
    }

    #[test]
    fn block_predicate_boundaries() {
        let mut m = Matrix::ones(8, 8);
        for i in 1..5 {
            for j in 2..7 {
                m[(i, j)] = 0.0;
            }
        }
        assert!(is_block_region(&m, 1, 2, 4, 5).unwrap());
        // 3 rows only
        assert!(!is_block_region(&m, 1, 2, 3, 6).unwrap());
        m[(3, 3)] = 1.0;
        assert!(!is_block_region(&m, 1, 2, 4, 5).unwrap());
        assert!(is_block_region(&m, 0, 0, 8, 3).is_err());
        assert!(is_block_region(&m, 3, 0, 2, 3).is_err());
    }

    #[test]
    fn apply_mask_cases() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let full = apply_mask(&x, &Matrix::ones(2, 2)).unwrap();
        assert_eq!(full.values(), &x);
        let none = apply_mask(&x, &Matrix::zeros(2, 2)).unwrap();
        assert_eq!(none.values(), &Matrix::zeros(2, 2));
        assert!(none.to_file_form().as_slice().iter().all(|v| v.is_nan()));
        let diag = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let xm = apply_mask(&x, &diag).unwrap();
        let f = xm.to_file_form();
        assert_eq!(f[(0, 0)], 1.0);
        assert_eq!(f[(1, 1)], 4.0);
        assert!(f[(0, 1)].is_nan() && f[(1, 0)].is_nan());
        assert_eq!(MaskedMatrix::from_file_form(&f), xm);
    }

    #[test]
    fn non_binary_mask_rejected() {
        let x = Matrix::ones(2, 2);
        let m = Matrix::from_rows(&[[1.0, 0.5], [0.0, 1.0]]).unwrap();
        assert!(matches!(apply_mask(&x, &m), Err(Error::Validation(_))));
    }

    #[test]
    fn pattern_parsing() {
        assert_eq!("scattered".parse::<Pattern>().unwrap(), Pattern::Scattered);
        assert_eq!("uniblock".parse::<Pattern>().unwrap(), Pattern::Uniblock);
        assert_eq!("multiblock4".parse::<Pattern>().unwrap(), Pattern::Multiblock { k: 4 });
        assert_eq!("multiblock".parse::<Pattern>().unwrap(), Pattern::Multiblock { k: 3 });
        assert!("diagonal".parse::<Pattern>().is_err());
        assert!(MaskSpec::new(Pattern::Multiblock { k: 1 }, 0.3, 0).is_err());
    }
}
