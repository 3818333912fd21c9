//! Inlier-maximizing translation for a fixed rotation.
//!
//! Every rotated pair `y_j - R x_i` is rounded to a cubic bin of side
//! `bin`; the most populated bin is the translation that maximizes the
//! number of source points landing on some reference point. By default a
//! bin counts the distinct source indices that reach it, so a count never
//! exceeds the source size.

use std::collections::HashMap;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

/// Dense histograms above this many bins fall back to a hash map.
const DENSE_BIN_LIMIT: usize = 1 << 21;

/// Dense cells pack a 16-bit count and a 16-bit source marker.
const DENSE_VOTE_LIMIT: usize = 1 << 16;

/// Rounds half away from zero. Exact: `v - trunc(v)` has no rounding error.
#[inline(always)]
fn round_half_away(v: f64) -> i64 {
    let t = v as i64;
    let frac = v - t as f64;
    t + (frac >= 0.5) as i64 - (frac <= -0.5) as i64
}

/// Per-axis index of the bin containing `v`; the bin center is
/// `index * bin`.
pub fn bin_index(v: &Point3, bin: f64) -> [i64; 3] {
    [
        round_half_away(v.x / bin),
        round_half_away(v.y / bin),
        round_half_away(v.z / bin),
    ]
}

/// How a histogram bin accumulates votes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingMode {
    /// A source point votes at most once per bin.
    #[default]
    DistinctSources,
    /// Every pair votes (diagnostic).
    RawPairs,
}

/// Axis-aligned box of admissible translations: `center + k * bin` with
/// `|k| <= half_width` per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranslationBounds {
    pub center: Point3,
    pub half_width: u32,
}

/// The winning bin of a translation histogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeResult {
    /// Bin center in meters.
    pub t_star: Point3,
    /// Bin index relative to the bounds center (or the origin).
    pub index: [i32; 3],
    /// Votes in the winning bin.
    pub count: usize,
    /// Number of bins sharing the winning count.
    pub num_tied_bins: usize,
}

/// Sparse translation histogram keyed by bin index.
#[derive(Debug, Clone, Default)]
pub struct TranslationHistogram {
    bin: f64,
    counts: HashMap<[i64; 3], usize>,
    total: usize,
}

impl TranslationHistogram {
    pub fn new(bin: f64) -> Self {
        Self {
            bin,
            counts: HashMap::new(),
            total: 0,
        }
    }

    /// Adds one raw vote for every pair `y - R x`.
    pub fn accumulate(&mut self, source: &PointCloud, reference: &PointCloud, rotation: &Matrix3<f64>) {
        for x in source {
            let rx = rotation * x;
            for y in reference {
                *self.counts.entry(bin_index(&(y - rx), self.bin)).or_insert(0) += 1;
                self.total += 1;
            }
        }
    }

    pub fn bin(&self) -> f64 {
        self.bin
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn count(&self, index: &[i64; 3]) -> usize {
        self.counts.get(index).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Highest count, ties resolved to the lexicographically smallest index.
    pub fn mode(&self) -> Option<([i64; 3], usize)> {
        self.counts
            .iter()
            .map(|(k, &c)| (*k, c))
            .min_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)))
    }
}

/// Reusable per-thread storage for [`ModeSearcher::search`].
#[derive(Debug, Default)]
pub struct ModeScratch {
    rotated: Vec<[f64; 3]>,
    /// Dense histogram cells: last voter (source index plus one) in the
    /// high half, count in the low half.
    cells: Vec<u32>,
    flats: Vec<u32>,
    sparse: HashMap<[i64; 3], (u32, u32)>,
}

/// Reference points in scaled coordinates `(y - center) / bin`, bucketed
/// into a regular grid of cells and stored cell by cell, with z varying
/// fastest so a run of cells along z is one contiguous range. Every
/// coordinate is kept as an integer floor plus a fraction in `[0, 1)`, so
/// pair differences round without precision loss from large offsets.
#[derive(Debug, Clone)]
struct ColumnIndex {
    cell: [f64; 3],
    origin: [i64; 3],
    dims: [i64; 3],
    /// Prefix offsets per cell, `dims[0] * dims[1] * dims[2] + 1` entries.
    starts: Vec<usize>,
    whole: [Vec<f64>; 3],
    frac: [Vec<f64>; 3],
}

/// Upper bound on the number of grid cells.
const MAX_CELLS: f64 = (1 << 20) as f64;

impl ColumnIndex {
    fn build(scaled: &[[f64; 3]], reach: Option<f64>) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]);
        for p in scaled {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let cell = match reach {
            Some(r) => {
                // Wide cells on x and y keep the number of ranges per query
                // small; narrow cells on z keep the ranges tight.
                let mut cell = [(r / 2.0).max(1.0), (r / 2.0).max(1.0), 1.0];
                let count = |c: &[f64; 3]| (0..3).map(|a| (hi[a] - lo[a]) / c[a] + 1.0).product::<f64>();
                while count(&cell) > MAX_CELLS {
                    cell = cell.map(|c| c * 2.0);
                }
                cell
            }
            None => [f64::INFINITY; 3],
        };
        let coord = |v: f64, a: usize| if cell[a].is_finite() { (v / cell[a]).floor() as i64 } else { 0 };
        let origin: [i64; 3] = std::array::from_fn(|a| coord(lo[a], a));
        let dims: [i64; 3] = std::array::from_fn(|a| coord(hi[a], a) - origin[a] + 1);
        let key = |p: &[f64; 3]| {
            let c: [i64; 3] = std::array::from_fn(|a| coord(p[a], a) - origin[a]);
            ((c[0] * dims[1] + c[1]) * dims[2] + c[2]) as usize
        };
        let mut order: Vec<usize> = (0..scaled.len()).collect();
        order.sort_by_key(|&j| key(&scaled[j]));
        let mut starts = vec![0usize; (dims[0] * dims[1] * dims[2]) as usize + 1];
        for p in scaled {
            starts[key(p) + 1] += 1;
        }
        for c in 1..starts.len() {
            starts[c] += starts[c - 1];
        }
        let mut whole: [Vec<f64>; 3] = Default::default();
        let mut frac: [Vec<f64>; 3] = Default::default();
        for &j in &order {
            for a in 0..3 {
                let f = scaled[j][a].floor();
                whole[a].push(f);
                frac[a].push(scaled[j][a] - f);
            }
        }
        Self {
            cell,
            origin,
            dims,
            starts,
            whole,
            frac,
        }
    }

    /// Calls `f` with index ranges covering every point whose scaled
    /// coordinates lie within `reach` of `r` on all axes. Ranges may also
    /// contain points up to one cell further out.
    #[inline]
    fn for_each_range(&self, r: &[f64; 3], reach: Option<f64>, mut f: impl FnMut(usize, usize)) {
        let Some(reach) = reach else {
            f(0, self.whole[0].len());
            return;
        };
        let span = |a: usize| {
            let lo = ((r[a] - reach) / self.cell[a]).floor() as i64 - self.origin[a];
            let hi = ((r[a] + reach) / self.cell[a]).floor() as i64 - self.origin[a];
            (lo.max(0), hi.min(self.dims[a] - 1))
        };
        let (x_lo, x_hi) = span(0);
        let (y_lo, y_hi) = span(1);
        let (z_lo, z_hi) = span(2);
        if z_lo > z_hi {
            return;
        }
        for cx in x_lo..=x_hi {
            for cy in y_lo..=y_hi {
                let column = ((cx * self.dims[1] + cy) * self.dims[2]) as usize;
                let s = self.starts[column + z_lo as usize];
                let e = self.starts[column + z_hi as usize + 1];
                if s < e {
                    f(s, e);
                }
            }
        }
    }
}

/// Integer floor and fraction of the rotated, scaled source point.
#[derive(Clone, Copy)]
struct Split {
    whole: [i64; 3],
    frac: [f64; 3],
}

impl Split {
    #[inline]
    fn new(r: &[f64; 3]) -> Self {
        let f = [r[0].floor(), r[1].floor(), r[2].floor()];
        Self {
            whole: [f[0] as i64, f[1] as i64, f[2] as i64],
            frac: [r[0] - f[0], r[1] - f[1], r[2] - f[2]],
        }
    }
}

/// `round_half_away(a - b)` where `a = aw + af`, `b = bw + bf` with
/// fractions in `[0, 1)`.
#[inline(always)]
fn split_round(aw: i64, af: f64, bw: i64, bf: f64) -> i64 {
    let n = aw - bw;
    let d = af - bf;
    let up = (d > 0.5) | ((d == 0.5) & (n >= 0));
    let down = (d < -0.5) | ((d == -0.5) & (n <= 0));
    n + up as i64 - down as i64
}

/// Shifted bin index `round_half_away(w + f - sw - sf) + k` for one axis,
/// where `sw` already includes the `-k` offset. All operands except the
/// fractions are integer valued, so the arithmetic is exact.
#[inline(always)]
fn shifted_index(w: f64, f: f64, sw: f64, sf: f64, k: f64) -> f64 {
    let n = w - sw;
    let d = f - sf;
    let up = (d > 0.5) | ((d == 0.5) & (n >= k));
    let down = (d < -0.5) | ((d == -0.5) & (n <= k));
    n + up as u8 as f64 - down as u8 as f64
}

/// Inputs of one pass over a slice of the column index.
struct FlatQuery<'a> {
    cols: &'a ColumnIndex,
    /// Source whole parts minus `k`.
    sw: [f64; 3],
    sf: [f64; 3],
    k: f64,
    side: f64,
}

impl FlatQuery<'_> {
    #[inline(always)]
    fn flat_at(&self, j: usize) -> Option<u32> {
        let limit = self.side - 1.0;
        let mut idx = [0.0; 3];
        for (a, v) in idx.iter_mut().enumerate() {
            *v = shifted_index(self.cols.whole[a][j], self.cols.frac[a][j], self.sw[a], self.sf[a], self.k);
            if !(*v >= 0.0 && *v <= limit) {
                return None;
            }
        }
        Some(((idx[0] * self.side + idx[1]) * self.side + idx[2]) as u32)
    }

    fn collect_scalar(&self, lo: usize, hi: usize, out: &mut Vec<u32>) {
        out.extend((lo..hi).filter_map(|j| self.flat_at(j)));
    }

    /// Appends the flat dense-histogram index of every in-bounds pair with
    /// reference points `lo..hi`.
    #[inline]
    fn collect(&self, lo: usize, hi: usize, out: &mut Vec<u32>) {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the CPU supports AVX2, checked above.
                return unsafe { self.collect_avx2(lo, hi, out) };
            }
        }
        self.collect_scalar(lo, hi, out)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn collect_avx2(&self, lo: usize, hi: usize, out: &mut Vec<u32>) {
        use std::arch::x86_64::*;

        /// Byte shuffles that move the selected 32-bit lanes to the front.
        const COMPACT: [[u8; 16]; 16] = {
            let mut table = [[0x80u8; 16]; 16];
            let mut mask = 0;
            while mask < 16 {
                let mut dst = 0;
                let mut lane = 0;
                while lane < 4 {
                    if mask & (1 << lane) != 0 {
                        let mut b = 0;
                        while b < 4 {
                            table[mask][dst * 4 + b] = (lane * 4 + b) as u8;
                            b += 1;
                        }
                        dst += 1;
                    }
                    lane += 1;
                }
                mask += 1;
            }
            table
        };

        let len = hi - lo;
        out.reserve(len + 4);
        let start = out.len();
        let dst = out.as_mut_ptr().add(start);
        let half = _mm256_set1_pd(0.5);
        let neg_half = _mm256_set1_pd(-0.5);
        let one = _mm256_set1_pd(1.0);
        let zero = _mm256_setzero_pd();
        let side = _mm256_set1_pd(self.side);
        let limit = _mm256_set1_pd(self.side - 1.0);
        let axis = |a: usize| {
            (
                self.cols.whole[a].as_ptr().add(lo),
                self.cols.frac[a].as_ptr().add(lo),
                _mm256_set1_pd(self.sw[a]),
                _mm256_set1_pd(self.sf[a]),
            )
        };
        let axes = [axis(0), axis(1), axis(2)];
        let sign = _mm256_set1_pd(-0.0);
        let mut m = 0usize;
        let mut j = 0usize;
        while j + 4 <= len {
            // Round half up, and flag lanes whose fraction difference is
            // exactly one half; those take the exact scalar path.
            let mut tie = zero;
            let mut idx = [zero; 3];
            for (a, &(w, f, sw, sf)) in axes.iter().enumerate() {
                let n = _mm256_sub_pd(_mm256_loadu_pd(w.add(j)), sw);
                let d = _mm256_sub_pd(_mm256_loadu_pd(f.add(j)), sf);
                let up = _mm256_and_pd(_mm256_cmp_pd::<_CMP_GE_OQ>(d, half), one);
                let down = _mm256_and_pd(_mm256_cmp_pd::<_CMP_LT_OQ>(d, neg_half), one);
                idx[a] = _mm256_sub_pd(_mm256_add_pd(n, up), down);
                tie = _mm256_or_pd(tie, _mm256_cmp_pd::<_CMP_EQ_OQ>(_mm256_andnot_pd(sign, d), half));
            }
            if _mm256_movemask_pd(tie) != 0 {
                for t in j..j + 4 {
                    if let Some(f) = self.flat_at(lo + t) {
                        dst.add(m).write(f);
                        m += 1;
                    }
                }
                j += 4;
                continue;
            }
            let low = _mm256_min_pd(_mm256_min_pd(idx[0], idx[1]), idx[2]);
            let high = _mm256_max_pd(_mm256_max_pd(idx[0], idx[1]), idx[2]);
            let ok = _mm256_and_pd(_mm256_cmp_pd::<_CMP_GE_OQ>(low, zero), _mm256_cmp_pd::<_CMP_LE_OQ>(high, limit));
            let mask = _mm256_movemask_pd(ok) as usize;
            if mask != 0 {
                let flat = _mm256_add_pd(_mm256_mul_pd(_mm256_add_pd(_mm256_mul_pd(idx[0], side), idx[1]), side), idx[2]);
                let lanes = _mm256_cvttpd_epi32(flat);
                let shuffle = _mm_loadu_si128(COMPACT[mask].as_ptr() as *const __m128i);
                _mm_storeu_si128(dst.add(m) as *mut __m128i, _mm_shuffle_epi8(lanes, shuffle));
                m += mask.count_ones() as usize;
            }
            j += 4;
        }
        while j < len {
            if let Some(f) = self.flat_at(lo + j) {
                dst.add(m).write(f);
                m += 1;
            }
            j += 1;
        }
        out.set_len(start + m);
    }
}

/// Precomputed reference data for repeated mode searches against one
/// reference cloud (one per registration, shared across rotations).
#[derive(Debug, Clone)]
pub struct ModeSearcher {
    columns: ColumnIndex,
    bin: f64,
    center: Point3,
    half_width: Option<u32>,
    counting: CountingMode,
}

impl ModeSearcher {
    pub fn new(
        reference: &PointCloud,
        bin: f64,
        bounds: Option<TranslationBounds>,
        counting: CountingMode,
    ) -> Result<Self> {
        if !(bin > 0.0 && bin.is_finite()) {
            return Err(Error::InvalidConfig(format!("translation bin must be positive, got {bin}")));
        }
        let center = bounds.map_or_else(Point3::zeros, |b| b.center);
        if let Some(b) = bounds {
            if b.half_width > (i32::MAX / 4) as u32 {
                return Err(Error::InvalidConfig("translation half-width too large".into()));
            }
        }
        let inv = 1.0 / bin;
        let scaled: Vec<[f64; 3]> = reference
            .iter()
            .map(|y| {
                let d = (y - center) * inv;
                [d.x, d.y, d.z]
            })
            .collect();
        let half_width = bounds.map(|b| b.half_width);
        Ok(Self {
            columns: ColumnIndex::build(&scaled, half_width.map(Self::reach_of)),
            bin,
            center,
            half_width,
            counting,
        })
    }

    /// Scaled distance beyond which a pair cannot round into the bounds.
    fn reach_of(k: u32) -> f64 {
        k as f64 + 1.0
    }

    pub fn bin(&self) -> f64 {
        self.bin
    }

    fn dense_side(&self) -> Option<usize> {
        let k = self.half_width? as usize;
        let side = 2 * k + 1;
        side.checked_mul(side)
            .and_then(|s| s.checked_mul(side))
            .filter(|&n| n <= DENSE_BIN_LIMIT)
            .map(|_| side)
    }

    /// Mode of `round((y - center - R x) / bin)` over all admissible pairs.
    pub fn search(
        &self,
        source: &PointCloud,
        rotation: &Matrix3<f64>,
        scratch: &mut ModeScratch,
    ) -> Option<ModeResult> {
        let inv = 1.0 / self.bin;
        scratch.rotated.clear();
        scratch.rotated.extend(source.iter().map(|x| {
            let r = (rotation * x) * inv;
            [r.x, r.y, r.z]
        }));
        let max_votes = match self.counting {
            CountingMode::DistinctSources => source.len(),
            CountingMode::RawPairs => source.len().saturating_mul(self.columns.whole[0].len()),
        };
        let (index, count, ties) = match self.dense_side() {
            Some(side) if max_votes.max(source.len()) < DENSE_VOTE_LIMIT => self.search_dense(side, scratch),
            _ => self.search_sparse(scratch),
        }?;
        Some(ModeResult {
            t_star: self.center
                + Point3::new(index[0] as f64, index[1] as f64, index[2] as f64) * self.bin,
            index,
            count: count as usize,
            num_tied_bins: ties,
        })
    }

    fn search_dense(&self, side: usize, scratch: &mut ModeScratch) -> Option<([i32; 3], u32, usize)> {
        let n_bins = side * side * side;
        scratch.cells.clear();
        scratch.cells.resize(n_bins, 0);
        let k = (side / 2) as i64;
        let reach = self.half_width.map(Self::reach_of);
        let dedup = self.counting == CountingMode::DistinctSources;
        let mut best_count = 0u32;
        let mut best_flat = u32::MAX;
        let mut ties = 0usize;
        let ModeScratch {
            rotated, cells, flats, ..
        } = scratch;
        for (i, r) in rotated.iter().enumerate() {
            let marker = i as u32 + 1;
            let split = Split::new(r);
            let query = FlatQuery {
                cols: &self.columns,
                sw: split.whole.map(|w| w as f64 - k as f64),
                sf: split.frac,
                k: k as f64,
                side: side as f64,
            };
            flats.clear();
            self.columns.for_each_range(r, reach, |lo, hi| query.collect(lo, hi, flats));
            for &flat in flats.iter() {
                let cell = &mut cells[flat as usize];
                let fresh = !dedup || (*cell >> 16) != marker;
                let c = (*cell & 0xffff) + fresh as u32;
                *cell = (marker << 16) | c;
                if c >= best_count {
                    if c > best_count {
                        best_count = c;
                        best_flat = flat;
                        ties = 1;
                    } else if fresh {
                        ties += 1;
                        best_flat = best_flat.min(flat);
                    }
                }
            }
        }
        if best_count == 0 {
            return None;
        }
        let best_flat = best_flat as usize;
        let iz = (best_flat % side) as i64 - k;
        let iy = ((best_flat / side) % side) as i64 - k;
        let ix = (best_flat / (side * side)) as i64 - k;
        Some(([ix as i32, iy as i32, iz as i32], best_count, ties))
    }

    fn search_sparse(&self, scratch: &mut ModeScratch) -> Option<([i32; 3], u32, usize)> {
        let k = self.half_width.map(|k| k as i64);
        let reach = self.half_width.map(Self::reach_of);
        let dedup = self.counting == CountingMode::DistinctSources;
        let cols = &self.columns;
        let ModeScratch { rotated, sparse, .. } = scratch;
        sparse.clear();
        let mut best: Option<([i64; 3], u32)> = None;
        let mut ties = 0usize;
        for (i, r) in rotated.iter().enumerate() {
            let marker = i as u32 + 1;
            let s = Split::new(r);
            cols.for_each_range(r, reach, |lo, hi| {
                for j in lo..hi {
                    let idx: [i64; 3] =
                        std::array::from_fn(|a| split_round(cols.whole[a][j] as i64, cols.frac[a][j], s.whole[a], s.frac[a]));
                    if let Some(k) = k {
                        if idx.iter().any(|v| v.abs() > k) {
                            continue;
                        }
                    }
                    let entry = sparse.entry(idx).or_insert((0, 0));
                    if dedup && entry.1 == marker {
                        continue;
                    }
                    entry.0 += 1;
                    entry.1 = marker;
                    let c = entry.0;
                    match best {
                        Some((_, bc)) if c < bc => {}
                        Some((bk, bc)) if c == bc => {
                            ties += 1;
                            if idx < bk {
                                best = Some((idx, c));
                            }
                        }
                        _ => {
                            best = Some((idx, c));
                            ties = 1;
                        }
                    }
                }
            });
        }
        best.map(|(key, c)| ([key[0] as i32, key[1] as i32, key[2] as i32], c, ties))
    }
}

/// Inlier-maximizing translation for rotation `rotation`.
pub fn mode_translation(
    source: &PointCloud,
    reference: &PointCloud,
    rotation: &Matrix3<f64>,
    bin: f64,
    bounds: Option<TranslationBounds>,
) -> Result<ModeResult> {
    mode_translation_with(source, reference, rotation, bin, bounds, CountingMode::default())
}

pub fn mode_translation_with(
    source: &PointCloud,
    reference: &PointCloud,
    rotation: &Matrix3<f64>,
    bin: f64,
    bounds: Option<TranslationBounds>,
    counting: CountingMode,
) -> Result<ModeResult> {
    let searcher = ModeSearcher::new(reference, bin, bounds, counting)?;
    searcher
        .search(source, rotation, &mut ModeScratch::default())
        .ok_or(Error::NoCandidate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{EulerAngles, RigidTransform};
    use crate::metrics::count_inliers;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube() -> PointCloud {
        let mut pts = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    pts.push([x, y, z]);
                }
            }
        }
        PointCloud::from_xyz(&pts).unwrap()
    }

    #[test]
    fn bin_index_examples() {
        assert_eq!(bin_index(&Point3::new(0.04, -0.04, 0.0), 0.1), [0, 0, 0]);
        assert_eq!(bin_index(&Point3::new(0.05, 0.0, 0.0), 0.1), [1, 0, 0]);
        assert_eq!(bin_index(&Point3::new(-0.05, 0.0, 0.0), 0.1), [-1, 0, 0]);
        assert_eq!(bin_index(&Point3::new(0.26, -0.31, 0.74), 0.1), [3, -3, 7]);
    }

    proptest! {
        #[test]
        fn round_half_away_matches_std(v in -1.0e9f64..1.0e9) {
            prop_assert_eq!(round_half_away(v), v.round() as i64);
        }

        #[test]
        fn round_half_away_on_half_integers(k in -100_000i64..100_000) {
            let v = k as f64 + 0.5;
            prop_assert_eq!(round_half_away(v), v.round() as i64);
        }
    }

    #[test]
    fn single_pair_mode() {
        let x = PointCloud::from_xyz(&[[0.0, 0.0, 0.0]]).unwrap();
        let y = PointCloud::from_xyz(&[[1.0, 2.0, 3.0]]).unwrap();
        let m = mode_translation(&x, &y, &Matrix3::identity(), 0.1, None).unwrap();
        assert!((m.t_star - Point3::new(1.0, 2.0, 3.0)).amax() < 1e-12);
        assert_eq!(m.count, 1);
        assert_eq!(m.index, [10, 20, 30]);
    }

    #[test]
    fn cube_corners_mode_at_origin() {
        // Oracle: enumerate all 64 pair translations and count distinct
        // sources per rounded value.
        let c = cube();
        let mut votes: HashMap<[i64; 3], std::collections::BTreeSet<usize>> = HashMap::new();
        for (i, x) in c.iter().enumerate() {
            for y in c.iter() {
                let d = y - x;
                let key = [d.x.round() as i64 * 10, d.y.round() as i64 * 10, d.z.round() as i64 * 10];
                votes.entry(key).or_default().insert(i);
            }
        }
        let oracle_max = votes.values().map(|s| s.len()).max().unwrap();
        assert_eq!(oracle_max, 8);
        assert_eq!(votes.values().filter(|s| s.len() == 8).count(), 1);

        let m = mode_translation(&c, &c, &Matrix3::identity(), 0.1, None).unwrap();
        assert_eq!(m.t_star, Point3::zeros());
        assert_eq!(m.count, 8);
        assert_eq!(m.num_tied_bins, 1);

        let bounded = mode_translation(
            &c,
            &c,
            &Matrix3::identity(),
            0.1,
            Some(TranslationBounds { center: Point3::zeros(), half_width: 12 }),
        )
        .unwrap();
        assert_eq!(bounded, m);
    }

    #[test]
    fn planted_transform_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let x = PointCloud::new(
                (0..6)
                    .map(|_| Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect(),
            )
            .unwrap();
            let truth = RigidTransform::from_euler(
                EulerAngles::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                Point3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
            );
            let y = truth.apply(&x);
            let bin = 0.05;
            let m = mode_translation(&x, &y, truth.rotation(), bin, None).unwrap();
            assert!((m.t_star - truth.translation()).amax() <= bin / 2.0 + 1e-12);
            assert_eq!(m.count, 6);
            // brute-force sweep: no translation on a dense grid beats 6
            let mut hist = TranslationHistogram::new(bin);
            hist.accumulate(&x, &y, truth.rotation());
            assert_eq!(hist.total(), 36);
            assert!(hist.mode().unwrap().1 <= 6);
        }
    }

    #[test]
    fn raw_pair_counting_can_exceed_source_size() {
        // One source point, two reference points in the same bin.
        let x = PointCloud::from_xyz(&[[0.0, 0.0, 0.0]]).unwrap();
        let y = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [0.01, 0.0, 0.0]]).unwrap();
        let distinct = mode_translation(&x, &y, &Matrix3::identity(), 0.1, None).unwrap();
        assert_eq!(distinct.count, 1);
        let raw = mode_translation_with(&x, &y, &Matrix3::identity(), 0.1, None, CountingMode::RawPairs).unwrap();
        assert_eq!(raw.count, 2);
    }

    #[test]
    fn out_of_bounds_only_is_no_candidate() {
        let x = PointCloud::from_xyz(&[[0.0, 0.0, 0.0]]).unwrap();
        let y = PointCloud::from_xyz(&[[5.0, 0.0, 0.0]]).unwrap();
        let bounds = TranslationBounds { center: Point3::zeros(), half_width: 3 };
        assert!(matches!(
            mode_translation(&x, &y, &Matrix3::identity(), 0.1, Some(bounds)),
            Err(Error::NoCandidate)
        ));
    }

    #[test]
    fn ties_resolve_to_smallest_index() {
        let x = PointCloud::from_xyz(&[[0.0, 0.0, 0.0]]).unwrap();
        let y = PointCloud::from_xyz(&[[0.3, 0.0, 0.0], [-0.2, 0.5, 0.0], [-0.2, 0.1, 0.0]]).unwrap();
        let m = mode_translation(&x, &y, &Matrix3::identity(), 0.1, None).unwrap();
        assert_eq!(m.index, [-2, 1, 0]);
        assert_eq!(m.num_tied_bins, 3);
        let b = TranslationBounds { center: Point3::zeros(), half_width: 10 };
        let md = mode_translation(&x, &y, &Matrix3::identity(), 0.1, Some(b)).unwrap();
        assert_eq!(md, m);
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> (PointCloud, PointCloud) {
        let pt = |rng: &mut ChaCha8Rng| Point3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let x = PointCloud::new((0..n).map(|_| pt(rng)).collect()).unwrap();
        let y = PointCloud::new((0..n).map(|_| pt(rng)).collect()).unwrap();
        (x, y)
    }

    #[test]
    fn dense_and_sparse_paths_agree_with_reference_histogram() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let (x, y) = random_instance(&mut rng, 15);
            let r = EulerAngles::new(rng.random_range(-0.5..0.5), 0.1, -0.2).to_matrix();
            let bin = 0.2;
            let unbounded = mode_translation_with(&x, &y, &r, bin, None, CountingMode::RawPairs).unwrap();
            let dense = mode_translation_with(
                &x,
                &y,
                &r,
                bin,
                Some(TranslationBounds { center: Point3::zeros(), half_width: 20 }),
                CountingMode::RawPairs,
            )
            .unwrap();
            assert_eq!(unbounded, dense);
            let mut hist = TranslationHistogram::new(bin);
            hist.accumulate(&x, &y, &r);
            let (key, count) = hist.mode().unwrap();
            assert_eq!(count, dense.count);
            assert_eq!([key[0] as i32, key[1] as i32, key[2] as i32], dense.index);
        }
    }

    #[test]
    fn exact_half_bin_ties_round_away_from_zero_on_every_path() {
        // Lattice points at multiples of half a bin put many pairs exactly
        // on bin boundaries; the dyadic bin keeps every difference exact.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let bin = 0.25;
        let lattice = |rng: &mut ChaCha8Rng| Point3::new(
            rng.random_range(-8i32..8) as f64 * bin / 2.0,
            rng.random_range(-8i32..8) as f64 * bin / 2.0,
            rng.random_range(-8i32..8) as f64 * bin / 2.0,
        );
        for _ in 0..50 {
            let x = PointCloud::new((0..9).map(|_| lattice(&mut rng)).collect()).unwrap();
            let y = PointCloud::new((0..23).map(|_| lattice(&mut rng)).collect()).unwrap();
            let r = Matrix3::identity();
            let mut hist = TranslationHistogram::new(bin);
            hist.accumulate(&x, &y, &r);
            let (key, count) = hist.mode().unwrap();
            for counting in [CountingMode::RawPairs, CountingMode::DistinctSources] {
                let unbounded = mode_translation_with(&x, &y, &r, bin, None, counting).unwrap();
                let bounded = mode_translation_with(
                    &x,
                    &y,
                    &r,
                    bin,
                    Some(TranslationBounds { center: Point3::zeros(), half_width: 9 }),
                    counting,
                )
                .unwrap();
                assert_eq!(unbounded, bounded);
                if counting == CountingMode::RawPairs {
                    assert_eq!(bounded.count, count);
                    assert_eq!(bounded.index, [key[0] as i32, key[1] as i32, key[2] as i32]);
                }
            }
        }
    }

    #[test]
    fn distinct_counting_matches_per_source_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..50 {
            let (x, y) = random_instance(&mut rng, 40);
            let r = EulerAngles::new(rng.random_range(-0.5..0.5), 0.2, 0.1).to_matrix();
            let bin = 0.1;
            let mut votes: HashMap<[i64; 3], std::collections::BTreeSet<usize>> = HashMap::new();
            for (i, p) in x.iter().enumerate() {
                for q in y.iter() {
                    let idx = bin_index(&(q - r * p), bin);
                    if idx.iter().all(|v| v.abs() <= 6) {
                        votes.entry(idx).or_default().insert(i);
                    }
                }
            }
            let best = votes.values().map(|s| s.len()).max().unwrap();
            let tied: Vec<_> = votes.iter().filter(|(_, s)| s.len() == best).map(|(k, _)| *k).collect();
            let m = mode_translation(&x, &y, &r, bin, Some(TranslationBounds { center: Point3::zeros(), half_width: 6 })).unwrap();
            assert_eq!(m.count, best);
            assert_eq!(m.num_tied_bins, tied.len());
            let min = tied.iter().min().unwrap();
            assert_eq!(m.index, [min[0] as i32, min[1] as i32, min[2] as i32]);
        }
    }

    #[test]
    fn mode_count_matches_inliers_without_straddle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let (x, y) = random_instance(&mut rng, 12);
            let r = EulerAngles::new(0.3, -0.1, 0.2).to_matrix();
            let bin = 0.15;
            let m = mode_translation(&x, &y, &r, bin, None).unwrap();
            let t = RigidTransform::from_parts_unchecked(r, m.t_star, None);
            assert_eq!(count_inliers(&x, &y, &t, bin), m.count);
            assert!(m.count >= 1 && m.count <= x.len());
        }
    }

    #[test]
    fn shifting_reference_by_whole_bins_shifts_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let bin = 0.125; // exactly representable, keeps shifts exact
        for _ in 0..50 {
            let (x, y) = random_instance(&mut rng, 10);
            let r = EulerAngles::new(0.2, 0.4, -0.1).to_matrix();
            let shift = Point3::new(3.0, -2.0, 5.0) * bin;
            let shifted = PointCloud::new(y.iter().map(|p| p + shift).collect()).unwrap();
            let a = mode_translation(&x, &y, &r, bin, None).unwrap();
            let b = mode_translation(&x, &shifted, &r, bin, None).unwrap();
            assert_eq!(b.count, a.count);
            assert_eq!(b.index, [a.index[0] + 3, a.index[1] - 2, a.index[2] + 5]);
        }
    }
}
