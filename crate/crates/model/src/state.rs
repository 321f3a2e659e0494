use rand::Rng;
use reldiff_core::encoders::EncodedRow;

use crate::kernels::{forward_cat, forward_num};
use crate::schedule::NoiseSchedule;

/// Encoded attribute block of one table: `n` rows of `num_width` numeric
/// coordinates and `cat_width` categorical states, row-major. A categorical
/// state equal to its slot's cardinality is the mask.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableState {
    pub n: usize,
    pub num_width: usize,
    pub cat_width: usize,
    pub nums: Vec<f64>,
    pub cats: Vec<u32>,
}

impl TableState {
    pub fn from_rows(rows: &[EncodedRow]) -> Self {
        if rows.is_empty() {
            return Self::default();
        }
        let num_width = rows[0].nums.len();
        let cat_width = rows[0].cats.len();
        let mut nums = Vec::with_capacity(rows.len() * num_width);
        let mut cats = Vec::with_capacity(rows.len() * cat_width);
        for r in rows {
            nums.extend_from_slice(&r.nums);
            cats.extend_from_slice(&r.cats);
        }
        Self {
            n: rows.len(),
            num_width,
            cat_width,
            nums,
            cats,
        }
    }

    /// Select a row subset (batching).
    pub fn select(&self, rows: &[u32]) -> Self {
        let mut nums = Vec::with_capacity(rows.len() * self.num_width);
        let mut cats = Vec::with_capacity(rows.len() * self.cat_width);
        for &r in rows {
            let r = r as usize;
            nums.extend_from_slice(&self.nums[r * self.num_width..(r + 1) * self.num_width]);
            cats.extend_from_slice(&self.cats[r * self.cat_width..(r + 1) * self.cat_width]);
        }
        Self {
            n: rows.len(),
            num_width: self.num_width,
            cat_width: self.cat_width,
            nums,
            cats,
        }
    }

    pub fn cat_column(&self, slot: usize) -> Vec<u32> {
        (0..self.n).map(|r| self.cats[r * self.cat_width + slot]).collect()
    }

    pub fn row(&self, r: usize) -> EncodedRow {
        EncodedRow {
            nums: self.nums[r * self.num_width..(r + 1) * self.num_width].to_vec(),
            cats: self.cats[r * self.cat_width..(r + 1) * self.cat_width].to_vec(),
        }
    }
}

/// The full mixed state of a database at one diffusion time.
#[derive(Debug, Clone)]
pub struct MixedState {
    pub t: f64,
    pub tables: Vec<TableState>,
}

impl MixedState {
    pub fn no_masks(&self, cardinalities: &[Vec<usize>]) -> bool {
        self.tables.iter().enumerate().all(|(ti, ts)| {
            (0..ts.n).all(|r| {
                (0..ts.cat_width)
                    .all(|j| ts.cats[r * ts.cat_width + j] < cardinalities[ti][j] as u32)
            })
        })
    }
}

/// One corrupted table plus the targets the loss needs.
#[derive(Debug, Clone)]
pub struct CorruptedTable {
    pub noisy: TableState,
    /// Gaussian noise actually applied (regression target), row-major.
    pub eps: Vec<f64>,
    /// Clean categorical states (cross-entropy target), row-major.
    pub clean_cats: Vec<u32>,
}

/// Apply forward corruption at time `t` to a clean table state.
/// `cardinalities[j]` is the mask index of categorical slot j.
pub fn corrupt_table(
    clean: &TableState,
    cardinalities: &[usize],
    t: f64,
    schedule: &NoiseSchedule,
    rng: &mut impl Rng,
) -> CorruptedTable {
    let (noisy_nums, eps) = forward_num(&clean.nums, t, schedule, rng);
    let mut noisy_cats = vec![0u32; clean.cats.len()];
    for (j, &card) in cardinalities.iter().enumerate() {
        let col = clean.cat_column(j);
        let masked = forward_cat(&col, t, card as u32, schedule, rng);
        for (r, v) in masked.into_iter().enumerate() {
            noisy_cats[r * clean.cat_width + j] = v;
        }
    }
    CorruptedTable {
        noisy: TableState {
            n: clean.n,
            num_width: clean.num_width,
            cat_width: clean.cat_width,
            nums: noisy_nums,
            cats: noisy_cats,
        },
        eps,
        clean_cats: clean.cats.clone(),
    }
}
