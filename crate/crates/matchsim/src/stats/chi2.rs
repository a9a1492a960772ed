//! Pearson chi-square independence test on contingency tables.

use statrs::function::gamma::gamma_ur;
use thiserror::Error;

/// Minimum expected cell count below which cells are pooled.
pub const EXPECTED_CELL_MIN: f64 = 5.0;

/// Counts over a finite outcome grid, e.g. `(S ∪ {J}) × (S ∪ {J})`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Chi2Error {
    #[error("empty contingency table")]
    EmptyTable,
}

/// Result of a single table test.
#[derive(Debug, Clone, PartialEq)]
pub enum Chi2Outcome {
    /// Fewer than two rows or columns carry mass; independence is vacuous.
    Degenerate,
    /// Too few observations for valid expected counts even after pooling.
    InsufficientCells,
    Tested {
        statistic: f64,
        dof: usize,
        p_value: f64,
    },
}

impl ContingencyTable {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            counts: vec![vec![0; cols]; rows],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Self {
        Self { counts }
    }

    pub fn add(&mut self, row: usize, col: usize) {
        self.counts[row][col] += 1;
    }

    pub fn merge(&mut self, other: &ContingencyTable) {
        for (r, row) in other.counts.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                self.counts[r][c] += v;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn row_marginals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_marginals(&self) -> Vec<u64> {
        let cols = self.counts.first().map(|r| r.len()).unwrap_or(0);
        (0..cols).map(|c| self.counts.iter().map(|r| r[c]).sum()).collect()
    }
}

/// Pearson statistic against the product-of-marginals null.
///
/// Rows and columns with zero marginal are excluded. Cells whose expected
/// count falls below [`EXPECTED_CELL_MIN`] are pooled into a single
/// "other" bucket; the degrees of freedom shrink by one per extra pooled
/// cell, floored at 1.
pub fn chi_square_statistic(table: &ContingencyTable) -> Result<Chi2Outcome, Chi2Error> {
    let total = table.total();
    if total == 0 {
        return Err(Chi2Error::EmptyTable);
    }
    let rows: Vec<usize> = table
        .row_marginals()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0)
        .map(|(i, _)| i)
        .collect();
    let cols: Vec<usize> = table
        .col_marginals()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0)
        .map(|(i, _)| i)
        .collect();
    if rows.len() < 2 || cols.len() < 2 {
        return Ok(Chi2Outcome::Degenerate);
    }
    let row_m = table.row_marginals();
    let col_m = table.col_marginals();
    let total_f = total as f64;

    let mut statistic = 0.0;
    let mut pooled_obs = 0.0;
    let mut pooled_exp = 0.0;
    let mut pooled_cells = 0usize;
    for &r in &rows {
        for &c in &cols {
            let expected = row_m[r] as f64 * col_m[c] as f64 / total_f;
            let observed = table.counts[r][c] as f64;
            if expected < EXPECTED_CELL_MIN {
                pooled_obs += observed;
                pooled_exp += expected;
                pooled_cells += 1;
            } else {
                let d = observed - expected;
                statistic += d * d / expected;
            }
        }
    }
    if pooled_cells > 0 {
        if pooled_exp < EXPECTED_CELL_MIN {
            return Ok(Chi2Outcome::InsufficientCells);
        }
        let d = pooled_obs - pooled_exp;
        statistic += d * d / pooled_exp;
    }
    let base_dof = (rows.len() - 1) * (cols.len() - 1);
    let dof = base_dof
        .saturating_sub(pooled_cells.saturating_sub(1))
        .max(1);
    let p_value = chi_square_pvalue(statistic, dof);
    Ok(Chi2Outcome::Tested {
        statistic,
        dof,
        p_value,
    })
}

/// Upper-tail p-value of the chi-square distribution via the regularized
/// upper incomplete gamma function.
pub fn chi_square_pvalue(statistic: f64, dof: usize) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof as f64 / 2.0, statistic / 2.0)
}
