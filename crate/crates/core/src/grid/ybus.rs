//! Bus admittance matrix assembly.

use num_complex::Complex64;

use super::{BusId, GridCase};

/// Sparse symmetric complex admittance matrix in per-unit siemens.
///
/// Rows hold `(column, value)` pairs sorted by column. With no shunt elements
/// modeled, each diagonal entry is the negated sum of its off-diagonal row, so
/// row sums are exactly zero by construction.
#[derive(Debug, Clone)]
pub struct AdmittanceMatrix {
    n: usize,
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl AdmittanceMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    /// Entry by bus id pair; zero when the buses are not adjacent.
    pub fn get(&self, i: BusId, j: BusId) -> Complex64 {
        self.entry(i.index(), j.index())
    }

    /// Entry by zero-based index pair.
    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.rows[i]
            .iter()
            .find(|(col, _)| *col == j)
            .map(|(_, y)| *y)
            .unwrap_or_default()
    }

    /// Nonzero entries of one row, sorted by column index.
    pub fn row(&self, i: usize) -> &[(usize, Complex64)] {
        &self.rows[i]
    }

    pub fn row_sum(&self, i: usize) -> Complex64 {
        self.rows[i].iter().map(|(_, y)| *y).sum()
    }
}

/// Assembles the admittance matrix from the branch list.
///
/// Each branch contributes `y = 1/(r + jx)` to both diagonal entries and `-y`
/// to the symmetric off-diagonal pair; parallel branches accumulate.
pub fn build_ybus(case: &GridCase) -> AdmittanceMatrix {
    let n = case.buses.len();
    let mut off = vec![vec![Complex64::default(); n]; n];
    for br in &case.branches {
        let y = Complex64::new(br.resistance_pu, br.reactance_pu).inv();
        let (i, j) = (br.from.index(), br.to.index());
        off[i][j] -= y;
        off[j][i] -= y;
    }
    let mut rows = vec![Vec::new(); n];
    for i in 0..n {
        // Diagonal first as the negated off-diagonal sum, then insert in column order.
        let diag = -off[i]
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, y)| *y)
            .sum::<Complex64>();
        for (j, &y) in off[i].iter().enumerate() {
            if j == i {
                rows[i].push((i, diag));
            } else if y != Complex64::default() {
                rows[i].push((j, y));
            }
        }
    }
    AdmittanceMatrix { n, rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Branch, BranchKind};

    fn case() -> GridCase {
        crate::grid::tests::two_bus_case()
    }

    #[test]
    fn off_diagonal_is_negative_series_admittance() {
        let y = build_ybus(&case());
        let z = Complex64::new(0.01, 0.1);
        let expect = -z.inv();
        let got = y.get(BusId(1), BusId(2));
        assert!((got - expect).norm() < 1e-12);
    }

    #[test]
    fn symmetric_with_zero_row_sums() {
        let y = build_ybus(&case());
        for i in 0..y.size() {
            assert_eq!(y.row_sum(i), Complex64::default());
            for j in 0..y.size() {
                assert_eq!(y.entry(i, j), y.entry(j, i));
            }
        }
    }

    #[test]
    fn parallel_branches_double_the_coupling() {
        let mut c = case();
        c.branches.push(Branch {
            from: BusId(1),
            to: BusId(2),
            resistance_pu: 0.01,
            reactance_pu: 0.1,
            rating_mva: 100.0,
            kind: BranchKind::Line,
            side_kv: (138.0, 138.0),
        });
        let single = build_ybus(&case()).get(BusId(1), BusId(2));
        let doubled = build_ybus(&c).get(BusId(1), BusId(2));
        assert!((doubled - single * 2.0).norm() < 1e-12);
    }
}
