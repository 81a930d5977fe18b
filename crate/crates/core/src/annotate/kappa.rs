//! Fleiss kappa over an items-by-labels vote count matrix.

use thiserror::Error;

/// Kappa value plus a flag for the degenerate all-one-category case, which
/// is reported as perfect agreement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kappa {
    pub value: f64,
    pub degenerate: bool,
}

#[derive(Debug, Error)]
pub enum KappaError {
    #[error("empty vote matrix")]
    Empty,
    #[error("row {row} has {found} columns, expected {expected}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("row {row} sums to {found} votes, expected {expected}")]
    RaterMismatch { row: usize, expected: u64, found: u64 },
    #[error("{raters} rater(s) per item; need at least 2")]
    TooFewRaters { raters: u64 },
    #[error("bad csv on line {line}: {message}")]
    Csv { line: usize, message: String },
}

/// Computes Fleiss kappa for a matrix whose rows are items and whose columns
/// count the raters that chose each label. Every row must sum to the same
/// rater count.
///
/// When all votes land in a single category, chance agreement is total and
/// kappa is undefined; that case returns 1.0 with `degenerate` set.
pub fn fleiss_kappa(matrix: &[Vec<u64>]) -> Result<Kappa, KappaError> {
    if matrix.is_empty() || matrix[0].is_empty() {
        return Err(KappaError::Empty);
    }
    let labels = matrix[0].len();
    let raters: u64 = matrix[0].iter().sum();
    for (row, counts) in matrix.iter().enumerate() {
        if counts.len() != labels {
            return Err(KappaError::RaggedRow {
                row,
                expected: labels,
                found: counts.len(),
            });
        }
        let sum: u64 = counts.iter().sum();
        if sum != raters {
            return Err(KappaError::RaterMismatch {
                row,
                expected: raters,
                found: sum,
            });
        }
    }
    if raters < 2 {
        return Err(KappaError::TooFewRaters { raters });
    }

    let items = matrix.len() as u64;
    let mut column_totals = vec![0u64; labels];
    let mut observed_sum = 0.0f64;
    for counts in matrix {
        let squares: u64 = counts.iter().map(|&c| c * c).sum();
        observed_sum += (squares - raters) as f64 / (raters * (raters - 1)) as f64;
        for (total, &c) in column_totals.iter_mut().zip(counts) {
            *total += c;
        }
    }
    let grand_total = items * raters;
    if column_totals.contains(&grand_total) {
        return Ok(Kappa {
            value: 1.0,
            degenerate: true,
        });
    }

    let observed = observed_sum / items as f64;
    let expected: f64 = column_totals
        .iter()
        .map(|&t| {
            let p = t as f64 / grand_total as f64;
            p * p
        })
        .sum();
    Ok(Kappa {
        value: (observed - expected) / (1.0 - expected),
        degenerate: false,
    })
}

/// Parses a vote matrix from CSV text: one row per item, one unsigned count
/// per label, comma-separated.
pub fn matrix_from_csv(text: &str) -> Result<Vec<Vec<u64>>, KappaError> {
    let mut matrix = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<u64>, _> = line
            .split(',')
            .map(|cell| cell.trim().parse::<u64>())
            .collect();
        matrix.push(row.map_err(|e| KappaError::Csv {
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(matrix)
}

/// Renders a vote matrix as CSV, the inverse of [`matrix_from_csv`].
pub fn matrix_to_csv(matrix: &[Vec<u64>]) -> String {
    let mut out = String::new();
    for row in matrix {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_agreement_across_categories_is_exactly_one() {
        let matrix = vec![vec![4, 0, 0], vec![0, 4, 0], vec![0, 0, 4], vec![4, 0, 0]];
        let k = fleiss_kappa(&matrix).unwrap();
        assert_eq!(k.value, 1.0);
        assert!(!k.degenerate);
    }

    #[test]
    fn single_category_is_degenerate_perfect() {
        let matrix = vec![vec![4, 0, 0], vec![4, 0, 0]];
        let k = fleiss_kappa(&matrix).unwrap();
        assert_eq!(k.value, 1.0);
        assert!(k.degenerate);
    }

    #[test]
    fn two_items_two_raters_full_disagreement_is_minus_one() {
        let matrix = vec![vec![1, 1], vec![1, 1]];
        let k = fleiss_kappa(&matrix).unwrap();
        assert!((k.value - -1.0).abs() < 1e-12);
        assert!(!k.degenerate);
    }

    #[test]
    fn published_worked_example() {
        // Fourteen raters, ten subjects, five categories; kappa ~ 0.2099.
        let matrix = vec![
            vec![0, 0, 0, 0, 14],
            vec![0, 2, 6, 4, 2],
            vec![0, 0, 3, 5, 6],
            vec![0, 3, 9, 2, 0],
            vec![2, 2, 8, 1, 1],
            vec![7, 7, 0, 0, 0],
            vec![3, 2, 6, 3, 0],
            vec![2, 5, 3, 2, 2],
            vec![6, 5, 2, 1, 0],
            vec![0, 2, 2, 3, 7],
        ];
        let k = fleiss_kappa(&matrix).unwrap();
        assert!((k.value - 0.20993).abs() < 1e-4, "got {}", k.value);
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(fleiss_kappa(&[]), Err(KappaError::Empty)));
        assert!(matches!(
            fleiss_kappa(&[vec![2, 2], vec![2]]),
            Err(KappaError::RaggedRow { row: 1, .. })
        ));
        assert!(matches!(
            fleiss_kappa(&[vec![2, 2], vec![2, 1]]),
            Err(KappaError::RaterMismatch { row: 1, .. })
        ));
        assert!(matches!(
            fleiss_kappa(&[vec![1, 0], vec![0, 1]]),
            Err(KappaError::TooFewRaters { raters: 1 })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let matrix = vec![vec![3, 1, 0], vec![0, 0, 4]];
        let csv = matrix_to_csv(&matrix);
        assert_eq!(csv, "3,1,0\n0,0,4\n");
        assert_eq!(matrix_from_csv(&csv).unwrap(), matrix);
        assert!(matches!(
            matrix_from_csv("1,x,0\n"),
            Err(KappaError::Csv { line: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn kappa_is_bounded_and_stable(
            rows in proptest::collection::vec(
                proptest::collection::vec(0u64..5, 3),
                2..20,
            )
        ) {
            // Pad every row to the same rater count to form a valid matrix.
            let max: u64 = rows.iter().map(|r| r.iter().sum::<u64>()).max().unwrap().max(2);
            let matrix: Vec<Vec<u64>> = rows
                .into_iter()
                .map(|mut r| {
                    let sum: u64 = r.iter().sum();
                    r[0] += max - sum;
                    r
                })
                .collect();
            let k = fleiss_kappa(&matrix).unwrap();
            prop_assert!(k.value <= 1.0 + 1e-12);
            prop_assert!(k.value.is_finite());
            if k.degenerate {
                prop_assert_eq!(k.value, 1.0);
            }
        }
    }
}
