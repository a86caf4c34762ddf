//! Dynamic time warping with a symmetric step pattern.
//!
//! Local cost is the squared difference. Among warping paths with minimal
//! accumulated cost, the shortest is taken, and the distance is that cost
//! divided by the path length.

use super::DetectError;

#[derive(Clone, Copy)]
struct Cell {
    cost: f64,
    len: u32,
}

impl Cell {
    const NONE: Cell = Cell {
        cost: f64::INFINITY,
        len: u32::MAX,
    };

    fn better(self, other: Cell) -> Cell {
        if other.cost < self.cost || (other.cost == self.cost && other.len < self.len) {
            other
        } else {
            self
        }
    }
}

/// Accumulated cost and length of the chosen optimal path.
pub fn dtw_path_cost(a: &[f64], b: &[f64]) -> Result<(f64, usize), DetectError> {
    if a.is_empty() || b.is_empty() {
        return Err(DetectError::EmptySequence);
    }
    let m = b.len();
    let mut prev = vec![Cell::NONE; m];
    let mut curr = vec![Cell::NONE; m];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            let d = x - y;
            let local = d * d;
            let best = if i == 0 && j == 0 {
                Cell { cost: 0.0, len: 0 }
            } else {
                let mut best = Cell::NONE;
                if i > 0 && j > 0 {
                    best = best.better(prev[j - 1]);
                }
                if i > 0 {
                    best = best.better(prev[j]);
                }
                if j > 0 {
                    best = best.better(curr[j - 1]);
                }
                best
            };
            curr[j] = Cell {
                cost: local + best.cost,
                len: best.len + 1,
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    let end = prev[m - 1];
    Ok((end.cost, end.len as usize))
}

/// Path-length normalized DTW distance.
pub fn dtw_distance(a: &[f64], b: &[f64]) -> Result<f64, DetectError> {
    let (cost, len) = dtw_path_cost(a, b)?;
    Ok(cost / len as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_zero() {
        let a = [0.3, -1.0, 2.0, 0.5];
        assert_eq!(dtw_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn warped_copy_is_zero() {
        assert_eq!(dtw_distance(&[0.0, 1.0, 0.0], &[0.0, 1.0, 1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn single_points() {
        assert_eq!(dtw_distance(&[1.0], &[3.0]).unwrap(), 4.0);
        // (1,0),(2,0): costs 1 + 4 over two steps
        assert_eq!(dtw_distance(&[1.0, 2.0], &[0.0]).unwrap(), 2.5);
    }

    #[test]
    fn empty_rejected() {
        assert_eq!(dtw_distance(&[], &[1.0]), Err(DetectError::EmptySequence));
    }
}
