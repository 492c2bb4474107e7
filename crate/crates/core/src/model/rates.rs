use serde::{Deserialize, Serialize};

use super::TraitPoint;
use crate::Scalar;

/// Values on a regular lattice over a box, read back by multilinear
/// interpolation. Row-major: the last axis varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridTable<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Scalar> GridTable<T> {
    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn is_consistent(&self) -> bool {
        let n = self.shape.len();
        n > 0
            && self.lower.len() == n
            && self.upper.len() == n
            && self.shape.iter().all(|&s| s >= 1)
            && self.shape.iter().product::<usize>() == self.values.len()
            && self.lower.iter().zip(&self.upper).all(|(lo, hi)| lo <= hi)
    }

    /// Multilinear interpolation; points outside the box are clamped onto it.
    #[allow(clippy::needless_range_loop)]
    pub fn eval(&self, coords: &[T]) -> T {
        debug_assert_eq!(coords.len(), self.dim());
        let n = self.dim();
        // Per axis: base index and fractional offset.
        let mut base = Vec::with_capacity(n);
        let mut frac = Vec::with_capacity(n);
        for axis in 0..n {
            let (lo, hi, size) = (self.lower[axis], self.upper[axis], self.shape[axis]);
            if size == 1 || hi <= lo {
                base.push(0usize);
                frac.push(T::zero());
                continue;
            }
            let cells = T::from_usize(size - 1).unwrap();
            let pos = ((coords[axis] - lo) / (hi - lo) * cells)
                .max(T::zero())
                .min(cells);
            let mut i = pos.floor().to_usize().unwrap_or(0);
            if i >= size - 1 {
                i = size - 2;
            }
            base.push(i);
            frac.push(pos - T::from_usize(i).unwrap());
        }
        let mut total = T::zero();
        for corner in 0..(1usize << n) {
            let mut weight = T::one();
            let mut flat = 0usize;
            for axis in 0..n {
                let upper = (corner >> axis) & 1 == 1;
                let idx = if upper && self.shape[axis] > 1 {
                    weight *= frac[axis];
                    base[axis] + 1
                } else {
                    if self.shape[axis] > 1 {
                        weight *= T::one() - frac[axis];
                    } else if upper {
                        weight = T::zero();
                    }
                    base[axis]
                };
                flat = flat * self.shape[axis] + idx;
            }
            if weight != T::zero() {
                total += weight * self.values[flat];
            }
        }
        total
    }
}

/// Parametric family for the per-individual rates `b`, `d` and the mutation
/// probability `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateSpec<T> {
    Constant {
        value: T,
    },
    /// `intercept + <gradient, x>`.
    Affine {
        intercept: T,
        gradient: Vec<T>,
    },
    /// `base + amplitude * exp(-|x - center|^2 / (2 width^2))`.
    GaussianBump {
        center: Vec<T>,
        width: T,
        base: T,
        amplitude: T,
    },
    GridTable(GridTable<T>),
}

impl<T: Scalar> RateSpec<T> {
    pub fn constant(value: T) -> Self {
        Self::Constant { value }
    }

    pub fn eval(&self, x: &TraitPoint<T>) -> T {
        match self {
            Self::Constant { value } => *value,
            Self::Affine {
                intercept,
                gradient,
            } => {
                *intercept
                    + gradient
                        .iter()
                        .zip(x.coords())
                        .map(|(&g, &c)| g * c)
                        .sum::<T>()
            }
            Self::GaussianBump {
                center,
                width,
                base,
                amplitude,
            } => {
                let r2: T = center
                    .iter()
                    .zip(x.coords())
                    .map(|(&m, &c)| (c - m) * (c - m))
                    .sum();
                *base + *amplitude * (-r2 / (T::lit(2.0) * *width * *width)).exp()
            }
            Self::GridTable(table) => table.eval(x.coords()),
        }
    }

    /// Checks vector lengths against the trait dimension.
    pub fn shape_error(&self, dim: usize) -> Option<String> {
        match self {
            Self::Constant { .. } => None,
            Self::Affine { gradient, .. } if gradient.len() != dim => Some(format!(
                "affine gradient has {} entries, trait dimension is {dim}",
                gradient.len()
            )),
            Self::GaussianBump { center, width, .. } => {
                if center.len() != dim {
                    Some(format!(
                        "gaussian-bump center has {} entries, trait dimension is {dim}",
                        center.len()
                    ))
                } else if *width <= T::zero() {
                    Some("gaussian-bump width must be positive".into())
                } else {
                    None
                }
            }
            Self::GridTable(t) if !t.is_consistent() || t.dim() != dim => {
                Some("grid-table shape does not match its values or the trait dimension".into())
            }
            _ => None,
        }
    }
}

/// Competition kernel `alpha(x, y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CompetitionSpec<T> {
    Constant {
        value: T,
    },
    /// `floor + amplitude * exp(-|x - y|^2 / (2 width^2))`.
    GaussianKernel {
        amplitude: T,
        width: T,
        floor: T,
    },
    /// Table over the concatenated coordinates `(x, y)`.
    GridTable(GridTable<T>),
}

impl<T: Scalar> CompetitionSpec<T> {
    pub fn constant(value: T) -> Self {
        Self::Constant { value }
    }

    pub fn eval(&self, x: &TraitPoint<T>, y: &TraitPoint<T>) -> T {
        match self {
            Self::Constant { value } => *value,
            Self::GaussianKernel {
                amplitude,
                width,
                floor,
            } => {
                let r2 = x.squared_distance(y);
                *floor + *amplitude * (-r2 / (T::lit(2.0) * *width * *width)).exp()
            }
            Self::GridTable(table) => {
                let mut joint = Vec::with_capacity(x.dim() + y.dim());
                joint.extend_from_slice(x.coords());
                joint.extend_from_slice(y.coords());
                table.eval(&joint)
            }
        }
    }

    pub fn shape_error(&self, dim: usize) -> Option<String> {
        match self {
            Self::GaussianKernel { width, .. } if *width <= T::zero() => {
                Some("gaussian-kernel width must be positive".into())
            }
            Self::GridTable(t) if !t.is_consistent() || t.dim() != 2 * dim => {
                Some("competition grid-table must span the concatenated (x, y) coordinates".into())
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64) -> TraitPoint<f64> {
        TraitPoint::scalar(x)
    }

    #[test]
    fn grid_table_interpolates_linearly() {
        let t: GridTable<f64> = GridTable {
            lower: vec![0.0],
            upper: vec![1.0],
            shape: vec![3],
            values: vec![1.0, 2.0, 4.0],
        };
        assert_eq!(t.eval(&[0.0]), 1.0);
        assert_eq!(t.eval(&[0.5]), 2.0);
        assert_eq!(t.eval(&[1.0]), 4.0);
        assert!((t.eval(&[0.25]) - 1.5).abs() < 1e-15);
        assert!((t.eval(&[0.75]) - 3.0).abs() < 1e-15);
        // clamped
        assert_eq!(t.eval(&[2.0]), 4.0);
    }

    #[test]
    fn bilinear_competition_table() {
        let alpha = CompetitionSpec::GridTable(GridTable {
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
            shape: vec![2, 2],
            values: vec![1.0, 0.5, 0.5, 1.0],
        });
        assert_eq!(alpha.eval(&p(0.0), &p(0.0)), 1.0);
        assert_eq!(alpha.eval(&p(0.0), &p(1.0)), 0.5);
        assert_eq!(alpha.eval(&p(1.0), &p(0.0)), 0.5);
        assert_eq!(alpha.eval(&p(1.0), &p(1.0)), 1.0);
        assert!((alpha.eval(&p(0.5), &p(0.5)) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn parametric_rates() {
        let affine = RateSpec::Affine {
            intercept: 1.0,
            gradient: vec![2.0],
        };
        assert_eq!(affine.eval(&p(0.25)), 1.5);
        let bump = RateSpec::GaussianBump {
            center: vec![0.5],
            width: 0.1,
            base: 1.0,
            amplitude: 2.0,
        };
        assert_eq!(bump.eval(&p(0.5)), 3.0);
        assert!(bump.eval(&p(0.0)) - 1.0 < 1e-5);
        let kernel = CompetitionSpec::GaussianKernel {
            amplitude: 1.0,
            width: 1.0,
            floor: 0.1,
        };
        assert_eq!(kernel.eval(&p(0.3), &p(0.3)), 1.1);
        assert!((kernel.eval(&p(0.0), &p(1.0)) - (0.1 + (-0.5f64).exp())).abs() < 1e-15);
    }
}
