//! Dimorphic competitive Lotka-Volterra system
//! `n_x' = n_x (r_x - a_xx n_x - a_xy n_y)`, `n_y' = n_y (r_y - a_yx n_x - a_yy n_y)`.

use serde::Serialize;
use thiserror::Error;

use crate::model::{IisQuantities, ModelSpec, TraitPoint, IIS_TOLERANCE};
use crate::Scalar;

pub const DEFAULT_STEP: f64 = 1e-2;
/// Real parts closer to zero than this make an equilibrium non-hyperbolic.
pub const HYPERBOLIC_TOLERANCE: f64 = 1e-10;
/// Residual `|rhs|` accepted at an equilibrium, relative to `1 + |n|`.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LvError {
    #[error("growth rate b - d = {0} is not positive")]
    NotViable(f64),
    #[error("initial state ({0}, {1}) is outside the nonnegative quadrant")]
    NegativeInitial(f64, f64),
    #[error("step {0} must be positive and finite")]
    BadStep(f64),
    #[error("state became non-finite at t = {0}; the step is too large")]
    Unstable(f64),
    #[error("({n_x}, {n_y}) is not an equilibrium: |rhs| = {residual}")]
    NotEquilibrium { n_x: f64, n_y: f64, residual: f64 },
}

/// Coefficients of the system, index 0 for `x` and 1 for `y`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LvSystem<T> {
    pub traits: Option<(TraitPoint<T>, TraitPoint<T>)>,
    pub birth: [T; 2],
    pub death: [T; 2],
    /// `alpha[i][j]` is the competition felt by type `i` from type `j`.
    pub alpha: [[T; 2]; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumKind {
    Extinct,
    ResidentX,
    ResidentY,
    Interior,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Feasibility {
    Feasible,
    Infeasible,
    /// Singular interaction matrix; the point is reported as NaN.
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Equilibrium<T> {
    pub kind: EquilibriumKind,
    pub point: (T, T),
    pub feasibility: Feasibility,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    Stable,
    Unstable,
    Saddle,
    NonHyperbolic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClampEvent<T> {
    pub time: T,
    /// 0 for `n_x`, 1 for `n_y`.
    pub coordinate: usize,
    /// Value before clamping.
    pub value: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LvTrajectory<T> {
    /// `(t, n_x, n_y)` after every step, starting with the initial state.
    pub samples: Vec<(T, T, T)>,
    pub clamps: Vec<ClampEvent<T>>,
}

impl<T: Scalar> LvTrajectory<T> {
    pub fn final_state(&self) -> (T, T) {
        let &(_, a, b) = self
            .samples
            .last()
            .expect("trajectory has the initial sample");
        (a, b)
    }
}

impl<T: Scalar> LvSystem<T> {
    pub fn new(birth: [T; 2], death: [T; 2], alpha: [[T; 2]; 2]) -> Result<Self, LvError> {
        for i in 0..2 {
            let r = birth[i] - death[i];
            if !(r > T::zero()) {
                return Err(LvError::NotViable(r.as_f64()));
            }
        }
        Ok(Self {
            traits: None,
            birth,
            death,
            alpha,
        })
    }

    /// Coefficients read off the model at the pair `(x, y)`.
    pub fn from_spec(
        spec: &ModelSpec<T>,
        x: &TraitPoint<T>,
        y: &TraitPoint<T>,
    ) -> Result<Self, LvError> {
        let mut sys = Self::new(
            [spec.birth_rate(x), spec.birth_rate(y)],
            [spec.death_rate(x), spec.death_rate(y)],
            [
                [spec.alpha(x, x), spec.alpha(x, y)],
                [spec.alpha(y, x), spec.alpha(y, y)],
            ],
        )?;
        sys.traits = Some((x.clone(), y.clone()));
        Ok(sys)
    }

    /// Invasion-implies-substitution quantities of the pair.
    pub fn iis(&self) -> IisQuantities<T> {
        let [rx, ry] = self.growth();
        let a = &self.alpha;
        IisQuantities {
            invade: ry * a[0][0] - rx * a[1][0],
            resist: rx * a[1][1] - ry * a[0][1],
        }
    }

    pub fn growth(&self) -> [T; 2] {
        [self.birth[0] - self.death[0], self.birth[1] - self.death[1]]
    }

    pub fn rhs(&self, n_x: T, n_y: T) -> (T, T) {
        let [rx, ry] = self.growth();
        let a = &self.alpha;
        (
            n_x * (rx - a[0][0] * n_x - a[0][1] * n_y),
            n_y * (ry - a[1][0] * n_x - a[1][1] * n_y),
        )
    }

    pub fn jacobian(&self, n_x: T, n_y: T) -> [[T; 2]; 2] {
        let [rx, ry] = self.growth();
        let a = &self.alpha;
        let two = T::lit(2.0);
        [
            [rx - two * a[0][0] * n_x - a[0][1] * n_y, -a[0][1] * n_x],
            [-a[1][0] * n_y, ry - a[1][0] * n_x - two * a[1][1] * n_y],
        ]
    }

    pub fn equilibria(&self) -> Vec<Equilibrium<T>> {
        let [rx, ry] = self.growth();
        let a = &self.alpha;
        let zero = T::zero();
        let mut out = vec![
            Equilibrium {
                kind: EquilibriumKind::Extinct,
                point: (zero, zero),
                feasibility: Feasibility::Feasible,
            },
            Equilibrium {
                kind: EquilibriumKind::ResidentX,
                point: (rx / a[0][0], zero),
                feasibility: Feasibility::Feasible,
            },
            Equilibrium {
                kind: EquilibriumKind::ResidentY,
                point: (zero, ry / a[1][1]),
                feasibility: Feasibility::Feasible,
            },
        ];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let interior = if det.abs() <= T::lit(IIS_TOLERANCE) {
            Equilibrium {
                kind: EquilibriumKind::Interior,
                point: (T::nan(), T::nan()),
                feasibility: Feasibility::Degenerate,
            }
        } else {
            let nx = (rx * a[1][1] - ry * a[0][1]) / det;
            let ny = (ry * a[0][0] - rx * a[1][0]) / det;
            let feasible = nx >= zero && ny >= zero;
            Equilibrium {
                kind: EquilibriumKind::Interior,
                point: (nx, ny),
                feasibility: if feasible {
                    Feasibility::Feasible
                } else {
                    Feasibility::Infeasible
                },
            }
        };
        out.push(interior);
        out
    }

    /// Eigenvalues of the Jacobian as `(re, im)` pairs.
    pub fn eigenvalues(&self, n_x: T, n_y: T) -> [(T, T); 2] {
        let j = self.jacobian(n_x, n_y);
        let half = T::lit(0.5);
        let tr = j[0][0] + j[1][1];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let disc = tr * tr - T::lit(4.0) * det;
        if disc >= T::zero() {
            let s = disc.sqrt();
            [(half * (tr - s), T::zero()), (half * (tr + s), T::zero())]
        } else {
            let s = (-disc).sqrt();
            [(half * tr, -half * s), (half * tr, half * s)]
        }
    }

    pub fn classify_stability(&self, n_x: T, n_y: T) -> Result<Stability, LvError> {
        let (fx, fy) = self.rhs(n_x, n_y);
        let residual = (fx * fx + fy * fy).sqrt();
        let scale = T::one() + n_x.abs() + n_y.abs();
        if !(residual <= T::lit(EQUILIBRIUM_TOLERANCE) * scale) {
            return Err(LvError::NotEquilibrium {
                n_x: n_x.as_f64(),
                n_y: n_y.as_f64(),
                residual: residual.as_f64(),
            });
        }
        let ev = self.eigenvalues(n_x, n_y);
        let tol = T::lit(HYPERBOLIC_TOLERANCE);
        if ev.iter().any(|(re, _)| re.abs() < tol) {
            return Ok(Stability::NonHyperbolic);
        }
        let negative = ev.iter().filter(|(re, _)| *re < T::zero()).count();
        Ok(match negative {
            2 => Stability::Stable,
            0 => Stability::Unstable,
            _ => Stability::Saddle,
        })
    }

    /// Classical RK4 with fixed `step`, clamping to the nonnegative quadrant.
    pub fn integrate(
        &self,
        initial: (T, T),
        t_end: T,
        step: T,
    ) -> Result<LvTrajectory<T>, LvError> {
        if !(step > T::zero()) || !step.is_finite() {
            return Err(LvError::BadStep(step.as_f64()));
        }
        let (mut nx, mut ny) = initial;
        if !(nx >= T::zero() && ny >= T::zero()) {
            return Err(LvError::NegativeInitial(nx.as_f64(), ny.as_f64()));
        }
        let steps = (t_end / step).ceil().to_u64().unwrap_or(0);
        let mut samples = Vec::with_capacity(steps as usize + 1);
        let mut clamps = Vec::new();
        samples.push((T::zero(), nx, ny));
        let half = T::lit(0.5);
        let sixth = T::one() / T::lit(6.0);
        let two = T::lit(2.0);
        let mut t = T::zero();
        for i in 1..=steps {
            let h = if i == steps { t_end - t } else { step };
            let k1 = self.rhs(nx, ny);
            let k2 = self.rhs(nx + half * h * k1.0, ny + half * h * k1.1);
            let k3 = self.rhs(nx + half * h * k2.0, ny + half * h * k2.1);
            let k4 = self.rhs(nx + h * k3.0, ny + h * k3.1);
            nx += h * sixth * (k1.0 + two * k2.0 + two * k3.0 + k4.0);
            ny += h * sixth * (k1.1 + two * k2.1 + two * k3.1 + k4.1);
            t = if i == steps {
                t_end
            } else {
                T::from_count(i) * step
            };
            if !nx.is_finite() || !ny.is_finite() {
                return Err(LvError::Unstable(t.as_f64()));
            }
            for (coordinate, n) in [&mut nx, &mut ny].into_iter().enumerate() {
                if *n < T::zero() {
                    clamps.push(ClampEvent {
                        time: t,
                        coordinate,
                        value: *n,
                    });
                    *n = T::zero();
                }
            }
            samples.push((t, nx, ny));
        }
        Ok(LvTrajectory { samples, clamps })
    }
}
