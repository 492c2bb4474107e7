use std::fmt;

use serde::Serialize;

use super::{ModelSpec, MutationKernel, MutationRate};
use crate::Scalar;

/// One failed check. Lattice-point violations carry the offending
/// coordinates.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "check", rename_all = "kebab-case")]
pub enum Violation {
    Shape {
        field: String,
        message: String,
    },
    GrowthNotPositive {
        at: Vec<f64>,
        birth: f64,
        death: f64,
    },
    RateNotFinite {
        rate: String,
        at: Vec<f64>,
        value: f64,
    },
    MutationProbability {
        at: Vec<f64>,
        value: f64,
    },
    MutationRateTooLarge {
        at: Vec<f64>,
        value: f64,
    },
    MutationRateRule {
        message: String,
    },
    Competition {
        x: Vec<f64>,
        y: Vec<f64>,
        value: f64,
        lower: f64,
        upper: f64,
    },
    Kernel {
        message: String,
    },
    SystemSize,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Shape { field, message } => write!(f, "{field}: {message}"),
            Self::GrowthNotPositive { at, birth, death } => {
                write!(f, "b-d>0 fails at {at:?} (b={birth}, d={death})")
            }
            Self::RateNotFinite { rate, at, value } => {
                write!(f, "{rate} is not a finite nonnegative number at {at:?} ({value})")
            }
            Self::MutationProbability { at, value } => {
                write!(f, "p in (0,1] fails at {at:?} (p={value})")
            }
            Self::MutationRateTooLarge { at, value } => {
                write!(f, "u_K*p in [0,1] fails at {at:?} (u_K*p={value})")
            }
            Self::MutationRateRule { message } => write!(f, "mutation rate rule: {message}"),
            Self::Competition {
                x,
                y,
                value,
                lower,
                upper,
            } => write!(
                f,
                "alpha({x:?},{y:?}) = {value} outside [{lower}, {upper}] (alpha must be positive and bounded)"
            ),
            Self::Kernel { message } => write!(f, "mutation kernel: {message}"),
            Self::SystemSize => write!(f, "K must be a positive integer"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub lattice_points: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// Human-readable lines; growth failures on the whole lattice collapse to
    /// a single line.
    pub fn summary(&self) -> Vec<String> {
        let growth = self
            .violations
            .iter()
            .filter(|v| matches!(v, Violation::GrowthNotPositive { .. }))
            .count();
        let mut lines = Vec::new();
        if growth > 0 && growth == self.lattice_points {
            lines.push("b-d>0 fails everywhere".to_string());
        }
        for v in &self.violations {
            if growth == self.lattice_points && matches!(v, Violation::GrowthNotPositive { .. }) {
                continue;
            }
            lines.push(v.to_string());
        }
        lines
    }
}

fn to_f64<T: Scalar>(c: &[T]) -> Vec<f64> {
    c.iter().map(|v| v.as_f64()).collect()
}

/// Scans the validation lattice for every violated model assumption.
/// Violations are report content, never errors.
pub fn validate_spec<T: Scalar>(spec: &ModelSpec<T>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let v = &mut report.violations;
    let dim = spec.dim();

    if !spec.space.is_well_formed() {
        v.push(Violation::Shape {
            field: "space".into(),
            message: "bounds must be finite with lo <= hi".into(),
        });
        return report;
    }
    if spec.k == 0 {
        v.push(Violation::SystemSize);
    }
    for (name, rate) in [
        ("birth", &spec.birth),
        ("death", &spec.death),
        ("mutation_probability", &spec.mutation_probability),
    ] {
        if let Some(message) = rate.shape_error(dim) {
            v.push(Violation::Shape {
                field: name.into(),
                message,
            });
        }
    }
    if let Some(message) = spec.competition.shape_error(dim) {
        v.push(Violation::Shape {
            field: "competition".into(),
            message,
        });
    }
    if let MutationRate::Power { c, a } = &spec.mutation_rate {
        if !(*c > T::zero()) || !(*a > T::one()) {
            v.push(Violation::MutationRateRule {
                message: format!("u_K = c K^-a needs c > 0 and a > 1 (c={c}, a={a})"),
            });
        }
    }
    check_kernel(spec, v);
    if !v.is_empty() {
        return report;
    }

    let lattice = spec.space.lattice(spec.lattice_resolution);
    report.lattice_points = lattice.len();
    let v = &mut report.violations;
    let u_k = spec.u_k();
    for x in &lattice {
        let at = to_f64(x.coords());
        let b = spec.birth_rate(x);
        let d = spec.death_rate(x);
        let p = spec.mutation_prob(x);
        for (rate, value) in [("b", b), ("d", d), ("p", p)] {
            if !value.is_finite() || value < T::zero() {
                v.push(Violation::RateNotFinite {
                    rate: rate.into(),
                    at: at.clone(),
                    value: value.as_f64(),
                });
            }
        }
        if !(b - d > T::zero()) {
            v.push(Violation::GrowthNotPositive {
                at: at.clone(),
                birth: b.as_f64(),
                death: d.as_f64(),
            });
        }
        if !(p > T::zero() && p <= T::one()) {
            v.push(Violation::MutationProbability {
                at: at.clone(),
                value: p.as_f64(),
            });
        }
        let up = u_k * p;
        if !(up >= T::zero() && up <= T::one()) {
            v.push(Violation::MutationRateTooLarge {
                at: at.clone(),
                value: up.as_f64(),
            });
        }
    }
    let (lower, upper) = match spec.competition_bounds {
        Some([lo, hi]) => (lo, hi),
        None => (T::min_positive_value(), T::max_value()),
    };
    if !(lower > T::zero()) || lower > upper {
        v.push(Violation::Competition {
            x: vec![],
            y: vec![],
            value: f64::NAN,
            lower: lower.as_f64(),
            upper: upper.as_f64(),
        });
    }
    for x in &lattice {
        for y in &lattice {
            let a = spec.alpha(x, y);
            if !(a.is_finite() && a >= lower && a <= upper) {
                v.push(Violation::Competition {
                    x: to_f64(x.coords()),
                    y: to_f64(y.coords()),
                    value: a.as_f64(),
                    lower: lower.as_f64(),
                    upper: upper.as_f64(),
                });
            }
        }
    }
    report
}

fn check_kernel<T: Scalar>(spec: &ModelSpec<T>, v: &mut Vec<Violation>) {
    let dim = spec.dim();
    match &spec.mutation_kernel {
        MutationKernel::Atomic { rows } => {
            if rows.iter().filter(|r| r.source.is_none()).count() > 1 {
                v.push(Violation::Kernel {
                    message: "at most one atomic row may omit its source".into(),
                });
            }
            for (i, row) in rows.iter().enumerate() {
                if row.targets.is_empty() || row.targets.len() != row.weights.len() {
                    v.push(Violation::Kernel {
                        message: format!(
                            "row {i}: targets and weights must be non-empty and of equal length"
                        ),
                    });
                    continue;
                }
                if let Some(src) = &row.source {
                    if !spec.space.contains(src) {
                        v.push(Violation::Kernel {
                            message: format!("row {i}: source outside the trait space"),
                        });
                    }
                }
                for t in &row.targets {
                    if t.dim() != dim || !spec.space.contains(t) {
                        v.push(Violation::Kernel {
                            message: format!(
                                "row {i}: target {:?} outside the trait space",
                                to_f64(t.coords())
                            ),
                        });
                    }
                }
                let total: T = row.weights.iter().copied().sum();
                if row.weights.iter().any(|w| !(*w >= T::zero()))
                    || (total - T::one()).abs() > T::lit(1e-9)
                {
                    v.push(Violation::Kernel {
                        message: format!(
                            "row {i}: weights must be nonnegative and sum to 1 (sum {total})"
                        ),
                    });
                }
            }
        }
        MutationKernel::GaussianReflected { sigma } => {
            if sigma.len() != dim || sigma.iter().any(|s| !(*s > T::zero())) {
                v.push(Violation::Kernel {
                    message: "gaussian-reflected needs one positive sigma per dimension".into(),
                });
            }
        }
        MutationKernel::UniformBall { radius } => {
            if !(*radius > T::zero()) {
                v.push(Violation::Kernel {
                    message: "uniform-ball radius must be positive".into(),
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RateSpec;

    #[test]
    fn constant_model_is_valid() {
        let s = ModelSpec::<f64>::constant(2.0, 1.0, 1.0, 0.1, 100);
        let r = validate_spec(&s);
        assert!(r.is_valid(), "{:?}", r.summary());
        assert_eq!(r.lattice_points, 33);
    }

    #[test]
    fn equal_rates_fail_everywhere() {
        let s = ModelSpec::<f64>::constant(1.0, 1.0, 1.0, 0.1, 100);
        let r = validate_spec(&s);
        assert!(!r.is_valid());
        assert_eq!(r.summary(), vec!["b-d>0 fails everywhere".to_string()]);
    }

    #[test]
    fn affine_birth_fails_only_at_left_endpoint() {
        let mut s = ModelSpec::<f64>::constant(1.0, 1.0, 1.0, 0.1, 100);
        s.birth = RateSpec::Affine {
            intercept: 1.0,
            gradient: vec![1.0],
        };
        let r = validate_spec(&s);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(
            r.violations[0],
            Violation::GrowthNotPositive {
                at: vec![0.0],
                birth: 1.0,
                death: 1.0
            }
        );
    }

    #[test]
    fn other_violations_are_reported() {
        let mut s = ModelSpec::<f64>::constant(2.0, 1.0, 1.0, 1.5, 100);
        s.competition_bounds = Some([0.5, 0.9]);
        let r = validate_spec(&s);
        assert!(r
            .violations
            .iter()
            .any(|v| matches!(v, Violation::MutationProbability { .. })));
        assert!(r
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Competition { .. })));

        let s = ModelSpec::<f64>::constant(2.0, 1.0, 1.0, 0.5, 100)
            .with_mutation_rate(MutationRate::Power { c: 1.0, a: 0.5 });
        assert!(matches!(
            validate_spec(&s).violations[0],
            Violation::MutationRateRule { .. }
        ));

        let mut s = ModelSpec::<f64>::constant(2.0, 1.0, 1.0, 0.5, 100);
        s.mutation_kernel = MutationKernel::Atomic {
            rows: vec![crate::model::AtomicRow {
                source: None,
                targets: vec![crate::model::TraitPoint::scalar(0.5)],
                weights: vec![0.7],
            }],
        };
        assert!(matches!(
            validate_spec(&s).violations[0],
            Violation::Kernel { .. }
        ));
    }
}
