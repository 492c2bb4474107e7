use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BranchingError, DeathRate};
use crate::events::{select_two_level, total_rate, Transition};
use crate::model::{ModelSpec, TraitPoint};
use crate::rng::{exp_waiting, uniform};
use crate::Scalar;

/// Box `[a, b) x [c, d)` in count coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
}

impl<T: Scalar> Region<T> {
    /// The whole quadrant.
    pub fn everything() -> Self {
        Self {
            a: T::zero(),
            b: T::infinity(),
            c: T::zero(),
            d: T::infinity(),
        }
    }

    pub fn contains(&self, m: u64, n: u64) -> bool {
        let (m, n) = (T::from_count(m), T::from_count(n));
        self.a <= m && m < self.b && self.c <= n && n < self.d
    }

    /// Smallest and largest integer in `[lo, hi)`, if any.
    fn integer_range(lo: T, hi: T) -> Option<(u64, u64)> {
        let first = lo.max(T::zero()).ceil().to_u64()?;
        if !hi.is_finite() {
            return None;
        }
        let last = (hi.ceil().to_u64()?).checked_sub(1)?;
        (first <= last).then_some((first, last))
    }

    /// Integer corners `((m_min, n_min), (m_max, n_max))` of the lattice
    /// points inside a bounded region.
    pub fn lattice_corners(&self) -> Option<((u64, u64), (u64, u64))> {
        let (m0, m1) = Self::integer_range(self.a, self.b)?;
        let (n0, n1) = Self::integer_range(self.c, self.d)?;
        Some(((m0, n0), (m1, n1)))
    }
}

/// Two types with constant birth rates and per-individual death rates
/// `d_1(m, n) = d_x + (a_11 m + a_12 n) / K` and
/// `d_2(m, n) = d_y + (a_21 m + a_22 n) / K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoTypeChain<T> {
    pub birth: [T; 2],
    pub death: [T; 2],
    pub alpha: [[T; 2]; 2],
    pub k: u64,
    pub region: Region<T>,
    pub initial: (u64, u64),
}

impl<T: Scalar> TwoTypeChain<T> {
    /// Type 1 is `x`, type 2 is `y`, with the model's rates.
    pub fn from_spec(
        spec: &ModelSpec<T>,
        x: &TraitPoint<T>,
        y: &TraitPoint<T>,
        initial: (u64, u64),
        region: Region<T>,
    ) -> Self {
        Self {
            birth: [spec.birth_rate(x), spec.birth_rate(y)],
            death: [spec.death_rate(x), spec.death_rate(y)],
            alpha: [
                [spec.alpha(x, x), spec.alpha(x, y)],
                [spec.alpha(y, x), spec.alpha(y, y)],
            ],
            k: spec.k,
            region,
            initial,
        }
    }

    /// Per-individual death rate of type `i` (0 or 1) at `(m, n)`.
    pub fn death_rate(&self, i: usize, m: u64, n: u64) -> T {
        let a = &self.alpha[i];
        let competition = T::zero() + a[0] * T::from_count(m) + a[1] * T::from_count(n);
        self.death[i] + competition / T::from_count(self.k)
    }

    /// `(count * b, count * d(m, n))` for both types, in the layout the
    /// individual-based engine uses.
    fn rates(&self, m: u64, n: u64) -> [(T, T); 2] {
        let (mt, nt) = (T::from_count(m), T::from_count(n));
        [
            (mt * self.birth[0], mt * self.death_rate(0, m, n)),
            (nt * self.birth[1], nt * self.death_rate(1, m, n)),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Below,
    Above,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TwoTypeExit<T> {
    /// Left the region through coordinate `coordinate` (1 or 2).
    Left {
        time: T,
        coordinate: u8,
        side: Side,
    },
    /// Both types extinct inside the region.
    Absorbed {
        time: T,
    },
    Horizon,
}

fn exit_of<T: Scalar>(region: &Region<T>, m: u64, n: u64, time: T) -> Option<TwoTypeExit<T>> {
    let (mt, nt) = (T::from_count(m), T::from_count(n));
    let side = |v: T, lo: T, hi: T| {
        if v < lo {
            Some(Side::Below)
        } else if v >= hi {
            Some(Side::Above)
        } else {
            None
        }
    };
    if let Some(side) = side(mt, region.a, region.b) {
        return Some(TwoTypeExit::Left {
            time,
            coordinate: 1,
            side,
        });
    }
    side(nt, region.c, region.d).map(|side| TwoTypeExit::Left {
        time,
        coordinate: 2,
        side,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoTypeOptions<T> {
    pub horizon: T,
    pub stop_at_exit: bool,
    pub record_path: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwoTypePath<T> {
    /// `(t, m, n)` after every event, starting with the initial state.
    pub path: Vec<(T, u64, u64)>,
    pub exit: TwoTypeExit<T>,
    pub final_state: (u64, u64),
    pub time: T,
    pub events: u64,
}

/// Exact simulation of the chain. Draw order per event matches the
/// individual-based engine: waiting time, then the selection uniform.
pub fn simulate_two_type<T: Scalar, R: Rng + ?Sized>(
    chain: &TwoTypeChain<T>,
    options: &TwoTypeOptions<T>,
    rng: &mut R,
) -> Result<TwoTypePath<T>, BranchingError> {
    let (mut m, mut n) = chain.initial;
    if options.stop_at_exit && !chain.region.contains(m, n) {
        return Err(BranchingError::OutsideRegion(m, n));
    }
    let mut t = T::zero();
    let mut path = Vec::new();
    if options.record_path {
        path.push((t, m, n));
    }
    let mut events = 0;
    let exit = loop {
        let rates = chain.rates(m, n);
        let total = total_rate(rates);
        if !(total > T::zero()) {
            break TwoTypeExit::Absorbed { time: t };
        }
        let next = t + exp_waiting(rng, total);
        if next > options.horizon {
            t = options.horizon;
            break TwoTypeExit::Horizon;
        }
        t = next;
        let (slot, transition) = select_two_level(&rates, total, uniform(rng));
        let count = if slot == 0 { &mut m } else { &mut n };
        match transition {
            Transition::Birth => *count += 1,
            Transition::Death => *count -= 1,
        }
        events += 1;
        if options.record_path {
            path.push((t, m, n));
        }
        if options.stop_at_exit {
            if let Some(exit) = exit_of(&chain.region, m, n, t) {
                break exit;
            }
        }
    };
    Ok(TwoTypePath {
        path,
        exit,
        final_state: (m, n),
        time: t,
        events,
    })
}

/// Death-rate bounds `d_i^- <= d_i(m, n) <= d_i^+` on the region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationBounds<T> {
    pub d1_minus: DeathRate<T>,
    pub d1_plus: DeathRate<T>,
    pub d2_minus: DeathRate<T>,
    pub d2_plus: DeathRate<T>,
}

/// Exact infimum and supremum of `d_1, d_2` over the lattice points of the
/// chain's region. Death rates increase in both counts (nonnegative `alpha`),
/// so they sit at the lower and upper integer corners.
pub fn lattice_bounds<T: Scalar>(chain: &TwoTypeChain<T>) -> Option<DominationBounds<T>> {
    let ((m0, n0), (m1, n1)) = chain.region.lattice_corners()?;
    Some(DominationBounds {
        d1_minus: DeathRate::Finite(chain.death_rate(0, m0, n0)),
        d1_plus: DeathRate::Finite(chain.death_rate(0, m1, n1)),
        d2_minus: DeathRate::Finite(chain.death_rate(1, m0, n0)),
        d2_plus: DeathRate::Finite(chain.death_rate(1, m1, n1)),
    })
}

/// Counts of the five coupled processes: `b1_minus <= m <= b1_plus` and
/// `b2_minus <= n <= b2_plus` under valid bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CoupledState {
    pub b1_minus: u64,
    pub m: u64,
    pub b1_plus: u64,
    pub b2_minus: u64,
    pub n: u64,
    pub b2_plus: u64,
}

impl CoupledState {
    pub fn dominated(&self) -> bool {
        self.b1_minus <= self.m
            && self.m <= self.b1_plus
            && self.b2_minus <= self.n
            && self.n <= self.b2_plus
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingOutcome<T> {
    pub epochs: u64,
    /// Epochs after which domination failed.
    pub violations: u64,
    /// Epochs at which `d_i(m, n)` lay outside `[d_i^-, d_i^+]` in the region.
    pub breaches: u64,
    pub exit: TwoTypeExit<T>,
    pub final_state: CoupledState,
    /// Recorded when requested: `(t, state)` after every epoch.
    pub path: Vec<(T, CoupledState)>,
}

/// One group of three processes sharing slots: lower bound, chain, upper
/// bound. `None` death means the zero process.
struct Group<T> {
    birth: T,
    deaths: [Option<T>; 3],
}

impl<T: Scalar> Group<T> {
    fn slot_rate(&self, counts: [u64; 3]) -> (u64, T) {
        let mut max_count = 0;
        let mut max_death = T::zero();
        for (c, d) in counts.iter().zip(&self.deaths) {
            if let Some(d) = d {
                max_count = max_count.max(*c);
                max_death = max_death.max(*d);
            }
        }
        (max_count, self.birth + max_death)
    }

    fn apply(&self, counts: &mut [u64; 3], slot: u64, w: T) {
        if w < self.birth {
            for (c, d) in counts.iter_mut().zip(&self.deaths) {
                if d.is_some() && *c > slot {
                    *c += 1;
                }
            }
            return;
        }
        let v = w - self.birth;
        for (c, d) in counts.iter_mut().zip(&self.deaths) {
            if let Some(d) = d {
                if *c > slot && v < *d {
                    *c -= 1;
                }
            }
        }
    }
}

/// Couples the chain with branching processes `B_1^- ~ P(b_1, d_1^+)`,
/// `B_1^+ ~ P(b_1, d_1^-)` and likewise for type 2, all driven by one
/// uniformized event stream: per epoch one uniform for the waiting time and
/// one that picks group, individual slot and event. Domination then holds
/// by construction whenever the bounds are valid at the visited states.
pub fn coupled_domination<T: Scalar, R: Rng + ?Sized>(
    chain: &TwoTypeChain<T>,
    bounds: &DominationBounds<T>,
    horizon: T,
    record_path: bool,
    rng: &mut R,
) -> Result<CouplingOutcome<T>, BranchingError> {
    let (m0, n0) = chain.initial;
    if !chain.region.contains(m0, n0) {
        return Err(BranchingError::OutsideRegion(m0, n0));
    }
    let start = |d: DeathRate<T>, c: u64| if d.finite().is_some() { c } else { 0 };
    let mut g1 = [start(bounds.d1_plus, m0), m0, start(bounds.d1_minus, m0)];
    let mut g2 = [start(bounds.d2_plus, n0), n0, start(bounds.d2_minus, n0)];
    let snapshot = |g1: &[u64; 3], g2: &[u64; 3]| CoupledState {
        b1_minus: g1[0],
        m: g1[1],
        b1_plus: g1[2],
        b2_minus: g2[0],
        n: g2[1],
        b2_plus: g2[2],
    };
    let within = |d: T, lo: DeathRate<T>, hi: DeathRate<T>| {
        lo.finite().is_none_or(|lo| lo <= d) && hi.finite().is_none_or(|hi| d <= hi)
    };
    let mut t = T::zero();
    let mut epochs = 0;
    let mut violations = 0;
    let mut breaches = 0;
    let mut path = Vec::new();
    if record_path {
        path.push((t, snapshot(&g1, &g2)));
    }
    let exit = loop {
        let (m, n) = (g1[1], g2[1]);
        let d1 = chain.death_rate(0, m, n);
        let d2 = chain.death_rate(1, m, n);
        if !within(d1, bounds.d1_minus, bounds.d1_plus)
            || !within(d2, bounds.d2_minus, bounds.d2_plus)
        {
            breaches += 1;
        }
        let group1 = Group {
            birth: chain.birth[0],
            deaths: [bounds.d1_plus.finite(), Some(d1), bounds.d1_minus.finite()],
        };
        let group2 = Group {
            birth: chain.birth[1],
            deaths: [bounds.d2_plus.finite(), Some(d2), bounds.d2_minus.finite()],
        };
        let (c1, r1) = group1.slot_rate(g1);
        let (c2, r2) = group2.slot_rate(g2);
        let part1 = T::from_count(c1) * r1;
        let total = part1 + T::from_count(c2) * r2;
        if !(total > T::zero()) {
            break TwoTypeExit::Absorbed { time: t };
        }
        let next = t + exp_waiting(rng, total);
        if next > horizon {
            break TwoTypeExit::Horizon;
        }
        t = next;
        let r = uniform::<T, R>(rng) * total;
        let (group, counts, offset, slots, rate) = if r < part1 {
            (&group1, &mut g1, r, c1, r1)
        } else {
            (&group2, &mut g2, r - part1, c2, r2)
        };
        let slot = (offset / rate)
            .floor()
            .to_u64()
            .unwrap_or(0)
            .min(slots.saturating_sub(1));
        let w = offset - T::from_count(slot) * rate;
        group.apply(counts, slot, w);
        epochs += 1;
        let state = snapshot(&g1, &g2);
        if !state.dominated() {
            violations += 1;
        }
        if record_path {
            path.push((t, state));
        }
        if let Some(exit) = exit_of(&chain.region, g1[1], g2[1], t) {
            break exit;
        }
    };
    Ok(CouplingOutcome {
        epochs,
        violations,
        breaches,
        exit,
        final_state: snapshot(&g1, &g2),
        path,
    })
}
