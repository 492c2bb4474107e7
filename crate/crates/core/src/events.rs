//! Event selection shared by the individual-based engine and the two-type
//! chain, so both realize the same jump chain from the same uniforms.

use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transition {
    Birth,
    Death,
}

/// Total rate `sum_i (birth_i + death_i)`, accumulated in slot order.
#[inline]
pub fn total_rate<T: Scalar>(rates: impl IntoIterator<Item = (T, T)>) -> T {
    let mut total = T::zero();
    for (b, d) in rates {
        total += b + d;
    }
    total
}

/// Two-level search: the slot whose cumulative range contains
/// `u * total`, then birth or death within that slot.
///
/// `u` is uniform on `[0, 1)`. Rounding fall-through picks the last slot
/// with positive rate.
pub fn select_two_level<T: Scalar>(rates: &[(T, T)], total: T, u: T) -> (usize, Transition) {
    let target = u * total;
    let mut acc = T::zero();
    for (i, &(b, d)) in rates.iter().enumerate() {
        let slot = b + d;
        if target < acc + slot {
            let within = target - acc;
            return if within < b {
                (i, Transition::Birth)
            } else {
                (i, Transition::Death)
            };
        }
        acc += slot;
    }
    let (i, &(b, d)) = rates
        .iter()
        .enumerate()
        .rev()
        .find(|(_, &(b, d))| b + d > T::zero())
        .expect("select_two_level called with zero total rate");
    if d > T::zero() {
        (i, Transition::Death)
    } else {
        debug_assert!(b > T::zero());
        (i, Transition::Birth)
    }
}
