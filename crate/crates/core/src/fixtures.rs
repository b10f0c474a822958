//! Reference pulse parameter sets for the five-level M-type system.
//!
//! Rows are `(t0, sigma, omega0, delta)` per channel, in units of `1/Γ` and `Γ`.

use crate::pulses::{PulseParams, PulseSet};

const TABLE1: [[f64; 4]; 4] = [
    [18.9032811, 3.227598027, 3.552287843, -0.208536178],
    [14.95405537, 4.942187821, 28.22099145, 4.953080222],
    [20.94907939, 5.234351941, 33.03312243, 0.061713435],
    [16.89870222, 3.616342008, 3.472354099, -5.125913793],
];

const TABLE2: [[f64; 4]; 4] = [
    [25.99837314, 3.622208677, 13.00608085, 3.571861571],
    [22.90506102, 4.021947620, 22.96440215, 3.574703202],
    [21.56536551, 3.282861957, 20.91424811, -3.255710582],
    [20.05748673, 2.888952454, 5.013657599, -3.061313302],
];

const TABLE3: [[f64; 4]; 4] = [
    [26.13033743, 3.940057889, 32.00000000, 0.101091573],
    [22.63505033, 4.000000000, 32.00000000, 0.000448309],
    [20.28044792, 4.000000000, 22.68347007, -0.004890434],
    [15.00000000, 4.000000000, 30.00000000, -0.003750851],
];

fn to_set(rows: &[[f64; 4]; 4]) -> PulseSet {
    PulseSet::new(
        rows.iter()
            .map(|r| PulseParams::new(r[0], r[1], r[2], r[3]))
            .collect(),
    )
}

/// Reference set 1. Several entries sit outside the default optimizer box.
pub fn table1() -> PulseSet {
    to_set(&TABLE1)
}

/// Reference set 2.
pub fn table2() -> PulseSet {
    to_set(&TABLE2)
}

/// Reference set 3, with several parameters pinned at the box edges.
pub fn table3() -> PulseSet {
    to_set(&TABLE3)
}

/// Looks a table up by number (1, 2 or 3).
pub fn table(number: usize) -> Option<PulseSet> {
    match number {
        1 => Some(table1()),
        2 => Some(table2()),
        3 => Some(table3()),
        _ => None,
    }
}
