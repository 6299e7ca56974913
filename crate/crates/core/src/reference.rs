//! Published reference values for bounds whose formulas are not implemented.
//!
//! All values are in nats. Each table carries an identifier that is copied
//! into the `source` of every [`crate::bounds::BoundValue`] built from it.

/// Version tag of the shipped tables.
pub const TABLES_VERSION: &str = "1";

/// `(snr_db, lower, upper)` for the optical-intensity channel under a mean
/// constraint only.
pub const OI_TABLE_ID: &str = "oi-bounds-table";
pub const OI_BOUNDS: [(f64, f64, f64); 6] = [
    (3.0, 0.270, 0.830),
    (5.0, 0.420, 0.990),
    (8.0, 0.593, 1.010),
    (10.0, 0.830, 1.480),
    (15.0, 1.340, 1.770),
    (20.0, 1.780, 2.220),
];

/// `(snr_db, lower, upper)` for the peak-constrained AWGN channel with `A = √P`.
pub const PPC_TABLE_ID: &str = "ppc-bounds-table";
pub const PPC_BOUNDS: [(f64, f64, f64); 5] = [
    (2.0, 0.410, 0.474),
    (5.0, 0.530, 0.620),
    (10.0, 0.910, 0.927),
    (15.0, 1.230, 1.330),
    (20.0, 1.700, 1.780),
];

/// `(snr_db, capacity)` for the AWGN channel.
pub const AWGN_TABLE_ID: &str = "awgn-capacity-table";
pub const AWGN_CAPACITY: [(f64, f64); 3] = [(2.0, 0.474), (20.0, 2.307), (40.0, 4.605)];

/// Peak amplitude of every tabulated Poisson configuration.
pub const POISSON_PEAK: f64 = 100.0;

/// `(Ecal_db, dark_current, lower_bound)` for the Poisson channel.
pub const POISSON_TABLE_ID: &str = "poisson-bounds-table";
pub const POISSON_LOWER: [(f64, f64, f64); 8] = [
    (5.0, 0.0, 0.0),
    (10.0, 0.0, 1.02),
    (15.0, 0.0, 1.55),
    (20.0, 0.0, 1.55),
    (5.0, 10.0, 0.0),
    (10.0, 10.0, 0.0),
    (15.0, 10.0, 1.23),
    (20.0, 10.0, 1.23),
];

/// `(Ecal_db, dark_current, rate)` from deterministic annealing.
pub const POISSON_DA_TABLE_ID: &str = "poisson-annealing-table";
pub const POISSON_DA: [(f64, f64, f64); 8] = [
    (5.0, 0.0, 0.95),
    (10.0, 0.0, 1.39),
    (15.0, 0.0, 1.78),
    (20.0, 0.0, 1.79),
    (5.0, 10.0, 0.51),
    (10.0, 10.0, 0.91),
    (15.0, 10.0, 1.5),
    (20.0, 10.0, 1.51),
];

/// Capacity of the peak-only Poisson channel with `A = 3`, no dark current.
pub const POISSON_PEAK3_CAPACITY: f64 = 0.5944;

/// Transition from two to three mass points of the optimal input of the
/// peak-only Poisson channel without dark current.
pub const POISSON_BINARY_THRESHOLD: f64 = 3.3679;

/// Configuration of the optical-intensity MAC comparison: mean-to-peak ratio
/// and the two peak amplitudes in dB.
pub const OI_MAC_RATIO: f64 = 0.2;
pub const OI_MAC_PEAKS_DB: (f64, f64) = (10.0, 5.0);

pub(crate) fn lookup3(table: &[(f64, f64, f64)], a: f64, b: f64) -> Option<f64> {
    table
        .iter()
        .find(|r| (r.0 - a).abs() < 1e-9 && (r.1 - b).abs() < 1e-9)
        .map(|r| r.2)
}
