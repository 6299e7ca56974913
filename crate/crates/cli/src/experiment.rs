//! Operating points and the bounds reported next to them.
//!
//! dB conventions: AWGN and PPC read the value as `P = 10^(dB/10)` (PPC peak
//! `√P` unless given), OI as a mean budget `10^(dB/20)`, Poisson as
//! `Ecal = 10^(dB/10)` with peak 100 unless given, and the optical MAC as
//! per-user peaks `10^(dB/20)` with means `mean_ratio · A`.

use capbench_core::bounds::{
    self, awgn_capacity, awgn_mac_region, kramer_upper, oi_lower, oi_mac_inner_region, oi_mac_region,
    oi_reference_bounds, poisson_annealing_reference, poisson_grid_capacity, poisson_reference_bounds, ppc_lower,
    ppc_reference_bounds, ppc_upper, BoundValue, RateRegion,
};
use capbench_core::channels::{ChannelKind, ChannelSpec};
use capbench_core::math::{db_to_linear, linear_to_db, powf, sqrt};
use capbench_core::reference::POISSON_PEAK;

use crate::config::ChannelConfig;
use crate::CliError;

/// Mass points tried by the peak-constrained lower bound.
const PPC_MAX_POINTS: usize = 12;
/// Input grid of the Poisson oracle.
const POISSON_GRID: usize = 200;

/// One channel configuration of an experiment.
#[derive(Clone, Debug)]
pub struct Point {
    /// The dB values that produced this point, one per user.
    pub snr_db: Vec<f64>,
    /// Human-readable parameters, e.g. `P=100` or `A=3;E=3;lambda0=0`.
    pub param: String,
    pub channel: ChannelSpec,
}

impl Point {
    /// The `snr_db` column: one value, users joined by `/`, or empty.
    pub fn snr_label(&self) -> String {
        self.snr_db.iter().map(ToString::to_string).collect::<Vec<_>>().join("/")
    }
}

/// A bound row; `value` is `None` when the bound is unavailable and
/// `source` then carries the reason.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundRow {
    pub name: String,
    pub kind: &'static str,
    pub value: Option<f64>,
    pub source: String,
}

impl BoundRow {
    fn from(name: &str, r: capbench_core::Result<BoundValue>) -> Self {
        match r {
            Ok(b) => Self {
                name: name.into(),
                kind: b.kind.name(),
                value: Some(b.value),
                source: b.source,
            },
            Err(e) => Self {
                name: name.into(),
                kind: "error",
                value: None,
                source: e.to_string(),
            },
        }
    }
}

fn core_err(e: capbench_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn fmt_param(pairs: &[(&str, f64)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

/// Expands the channel block into operating points.
pub fn points(c: &ChannelConfig) -> Result<Vec<Point>, CliError> {
    let mut out = Vec::new();
    match c.kind {
        ChannelKind::Awgn | ChannelKind::PpcAwgn | ChannelKind::Oi | ChannelKind::Poisson => {
            for &db in &c.snr_db {
                out.push(single_point(c, Some(db))?);
            }
            if c.snr_db.is_empty() {
                out.push(single_point(c, None)?);
            }
        }
        ChannelKind::AwgnMac | ChannelKind::OiMac => out.push(mac_point(c)?),
    }
    Ok(out)
}

fn single_point(c: &ChannelConfig, db: Option<f64>) -> Result<Point, CliError> {
    let missing = |what: &str| CliError::Config(format!("{} needs --snr-db or {what}", c.kind.name()));
    let (channel, param) = match c.kind {
        ChannelKind::Awgn => {
            let p = db.map(db_to_linear).or(c.avg).ok_or_else(|| missing("--avg"))?;
            (ChannelSpec::awgn(p).map_err(core_err)?, fmt_param(&[("P", p)]))
        }
        ChannelKind::PpcAwgn => {
            let p = db.map(db_to_linear).or(c.avg).ok_or_else(|| missing("--avg"))?;
            let a = c.peak.unwrap_or_else(|| sqrt(p));
            (ChannelSpec::ppc(p, a).map_err(core_err)?, fmt_param(&[("P", p), ("A", a)]))
        }
        ChannelKind::Oi => {
            let e = db.map(|d| powf(10.0, d / 20.0)).or(c.avg);
            if e.is_none() && c.peak.is_none() {
                return Err(missing("--avg or --peak"));
            }
            let mut pairs = Vec::new();
            if let Some(a) = c.peak {
                pairs.push(("A", a));
            }
            if let Some(e) = e {
                pairs.push(("E", e));
            }
            pairs.push(("sigma", c.sigma));
            (ChannelSpec::oi(c.peak, e, c.sigma).map_err(core_err)?, fmt_param(&pairs))
        }
        ChannelKind::Poisson => {
            let (a, e) = match db {
                Some(d) => (c.peak.unwrap_or(POISSON_PEAK), Some(db_to_linear(d))),
                None => (c.peak.ok_or_else(|| missing("--peak"))?, c.avg),
            };
            let mut pairs = vec![("A", a)];
            if let Some(e) = e {
                pairs.push(("E", e));
            }
            pairs.push(("lambda0", c.dark_current));
            (ChannelSpec::poisson(a, e, c.dark_current).map_err(core_err)?, fmt_param(&pairs))
        }
        ChannelKind::AwgnMac | ChannelKind::OiMac => unreachable!("handled by mac_point"),
    };
    Ok(Point {
        snr_db: db.into_iter().collect(),
        param,
        channel,
    })
}

fn mac_point(c: &ChannelConfig) -> Result<Point, CliError> {
    let (d1, d2) = match c.snr_db.as_slice() {
        [d] => (*d, *d),
        [d1, d2] => (*d1, *d2),
        _ => {
            return Err(CliError::Config(format!(
                "{} needs one --snr-db (both users) or two (user 1, user 2)",
                c.kind.name()
            )))
        }
    };
    let (channel, param) = if c.kind == ChannelKind::AwgnMac {
        let (p1, p2) = (db_to_linear(d1), db_to_linear(d2));
        (ChannelSpec::awgn_mac(p1, p2).map_err(core_err)?, fmt_param(&[("P1", p1), ("P2", p2)]))
    } else {
        let (a1, a2) = (powf(10.0, d1 / 20.0), powf(10.0, d2 / 20.0));
        let (e1, e2) = (c.mean_ratio * a1, c.mean_ratio * a2);
        (
            ChannelSpec::oi_mac([a1, a2], [e1, e2], c.sigma).map_err(core_err)?,
            fmt_param(&[("A1", a1), ("E1", e1), ("A2", a2), ("E2", e2), ("sigma", c.sigma)]),
        )
    };
    Ok(Point {
        snr_db: vec![d1, d2],
        param,
        channel,
    })
}

/// Every bound known for a single-user point.
pub fn bounds_for(point: &Point) -> Vec<BoundRow> {
    let ch = &point.channel;
    let c = &ch.constraints[0];
    let db = point.snr_db.first().copied();
    let mut rows = Vec::new();
    match ch.kind {
        ChannelKind::Awgn => {
            let p = c.avg_power().expect("awgn has a power budget");
            rows.push(BoundRow::from("capacity", awgn_capacity(p)));
        }
        ChannelKind::PpcAwgn => {
            let p = c.avg_power().expect("ppc has a power budget");
            rows.push(BoundRow::from("upper", ppc_upper(p)));
            rows.push(BoundRow::from("lower", ppc_lower(p, PPC_MAX_POINTS)));
            if let Ok(k) = kramer_upper(p) {
                rows.push(BoundRow::from("upper_small_snr", Ok(k)));
            }
            let table_db = db.unwrap_or_else(|| linear_to_db(p));
            match ppc_reference_bounds(table_db) {
                Ok((lo, hi)) => {
                    rows.push(BoundRow::from("reference_lower", Ok(lo)));
                    rows.push(BoundRow::from("reference_upper", Ok(hi)));
                }
                Err(e) => rows.push(BoundRow::from("reference", Err(e))),
            }
        }
        ChannelKind::Oi => {
            if let Some(a) = c.peak() {
                rows.push(BoundRow::from("lower", oi_lower(a, ch.noise_sigma)));
            }
            let table = match (db, c.mean_budget()) {
                (Some(d), _) => oi_reference_bounds(d),
                (None, Some(e)) => oi_reference_bounds(20.0 * e.log10()),
                (None, None) => Err(capbench_core::Error::Untabulated("optical intensity without a mean budget".into())),
            };
            match table {
                Ok((lo, hi)) => {
                    rows.push(BoundRow::from("reference_lower", Ok(lo)));
                    rows.push(BoundRow::from("reference_upper", Ok(hi)));
                }
                Err(e) => rows.push(BoundRow::from("reference", Err(e))),
            }
        }
        ChannelKind::Poisson => {
            let a = c.peak().expect("poisson has a peak");
            let e = c.mean_budget();
            rows.push(BoundRow::from(
                "lower_grid",
                poisson_grid_capacity(a, e, ch.dark_current, POISSON_GRID),
            ));
            let ecal_db = db.or(e.map(linear_to_db));
            match ecal_db {
                Some(d) => {
                    rows.push(BoundRow::from("reference_lower", poisson_reference_bounds(d, a, ch.dark_current)));
                    rows.push(BoundRow::from(
                        "reference_annealing",
                        poisson_annealing_reference(d, a, ch.dark_current),
                    ));
                }
                None => rows.push(BoundRow::from(
                    "reference",
                    Err(capbench_core::Error::Untabulated("Poisson channel without a mean budget".into())),
                )),
            }
        }
        ChannelKind::AwgnMac | ChannelKind::OiMac => rows.extend(mac_bound_rows(point)),
    }
    rows
}

/// Analytic regions of a MAC point: `(label, region)` pairs.
pub fn mac_regions(point: &Point) -> Result<Vec<(&'static str, RateRegion)>, CliError> {
    let ch = &point.channel;
    let c = &ch.constraints;
    match ch.kind {
        ChannelKind::AwgnMac => {
            let p = |i: usize| c[i].avg_power().expect("power budget");
            Ok(vec![("capacity", awgn_mac_region(p(0), p(1)).map_err(core_err)?)])
        }
        ChannelKind::OiMac => {
            let a = |i: usize| c[i].peak().expect("peak");
            let e = |i: usize| c[i].mean_budget().expect("mean budget");
            Ok(vec![
                ("outer", oi_mac_region(e(0), e(1)).map_err(core_err)?),
                (
                    "inner",
                    oi_mac_inner_region(a(0), e(0), a(1), e(1), ch.noise_sigma).map_err(core_err)?,
                ),
            ])
        }
        _ => Err(CliError::Config(format!("{} is not a multiple-access channel", ch.kind.name()))),
    }
}

fn mac_bound_rows(point: &Point) -> Vec<BoundRow> {
    let regions = match mac_regions(point) {
        Ok(r) => r,
        Err(e) => {
            return vec![BoundRow {
                name: "region".into(),
                kind: "error",
                value: None,
                source: e.to_string(),
            }]
        }
    };
    let kind = |label: &str| match label {
        "capacity" => bounds::BoundKind::Exact.name(),
        "outer" => bounds::BoundKind::Upper.name(),
        _ => bounds::BoundKind::Lower.name(),
    };
    let mut rows = Vec::new();
    for (label, r) in regions {
        for (what, v) in [("r1", r.r1_max()), ("r2", r.r2_max()), ("sum", r.sum_rate())] {
            rows.push(BoundRow {
                name: format!("{label}_{what}"),
                kind: kind(label),
                value: Some(v),
                source: format!("{} {label} region", point.channel.kind.name()),
            });
        }
    }
    rows
}
