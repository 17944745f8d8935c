//! Synthetic spot price traces and the trace CSV format
//! (`timestamp,region,az,instance_type,price_usd_per_hour`).

use thiserror::Error;

use crate::market::{AzKey, MarketError, PriceBook};
use crate::simkernel::{RngFactory, SimTime, SECS_PER_HOUR};

/// One spot price observation.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub at: SimTime,
    pub zone: AzKey,
    pub instance_type: String,
    pub price: f64,
}

pub const TRACE_HEADER: &str = "timestamp,region,az,instance_type,price_usd_per_hour";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Market(#[from] MarketError),
}

pub fn write_trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.6}\n",
            row.at.secs(),
            row.zone.region,
            row.zone.az,
            row.instance_type,
            row.price
        ));
    }
    out
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>, TraceError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line == TRACE_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(TraceError::Parse {
                line: i + 1,
                reason: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let at = fields[0].parse::<u64>().map_err(|_| TraceError::Parse {
            line: i + 1,
            reason: format!("bad timestamp '{}'", fields[0]),
        })?;
        let price = fields[4].parse::<f64>().map_err(|_| TraceError::Parse {
            line: i + 1,
            reason: format!("bad price '{}'", fields[4]),
        })?;
        rows.push(TraceRow {
            at: SimTime(at),
            zone: AzKey::new(fields[1], fields[2]),
            instance_type: fields[3].to_string(),
            price,
        });
    }
    Ok(rows)
}

/// Groups rows by zone and loads them into the book.
pub fn load_into_book(book: &mut PriceBook, rows: &[TraceRow]) -> Result<(), TraceError> {
    type Grouped = Vec<((AzKey, String), Vec<(SimTime, f64)>)>;
    let mut by_key: Grouped = Vec::new();
    for row in rows {
        let key = (row.zone.clone(), row.instance_type.clone());
        match by_key.iter_mut().find(|(k, _)| *k == key) {
            Some((_, points)) => points.push((row.at, row.price)),
            None => by_key.push((key, vec![(row.at, row.price)])),
        }
    }
    for ((zone, ty), points) in by_key {
        book.add_spot_trace(zone, &ty, points)?;
    }
    Ok(())
}

/// Quantize to the CSV's 6-decimal precision so generated traces equal
/// their own file round trip.
fn quantize(price: f64) -> f64 {
    (price * 1e6).round() / 1e6
}

/// A region to synthesize: name, zone count, and a price multiplier
/// relative to the base (lets the data's home region run pricier than the
/// rest, which is what makes remote placement attractive at small volumes).
#[derive(Debug, Clone)]
pub struct RegionSpec {
    pub name: String,
    pub az_count: u32,
    pub multiplier: f64,
}

/// The default 10-zone, 4-region layout with a pricier home region.
pub fn default_regions() -> Vec<RegionSpec> {
    vec![
        RegionSpec { name: "us-east-1".into(), az_count: 3, multiplier: 1.15 },
        RegionSpec { name: "us-west-2".into(), az_count: 3, multiplier: 0.95 },
        RegionSpec { name: "eu-west-1".into(), az_count: 2, multiplier: 1.00 },
        RegionSpec { name: "ap-south-1".into(), az_count: 2, multiplier: 0.90 },
    ]
}

fn zone_name(region: &str, index: u32) -> String {
    let letter = (b'a' + (index % 26) as u8) as char;
    format!("{region}{letter}")
}

/// The same constant price in every zone (region multipliers do not
/// apply; a flat trace is flat everywhere).
pub fn generate_flat(
    regions: &[RegionSpec],
    instance_type: &str,
    price: f64,
) -> Vec<TraceRow> {
    let mut rows = Vec::new();
    for region in regions {
        for i in 0..region.az_count {
            rows.push(TraceRow {
                at: SimTime::ZERO,
                zone: AzKey::new(region.name.clone(), zone_name(&region.name, i)),
                instance_type: instance_type.to_string(),
                price: quantize(price),
            });
        }
    }
    rows
}

/// Hourly multiplicative random walks per zone, clamped to a band around
/// each zone's base price.
pub fn generate_random_walk(
    regions: &[RegionSpec],
    instance_type: &str,
    base_price: f64,
    hours: u64,
    rngs: &RngFactory,
) -> Vec<TraceRow> {
    let mut rows = Vec::new();
    for region in regions {
        for i in 0..region.az_count {
            let zone = AzKey::new(region.name.clone(), zone_name(&region.name, i));
            let mut rng = rngs.stream(&format!("trace/{zone}"));
            let anchor = base_price * region.multiplier;
            let mut price = anchor * rng.uniform(0.9, 1.1);
            for h in 0..hours {
                rows.push(TraceRow {
                    at: SimTime(h * SECS_PER_HOUR),
                    zone: zone.clone(),
                    instance_type: instance_type.to_string(),
                    price: quantize(price),
                });
                price = (price * rng.uniform(0.94, 1.065)).clamp(anchor * 0.4, anchor * 2.5);
            }
        }
    }
    rows
}

/// A flat trace with price spikes: every live spot instance bid below the
/// spike is revoked at each spike start, and fresh bids fail until the
/// spike passes.
pub fn generate_adversarial(
    regions: &[RegionSpec],
    instance_type: &str,
    base_price: f64,
    spike_price: f64,
    spike_starts: &[u64],
    spike_secs: u64,
) -> Vec<TraceRow> {
    let mut rows = Vec::new();
    for region in regions {
        for i in 0..region.az_count {
            let zone = AzKey::new(region.name.clone(), zone_name(&region.name, i));
            let price = quantize(base_price);
            let mut push = |at: u64, p: f64| {
                rows.push(TraceRow {
                    at: SimTime(at),
                    zone: zone.clone(),
                    instance_type: instance_type.to_string(),
                    price: quantize(p),
                });
            };
            push(0, price);
            for &start in spike_starts {
                push(start, spike_price);
                push(start + spike_secs, price);
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips() {
        let rows = generate_flat(&default_regions(), "m4.xlarge", 0.0149);
        assert_eq!(rows.len(), 10);
        let text = write_trace_csv(&rows);
        let parsed = parse_trace_csv(&text).unwrap();
        assert_eq!(parsed, rows);
    }

    #[test]
    fn random_walk_is_deterministic_and_loadable() {
        let rngs = RngFactory::new(7);
        let a = generate_random_walk(&default_regions(), "c4.8xlarge", 0.50, 720, &rngs);
        let b = generate_random_walk(&default_regions(), "c4.8xlarge", 0.50, 720, &rngs);
        assert_eq!(a, b);
        assert_eq!(a.len(), 7200);

        let mut book = PriceBook::new(AzKey::new("us-east-1", "us-east-1a"));
        load_into_book(&mut book, &a).unwrap();
        assert_eq!(book.zones_for_type("c4.8xlarge").len(), 10);
    }

    #[test]
    fn adversarial_spikes_cross_and_recover() {
        let rows = generate_adversarial(&default_regions(), "m4.xlarge", 0.0149, 0.30, &[7200], 300);
        let mut book = PriceBook::new(AzKey::new("us-east-1", "us-east-1a"));
        load_into_book(&mut book, &rows).unwrap();
        let zone = AzKey::new("us-east-1", "us-east-1a");
        let crossing = book.first_crossing_after(&zone, "m4.xlarge", 0.239, SimTime::ZERO);
        assert_eq!(crossing, Some(SimTime(7200)));
        // price falls back below the bid after the spike window
        let after = book.spot_price_at(&zone, "m4.xlarge", SimTime(7500)).unwrap();
        assert!(after < 0.239);
    }

    #[test]
    fn malformed_lines_name_their_position() {
        let err = parse_trace_csv("10,us-east-1,us-east-1a,m4.xlarge\n").unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 1, .. }));
    }
}
