//! Storage and provisioning cost arithmetic: tiered object-store pricing,
//! archival retrieval charges against the pro-rated free quota, blended
//! lifecycle-policy projections, and compute pricing with cross-region
//! egress. All functions here are pure.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::market::{AzKey, PriceBook};
use crate::simkernel::{SimTime, SECS_PER_HOUR};
use crate::storagesim::{Tier, TierPolicy};

pub const HOURS_PER_MONTH: f64 = 720.0;
pub const MONTHS_PER_YEAR: f64 = 12.0;
pub const DAYS_PER_MONTH: f64 = 30.0;

/// Per-tier storage prices. The standard tier is priced on a tiered
/// per-GB-month curve (first `threshold` GB at one rate, remainder at the
/// next); infrequent-access and archival tiers are flat.
#[derive(Debug, Clone)]
pub struct StoragePrices {
    /// (threshold-GB, $/GB-month) steps, thresholds strictly increasing;
    /// the final step's threshold is ignored (covers the remainder).
    pub std_tiered: Vec<(f64, f64)>,
    pub ia_per_gb_month: f64,
    pub glacier_per_gb_month: f64,
    /// $/GB-hour applied to retrieval rate above the free quota.
    pub glacier_transfer_price: f64,
    /// Fraction of archived data retrievable for free per month (0.05).
    pub free_quota_fraction: f64,
    /// Hours over which a daily retrieval volume is pulled (4).
    pub retrieval_window_hours: f64,
}

impl Default for StoragePrices {
    fn default() -> Self {
        // Defaults reproduce the advertised-pricing projection for 10 TB:
        // standard $3546/yr, infrequent access $1500/yr, archive $840/yr.
        StoragePrices {
            std_tiered: vec![(1000.0, 0.0300), (f64::INFINITY, 0.0295)],
            ia_per_gb_month: 0.0125,
            glacier_per_gb_month: 0.007,
            glacier_transfer_price: 0.01,
            free_quota_fraction: 0.05,
            retrieval_window_hours: 4.0,
        }
    }
}

impl StoragePrices {
    /// Monthly cost of `size_gb` resting in `tier`.
    pub fn month_cost(&self, tier: Tier, size_gb: f64) -> f64 {
        match tier {
            Tier::Std => {
                let mut remaining = size_gb;
                let mut covered = 0.0;
                let mut cost = 0.0;
                for &(threshold, rate) in &self.std_tiered {
                    let span = (threshold - covered).min(remaining).max(0.0);
                    cost += span * rate;
                    remaining -= span;
                    covered = threshold;
                    if remaining <= 0.0 {
                        break;
                    }
                }
                cost
            }
            Tier::Ia => size_gb * self.ia_per_gb_month,
            // Objects mid-retrieval still occupy archival storage.
            Tier::Glacier | Tier::Retrieving => size_gb * self.glacier_per_gb_month,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("invalid cost inputs: {0}")]
    Invalid(String),
}

/// Yearly cost of keeping `size_gb` in a single tier.
pub fn storage_year_cost(prices: &StoragePrices, tier: Tier, size_gb: f64) -> f64 {
    prices.month_cost(tier, size_gb) * MONTHS_PER_YEAR
}

/// Retrieval demand against an archival store.
#[derive(Debug, Clone, Copy)]
pub struct RetrievalDemand {
    /// Peak daily retrieval volume in GB/day.
    pub peak_daily_volume_gb: f64,
    /// Total GB resident in the archival tier.
    pub glacier_resident_gb: f64,
}

/// Peak retrieval rate and free-quota rate in GB/hour.
pub fn retrieval_rates(demand: RetrievalDemand, prices: &StoragePrices) -> (f64, f64) {
    let peak = demand.peak_daily_volume_gb / prices.retrieval_window_hours;
    let quota = demand.glacier_resident_gb * prices.free_quota_fraction
        / (DAYS_PER_MONTH * prices.retrieval_window_hours);
    (peak, quota)
}

/// Monthly archival retrieval charge: zero while the peak rate stays within
/// the pro-rated free quota, otherwise the excess rate billed per GB-hour
/// over the 720 hours of a month.
pub fn glacier_retrieval_cost(demand: RetrievalDemand, prices: &StoragePrices) -> f64 {
    let (peak, quota) = retrieval_rates(demand, prices);
    if peak < quota {
        0.0
    } else {
        (peak - quota) * prices.glacier_transfer_price * HOURS_PER_MONTH
    }
}

/// Inputs for a lifecycle-policy yearly projection.
#[derive(Debug, Clone)]
pub struct LifecycleCostInputs {
    pub dataset_gb: f64,
    /// Fraction of the dataset accessed within one demotion cycle.
    pub hot_fraction: f64,
    pub policy: TierPolicy,
}

/// Yearly cost of a dataset managed by a staleness policy.
///
/// With an archival terminal tier, accessed data cycles through the
/// non-terminal tiers (dwelling `staleness` days in each) while the cold
/// remainder rests in the terminal tier, so the year cost blends the two by
/// hot fraction. Without an archival terminal the whole dataset descends
/// once: each non-terminal tier holds it for its staleness window and the
/// terminal tier for the rest of the year.
pub fn lifecycle_year_cost(
    prices: &StoragePrices,
    inputs: &LifecycleCostInputs,
) -> Result<f64, CostError> {
    if !(0.0..=1.0).contains(&inputs.hot_fraction) {
        return Err(CostError::Invalid(format!(
            "hot fraction {} outside [0, 1]",
            inputs.hot_fraction
        )));
    }
    let policy = &inputs.policy;
    let size = inputs.dataset_gb;
    let year = |tier: Tier| storage_year_cost(prices, tier, size);

    let non_terminal: Vec<(Tier, f64)> = policy
        .links()
        .iter()
        .filter_map(|link| link.staleness_days.map(|d| (link.tier, d as f64 / DAYS_PER_MONTH)))
        .collect();
    let terminal = policy.terminal_tier();

    if non_terminal.is_empty() {
        return Ok(year(terminal));
    }

    let cycle_months: f64 = non_terminal.iter().map(|(_, m)| m).sum();
    if terminal == Tier::Glacier {
        let blended_hot = non_terminal
            .iter()
            .map(|&(tier, months)| months * year(tier))
            .sum::<f64>()
            / cycle_months;
        Ok(inputs.hot_fraction * blended_hot + (1.0 - inputs.hot_fraction) * year(terminal))
    } else {
        let descent: f64 = non_terminal.iter().map(|&(tier, months)| months * year(tier)).sum();
        let rest = (MONTHS_PER_YEAR - cycle_months).max(0.0) * year(terminal);
        Ok((descent + rest) / MONTHS_PER_YEAR)
    }
}

/// Inputs for the hourly compute-plus-egress price.
#[derive(Debug, Clone, Copy)]
pub struct EgressCostInputs {
    /// Hourly instance price.
    pub instance_price: f64,
    pub download_gb: f64,
    pub upload_gb: f64,
    /// Whether the instance runs outside the data's home region.
    pub cross_region: bool,
    /// Inter-region transfer price per GB.
    pub transfer_price: f64,
}

/// Total hourly price: instance price plus transfer. Transfer is free in
/// the data's home region and `(down + up) * price` elsewhere.
pub fn provision_cost(inputs: EgressCostInputs) -> f64 {
    let transfer = if inputs.cross_region {
        (inputs.download_gb + inputs.upload_gb) * inputs.transfer_price
    } else {
        0.0
    };
    inputs.instance_price + transfer
}

/// Instance-selection strategies compared by the egress study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SelectionStrategy {
    CheapestSingleAz,
    MostExpensiveSingleAz,
    CheapestWithinRegion,
    CheapestAcrossRegions,
}

impl SelectionStrategy {
    pub const ALL: [SelectionStrategy; 4] = [
        SelectionStrategy::CheapestSingleAz,
        SelectionStrategy::MostExpensiveSingleAz,
        SelectionStrategy::CheapestWithinRegion,
        SelectionStrategy::CheapestAcrossRegions,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            SelectionStrategy::CheapestSingleAz => "cheapest-single-az",
            SelectionStrategy::MostExpensiveSingleAz => "most-expensive-single-az",
            SelectionStrategy::CheapestWithinRegion => "cheapest-within-region",
            SelectionStrategy::CheapestAcrossRegions => "cheapest-across-regions",
        }
    }
}

/// One row of the strategy comparison output.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyCost {
    pub data_gb: f64,
    pub strategy: SelectionStrategy,
    pub monthly_usd: f64,
}

/// Simulates a month of hourly single-instance tasks under each selection
/// strategy and data volume.
///
/// Region-scoped strategies pick the lowest spot price each hour (ties by
/// lexicographic zone) and pay egress whenever the pick lands outside the
/// data's home region; they are price-greedy, not egress-aware. The
/// single-zone strategies commit to one home-region zone for the whole
/// month and report the best and worst such commitment, so the scopes nest:
/// one home zone, all home zones, all zones.
pub fn strategy_comparison(
    book: &PriceBook,
    instance_type: &str,
    data_volume_grid_gb: &[f64],
    month_hours: u64,
) -> Result<Vec<StrategyCost>, CostError> {
    let zones = book.zones_for_type(instance_type);
    if zones.is_empty() {
        return Err(CostError::Invalid(format!("no spot traces for {instance_type}")));
    }
    let home_region = book.home_region().to_string();
    if !zones.iter().any(|z| z.region == home_region) {
        return Err(CostError::Invalid(format!("no trace for home region {home_region}")));
    }

    // Hourly price per zone, held for reuse across the volume grid.
    let mut hourly: BTreeMap<AzKey, Vec<f64>> = BTreeMap::new();
    for zone in &zones {
        let prices: Vec<f64> = (0..month_hours)
            .map(|h| book.spot_price_at(zone, instance_type, SimTime(h * SECS_PER_HOUR)))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| CostError::Invalid(format!("trace missing for {zone}")))?;
        hourly.insert(zone.clone(), prices);
    }

    let mut rows = Vec::new();
    for &volume in data_volume_grid_gb {
        let egress = |zone: &AzKey| EgressCostInputs {
            instance_price: 0.0,
            download_gb: volume,
            upload_gb: volume,
            cross_region: zone.region != home_region,
            transfer_price: book.transfer_price_per_gb(),
        };

        // Committed single-zone totals, home region only (no egress there).
        let mut zone_totals: Vec<(AzKey, f64)> = hourly
            .iter()
            .filter(|(zone, _)| zone.region == home_region)
            .map(|(zone, prices)| (zone.clone(), prices.iter().sum()))
            .collect();
        zone_totals.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        let cheapest_single = zone_totals.first().unwrap().1;
        let most_expensive_single = zone_totals.last().unwrap().1;

        // Per-hour price-greedy picks.
        let mut within = 0.0;
        let mut across = 0.0;
        for h in 0..month_hours as usize {
            let pick = |candidates: &mut dyn Iterator<Item = (&AzKey, &Vec<f64>)>| -> (AzKey, f64) {
                candidates
                    .map(|(zone, prices)| (zone.clone(), prices[h]))
                    .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
                    .unwrap()
            };
            let (_, price) = pick(&mut hourly.iter().filter(|(z, _)| z.region == home_region));
            within += price; // home region: no egress
            let (zone, price) = pick(&mut hourly.iter());
            across += price + provision_cost(egress(&zone));
        }

        for (strategy, cost) in [
            (SelectionStrategy::CheapestSingleAz, cheapest_single),
            (SelectionStrategy::MostExpensiveSingleAz, most_expensive_single),
            (SelectionStrategy::CheapestWithinRegion, within),
            (SelectionStrategy::CheapestAcrossRegions, across),
        ] {
            rows.push(StrategyCost { data_gb: volume, strategy, monthly_usd: cost });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storagesim::parse_policy;

    fn prices() -> StoragePrices {
        StoragePrices::default()
    }

    #[test]
    fn standard_tier_year_cost_uses_tiered_rates() {
        // 1000 GB at $0.0300 plus 9000 GB at $0.0295, times 12 months.
        let c = storage_year_cost(&prices(), Tier::Std, 10_000.0);
        assert!((c - 3546.0).abs() < 1e-9, "{c}");
    }

    #[test]
    fn ia_and_glacier_year_costs_are_flat() {
        assert!((storage_year_cost(&prices(), Tier::Ia, 10_000.0) - 1500.0).abs() < 1e-9);
        assert!((storage_year_cost(&prices(), Tier::Glacier, 10_000.0) - 840.0).abs() < 1e-9);
    }

    #[test]
    fn std_below_first_threshold_uses_first_rate_only() {
        let c = prices().month_cost(Tier::Std, 500.0);
        assert!((c - 15.0).abs() < 1e-9);
    }

    #[test]
    fn retrieval_rates_match_hand_substitution() {
        // 300 GB/day over 4 h -> 75 GB/h peak; 5% of 10 TB pro-rated over
        // 30 days of 4 h windows -> 4.1667 GB/h quota.
        let demand = RetrievalDemand { peak_daily_volume_gb: 300.0, glacier_resident_gb: 10_000.0 };
        let (peak, quota) = retrieval_rates(demand, &prices());
        assert!((peak - 75.0).abs() < 1e-9);
        assert!((quota - 500.0 / 120.0).abs() < 1e-9);
    }

    #[test]
    fn retrieval_within_quota_is_free() {
        let demand = RetrievalDemand { peak_daily_volume_gb: 10.0, glacier_resident_gb: 10_000.0 };
        assert_eq!(glacier_retrieval_cost(demand, &prices()), 0.0);
    }

    #[test]
    fn retrieval_above_quota_bills_the_excess_rate() {
        let demand = RetrievalDemand { peak_daily_volume_gb: 300.0, glacier_resident_gb: 10_000.0 };
        let c = glacier_retrieval_cost(demand, &prices());
        // (75 - 4.1667) * 0.01 * 720
        assert!((c - 510.0).abs() < 0.005, "{c}");
    }

    #[test]
    fn retrieval_cost_is_continuous_at_the_quota_boundary() {
        let p = prices();
        // Peak exactly at quota: both branches give zero.
        let resident = 10_000.0;
        let quota_rate = resident * p.free_quota_fraction / (30.0 * p.retrieval_window_hours);
        let daily = quota_rate * p.retrieval_window_hours;
        let demand = RetrievalDemand { peak_daily_volume_gb: daily, glacier_resident_gb: resident };
        assert!(glacier_retrieval_cost(demand, &p).abs() < 1e-9);
    }

    #[test]
    fn lifecycle_projection_blends_hot_and_cold_fractions() {
        let inputs = LifecycleCostInputs {
            dataset_gb: 10_000.0,
            hot_fraction: 0.03,
            policy: parse_policy("STD30-IA60-Glacier").unwrap(),
        };
        let c = lifecycle_year_cost(&prices(), &inputs).unwrap();
        assert!((c - 880.26).abs() < 0.01, "{c}");

        let inputs10 = LifecycleCostInputs { hot_fraction: 0.10, ..inputs };
        let c10 = lifecycle_year_cost(&prices(), &inputs10).unwrap();
        assert!((c10 - 974.20).abs() < 0.01, "{c10}");
    }

    #[test]
    fn lifecycle_projection_without_archival_terminal_descends_once() {
        let inputs = LifecycleCostInputs {
            dataset_gb: 10_000.0,
            hot_fraction: 0.03,
            policy: parse_policy("STD30-IA").unwrap(),
        };
        let c = lifecycle_year_cost(&prices(), &inputs).unwrap();
        // one month standard + eleven months infrequent access
        assert!((c - 1670.50).abs() < 0.01, "{c}");
    }

    #[test]
    fn lifecycle_projection_rejects_out_of_range_hot_fraction() {
        let inputs = LifecycleCostInputs {
            dataset_gb: 1.0,
            hot_fraction: 1.5,
            policy: parse_policy("STD30-IA60-Glacier").unwrap(),
        };
        assert!(lifecycle_year_cost(&prices(), &inputs).is_err());
    }

    #[test]
    fn in_region_compute_pays_no_transfer() {
        let c = provision_cost(EgressCostInputs {
            instance_price: 1.0,
            download_gb: 50.0,
            upload_gb: 50.0,
            cross_region: false,
            transfer_price: 0.020,
        });
        assert_eq!(c, 1.0);
    }

    #[test]
    fn cross_region_compute_pays_for_both_directions() {
        let c = provision_cost(EgressCostInputs {
            instance_price: 0.0,
            download_gb: 5.0,
            upload_gb: 5.0,
            cross_region: true,
            transfer_price: 0.020,
        });
        assert!((c - 0.20).abs() < 1e-12);
    }

    #[test]
    fn cross_region_with_zero_volume_is_free_transfer() {
        let c = provision_cost(EgressCostInputs {
            instance_price: 0.5,
            download_gb: 0.0,
            upload_gb: 0.0,
            cross_region: true,
            transfer_price: 0.020,
        });
        assert_eq!(c, 0.5);
    }

    #[test]
    fn strategy_comparison_orders_scopes_and_bounds() {
        let mut book = PriceBook::new(AzKey::new("us-east-1", "us-east-1a"));
        for (region, az, price) in [
            ("us-east-1", "us-east-1a", 0.60),
            ("us-east-1", "us-east-1b", 0.55),
            ("us-west-2", "us-west-2a", 0.40),
        ] {
            book.add_spot_trace(AzKey::new(region, az), "c4.8xlarge", vec![(SimTime::ZERO, price)])
                .unwrap();
        }
        let rows =
            strategy_comparison(&book, "c4.8xlarge", &[0.0, 10.0, 1000.0], 720).unwrap();
        let cost = |gb: f64, s: SelectionStrategy| {
            rows.iter().find(|r| r.data_gb == gb && r.strategy == s).unwrap().monthly_usd
        };
        use SelectionStrategy::*;
        // zero volume: wider scopes only help
        assert!(cost(0.0, CheapestAcrossRegions) <= cost(0.0, CheapestWithinRegion));
        assert!(cost(0.0, CheapestWithinRegion) <= cost(0.0, CheapestSingleAz));
        assert!(cost(0.0, MostExpensiveSingleAz) >= cost(0.0, CheapestSingleAz));
        // home-region picks never pay egress, so their cost is volume-free
        assert_eq!(cost(0.0, CheapestWithinRegion), cost(1000.0, CheapestWithinRegion));
        // the price-greedy global pick keeps buying remote and pays for it
        assert!(cost(1000.0, CheapestAcrossRegions) > cost(1000.0, CheapestWithinRegion));
    }
}
