//! Instance market model: fixed-price on-demand capacity, spot capacity
//! priced from traces with bid-crossing revocation, provisioning delay,
//! quantized billing, and cheapest-zone selection across availability
//! zones and regions.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::ids::InstanceId;
use crate::simkernel::{RngStream, SimTime, SECS_PER_HOUR};

/// (region, availability zone) pair. Ordering is lexicographic, which is
/// also the tie-break order for equal prices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AzKey {
    pub region: String,
    pub az: String,
}

impl AzKey {
    pub fn new(region: impl Into<String>, az: impl Into<String>) -> Self {
        AzKey { region: region.into(), az: az.into() }
    }
}

impl fmt::Display for AzKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.region, self.az)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarketKind {
    OnDemand,
    Spot,
}

impl MarketKind {
    pub fn parse(s: &str) -> Option<MarketKind> {
        match s {
            "on-demand" => Some(MarketKind::OnDemand),
            "spot" => Some(MarketKind::Spot),
            _ => None,
        }
    }
}

impl fmt::Display for MarketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarketKind::OnDemand => f.write_str("on-demand"),
            MarketKind::Spot => f.write_str("spot"),
        }
    }
}

/// How a spot bid is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BidPolicy {
    /// A fixed dollar bid per hour.
    Static(f64),
    /// A multiple of the on-demand price.
    FractionOfOnDemand(f64),
}

impl BidPolicy {
    pub fn bid(&self, on_demand_price: f64) -> f64 {
        match *self {
            BidPolicy::Static(v) => v,
            BidPolicy::FractionOfOnDemand(f) => f * on_demand_price,
        }
    }
}

/// Provisioning-delay model. The default uniform window reflects typical
/// acquisition latency; the spike variant adds occasional much longer
/// waits like those seen under spot-market volatility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayModel {
    Constant(u64),
    Uniform { min_secs: u64, max_secs: u64 },
    UniformWithSpikes { min_secs: u64, max_secs: u64, spike_prob: f64, spike_max_secs: u64 },
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel::Uniform { min_secs: 240, max_secs: 720 }
    }
}

impl DelayModel {
    pub fn draw(&self, rng: &mut RngStream) -> u64 {
        match *self {
            DelayModel::Constant(s) => s,
            DelayModel::Uniform { min_secs, max_secs } => {
                rng.uniform(min_secs as f64, max_secs as f64).round() as u64
            }
            DelayModel::UniformWithSpikes { min_secs, max_secs, spike_prob, spike_max_secs } => {
                if rng.unit() < spike_prob {
                    rng.uniform(max_secs as f64, spike_max_secs as f64).round() as u64
                } else {
                    rng.uniform(min_secs as f64, max_secs as f64).round() as u64
                }
            }
        }
    }
}

/// Search scope for spot placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AzScope {
    SingleAz,
    WithinRegion,
    AcrossRegions,
}

impl AzScope {
    pub fn parse(s: &str) -> Option<AzScope> {
        match s {
            "single-az" => Some(AzScope::SingleAz),
            "within-region" => Some(AzScope::WithinRegion),
            "across-regions" => Some(AzScope::AcrossRegions),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("market configuration error: {0}")]
    Config(String),
    #[error("spot price {price:.4} already exceeds bid {bid:.4} in {zone} at {at}")]
    PriceExceeded { zone: AzKey, price: f64, bid: f64, at: SimTime },
}

/// Prices for everything the simulator buys: on-demand rates, spot price
/// traces per zone, the inter-region transfer rate, the provisioning-delay
/// model, and the billing quantum.
#[derive(Debug, Clone)]
pub struct PriceBook {
    on_demand_per_hour: BTreeMap<String, f64>,
    /// (zone, instance type) -> sorted (time, $/hour) step function.
    spot_traces: BTreeMap<(AzKey, String), Vec<(SimTime, f64)>>,
    transfer_price_per_gb: f64,
    pub delay_model: DelayModel,
    /// Billing rounds up to whole quanta of this many seconds.
    pub billing_quantum_secs: u64,
    home: AzKey,
}

impl PriceBook {
    pub fn new(home: AzKey) -> Self {
        PriceBook {
            on_demand_per_hour: BTreeMap::new(),
            spot_traces: BTreeMap::new(),
            transfer_price_per_gb: 0.020,
            delay_model: DelayModel::default(),
            billing_quantum_secs: SECS_PER_HOUR,
            home,
        }
    }

    pub fn home(&self) -> &AzKey {
        &self.home
    }

    pub fn home_region(&self) -> &str {
        &self.home.region
    }

    pub fn set_on_demand_price(&mut self, instance_type: &str, per_hour: f64) {
        self.on_demand_per_hour.insert(instance_type.to_string(), per_hour);
    }

    pub fn on_demand_price(&self, instance_type: &str) -> Result<f64, MarketError> {
        self.on_demand_per_hour
            .get(instance_type)
            .copied()
            .ok_or_else(|| MarketError::Config(format!("no on-demand price for {instance_type}")))
    }

    pub fn transfer_price_per_gb(&self) -> f64 {
        self.transfer_price_per_gb
    }

    pub fn set_transfer_price_per_gb(&mut self, v: f64) {
        self.transfer_price_per_gb = v;
    }

    /// Adds a spot trace; points must be time-sorted with unique timestamps.
    pub fn add_spot_trace(
        &mut self,
        zone: AzKey,
        instance_type: &str,
        points: Vec<(SimTime, f64)>,
    ) -> Result<(), MarketError> {
        if points.is_empty() {
            return Err(MarketError::Config(format!("empty spot trace for {zone}")));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(MarketError::Config(format!(
                "spot trace for {zone} is not sorted with unique timestamps"
            )));
        }
        if points.iter().any(|&(_, p)| p < 0.0) {
            return Err(MarketError::Config(format!("negative price in trace for {zone}")));
        }
        self.spot_traces.insert((zone, instance_type.to_string()), points);
        Ok(())
    }

    pub fn zones_for_type(&self, instance_type: &str) -> Vec<AzKey> {
        self.spot_traces
            .keys()
            .filter(|(_, ty)| ty == instance_type)
            .map(|(zone, _)| zone.clone())
            .collect()
    }

    fn trace(&self, zone: &AzKey, instance_type: &str) -> Option<&[(SimTime, f64)]> {
        self.spot_traces
            .get(&(zone.clone(), instance_type.to_string()))
            .map(Vec::as_slice)
    }

    /// Spot price in effect at `at`: the trace is a step function held
    /// constant between points (and before the first point).
    pub fn spot_price_at(&self, zone: &AzKey, instance_type: &str, at: SimTime) -> Option<f64> {
        let trace = self.trace(zone, instance_type)?;
        let mut price = trace[0].1;
        for &(t, p) in trace {
            if t <= at {
                price = p;
            } else {
                break;
            }
        }
        Some(price)
    }

    /// First trace point strictly after `from` whose price exceeds `bid`,
    /// i.e. the instant a spot instance launched at `from` is revoked.
    pub fn first_crossing_after(
        &self,
        zone: &AzKey,
        instance_type: &str,
        bid: f64,
        from: SimTime,
    ) -> Option<SimTime> {
        let trace = self.trace(zone, instance_type)?;
        trace.iter().find(|&&(t, p)| t > from && p > bid).map(|&(t, _)| t)
    }

    /// Current spot price per zone in scope, sorted by zone.
    pub fn scope_prices(
        &self,
        scope: AzScope,
        instance_type: &str,
        at: SimTime,
    ) -> Vec<(AzKey, f64)> {
        self.spot_traces
            .iter()
            .filter(|((zone, ty), _)| {
                ty == instance_type
                    && match scope {
                        AzScope::SingleAz => *zone == self.home,
                        AzScope::WithinRegion => zone.region == self.home.region,
                        AzScope::AcrossRegions => true,
                    }
            })
            .map(|((zone, ty), _)| {
                let price = self.spot_price_at(zone, ty, at).expect("trace exists");
                (zone.clone(), price)
            })
            .collect()
    }
}

/// Lowest current spot price in scope; ties break lexicographically by
/// (region, zone).
pub fn cheapest_az(
    book: &PriceBook,
    scope: AzScope,
    instance_type: &str,
    at: SimTime,
) -> Result<(AzKey, f64), MarketError> {
    let prices = book.scope_prices(scope, instance_type, at);
    prices
        .into_iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)))
        .ok_or_else(|| {
            MarketError::Config(format!("no spot traces for {instance_type} in scope"))
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceState {
    Provisioning,
    Idle,
    Busy,
    Revoked,
    Terminated,
}

/// A provisioned compute instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub id: InstanceId,
    pub market: MarketKind,
    pub zone: AzKey,
    pub instance_type: String,
    /// Spot bid in $/hour; on-demand instances have none.
    pub bid: Option<f64>,
    pub launch_time: SimTime,
    pub ready_time: Option<SimTime>,
    pub terminate_time: Option<SimTime>,
    pub state: InstanceState,
    /// Final billed cost, set at termination.
    pub accrued_cost: f64,
}

/// Creates an instance in the provisioning state. Spot launches fail fast
/// when the current price already exceeds the computed bid, and otherwise
/// learn their revocation time from the trace's first later crossing.
#[allow(clippy::too_many_arguments)]
pub fn provision(
    book: &PriceBook,
    id: InstanceId,
    market: MarketKind,
    zone: AzKey,
    instance_type: &str,
    bid_policy: BidPolicy,
    at: SimTime,
    delay_rng: &mut RngStream,
) -> Result<(Instance, Option<SimTime>), MarketError> {
    let delay = book.delay_model.draw(delay_rng);
    let ready = at.plus(delay);
    match market {
        MarketKind::OnDemand => {
            book.on_demand_price(instance_type)?;
            let inst = Instance {
                id,
                market,
                zone,
                instance_type: instance_type.to_string(),
                bid: None,
                launch_time: at,
                ready_time: Some(ready),
                terminate_time: None,
                state: InstanceState::Provisioning,
                accrued_cost: 0.0,
            };
            Ok((inst, None))
        }
        MarketKind::Spot => {
            let current = book.spot_price_at(&zone, instance_type, at).ok_or_else(|| {
                MarketError::Config(format!("no spot trace for {zone} {instance_type}"))
            })?;
            let bid = bid_policy.bid(book.on_demand_price(instance_type)?);
            if current > bid {
                return Err(MarketError::PriceExceeded { zone, price: current, bid, at });
            }
            let revoked_at = book.first_crossing_after(&zone, instance_type, bid, at);
            let inst = Instance {
                id,
                market,
                zone,
                instance_type: instance_type.to_string(),
                bid: Some(bid),
                launch_time: at,
                ready_time: Some(ready),
                terminate_time: None,
                state: InstanceState::Provisioning,
                accrued_cost: 0.0,
            };
            Ok((inst, revoked_at))
        }
    }
}

/// Cost of running `instance` from its ready time until `until`.
///
/// Usage rounds up to whole billing quanta. On-demand quanta all cost the
/// fixed rate; spot quanta cost the trace price in effect at each quantum's
/// start.
pub fn billing(book: &PriceBook, instance: &Instance, until: SimTime) -> Result<f64, MarketError> {
    let Some(start) = instance.ready_time else { return Ok(0.0) };
    if until <= start {
        return Ok(0.0);
    }
    let q = book.billing_quantum_secs;
    let quanta = until.since(start).div_ceil(q);
    let quantum_hours = q as f64 / SECS_PER_HOUR as f64;
    match instance.market {
        MarketKind::OnDemand => {
            let rate = book.on_demand_price(&instance.instance_type)?;
            Ok(quanta as f64 * quantum_hours * rate)
        }
        MarketKind::Spot => {
            let mut cost = 0.0;
            for k in 0..quanta {
                let quantum_start = start.plus(k * q);
                let price = book
                    .spot_price_at(&instance.zone, &instance.instance_type, quantum_start)
                    .ok_or_else(|| {
                        MarketError::Config(format!("no spot trace for {}", instance.zone))
                    })?;
                cost += price * quantum_hours;
            }
            Ok(cost)
        }
    }
}

/// The run re-priced as if every instance were on-demand, removing spot
/// variance from cost comparisons.
pub fn on_demand_equivalent(
    book: &PriceBook,
    instance: &Instance,
    until: SimTime,
) -> Result<f64, MarketError> {
    let Some(start) = instance.ready_time else { return Ok(0.0) };
    if until <= start {
        return Ok(0.0);
    }
    let q = book.billing_quantum_secs;
    let quanta = until.since(start).div_ceil(q);
    let rate = book.on_demand_price(&instance.instance_type)?;
    Ok(quanta as f64 * (q as f64 / SECS_PER_HOUR as f64) * rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TYPE: &str = "m4.xlarge";

    fn book() -> PriceBook {
        let mut b = PriceBook::new(AzKey::new("us-east-1", "us-east-1a"));
        b.set_on_demand_price(TYPE, 0.239);
        b.delay_model = DelayModel::Constant(0);
        b
    }

    fn flat(b: &mut PriceBook, region: &str, az: &str, price: f64) {
        b.add_spot_trace(AzKey::new(region, az), TYPE, vec![(SimTime::ZERO, price)]).unwrap();
    }

    fn rng() -> RngStream {
        RngStream::new(1, "provisioning-delay")
    }

    #[test]
    fn on_demand_with_zero_delay_is_ready_instantly_and_accrues_fixed_rate() {
        let b = book();
        let (inst, revoke) = provision(
            &b,
            InstanceId(1),
            MarketKind::OnDemand,
            b.home().clone(),
            TYPE,
            BidPolicy::FractionOfOnDemand(1.0),
            SimTime(100),
            &mut rng(),
        )
        .unwrap();
        assert_eq!(inst.ready_time, Some(SimTime(100)));
        assert!(revoke.is_none());
        let one_hour = billing(&b, &inst, SimTime(100 + 3600)).unwrap();
        assert!((one_hour - 0.239).abs() < 1e-12);
    }

    #[test]
    fn spot_bid_at_on_demand_never_crosses_a_cheap_flat_trace() {
        let mut b = book();
        flat(&mut b, "us-east-1", "us-east-1a", 0.239 * 0.2);
        let (_, revoke) = provision(
            &b,
            InstanceId(1),
            MarketKind::Spot,
            b.home().clone(),
            TYPE,
            BidPolicy::FractionOfOnDemand(1.0),
            SimTime::ZERO,
            &mut rng(),
        )
        .unwrap();
        assert!(revoke.is_none());
    }

    #[test]
    fn static_bid_revokes_at_first_crossing() {
        let mut b = book();
        b.add_spot_trace(
            AzKey::new("us-east-1", "us-east-1a"),
            TYPE,
            vec![(SimTime(0), 0.03), (SimTime(3600), 0.06)],
        )
        .unwrap();
        let (_, revoke) = provision(
            &b,
            InstanceId(1),
            MarketKind::Spot,
            b.home().clone(),
            TYPE,
            BidPolicy::Static(0.05),
            SimTime::ZERO,
            &mut rng(),
        )
        .unwrap();
        assert_eq!(revoke, Some(SimTime(3600)));
    }

    #[test]
    fn launching_above_bid_fails_immediately() {
        let mut b = book();
        flat(&mut b, "us-east-1", "us-east-1a", 0.10);
        let err = provision(
            &b,
            InstanceId(1),
            MarketKind::Spot,
            b.home().clone(),
            TYPE,
            BidPolicy::Static(0.05),
            SimTime::ZERO,
            &mut rng(),
        )
        .unwrap_err();
        assert!(matches!(err, MarketError::PriceExceeded { .. }));
    }

    #[test]
    fn unknown_zone_is_a_configuration_error() {
        let b = book();
        let err = provision(
            &b,
            InstanceId(1),
            MarketKind::Spot,
            AzKey::new("mars", "mars-1a"),
            TYPE,
            BidPolicy::Static(1.0),
            SimTime::ZERO,
            &mut rng(),
        )
        .unwrap_err();
        assert!(matches!(err, MarketError::Config(_)));
    }

    fn ready_instance(b: &PriceBook, market: MarketKind) -> Instance {
        let (mut inst, _) = provision(
            b,
            InstanceId(7),
            market,
            b.home().clone(),
            TYPE,
            BidPolicy::FractionOfOnDemand(1.0),
            SimTime::ZERO,
            &mut rng(),
        )
        .unwrap();
        inst.state = InstanceState::Idle;
        inst
    }

    #[test]
    fn on_demand_billing_rounds_up_to_whole_hours() {
        let b = book();
        let inst = ready_instance(&b, MarketKind::OnDemand);
        // 3.2 hours -> 4 billed hours
        let c = billing(&b, &inst, SimTime((3.2 * 3600.0) as u64)).unwrap();
        assert!((c - 4.0 * 0.239).abs() < 1e-12, "{c}");
    }

    #[test]
    fn billing_until_launch_is_zero() {
        let b = book();
        let inst = ready_instance(&b, MarketKind::OnDemand);
        assert_eq!(billing(&b, &inst, SimTime::ZERO).unwrap(), 0.0);
    }

    #[test]
    fn flat_spot_billing_sums_quanta_at_trace_price() {
        let mut b = book();
        flat(&mut b, "us-east-1", "us-east-1a", 0.03);
        let inst = ready_instance(&b, MarketKind::Spot);
        let c = billing(&b, &inst, SimTime(2 * 3600)).unwrap();
        assert!((c - 0.06).abs() < 1e-12);
    }

    #[test]
    fn spot_quanta_are_priced_at_their_start() {
        let mut b = book();
        b.add_spot_trace(
            AzKey::new("us-east-1", "us-east-1a"),
            TYPE,
            vec![(SimTime(0), 0.03), (SimTime(5400), 0.05)],
        )
        .unwrap();
        let inst = ready_instance(&b, MarketKind::Spot);
        // hour 1 starts at t=0 (0.03), hour 2 starts at t=3600 (still 0.03),
        // hour 3 starts at t=7200 (0.05)
        let c = billing(&b, &inst, SimTime(3 * 3600)).unwrap();
        assert!((c - (0.03 + 0.03 + 0.05)).abs() < 1e-12, "{c}");
    }

    #[test]
    fn billing_is_monotone_in_time() {
        let mut b = book();
        b.add_spot_trace(
            AzKey::new("us-east-1", "us-east-1a"),
            TYPE,
            vec![(SimTime(0), 0.04), (SimTime(7200), 0.01), (SimTime(90_000), 0.09)],
        )
        .unwrap();
        let inst = ready_instance(&b, MarketKind::Spot);
        let mut last = 0.0;
        for h in 1..48 {
            let c = billing(&b, &inst, SimTime(h * 3600)).unwrap();
            assert!(c >= last);
            last = c;
        }
    }

    #[test]
    fn cheapest_zone_scope_dominance() {
        let mut b = book();
        flat(&mut b, "us-east-1", "us-east-1a", 0.050);
        flat(&mut b, "us-east-1", "us-east-1b", 0.040);
        flat(&mut b, "us-west-2", "us-west-2a", 0.030);
        flat(&mut b, "eu-west-1", "eu-west-1a", 0.020);

        let single = cheapest_az(&b, AzScope::SingleAz, TYPE, SimTime::ZERO).unwrap();
        let region = cheapest_az(&b, AzScope::WithinRegion, TYPE, SimTime::ZERO).unwrap();
        let global = cheapest_az(&b, AzScope::AcrossRegions, TYPE, SimTime::ZERO).unwrap();
        assert!(global.1 <= region.1 && region.1 <= single.1);
        assert_eq!(global.0, AzKey::new("eu-west-1", "eu-west-1a"));
        assert_eq!(region.0, AzKey::new("us-east-1", "us-east-1b"));
        assert_eq!(single.0, AzKey::new("us-east-1", "us-east-1a"));
    }

    #[test]
    fn single_zone_scope_returns_that_zone() {
        let mut b = book();
        flat(&mut b, "us-east-1", "us-east-1a", 0.05);
        let (zone, price) = cheapest_az(&b, AzScope::SingleAz, TYPE, SimTime::ZERO).unwrap();
        assert_eq!(zone, *b.home());
        assert_eq!(price, 0.05);
    }

    #[test]
    fn equal_prices_break_ties_lexicographically() {
        let mut b = book();
        flat(&mut b, "us-east-1", "us-east-1b", 0.03);
        flat(&mut b, "us-east-1", "us-east-1a", 0.03);
        flat(&mut b, "ap-south-1", "ap-south-1a", 0.03);
        let (zone, _) = cheapest_az(&b, AzScope::AcrossRegions, TYPE, SimTime::ZERO).unwrap();
        assert_eq!(zone, AzKey::new("ap-south-1", "ap-south-1a"));
    }

    #[test]
    fn empty_scope_is_a_configuration_error() {
        let b = book();
        assert!(cheapest_az(&b, AzScope::AcrossRegions, TYPE, SimTime::ZERO).is_err());
    }

    #[test]
    fn spike_delay_model_stays_in_its_bands() {
        let model = DelayModel::UniformWithSpikes {
            min_secs: 240,
            max_secs: 720,
            spike_prob: 0.2,
            spike_max_secs: 1800,
        };
        let mut rng = RngStream::new(5, "provisioning-delay");
        let mut spiked = 0;
        for _ in 0..2000 {
            let d = model.draw(&mut rng);
            assert!((240..=1800).contains(&d), "{d}");
            if d > 720 {
                spiked += 1;
            }
        }
        // roughly one draw in five lands in the long tail
        assert!((300..=500).contains(&spiked), "{spiked}");
    }

    #[test]
    fn unsorted_traces_are_rejected() {
        let mut b = book();
        let err = b.add_spot_trace(
            AzKey::new("us-east-1", "us-east-1a"),
            TYPE,
            vec![(SimTime(10), 0.03), (SimTime(10), 0.04)],
        );
        assert!(err.is_err());
    }
}
