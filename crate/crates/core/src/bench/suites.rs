use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsl::parse_program;
use crate::partitioner::{compute_images, Side};
use crate::runtime::wire::WireValue;
use crate::runtime::{DualRuntime, RuntimeConfig, ScanPolicy, Value};

use super::{generate_synthetic, BenchError, BenchReport, BenchRow, Suite, SuiteParams, SyntheticSpec, Workload};

/// Length of each string in the serialization payload.
pub const PAYLOAD_ITEM_LEN: usize = 16;

/// One trusted and one untrusted class with the same shape. Each creates and
/// calls the other so both images keep a proxy for it.
const PLACEMENT_PROGRAM: &str = "
@Trusted
public class Inside {
    private int v;
    public Inside() {}
    public void set(int x) { this.v = x; }
    public void ping() {}
    public void take(List<String> xs) {}
    public void reach() {
        Outside o = new Outside();
        o.set(1);
        o.ping();
        o.take(new List<String>());
    }
}

@Untrusted
public class Outside {
    private int v;
    public Outside() {}
    public void set(int x) { this.v = x; }
    public void ping() {}
    public void take(List<String> xs) {}
    public void reach() {
        Inside i = new Inside();
        i.set(1);
        i.ping();
        i.take(new List<String>());
    }
}

@Untrusted
public class Main {
    public static void main(String[] args) {
        Inside i = new Inside();
        i.reach();
        Outside o = new Outside();
        o.reach();
    }
}
";

/// Where an object lives relative to the code that creates or calls it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Trusted code, trusted object.
    ConcreteIn,
    /// Untrusted code, untrusted object.
    ConcreteOut,
    /// Trusted code, untrusted object behind a proxy.
    ProxyInToOut,
    /// Untrusted code, trusted object behind a proxy.
    ProxyOutToIn,
}

impl Placement {
    pub const ALL: [Placement; 4] =
        [Placement::ConcreteIn, Placement::ConcreteOut, Placement::ProxyInToOut, Placement::ProxyOutToIn];

    pub fn label(self) -> &'static str {
        match self {
            Placement::ConcreteIn => "concrete-in",
            Placement::ConcreteOut => "concrete-out",
            Placement::ProxyInToOut => "proxy-in->out",
            Placement::ProxyOutToIn => "proxy-out->in",
        }
    }

    /// Side the calling code runs in.
    pub fn caller(self) -> Side {
        match self {
            Placement::ConcreteIn | Placement::ProxyInToOut => Side::Trusted,
            Placement::ConcreteOut | Placement::ProxyOutToIn => Side::Untrusted,
        }
    }

    /// Side the object itself lives in.
    pub fn home(self) -> Side {
        match self {
            Placement::ConcreteIn | Placement::ProxyOutToIn => Side::Trusted,
            Placement::ConcreteOut | Placement::ProxyInToOut => Side::Untrusted,
        }
    }

    fn class(self) -> &'static str {
        match self.home() {
            Side::Trusted => "Inside",
            Side::Untrusted => "Outside",
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Totals {
    ecalls: u64,
    ocalls: u64,
    bytes: u64,
    cycles: u64,
    gc: u64,
}

impl Totals {
    fn of(rt: &DualRuntime) -> Totals {
        let (t, u) = (rt.metrics(Side::Trusted), rt.metrics(Side::Untrusted));
        Totals {
            ecalls: t.ecalls + u.ecalls,
            ocalls: t.ocalls + u.ocalls,
            bytes: t.bytes_serialized + u.bytes_serialized,
            cycles: t.simulated_cycles + u.simulated_cycles,
            gc: t.gc_cycles + u.gc_cycles,
        }
    }

    fn row_since(self, rt: &DualRuntime, label: &str, x: u64, extra: Vec<u64>) -> BenchRow {
        let now = Totals::of(rt);
        BenchRow {
            label: label.to_string(),
            x,
            ecalls: now.ecalls - self.ecalls,
            ocalls: now.ocalls - self.ocalls,
            bytes: now.bytes - self.bytes,
            simulated_cycles: now.cycles - self.cycles,
            gc_cycles: now.gc - self.gc,
            extra,
        }
    }
}

fn placement_runtime(params: &SuiteParams, gc_threshold: Option<usize>) -> Result<DualRuntime, BenchError> {
    let plan = compute_images(&parse_program(PLACEMENT_PROGRAM).expect("placement program parses"))?;
    let config = RuntimeConfig { cost: params.cost.clone(), gc_threshold, scan: ScanPolicy::Manual, ..Default::default() };
    Ok(DualRuntime::from_plan(&plan, config).expect("placement plan loads"))
}

fn iterations(params: &SuiteParams, default: u64) -> Result<u64, BenchError> {
    match params.iterations.unwrap_or(default) {
        0 => Err(BenchError::BadParam("iterations must be positive".into())),
        n => Ok(n),
    }
}

/// The serialization payload: `items` random strings of
/// [`PAYLOAD_ITEM_LEN`] lowercase letters.
fn payload(seed: u64, items: usize) -> Vec<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..items)
        .map(|_| {
            let s: String = (0..PAYLOAD_ITEM_LEN).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
            Value::str(&s)
        })
        .collect()
}

struct ProxyCreation;

impl Suite for ProxyCreation {
    fn name(&self) -> &'static str {
        "proxy_creation"
    }

    fn describe(&self) -> &'static str {
        "cost of `new` for local objects and for proxy/mirror pairs in both directions"
    }

    fn run(&self, params: &SuiteParams) -> Result<BenchReport, BenchError> {
        let n = iterations(params, 1000)?;
        let mut report = BenchReport::new(self.name(), "iterations", &[]);
        for placement in Placement::ALL {
            let mut rt = placement_runtime(params, None)?;
            let start = Totals::of(&rt);
            rt.batch(|rt| {
                (0..n).try_for_each(|_| rt.instantiate(placement.caller(), placement.class(), Vec::new()).map(drop))
            })?;
            report.rows.push(start.row_since(&rt, placement.label(), n, Vec::new()));
        }
        Ok(report)
    }
}

struct Rmi;

impl Suite for Rmi {
    fn name(&self) -> &'static str {
        "rmi"
    }

    fn describe(&self) -> &'static str {
        "cost of a one-int method call on local objects and through proxies"
    }

    fn run(&self, params: &SuiteParams) -> Result<BenchReport, BenchError> {
        let n = iterations(params, 1000)?;
        let mut report = BenchReport::new(self.name(), "iterations", &[]);
        for placement in Placement::ALL {
            let mut rt = placement_runtime(params, None)?;
            let side = placement.caller();
            let target = rt.instantiate(side, placement.class(), Vec::new())?;
            rt.pin(side, target.clone());
            let start = Totals::of(&rt);
            rt.batch(|rt| {
                (0..n).try_for_each(|i| rt.invoke(side, target.clone(), "set", vec![Value::Int(i as i64)]).map(drop))
            })?;
            report.rows.push(start.row_since(&rt, placement.label(), n, Vec::new()));
        }
        Ok(report)
    }
}

struct RmiSerialization;

/// Collection period, in calls, for garbage left by unmarshaled payloads.
const SERIALIZATION_GC_PERIOD: u64 = 64;

impl Suite for RmiSerialization {
    fn name(&self) -> &'static str {
        "rmi_serialization"
    }

    fn describe(&self) -> &'static str {
        "calls with and without a list-of-strings argument; x is the argument's encoded size"
    }

    fn run(&self, params: &SuiteParams) -> Result<BenchReport, BenchError> {
        let n = iterations(params, 10_000)?;
        let items = params.payload_items.unwrap_or(1000);
        let strings = payload(params.seed, items);
        let encoded = WireValue::List(strings.iter().map(|s| WireValue::Str(s.to_string())).collect()).encoded_len();
        let mut report = BenchReport::new(self.name(), "payload_bytes", &["iterations"]);
        for placement in Placement::ALL {
            for with_payload in [false, true] {
                let mut rt = placement_runtime(params, None)?;
                let side = placement.caller();
                let target = rt.instantiate(side, placement.class(), Vec::new())?;
                rt.pin(side, target.clone());
                let list = rt.alloc_list(side, strings.clone());
                rt.pin(side, list.clone());
                let (method, args) = if with_payload { ("take", vec![list]) } else { ("ping", Vec::new()) };
                let start = Totals::of(&rt);
                rt.batch(|rt| {
                    for i in 1..=n {
                        rt.invoke(side, target.clone(), method, args.clone())?;
                        if i % SERIALIZATION_GC_PERIOD == 0 {
                            rt.gc_collect(placement.home());
                        }
                    }
                    Ok::<_, BenchError>(())
                })?;
                let x = if with_payload { encoded as u64 } else { 0 };
                report.rows.push(start.row_since(&rt, placement.label(), x, vec![n]));
            }
        }
        Ok(report)
    }
}

struct GcPerf;

impl Suite for GcPerf {
    fn name(&self) -> &'static str {
        "gc_perf"
    }

    fn describe(&self) -> &'static str {
        "one collection over identical heaps inside and outside the enclave; x is the object count"
    }

    fn run(&self, params: &SuiteParams) -> Result<BenchReport, BenchError> {
        let sizes = match params.iterations {
            Some(0) => return Err(BenchError::BadParam("iterations must be positive".into())),
            Some(n) => vec![n],
            None => vec![1000, 2000, 4000, 8000],
        };
        let mut report = BenchReport::new(self.name(), "objects", &["live_objects", "swept_objects"]);
        for &n in &sizes {
            for (label, side, class) in [("gc-in", Side::Trusted, "Inside"), ("gc-out", Side::Untrusted, "Outside")] {
                let mut rt = placement_runtime(params, None)?;
                rt.batch(|rt| {
                    for i in 0..n {
                        let obj = rt.instantiate(side, class, Vec::new())?;
                        if i % 2 == 0 {
                            rt.pin(side, obj);
                        }
                    }
                    Ok::<_, BenchError>(())
                })?;
                let start = Totals::of(&rt);
                let stats = rt.gc_collect(side);
                let extra = vec![stats.sweep.live_objects as u64, stats.sweep.swept_objects as u64];
                report.rows.push(start.row_since(&rt, label, n, extra));
            }
        }
        Ok(report)
    }
}

struct GcConsistency;

impl Suite for GcConsistency {
    fn name(&self) -> &'static str {
        "gc_consistency"
    }

    fn describe(&self) -> &'static str {
        "registry sizes against live proxy counts over create/drop/collect/scan cycles"
    }

    fn run(&self, params: &SuiteParams) -> Result<BenchReport, BenchError> {
        let cycles = iterations(params, 1000)?;
        let mut report = BenchReport::new(
            self.name(),
            "cycle",
            &[
                "trusted_registry",
                "untrusted_live_proxies",
                "untrusted_registry",
                "trusted_live_proxies",
                "violations",
            ],
        );
        let mut rt = placement_runtime(params, Some(64 * 1024))?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut pins: Vec<(Side, u64)> = Vec::new();
        let mut violations = 0u64;
        let start = Totals::of(&rt);
        let rows = rt.batch(|rt| {
            let mut rows = Vec::new();
            for cycle in 0..cycles {
                for (side, class, max) in [(Side::Untrusted, "Inside", 4), (Side::Trusted, "Outside", 3)] {
                    for _ in 0..rng.gen_range(0..=max) {
                        let p = rt.instantiate(side, class, Vec::new())?;
                        pins.push((side, rt.pin(side, p)));
                    }
                }
                pins.retain(|&(side, id)| {
                    let drop = rng.gen_bool(0.3);
                    if drop {
                        rt.unpin(side, id);
                    }
                    !drop
                });
                violations += u64::from(!census(rt).0);
                for side in [Side::Untrusted, Side::Trusted] {
                    if rng.gen_bool(0.8) {
                        rt.gc_collect(side);
                        violations += u64::from(!census(rt).0);
                    }
                }
                rt.scan_step();
                let (covers, balanced, counts) = census(rt);
                violations += u64::from(!covers) + u64::from(!balanced);
                let mut extra = counts.to_vec();
                extra.push(violations);
                rows.push(start.row_since(rt, "cycle", cycle + 1, extra));
            }
            Ok::<_, BenchError>(rows)
        })?;
        report.rows = rows;
        Ok(report)
    }
}

/// (covers, balanced, [trusted registry, untrusted live, untrusted registry, trusted live]).
fn census(rt: &DualRuntime) -> (bool, bool, [u64; 4]) {
    let (t, u) = (rt.isolate(Side::Trusted), rt.isolate(Side::Untrusted));
    let c = [t.registry_size(), u.live_proxies(), u.registry_size(), t.live_proxies()].map(|v| v as u64);
    (c[0] >= c[1] && c[2] >= c[3], c[0] == c[1] && c[2] == c[3], c)
}

struct ClassSweep;

impl Suite for ClassSweep {
    fn name(&self) -> &'static str {
        "class_sweep"
    }

    fn describe(&self) -> &'static str {
        "synthetic program cost as the untrusted share of classes grows; x is pct_untrusted"
    }

    fn run(&self, params: &SuiteParams) -> Result<BenchReport, BenchError> {
        let workloads = match params.workload {
            Some(w) => vec![w],
            None => vec![Workload::Io, Workload::Cpu],
        };
        let steps = params.steps.clone().unwrap_or_else(|| (0..=100).step_by(10).collect());
        let mut report: Option<BenchReport> = None;
        for workload in workloads {
            let base = SyntheticSpec {
                workload,
                seed: params.seed,
                n_classes: params.n_classes.unwrap_or(100),
                ..Default::default()
            };
            let part = sweep_partition_ratio(&base, &steps, &params.cost)?;
            match report.as_mut() {
                None => report = Some(part),
                Some(r) => r.rows.extend(part.rows),
            }
        }
        let mut report = report.expect("at least one workload");
        report.suite = self.name().to_string();
        Ok(report)
    }
}

/// Partitioned cost of the synthetic program at each untrusted percentage,
/// next to the cost of running it with no enclave at all.
pub fn sweep_partition_ratio(
    base: &SyntheticSpec,
    steps: &[u32],
    cost: &crate::runtime::CostModel,
) -> Result<BenchReport, BenchError> {
    if let Some(bad) = steps.iter().find(|s| **s > 100) {
        return Err(BenchError::BadParam(format!("pct_untrusted {bad} is above 100")));
    }
    let mut report = BenchReport::new("class_sweep", "pct_untrusted", &["shim_calls", "baseline_cycles"]);
    let config = RuntimeConfig { cost: cost.clone(), ..Default::default() };
    for &pct in steps {
        let spec = SyntheticSpec { pct_untrusted: pct, ..base.clone() };
        let program = generate_synthetic(&spec);
        let plan = compute_images(&program)?;
        let mut rt = DualRuntime::from_plan(&plan, config.clone()).expect("synthetic plan loads");
        let start = Totals::of(&rt);
        let result = rt.run_main(&[]);
        if let Some(e) = result.error {
            return Err(e.into());
        }
        let baseline = DualRuntime::reference(&program, config.clone()).run_main(&[]);
        if let Some(e) = baseline.error {
            return Err(e.into());
        }
        let extra = vec![result.stats.shim_calls, baseline.simulated_cycles()];
        report.rows.push(start.row_since(&rt, spec.workload.as_str(), pct as u64, extra));
    }
    Ok(report)
}

pub(super) static ALL: &[&dyn Suite] =
    &[&ProxyCreation, &Rmi, &RmiSerialization, &GcPerf, &GcConsistency, &ClassSweep];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placement_program_keeps_both_proxies() {
        let plan = compute_images(&parse_program(PLACEMENT_PROGRAM).unwrap()).unwrap();
        assert!(plan.trusted.proxy_class("Outside").is_some());
        assert!(plan.untrusted.proxy_class("Inside").is_some());
    }

    #[test]
    fn payload_strings_have_fixed_length() {
        let p = payload(1, 5);
        assert_eq!(p.len(), 5);
        assert!(p.iter().all(|v| matches!(v, Value::Str(s) if s.len() == PAYLOAD_ITEM_LEN)));
        assert_eq!(p, payload(1, 5));
    }
}
