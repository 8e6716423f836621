use enpart_core::bench::{
    corpus_program, generate_synthetic, run_suite, sweep_partition_ratio, SuiteParams, SyntheticSpec, Workload,
};
use enpart_core::dsl::validate;
use enpart_core::partitioner::compute_images;
use enpart_core::runtime::{CostModel, DualRuntime, RuntimeConfig};

// Default cost model, restated.
const TRANSITION: u64 = 13_100;
const ALLOC: u64 = 10;
const FIELD: u64 = 2;
const PER_BYTE: u64 = 5;
const PENALTY: u64 = 4;

fn params(iterations: u64) -> SuiteParams {
    SuiteParams { iterations: Some(iterations), ..SuiteParams::default() }
}

#[test]
fn proxy_creation_matches_cost_arithmetic() {
    let n = 50;
    let report = run_suite("proxy_creation", &params(n)).unwrap();
    let cost = |label| report.row(label, n).unwrap().simulated_cycles;
    assert_eq!(cost("concrete-in"), n * ALLOC * PENALTY);
    assert_eq!(cost("concrete-out"), n * ALLOC);
    // Proxy allocation and hash write on the caller, mirror allocation on the callee.
    assert_eq!(cost("proxy-in->out"), n * (ALLOC * PENALTY + FIELD * PENALTY + TRANSITION + ALLOC));
    assert_eq!(cost("proxy-out->in"), n * (ALLOC + FIELD + TRANSITION + ALLOC * PENALTY));
    assert_eq!(report.row("proxy-out->in", n).unwrap().ecalls, n);
    assert_eq!(report.row("proxy-in->out", n).unwrap().ocalls, n);
    assert_eq!(report.row("concrete-in", n).unwrap().ecalls, 0);
}

#[test]
fn rmi_matches_cost_arithmetic() {
    let n = 40;
    let report = run_suite("rmi", &params(n)).unwrap();
    let cost = |label| report.row(label, n).unwrap().simulated_cycles;
    let int_bytes = 9;
    assert_eq!(cost("concrete-in"), n * FIELD * PENALTY);
    assert_eq!(cost("concrete-out"), n * FIELD);
    assert_eq!(cost("proxy-in->out"), n * (TRANSITION + PER_BYTE * int_bytes + FIELD));
    assert_eq!(cost("proxy-out->in"), n * (TRANSITION + PER_BYTE * int_bytes + FIELD * PENALTY));
    assert_eq!(report.row("proxy-out->in", n).unwrap().bytes, n * int_bytes);
}

#[test]
fn rmi_serialization_difference_is_payload_bytes() {
    let n = 200;
    let items = 100;
    let p = SuiteParams { iterations: Some(n), payload_items: Some(items), ..SuiteParams::default() };
    let report = run_suite("rmi_serialization", &p).unwrap();
    let encoded = 5 + items as u64 * (5 + 16);
    for label in ["proxy-in->out", "proxy-out->in"] {
        let bare = report.row(label, 0).unwrap();
        let loaded = report.row(label, encoded).unwrap();
        assert_eq!(loaded.mutator_cycles() - bare.mutator_cycles(), n * PER_BYTE * encoded, "{label}");
        assert_eq!(loaded.bytes, n * encoded);
    }
    for label in ["concrete-in", "concrete-out"] {
        assert_eq!(report.row(label, 0).unwrap().mutator_cycles(), report.row(label, encoded).unwrap().mutator_cycles());
    }
}

#[test]
fn gc_perf_scales_by_penalty() {
    let report = run_suite("gc_perf", &params(300)).unwrap();
    let (inside, outside) = (report.row("gc-in", 300).unwrap(), report.row("gc-out", 300).unwrap());
    // 300 one-field objects of 24 bytes each, half of them pinned.
    assert_eq!(outside.gc_cycles, 300 * 24 * FIELD);
    assert_eq!(inside.gc_cycles, PENALTY * outside.gc_cycles);
    assert_eq!(report.extra(inside, "live_objects"), Some(150));
    assert_eq!(report.extra(inside, "swept_objects"), Some(150));
}

#[test]
fn gc_consistency_has_no_violations() {
    let report = run_suite("gc_consistency", &params(200)).unwrap();
    assert_eq!(report.rows.len(), 200);
    for row in &report.rows {
        assert_eq!(report.extra(row, "trusted_registry"), report.extra(row, "untrusted_live_proxies"));
        assert_eq!(report.extra(row, "untrusted_registry"), report.extra(row, "trusted_live_proxies"));
    }
    assert_eq!(report.extra(report.rows.last().unwrap(), "violations"), Some(0));
    assert!(report.rows.iter().any(|r| report.extra(r, "trusted_registry").unwrap() > 0));
}

#[test]
fn synthetic_io_transition_counts() {
    for pct in [0, 30, 100] {
        let spec = SyntheticSpec { pct_untrusted: pct, ..SyntheticSpec::default() };
        let plan = compute_images(&generate_synthetic(&spec)).unwrap();
        let result = DualRuntime::from_plan(&plan, RuntimeConfig::default()).unwrap().run_main(&[]);
        assert!(result.error.is_none());
        let trusted = spec.n_trusted() as u64;
        assert_eq!(result.ecalls(), 2 * trusted);
        assert_eq!(result.stats.shim_calls, trusted);
        assert_eq!(result.ocalls(), trusted);
        assert_eq!(result.vfs.len(), 100);
    }
}

#[test]
fn sweep_trends() {
    let steps: Vec<u32> = (0..=100).step_by(10).collect();
    let cost = CostModel::default();
    for workload in [Workload::Io, Workload::Cpu] {
        let base = SyntheticSpec { workload, n_classes: 30, ..SyntheticSpec::default() };
        let report = sweep_partition_ratio(&base, &steps, &cost).unwrap();
        let cycles: Vec<u64> = report.rows.iter().map(|r| r.simulated_cycles).collect();
        for w in cycles.windows(2) {
            match workload {
                Workload::Io => assert!(w[0] > w[1], "{workload}: {cycles:?}"),
                Workload::Cpu => assert!(w[0] >= w[1], "{workload}: {cycles:?}"),
            }
        }
        let last = report.rows.last().unwrap();
        assert_eq!(Some(last.simulated_cycles), report.extra(last, "baseline_cycles"));
    }
}

#[test]
fn reports_are_reproducible() {
    for name in ["proxy_creation", "rmi", "gc_consistency"] {
        let a = run_suite(name, &params(30)).unwrap().to_csv();
        let b = run_suite(name, &params(30)).unwrap().to_csv();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn corpus_matches_reference() {
    for seed in 0..40 {
        let program = corpus_program(seed);
        assert!(validate(&program).is_ok());
        let reference = DualRuntime::reference(&program, RuntimeConfig::default()).run_main(&[]);
        assert!(reference.error.is_none(), "seed {seed}: {:?}", reference.error);
        let plan = compute_images(&program).unwrap();
        let split = DualRuntime::from_plan(&plan, RuntimeConfig::default()).unwrap().run_main(&[]);
        assert!(split.error.is_none(), "seed {seed}: {:?}", split.error);
        assert_eq!(split.stdout, reference.stdout, "seed {seed}");
        assert_eq!(split.vfs, reference.vfs, "seed {seed}");
    }
}
