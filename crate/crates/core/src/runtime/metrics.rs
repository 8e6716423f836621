use std::fmt::Write;

use crate::partitioner::Side;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MetricCounters {
    /// Transitions issued from the untrusted side, including mirror removals.
    pub ecalls: u64,
    /// Transitions issued from the trusted side, including shim calls.
    pub ocalls: u64,
    pub bytes_serialized: u64,
    pub allocations: u64,
    pub gc_runs: u64,
    pub gc_cycles: u64,
    pub mirror_registry_size: u64,
    pub live_proxies: u64,
    pub simulated_cycles: u64,
}

impl MetricCounters {
    pub fn entries(&self) -> [(&'static str, u64); 9] {
        [
            ("ecalls", self.ecalls),
            ("ocalls", self.ocalls),
            ("bytes_serialized", self.bytes_serialized),
            ("allocations", self.allocations),
            ("gc_runs", self.gc_runs),
            ("gc_cycles", self.gc_cycles),
            ("mirror_registry_size", self.mirror_registry_size),
            ("live_proxies", self.live_proxies),
            ("simulated_cycles", self.simulated_cycles),
        ]
    }
}

/// `[trusted]` and `[untrusted]` blocks of `key = value` lines.
pub fn metrics_report(trusted: &MetricCounters, untrusted: &MetricCounters) -> String {
    let mut out = String::new();
    for (side, m) in [(Side::Trusted, trusted), (Side::Untrusted, untrusted)] {
        if side == Side::Untrusted {
            out.push('\n');
        }
        let _ = writeln!(out, "[{side}]");
        for (k, v) in m.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_layout() {
        let t = MetricCounters { ocalls: 3, ..Default::default() };
        let report = metrics_report(&t, &MetricCounters::default());
        assert!(report.starts_with("[trusted]\necalls = 0\nocalls = 3\n"));
        assert!(report.contains("\n\n[untrusted]\n"));
        assert_eq!(report.lines().filter(|l| l.contains(" = ")).count(), 18);
    }
}
