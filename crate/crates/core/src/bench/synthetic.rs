use std::fmt::{self, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsl::{parse_program, Program};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Workload {
    /// Each method burns `cpu_units` of compute.
    Cpu,
    /// Each method writes `io_bytes` to its own file.
    Io,
}

impl Workload {
    pub fn as_str(self) -> &'static str {
        match self {
            Workload::Cpu => "cpu",
            Workload::Io => "io",
        }
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Workload {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cpu" => Ok(Workload::Cpu),
            "io" => Ok(Workload::Io),
            other => Err(format!("unknown workload `{other}` (expected cpu or io)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    /// 0..=100.
    pub pct_untrusted: u32,
    pub workload: Workload,
    pub cpu_units: u64,
    pub io_bytes: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec { n_classes: 100, pct_untrusted: 0, workload: Workload::Io, cpu_units: 10_000, io_bytes: 4096, seed: 0 }
    }
}

impl SyntheticSpec {
    /// `round(n * pct / 100)`, halves rounding up.
    pub fn n_untrusted(&self) -> usize {
        (self.n_classes * self.pct_untrusted.min(100) as usize + 50) / 100
    }

    pub fn n_trusted(&self) -> usize {
        self.n_classes - self.n_untrusted()
    }

    /// Which worker classes are untrusted. A fixed seed gives one permutation,
    /// so raising the percentage only ever adds classes to the set.
    pub fn untrusted_mask(&self) -> Vec<bool> {
        let mut order: Vec<usize> = (0..self.n_classes).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        let mut mask = vec![false; self.n_classes];
        for &i in &order[..self.n_untrusted()] {
            mask[i] = true;
        }
        mask
    }
}

/// Source text of the synthetic program: `n_classes` annotated workers, a
/// neutral `Payload` holding the io buffer, and an untrusted `Main` that
/// constructs every worker and calls its one method.
pub fn synthetic_source(spec: &SyntheticSpec) -> String {
    let mut out = String::new();
    if spec.workload == Workload::Io {
        let data: String = (0..spec.io_bytes).map(|i| (b'a' + (i % 26) as u8) as char).collect();
        let _ = writeln!(out, "public class Payload {{");
        let _ = writeln!(out, "    private String data = \"{data}\";");
        let _ = writeln!(out, "    public Payload() {{}}");
        let _ = writeln!(out, "    public String get() {{ return this.data; }}");
        let _ = writeln!(out, "}}\n");
    }
    for (i, untrusted) in spec.untrusted_mask().into_iter().enumerate() {
        let annotation = if untrusted { "@Untrusted" } else { "@Trusted" };
        let _ = writeln!(out, "{annotation}\npublic class Worker{i} {{");
        let _ = writeln!(out, "    public Worker{i}() {{}}\n");
        let _ = writeln!(out, "    public void work() {{");
        match spec.workload {
            Workload::Cpu => {
                let _ = writeln!(out, "        compute({});", spec.cpu_units);
            }
            Workload::Io => {
                let _ = writeln!(out, "        Payload p = new Payload();");
                let _ = writeln!(out, "        file_write(\"out{i}.dat\", p.get());");
            }
        }
        let _ = writeln!(out, "    }}\n}}\n");
    }
    let _ = writeln!(out, "@Untrusted\npublic class Main {{");
    let _ = writeln!(out, "    public static void main(String[] args) {{");
    for i in 0..spec.n_classes {
        let _ = writeln!(out, "        Worker{i} w{i} = new Worker{i}();");
        let _ = writeln!(out, "        w{i}.work();");
    }
    let _ = writeln!(out, "    }}\n}}");
    out
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Program {
    parse_program(&synthetic_source(spec)).expect("synthetic source parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::validate;

    #[test]
    fn untrusted_count_rounds() {
        let spec = |n, pct| SyntheticSpec { n_classes: n, pct_untrusted: pct, ..Default::default() };
        assert_eq!(spec(100, 37).n_untrusted(), 37);
        assert_eq!(spec(10, 25).n_untrusted(), 3);
        assert_eq!(spec(10, 24).n_untrusted(), 2);
        assert_eq!(spec(7, 100).n_trusted(), 0);
        assert_eq!(spec(7, 100).untrusted_mask().iter().filter(|m| **m).count(), 7);
    }

    #[test]
    fn masks_are_nested() {
        let at = |pct| SyntheticSpec { pct_untrusted: pct, seed: 9, ..Default::default() }.untrusted_mask();
        let (low, high) = (at(30), at(60));
        assert!(low.iter().zip(&high).all(|(l, h)| !l || *h));
    }

    #[test]
    fn generated_programs_validate() {
        for workload in [Workload::Io, Workload::Cpu] {
            for pct in [0, 50, 100] {
                let spec = SyntheticSpec { n_classes: 12, pct_untrusted: pct, workload, ..Default::default() };
                let program = generate_synthetic(&spec);
                assert!(validate(&program).is_ok());
                let untrusted = program.classes.iter().filter(|c| c.name.starts_with("Worker")).filter(|c| {
                    c.annotation == crate::dsl::Annotation::Untrusted
                });
                assert_eq!(untrusted.count(), spec.n_untrusted());
            }
        }
    }

    #[test]
    fn same_seed_same_text() {
        let spec = SyntheticSpec { pct_untrusted: 40, seed: 3, ..Default::default() };
        assert_eq!(synthetic_source(&spec), synthetic_source(&spec));
        let other = SyntheticSpec { seed: 4, ..spec.clone() };
        assert_ne!(synthetic_source(&spec), synthetic_source(&other));
    }
}
