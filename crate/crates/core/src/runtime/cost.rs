use std::fmt;

use thiserror::Error;

use crate::partitioner::Side;

/// Prices in simulated cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub ecall_cost: u64,
    pub ocall_cost: u64,
    pub alloc_cost: u64,
    pub field_access_cost: u64,
    pub serialize_per_byte: u64,
    /// Multiplier on allocation, field access, compute and GC work done in
    /// the trusted isolate.
    pub epc_penalty: f64,
    pub compute_unit_cost: u64,
    /// Per I/O builtin, paid by the untrusted isolate.
    pub io_write_cost: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            ecall_cost: 13_100,
            ocall_cost: 13_100,
            alloc_cost: 10,
            field_access_cost: 2,
            serialize_per_byte: 5,
            epc_penalty: 4.0,
            compute_unit_cost: 1,
            io_write_cost: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CostModelError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    BadValue { line: usize, key: String, value: String },
    #[error("epc_penalty must be at least 1")]
    PenaltyBelowOne,
}

impl CostModel {
    pub const KEYS: [&'static str; 8] = [
        "ecall_cost",
        "ocall_cost",
        "alloc_cost",
        "field_access_cost",
        "serialize_per_byte",
        "epc_penalty",
        "compute_unit_cost",
        "io_write_cost",
    ];

    /// Parses `key = value` lines over the defaults. Blank lines and `#`
    /// comments are ignored.
    pub fn parse(text: &str) -> Result<CostModel, CostModelError> {
        let mut model = CostModel::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(CostModelError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || CostModelError::BadValue { line, key: key.to_string(), value: value.to_string() };
            if key == "epc_penalty" {
                let p: f64 = value.parse().map_err(|_| bad())?;
                if !p.is_finite() {
                    return Err(bad());
                }
                model.epc_penalty = p;
                continue;
            }
            let v: u64 = value.parse().map_err(|_| bad())?;
            match key {
                "ecall_cost" => model.ecall_cost = v,
                "ocall_cost" => model.ocall_cost = v,
                "alloc_cost" => model.alloc_cost = v,
                "field_access_cost" => model.field_access_cost = v,
                "serialize_per_byte" => model.serialize_per_byte = v,
                "compute_unit_cost" => model.compute_unit_cost = v,
                "io_write_cost" => model.io_write_cost = v,
                _ => return Err(CostModelError::UnknownKey { line, key: key.to_string() }),
            }
        }
        if model.epc_penalty < 1.0 {
            return Err(CostModelError::PenaltyBelowOne);
        }
        Ok(model)
    }

    /// `base` scaled by the enclave penalty when run on the trusted side.
    pub fn local(&self, side: Side, base: u64) -> u64 {
        match side {
            Side::Untrusted => base,
            Side::Trusted => (base as f64 * self.epc_penalty).round() as u64,
        }
    }

    pub fn transition(&self, issuer: Side) -> u64 {
        match issuer {
            Side::Untrusted => self.ecall_cost,
            Side::Trusted => self.ocall_cost,
        }
    }
}

impl fmt::Display for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ecall_cost = {}", self.ecall_cost)?;
        writeln!(f, "ocall_cost = {}", self.ocall_cost)?;
        writeln!(f, "alloc_cost = {}", self.alloc_cost)?;
        writeln!(f, "field_access_cost = {}", self.field_access_cost)?;
        writeln!(f, "serialize_per_byte = {}", self.serialize_per_byte)?;
        writeln!(f, "epc_penalty = {}", self.epc_penalty)?;
        writeln!(f, "compute_unit_cost = {}", self.compute_unit_cost)?;
        writeln!(f, "io_write_cost = {}", self.io_write_cost)
    }
}

/// Simulated cycles of one isolate broken down by source. The total is
/// `simulated_cycles`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostLedger {
    pub transition: u64,
    pub serialization: u64,
    pub alloc: u64,
    pub field: u64,
    pub compute: u64,
    pub io: u64,
    pub gc: u64,
}

impl CostLedger {
    pub fn total(&self) -> u64 {
        self.transition + self.serialization + self.alloc + self.field + self.compute + self.io + self.gc
    }

    /// Everything except garbage collection.
    pub fn mutator(&self) -> u64 {
        self.total() - self.gc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_overrides_and_round_trips() {
        let m = CostModel::parse("# model\necall_cost = 100\nepc_penalty = 10 # study\n").unwrap();
        assert_eq!(m.ecall_cost, 100);
        assert_eq!(m.epc_penalty, 10.0);
        assert_eq!(m.ocall_cost, 13_100);
        assert_eq!(CostModel::parse(&CostModel::default().to_string()).unwrap(), CostModel::default());
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert!(matches!(CostModel::parse("foo = 1"), Err(CostModelError::UnknownKey { line: 1, .. })));
        assert!(matches!(CostModel::parse("alloc_cost = -1"), Err(CostModelError::BadValue { .. })));
        assert!(matches!(CostModel::parse("alloc_cost"), Err(CostModelError::Syntax { line: 1 })));
        assert_eq!(CostModel::parse("epc_penalty = 0.5"), Err(CostModelError::PenaltyBelowOne));
    }

    #[test]
    fn penalty_applies_on_trusted_side_only() {
        let m = CostModel::default();
        assert_eq!(m.local(Side::Trusted, 10), 40);
        assert_eq!(m.local(Side::Untrusted, 10), 10);
        let odd = CostModel { epc_penalty: 1.5, ..CostModel::default() };
        assert_eq!(odd.local(Side::Trusted, 3), 5);
    }
}
