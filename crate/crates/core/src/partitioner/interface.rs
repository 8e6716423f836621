use std::fmt;

use super::{Direction, MarshalKind};

pub const INTERFACE_HEADER: &str = concat!("# enpart interface v", env!("CARGO_PKG_VERSION"));

/// One cross-boundary entry point: `ecall Account.updateBalance(prim) -> unit`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InterfaceRecord {
    pub direction: Direction,
    pub class: String,
    pub method: String,
    pub params: Vec<MarshalKind>,
    pub ret: Option<MarshalKind>,
}

impl fmt::Display for InterfaceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params: Vec<&str> = self.params.iter().map(|k| k.code()).collect();
        let ret = self.ret.map_or("unit", MarshalKind::code);
        write!(f, "{} {}.{}({}) -> {}", self.direction, self.class, self.method, params.join(","), ret)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InterfaceDescriptor {
    pub records: Vec<InterfaceRecord>,
}

impl InterfaceDescriptor {
    pub fn find(&self, direction: Direction, class: &str, method: &str) -> Option<&InterfaceRecord> {
        self.records
            .iter()
            .find(|r| r.direction == direction && r.class == class && r.method == method)
    }

    pub fn count(&self, direction: Direction) -> usize {
        self.records.iter().filter(|r| r.direction == direction).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{INTERFACE_HEADER}\n");
        for r in &self.records {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }
}

/// Parses the text form written by [`InterfaceDescriptor::to_text`]. Errors
/// carry the 1-based line number.
pub fn parse_interface(text: &str) -> Result<InterfaceDescriptor, (usize, String)> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        records.push(parse_record(line).map_err(|m| (i + 1, m))?);
    }
    Ok(InterfaceDescriptor { records })
}

fn parse_record(line: &str) -> Result<InterfaceRecord, String> {
    let (dir, rest) = line.split_once(' ').ok_or("missing direction")?;
    let direction = match dir {
        "ecall" => Direction::Ecall,
        "ocall" => Direction::Ocall,
        other => return Err(format!("unknown direction `{other}`")),
    };
    let (call, ret) = rest.split_once(" -> ").ok_or("missing return kind")?;
    let (target, params) = call.split_once('(').ok_or("missing parameter list")?;
    let params = params.strip_suffix(')').ok_or("unterminated parameter list")?;
    let (class, method) = target.split_once('.').ok_or("expected Class.method")?;
    let kind = |code: &str| MarshalKind::from_code(code).ok_or_else(|| format!("unknown kind `{code}`"));
    let params = if params.is_empty() {
        Vec::new()
    } else {
        params.split(',').map(kind).collect::<Result<_, _>>()?
    };
    let ret = match ret {
        "unit" => None,
        code => Some(kind(code)?),
    };
    Ok(InterfaceRecord { direction, class: class.to_string(), method: method.to_string(), params, ret })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let d = InterfaceDescriptor {
            records: vec![
                InterfaceRecord {
                    direction: Direction::Ecall,
                    class: "A".into(),
                    method: "A".into(),
                    params: vec![],
                    ret: None,
                },
                InterfaceRecord {
                    direction: Direction::Ocall,
                    class: "B".into(),
                    method: "f".into(),
                    params: vec![MarshalKind::HashRef, MarshalKind::Primitive],
                    ret: Some(MarshalKind::SerializedNeutral),
                },
            ],
        };
        let text = d.to_text();
        assert!(text.starts_with("# enpart interface v"));
        assert!(text.contains("ocall B.f(href,prim) -> ser\n"));
        assert_eq!(parse_interface(&text).unwrap(), d);
    }

    #[test]
    fn bad_kind_reports_line() {
        let err = parse_interface("# h\necall A.f(foo) -> unit\n").unwrap_err();
        assert_eq!(err.0, 2);
    }
}
