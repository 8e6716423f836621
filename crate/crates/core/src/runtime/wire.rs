//! Wire format for values crossing the boundary.
//!
//! | tag  | value         | payload                                   |
//! |------|---------------|-------------------------------------------|
//! | 0x00 | Unit / null   | none                                      |
//! | 0x01 | Int           | i64 little-endian                         |
//! | 0x02 | Bool          | one byte, 0 or 1                          |
//! | 0x03 | Str           | u32 length, UTF-8 bytes                   |
//! | 0x04 | List          | u32 count, elements                       |
//! | 0x05 | HashRef       | u64 hash, u32 class id                    |
//! | 0x06 | NeutralObject | u32 class id, u32 field count, fields     |
//!
//! Every value has exactly one encoding.

use crate::codec::{ByteReader, ByteWriter, DecodeError};

pub const TAG_UNIT: u8 = 0x00;
pub const TAG_INT: u8 = 0x01;
pub const TAG_BOOL: u8 = 0x02;
pub const TAG_STR: u8 = 0x03;
pub const TAG_LIST: u8 = 0x04;
pub const TAG_HASH_REF: u8 = 0x05;
pub const TAG_OBJECT: u8 = 0x06;

/// Nesting bound for decoding untrusted bytes.
const MAX_DEPTH: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireValue {
    Unit,
    Int(i64),
    Bool(bool),
    Str(String),
    List(Vec<WireValue>),
    HashRef { hash: u64, class: u32 },
    Object { class: u32, fields: Vec<WireValue> },
}

impl WireValue {
    pub fn tag(&self) -> u8 {
        match self {
            WireValue::Unit => TAG_UNIT,
            WireValue::Int(_) => TAG_INT,
            WireValue::Bool(_) => TAG_BOOL,
            WireValue::Str(_) => TAG_STR,
            WireValue::List(_) => TAG_LIST,
            WireValue::HashRef { .. } => TAG_HASH_REF,
            WireValue::Object { .. } => TAG_OBJECT,
        }
    }

    pub fn encode_into(&self, w: &mut ByteWriter) {
        w.u8(self.tag());
        match self {
            WireValue::Unit => {}
            WireValue::Int(v) => w.i64(*v),
            WireValue::Bool(b) => w.bool(*b),
            WireValue::Str(s) => w.str(s),
            WireValue::List(items) => {
                w.len_prefix(items.len());
                items.iter().for_each(|v| v.encode_into(w));
            }
            WireValue::HashRef { hash, class } => {
                w.u64(*hash);
                w.u32(*class);
            }
            WireValue::Object { class, fields } => {
                w.u32(*class);
                w.len_prefix(fields.len());
                fields.iter().for_each(|v| v.encode_into(w));
            }
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        self.encode_into(&mut w);
        w.into_bytes()
    }

    pub fn encoded_len(&self) -> usize {
        1 + match self {
            WireValue::Unit => 0,
            WireValue::Int(_) => 8,
            WireValue::Bool(_) => 1,
            WireValue::Str(s) => 4 + s.len(),
            WireValue::List(items) => 4 + items.iter().map(WireValue::encoded_len).sum::<usize>(),
            WireValue::HashRef { .. } => 12,
            WireValue::Object { fields, .. } => 8 + fields.iter().map(WireValue::encoded_len).sum::<usize>(),
        }
    }

    /// Reads one value, leaving any following bytes in `r`.
    pub fn decode_from(r: &mut ByteReader) -> Result<WireValue, DecodeError> {
        decode_at(r, 0)
    }

    /// Decodes exactly one value; trailing bytes are an error.
    pub fn decode(bytes: &[u8]) -> Result<WireValue, DecodeError> {
        let mut r = ByteReader::new(bytes);
        let v = decode_at(&mut r, 0)?;
        r.finish()?;
        Ok(v)
    }
}

fn decode_at(r: &mut ByteReader, depth: usize) -> Result<WireValue, DecodeError> {
    if depth > MAX_DEPTH {
        return Err(DecodeError::Invalid("value nested too deeply".into()));
    }
    let tag = r.u8()?;
    Ok(match tag {
        TAG_UNIT => WireValue::Unit,
        TAG_INT => WireValue::Int(r.i64()?),
        TAG_BOOL => WireValue::Bool(r.bool()?),
        TAG_STR => WireValue::Str(r.string()?),
        TAG_LIST => {
            let n = r.len_prefix(1)?;
            let items = (0..n).map(|_| decode_at(r, depth + 1)).collect::<Result<_, _>>()?;
            WireValue::List(items)
        }
        TAG_HASH_REF => WireValue::HashRef { hash: r.u64()?, class: r.u32()? },
        TAG_OBJECT => {
            let class = r.u32()?;
            let n = r.len_prefix(1)?;
            let fields = (0..n).map(|_| decode_at(r, depth + 1)).collect::<Result<_, _>>()?;
            WireValue::Object { class, fields }
        }
        other => return Err(r.bad_tag("wire value", other)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn int_layout() {
        let bytes = WireValue::Int(25).encode();
        assert_eq!(bytes, [0x01, 25, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(WireValue::decode(&bytes).unwrap(), WireValue::Int(25));
    }

    #[test]
    fn str_layout() {
        let bytes = WireValue::Str("Alice".into()).encode();
        assert_eq!(bytes, [0x03, 5, 0, 0, 0, b'A', b'l', b'i', b'c', b'e']);
        assert_eq!(WireValue::decode(&bytes).unwrap(), WireValue::Str("Alice".into()));
    }

    #[test]
    fn list_of_16_byte_strings() {
        for n in [0usize, 1, 7, 1000] {
            let v = WireValue::List(vec![WireValue::Str("x".repeat(16)); n]);
            assert_eq!(v.encode().len(), 5 + n * (5 + 16));
            assert_eq!(v.encoded_len(), 5 + n * (5 + 16));
        }
    }

    #[test]
    fn non_canonical_inputs_are_rejected() {
        assert_eq!(WireValue::decode(&[0x02, 2]), Err(DecodeError::BadBool(2)));
        assert_eq!(WireValue::decode(&[0x00, 0x00]), Err(DecodeError::TrailingBytes(1)));
        assert!(WireValue::decode(&[0x07]).is_err());
        assert!(WireValue::decode(&[0x03, 1, 0, 0, 0, 0xff]).is_err());
        assert!(WireValue::decode(&[]).is_err());
    }

    fn wire_value() -> impl Strategy<Value = WireValue> {
        let leaf = prop_oneof![
            Just(WireValue::Unit),
            any::<i64>().prop_map(WireValue::Int),
            any::<bool>().prop_map(WireValue::Bool),
            ".{0,12}".prop_map(WireValue::Str),
            (any::<u64>(), any::<u32>()).prop_map(|(hash, class)| WireValue::HashRef { hash, class }),
        ];
        leaf.prop_recursive(4, 48, 6, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..6).prop_map(WireValue::List),
                (any::<u32>(), prop::collection::vec(inner, 0..6))
                    .prop_map(|(class, fields)| WireValue::Object { class, fields }),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2_000))]

        #[test]
        fn round_trip(v in wire_value()) {
            let bytes = v.encode();
            prop_assert_eq!(bytes.len(), v.encoded_len());
            prop_assert_eq!(WireValue::decode(&bytes).unwrap(), v);
        }

        // Any byte string that decodes must re-encode to itself, so no value
        // has two encodings.
        #[test]
        fn decoding_is_canonical(bytes in prop::collection::vec(any::<u8>(), 0..40)) {
            if let Ok(v) = WireValue::decode(&bytes) {
                prop_assert_eq!(v.encode(), bytes);
            }
        }
    }
}
