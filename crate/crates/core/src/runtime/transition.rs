use std::fmt;

use crate::codec::{ByteReader, ByteWriter};
use crate::dsl::{Annotation, Builtin};
use crate::partitioner::{Direction, MarshalKind, ProxyClassDef, Side};

use super::heap::{HeapObject, ObjRef, Value};
use super::isolate::WeakEntry;
use super::wire::WireValue;
use super::{CensusEvent, CensusSample, DualRuntime, ErrorKind, GcStats, RuntimeError};

type R<T> = Result<T, RuntimeError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransitionKind {
    ConstructorRelay,
    InstanceRelay,
    ShimCall,
    RemoveMirror,
}

impl TransitionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransitionKind::ConstructorRelay => "ConstructorRelay",
            TransitionKind::InstanceRelay => "InstanceRelay",
            TransitionKind::ShimCall => "ShimCall",
            TransitionKind::RemoveMirror => "RemoveMirror",
        }
    }
}

/// One line of `--trace transitions` output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub seq: u64,
    pub direction: Direction,
    pub kind: TransitionKind,
    pub class: String,
    pub method: String,
    pub hash: Option<u64>,
    pub bytes: usize,
    pub cycles: u64,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hash = self.hash.map_or_else(|| "-".to_string(), |h| format!("{h:016x}"));
        write!(
            f,
            "{} {} {} {}.{} hash={} bytes={} cycles={}",
            self.seq,
            self.direction,
            self.kind.as_str(),
            self.class,
            self.method,
            hash,
            self.bytes,
            self.cycles
        )
    }
}

/// What a transition asks the other isolate to do.
#[derive(Debug, Clone)]
enum Target {
    Construct { class: u32, hash: u64 },
    Invoke { class: u32, method: String, hash: u64 },
    Shim(Builtin),
    Remove { class: u32, hash: u64 },
}

impl DualRuntime {
    // ---- marshaling -------------------------------------------------------

    /// Converts a local value for the wire, registering annotated objects of
    /// this isolate in its mirror registry on first export.
    fn to_wire(&mut self, side: Side, v: &Value, path: &mut Vec<ObjRef>) -> R<WireValue> {
        Ok(match v {
            Value::Unit => WireValue::Unit,
            Value::Int(i) => WireValue::Int(*i),
            Value::Bool(b) => WireValue::Bool(*b),
            Value::Str(s) => WireValue::Str(s.to_string()),
            Value::Ref(r) => {
                if path.contains(r) {
                    return Err(RuntimeError::new(ErrorKind::CyclicValue));
                }
                let obj = self.iso(side).heap.get(*r).cloned();
                match obj {
                    Some(HeapObject::Proxy { class, hash }) => WireValue::HashRef { hash, class },
                    Some(HeapObject::Instance { class, fields }) => {
                        if self.iso(side).classes.annotation(class).is_annotated() {
                            WireValue::HashRef { hash: self.export(side, *r), class }
                        } else {
                            path.push(*r);
                            let fields = fields.iter().map(|f| self.to_wire(side, f, path)).collect::<R<_>>();
                            path.pop();
                            WireValue::Object { class, fields: fields? }
                        }
                    }
                    Some(HeapObject::List { items }) => {
                        path.push(*r);
                        let items = items.iter().map(|f| self.to_wire(side, f, path)).collect::<R<_>>();
                        path.pop();
                        WireValue::List(items?)
                    }
                    None => return Err(RuntimeError::new(ErrorKind::Internal("dangling reference".into()))),
                }
            }
        })
    }

    fn export(&mut self, side: Side, obj: ObjRef) -> u64 {
        if let Some(h) = self.iso(side).reverse.get(&obj) {
            return *h;
        }
        let iso = self.iso_mut(side);
        let hash = iso.fresh_hash();
        iso.registry.insert(hash, obj);
        iso.reverse.insert(obj, hash);
        hash
    }

    /// Rebuilds a wire value in `side`. Allocations made here are not charged
    /// and cannot trigger a collection mid-decode.
    fn from_wire(&mut self, side: Side, w: WireValue) -> R<Value> {
        Ok(match w {
            WireValue::Unit => Value::Unit,
            WireValue::Int(i) => Value::Int(i),
            WireValue::Bool(b) => Value::Bool(b),
            WireValue::Str(s) => Value::str(&s),
            WireValue::List(items) => {
                let items = items.into_iter().map(|x| self.from_wire(side, x)).collect::<R<_>>()?;
                Value::Ref(self.iso_mut(side).alloc_uncharged(HeapObject::List { items }))
            }
            WireValue::Object { class, fields } => {
                let iso = self.iso(side);
                let expected = iso.classes.concrete(class).filter(|c| c.decl.annotation == Annotation::Neutral);
                match expected {
                    Some(c) if c.decl.fields.len() == fields.len() => {}
                    _ => {
                        return Err(RuntimeError::mismatch(format!(
                            "no neutral class {} with {} field(s) in {side} isolate",
                            iso.class_name(class),
                            fields.len()
                        )))
                    }
                }
                let fields = fields.into_iter().map(|x| self.from_wire(side, x)).collect::<R<_>>()?;
                Value::Ref(self.iso_mut(side).alloc_uncharged(HeapObject::Instance { class, fields }))
            }
            WireValue::HashRef { hash, class } => Value::Ref(self.resolve_hash(side, hash, class)),
        })
    }

    /// A mirror registered here, a live proxy already bound to `hash`, or a
    /// fresh proxy.
    fn resolve_hash(&mut self, side: Side, hash: u64, class: u32) -> ObjRef {
        let iso = self.iso_mut(side);
        if let Some(m) = iso.registry.get(&hash) {
            return *m;
        }
        if let Some(p) = iso.proxy_table.get(&hash) {
            if iso.heap.contains(*p) {
                return *p;
            }
        }
        let proxy = iso.alloc_uncharged(HeapObject::Proxy { class, hash });
        iso.proxy_table.insert(hash, proxy);
        // A cleared entry still waiting for the helper would otherwise remove
        // the mirror this new proxy now depends on.
        match iso.weak_list.iter_mut().find(|e| e.hash == hash) {
            Some(entry) => entry.proxy = proxy,
            None => iso.weak_list.push(WeakEntry { proxy, hash, class }),
        }
        proxy
    }

    fn check_kind(v: &WireValue, kind: MarshalKind) -> R<()> {
        let ok = match kind {
            MarshalKind::Primitive => matches!(v, WireValue::Int(_) | WireValue::Bool(_)),
            MarshalKind::SerializedNeutral => {
                matches!(v, WireValue::Unit | WireValue::Str(_) | WireValue::List(_) | WireValue::Object { .. })
            }
            MarshalKind::HashRef => matches!(v, WireValue::Unit | WireValue::HashRef { .. }),
        };
        if ok {
            Ok(())
        } else {
            Err(RuntimeError::new(ErrorKind::KindMismatch(format!(
                "tag {:#04x} is not {}",
                v.tag(),
                kind.code()
            ))))
        }
    }

    /// Encodes `v` as `kind`. Counts nothing.
    pub fn marshal(&mut self, side: Side, v: &Value, kind: MarshalKind) -> R<Vec<u8>> {
        let w = self.to_wire(side, v, &mut Vec::new())?;
        Self::check_kind(&w, kind)?;
        Ok(w.encode())
    }

    pub fn unmarshal(&mut self, side: Side, bytes: &[u8], kind: MarshalKind) -> R<Value> {
        let w = WireValue::decode(bytes).map_err(|e| RuntimeError::new(ErrorKind::Decode(e)))?;
        Self::check_kind(&w, kind)?;
        self.from_wire(side, w)
    }

    fn marshal_seq(&mut self, side: Side, values: &[Value], kinds: &[MarshalKind]) -> R<Vec<u8>> {
        if values.len() != kinds.len() {
            return Err(RuntimeError::mismatch(format!("{} argument(s) for {} kind(s)", values.len(), kinds.len())));
        }
        let mut w = ByteWriter::new();
        for (v, k) in values.iter().zip(kinds) {
            let wire = self.to_wire(side, v, &mut Vec::new())?;
            Self::check_kind(&wire, *k)?;
            wire.encode_into(&mut w);
        }
        Ok(w.into_bytes())
    }

    /// Decodes arguments onto the temp stack of `side` and returns its height
    /// before them.
    fn unmarshal_seq_onto_temps(&mut self, side: Side, bytes: &[u8], kinds: &[MarshalKind]) -> R<usize> {
        let base = self.iso(side).temps.len();
        let mut r = ByteReader::new(bytes);
        let result = (|| {
            for k in kinds {
                let w = WireValue::decode_from(&mut r).map_err(|e| RuntimeError::new(ErrorKind::Decode(e)))?;
                Self::check_kind(&w, *k)?;
                let v = self.from_wire(side, w)?;
                self.iso_mut(side).temps.push(v);
            }
            r.finish().map_err(|e| RuntimeError::new(ErrorKind::Decode(e)))
        })();
        if let Err(e) = result {
            self.iso_mut(side).temps.truncate(base);
            return Err(e);
        }
        Ok(base)
    }

    // ---- transitions ------------------------------------------------------

    pub(crate) fn construct_remote(&mut self, side: Side, proxy: &ProxyClassDef, base: usize) -> R<Value> {
        let p = self.alloc_checked(side, HeapObject::Proxy { class: proxy.class_id, hash: 0 });
        let args = self.take_temps(side, base);
        let iso = self.iso_mut(side);
        let hash = iso.fresh_hash();
        if let Some(HeapObject::Proxy { hash: h, .. }) = iso.heap.get_mut(p) {
            *h = hash;
        }
        iso.proxy_table.insert(hash, p);
        iso.weak_list.push(WeakEntry { proxy: p, hash, class: proxy.class_id });
        self.charge_field(side);
        self.iso_mut(side).temps.push(Value::Ref(p));
        let out = self.transition(side, Target::Construct { class: proxy.class_id, hash }, args);
        self.iso_mut(side).temps.pop();
        out.map(|_| Value::Ref(p))
    }

    pub(crate) fn invoke_remote(&mut self, side: Side, class: u32, hash: u64, method: &str, args: Vec<Value>) -> R<Value> {
        self.transition(side, Target::Invoke { class, method: method.to_string(), hash }, args)
    }

    pub(crate) fn shim_call(&mut self, op: Builtin, args: Vec<Value>) -> R<Value> {
        // The shim takes text, so printable values are rendered before crossing.
        let args = match op {
            Builtin::Print => args.iter().map(|v| Value::str(&v.to_string())).collect(),
            _ => args,
        };
        self.transition(Side::Trusted, Target::Shim(op), args)
    }

    fn signature(&self, from: Side, target: &Target) -> R<(Vec<MarshalKind>, Option<MarshalKind>)> {
        let ser = MarshalKind::SerializedNeutral;
        let (class, method) = match target {
            Target::Shim(Builtin::Print) => return Ok((vec![ser], None)),
            Target::Shim(Builtin::FileWrite) => return Ok((vec![ser, ser], None)),
            Target::Shim(Builtin::FileRead) => return Ok((vec![ser], Some(ser))),
            Target::Shim(op) => return Err(RuntimeError::new(ErrorKind::UnknownTarget(format!("shim.{}", op.name())))),
            Target::Remove { .. } => return Ok((Vec::new(), None)),
            Target::Construct { class, .. } => {
                let name = self.iso(from).class_name(*class);
                (name, name)
            }
            Target::Invoke { class, method, .. } => (self.iso(from).class_name(*class), method.as_str()),
        };
        let record = self
            .interface
            .find(from.outgoing(), class, method)
            .ok_or_else(|| RuntimeError::new(ErrorKind::UnknownTarget(format!("{} {class}.{method}", from.outgoing()))))?;
        Ok((record.params.clone(), record.ret))
    }

    fn describe(&self, from: Side, target: &Target) -> (TransitionKind, String, String, Option<u64>) {
        let name = |c: &u32| self.iso(from).class_name(*c).to_string();
        match target {
            Target::Construct { class, hash } => (TransitionKind::ConstructorRelay, name(class), name(class), Some(*hash)),
            Target::Invoke { class, method, hash } => {
                (TransitionKind::InstanceRelay, name(class), method.clone(), Some(*hash))
            }
            Target::Shim(op) => (TransitionKind::ShimCall, "shim".into(), op.name().into(), None),
            Target::Remove { class, hash } => (TransitionKind::RemoveMirror, name(class), "mirror".into(), Some(*hash)),
        }
    }

    /// Sends one message from `from` to the other isolate and waits for the
    /// reply. The issuer pays the transition and the argument bytes; the
    /// callee pays for serializing its return value.
    fn transition(&mut self, from: Side, target: Target, args: Vec<Value>) -> R<Value> {
        let to = from.opposite();
        let direction = from.outgoing();
        let (kind, class, method, hash) = self.describe(from, &target);
        let marker = format!("-- {direction} {} {class}.{method} --", kind.as_str());
        if self.depth >= self.config.max_transition_depth {
            return Err(RuntimeError::new(ErrorKind::TransitionOverflow { limit: self.config.max_transition_depth })
                .with_frame(marker));
        }
        let (kinds, ret_kind) = self.signature(from, &target)?;
        let bytes = self.marshal_seq(from, &args, &kinds)?;
        drop(args);

        let cost = &self.config.cost;
        let transition_cycles = cost.transition(from);
        let ser_cycles = cost.serialize_per_byte * bytes.len() as u64;
        let iso = self.iso_mut(from);
        iso.ledger.transition += transition_cycles;
        iso.ledger.serialization += ser_cycles;
        iso.counters.bytes_serialized += bytes.len() as u64;
        match direction {
            Direction::Ecall => iso.counters.ecalls += 1,
            Direction::Ocall => iso.counters.ocalls += 1,
        }
        match kind {
            TransitionKind::ShimCall => self.stats.shim_calls += 1,
            TransitionKind::RemoveMirror => self.stats.remove_mirrors += 1,
            _ => {}
        }
        if self.config.trace {
            self.trace.push(TraceEvent {
                seq: self.trace.len() as u64 + 1,
                direction,
                kind,
                class,
                method,
                hash,
                bytes: bytes.len(),
                cycles: transition_cycles + ser_cycles,
            });
        }

        self.depth += 1;
        let reply = self.serve(to, &target, &bytes, &kinds, ret_kind);
        self.depth -= 1;
        let reply = reply.map_err(|e| e.with_frame(marker))?;
        let value = match ret_kind {
            None => Value::Unit,
            Some(k) => self.unmarshal(from, &reply, k)?,
        };
        if self.depth == 0 {
            self.record_census(CensusEvent::Transition);
        }
        Ok(value)
    }

    /// Runs the relay for `target` in isolate `to` and returns the encoded result.
    fn serve(
        &mut self,
        to: Side,
        target: &Target,
        bytes: &[u8],
        kinds: &[MarshalKind],
        ret_kind: Option<MarshalKind>,
    ) -> R<Vec<u8>> {
        let result = match target {
            Target::Remove { hash, .. } => {
                let iso = self.iso_mut(to);
                if let Some(mirror) = iso.registry.remove(hash) {
                    iso.reverse.remove(&mirror);
                }
                return Ok(Vec::new());
            }
            Target::Shim(op) => {
                let base = self.unmarshal_seq_onto_temps(to, bytes, kinds)?;
                let args = self.take_temps(to, base);
                self.perform_io(*op, args)?
            }
            Target::Construct { class, hash } => {
                let data = self.iso(to).classes.concrete(*class).cloned();
                let data = data
                    .filter(|d| d.relays.contains_key(&d.decl.name))
                    .ok_or_else(|| RuntimeError::new(ErrorKind::UnknownTarget(format!("relay for new {}", self.iso(to).class_name(*class)))))?;
                let base = self.unmarshal_seq_onto_temps(to, bytes, kinds)?;
                let mirror = self.construct_concrete(to, &data, base)?;
                let r = mirror.as_ref().expect("constructed object");
                let iso = self.iso_mut(to);
                iso.registry.insert(*hash, r);
                iso.reverse.insert(r, *hash);
                Value::Unit
            }
            Target::Invoke { method, hash, .. } => {
                let mirror = *self
                    .iso(to)
                    .registry
                    .get(hash)
                    .ok_or_else(|| RuntimeError::new(ErrorKind::StaleMirror { hash: *hash }))?;
                let class = match self.iso(to).heap.get(mirror) {
                    Some(HeapObject::Instance { class, .. }) => *class,
                    _ => return Err(RuntimeError::new(ErrorKind::StaleMirror { hash: *hash })),
                };
                let data = self.iso(to).classes.concrete(class).cloned();
                let (data, m) = data
                    .filter(|d| d.relays.contains_key(method))
                    .and_then(|d| d.methods.get(method).cloned().map(|m| (d, m)))
                    .ok_or_else(|| RuntimeError::new(ErrorKind::UnknownTarget(format!("relay for {method}"))))?;
                let base = self.unmarshal_seq_onto_temps(to, bytes, kinds)?;
                let args = self.take_temps(to, base);
                self.invoke_concrete(to, &data, &m, Value::Ref(mirror), args)?
            }
        };
        let Some(kind) = ret_kind else { return Ok(Vec::new()) };
        let out = self.marshal(to, &result, kind)?;
        let cycles = self.config.cost.serialize_per_byte * out.len() as u64;
        let iso = self.iso_mut(to);
        iso.ledger.serialization += cycles;
        iso.counters.bytes_serialized += out.len() as u64;
        Ok(out)
    }

    /// Executes an I/O builtin in the untrusted isolate.
    pub(crate) fn perform_io(&mut self, op: Builtin, args: Vec<Value>) -> R<Value> {
        self.iso_mut(Side::Untrusted).ledger.io += self.config.cost.io_write_cost;
        match (op, args.as_slice()) {
            (Builtin::Print, [v]) => {
                self.stdout.push_str(&v.to_string());
                self.stdout.push('\n');
                Ok(Value::Unit)
            }
            (Builtin::FileWrite, [Value::Str(path), Value::Str(content)]) => {
                self.vfs.insert(path.to_string(), content.as_bytes().to_vec());
                Ok(Value::Unit)
            }
            (Builtin::FileRead, [Value::Str(path)]) => match self.vfs.get(path.as_ref()) {
                Some(bytes) => Ok(Value::str(&String::from_utf8_lossy(bytes))),
                None => Err(RuntimeError::new(ErrorKind::FileNotFound(path.to_string()))),
            },
            (Builtin::FileWrite | Builtin::FileRead, [Value::Unit, ..] | [_, Value::Unit]) => {
                Err(RuntimeError::new(ErrorKind::NullDereference))
            }
            _ => Err(RuntimeError::mismatch(format!("bad arguments to {}", op.name()))),
        }
    }

    // ---- garbage collection ----------------------------------------------

    /// Collects one isolate's heap.
    pub fn gc_collect(&mut self, side: Side) -> GcStats {
        let stats = self.iso_mut(side).collect();
        let base = (stats.swept_bytes + stats.live_bytes) as u64 * self.config.cost.field_access_cost;
        let cycles = self.config.cost.local(side, base);
        let iso = self.iso_mut(side);
        iso.ledger.gc += cycles;
        iso.counters.gc_runs += 1;
        iso.counters.gc_cycles += cycles;
        self.record_census(CensusEvent::Gc);
        GcStats { sweep: stats, cycles }
    }

    /// Removes the mirrors of proxies this isolate has lost, one
    /// `RemoveMirror` transition each. Returns the hashes removed.
    pub fn gc_helper_scan(&mut self, side: Side) -> Vec<u64> {
        let iso = self.iso_mut(side);
        let (dead, live): (Vec<WeakEntry>, Vec<WeakEntry>) =
            iso.weak_list.iter().partition(|e| !iso.heap.contains(e.proxy));
        iso.weak_list = live;
        for e in &dead {
            if iso.proxy_table.get(&e.hash) == Some(&e.proxy) {
                iso.proxy_table.remove(&e.hash);
            }
        }
        let mut removed = Vec::with_capacity(dead.len());
        for e in dead {
            // Removal carries no arguments and has no failure mode.
            let _ = self.transition(side, Target::Remove { class: e.class, hash: e.hash }, Vec::new());
            removed.push(e.hash);
        }
        self.record_census(CensusEvent::Scan);
        removed
    }

    pub(crate) fn record_census(&mut self, event: CensusEvent) {
        if !self.config.census {
            return;
        }
        let t = self.iso(Side::Trusted);
        let u = self.iso(Side::Untrusted);
        self.census.push(CensusSample {
            event,
            trusted_registry: t.registry_size(),
            trusted_live_proxies: t.live_proxies(),
            untrusted_registry: u.registry_size(),
            untrusted_live_proxies: u.live_proxies(),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_line_format() {
        let e = TraceEvent {
            seq: 3,
            direction: Direction::Ecall,
            kind: TransitionKind::InstanceRelay,
            class: "Account".into(),
            method: "updateBalance".into(),
            hash: Some(0x2a),
            bytes: 9,
            cycles: 13145,
        };
        assert_eq!(
            e.to_string(),
            "3 ecall InstanceRelay Account.updateBalance hash=000000000000002a bytes=9 cycles=13145"
        );
        let shim = TraceEvent { kind: TransitionKind::ShimCall, hash: None, ..e };
        assert!(shim.to_string().contains(" hash=- "));
    }
}
