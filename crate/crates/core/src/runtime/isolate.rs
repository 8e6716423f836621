use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::dsl::{Annotation, ClassDecl, MethodDecl, TypeRef};
use crate::partitioner::{ClassInfo, ImageSpec, ProxyClassDef, RelayMethodDef, Side};

use super::cost::CostLedger;
use super::heap::{Heap, HeapObject, ObjRef, SweepStats, Value};
use super::metrics::MetricCounters;

#[derive(Debug)]
pub(crate) struct ConcreteData {
    pub id: u32,
    pub decl: ClassDecl,
    pub ctor: Arc<MethodDecl>,
    pub methods: HashMap<String, Arc<MethodDecl>>,
    pub relays: HashMap<String, RelayMethodDef>,
}

impl ConcreteData {
    pub fn field_defaults(&self) -> Vec<Value> {
        self.decl
            .fields
            .iter()
            .map(|f| match f.ty {
                TypeRef::Int => Value::Int(0),
                TypeRef::Bool => Value::Bool(false),
                _ => Value::Unit,
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub(crate) enum RtClass {
    Concrete(Arc<ConcreteData>),
    Proxy(Arc<ProxyClassDef>),
}

/// Classes loaded into one isolate, by program-wide class id.
#[derive(Debug, Default)]
pub(crate) struct ClassIndex {
    pub table: Vec<ClassInfo>,
    by_name: HashMap<String, u32>,
    loaded: HashMap<u32, RtClass>,
}

impl ClassIndex {
    pub fn from_image(image: &ImageSpec) -> ClassIndex {
        let by_name = image.class_table.iter().enumerate().map(|(i, c)| (c.name.clone(), i as u32)).collect();
        let mut loaded = HashMap::new();
        for c in &image.concrete {
            let data = ConcreteData {
                id: c.class_id,
                ctor: Arc::new(c.decl.constructor()),
                methods: c.decl.methods.iter().map(|m| (m.name.clone(), Arc::new(m.clone()))).collect(),
                relays: c.relays.iter().map(|r| (r.method.clone(), r.clone())).collect(),
                decl: c.decl.clone(),
            };
            loaded.insert(c.class_id, RtClass::Concrete(Arc::new(data)));
        }
        for p in &image.proxies {
            loaded.insert(p.class_id, RtClass::Proxy(Arc::new(p.clone())));
        }
        ClassIndex { table: image.class_table.clone(), by_name, loaded }
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        self.table.get(id as usize).map_or("?", |c| c.name.as_str())
    }

    pub fn annotation(&self, id: u32) -> Annotation {
        self.table.get(id as usize).map_or(Annotation::Neutral, |c| c.annotation)
    }

    pub fn get(&self, id: u32) -> Option<&RtClass> {
        self.loaded.get(&id)
    }

    pub fn concrete(&self, id: u32) -> Option<&Arc<ConcreteData>> {
        match self.loaded.get(&id) {
            Some(RtClass::Concrete(c)) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Frame {
    pub this: Value,
    pub locals: Vec<(String, Value)>,
}

/// A proxy created here, watched by the GC helper.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeakEntry {
    pub proxy: ObjRef,
    pub hash: u64,
    pub class: u32,
}

/// One side of the runtime: its own heap, roots, registry and counters.
#[derive(Debug)]
pub struct Isolate {
    pub side: Side,
    pub(crate) classes: Arc<ClassIndex>,
    pub(crate) heap: Heap,
    /// Hash → mirror; the values are GC roots.
    pub(crate) registry: BTreeMap<u64, ObjRef>,
    /// Mirror → hash, so a mirror sent back across keeps its identity.
    pub(crate) reverse: HashMap<ObjRef, u64>,
    /// Hash → proxy, weak.
    pub(crate) proxy_table: BTreeMap<u64, ObjRef>,
    pub(crate) weak_list: Vec<WeakEntry>,
    pub(crate) frames: Vec<Frame>,
    /// Evaluated operands waiting for their siblings.
    pub(crate) temps: Vec<Value>,
    pub(crate) pins: BTreeMap<u64, Value>,
    next_pin: u64,
    next_hash: u64,
    pub(crate) ledger: CostLedger,
    pub(crate) counters: MetricCounters,
    pub(crate) bytes_since_gc: usize,
}

impl Isolate {
    pub(crate) fn new(side: Side, image: &ImageSpec) -> Isolate {
        Isolate {
            side,
            classes: Arc::new(ClassIndex::from_image(image)),
            heap: Heap::default(),
            registry: BTreeMap::new(),
            reverse: HashMap::new(),
            proxy_table: BTreeMap::new(),
            weak_list: Vec::new(),
            frames: Vec::new(),
            temps: Vec::new(),
            pins: BTreeMap::new(),
            next_pin: 0,
            next_hash: 0,
            ledger: CostLedger::default(),
            counters: MetricCounters::default(),
            bytes_since_gc: 0,
        }
    }

    /// `(side bit << 63) | counter`; never reused.
    pub(crate) fn fresh_hash(&mut self) -> u64 {
        self.next_hash += 1;
        let bit = match self.side {
            Side::Untrusted => 0,
            Side::Trusted => 1u64 << 63,
        };
        bit | self.next_hash
    }

    pub fn heap(&self) -> &Heap {
        &self.heap
    }

    pub fn object(&self, r: ObjRef) -> Option<&HeapObject> {
        self.heap.get(r)
    }

    pub fn class_name(&self, id: u32) -> &str {
        self.classes.name(id)
    }

    pub fn registry_size(&self) -> usize {
        self.registry.len()
    }

    pub fn registry(&self) -> impl Iterator<Item = (u64, ObjRef)> + '_ {
        self.registry.iter().map(|(h, r)| (*h, *r))
    }

    pub fn weak_entries(&self) -> &[WeakEntry] {
        &self.weak_list
    }

    /// Proxies of this isolate whose weak reference has not been cleared.
    pub fn live_proxies(&self) -> usize {
        self.weak_list.iter().filter(|e| self.heap.contains(e.proxy)).count()
    }

    pub fn ledger(&self) -> CostLedger {
        self.ledger
    }

    pub fn metrics(&self) -> MetricCounters {
        MetricCounters {
            mirror_registry_size: self.registry.len() as u64,
            live_proxies: self.live_proxies() as u64,
            simulated_cycles: self.ledger.total(),
            ..self.counters
        }
    }

    pub(crate) fn pin(&mut self, v: Value) -> u64 {
        self.next_pin += 1;
        self.pins.insert(self.next_pin, v);
        self.next_pin
    }

    pub(crate) fn unpin(&mut self, id: u64) -> Option<Value> {
        self.pins.remove(&id)
    }

    /// Allocation that is not charged and never collects, but still counts
    /// toward the next threshold collection.
    pub(crate) fn alloc_uncharged(&mut self, obj: HeapObject) -> ObjRef {
        self.bytes_since_gc += obj.size();
        self.heap.alloc(obj)
    }

    fn roots(&self) -> Vec<ObjRef> {
        let frames = self.frames.iter().flat_map(|f| std::iter::once(&f.this).chain(f.locals.iter().map(|(_, v)| v)));
        let mut roots: Vec<ObjRef> = frames
            .chain(self.temps.iter())
            .chain(self.pins.values())
            .filter_map(Value::as_ref)
            .collect();
        roots.extend(self.registry.values().copied());
        roots
    }

    /// Mark-sweep of this heap only. Weak entries to swept proxies become
    /// cleared but stay listed until the helper scans them.
    pub(crate) fn collect(&mut self) -> SweepStats {
        let roots = self.roots();
        let stats = self.heap.collect(roots);
        self.bytes_since_gc = 0;
        stats
    }
}
