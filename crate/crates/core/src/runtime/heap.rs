use std::fmt;
use std::sync::Arc;

/// Handle to a heap slot. A handle whose generation no longer matches the
/// slot is dangling, which is how weak references observe collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjRef {
    pub index: u32,
    pub gen: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    /// `void`, and also the null reference of unassigned object fields.
    Unit,
    Int(i64),
    Bool(bool),
    Str(Arc<str>),
    Ref(ObjRef),
}

impl Value {
    pub fn str(s: &str) -> Value {
        Value::Str(Arc::from(s))
    }

    pub fn as_ref(&self) -> Option<ObjRef> {
        match self {
            Value::Ref(r) => Some(*r),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    /// The text `print` and string concatenation produce.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => f.write_str("null"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Str(s) => f.write_str(s),
            Value::Ref(r) => write!(f, "@{}:{}", r.index, r.gen),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HeapObject {
    Instance { class: u32, fields: Vec<Value> },
    List { items: Vec<Value> },
    /// Stand-in for an object living in the other isolate.
    Proxy { class: u32, hash: u64 },
}

impl HeapObject {
    /// Accounting size: a 16-byte header, 8 bytes per slot, plus the bytes
    /// of strings held directly.
    pub fn size(&self) -> usize {
        let slots = match self {
            HeapObject::Instance { fields, .. } => fields.as_slice(),
            HeapObject::List { items } => items.as_slice(),
            HeapObject::Proxy { .. } => return 16 + 8,
        };
        16 + slots
            .iter()
            .map(|v| match v {
                Value::Str(s) => 8 + s.len(),
                _ => 8,
            })
            .sum::<usize>()
    }

    fn children(&self) -> impl Iterator<Item = ObjRef> + '_ {
        let slots: &[Value] = match self {
            HeapObject::Instance { fields, .. } => fields,
            HeapObject::List { items } => items,
            HeapObject::Proxy { .. } => &[],
        };
        slots.iter().filter_map(Value::as_ref)
    }
}

#[derive(Debug, Clone, Default)]
struct Slot {
    gen: u32,
    obj: Option<HeapObject>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepStats {
    pub live_objects: usize,
    pub live_bytes: usize,
    pub swept_objects: usize,
    pub swept_bytes: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Heap {
    slots: Vec<Slot>,
    free: Vec<u32>,
    live: usize,
}

impl Heap {
    pub fn alloc(&mut self, obj: HeapObject) -> ObjRef {
        self.live += 1;
        match self.free.pop() {
            Some(index) => {
                let slot = &mut self.slots[index as usize];
                slot.obj = Some(obj);
                ObjRef { index, gen: slot.gen }
            }
            None => {
                self.slots.push(Slot { gen: 0, obj: Some(obj) });
                ObjRef { index: self.slots.len() as u32 - 1, gen: 0 }
            }
        }
    }

    pub fn get(&self, r: ObjRef) -> Option<&HeapObject> {
        let slot = self.slots.get(r.index as usize)?;
        if slot.gen == r.gen {
            slot.obj.as_ref()
        } else {
            None
        }
    }

    pub fn get_mut(&mut self, r: ObjRef) -> Option<&mut HeapObject> {
        let slot = self.slots.get_mut(r.index as usize)?;
        if slot.gen == r.gen {
            slot.obj.as_mut()
        } else {
            None
        }
    }

    pub fn contains(&self, r: ObjRef) -> bool {
        self.get(r).is_some()
    }

    pub fn len(&self) -> usize {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    pub fn bytes(&self) -> usize {
        self.iter().map(|(_, o)| o.size()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ObjRef, &HeapObject)> {
        self.slots.iter().enumerate().filter_map(|(i, s)| {
            s.obj.as_ref().map(|o| (ObjRef { index: i as u32, gen: s.gen }, o))
        })
    }

    /// Marks everything reachable from `roots` and frees the rest. Freed
    /// slots bump their generation so outstanding handles dangle.
    pub fn collect(&mut self, roots: impl IntoIterator<Item = ObjRef>) -> SweepStats {
        let mut marked = vec![false; self.slots.len()];
        let mut stack: Vec<ObjRef> = roots.into_iter().collect();
        while let Some(r) = stack.pop() {
            let Some(obj) = self.get(r) else { continue };
            if std::mem::replace(&mut marked[r.index as usize], true) {
                continue;
            }
            stack.extend(obj.children());
        }
        let mut stats = SweepStats::default();
        for (i, slot) in self.slots.iter_mut().enumerate() {
            let Some(obj) = &slot.obj else { continue };
            let size = obj.size();
            if marked[i] {
                stats.live_objects += 1;
                stats.live_bytes += size;
            } else {
                stats.swept_objects += 1;
                stats.swept_bytes += size;
                slot.obj = None;
                slot.gen = slot.gen.wrapping_add(1);
                self.free.push(i as u32);
            }
        }
        self.live = stats.live_objects;
        stats
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(HeapObject::Proxy { class: 0, hash: 1 }.size(), 24);
        let inst = HeapObject::Instance { class: 0, fields: vec![Value::Int(1), Value::str("abcd")] };
        assert_eq!(inst.size(), 16 + 8 + 12);
        assert_eq!(HeapObject::List { items: vec![] }.size(), 16);
    }

    #[test]
    fn unreachable_object_is_swept_and_handle_dangles() {
        let mut heap = Heap::default();
        let keep = heap.alloc(HeapObject::List { items: vec![] });
        let child = heap.alloc(HeapObject::List { items: vec![] });
        heap.get_mut(keep).unwrap();
        if let Some(HeapObject::List { items }) = heap.get_mut(keep) {
            items.push(Value::Ref(child));
        }
        let junk = heap.alloc(HeapObject::Proxy { class: 0, hash: 7 });
        let stats = heap.collect([keep]);
        assert_eq!(stats.swept_objects, 1);
        assert_eq!(stats.swept_bytes, 24);
        assert_eq!(stats.live_objects, 2);
        assert!(heap.contains(child));
        assert!(!heap.contains(junk));
        let reused = heap.alloc(HeapObject::List { items: vec![] });
        assert_eq!(reused.index, junk.index);
        assert!(heap.get(junk).is_none());
    }

    #[test]
    fn cycles_are_collected() {
        let mut heap = Heap::default();
        let a = heap.alloc(HeapObject::List { items: vec![] });
        let b = heap.alloc(HeapObject::List { items: vec![Value::Ref(a)] });
        if let Some(HeapObject::List { items }) = heap.get_mut(a) {
            items.push(Value::Ref(b));
        }
        assert_eq!(heap.collect([]).swept_objects, 2);
        assert!(heap.is_empty());
    }
}
