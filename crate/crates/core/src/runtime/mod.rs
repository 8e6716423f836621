//! Executes a partitioned program in two isolates joined by a costed
//! transition channel.
//!
//! Every cross-boundary call is a synchronous nested call on the caller's
//! logical stack. All costs are simulated cycles from the [`CostModel`];
//! nothing here reads a clock except the optional live-mode helper timer.

mod cost;
mod heap;
mod interp;
mod isolate;
mod metrics;
mod transition;
pub mod wire;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::codec::DecodeError;
use crate::dsl::{Program, TypeRef};
use crate::partitioner::{
    decode_image, parse_interface, ClassInfo, ConcreteClass, Direction, EntryPoint, ImageSpec, InterfaceDescriptor,
    PartitionPlan, Side, INTERFACE_FILE, TRUSTED_FILE, UNTRUSTED_FILE,
};

pub use cost::{CostLedger, CostModel, CostModelError};
pub use heap::{Heap, HeapObject, ObjRef, SweepStats, Value};
pub use isolate::{Isolate, WeakEntry};
pub use metrics::{metrics_report, MetricCounters};
pub use transition::{TraceEvent, TransitionKind};

/// Stack reserved for the interpreter thread; DSL recursion maps onto it.
const INTERPRETER_STACK: usize = 512 * 1024 * 1024;

/// When the GC helper scans in deterministic mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanPolicy {
    /// After every `gc()` builtin.
    AfterEachGc,
    /// After every k-th `gc()` builtin.
    EveryK(u64),
    /// Only when the host calls [`DualRuntime::gc_helper_scan`].
    Manual,
}

#[derive(Debug, Clone)]
pub struct RuntimeConfig {
    pub cost: CostModel,
    /// Heap growth in bytes that triggers a collection; `None` disables it.
    pub gc_threshold: Option<usize>,
    pub scan: ScanPolicy,
    /// Live mode: scan at safe points once per period instead of following
    /// `scan`.
    pub live_scan_period: Option<Duration>,
    pub trace: bool,
    pub census: bool,
    pub max_transition_depth: usize,
    pub max_call_depth: usize,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            cost: CostModel::default(),
            gc_threshold: Some(64 * 1024),
            scan: ScanPolicy::AfterEachGc,
            live_scan_period: None,
            trace: false,
            census: false,
            max_transition_depth: 256,
            max_call_depth: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ErrorKind {
    #[error("stale mirror: hash {hash:016x} is not registered")]
    StaleMirror { hash: u64 },
    #[error("transition depth exceeds {limit}")]
    TransitionOverflow { limit: usize },
    #[error("unknown target {0}")]
    UnknownTarget(String),
    #[error("unknown class {0}")]
    UnknownClass(String),
    #[error("marshal kind mismatch: {0}")]
    KindMismatch(String),
    #[error("null dereference")]
    NullDereference,
    #[error("division by zero")]
    DivisionByZero,
    #[error("index {index} out of bounds for length {len}")]
    IndexOutOfBounds { index: i64, len: usize },
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("call stack overflow")]
    StackOverflow,
    #[error("cyclic value cannot be serialized")]
    CyclicValue,
    #[error("malformed message: {0}")]
    Decode(DecodeError),
    #[error("{0}")]
    Internal(String),
}

/// A DSL-level failure with the stack it unwound through, innermost first.
/// Transition frames read `-- ecall InstanceRelay Class.method --`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct RuntimeError {
    pub kind: ErrorKind,
    pub trace: Vec<String>,
}

impl RuntimeError {
    pub fn new(kind: ErrorKind) -> RuntimeError {
        RuntimeError { kind, trace: Vec::new() }
    }

    pub(crate) fn mismatch(msg: String) -> RuntimeError {
        RuntimeError::new(ErrorKind::KindMismatch(msg))
    }

    pub(crate) fn with_frame(mut self, frame: String) -> RuntimeError {
        self.trace.push(frame);
        self
    }
}

impl fmt::Display for RuntimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        for frame in &self.trace {
            write!(f, "\n    {frame}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: {error}")]
    Format { file: String, error: DecodeError },
    #[error("interface mismatch: {0}")]
    InterfaceMismatch(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransitionStats {
    pub shim_calls: u64,
    pub remove_mirrors: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GcStats {
    pub sweep: SweepStats,
    pub cycles: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CensusEvent {
    Transition,
    Gc,
    Scan,
}

/// Registry sizes and live proxy counts of both isolates at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CensusSample {
    pub event: CensusEvent,
    pub trusted_registry: usize,
    pub trusted_live_proxies: usize,
    pub untrusted_registry: usize,
    pub untrusted_live_proxies: usize,
}

impl CensusSample {
    /// Each registry covers at least the proxies alive on the other side.
    pub fn covers(&self) -> bool {
        self.trusted_registry >= self.untrusted_live_proxies && self.untrusted_registry >= self.trusted_live_proxies
    }

    pub fn balanced(&self) -> bool {
        self.trusted_registry == self.untrusted_live_proxies && self.untrusted_registry == self.trusted_live_proxies
    }
}

#[derive(Debug, Clone)]
pub struct ExecutionResult {
    pub stdout: String,
    pub vfs: BTreeMap<String, Vec<u8>>,
    pub trusted: MetricCounters,
    pub untrusted: MetricCounters,
    pub stats: TransitionStats,
    pub error: Option<RuntimeError>,
}

impl ExecutionResult {
    pub fn ecalls(&self) -> u64 {
        self.trusted.ecalls + self.untrusted.ecalls
    }

    pub fn ocalls(&self) -> u64 {
        self.trusted.ocalls + self.untrusted.ocalls
    }

    pub fn simulated_cycles(&self) -> u64 {
        self.trusted.simulated_cycles + self.untrusted.simulated_cycles
    }

    pub fn metrics_report(&self) -> String {
        metrics_report(&self.trusted, &self.untrusted)
    }
}

pub struct DualRuntime {
    isolates: [Isolate; 2],
    interface: InterfaceDescriptor,
    config: RuntimeConfig,
    main_side: Side,
    main_class: String,
    stdout: String,
    vfs: BTreeMap<String, Vec<u8>>,
    depth: usize,
    call_depth: usize,
    gc_builtin_calls: u64,
    trace: Vec<TraceEvent>,
    census: Vec<CensusSample>,
    stats: TransitionStats,
    live_flag: Option<Arc<AtomicBool>>,
    on_big_stack: bool,
}

fn index(side: Side) -> usize {
    match side {
        Side::Trusted => 0,
        Side::Untrusted => 1,
    }
}

impl DualRuntime {
    fn new(
        trusted: &ImageSpec,
        untrusted: &ImageSpec,
        interface: InterfaceDescriptor,
        main_side: Side,
        main_class: String,
        config: RuntimeConfig,
    ) -> DualRuntime {
        DualRuntime {
            isolates: [Isolate::new(Side::Trusted, trusted), Isolate::new(Side::Untrusted, untrusted)],
            interface,
            config,
            main_side,
            main_class,
            stdout: String::new(),
            vfs: BTreeMap::new(),
            depth: 0,
            call_depth: 0,
            gc_builtin_calls: 0,
            trace: Vec::new(),
            census: Vec::new(),
            stats: TransitionStats::default(),
            live_flag: None,
            on_big_stack: false,
        }
    }

    /// Partitioned execution: `main` runs in the untrusted isolate.
    pub fn from_plan(plan: &PartitionPlan, config: RuntimeConfig) -> Result<DualRuntime, LoadError> {
        Self::from_parts(&plan.trusted, &plan.untrusted, plan.interface.clone(), config)
    }

    fn from_parts(
        trusted: &ImageSpec,
        untrusted: &ImageSpec,
        interface: InterfaceDescriptor,
        config: RuntimeConfig,
    ) -> Result<DualRuntime, LoadError> {
        check_interface(trusted, untrusted, &interface)?;
        let main = untrusted
            .main_class()
            .ok_or_else(|| LoadError::InterfaceMismatch("untrusted image has no main entry point".into()))?
            .to_string();
        Ok(Self::new(trusted, untrusted, interface, Side::Untrusted, main, config))
    }

    /// Loads the three files written by the partitioner.
    pub fn load(dir: &Path, config: RuntimeConfig) -> Result<DualRuntime, LoadError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read(&path).map_err(|source| LoadError::Io { path, source })
        };
        let image = |name: &str, side: Side| -> Result<ImageSpec, LoadError> {
            let image = decode_image(&read(name)?).map_err(|error| LoadError::Format { file: name.into(), error })?;
            if image.side != side {
                let error = DecodeError::Invalid(format!("expected a {side} image"));
                return Err(LoadError::Format { file: name.into(), error });
            }
            Ok(image)
        };
        let trusted = image(TRUSTED_FILE, Side::Trusted)?;
        let untrusted = image(UNTRUSTED_FILE, Side::Untrusted)?;
        let text = String::from_utf8(read(INTERFACE_FILE)?).map_err(|_| LoadError::Format {
            file: INTERFACE_FILE.into(),
            error: DecodeError::BadUtf8,
        })?;
        let interface = parse_interface(&text).map_err(|(line, msg)| LoadError::Format {
            file: INTERFACE_FILE.into(),
            error: DecodeError::Invalid(format!("line {line}: {msg}")),
        })?;
        Self::from_parts(&trusted, &untrusted, interface, config)
    }

    /// The whole program inside the enclave; every I/O builtin goes through
    /// the shim.
    pub fn unpartitioned(program: &Program, config: RuntimeConfig) -> DualRuntime {
        let (full, empty) = single_images(program);
        let trusted = ImageSpec { side: Side::Trusted, ..full };
        let untrusted = ImageSpec { side: Side::Untrusted, ..empty };
        Self::new(&trusted, &untrusted, InterfaceDescriptor::default(), Side::Trusted, program.entry.clone(), config)
    }

    /// The whole program outside the enclave: the plain reference interpreter.
    pub fn reference(program: &Program, config: RuntimeConfig) -> DualRuntime {
        let (full, empty) = single_images(program);
        let trusted = ImageSpec { side: Side::Trusted, ..empty };
        let untrusted = ImageSpec { side: Side::Untrusted, ..full };
        Self::new(&trusted, &untrusted, InterfaceDescriptor::default(), Side::Untrusted, program.entry.clone(), config)
    }

    pub(crate) fn iso(&self, side: Side) -> &Isolate {
        &self.isolates[index(side)]
    }

    pub(crate) fn iso_mut(&mut self, side: Side) -> &mut Isolate {
        &mut self.isolates[index(side)]
    }

    pub fn isolate(&self, side: Side) -> &Isolate {
        self.iso(side)
    }

    pub fn interface(&self) -> &InterfaceDescriptor {
        &self.interface
    }

    pub fn config(&self) -> &RuntimeConfig {
        &self.config
    }

    pub fn main_side(&self) -> Side {
        self.main_side
    }

    pub fn metrics(&self, side: Side) -> MetricCounters {
        self.iso(side).metrics()
    }

    pub fn stats(&self) -> TransitionStats {
        self.stats
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn census(&self) -> &[CensusSample] {
        &self.census
    }

    pub fn stdout(&self) -> &str {
        &self.stdout
    }

    pub fn vfs(&self) -> &BTreeMap<String, Vec<u8>> {
        &self.vfs
    }

    /// Runs `f` on a thread with a stack large enough for deep DSL recursion.
    fn on_interpreter_stack<T: Send>(&mut self, f: impl FnOnce(&mut DualRuntime) -> T + Send) -> T {
        if self.on_big_stack {
            return f(self);
        }
        std::thread::scope(|scope| {
            let handle = std::thread::Builder::new()
                .name("interpreter".into())
                .stack_size(INTERPRETER_STACK)
                .spawn_scoped(scope, || {
                    self.on_big_stack = true;
                    let out = f(self);
                    self.on_big_stack = false;
                    out
                })
                .expect("spawn interpreter thread");
            match handle.join() {
                Ok(v) => v,
                Err(panic) => std::panic::resume_unwind(panic),
            }
        })
    }

    /// Executes `main` and returns the transcript, file system and metrics.
    pub fn run_main(&mut self, argv: &[String]) -> ExecutionResult {
        let error = self.on_interpreter_stack(|rt| {
            let stop = Arc::new(AtomicBool::new(false));
            std::thread::scope(|scope| {
                if let Some(period) = rt.config.live_scan_period {
                    let flag = Arc::new(AtomicBool::new(false));
                    rt.live_flag = Some(flag.clone());
                    let stop = stop.clone();
                    scope.spawn(move || {
                        while !stop.load(Ordering::Acquire) {
                            std::thread::park_timeout(period);
                            flag.store(true, Ordering::Release);
                        }
                    });
                }
                let result = rt.run_main_inner(argv);
                stop.store(true, Ordering::Release);
                if let Some(flag) = rt.live_flag.take() {
                    flag.store(false, Ordering::Release);
                }
                result.err()
            })
        });
        ExecutionResult {
            stdout: self.stdout.clone(),
            vfs: self.vfs.clone(),
            trusted: self.metrics(Side::Trusted),
            untrusted: self.metrics(Side::Untrusted),
            stats: self.stats,
            error,
        }
    }

    fn run_main_inner(&mut self, argv: &[String]) -> Result<(), RuntimeError> {
        let side = self.main_side;
        let data = self.concrete_by_name(side, &self.main_class.clone())?;
        let main = data
            .methods
            .get("main")
            .cloned()
            .ok_or_else(|| RuntimeError::new(ErrorKind::UnknownTarget(format!("{}.main", self.main_class))))?;
        let mut args = Vec::new();
        if main.params.len() == 1 && main.params[0].ty == TypeRef::list_of(TypeRef::Str) {
            let items = argv.iter().map(|a| Value::str(a)).collect();
            args.push(Value::Ref(self.iso_mut(side).heap.alloc(HeapObject::List { items })));
        }
        self.invoke_concrete(side, &data, &main, Value::Unit, args).map(|_| ())
    }

    /// Runs a sequence of host calls on one interpreter thread.
    pub fn batch<T: Send>(&mut self, f: impl FnOnce(&mut DualRuntime) -> T + Send) -> T {
        self.on_interpreter_stack(f)
    }

    /// A list allocated by the host in `side`, uncharged. Pin it before the
    /// next collection can run.
    pub fn alloc_list(&mut self, side: Side, items: Vec<Value>) -> Value {
        Value::Ref(self.iso_mut(side).alloc_uncharged(HeapObject::List { items }))
    }

    /// `new class(args)` issued by the host in `side`.
    pub fn instantiate(&mut self, side: Side, class: &str, args: Vec<Value>) -> Result<Value, RuntimeError> {
        self.on_interpreter_stack(|rt| {
            let base = rt.iso(side).temps.len();
            rt.iso_mut(side).temps.extend(args);
            rt.instantiate_at(side, class, base)
        })
    }

    /// `receiver.method(args)` issued by the host in `side`.
    pub fn invoke(&mut self, side: Side, receiver: Value, method: &str, args: Vec<Value>) -> Result<Value, RuntimeError> {
        self.on_interpreter_stack(|rt| rt.call_on(side, receiver, method, args))
    }

    /// Keeps `value` alive in `side` until [`DualRuntime::unpin`].
    pub fn pin(&mut self, side: Side, value: Value) -> u64 {
        self.iso_mut(side).pin(value)
    }

    pub fn unpin(&mut self, side: Side, id: u64) -> Option<Value> {
        self.iso_mut(side).unpin(id)
    }

    /// Field values of a local instance.
    pub fn fields(&self, side: Side, obj: &Value) -> Option<Vec<Value>> {
        match self.iso(side).heap.get(obj.as_ref()?)? {
            HeapObject::Instance { fields, .. } => Some(fields.clone()),
            _ => None,
        }
    }

    /// One helper step: scan both isolates.
    pub fn scan_step(&mut self) -> Vec<u64> {
        let mut removed = self.gc_helper_scan(Side::Untrusted);
        removed.extend(self.gc_helper_scan(Side::Trusted));
        removed
    }

    /// Drops `hash` from the registry of `side` without touching the proxy,
    /// as a racing collection would. For fault-injection tests.
    pub fn forget_mirror(&mut self, side: Side, hash: u64) -> bool {
        let iso = self.iso_mut(side);
        match iso.registry.remove(&hash) {
            Some(mirror) => {
                iso.reverse.remove(&mirror);
                true
            }
            None => false,
        }
    }

    pub(crate) fn gc_builtin(&mut self, side: Side) {
        self.gc_collect(side);
        self.gc_builtin_calls += 1;
        if self.live_flag.is_some() {
            return;
        }
        match self.config.scan {
            ScanPolicy::AfterEachGc => {
                self.scan_step();
            }
            ScanPolicy::EveryK(k) if k > 0 && self.gc_builtin_calls % k == 0 => {
                self.scan_step();
            }
            _ => {}
        }
    }

    /// Allocation from program code: may trigger a threshold collection
    /// first, and is charged.
    pub(crate) fn alloc_checked(&mut self, side: Side, obj: HeapObject) -> ObjRef {
        if let Some(limit) = self.config.gc_threshold {
            if self.iso(side).bytes_since_gc >= limit {
                self.gc_collect(side);
            }
        }
        let cycles = self.config.cost.local(side, self.config.cost.alloc_cost);
        let iso = self.iso_mut(side);
        iso.bytes_since_gc += obj.size();
        iso.ledger.alloc += cycles;
        iso.counters.allocations += 1;
        iso.heap.alloc(obj)
    }

    pub(crate) fn charge_field(&mut self, side: Side) {
        let cycles = self.config.cost.local(side, self.config.cost.field_access_cost);
        self.iso_mut(side).ledger.field += cycles;
    }
}

/// Every class concrete, plus an empty image over the same class table.
fn single_images(program: &Program) -> (ImageSpec, ImageSpec) {
    let class_table: Vec<ClassInfo> =
        program.classes.iter().map(|c| ClassInfo { name: c.name.clone(), annotation: c.annotation }).collect();
    let concrete = program
        .classes
        .iter()
        .enumerate()
        .map(|(i, c)| ConcreteClass { class_id: i as u32, decl: c.clone(), relays: Vec::new() })
        .collect();
    let full = ImageSpec {
        side: Side::Trusted,
        class_table: class_table.clone(),
        concrete,
        proxies: Vec::new(),
        entry_points: vec![EntryPoint::Main { class: program.entry.clone() }],
        pruned_proxies: Vec::new(),
        pruned_methods: Vec::new(),
    };
    let empty = ImageSpec {
        side: Side::Untrusted,
        class_table,
        concrete: Vec::new(),
        proxies: Vec::new(),
        entry_points: Vec::new(),
        pruned_proxies: Vec::new(),
        pruned_methods: Vec::new(),
    };
    (full, empty)
}

/// Every stub needs a record, and every record a relay on the serving side.
fn check_interface(trusted: &ImageSpec, untrusted: &ImageSpec, interface: &InterfaceDescriptor) -> Result<(), LoadError> {
    for image in [trusted, untrusted] {
        for proxy in &image.proxies {
            for stub in &proxy.stubs {
                if interface.find(proxy.direction, &proxy.class, &stub.method).is_none() {
                    return Err(LoadError::InterfaceMismatch(format!(
                        "{} image stub {}.{} has no {} record",
                        image.side, proxy.class, stub.method, proxy.direction
                    )));
                }
            }
        }
    }
    for record in &interface.records {
        let server = match record.direction {
            Direction::Ecall => trusted,
            Direction::Ocall => untrusted,
        };
        let served = server.concrete_class(&record.class).and_then(|c| c.relay(&record.method)).is_some();
        if !served {
            return Err(LoadError::InterfaceMismatch(format!(
                "record `{record}` has no relay in the {} image",
                server.side
            )));
        }
    }
    Ok(())
}
