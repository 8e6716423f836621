//! Splits a validated program into a trusted and an untrusted image.
//!
//! Every annotated class gets a proxy in the opposite image and relay entry
//! points in its own image. A method-level reachability pass then prunes
//! proxies and methods that no entry point can reach.

mod emit;
mod images;
mod interface;
mod listing;
mod proxy;
mod reach;

use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::dsl::{Annotation, ClassDecl, Param, TypeRef, ValidationReport};

pub use emit::{decode_image, emit, encode_image, read_image, IMAGE_MAGIC, INTERFACE_FILE, TRUSTED_FILE, UNTRUSTED_FILE};
pub use images::compute_images;
pub use listing::image_listing;
pub use interface::{parse_interface, InterfaceDescriptor, InterfaceRecord, INTERFACE_HEADER};
pub use proxy::{generate_proxies, marshal_kind, return_kind, synthesize_relays, ClassSet};
pub use reach::{build_call_graph, Node, NodeKind, ReachabilityGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Trusted,
    Untrusted,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Trusted => Side::Untrusted,
            Side::Untrusted => Side::Trusted,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Trusted => "trusted",
            Side::Untrusted => "untrusted",
        }
    }

    /// The side whose image holds concrete instances of a class with this
    /// annotation; `None` for neutral classes, which live in both.
    pub fn of(annotation: Annotation) -> Option<Side> {
        match annotation {
            Annotation::Trusted => Some(Side::Trusted),
            Annotation::Untrusted => Some(Side::Untrusted),
            Annotation::Neutral => None,
        }
    }

    /// Direction of a call that leaves this side.
    pub fn outgoing(self) -> Direction {
        match self {
            Side::Untrusted => Direction::Ecall,
            Side::Trusted => Direction::Ocall,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    /// Into the enclave.
    Ecall,
    /// Out of the enclave.
    Ocall,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Ecall => "ecall",
            Direction::Ocall => "ocall",
        }
    }

    /// The side that serves calls in this direction.
    pub fn destination(self) -> Side {
        match self {
            Direction::Ecall => Side::Trusted,
            Direction::Ocall => Side::Untrusted,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a parameter or return value crosses the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MarshalKind {
    /// `int` and `boolean`, passed by value.
    Primitive,
    /// Strings, lists and neutral objects, deep-copied.
    SerializedNeutral,
    /// Trusted or untrusted objects, passed as the proxy hash.
    HashRef,
}

impl MarshalKind {
    pub fn code(self) -> &'static str {
        match self {
            MarshalKind::Primitive => "prim",
            MarshalKind::SerializedNeutral => "ser",
            MarshalKind::HashRef => "href",
        }
    }

    pub fn from_code(code: &str) -> Option<MarshalKind> {
        Some(match code {
            "prim" => MarshalKind::Primitive,
            "ser" => MarshalKind::SerializedNeutral,
            "href" => MarshalKind::HashRef,
            _ => return None,
        })
    }
}

/// Proxy method: the original signature with its body replaced by a transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubDef {
    pub method: String,
    pub is_constructor: bool,
    pub params: Vec<Param>,
    pub ret: TypeRef,
}

impl StubDef {
    pub fn signature(&self) -> String {
        let params: Vec<String> = self.params.iter().map(|p| p.ty.to_string()).collect();
        format!("{}({})", self.method, params.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProxyClassDef {
    pub class: String,
    pub class_id: u32,
    /// `Ecall` for proxies of trusted classes (living in the untrusted image).
    pub direction: Direction,
    pub hash_field: String,
    pub stubs: Vec<StubDef>,
}

impl ProxyClassDef {
    pub fn stub(&self, method: &str) -> Option<&StubDef> {
        self.stubs.iter().find(|s| s.method == method)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelayKind {
    Constructor,
    Instance,
}

/// Static entry point wrapping one public constructor or instance method.
/// Its implicit leading parameters are the isolate context and the proxy hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelayMethodDef {
    pub owner: String,
    pub method: String,
    pub kind: RelayKind,
    pub params: Vec<MarshalKind>,
    pub ret: Option<MarshalKind>,
}

impl RelayMethodDef {
    /// `relayAccount`, `relayUpdateBalance`.
    pub fn relay_name(&self) -> String {
        let mut chars = self.method.chars();
        match chars.next() {
            Some(first) => format!("relay{}{}", first.to_uppercase(), chars.as_str()),
            None => "relay".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcreteClass {
    pub class_id: u32,
    pub decl: ClassDecl,
    pub relays: Vec<RelayMethodDef>,
}

impl ConcreteClass {
    pub fn relay(&self, method: &str) -> Option<&RelayMethodDef> {
        self.relays.iter().find(|r| r.method == method)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum EntryPoint {
    Main { class: String },
    Relay { class: String, method: String },
}

impl fmt::Display for EntryPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntryPoint::Main { class } => write!(f, "main {class}.main"),
            EntryPoint::Relay { class, method } => write!(f, "relay {class}.{method}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassInfo {
    pub name: String,
    pub annotation: Annotation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSpec {
    pub side: Side,
    /// Every class of the program, indexed by class id.
    pub class_table: Vec<ClassInfo>,
    pub concrete: Vec<ConcreteClass>,
    pub proxies: Vec<ProxyClassDef>,
    pub entry_points: Vec<EntryPoint>,
    /// Proxy classes generated for this image but unreachable from its entry points.
    pub pruned_proxies: Vec<String>,
    /// `Class.method` of concrete methods dropped as unreachable.
    pub pruned_methods: Vec<String>,
}

impl ImageSpec {
    pub fn concrete_class(&self, name: &str) -> Option<&ConcreteClass> {
        self.concrete.iter().find(|c| c.decl.name == name)
    }

    pub fn proxy_class(&self, name: &str) -> Option<&ProxyClassDef> {
        self.proxies.iter().find(|p| p.class == name)
    }

    pub fn class_id(&self, name: &str) -> Option<u32> {
        self.class_table.iter().position(|c| c.name == name).map(|i| i as u32)
    }

    pub fn main_class(&self) -> Option<&str> {
        self.entry_points.iter().find_map(|e| match e {
            EntryPoint::Main { class } => Some(class.as_str()),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub trusted: ImageSpec,
    pub untrusted: ImageSpec,
    pub interface: InterfaceDescriptor,
    /// Trusted class names (the `T` set).
    pub trusted_classes: Vec<String>,
    /// Untrusted class names (the `U` set).
    pub untrusted_classes: Vec<String>,
    /// Neutral class names (the `N` set).
    pub neutral_classes: Vec<String>,
}

impl PartitionPlan {
    pub fn image(&self, side: Side) -> &ImageSpec {
        match side {
            Side::Trusted => &self.trusted,
            Side::Untrusted => &self.untrusted,
        }
    }
}

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("program has {} validation violation(s)", .0.violations.len())]
    Invalid(ValidationReport),
    #[error("unresolved call from {from} to {target}")]
    UnresolvedCall { from: String, target: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
