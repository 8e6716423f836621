use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::dsl::typeck::{check_method, CallTarget};
use crate::dsl::{Program, TypeRef};

use super::{ClassSet, PartitionError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    /// A method or constructor of a concrete class.
    Method,
    /// The relay entry point wrapping a concrete method.
    Relay,
    /// A proxy method that issues a transition.
    Stub,
}

/// A method-level node. Constructors use the class name as `member`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Node {
    pub kind: NodeKind,
    pub class: String,
    pub member: String,
}

impl Node {
    pub fn new(kind: NodeKind, class: &str, member: &str) -> Node {
        Node { kind, class: class.to_string(), member: member.to_string() }
    }

    pub fn method(class: &str, member: &str) -> Node {
        Node::new(NodeKind::Method, class, member)
    }

    pub fn relay(class: &str, member: &str) -> Node {
        Node::new(NodeKind::Relay, class, member)
    }

    pub fn stub(class: &str, member: &str) -> Node {
        Node::new(NodeKind::Stub, class, member)
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            NodeKind::Method => "",
            NodeKind::Relay => "relay ",
            NodeKind::Stub => "stub ",
        };
        write!(f, "{kind}{}.{}", self.class, self.member)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReachabilityGraph {
    pub edges: BTreeMap<Node, Vec<Node>>,
    /// Types mentioned by each node's signature and body.
    pub types: BTreeMap<Node, Vec<TypeRef>>,
    pub reachable: BTreeSet<Node>,
}

impl ReachabilityGraph {
    pub fn is_reachable(&self, node: &Node) -> bool {
        self.reachable.contains(node)
    }

    pub fn reachable_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &Node> {
        self.reachable.iter().filter(move |n| n.kind == kind)
    }

    fn mark_from(&mut self, seeds: &[Node]) {
        let mut work: Vec<Node> = seeds.iter().filter(|s| self.edges.contains_key(*s)).cloned().collect();
        while let Some(node) = work.pop() {
            if !self.reachable.insert(node.clone()) {
                continue;
            }
            for next in &self.edges[&node] {
                if !self.reachable.contains(next) {
                    work.push(next.clone());
                }
            }
        }
    }
}

fn resolve(set: &ClassSet, target: &CallTarget) -> Option<Node> {
    let (class, member) = match target {
        CallTarget::Constructor { class } => (class, class),
        CallTarget::Method { class, method } => (class, method),
    };
    if let Some(c) = set.concrete_class(class) {
        let exists = member == class || c.decl.method(member).is_some();
        return exists.then(|| Node::method(class, member));
    }
    let proxy = set.proxy_class(class)?;
    proxy.stub(member).map(|_| Node::stub(class, member))
}

/// Builds the method-level call graph of one class set and marks every node
/// reachable from `seeds`. Every call site in the set must resolve to a
/// concrete method or a proxy stub.
pub fn build_call_graph(
    program: &Program,
    set: &ClassSet,
    seeds: &[Node],
) -> Result<ReachabilityGraph, PartitionError> {
    let mut graph = ReachabilityGraph::default();
    for class in &set.concrete {
        let decl = &class.decl;
        let ctor = decl.constructor();
        for method in std::iter::once(&ctor).chain(decl.methods.iter()) {
            let node = Node::method(&decl.name, &method.name);
            let facts = check_method(program, decl, method);
            let mut out = Vec::new();
            for call in &facts.calls {
                match resolve(set, call) {
                    Some(target) => out.push(target),
                    None => {
                        return Err(PartitionError::UnresolvedCall {
                            from: node.to_string(),
                            target: match call {
                                CallTarget::Constructor { class } => format!("new {class}"),
                                CallTarget::Method { class, method } => format!("{class}.{method}"),
                            },
                        })
                    }
                }
            }
            out.sort();
            out.dedup();
            graph.edges.insert(node.clone(), out);
            graph.types.insert(node, facts.types);
        }
        for relay in &class.relays {
            let node = Node::relay(&decl.name, &relay.method);
            graph.edges.insert(node.clone(), vec![Node::method(&decl.name, &relay.method)]);
            graph.types.insert(node, Vec::new());
        }
    }
    for proxy in &set.proxies {
        for stub in &proxy.stubs {
            let node = Node::stub(&proxy.class, &stub.method);
            let mut types: Vec<TypeRef> = stub.params.iter().map(|p| p.ty.clone()).collect();
            if stub.ret != TypeRef::Unit {
                types.push(stub.ret.clone());
            }
            graph.edges.insert(node.clone(), Vec::new());
            graph.types.insert(node, types);
        }
    }
    graph.mark_from(seeds);
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;
    use crate::partitioner::generate_proxies;

    #[test]
    fn unreachable_methods_are_not_marked() {
        let p = parse_program(
            "class A { public int f() { return g(); } public int g() { return 1; } public int h() { return 2; } }\n\
             class Main { public static void main(String[] args) { A a = new A(); print(a.f()); } }",
        )
        .unwrap();
        let (_, u) = generate_proxies(&p);
        let g = build_call_graph(&p, &u, &[Node::method("Main", "main")]).unwrap();
        assert!(g.is_reachable(&Node::method("A", "g")));
        assert!(g.is_reachable(&Node::method("A", "A")));
        assert!(!g.is_reachable(&Node::method("A", "h")));
    }

    #[test]
    fn calls_to_the_other_side_end_at_stubs() {
        let p = parse_program(
            "@Trusted class S { public int f() { return 1; } }\n\
             @Untrusted class Main { public static void main(String[] args) { S s = new S(); print(s.f()); } }",
        )
        .unwrap();
        let (t, u) = generate_proxies(&p);
        let g = build_call_graph(&p, &u, &[Node::method("Main", "main")]).unwrap();
        let stubs: Vec<String> = g.reachable_of_kind(NodeKind::Stub).map(|n| n.to_string()).collect();
        assert_eq!(stubs, ["stub S.S", "stub S.f"]);
        let g = build_call_graph(&p, &t, &[Node::relay("S", "f")]).unwrap();
        assert!(g.is_reachable(&Node::method("S", "f")));
        assert!(!g.is_reachable(&Node::method("S", "S")));
    }
}
