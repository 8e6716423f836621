use std::collections::BTreeSet;

use crate::dsl::{validate, Annotation, Program};

use super::reach::{build_call_graph, Node, NodeKind, ReachabilityGraph};
use super::{
    generate_proxies, ClassInfo, ClassSet, ConcreteClass, Direction, EntryPoint, ImageSpec, InterfaceDescriptor,
    InterfaceRecord, PartitionError, PartitionPlan, ProxyClassDef, Side,
};

/// Partitions a program into its two images.
///
/// The trusted image is seeded with every relay of every trusted class. The
/// untrusted image is seeded with `main` plus the relays of untrusted classes
/// whose stubs the trusted image can still reach.
pub fn compute_images(program: &Program) -> Result<PartitionPlan, PartitionError> {
    let report = validate(program);
    if !report.is_ok() {
        return Err(PartitionError::Invalid(report));
    }
    let (tset, uset) = generate_proxies(program);

    let trusted_seeds: Vec<Node> = tset
        .concrete
        .iter()
        .flat_map(|c| c.relays.iter().map(move |r| Node::relay(&c.decl.name, &r.method)))
        .collect();
    let tgraph = build_call_graph(program, &tset, &trusted_seeds)?;

    let mut untrusted_seeds = vec![Node::method(&program.entry, "main")];
    untrusted_seeds.extend(
        tgraph
            .reachable_of_kind(NodeKind::Stub)
            .map(|stub| Node::relay(&stub.class, &stub.member)),
    );
    let ugraph = build_call_graph(program, &uset, &untrusted_seeds)?;

    let class_table: Vec<ClassInfo> = program
        .classes
        .iter()
        .map(|c| ClassInfo { name: c.name.clone(), annotation: c.annotation })
        .collect();
    let trusted = assemble(&tset, &tgraph, class_table.clone(), None);
    let untrusted = assemble(&uset, &ugraph, class_table, Some(&program.entry));

    let mut records = Vec::new();
    for (image, direction) in [(&trusted, Direction::Ecall), (&untrusted, Direction::Ocall)] {
        for class in image.concrete.iter().filter(|c| c.decl.annotation.is_annotated()) {
            for relay in &class.relays {
                records.push(InterfaceRecord {
                    direction,
                    class: relay.owner.clone(),
                    method: relay.method.clone(),
                    params: relay.params.clone(),
                    ret: relay.ret,
                });
            }
        }
    }
    records.sort();

    let names = |a: Annotation| -> Vec<String> {
        program.classes.iter().filter(|c| c.annotation == a).map(|c| c.name.clone()).collect()
    };
    Ok(PartitionPlan {
        trusted,
        untrusted,
        interface: InterfaceDescriptor { records },
        trusted_classes: names(Annotation::Trusted),
        untrusted_classes: names(Annotation::Untrusted),
        neutral_classes: names(Annotation::Neutral),
    })
}

/// Classes named by reachable nodes, closed over the field types of kept
/// concrete classes.
fn kept_classes(set: &ClassSet, graph: &ReachabilityGraph) -> BTreeSet<String> {
    let mut kept = BTreeSet::new();
    let mut work: Vec<String> = Vec::new();
    for node in &graph.reachable {
        work.push(node.class.clone());
        for ty in &graph.types[node] {
            let mut names = Vec::new();
            ty.class_names(&mut names);
            work.extend(names.into_iter().map(str::to_string));
        }
    }
    while let Some(name) = work.pop() {
        if !kept.insert(name.clone()) {
            continue;
        }
        if let Some(c) = set.concrete_class(&name) {
            for field in &c.decl.fields {
                let mut names = Vec::new();
                field.ty.class_names(&mut names);
                work.extend(names.into_iter().filter(|n| !kept.contains(*n)).map(str::to_string));
            }
        }
    }
    kept
}

fn assemble(set: &ClassSet, graph: &ReachabilityGraph, class_table: Vec<ClassInfo>, main: Option<&str>) -> ImageSpec {
    let kept = kept_classes(set, graph);
    let mut concrete = Vec::new();
    let mut pruned_methods = Vec::new();
    for class in &set.concrete {
        let name = &class.decl.name;
        let live = |member: &str| graph.is_reachable(&Node::method(name, member));
        for member in std::iter::once(name).chain(class.decl.methods.iter().map(|m| &m.name)) {
            if !live(member) {
                pruned_methods.push(format!("{name}.{member}"));
            }
        }
        if !kept.contains(name) {
            continue;
        }
        let mut decl = class.decl.clone();
        decl.constructors.retain(|_| live(name));
        decl.methods.retain(|m| live(&m.name));
        let relays = class
            .relays
            .iter()
            .filter(|r| graph.is_reachable(&Node::relay(name, &r.method)))
            .cloned()
            .collect();
        concrete.push(ConcreteClass { class_id: class.class_id, decl, relays });
    }

    let mut proxies = Vec::new();
    let mut pruned_proxies = Vec::new();
    for proxy in &set.proxies {
        if !kept.contains(&proxy.class) {
            pruned_proxies.push(proxy.class.clone());
            continue;
        }
        let stubs = proxy
            .stubs
            .iter()
            .filter(|s| graph.is_reachable(&Node::stub(&proxy.class, &s.method)))
            .cloned()
            .collect();
        proxies.push(ProxyClassDef { stubs, ..proxy.clone() });
    }

    let mut entry_points = Vec::new();
    if let Some(class) = main {
        entry_points.push(EntryPoint::Main { class: class.to_string() });
    }
    for class in &concrete {
        for relay in &class.relays {
            entry_points.push(EntryPoint::Relay { class: class.decl.name.clone(), method: relay.method.clone() });
        }
    }

    ImageSpec {
        side: set.side,
        class_table,
        concrete,
        proxies,
        entry_points,
        pruned_proxies,
        pruned_methods,
    }
}

impl ImageSpec {
    /// Whether this image is the home of concrete instances of `class`.
    pub fn owns(&self, class: &str) -> bool {
        self.class_table
            .iter()
            .find(|c| c.name == class)
            .is_some_and(|c| Side::of(c.annotation) == Some(self.side))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;

    fn names_of(image: &ImageSpec) -> (Vec<String>, Vec<String>) {
        (
            image.concrete.iter().map(|c| c.decl.name.clone()).collect(),
            image.proxies.iter().map(|p| p.class.clone()).collect(),
        )
    }

    fn listing1() -> Program {
        parse_program(include_str!("../../tests/fixtures/listing1.ep")).unwrap()
    }

    #[test]
    fn listing1_images() {
        let plan = compute_images(&listing1()).unwrap();
        let (tc, tp) = names_of(&plan.trusted);
        assert_eq!(tc, ["Account", "AccountRegistry"]);
        assert!(tp.is_empty(), "{tp:?}");
        assert!(plan.trusted.pruned_proxies.contains(&"Person".to_string()));
        let (uc, up) = names_of(&plan.untrusted);
        assert_eq!(uc, ["Person", "Main"]);
        assert_eq!(up, ["Account", "AccountRegistry"]);
        assert_eq!(plan.trusted_classes, ["Account", "AccountRegistry"]);
        assert_eq!(plan.untrusted_classes, ["Person", "Main"]);
        assert!(plan.neutral_classes.is_empty());
    }

    #[test]
    fn listing1_interface_has_only_ecalls() {
        let plan = compute_images(&listing1()).unwrap();
        let lines: Vec<String> = plan.interface.records.iter().map(|r| r.to_string()).collect();
        assert_eq!(
            lines,
            [
                "ecall Account.Account(ser,prim) -> unit",
                "ecall Account.updateBalance(prim) -> unit",
                "ecall AccountRegistry.AccountRegistry() -> unit",
                "ecall AccountRegistry.addAccount(href) -> unit",
            ]
        );
    }

    #[test]
    fn all_neutral_program_has_empty_trusted_image() {
        let p = parse_program(include_str!("../../tests/fixtures/all_neutral.ep")).unwrap();
        let plan = compute_images(&p).unwrap();
        assert!(plan.trusted.concrete.is_empty() && plan.trusted.proxies.is_empty());
        assert!(plan.interface.records.is_empty());
    }

    // Auditor (trusted) holds a Log (untrusted) and calls Log.record from
    // Auditor.check. Closure by hand:
    //   trusted seeds: relay Auditor.Auditor, relay Auditor.check, relay Auditor.seen
    //   Auditor.check -> stub Log.record; nothing else leaves the enclave
    //   untrusted seeds: Main.main, relay Log.record
    //   Main.main -> Log.Log, Log.count, stub Auditor.{Auditor,check,seen}
    #[test]
    fn trusted_to_untrusted_call_yields_ocall_proxy() {
        let p = parse_program(include_str!("../../tests/fixtures/ocall.ep")).unwrap();
        let plan = compute_images(&p).unwrap();
        let log = plan.trusted.proxy_class("Log").expect("Log proxy in trusted image");
        assert_eq!(log.direction, Direction::Ocall);
        let stubs: Vec<&str> = log.stubs.iter().map(|s| s.method.as_str()).collect();
        assert_eq!(stubs, ["record"]);
        let ocalls: Vec<String> = plan
            .interface
            .records
            .iter()
            .filter(|r| r.direction == Direction::Ocall)
            .map(|r| r.to_string())
            .collect();
        assert_eq!(ocalls, ["ocall Log.record(ser) -> unit"]);
        let log_relays: Vec<&str> =
            plan.untrusted.concrete_class("Log").unwrap().relays.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(log_relays, ["record"]);
    }

    #[test]
    fn invalid_program_is_rejected() {
        let p = parse_program("@Trusted class X { public int y; }\nclass M { public static void main() {} }").unwrap();
        assert!(matches!(compute_images(&p), Err(PartitionError::Invalid(_))));
    }

    #[test]
    fn plan_is_deterministic() {
        assert_eq!(compute_images(&listing1()).unwrap(), compute_images(&listing1()).unwrap());
    }
}
