use crate::dsl::{Annotation, ClassDecl, Program, TypeRef};

use super::{ConcreteClass, MarshalKind, ProxyClassDef, RelayKind, RelayMethodDef, Side, StubDef};

/// Classes available to one side before pruning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSet {
    pub side: Side,
    pub concrete: Vec<ConcreteClass>,
    pub proxies: Vec<ProxyClassDef>,
}

impl ClassSet {
    pub fn concrete_class(&self, name: &str) -> Option<&ConcreteClass> {
        self.concrete.iter().find(|c| c.decl.name == name)
    }

    pub fn proxy_class(&self, name: &str) -> Option<&ProxyClassDef> {
        self.proxies.iter().find(|p| p.class == name)
    }
}

pub fn marshal_kind(program: &Program, ty: &TypeRef) -> MarshalKind {
    match ty {
        TypeRef::Int | TypeRef::Bool => MarshalKind::Primitive,
        TypeRef::Class(name) => match program.class(name).map(|c| c.annotation) {
            Some(Annotation::Trusted | Annotation::Untrusted) => MarshalKind::HashRef,
            _ => MarshalKind::SerializedNeutral,
        },
        TypeRef::Str | TypeRef::List(_) | TypeRef::Unit => MarshalKind::SerializedNeutral,
    }
}

/// `None` for `void`.
pub fn return_kind(program: &Program, ty: &TypeRef) -> Option<MarshalKind> {
    (*ty != TypeRef::Unit).then(|| marshal_kind(program, ty))
}

/// One relay per public constructor and public instance method of `class`.
pub fn synthesize_relays(program: &Program, class: &ClassDecl) -> Vec<RelayMethodDef> {
    if !class.annotation.is_annotated() {
        return Vec::new();
    }
    class
        .public_members()
        .into_iter()
        .map(|m| RelayMethodDef {
            owner: class.name.clone(),
            kind: if m.is_constructor { RelayKind::Constructor } else { RelayKind::Instance },
            params: m.param_types().map(|t| marshal_kind(program, t)).collect(),
            ret: return_kind(program, &m.ret),
            method: m.name,
        })
        .collect()
}

fn proxy_for(program: &Program, class: &ClassDecl, side: Side) -> ProxyClassDef {
    let stubs = class
        .public_members()
        .into_iter()
        .map(|m| StubDef { method: m.name, is_constructor: m.is_constructor, params: m.params, ret: m.ret })
        .collect();
    ProxyClassDef {
        class: class.name.clone(),
        class_id: program.class_id(&class.name).expect("class belongs to program"),
        direction: side.outgoing(),
        hash_field: "hash".to_string(),
        stubs,
    }
}

/// Builds the trusted and untrusted class sets. Annotated classes are
/// concrete on their own side and proxied on the other; neutral classes are
/// copied into both.
pub fn generate_proxies(program: &Program) -> (ClassSet, ClassSet) {
    let mut trusted = ClassSet { side: Side::Trusted, concrete: Vec::new(), proxies: Vec::new() };
    let mut untrusted = ClassSet { side: Side::Untrusted, concrete: Vec::new(), proxies: Vec::new() };
    for (id, class) in program.classes.iter().enumerate() {
        let concrete = ConcreteClass {
            class_id: id as u32,
            decl: class.clone(),
            relays: synthesize_relays(program, class),
        };
        match class.annotation {
            Annotation::Trusted => {
                trusted.concrete.push(concrete);
                untrusted.proxies.push(proxy_for(program, class, Side::Untrusted));
            }
            Annotation::Untrusted => {
                untrusted.concrete.push(concrete);
                trusted.proxies.push(proxy_for(program, class, Side::Trusted));
            }
            Annotation::Neutral => {
                trusted.concrete.push(concrete.clone());
                untrusted.concrete.push(concrete);
            }
        }
    }
    (trusted, untrusted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;
    use crate::partitioner::Direction;

    const SRC: &str = r#"
        @Trusted class Vault {
            private int n;
            public Vault(int n) { this.n = n; }
            public int get() { return this.n; }
            private int secret() { return 1; }
        }
        @Untrusted class Sink { public void put(Vault v, String s) {} }
        class Box { public int v; }
        @Untrusted class Main { public static void main(String[] args) {} }
    "#;

    #[test]
    fn each_annotated_class_is_proxied_on_the_other_side() {
        let p = parse_program(SRC).unwrap();
        let (t, u) = generate_proxies(&p);
        assert!(u.proxy_class("Vault").is_some());
        assert!(t.proxy_class("Vault").is_none());
        assert!(t.proxy_class("Sink").is_some() && t.proxy_class("Main").is_some());
        assert!(t.concrete_class("Box").is_some() && u.concrete_class("Box").is_some());
        assert_eq!(u.proxy_class("Vault").unwrap().direction, Direction::Ecall);
        assert_eq!(t.proxy_class("Sink").unwrap().direction, Direction::Ocall);
    }

    #[test]
    fn stubs_cover_public_members_only() {
        let p = parse_program(SRC).unwrap();
        let (_, u) = generate_proxies(&p);
        let names: Vec<_> = u.proxy_class("Vault").unwrap().stubs.iter().map(|s| s.signature()).collect();
        assert_eq!(names, ["Vault(int)", "get()"]);
    }

    #[test]
    fn relay_marshal_kinds() {
        let p = parse_program(SRC).unwrap();
        let relays = synthesize_relays(&p, p.class("Sink").unwrap());
        let put = relays.iter().find(|r| r.method == "put").unwrap();
        assert_eq!(put.params, [MarshalKind::HashRef, MarshalKind::SerializedNeutral]);
        assert_eq!(put.ret, None);
        assert_eq!(put.relay_name(), "relayPut");
        let ctor = relays.iter().find(|r| r.kind == RelayKind::Constructor).unwrap();
        assert_eq!(ctor.relay_name(), "relaySink");
        assert!(synthesize_relays(&p, p.class("Box").unwrap()).is_empty());
    }
}
