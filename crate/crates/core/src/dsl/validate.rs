use std::fmt;

use super::ast::*;
use super::typeck::check_method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    /// An annotated class declares a non-private field.
    Encapsulation,
    /// `main` lives in a trusted class.
    MainPlacement,
    MainSignature,
    /// A static method other than `main` on an annotated class.
    StaticPlacement,
    UnresolvedType,
    UnresolvedName,
    TypeError,
    /// A field read on an object other than `this`.
    FieldAccess,
    Visibility,
    ThisInStatic,
    MissingReturn,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::Encapsulation => "ENCAPSULATION",
            Rule::MainPlacement => "MAIN_PLACEMENT",
            Rule::MainSignature => "MAIN_SIGNATURE",
            Rule::StaticPlacement => "STATIC_PLACEMENT",
            Rule::UnresolvedType => "UNRESOLVED_TYPE",
            Rule::UnresolvedName => "UNRESOLVED_NAME",
            Rule::TypeError => "TYPE_ERROR",
            Rule::FieldAccess => "FIELD_ACCESS",
            Rule::Visibility => "VISIBILITY",
            Rule::ThisInStatic => "THIS_IN_STATIC",
            Rule::MissingReturn => "MISSING_RETURN",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: Rule,
    pub class: String,
    pub method: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.method {
            Some(m) => write!(f, "{} at {}.{}: {}", self.rule, self.class, m, self.message),
            None => write!(f, "{} at {}: {}", self.rule, self.class, self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, rule: Rule) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }
}

pub fn validate(program: &Program) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |rule, class: &str, method: Option<&str>, message: String| {
        violations.push(Violation { rule, class: class.to_string(), method: method.map(str::to_string), message })
    };

    for class in &program.classes {
        if class.annotation.is_annotated() {
            for field in class.fields.iter().filter(|f| f.visibility != Visibility::Private) {
                push(
                    Rule::Encapsulation,
                    &class.name,
                    None,
                    format!("field `{}` of {} class must be private", field.name, class.annotation),
                );
            }
            for m in class.methods.iter().filter(|m| m.is_static && m.name != "main") {
                push(
                    Rule::StaticPlacement,
                    &class.name,
                    Some(&m.name),
                    format!("static methods are only allowed on neutral classes ({} class)", class.annotation),
                );
            }
        }
        for field in &class.fields {
            let mut names = Vec::new();
            field.ty.class_names(&mut names);
            for name in names.into_iter().filter(|n| program.class(n).is_none()) {
                push(Rule::UnresolvedType, &class.name, None, format!("field `{}` has unknown type `{name}`", field.name));
            }
        }
        let ctor = class.constructor();
        for method in std::iter::once(&ctor).chain(class.methods.iter()) {
            for issue in check_method(program, class, method).issues {
                push(issue.rule, &class.name, Some(&method.name), issue.message);
            }
        }
    }

    let main_class = program.main_class();
    if main_class.annotation == Annotation::Trusted {
        push(
            Rule::MainPlacement,
            &main_class.name,
            Some("main"),
            "`main` must be in an untrusted or neutral class".into(),
        );
    }
    if let Some(main) = main_class.method("main") {
        let params_ok = match main.params.as_slice() {
            [] => true,
            [p] => p.ty == TypeRef::list_of(TypeRef::Str),
            _ => false,
        };
        if !params_ok || main.ret != TypeRef::Unit || main.visibility != Visibility::Public {
            push(
                Rule::MainSignature,
                &main_class.name,
                Some("main"),
                "expected `public static void main(String[] args)`".into(),
            );
        }
    }

    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;

    fn report(src: &str) -> ValidationReport {
        validate(&parse_program(src).unwrap())
    }

    const MAIN: &str = "class M { public static void main(String[] args) {} }\n";

    #[test]
    fn public_field_in_trusted_class() {
        let r = report(&format!("@Trusted class X {{ public int y; }}\n{MAIN}"));
        assert!(r.has(Rule::Encapsulation), "{r:?}");
        assert_eq!(r.violations.len(), 1);
    }

    #[test]
    fn public_field_in_neutral_class_is_fine() {
        assert!(report(&format!("class X {{ public int y; }}\n{MAIN}")).is_ok());
    }

    #[test]
    fn main_in_trusted_class() {
        let r = report("@Trusted class Main { public static void main(String[] args) { print(1); } }");
        assert!(r.has(Rule::MainPlacement));
    }

    #[test]
    fn foreign_field_read() {
        let src = format!(
            "class P {{ private int v; public int get(P other) {{ return other.v; }} }}\n{MAIN}"
        );
        assert!(report(&src).has(Rule::FieldAccess));
    }

    #[test]
    fn static_method_on_annotated_class() {
        let src = format!("@Untrusted class U {{ public static int f() {{ return 1; }} }}\n{MAIN}");
        assert!(report(&src).has(Rule::StaticPlacement));
    }

    #[test]
    fn unresolved_type_and_name() {
        let src = format!("class A {{ private Missing m; public void f() {{ g(); }} }}\n{MAIN}");
        let r = report(&src);
        assert!(r.has(Rule::UnresolvedType));
        assert!(r.has(Rule::UnresolvedName));
    }

    #[test]
    fn type_errors() {
        let src = format!(
            "class A {{ public int f(int x) {{ boolean b = x; return \"s\"; }} }}\n{MAIN}"
        );
        let r = report(&src);
        assert_eq!(r.violations.iter().filter(|v| v.rule == Rule::TypeError).count(), 2, "{r:?}");
    }

    #[test]
    fn void_value_is_rejected() {
        let src = format!("class A {{ public void f() {{}} public int g() {{ int x = f(); return x; }} }}\n{MAIN}");
        assert!(report(&src).has(Rule::TypeError));
    }

    #[test]
    fn missing_return() {
        let src = format!("class A {{ public int f(int x) {{ if (x > 0) {{ return 1; }} }} }}\n{MAIN}");
        assert!(report(&src).has(Rule::MissingReturn));
    }

    #[test]
    fn private_method_from_outside() {
        let src = format!(
            "class A {{ private int f() {{ return 1; }} }}\nclass B {{ public int g(A a) {{ return a.f(); }} }}\n{MAIN}"
        );
        assert!(report(&src).has(Rule::Visibility));
    }

    #[test]
    fn validate_is_pure() {
        let p = parse_program(&format!("@Trusted class X {{ public int y; }}\n{MAIN}")).unwrap();
        assert_eq!(validate(&p), validate(&p));
    }
}
